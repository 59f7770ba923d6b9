use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use sobocurve::curve::make_circle;
use sobocurve::grid::Grid;
use sobocurve::io::curve_to_json;

const FLAT: &str = r#"{"n": 2, "terms": [{"k": 0, "form": "const", "b": 1.0}, {"k": 2, "form": "const", "b": 1.0}]}"#;
const GAP: &str = r#"{"n": 2, "terms": [{"k": 0, "form": "power", "b": 1.0, "p": -3.0}, {"k": 2, "form": "power", "b": 1.0, "p": 0.0}]}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sobocurve"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

struct Inputs {
    dir: TempDir,
}

impl Inputs {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let g = Grid::with_points(64).unwrap();
        fs::write(dir.path().join("flat.json"), FLAT).unwrap();
        fs::write(dir.path().join("gap.json"), GAP).unwrap();
        for (name, r) in [("c1.json", 1.0), ("c2.json", 2.0)] {
            let c = make_circle(r, &[0.0, 0.0], g).unwrap();
            fs::write(dir.path().join(name), curve_to_json(&c).unwrap()).unwrap();
        }
        Inputs { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_string_lossy().into_owned()
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn analyze_reports_gap_for_two_term_family() {
    let inp = Inputs::new();
    let out = run(&["analyze", "--metric", &inp.path("gap.json")]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["classification"], "gap");
}

#[test]
fn distance_between_identical_curves_is_zero() {
    let inp = Inputs::new();
    let c = inp.path("c1.json");
    let out = run(&[
        "distance",
        "--metric",
        &inp.path("flat.json"),
        "--from",
        &c,
        "--to",
        &c,
        "--T",
        "4",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["distance"].as_f64().unwrap(), 0.0);
}

#[test]
fn geodesic_between_circles_below_radial_length() {
    let inp = Inputs::new();
    let trace = inp.file("trace.csv");
    let dump = inp.file("path.json");
    let out = run(&[
        "geodesic",
        "--metric",
        &inp.path("flat.json"),
        "--from",
        &inp.path("c1.json"),
        "--to",
        &inp.path("c2.json"),
        "--T",
        "16",
        "--trace",
        trace.to_str().unwrap(),
        "--dump-path",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let d = v["report"]["distance"].as_f64().unwrap();
    assert!(d > 3.3 && d < 3.4309676467988464 * (1.0 + 1e-3), "{d}");
    assert_eq!(v["path"]["T"], 16);
    assert!(fs::read_to_string(&trace).unwrap().starts_with("iteration,energy\n"));
    assert!(sobocurve::io::path_from_json(&fs::read_to_string(&dump).unwrap()).is_ok());
}

#[test]
fn radial_length_and_moments() {
    let inp = Inputs::new();
    let out = run(&[
        "radial",
        "--metric",
        &inp.path("flat.json"),
        "--curve",
        &inp.path("c1.json"),
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let len = v["length"].as_f64().unwrap();
    assert!((len / 3.4309676467988464 - 1.0).abs() < 1e-4, "{len}");
    assert_eq!(v["moments"].as_array().unwrap().len(), 3);
}

#[test]
fn counterexample_csv_is_increasing_for_grow() {
    let inp = Inputs::new();
    let csv = inp.file("grow.csv");
    let out = run(&[
        "counterexample",
        "--case",
        "grow",
        "--p",
        "0",
        "--alpha",
        "10",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,lambda_n,ell_n,dist_upper_n,bound_n"));
    let ell: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(ell.len(), 4);
    assert!(ell.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn shrink_case_accepts_negative_alpha() {
    let out = run(&[
        "counterexample",
        "--case",
        "shrink",
        "--p",
        "2",
        "--alpha",
        "-12",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("n,lambda_n"));
}

#[test]
fn validation_errors_exit_2() {
    let inp = Inputs::new();
    let bad = inp.file("bad.json");
    fs::write(&bad, r#"{"n":2,"terms":[],"x":1}"#).unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["counterexample", "--case", "grow", "--p", "0", "--alpha", "8"],
        vec!["analyze", "--metric", "/nonexistent/metric.json"],
        vec!["analyze", "--metric", bad.to_str().unwrap()],
        vec!["no-such-command"],
        vec!["verify", "--instances", "0"],
        vec!["analyze", "--metric", &inp.path("flat.json"), "--format", "csv"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for args in &cases {
        let out = bin().args(args).output().unwrap();
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn thread_variable_is_validated() {
    let inp = Inputs::new();
    let metric = inp.path("flat.json");
    let args = ["analyze", "--metric", metric.as_str()];
    let out = bin().env("SOBOCURVE_THREADS", "0").args(args).output().unwrap();
    assert_eq!(code(&out), 2);
    let out = bin().env("SOBOCURVE_THREADS", "1").args(args).output().unwrap();
    assert_eq!(code(&out), 0);
}

#[test]
fn output_flag_writes_file() {
    let inp = Inputs::new();
    let target = inp.file("report.json");
    let out = run(&[
        "analyze",
        "--metric",
        &inp.path("flat.json"),
        "-o",
        target.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&fs::read_to_string(Path::new(&target)).unwrap()).unwrap();
    assert!(v.get("classification").is_some());
}
