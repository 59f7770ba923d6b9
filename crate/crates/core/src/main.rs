use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sobocurve::completeness::analyze;
use sobocurve::counterexample::{
    build_sequence, pointwise_bounds_check, verify_sequence, Case, CounterexampleParams, PointwiseReport,
    SequenceReport,
};
use sobocurve::io::{
    path_from_json, path_to_json, read_curve, read_metric, to_json, write_energy_trace, GeodesicReport, PathFile,
};
use sobocurve::metric::MetricConfig;
use sobocurve::paths::{geodesic_bvp, moments, radial_path_length, Initializer, SolverOptions};
use sobocurve::verify::{self, VerifyOptions};
use sobocurve::{Error, Result};

#[derive(Parser)]
#[command(
    name = "sobocurve",
    version,
    about = "Length-weighted Sobolev metrics on closed curves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Completeness conditions of a metric.
    Analyze {
        #[arg(long)]
        metric: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Geodesic distance between two curves.
    Distance(BvpArgs),
    /// Like `distance`, and also emits the optimized path.
    Geodesic(BvpArgs),
    /// Length of the scaling path r -> r c0 by quadrature.
    Radial {
        #[arg(long)]
        metric: PathBuf,
        #[arg(long)]
        curve: PathBuf,
        #[arg(long = "from", default_value_t = 1.0)]
        r_from: f64,
        #[arg(long = "to", default_value_t = 2.0)]
        r_to: f64,
        #[command(flatten)]
        out: Output,
    },
    /// Bumpy-circle Cauchy sequence with divergent length.
    Counterexample {
        #[arg(long, value_enum)]
        case: CaseArg,
        #[arg(long)]
        p: f64,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long = "nmax", default_value_t = 3)]
        n_max: usize,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, default_value_t = 3)]
        lambda0: u32,
        #[arg(long, default_value_t = 2)]
        b: u32,
        /// Time steps per leg of the distance upper bound.
        #[arg(long = "T", default_value_t = 16)]
        steps: usize,
        /// Also write the table as CSV to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// Runs the invariant suite and prints a pass/fail table.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Grow,
    Shrink,
}

#[derive(Args)]
struct BvpArgs {
    #[arg(long)]
    metric: PathBuf,
    #[arg(long = "from")]
    from: PathBuf,
    #[arg(long = "to")]
    to: PathBuf,
    #[arg(long = "T", default_value_t = 32)]
    steps: usize,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    grad_tol: f64,
    #[arg(long, default_value_t = 10)]
    memory: usize,
    /// Seed of the gradient check performed before optimizing.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Start from this path instead of the linear one.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Write the optimized path as JSON.
    #[arg(long)]
    dump_path: Option<PathBuf>,
    /// Write the energy trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
}

fn emit(out: &Output, text: &str) -> Result<()> {
    match &out.output {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn only(out: &Output, allowed: &[Format], default: Format) -> Result<Format> {
    let f = out.format.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(Error::InvalidParameter(
            "output format not available for this command".into(),
        ))
    }
}

/// Numerical checks failed after a report was written.
struct ChecksFailed;

fn run(cli: Cli) -> Result<std::result::Result<(), ChecksFailed>> {
    match cli.command {
        Command::Analyze { metric, out } => {
            only(&out, &[Format::Json], Format::Json)?;
            let cfg = read_metric(&metric)?;
            emit(&out, &to_json(&analyze(&cfg))?)?;
        }
        Command::Distance(args) => bvp(args, false)?,
        Command::Geodesic(args) => bvp(args, true)?,
        Command::Radial {
            metric,
            curve,
            r_from,
            r_to,
            out,
        } => {
            only(&out, &[Format::Json], Format::Json)?;
            let cfg = read_metric(&metric)?;
            let c = read_curve(&curve)?;
            #[derive(Serialize)]
            struct Radial {
                r_from: f64,
                r_to: f64,
                length: f64,
                moments: Vec<f64>,
            }
            let rep = Radial {
                r_from,
                r_to,
                length: radial_path_length(&cfg, &c, r_from, r_to)?,
                moments: moments(&c, cfg.order())?,
            };
            emit(&out, &to_json(&rep)?)?;
        }
        Command::Counterexample {
            case,
            p,
            alpha,
            n_max,
            eps,
            lambda0,
            b,
            steps,
            csv,
            out,
        } => {
            let fmt = only(&out, &[Format::Json, Format::Csv], Format::Json)?;
            let case = match case {
                CaseArg::Grow => Case::Grow,
                CaseArg::Shrink => Case::Shrink,
            };
            let params = CounterexampleParams {
                case,
                p,
                eps,
                lambda0,
                b,
                alpha,
                n_max,
            };
            let cfg = MetricConfig::two_term(-3.0, p)?;
            let seq = build_sequence(&params)?;
            let rep = verify_sequence(&cfg, &seq, steps)?;
            let bounds = pointwise_bounds_check(&seq)?;
            if let Some(path) = csv {
                rep.write_csv(fs::File::create(path)?)?;
            }
            match fmt {
                Format::Csv => {
                    let mut buf = Vec::new();
                    rep.write_csv(&mut buf)?;
                    emit(&out, &String::from_utf8_lossy(&buf))?;
                }
                _ => {
                    #[derive(Serialize)]
                    struct Full<'a> {
                        sequence: &'a SequenceReport,
                        pointwise: &'a PointwiseReport,
                    }
                    emit(
                        &out,
                        &to_json(&Full {
                            sequence: &rep,
                            pointwise: &bounds,
                        })?,
                    )?;
                }
            }
            if !rep.passed() || !bounds.all_hold {
                eprintln!("counterexample checks failed");
                return Ok(Err(ChecksFailed));
            }
        }
        Command::Verify { seed, instances, out } => {
            let fmt = only(&out, &[Format::Table, Format::Json], Format::Table)?;
            let rep = verify::run(VerifyOptions { seed, instances })?;
            let text = match fmt {
                Format::Json => to_json(&rep)?,
                _ => rep.table(),
            };
            emit(&out, &text)?;
            if !rep.passed {
                eprintln!("{} invariant checks failed", rep.failures());
                return Ok(Err(ChecksFailed));
            }
        }
    }
    Ok(Ok(()))
}

fn bvp(args: BvpArgs, with_path: bool) -> Result<()> {
    only(&args.out, &[Format::Json], Format::Json)?;
    let cfg = read_metric(&args.metric)?;
    let c0 = read_curve(&args.from)?;
    let c1 = read_curve(&args.to)?;
    let initializer = match &args.init {
        Some(p) => Initializer::Provided(path_from_json(&fs::read_to_string(p)?)?),
        None => Initializer::Linear,
    };
    let opts = SolverOptions {
        max_iters: args.max_iters,
        grad_tol: args.grad_tol,
        steps: args.steps,
        initializer,
        memory: args.memory,
        check_seed: args.seed,
    };
    let res = geodesic_bvp(&cfg, &c0, &c1, &opts)?;
    let report = GeodesicReport::from(&res);
    if let Some(p) = &args.dump_path {
        fs::write(p, path_to_json(&res.path)?)?;
    }
    if let Some(p) = &args.trace {
        write_energy_trace(&res.energy_trace, fs::File::create(p)?)?;
    }
    let text = if with_path {
        #[derive(Serialize)]
        struct WithPath {
            report: GeodesicReport,
            path: PathFile,
        }
        to_json(&WithPath {
            report,
            path: PathFile::from_path(&res.path),
        })?
    } else {
        to_json(&report)?
    };
    emit(&args.out, &text)
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("SOBOCURVE_THREADS") else {
        return Ok(());
    };
    let n: usize =
        v.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
            Error::InvalidParameter(format!("SOBOCURVE_THREADS must be a positive integer, got {v:?}"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_validation() {
        ExitCode::from(2)
    } else {
        ExitCode::from(3)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        return exit_for(&e);
    }
    match run(cli) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(ChecksFailed)) => ExitCode::from(3),
        Err(e) => exit_for(&e),
    }
}
