//! File formats: curves, paths and solver reports as JSON, plus CSV curve input
//! and energy traces.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curve::DiscreteCurve;
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, Samples};
use crate::metric::MetricConfig;
use crate::paths::{CurvePath, GeodesicResult, StopReason};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveFile {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme_order: Option<u8>,
    pub samples: Vec<Vec<f64>>,
}

impl CurveFile {
    pub fn from_curve(c: &DiscreteCurve) -> Self {
        CurveFile {
            n: c.len(),
            d: c.dim(),
            scheme_order: Some(c.grid().scheme_order()),
            samples: c.samples().rows().map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn to_curve(&self) -> Result<DiscreteCurve> {
        if self.samples.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                found: self.samples.len(),
            });
        }
        if let Some(row) = self.samples.iter().find(|r| r.len() != self.d) {
            return Err(invalid(format!("sample has {} coordinates, d = {}", row.len(), self.d)));
        }
        let grid = Grid::new(self.n, self.scheme_order.unwrap_or(4))?;
        DiscreteCurve::new(grid, Samples::from_rows(&self.samples)?)
    }
}

pub fn curve_from_json(text: &str) -> Result<DiscreteCurve> {
    serde_json::from_str::<CurveFile>(text)?.to_curve()
}

pub fn curve_to_json(c: &DiscreteCurve) -> Result<String> {
    to_json(&CurveFile::from_curve(c))
}

/// Uniform-grid theta values must match `2 pi j / N` to this tolerance.
pub const THETA_TOL: f64 = 1e-9;

/// Header `theta,x,y[,z,...]`, one row per grid point in order.
pub fn curve_from_csv<R: Read>(input: R) -> Result<DiscreteCurve> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "theta" {
        return Err(invalid("curve CSV header must be theta,x,y[,...]"));
    }
    let d = header.len() - 1;
    let mut thetas = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| invalid(format!("bad number {f:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        thetas.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    let grid = Grid::with_points(rows.len())?;
    for (j, t) in thetas.iter().enumerate() {
        if (t - grid.theta(j)).abs() > THETA_TOL * 2.0 * PI {
            return Err(Error::GridMismatch(format!(
                "theta[{j}] = {t}, expected {} on a uniform grid",
                grid.theta(j)
            )));
        }
    }
    debug_assert!(rows.iter().all(|r| r.len() == d));
    DiscreteCurve::new(grid, Samples::from_rows(&rows)?)
}

/// Reads a curve from `.csv` or JSON, chosen by extension.
pub fn read_curve(path: &Path) -> Result<DiscreteCurve> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        curve_from_csv(fs::File::open(path)?)
    } else {
        curve_from_json(&fs::read_to_string(path)?)
    }
}

pub fn read_metric(path: &Path) -> Result<MetricConfig> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathFile {
    #[serde(rename = "T")]
    pub t: usize,
    pub grid: Grid,
    pub slices: Vec<CurveFile>,
}

impl PathFile {
    pub fn from_path(p: &CurvePath) -> Self {
        PathFile {
            t: p.steps(),
            grid: *p.grid(),
            slices: p.slices().iter().map(CurveFile::from_curve).collect(),
        }
    }

    pub fn to_path(&self) -> Result<CurvePath> {
        if self.slices.len() != self.t + 1 {
            return Err(Error::LengthMismatch {
                expected: self.t + 1,
                found: self.slices.len(),
            });
        }
        let slices = self
            .slices
            .iter()
            .map(|s| {
                let c = s.to_curve()?;
                if c.len() != self.grid.len() {
                    return Err(Error::GridMismatch(format!(
                        "slice has N = {}, path grid N = {}",
                        c.len(),
                        self.grid.len()
                    )));
                }
                DiscreteCurve::new(self.grid, c.into_samples())
            })
            .collect::<Result<Vec<_>>>()?;
        CurvePath::new(slices)
    }
}

pub fn path_from_json(text: &str) -> Result<CurvePath> {
    serde_json::from_str::<PathFile>(text)?.to_path()
}

pub fn path_to_json(p: &CurvePath) -> Result<String> {
    to_json(&PathFile::from_path(p))
}

/// Serializable view of a [`GeodesicResult`] without the optimized path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicReport {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub distance: f64,
    pub energy: f64,
    pub length: f64,
    pub sqrt_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub gradient_norm_final: f64,
    pub gradient_check: f64,
    pub non_constant_speed: bool,
    pub energy_trace: Vec<f64>,
}

impl From<&GeodesicResult> for GeodesicReport {
    fn from(r: &GeodesicResult) -> Self {
        GeodesicReport {
            t: r.path.steps(),
            n: r.path.grid().len(),
            distance: r.length,
            energy: r.energy,
            length: r.length,
            sqrt_energy: r.sqrt_energy,
            iterations: r.iterations,
            converged: r.converged,
            stop: r.stop,
            gradient_norm_final: r.gradient_norm_final,
            gradient_check: r.gradient_check,
            non_constant_speed: r.non_constant_speed,
            energy_trace: r.energy_trace.clone(),
        }
    }
}

/// Columns `iteration, energy`.
pub fn write_energy_trace<W: Write>(trace: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "energy"])?;
    for (i, e) in trace.iter().enumerate() {
        w.write_record([i.to_string(), format!("{e:e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
