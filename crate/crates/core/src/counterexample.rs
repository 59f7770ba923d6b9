//! Bumpy-circle sequences that are Cauchy for the two-term metric
//! `l^-3 <h,k> + l^p <D_s^2 h, D_s^2 k>` while their length runs off to
//! infinity (`p < 1`) or to zero (`p > 1`).
//!
//! Radii reach `lambda^(+-12)`, so every metric quantity is evaluated on the
//! unit-radius profile and the radius is restored through the exact scaling
//! laws `ds -> r ds`, `D_s -> D_s / r`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{arc_derivatives, curve_length, make_bumpy_circle, sq_l2_ds, DiscreteCurve};
use crate::error::{invalid, Error, Result};
use crate::grid::{derivative, dot, Grid, Samples};
use crate::metric::MetricConfig;
use crate::quadrature::{integrate, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// `p < 1`, radii grow and lengths tend to infinity.
    Grow,
    /// `p > 1`, radii shrink and lengths tend to zero.
    Shrink,
}

pub const MAX_LAMBDA: u64 = 48;
pub const MAX_STEPS: usize = 64;
pub const MAX_POINTS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleParams {
    pub case: Case,
    pub p: f64,
    pub eps: f64,
    pub lambda0: u32,
    pub b: u32,
    pub alpha: f64,
    pub n_max: usize,
}

impl CounterexampleParams {
    /// `eps = 0.25, lambda0 = 3, b = 2, n_max = 3`.
    pub fn standard(case: Case, p: f64, alpha: f64) -> Self {
        CounterexampleParams {
            case,
            p,
            eps: 0.25,
            lambda0: 3,
            b: 2,
            alpha,
            n_max: 3,
        }
    }

    /// `alpha` must exceed this in the grow case and stay below it when shrinking.
    pub fn alpha_threshold(&self) -> f64 {
        match self.case {
            Case::Grow => (self.p + 9.0) / (1.0 - self.p),
            Case::Shrink => -(self.p + 9.0) / (self.p - 1.0),
        }
    }

    /// `beta = alpha (p - 1) + p + 9`.
    pub fn beta(&self) -> f64 {
        self.alpha * (self.p - 1.0) + self.p + 9.0
    }

    pub fn lambda(&self, n: usize) -> u64 {
        self.lambda0 as u64 * (self.b as u64).pow(n as u32)
    }

    /// `ln r_n = alpha ln lambda_n`.
    pub fn ln_radius(&self, n: usize) -> f64 {
        self.alpha * (self.lambda(n) as f64).ln()
    }

    pub fn radius(&self, n: usize) -> f64 {
        self.ln_radius(n).exp()
    }

    /// `a = r_{n+1} / r_n = b^alpha`.
    pub fn radius_ratio(&self) -> f64 {
        (self.b as f64).powf(self.alpha)
    }

    /// Next power of two `>= 32 lambda_{n_max}`.
    pub fn grid_points(&self) -> usize {
        (32 * self.lambda(self.n_max) as usize).next_power_of_two()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0 / 3.0) {
            return Err(invalid(format!("eps must lie in (0, 1/3), got {}", self.eps)));
        }
        if self.lambda0 <= 2 {
            return Err(invalid(format!("lambda0 must exceed 2, got {}", self.lambda0)));
        }
        if self.b <= 1 {
            return Err(invalid(format!("b must exceed 1, got {}", self.b)));
        }
        if self.n_max == 0 {
            return Err(invalid("n_max must be >= 1"));
        }
        if !self.p.is_finite() || !self.alpha.is_finite() {
            return Err(invalid("p and alpha must be finite"));
        }
        match self.case {
            Case::Grow if !(self.p < 1.0) => return Err(invalid(format!("grow case needs p < 1, got {}", self.p))),
            Case::Shrink if !(self.p > 1.0) => return Err(invalid(format!("shrink case needs p > 1, got {}", self.p))),
            _ => {}
        }
        let th = self.alpha_threshold();
        match self.case {
            Case::Grow if !(self.alpha > th) => {
                return Err(invalid(format!(
                    "alpha below case-1 threshold: need alpha > (p+9)/(1-p) = {th}, got {}",
                    self.alpha
                )))
            }
            Case::Shrink if !(self.alpha < th) => {
                return Err(invalid(format!(
                    "alpha above case-2 threshold: need alpha < -(p+9)/(p-1) = {th}, got {}",
                    self.alpha
                )))
            }
            _ => {}
        }
        assert!(
            self.beta() < 0.0,
            "beta must be negative once alpha passes the threshold"
        );
        let lam = self
            .lambda0
            .checked_mul(self.b.checked_pow(self.n_max as u32).unwrap_or(u32::MAX))
            .map_or(u64::MAX, u64::from);
        if lam > MAX_LAMBDA {
            return Err(invalid(format!(
                "lambda_{} = {lam} exceeds the desk-scale cap {MAX_LAMBDA}",
                self.n_max
            )));
        }
        if self.grid_points() > MAX_POINTS {
            return Err(invalid(format!("grid would need N = {}", self.grid_points())));
        }
        Ok(())
    }
}

/// `c_n = r_n U_n` and `c~_n = r_{n+1} U_n` with `U_n = (1 + eps sin(lambda_n theta)) n`.
#[derive(Debug, Clone)]
pub struct Sequence {
    params: CounterexampleParams,
    grid: Grid,
    profiles: Vec<DiscreteCurve>,
    curves: Vec<DiscreteCurve>,
    intermediates: Vec<DiscreteCurve>,
}

impl Sequence {
    pub fn params(&self) -> &CounterexampleParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `c_0, ..., c_{n_max}` in physical units.
    pub fn curves(&self) -> &[DiscreteCurve] {
        &self.curves
    }

    /// `c~_0, ..., c~_{n_max - 1}`.
    pub fn intermediates(&self) -> &[DiscreteCurve] {
        &self.intermediates
    }

    /// Unit-radius profile `U_n`.
    pub fn profile(&self, n: usize) -> &DiscreteCurve {
        &self.profiles[n]
    }
}

pub fn build_sequence(params: &CounterexampleParams) -> Result<Sequence> {
    params.validate()?;
    let grid = Grid::with_points(params.grid_points())?;
    let profiles = (0..=params.n_max)
        .map(|n| make_bumpy_circle(1.0, params.eps, params.lambda(n) as u32, grid))
        .collect::<Result<Vec<_>>>()?;
    let curves = (0..=params.n_max)
        .map(|n| profiles[n].scaled(params.radius(n)))
        .collect::<Result<Vec<_>>>()?;
    let intermediates = (0..params.n_max)
        .map(|n| profiles[n].scaled(params.radius(n + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Sequence {
        params: params.clone(),
        grid,
        profiles,
        curves,
        intermediates,
    })
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln G_{sigma V}(tau W, tau W)` for a unit-scale curve `V`.
fn ln_scaled_metric(cfg: &MetricConfig, v: &DiscreteCurve, w: &Samples, ln_sigma: f64, ln_tau: f64) -> Result<f64> {
    let q = arc_derivatives(v, w, cfg.order())?
        .iter()
        .map(|u| sq_l2_ds(v, u))
        .collect::<Vec<_>>();
    let ell = (ln_sigma + curve_length(v).ln()).exp();
    let terms: Vec<f64> = cfg
        .active_terms()
        .filter(|t| q[t.k] > 0.0)
        .map(|t| t.ln_value(ell) + 2.0 * ln_tau + (1.0 - 2.0 * t.k as f64) * ln_sigma + q[t.k].ln())
        .collect();
    Ok(log_sum_exp(&terms))
}

/// The two legs `c_n -> c~_n -> c_{n+1}` as (unit curve, velocity, ln sigma, ln tau)
/// at the midpoint `t`.
fn leg_state(seq: &Sequence, n: usize, leg: usize, t: f64) -> Result<(DiscreteCurve, Samples, f64, f64)> {
    let p = &seq.params;
    let a = p.radius_ratio();
    let (ln_rn, ln_rn1) = (p.ln_radius(n), p.ln_radius(n + 1));
    if leg == 0 {
        // sigma(t) = r_n (1 + t (a - 1)), tau = r_n |a - 1|
        let ln_sigma = ln_rn + (1.0 + t * (a - 1.0)).ln();
        let ln_tau = ln_rn + (a - 1.0).abs().ln();
        Ok((
            seq.profiles[n].clone(),
            seq.profiles[n].samples().clone(),
            ln_sigma,
            ln_tau,
        ))
    } else {
        let (u0, u1) = (seq.profiles[n].samples(), seq.profiles[n + 1].samples());
        let v = DiscreteCurve::new(seq.grid, u0.combine(1.0 - t, u1, t))
            .map_err(|_| Error::SliceNotImmersed { slice: n, t })?;
        Ok((v, u1.combine(1.0, u0, -1.0), ln_rn1, ln_rn1))
    }
}

/// Relative tolerance of the scaling leg `c_n -> c~_n`.
pub const LEG_REL_TOL: f64 = 1e-10;

/// Length of `sigma -> sigma U_n` from `r_n` to `r_{n+1}`, integrated in `u = ln sigma`:
/// `int sqrt(sum_k a_k(e^u l_U) e^{(3-2k) u} M_k) du`.
fn scaling_leg(cfg: &MetricConfig, seq: &Sequence, n: usize) -> Result<f64> {
    let u = &seq.profiles[n];
    let m: Vec<f64> = arc_derivatives(u, u.samples(), cfg.order())?
        .iter()
        .map(|d| sq_l2_ds(u, d))
        .collect();
    let ln_ell = curve_length(u).ln();
    let f = |x: f64| {
        let terms: Vec<f64> = cfg
            .active_terms()
            .filter(|t| m[t.k] > 0.0)
            .map(|t| t.ln_value((x + ln_ell).exp()) + (3.0 - 2.0 * t.k as f64) * x + m[t.k].ln())
            .collect();
        (0.5 * log_sum_exp(&terms)).exp()
    };
    let (a, b) = (seq.params.ln_radius(n), seq.params.ln_radius(n + 1));
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: LEG_REL_TOL,
        max_intervals: 2000,
    };
    Ok(integrate(f, lo, hi, opts)?.value)
}

/// Midpoint rule in `t` for the blend `c~_n -> c_{n+1}` at fixed radius.
fn blend_leg(cfg: &MetricConfig, seq: &Sequence, n: usize, steps: usize) -> Result<f64> {
    let dt = 1.0 / steps as f64;
    let parts: Vec<f64> = (0..steps)
        .into_par_iter()
        .map(|m| {
            let t = (m as f64 + 0.5) * dt;
            let (v, w, ls, lt) = leg_state(seq, n, 1, t)?;
            Ok((0.5 * ln_scaled_metric(cfg, &v, &w, ls, lt)?).exp())
        })
        .collect::<Result<_>>()?;
    Ok(dt * parts.iter().sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    NotMonotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRow {
    pub n: usize,
    pub lambda: u64,
    pub radius: f64,
    pub length: f64,
    /// `l_{c_n} / (r_n lambda_n)`.
    pub length_ratio: f64,
    pub dist_to_intermediate: Option<f64>,
    pub dist_from_intermediate: Option<f64>,
    pub dist_upper: Option<f64>,
    /// `lambda_n^-1 + lambda_n^(beta/2)`.
    pub bound: Option<f64>,
    pub fitted_constant: Option<f64>,
    pub partial_sum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub params: CounterexampleParams,
    pub beta: f64,
    pub grid_points: usize,
    pub steps: usize,
    pub rows: Vec<SequenceRow>,
    /// `[w1, w2]` fitted on `n = 0`.
    pub length_window: (f64, f64),
    pub length_trend: Trend,
    pub checks: Vec<Check>,
}

impl SequenceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Columns `n, lambda_n, l_n, dist_upper_n, bound_n`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "lambda_n", "ell_n", "dist_upper_n", "bound_n"])?;
        for r in &self.rows {
            let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
            w.write_record([
                r.n.to_string(),
                r.lambda.to_string(),
                format!("{:e}", r.length),
                opt(r.dist_upper),
                opt(r.bound),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Factor by which the fitted constants may drift across `n`.
pub const STABILITY_FACTOR: f64 = 3.0;

/// Ratio `C0` with `l/(r lambda)` confined to `[x / C0, x C0]` around its `n = 0` value.
///
/// `eps lambda |cos(lambda theta)| <= |U'| <= 1 + eps + eps lambda` bounds the
/// ratio by `4 eps` below and `2 pi (1 + eps + eps lambda0) / lambda0` above.
pub fn length_window_factor(params: &CounterexampleParams) -> f64 {
    let l0 = params.lambda0 as f64;
    2.0 * std::f64::consts::PI * (1.0 + params.eps + params.eps * l0) / (4.0 * params.eps * l0)
}

/// Distance upper bounds along the two legs and the checks on them. The
/// blend leg uses `steps` midpoint intervals; the scaling leg is integrated
/// adaptively.
pub fn verify_sequence(cfg: &MetricConfig, seq: &Sequence, steps: usize) -> Result<SequenceReport> {
    if steps == 0 || steps > MAX_STEPS {
        return Err(invalid(format!("T must lie in 1..={MAX_STEPS}, got {steps}")));
    }
    let p = &seq.params;
    let beta = p.beta();
    let mut rows = Vec::with_capacity(p.n_max + 1);
    let mut partial = 0.0;
    for n in 0..=p.n_max {
        let lam = p.lambda(n);
        let len_unit = curve_length(&seq.profiles[n]);
        let (d0, d1, bound) = if n < p.n_max {
            let d0 = scaling_leg(cfg, seq, n)?;
            let d1 = blend_leg(cfg, seq, n, steps)?;
            let l = lam as f64;
            (Some(d0), Some(d1), Some(1.0 / l + l.powf(beta / 2.0)))
        } else {
            (None, None, None)
        };
        let upper = d0.zip(d1).map(|(a, b)| a + b);
        if let Some(u) = upper {
            partial += u;
        }
        rows.push(SequenceRow {
            n,
            lambda: lam,
            radius: p.radius(n),
            length: (p.ln_radius(n) + len_unit.ln()).exp(),
            length_ratio: len_unit / lam as f64,
            dist_to_intermediate: d0,
            dist_from_intermediate: d1,
            dist_upper: upper,
            bound,
            fitted_constant: upper.zip(bound).map(|(u, b)| u / b),
            partial_sum: upper.map(|_| partial),
        });
    }

    let c0 = length_window_factor(p);
    let x0 = rows[0].length_ratio;
    let window = (x0 / c0, x0 * c0);
    let mut checks = Vec::new();

    let outside: Vec<usize> = rows
        .iter()
        .filter(|r| !(r.length_ratio >= window.0 && r.length_ratio <= window.1))
        .map(|r| r.n)
        .collect();
    checks.push(Check::new(
        "length_ratio_window",
        outside.is_empty(),
        format!(
            "window [{:.4e}, {:.4e}]; outside at n = {outside:?}",
            window.0, window.1
        ),
    ));

    let consts: Vec<f64> = rows.iter().filter_map(|r| r.fitted_constant).collect();
    let (cmin, cmax) = consts
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    checks.push(Check::new(
        "distance_constant_stable",
        cmax <= STABILITY_FACTOR * cmin,
        format!(
            "dist_upper / bound in [{cmin:.4e}, {cmax:.4e}], spread {:.3}",
            cmax / cmin
        ),
    ));

    let lengths: Vec<f64> = rows.iter().map(|r| r.length).collect();
    let trend = if lengths.windows(2).all(|w| w[1] > w[0]) {
        Trend::Increasing
    } else if lengths.windows(2).all(|w| w[1] < w[0]) {
        Trend::Decreasing
    } else {
        Trend::NotMonotone
    };
    let expected = match p.case {
        Case::Grow => Trend::Increasing,
        Case::Shrink => Trend::Decreasing,
    };
    checks.push(Check::new(
        "length_trend",
        trend == expected,
        format!("{trend:?}, expected {expected:?}"),
    ));

    // l_{n+1}/l_n = b^(1+alpha) x_{n+1}/x_n with both x in the window.
    let step = (p.b as f64).powf(1.0 + p.alpha);
    let spread = window.1 / window.0;
    let factors: Vec<f64> = lengths.windows(2).map(|w| w[1] / w[0]).collect();
    let factor_ok = factors.iter().all(|&f| match p.case {
        Case::Grow => f >= step / spread,
        Case::Shrink => f <= step * spread && f < 1.0,
    });
    checks.push(Check::new(
        "length_step_factor",
        factor_ok,
        format!("factors {factors:.4?} against b^(1+alpha) = {step:.4e} and window spread {spread:.3}"),
    ));

    let incs: Vec<f64> = rows.iter().filter_map(|r| r.dist_upper).collect();
    checks.push(Check::new(
        "partial_sums_cauchy",
        incs.windows(2).all(|w| w[1] < w[0]),
        format!("increments {incs:.4?}"),
    ));

    Ok(SequenceReport {
        params: p.clone(),
        beta,
        grid_points: seq.grid.len(),
        steps,
        rows,
        length_window: window,
        length_trend: trend,
        checks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub n: usize,
    pub bound: String,
    /// Worst value of `lhs / rhs` over the grid (and the sampled times).
    pub worst_ratio: f64,
    /// Largest admissible ratio.
    pub limit: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub rows: Vec<BoundRow>,
    pub all_hold: bool,
}

/// Interior times at which the path bounds are sampled.
pub const SAMPLE_TIMES: [f64; 5] = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0, 4.0 / 6.0, 5.0 / 6.0];

/// Relative slack for discrete inequalities that hold with equality somewhere.
/// At `N >= 32 lambda` the fourth-order stencil differentiates the top mode to
/// better than this.
pub const DISCRETE_SLACK: f64 = 1e-3;

fn max_norm(s: &Samples) -> f64 {
    s.rows().map(|p| dot(p, p).sqrt()).fold(0.0, f64::max)
}

fn min_norm(s: &Samples) -> f64 {
    s.rows().map(|p| dot(p, p).sqrt()).fold(f64::INFINITY, f64::min)
}

/// Normalized path quantities of one leg at time `t`, all in units of `r_n`.
struct LegSample {
    min_speed_ratio: f64,
    d2_sup: f64,
    l2_velocity: f64,
    l2_d2: f64,
    length_ratio: f64,
}

fn leg_sample(seq: &Sequence, n: usize, leg: usize, t: f64) -> Result<LegSample> {
    let p = &seq.params;
    let a = p.radius_ratio();
    let lam = p.lambda(n) as f64;
    let (v, w, _, _) = leg_state(seq, n, leg, t)?;
    let d = arc_derivatives(&v, &w, 2)?;
    let min_speed = v.speed().iter().cloned().fold(f64::INFINITY, f64::min);
    let (q0, q2) = (sq_l2_ds(&v, &d[0]), sq_l2_ds(&v, &d[2]));
    let sup2 = max_norm(&d[2]);
    let lv = curve_length(&v);
    Ok(if leg == 0 {
        let f = 1.0 + t * (a - 1.0);
        let tau = (a - 1.0).abs();
        LegSample {
            min_speed_ratio: min_speed / (1.0 - p.eps),
            d2_sup: tau / (f * f) * sup2 / lam.powi(4),
            l2_velocity: tau * tau * f * q0 / lam,
            l2_d2: tau * tau / f.powi(3) * q2 / lam.powi(9),
            length_ratio: f * lv / lam,
        }
    } else {
        LegSample {
            min_speed_ratio: min_speed / (1.0 - 2.0 * p.eps),
            d2_sup: sup2 / (a * lam.powi(4)),
            l2_velocity: a.powi(3) * q0 / lam,
            l2_d2: q2 / (a * lam.powi(9)),
            length_ratio: a * lv / lam,
        }
    })
}

/// Checks the pointwise estimates of the construction on the grid.
///
/// Exact inequalities are checked with [`DISCRETE_SLACK`]; the `<~` estimates
/// are checked against a constant fitted at `n = 0` and allowed to grow by
/// [`STABILITY_FACTOR`].
pub fn pointwise_bounds_check(seq: &Sequence) -> Result<PointwiseReport> {
    let p = &seq.params;
    let grid = seq.grid;
    let mut rows = Vec::new();
    let exact = |rows: &mut Vec<BoundRow>, n: usize, name: &str, ratio: f64| {
        rows.push(BoundRow {
            n,
            bound: name.to_string(),
            worst_ratio: ratio,
            limit: 1.0 + DISCRETE_SLACK,
            holds: ratio <= 1.0 + DISCRETE_SLACK,
        });
    };
    for n in 0..=p.n_max {
        let lam = p.lambda(n) as f64;
        let u = seq.profiles[n].samples();
        let d1 = derivative(u, &grid)?;
        let d2 = derivative(&d1, &grid)?;
        // |c_n| <= r_n (1 + eps) is exact on samples of the formula.
        let r0 = max_norm(u) / (1.0 + p.eps);
        rows.push(BoundRow {
            n,
            bound: "|c| <= r(1+eps)".into(),
            worst_ratio: r0,
            limit: 1.0 + 1e-12,
            holds: r0 <= 1.0 + 1e-12,
        });
        exact(&mut rows, n, "|c'| <= r(2+lambda)", max_norm(&d1) / (2.0 + lam));
        exact(
            &mut rows,
            n,
            "|c''| <= r(2+2 lambda+lambda^2)",
            max_norm(&d2) / (2.0 + 2.0 * lam + lam * lam),
        );
        exact(&mut rows, n, "|c'| >= (1-eps) r", (1.0 - p.eps) / min_norm(&d1));
    }

    let mut samples: Vec<Vec<LegSample>> = Vec::new();
    for n in 0..p.n_max {
        let per: Vec<LegSample> = [0usize, 1]
            .iter()
            .flat_map(|&leg| SAMPLE_TIMES.iter().map(move |&t| (leg, t)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(leg, t)| leg_sample(seq, n, leg, t))
            .collect::<Result<_>>()?;
        samples.push(per);
    }
    let half = SAMPLE_TIMES.len();
    for (n, per) in samples.iter().enumerate() {
        let worst0 = per[..half].iter().map(|s| 1.0 / s.min_speed_ratio).fold(0.0, f64::max);
        exact(&mut rows, n, "path c_n->c~_n: |c'| >= (1-eps) sigma(t)", worst0);
        let worst1 = per[half..].iter().map(|s| 1.0 / s.min_speed_ratio).fold(0.0, f64::max);
        exact(&mut rows, n, "path c~_n->c_n+1: |c'| >= (1-2 eps) r_n+1", worst1);
    }

    type Pick = fn(&LegSample) -> f64;
    let fitted: [(&str, Pick); 3] = [
        ("|D_s^2 dc/dt| <~ r^-1 lambda^4", |s| s.d2_sup),
        ("int |dc/dt|^2 ds <~ r^3 lambda", |s| s.l2_velocity),
        ("int |D_s^2 dc/dt|^2 ds <~ r^-1 lambda^9", |s| s.l2_d2),
    ];
    for (name, pick) in fitted {
        for (leg, label) in [(0usize, "c_n->c~_n"), (1, "c~_n->c_n+1")] {
            let worst: Vec<f64> = samples
                .iter()
                .map(|per| per[leg * half..(leg + 1) * half].iter().map(pick).fold(0.0, f64::max))
                .collect();
            let limit = STABILITY_FACTOR * worst[0];
            for (n, w) in worst.iter().enumerate() {
                rows.push(BoundRow {
                    n,
                    bound: format!("path {label}: {name}"),
                    worst_ratio: *w,
                    limit,
                    holds: *w <= limit,
                });
            }
        }
    }

    // r_n lambda_n <~ l_c <~ r_n lambda_n along both legs, two-sided around n = 0.
    let c0 = length_window_factor(p);
    for (leg, label) in [(0usize, "c_n->c~_n"), (1, "c~_n->c_n+1")] {
        let span = |per: &Vec<LegSample>| {
            per[leg * half..(leg + 1) * half]
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(a, b), s| {
                    (a.min(s.length_ratio), b.max(s.length_ratio))
                })
        };
        let (lo0, hi0) = span(&samples[0]);
        for (n, per) in samples.iter().enumerate() {
            let (lo, hi) = span(per);
            let worst = (hi / hi0).max(lo0 / lo);
            rows.push(BoundRow {
                n,
                bound: format!("path {label}: l_c ~ r lambda"),
                worst_ratio: worst,
                limit: c0,
                holds: worst <= c0,
            });
        }
    }

    let all_hold = rows.iter().all(|r| r.holds);
    Ok(PointwiseReport { rows, all_hold })
}
