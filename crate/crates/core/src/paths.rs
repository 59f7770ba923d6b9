//! Paths of curves, their energy and length, radial paths and the geodesic
//! boundary value solver.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::completeness::w_eval;
use crate::curve::{arc_derivatives, curve_length, sq_l2_ds, DiscreteCurve, TangentField};
use crate::error::{invalid, Error, Result};
use crate::grid::{derivative, derivative_transpose, dot, Grid, Samples};
use crate::metric::{eval_metric, term_integrals, MetricConfig};
use crate::quadrature::{integrate, QuadOptions};
use crate::random::random_field;

/// Time slices `c_0, ..., c_T` of a path on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePath {
    slices: Vec<DiscreteCurve>,
}

impl CurvePath {
    pub fn new(slices: Vec<DiscreteCurve>) -> Result<Self> {
        if slices.len() < 2 {
            return Err(invalid("a path needs at least two slices"));
        }
        let (g, d) = (*slices[0].grid(), slices[0].dim());
        for (m, c) in slices.iter().enumerate() {
            if *c.grid() != g || c.dim() != d {
                return Err(Error::GridMismatch(format!(
                    "slice {m} does not share the grid and dimension of slice 0"
                )));
            }
        }
        Ok(CurvePath { slices })
    }

    /// Number of time intervals `T`.
    pub fn steps(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps() as f64
    }

    pub fn grid(&self) -> &Grid {
        self.slices[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.slices[0].dim()
    }

    pub fn slices(&self) -> &[DiscreteCurve] {
        &self.slices
    }

    pub fn slice(&self, m: usize) -> &DiscreteCurve {
        &self.slices[m]
    }

    pub fn start(&self) -> &DiscreteCurve {
        &self.slices[0]
    }

    pub fn end(&self) -> &DiscreteCurve {
        &self.slices[self.steps()]
    }

    /// The same path run backwards in time.
    pub fn reverse(&self) -> CurvePath {
        let mut slices = self.slices.clone();
        slices.reverse();
        CurvePath { slices }
    }
}

fn same_space(c0: &DiscreteCurve, c1: &DiscreteCurve) -> Result<()> {
    if c0.grid() != c1.grid() || c0.dim() != c1.dim() {
        return Err(Error::GridMismatch(format!(
            "endpoints differ: N={} d={} vs N={} d={}",
            c0.len(),
            c0.dim(),
            c1.len(),
            c1.dim()
        )));
    }
    Ok(())
}

/// `c_m = (1 - t_m) c0 + t_m c1` with `t_m = m / T`.
pub fn linear_path(c0: &DiscreteCurve, c1: &DiscreteCurve, steps: usize) -> Result<CurvePath> {
    same_space(c0, c1)?;
    if steps == 0 {
        return Err(invalid("a path needs T >= 1"));
    }
    let diff = c1.samples().combine(1.0, c0.samples(), -1.0);
    let mut slices = Vec::with_capacity(steps + 1);
    slices.push(c0.clone());
    for m in 1..steps {
        let t = m as f64 / steps as f64;
        let s = c0.samples().combine(1.0, &diff, t);
        let c = DiscreteCurve::new(*c0.grid(), s).map_err(|e| match e {
            Error::NotImmersion { .. } => Error::SliceNotImmersed { slice: m, t },
            other => other,
        })?;
        slices.push(c);
    }
    slices.push(c1.clone());
    Ok(CurvePath { slices })
}

/// `rho(t) c0` with `rho` running linearly from `r_from` to `r_to`.
pub fn radial_path(c0: &DiscreteCurve, r_from: f64, r_to: f64, steps: usize) -> Result<CurvePath> {
    if !(r_from > 0.0 && r_to > 0.0) {
        return Err(invalid("radial scale factors must be positive"));
    }
    linear_path(&c0.scaled(r_from)?, &c0.scaled(r_to)?, steps)
}

fn midpoint(a: &Samples, b: &Samples, grid: Grid, m: usize, steps: usize) -> Result<DiscreteCurve> {
    DiscreteCurve::new(grid, a.combine(0.5, b, 0.5)).map_err(|e| match e {
        Error::NotImmersion { .. } => Error::SliceNotImmersed {
            slice: m,
            t: (m as f64 + 0.5) / steps as f64,
        },
        other => other,
    })
}

/// `G_{c_{m+1/2}}(v_m, v_m)` for every interval.
fn interval_values(cfg: &MetricConfig, path: &CurvePath) -> Result<Vec<f64>> {
    let steps = path.steps();
    let grid = *path.grid();
    let inv_dt = steps as f64;
    (0..steps)
        .into_par_iter()
        .map(|m| {
            let (a, b) = (path.slices[m].samples(), path.slices[m + 1].samples());
            let mid = midpoint(a, b, grid, m, steps)?;
            let v = TangentField::new(grid, b.combine(inv_dt, a, -inv_dt))?;
            eval_metric(cfg, &mid, &v, &v)
        })
        .collect()
}

/// `dt * sum_m G_{c_{m+1/2}}(v_m, v_m)` with midpoint curves and forward differences.
pub fn path_energy(cfg: &MetricConfig, path: &CurvePath) -> Result<f64> {
    let g = interval_values(cfg, path)?;
    Ok(path.dt() * g.iter().sum::<f64>())
}

/// `dt * sum_m sqrt(G_{c_{m+1/2}}(v_m, v_m))`.
pub fn path_length(cfg: &MetricConfig, path: &CurvePath) -> Result<f64> {
    let g = interval_values(cfg, path)?;
    Ok(path.dt() * g.iter().map(|x| x.max(0.0).sqrt()).sum::<f64>())
}

/// `M_k = int |D_s^k c|^2 ds` for `k = 0..=n`.
pub fn moments(c0: &DiscreteCurve, n: usize) -> Result<Vec<f64>> {
    let m = term_integrals(c0, &c0.as_field(), n)?;
    if let Some(k) = m.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Solver(format!("moment M_{k} = {} is not positive", m[k])));
    }
    Ok(m)
}

/// Relative tolerance of [`radial_path_length`].
pub const RADIAL_REL_TOL: f64 = 1e-8;

/// Length of `r -> r c0` for `r` between `r_from` and `r_to`, from the moments of `c0`.
pub fn radial_path_length(cfg: &MetricConfig, c0: &DiscreteCurve, r_from: f64, r_to: f64) -> Result<f64> {
    if !(r_from > 0.0 && r_to > 0.0) || !r_from.is_finite() || !r_to.is_finite() {
        return Err(invalid(format!(
            "radial limits must be positive, got {r_from} and {r_to}"
        )));
    }
    if r_from == r_to {
        return Ok(0.0);
    }
    let m = moments(c0, cfg.order())?;
    let ell0 = curve_length(c0);
    let f = |r: f64| {
        cfg.active_terms()
            .map(|t| t.value(r * ell0) * r.powi(1 - 2 * t.k as i32) * m[t.k])
            .sum::<f64>()
            .sqrt()
    };
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: RADIAL_REL_TOL,
        max_intervals: 5000,
    };
    let (a, b) = if r_from < r_to { (r_from, r_to) } else { (r_to, r_from) };
    match integrate(f, a, b, opts) {
        Ok(r) => Ok(r.value),
        Err(Error::Quadrature(msg)) => Err(Error::Divergent(format!(
            "radial length integrand is not integrable on [{a}, {b}]: {msg}"
        ))),
        Err(e) => Err(e),
    }
}

/// `F(c, v) = G_c(v, v)` with its gradients in `c` and `v`.
struct IntervalGrad {
    value: f64,
    dc: Samples,
    dv: Samples,
}

fn interval_gradient(cfg: &MetricConfig, c: &DiscreteCurve, v: &Samples) -> Result<IntervalGrad> {
    let grid = *c.grid();
    let w = grid.weight();
    let s = c.speed();
    let n = cfg.order();
    let ell = curve_length(c);
    let p = derivative(c.samples(), &grid)?;
    let u = arc_derivatives(c, v, n)?;
    let q: Vec<f64> = u.iter().map(|uk| sq_l2_ds(c, uk)).collect();

    let len = c.len();
    let dim = c.dim();
    let mut s_bar = vec![0.0; len];
    let mut u_bar: Vec<Samples> = (0..=n).map(|_| Samples::zeros(len, dim)).collect();
    let mut value = 0.0;
    let mut l_bar = 0.0;
    for term in cfg.active_terms() {
        let k = term.k;
        let a = term.value(ell);
        value += a * q[k];
        l_bar += term.derivative(ell) * q[k];
        let ub = u_bar[k].as_mut_slice();
        for j in 0..len {
            let row = u[k].point(j);
            for i in 0..dim {
                ub[j * dim + i] += 2.0 * w * a * s[j] * row[i];
            }
            s_bar[j] += w * a * dot(row, row);
        }
    }
    s_bar.iter_mut().for_each(|x| *x += w * l_bar);

    for k in (1..=n).rev() {
        // u_k = D u_{k-1} / s
        let ub = std::mem::replace(&mut u_bar[k], Samples::zeros(0, dim));
        let mut qb = ub.clone();
        for j in 0..len {
            s_bar[j] -= dot(ub.point(j), u[k].point(j)) / s[j];
            qb.point_mut(j).iter_mut().for_each(|x| *x /= s[j]);
        }
        let back = derivative_transpose(&qb, &grid)?;
        u_bar[k - 1] = u_bar[k - 1].combine(1.0, &back, 1.0);
    }
    let dv = std::mem::replace(&mut u_bar[0], Samples::zeros(0, dim));

    let mut pb = p;
    for j in 0..len {
        let f = s_bar[j] / s[j];
        pb.point_mut(j).iter_mut().for_each(|x| *x *= f);
    }
    let dc = derivative_transpose(&pb, &grid)?;
    Ok(IntervalGrad { value, dc, dv })
}

/// Energy of `path` and its gradient with respect to the interior slices `1..T`.
fn energy_gradient(cfg: &MetricConfig, slices: &[Samples], grid: Grid) -> Result<(f64, Vec<Samples>)> {
    let steps = slices.len() - 1;
    let dt = 1.0 / steps as f64;
    let inv_dt = steps as f64;
    let parts: Vec<IntervalGrad> = (0..steps)
        .into_par_iter()
        .map(|m| {
            let mid = midpoint(&slices[m], &slices[m + 1], grid, m, steps)?;
            let v = slices[m + 1].combine(inv_dt, &slices[m], -inv_dt);
            interval_gradient(cfg, &mid, &v)
        })
        .collect::<Result<_>>()?;
    let energy = dt * parts.iter().map(|p| p.value).sum::<f64>();
    let grads = (1..steps)
        .map(|i| {
            // c_i enters interval i-1 as the right end and interval i as the left end.
            let dc = parts[i - 1].dc.combine(0.5 * dt, &parts[i].dc, 0.5 * dt);
            let dv = parts[i - 1].dv.combine(1.0, &parts[i].dv, -1.0);
            dc.combine(1.0, &dv, 1.0)
        })
        .collect();
    Ok((energy, grads))
}

/// Energy terms of the two intervals adjacent to slice `i`.
fn local_energy(cfg: &MetricConfig, slices: &[Samples], grid: Grid, i: usize) -> Result<f64> {
    let steps = slices.len() - 1;
    let inv_dt = steps as f64;
    let mut e = 0.0;
    for m in [i - 1, i] {
        let mid = midpoint(&slices[m], &slices[m + 1], grid, m, steps)?;
        let v = TangentField::new(grid, slices[m + 1].combine(inv_dt, &slices[m], -inv_dt))?;
        e += eval_metric(cfg, &mid, &v, &v)?;
    }
    Ok(e / steps as f64)
}

/// Step of the central differences in [`gradient_check`].
pub const FD_STEP: f64 = 1e-6;
/// Number of coordinates sampled by [`gradient_check`].
pub const FD_SAMPLES: usize = 20;

/// Largest relative deviation between the analytic energy gradient and
/// five-point central differences on randomly chosen interior coordinates.
///
/// Deviations are measured against the sup norm of the full gradient, so
/// coordinates where the gradient nearly vanishes do not blow up the ratio.
/// When the analytic gradient is identically zero the largest difference
/// quotient is reported instead.
pub fn gradient_check<R: Rng + ?Sized>(cfg: &MetricConfig, path: &CurvePath, rng: &mut R) -> Result<f64> {
    let steps = path.steps();
    if steps < 2 {
        return Ok(0.0);
    }
    let grid = *path.grid();
    let mut slices: Vec<Samples> = path.slices.iter().map(|c| c.samples().clone()).collect();
    let (_, grads) = energy_gradient(cfg, &slices, grid)?;
    let scale = grads.iter().map(|g| g.max_abs()).fold(0.0, f64::max);
    let per_slice = grid.len() * path.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..FD_SAMPLES {
        let i = rng.gen_range(1..steps);
        let idx = rng.gen_range(0..per_slice);
        let x0 = slices[i].as_slice()[idx];
        let mut at = |k: f64| -> Result<f64> {
            slices[i].as_mut_slice()[idx] = x0 + k * FD_STEP;
            let e = local_energy(cfg, &slices, grid, i);
            slices[i].as_mut_slice()[idx] = x0;
            e
        };
        let (e1, e_1, e2, e_2) = (at(1.0)?, at(-1.0)?, at(2.0)?, at(-2.0)?);
        let fd = (8.0 * (e1 - e_1) - (e2 - e_2)) / (12.0 * FD_STEP);
        let an = grads[i - 1].as_slice()[idx];
        let dev = if scale > 0.0 {
            (an - fd).abs() / an.abs().max(fd.abs()).max(scale)
        } else {
            fd.abs()
        };
        worst = worst.max(dev);
    }
    Ok(worst)
}

/// How the solver builds its starting path.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Initializer {
    #[default]
    Linear,
    Provided(CurvePath),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Sup norm of the energy gradient at which the solver stops.
    pub grad_tol: f64,
    pub steps: usize,
    pub initializer: Initializer,
    /// Number of stored correction pairs.
    pub memory: usize,
    pub check_seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 5000,
            grad_tol: 1e-9,
            steps: 32,
            initializer: Initializer::Linear,
            memory: 10,
            check_seed: 0,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be >= 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(invalid("grad_tol must be positive"));
        }
        if self.steps == 0 {
            return Err(invalid("T must be >= 1"));
        }
        Ok(())
    }
}

pub const ARMIJO_C1: f64 = 1e-4;
pub const MAX_HALVINGS: usize = 60;
/// Interior slices may not slow below this fraction of the initial mean speed.
pub const SPEED_FLOOR: f64 = 1e-6;
/// Gradient check threshold enforced when the solver starts.
pub const GRADIENT_TRUST: f64 = 1e-6;

/// Accepted steps in a row whose relative energy decrease is at rounding level
/// before the solver gives up on reaching `grad_tol`.
pub const STALL_STEPS: usize = 5;
const STALL_REL_DECREASE: f64 = 4.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
    /// The energy stopped decreasing above rounding level.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct GeodesicResult {
    pub path: CurvePath,
    pub energy: f64,
    pub length: f64,
    pub sqrt_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub gradient_norm_final: f64,
    pub gradient_check: f64,
    /// Energy of the initial path followed by every accepted iterate.
    pub energy_trace: Vec<f64>,
    /// Length and `sqrt(energy)` differ by more than 1%.
    pub non_constant_speed: bool,
}

/// `(dt/2) A^{-1/2} (K^{-1} x I) A^{-1/2}`, where `K` is the discrete time
/// Laplacian and `A` the metric of each slice frozen at constant speed.
struct Preconditioner {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    weights: Vec<Vec<f64>>,
    dim: usize,
    dt: f64,
}

impl Preconditioner {
    fn new(cfg: &MetricConfig, path: &CurvePath) -> Self {
        let grid = *path.grid();
        let n = grid.len();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let w = grid.weight();
        let weights = (1..path.steps())
            .map(|i| {
                let ell = curve_length(path.slice(i));
                let sbar = ell / (2.0 * std::f64::consts::PI);
                (0..n)
                    .map(|m| {
                        let freq = m.min(n - m) as f64;
                        let lam2 = grid.derivative_symbol(freq).powi(2);
                        let sigma: f64 = cfg
                            .active_terms()
                            .map(|t| w * t.value(ell) * sbar.powi(1 - 2 * t.k as i32) * lam2.powi(t.k as i32))
                            .sum();
                        1.0 / (sigma.sqrt() * n as f64).max(f64::MIN_POSITIVE)
                    })
                    .collect()
            })
            .collect();
        Preconditioner {
            fwd,
            inv,
            weights,
            dim: path.dim(),
            dt: path.dt(),
        }
    }

    fn spatial(&self, x: &mut [f64], slice: usize) {
        let n = self.fwd.len();
        let d = self.dim;
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for i in 0..d {
            for j in 0..n {
                buf[j] = Complex::new(x[j * d + i], 0.0);
            }
            self.fwd.process(&mut buf);
            for (b, wt) in buf.iter_mut().zip(&self.weights[slice]) {
                *b *= *wt;
            }
            self.inv.process(&mut buf);
            for j in 0..n {
                x[j * d + i] = buf[j].re;
            }
        }
    }

    fn apply(&self, g: &[f64]) -> Vec<f64> {
        let slices = self.weights.len();
        let block = g.len() / slices;
        let mut x = g.to_vec();
        x.par_chunks_mut(block)
            .enumerate()
            .for_each(|(i, c)| self.spatial(c, i));
        // Thomas algorithm for tridiag(-1, 2, -1) along time, one column per coordinate.
        let mut cp = vec![0.0; slices];
        cp[0] = -0.5;
        for i in 1..slices {
            cp[i] = -1.0 / (2.0 + cp[i - 1]);
        }
        for col in 0..block {
            let mut prev = 0.0;
            for i in 0..slices {
                let denom = if i == 0 { 2.0 } else { 2.0 + cp[i - 1] };
                let v = (x[i * block + col] + prev) / denom;
                x[i * block + col] = v;
                prev = v;
            }
            for i in (0..slices - 1).rev() {
                x[i * block + col] -= cp[i] * x[(i + 1) * block + col];
            }
        }
        let half_dt = 0.5 * self.dt;
        x.iter_mut().for_each(|v| *v *= half_dt);
        x.par_chunks_mut(block)
            .enumerate()
            .for_each(|(i, c)| self.spatial(c, i));
        x
    }
}

fn flatten(slices: &[Samples]) -> Vec<f64> {
    slices.iter().flat_map(|s| s.as_slice().iter().copied()).collect()
}

struct Problem<'a> {
    cfg: &'a MetricConfig,
    grid: Grid,
    dim: usize,
    first: Samples,
    last: Samples,
    floor: f64,
}

impl Problem<'_> {
    fn slices(&self, x: &[f64]) -> Vec<Samples> {
        let block = self.grid.len() * self.dim;
        let mut out = Vec::with_capacity(x.len() / block + 2);
        out.push(self.first.clone());
        for c in x.chunks(block) {
            out.push(Samples::new(self.dim, c.to_vec()).expect("block size matches"));
        }
        out.push(self.last.clone());
        out
    }

    fn check_speed(&self, slices: &[Samples]) -> Result<()> {
        let steps = slices.len() - 1;
        for (m, s) in slices.iter().enumerate().take(steps).skip(1) {
            let sp = crate::curve::speed_of(&self.grid, s)?;
            if sp.iter().any(|&v| !(v >= self.floor)) {
                return Err(Error::SliceNotImmersed {
                    slice: m,
                    t: m as f64 / steps as f64,
                });
            }
        }
        Ok(())
    }

    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let slices = self.slices(x);
        self.check_speed(&slices)?;
        let (e, g) = energy_gradient(self.cfg, &slices, self.grid)?;
        Ok((e, flatten(&g)))
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes the discrete path energy between `c0` and `c1` with fixed endpoints.
pub fn geodesic_bvp(
    cfg: &MetricConfig,
    c0: &DiscreteCurve,
    c1: &DiscreteCurve,
    opts: &SolverOptions,
) -> Result<GeodesicResult> {
    opts.validate()?;
    same_space(c0, c1)?;
    let init = match &opts.initializer {
        Initializer::Linear => linear_path(c0, c1, opts.steps)?,
        Initializer::Provided(p) => {
            if p.start() != c0 || p.end() != c1 {
                return Err(invalid("provided path does not join the given endpoints"));
            }
            p.clone()
        }
    };
    minimize(cfg, init, opts)
}

/// Largest `|h'|` of the displacement in [`perturb_interior`], relative to the mean speed.
const PROBE_AMPLITUDE: f64 = 0.05;

/// Copy of `path` with small smooth random displacements of the interior slices.
///
/// Near a critical point the energy gradient is tiny and central differences
/// drown in cancellation noise, so the solver certifies its gradient here.
fn perturb_interior<R: Rng + ?Sized>(path: &CurvePath, rng: &mut R) -> Result<CurvePath> {
    let grid = *path.grid();
    let mut slices = path.slices.clone();
    let last = slices.len() - 1;
    for c in slices.iter_mut().take(last).skip(1) {
        let h = random_field(rng, grid, c.dim());
        let mean = c.speed().iter().sum::<f64>() / c.len() as f64;
        let slope = derivative(h.values(), &grid)?.norms().into_iter().fold(0.0, f64::max);
        let amp = PROBE_AMPLITUDE * mean / slope.max(f64::MIN_POSITIVE);
        *c = DiscreteCurve::new(grid, c.samples().combine(1.0, h.values(), amp))?;
    }
    CurvePath::new(slices)
}

fn minimize(cfg: &MetricConfig, init: CurvePath, opts: &SolverOptions) -> Result<GeodesicResult> {
    let grid = *init.grid();
    let dim = init.dim();
    let steps = init.steps();
    let mean_speed = init
        .slices
        .iter()
        .map(|c| c.speed().iter().sum::<f64>() / c.len() as f64)
        .fold(f64::INFINITY, f64::min);
    let problem = Problem {
        cfg,
        grid,
        dim,
        first: init.start().samples().clone(),
        last: init.end().samples().clone(),
        floor: SPEED_FLOOR * mean_speed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.check_seed);
    let probe = perturb_interior(&init, &mut rng)?;
    let check = gradient_check(cfg, &probe, &mut rng)?;
    if check > GRADIENT_TRUST {
        return Err(Error::Solver(format!(
            "analytic gradient disagrees with finite differences (deviation {check:e})"
        )));
    }

    let mut x = flatten(
        &init.slices[1..steps]
            .iter()
            .map(|c| c.samples().clone())
            .collect::<Vec<_>>(),
    );
    let (mut energy, mut g) = problem.eval(&x)?;
    let mut trace = vec![energy];
    let mut iterations = 0;
    let mut converged = sup(&g) <= opts.grad_tol;
    let mut stop = if converged {
        StopReason::GradientTolerance
    } else {
        StopReason::MaxIterations
    };
    let mut stalled_steps = 0;
    if steps >= 2 && !converged {
        let pre = Preconditioner::new(cfg, &init);
        let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
        while iterations < opts.max_iters {
            let mut dir = two_loop(&pre, &memory, &g);
            let mut slope = dot(&g, &dir);
            if !(slope < 0.0) {
                memory.clear();
                dir = two_loop(&pre, &memory, &g);
                slope = dot(&g, &dir);
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
                if let Ok((e, gt)) = problem.eval(&trial) {
                    if e <= energy + ARMIJO_C1 * alpha * slope {
                        accepted = Some((trial, e, gt));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((xn, en, gn)) = accepted else {
                if memory.is_empty() {
                    stop = StopReason::LineSearchFailed;
                    break;
                }
                memory.clear();
                continue;
            };
            assert!(en <= energy, "accepted step increased the energy");
            if energy - en <= STALL_REL_DECREASE * energy.abs() {
                stalled_steps += 1;
            } else {
                stalled_steps = 0;
            }
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                memory.push_back((s, y, sy));
                if memory.len() > opts.memory {
                    memory.pop_front();
                }
            }
            x = xn;
            energy = en;
            g = gn;
            trace.push(energy);
            iterations += 1;
            if sup(&g) <= opts.grad_tol {
                converged = true;
                stop = StopReason::GradientTolerance;
                break;
            }
            if stalled_steps >= STALL_STEPS {
                stop = StopReason::Stalled;
                break;
            }
        }
    }

    let slices = problem.slices(&x);
    let mut curves = Vec::with_capacity(steps + 1);
    curves.push(init.start().clone());
    for (m, s) in slices.into_iter().enumerate().take(steps).skip(1) {
        curves.push(DiscreteCurve::new(grid, s).map_err(|_| Error::SliceNotImmersed {
            slice: m,
            t: m as f64 / steps as f64,
        })?);
    }
    curves.push(init.end().clone());
    let path = CurvePath { slices: curves };
    let length = path_length(cfg, &path)?;
    let sqrt_energy = energy.sqrt();
    let non_constant_speed = sqrt_energy > 0.0 && (length - sqrt_energy).abs() > 0.01 * sqrt_energy;
    Ok(GeodesicResult {
        path,
        energy,
        length,
        sqrt_energy,
        iterations,
        converged,
        stop,
        gradient_norm_final: sup(&g),
        gradient_check: check,
        energy_trace: trace,
        non_constant_speed,
    })
}

/// L-BFGS two-loop recursion with the preconditioner as initial inverse Hessian.
fn two_loop(pre: &Preconditioner, memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, sy) in memory.iter().rev() {
        let a = dot(s, &q) / sy;
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    let mut r = pre.apply(&q);
    if let Some((_, y, sy)) = memory.back() {
        let py = pre.apply(y);
        let gamma = sy / dot(y, &py);
        r.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, sy), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = dot(y, &r) / sy;
        r.iter_mut().zip(s).for_each(|(ri, si)| *ri += (a - b) * si);
    }
    r.iter_mut().for_each(|v| *v = -*v);
    r
}

/// One row of [`length_bound_evidence`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthBoundRow {
    pub slice: usize,
    pub length_of_curve: f64,
    pub w_shift: f64,
    pub path_length_so_far: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Slack on the bound checked by [`length_bound_evidence`].
pub const LENGTH_BOUND_SLACK: f64 = 0.1;

/// Constant `C` in `|d W(l_c)| <= C sqrt(G_c(h, h))`.
pub fn length_bound_constant(cfg: &MetricConfig) -> f64 {
    cfg.active_terms()
        .filter(|t| t.k >= 1)
        .map(|t| 4f64.powi(1 - t.k as i32))
        .sum::<f64>()
        .sqrt()
}

/// Checks `|W(l_{c_m}) - W(l_{c_0})| <= C (1 + slack) Len(c|[0, t_m])` along a path.
pub fn length_bound_evidence(cfg: &MetricConfig, path: &CurvePath) -> Result<Vec<LengthBoundRow>> {
    let g = interval_values(cfg, path)?;
    let c = length_bound_constant(cfg);
    let w0 = w_eval(cfg, curve_length(path.start()))?;
    let mut so_far = 0.0;
    let mut rows = Vec::with_capacity(path.steps() + 1);
    for (m, curve) in path.slices.iter().enumerate() {
        if m > 0 {
            so_far += path.dt() * g[m - 1].max(0.0).sqrt();
        }
        let ell = curve_length(curve);
        let shift = (w_eval(cfg, ell)? - w0).abs();
        let bound = c * (1.0 + LENGTH_BOUND_SLACK) * so_far;
        rows.push(LengthBoundRow {
            slice: m,
            length_of_curve: ell,
            w_shift: shift,
            path_length_so_far: so_far,
            bound,
            holds: shift <= bound + 1e-12,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSample {
    pub log_speed_change: f64,
    pub distance_estimate: f64,
    /// `None` when both curves coincide.
    pub ratio: Option<f64>,
}

/// `||log|c1'| - log|c0'|||_inf / Len(linear path)` for each pair.
pub fn lipschitz_probe_log_speed(
    cfg: &MetricConfig,
    pairs: &[(DiscreteCurve, DiscreteCurve)],
    steps: usize,
) -> Result<Vec<LipschitzSample>> {
    pairs
        .iter()
        .map(|(a, b)| {
            let path = linear_path(a, b, steps)?;
            let dist = path_length(cfg, &path)?;
            let num = a
                .speed()
                .iter()
                .zip(b.speed())
                .map(|(x, y)| (y.ln() - x.ln()).abs())
                .fold(0.0, f64::max);
            let ratio = if dist > 0.0 { Some(num / dist) } else { None };
            Ok(LipschitzSample {
                log_speed_change: num,
                distance_estimate: dist,
                ratio,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::make_circle;
    use crate::metric::CoefficientTerm;
    use crate::random::{random_curve, random_field};

    fn grid(n: usize) -> Grid {
        Grid::with_points(n).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn a0_a2() -> MetricConfig {
        MetricConfig::constant_endpoints(2).unwrap()
    }

    fn perturbed(c: &DiscreteCurve, rng: &mut ChaCha8Rng, amp: f64) -> DiscreteCurve {
        let h = random_field(rng, *c.grid(), c.dim());
        DiscreteCurve::new(*c.grid(), c.samples().combine(1.0, h.values(), amp)).unwrap()
    }

    #[test]
    fn linear_path_between_circles() {
        let g = grid(64);
        let a = make_circle(1.0, &[0.0, 0.0], g).unwrap();
        let b = make_circle(2.0, &[0.0, 0.0], g).unwrap();
        let p = linear_path(&a, &b, 4).unwrap();
        let mid = make_circle(1.5, &[0.0, 0.0], g).unwrap();
        let diff = p.slice(2).samples().combine(1.0, mid.samples(), -1.0).max_abs();
        assert!(diff < 1e-15);
        let same = linear_path(&a, &a, 3).unwrap();
        assert!(same.slices().iter().all(|c| c == &a));
    }

    #[test]
    fn collapsing_midpoint_is_named() {
        // c and its point reflection average to the constant zero curve.
        let g = grid(32);
        let a = make_circle(0.1, &[0.0, 0.0], g).unwrap();
        let b = DiscreteCurve::new(g, a.samples().scaled(-1.0)).unwrap();
        match linear_path(&a, &b, 4) {
            Err(Error::SliceNotImmersed { slice, t }) => {
                assert_eq!(slice, 2);
                assert_eq!(t, 0.5);
            }
            other => panic!("expected a slice error, got {other:?}"),
        }
    }

    #[test]
    fn translation_energy_is_exact() {
        let g = grid(64);
        let c0 = random_curve(&mut ChaCha8Rng::seed_from_u64(5), g, 2).unwrap();
        let v = [0.3, -1.1];
        let c1 = c0.transformed(&[1.0, 0.0, 0.0, 1.0], &v).unwrap();
        let cfg = a0_a2();
        let vv = v[0] * v[0] + v[1] * v[1];
        let ell = curve_length(&c0);
        for t in [1, 3, 8] {
            let p = linear_path(&c0, &c1, t).unwrap();
            assert!(rel(path_energy(&cfg, &p).unwrap(), ell * vv) < 1e-12);
            assert!(rel(path_length(&cfg, &p).unwrap(), (ell * vv).sqrt()) < 1e-12);
        }
    }

    #[test]
    fn constant_path_has_zero_energy() {
        let c = make_circle(1.0, &[0.0, 0.0], grid(32)).unwrap();
        let p = linear_path(&c, &c, 5).unwrap();
        assert_eq!(path_energy(&a0_a2(), &p).unwrap(), 0.0);
        assert_eq!(path_length(&a0_a2(), &p).unwrap(), 0.0);
    }

    #[test]
    fn cauchy_schwarz_and_reversal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = grid(64);
        let cfg = MetricConfig::two_term(-3.0, 0.5).unwrap();
        for _ in 0..5 {
            let a = random_curve(&mut rng, g, 2).unwrap();
            let b = perturbed(&a, &mut rng, 0.2);
            let mut p = linear_path(&a, &b, 6).unwrap();
            p.slices[3] = perturbed(&p.slices[3], &mut rng, 0.05);
            let e = path_energy(&cfg, &p).unwrap();
            let l = path_length(&cfg, &p).unwrap();
            assert!(l * l <= e * (1.0 + 1e-12));
            assert!(rel(path_energy(&cfg, &p.reverse()).unwrap(), e) < 1e-13);
        }
    }

    #[test]
    fn energy_refines_at_second_order() {
        let g = grid(128);
        let c0 = make_circle(1.0, &[0.0, 0.0], g).unwrap();
        let cfg = a0_a2();
        let e = |t: usize| {
            // rho(t) = exp(t ln 2) sampled at T points is a fixed smooth path.
            let slices = (0..=t)
                .map(|m| c0.scaled((m as f64 / t as f64 * 2f64.ln()).exp()).unwrap())
                .collect();
            path_energy(&cfg, &CurvePath::new(slices).unwrap()).unwrap()
        };
        let (e1, e2, e4) = (e(25), e(50), e(100));
        let ratio = (e1 - e2) / (e2 - e4);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn moments_of_circles() {
        let g = grid(512);
        for r in [1.0, 0.5, 3.0] {
            let c = make_circle(r, &[0.0, 0.0], g).unwrap();
            let m = moments(&c, 3).unwrap();
            for (k, mk) in m.iter().enumerate() {
                let exact = 2.0 * std::f64::consts::PI * r.powi(3 - 2 * k as i32);
                assert!(rel(*mk, exact) < 1e-8, "r={r} k={k}");
            }
        }
        let a = make_circle(1.0, &[0.0, 0.0], g).unwrap();
        let b = make_circle(1.0, &[4.0, 1.0], g).unwrap();
        let (ma, mb) = (moments(&a, 2).unwrap(), moments(&b, 2).unwrap());
        assert!(mb[0] > 10.0 * ma[0]);
        assert!(rel(mb[1], ma[1]) < 1e-12 && rel(mb[2], ma[2]) < 1e-12);
    }

    #[test]
    fn radial_length_oracle() {
        let c = make_circle(1.0, &[0.0, 0.0], grid(512)).unwrap();
        let l = radial_path_length(&a0_a2(), &c, 1.0, 2.0).unwrap();
        assert!(rel(l, 3.430_967_646_798_846_4) < 1e-8);
        assert_eq!(radial_path_length(&a0_a2(), &c, 2.0, 2.0).unwrap(), 0.0);
        assert!(rel(radial_path_length(&a0_a2(), &c, 2.0, 1.0).unwrap(), l) < 1e-14);
        assert!(radial_path_length(&a0_a2(), &c, 0.0, 1.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = grid(32);
        let cfg = MetricConfig::new(
            3,
            vec![
                CoefficientTerm::power(0, 1.0, -3.0),
                CoefficientTerm::power(1, 0.5, 1.5),
                CoefficientTerm::power(3, 1.0, 0.7),
            ],
        )
        .unwrap();
        let a = random_curve(&mut rng, g, 2).unwrap();
        let b = perturbed(&a, &mut rng, 0.3);
        let mut p = linear_path(&a, &b, 5).unwrap();
        p.slices[2] = perturbed(&p.slices[2], &mut rng, 0.05);
        let dev = gradient_check(&cfg, &p, &mut rng).unwrap();
        assert!(dev <= 1e-6, "deviation {dev:e}");
    }

    #[test]
    fn translation_gradient_is_tight() {
        let g = grid(16);
        let c0 = make_circle(1.0, &[0.0, 0.0], g).unwrap();
        let c1 = c0.transformed(&[1.0, 0.0, 0.0, 1.0], &[0.5, 0.2]).unwrap();
        let cfg = MetricConfig::new(
            2,
            vec![CoefficientTerm::constant(0, 1.0), CoefficientTerm::constant(2, 0.3)],
        )
        .unwrap();
        let p = linear_path(&c0, &c1, 4).unwrap();
        let dev = gradient_check(&cfg, &p, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(dev <= 1e-8, "deviation {dev:e}");
    }

    #[test]
    fn constant_path_gradient_vanishes() {
        let c = make_circle(1.0, &[0.0, 0.0], grid(32)).unwrap();
        let p = linear_path(&c, &c, 4).unwrap();
        let slices: Vec<Samples> = p.slices().iter().map(|c| c.samples().clone()).collect();
        let (e, grads) = energy_gradient(&a0_a2(), &slices, *p.grid()).unwrap();
        assert_eq!(e, 0.0);
        assert!(grads.iter().all(|g| g.max_abs() == 0.0));
    }

    #[test]
    fn solver_on_identical_endpoints() {
        let c = make_circle(1.0, &[0.0, 0.0], grid(32)).unwrap();
        let r = geodesic_bvp(&a0_a2(), &c, &c, &SolverOptions::default()).unwrap();
        assert_eq!(r.energy, 0.0);
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
    }

    #[test]
    fn solver_lowers_energy_and_pins_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = grid(32);
        let a = random_curve(&mut rng, g, 2).unwrap();
        let b = perturbed(&a, &mut rng, 0.3);
        let opts = SolverOptions {
            steps: 6,
            max_iters: 300,
            ..SolverOptions::default()
        };
        let cfg = a0_a2();
        let r = geodesic_bvp(&cfg, &a, &b, &opts).unwrap();
        assert!(r.energy_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.energy <= path_energy(&cfg, &linear_path(&a, &b, 6).unwrap()).unwrap());
        assert_eq!(r.path.start(), &a);
        assert_eq!(r.path.end(), &b);
        assert!(r.length * r.length <= r.energy * (1.0 + 1e-10));
        let rows = length_bound_evidence(&cfg, &r.path).unwrap();
        assert!(rows.iter().all(|row| row.holds));
    }

    #[test]
    fn lipschitz_probe_excludes_identical_pairs() {
        let c = make_circle(1.0, &[0.0, 0.0], grid(64)).unwrap();
        let d = c.scaled(1.1).unwrap();
        let cfg = crate::metric::scale_invariant_profile(2, &[1.0, 0.0, 1.0]).unwrap();
        let out = lipschitz_probe_log_speed(&cfg, &[(c.clone(), c.clone()), (c, d)], 8).unwrap();
        assert!(out[0].ratio.is_none());
        let r = out[1].ratio.unwrap();
        assert!(r.is_finite() && r > 0.0);
    }

    #[test]
    fn path_needs_matching_slices() {
        let a = make_circle(1.0, &[0.0, 0.0], grid(32)).unwrap();
        let b = make_circle(1.0, &[0.0, 0.0], grid(64)).unwrap();
        assert!(CurvePath::new(vec![a.clone(), b.clone()]).is_err());
        assert!(linear_path(&a, &b, 2).is_err());
        assert!(CurvePath::new(vec![a]).is_err());
    }
}
