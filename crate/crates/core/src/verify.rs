//! Seeded invariant suite over every module, reported as a pass/fail table.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::completeness::{analyze, classify_power_law, numeric_integral_evidence, w_eval, End, Truth};
use crate::counterexample::{build_sequence, pointwise_bounds_check, verify_sequence, Case, CounterexampleParams};
use crate::curve::{
    arc_derivative, arc_speed, curve_length, integrate_ds, make_circle, norm, sup_norm, DiscreteCurve, NormKind,
    TangentField,
};
use crate::error::{invalid, Result};
use crate::grid::{derivative, Grid, Samples};
use crate::metric::{eval_metric, scale_invariant_profile, term_integrals, CoefficientTerm, MetricConfig};
use crate::paths::{
    geodesic_bvp, gradient_check, length_bound_evidence, linear_path, path_energy, path_length, radial_path,
    radial_path_length, CurvePath, SolverOptions,
};
use crate::random::{random_curve, random_field, random_rotation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    Within(f64, f64),
}

impl Bound {
    fn admits(&self, v: f64) -> bool {
        match *self {
            Bound::AtMost(b) => v <= b,
            Bound::AtLeast(b) => v >= b,
            Bound::Within(lo, hi) => v >= lo && v <= hi,
        }
    }

    fn describe(&self) -> String {
        match *self {
            Bound::AtMost(b) => format!("<= {b:.3e}"),
            Bound::AtLeast(b) => format!(">= {b:.3e}"),
            Bound::Within(lo, hi) => format!("in [{lo:.3e}, {hi:.3e}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub module: String,
    pub check: String,
    pub instances: usize,
    /// Worst observed value of the checked quantity.
    pub value: f64,
    pub bound: Bound,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub instances: usize,
    pub rows: Vec<CheckRow>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.passed).count()
    }

    /// Fixed-width text table, one row per check.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:<58} {:>6} {:>12}  {:<26} status",
            "module", "check", "n", "worst", "bound"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<16} {:<58} {:>6} {:>12.4e}  {:<26} {}",
                r.module,
                r.check,
                r.instances,
                r.value,
                r.bound.describe(),
                if r.passed { "PASS" } else { "FAIL" }
            );
        }
        let _ = writeln!(
            s,
            "{} checks, {} failed, seed {}, instances {}",
            self.rows.len(),
            self.failures(),
            self.seed,
            self.instances
        );
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random instances per randomized check.
    pub instances: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            instances: 100,
        }
    }
}

struct Suite {
    opts: VerifyOptions,
    rows: Vec<CheckRow>,
    stream: u64,
}

impl Suite {
    /// Independent substream per check so that checks do not share draws.
    fn rng(&mut self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.opts.seed);
        r.set_stream(self.stream);
        self.stream += 1;
        r
    }

    fn push(&mut self, module: &str, check: &str, instances: usize, value: f64, bound: Bound) {
        self.rows.push(CheckRow {
            module: module.to_string(),
            check: check.to_string(),
            instances,
            value,
            passed: value.is_finite() && bound.admits(value),
            bound,
        });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

fn sup_rel(a: &TangentField, b: &TangentField) -> f64 {
    let diff = a.combine(1.0, b, -1.0);
    let scale = sup_norm(a).max(sup_norm(b));
    if scale == 0.0 {
        0.0
    } else {
        sup_norm(&diff) / scale
    }
}

fn grid(n: usize) -> Grid {
    Grid::with_points(n).expect("valid grid size")
}

/// Runs every check; numerical errors inside a check abort the run.
pub fn run(opts: VerifyOptions) -> Result<VerifyReport> {
    if opts.instances == 0 {
        return Err(invalid("instances must be >= 1"));
    }
    let mut s = Suite {
        opts,
        rows: Vec::new(),
        stream: 0,
    };
    curve_core(&mut s)?;
    metric(&mut s)?;
    completeness(&mut s)?;
    paths(&mut s)?;
    counterexample(&mut s)?;
    let passed = s.rows.iter().all(|r| r.passed);
    Ok(VerifyReport {
        seed: opts.seed,
        instances: opts.instances,
        rows: s.rows,
        passed,
    })
}

const CORE: &str = "curve-core";

/// Grid for the exact identities. Rounding of the transformed samples is
/// amplified by about `N / (2 pi m)` per difference pass, so finer grids only
/// measure that amplification.
pub const IDENTITY_POINTS: usize = 64;

fn curve_core(s: &mut Suite) -> Result<()> {
    let m = s.opts.instances;
    let g = grid(IDENTITY_POINTS);
    let mut rng = s.rng();
    let (mut len_err, mut weight_err, mut scale_lo, mut scale_hi, mut trans_err, mut rot_lo, mut rot_hi) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..m {
        let dim = 2 + i % 2;
        let c = random_curve(&mut rng, g, dim)?;
        let h = random_field(&mut rng, g, dim);

        len_err = len_err.max(rel(integrate_ds(&c, &vec![1.0; g.len()])?, curve_length(&c)));

        let sp = c.speed();
        let mut j = 0;
        let weighted = h.values().map_rows(|p| {
            let w = sp[j].sqrt();
            j += 1;
            p.iter().map(|x| x * w).collect()
        });
        let weighted = TangentField::new(g, weighted)?;
        weight_err = weight_err.max(rel(
            norm(&c, &weighted, NormKind::L2Dtheta)?,
            norm(&c, &h, NormKind::L2Ds)?,
        ));

        let rho: f64 = 10f64.powf(rng.gen_range(-1.0..1.0));
        let rc = c.scaled(rho)?;
        for k in 1..=4 {
            let lhs = arc_derivative(&rc, &h, k)?;
            let rhs = arc_derivative(&c, &h, k)?.scaled(rho.powi(-(k as i32)));
            let e = sup_rel(&lhs, &rhs);
            if k <= 3 {
                scale_lo = scale_lo.max(e);
            } else {
                scale_hi = scale_hi.max(e);
            }
        }

        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ident: Vec<f64> = (0..dim * dim)
            .map(|q| if q % (dim + 1) == 0 { 1.0 } else { 0.0 })
            .collect();
        let moved = c.transformed(&ident, &v)?;
        let a = arc_speed(&c)?;
        let b = arc_speed(&moved)?;
        trans_err = trans_err.max(a.iter().zip(&b).map(|(x, y)| rel(*x, *y)).fold(0.0, f64::max));

        let r = random_rotation(&mut rng, dim);
        let rc = c.transformed(&r, &vec![0.0; dim])?;
        let rh = h.rotated(&r);
        for k in 1..=4 {
            let lhs = arc_derivative(&rc, &rh, k)?;
            let rhs = arc_derivative(&c, &h, k)?.rotated(&r);
            let e = sup_rel(&lhs, &rhs);
            if k == 1 {
                rot_lo = rot_lo.max(e);
            } else {
                rot_hi = rot_hi.max(e);
            }
        }
    }
    s.push(
        CORE,
        "integrate_ds(c, 1) = curve_length(c)",
        m,
        len_err,
        Bound::AtMost(1e-13),
    );
    s.push(
        CORE,
        "||u sqrt|c'|||_L2(dtheta) = ||u||_L2(ds)",
        m,
        weight_err,
        Bound::AtMost(1e-13),
    );
    s.push(
        CORE,
        "D^k_{rho c} h = rho^-k D^k_c h, k <= 3",
        m,
        scale_lo,
        Bound::AtMost(1e-13),
    );
    s.push(
        CORE,
        "D^k_{rho c} h = rho^-k D^k_c h, k = 4",
        m,
        scale_hi,
        Bound::AtMost(1e-12),
    );
    s.push(
        CORE,
        "arc_speed(c + v) = arc_speed(c)",
        m,
        trans_err,
        Bound::AtMost(1e-13),
    );
    s.push(CORE, "D_{Rc}(Rh) = R D_c h", m, rot_lo, Bound::AtMost(1e-13));
    s.push(
        CORE,
        "D^k_{Rc}(Rh) = R D^k_c h, 2 <= k <= 4",
        m,
        rot_hi,
        Bound::AtMost(1e-12),
    );

    // Analytic curve and field for the refinement study.
    let curve = |t: f64| vec![2.0 * t.cos() + 0.3 * (2.0 * t).cos(), t.sin() + 0.2 * (3.0 * t).sin()];
    let dcurve = |t: f64| vec![-2.0 * t.sin() - 0.6 * (2.0 * t).sin(), t.cos() + 0.6 * (3.0 * t).cos()];
    let field = |t: f64| vec![(2.0 * t).sin(), t.cos()];
    let deriv_err = |n: usize| -> Result<f64> {
        let g = grid(n);
        let d = derivative(&Samples::from_fn(&g, 2, curve)?, &g)?;
        let exact = Samples::from_fn(&g, 2, dcurve)?;
        Ok(d.combine(1.0, &exact, -1.0).max_abs())
    };
    let ds_quantities = |n: usize| -> Result<(f64, f64)> {
        let g = grid(n);
        let c = DiscreteCurve::from_fn(g, 2, curve)?;
        let h = TangentField::from_fn(g, 2, field)?;
        Ok((curve_length(&c), term_integrals(&c, &h, 1)?[1]))
    };
    let (lref, qref) = ds_quantities(4096)?;
    let mut worst_ratio: Vec<f64> = Vec::new();
    for n in [64usize, 128] {
        worst_ratio.push(deriv_err(n)? / deriv_err(2 * n)?);
        let (l1, q1) = ds_quantities(n)?;
        let (l2, q2) = ds_quantities(2 * n)?;
        worst_ratio.push((l1 - lref).abs() / (l2 - lref).abs());
        worst_ratio.push((q1 - qref).abs() / (q2 - qref).abs());
    }
    let lo = worst_ratio.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = worst_ratio.iter().cloned().fold(0.0, f64::max);
    s.push(
        CORE,
        "N -> 2N error ratio (smallest), order 4",
        worst_ratio.len(),
        lo,
        Bound::Within(12.0, 20.0),
    );
    s.push(
        CORE,
        "N -> 2N error ratio (largest), order 4",
        worst_ratio.len(),
        hi,
        Bound::Within(12.0, 20.0),
    );

    poincare(s)
}

/// Slack on the three Poincare-type inequalities.
pub const POINCARE_SLACK: f64 = 1e-3;

fn poincare(s: &mut Suite) -> Result<()> {
    let m = s.opts.instances;
    let g = grid(512);
    let mut rng = s.rng();
    let (mut i_max, mut ii_max, mut iii_max) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..m {
        let c = random_curve(&mut rng, g, 2)?;
        let ell = curve_length(&c);
        for _ in 0..5 {
            let h = random_field(&mut rng, g, 2);
            let q = term_integrals(&c, &h, 4)?;
            let d1 = arc_derivative(&c, &h, 1)?;
            let sup = sup_norm(&d1);
            i_max = i_max.max(sup * sup / (ell / 4.0 * q[2]));
            ii_max = ii_max.max(q[1] / (ell * ell / 4.0 * q[2]));
            for n in 1..=4 {
                for k in 0..=n {
                    iii_max = iii_max.max(q[k] / (q[0] + q[n]));
                }
            }
        }
    }
    let b = Bound::AtMost(1.0 + POINCARE_SLACK);
    s.push(CORE, "||D_s h||_inf^2 <= (l/4) ||D_s^2 h||^2", 5 * m, i_max, b);
    s.push(CORE, "||D_s h||^2 <= (l^2/4) ||D_s^2 h||^2", 5 * m, ii_max, b);
    s.push(
        CORE,
        "||D_s^k h||^2 <= ||h||^2 + ||D_s^n h||^2, k <= n <= 4",
        5 * m,
        iii_max,
        b,
    );
    Ok(())
}

const METRIC: &str = "metric";

fn metric_configs() -> Result<Vec<MetricConfig>> {
    Ok(vec![
        MetricConfig::constant_endpoints(2)?,
        scale_invariant_profile(3, &[1.0, 0.5, 0.0, 2.0])?,
        MetricConfig::two_term(-3.0, 0.0)?,
        MetricConfig::new(
            4,
            vec![
                CoefficientTerm::power(0, 0.7, 1.0),
                CoefficientTerm::power(2, 1.3, -0.5),
                CoefficientTerm::constant(4, 0.4),
            ],
        )?,
    ])
}

fn metric(s: &mut Suite) -> Result<()> {
    let m = s.opts.instances;
    let cfgs = metric_configs()?;
    let g = grid(128);
    let mut rng = s.rng();
    let (mut sym, mut bilin, mut posdef, mut eucl, mut lower, mut upper) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..m {
        let cfg = &cfgs[i % cfgs.len()];
        let n = cfg.order();
        let dim = 2 + i % 2;
        let c = random_curve(&mut rng, g, dim)?;
        let ell = curve_length(&c);
        let h1 = random_field(&mut rng, g, dim);
        let h2 = random_field(&mut rng, g, dim);
        let k = random_field(&mut rng, g, dim);
        let alpha: f64 = rng.gen_range(-3.0..3.0);

        let a = eval_metric(cfg, &c, &h1, &k)?;
        let b = eval_metric(cfg, &c, &k, &h1)?;
        sym = sym.max((a - b).abs());

        let gkk = eval_metric(cfg, &c, &k, &k)?;
        let g11 = eval_metric(cfg, &c, &h1, &h1)?;
        let g22 = eval_metric(cfg, &c, &h2, &h2)?;
        let lhs = eval_metric(cfg, &c, &h1.combine(alpha, &h2, 1.0), &k)?;
        let rhs = alpha * a + eval_metric(cfg, &c, &h2, &k)?;
        let scale = alpha.abs() * (g11 * gkk).sqrt() + (g22 * gkk).sqrt();
        bilin = bilin.max((lhs - rhs).abs() / scale);

        let q = term_integrals(&c, &h1, n)?;
        let a0 = cfg.coefficient(0, ell);
        posdef = posdef.max(a0 * q[0] / g11);

        let amin = a0.min(cfg.coefficient(n, ell));
        let hn = q[0] + q[n];
        lower = lower.max(amin * hn / g11);
        let asum: f64 = (0..=n).map(|k| cfg.coefficient(k, ell)).sum();
        upper = upper.max(g11 / (asum * (q[0] + q[n])));

        let r = random_rotation(&mut rng, dim);
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let moved = c.transformed(&r, &v)?;
        let e = eval_metric(cfg, &moved, &h1.rotated(&r), &k.rotated(&r))?;
        eucl = eucl.max((e - a).abs() / (g11 * gkk).sqrt());
    }
    s.push(METRIC, "G(h, g) = G(g, h) exactly", m, sym, Bound::AtMost(0.0));
    s.push(
        METRIC,
        "G(a h1 + h2, g) = a G(h1, g) + G(h2, g)",
        m,
        bilin,
        Bound::AtMost(1e-12),
    );
    s.push(
        METRIC,
        "G(h, h) >= a_0 ||h||^2_L2(ds)",
        m,
        posdef,
        Bound::AtMost(1.0 + 1e-12),
    );
    s.push(METRIC, "G_{Rc+v}(Rh, Rg) = G_c(h, g)", m, eucl, Bound::AtMost(1e-12));
    s.push(
        METRIC,
        "a_min ||h||^2_H^n(ds) <= G(h, h)",
        m,
        lower,
        Bound::AtMost(1.0 + 1e-12),
    );
    s.push(
        METRIC,
        "G(h, h) <= (sum a_k)(||h||^2 + ||D_s^n h||^2)",
        m,
        upper,
        Bound::AtMost(1.0 + POINCARE_SLACK),
    );

    // Reparametrization: phi(theta) = theta + 0.2 sin(theta), sampled analytically.
    let cfg = &cfgs[0];
    let curve = |t: f64| vec![2.0 * t.cos() + 0.3 * (2.0 * t).cos(), t.sin() + 0.2 * (3.0 * t).sin()];
    let fh = |t: f64| vec![(2.0 * t).sin(), t.cos()];
    let fg = |t: f64| vec![1.0 + t.sin(), (3.0 * t).cos()];
    let phi = |t: f64| t + 0.2 * t.sin();
    let gap = |n: usize| -> Result<f64> {
        let g = grid(n);
        let c = DiscreteCurve::from_fn(g, 2, curve)?;
        let cp = DiscreteCurve::from_fn(g, 2, |t| curve(phi(t)))?;
        let base = eval_metric(
            cfg,
            &c,
            &TangentField::from_fn(g, 2, fh)?,
            &TangentField::from_fn(g, 2, fg)?,
        )?;
        let moved = eval_metric(
            cfg,
            &cp,
            &TangentField::from_fn(g, 2, |t| fh(phi(t)))?,
            &TangentField::from_fn(g, 2, |t| fg(phi(t)))?,
        )?;
        Ok((moved - base).abs())
    };
    let (e1, e2, e3) = (gap(64)?, gap(128)?, gap(256)?);
    s.push(
        METRIC,
        "reparametrization gap ratio under N -> 2N",
        2,
        (e1 / e2).min(e2 / e3),
        Bound::AtLeast(12.0),
    );
    Ok(())
}

const COMPLETENESS: &str = "completeness";

/// Random power-law profile of order `n` with a term at every `k`.
fn random_power_profile<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<MetricConfig> {
    let terms = (0..=n)
        .map(|k| {
            let crit = 2.0 * k as f64 - 3.0;
            CoefficientTerm::power(k, rng.gen_range(0.5..2.0), crit + rng.gen_range(-3.0..3.0))
        })
        .collect();
    MetricConfig::new(n, terms)
}

fn truth_rank(t: Truth) -> u8 {
    match t {
        Truth::Fails => 0,
        Truth::Inconclusive => 1,
        Truth::Holds => 2,
    }
}

fn completeness(s: &mut Suite) -> Result<()> {
    let m = s.opts.instances;
    let mut mismatches = 0usize;
    let mut total = 0usize;
    for k in 0..=4usize {
        let crit = 2.0 * k as f64 - 3.0;
        for dp in [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0] {
            let p = crit + dp;
            let class = classify_power_law(k, p);
            let term = CoefficientTerm::power(k, 1.0, p);
            for (end, expect) in [(End::Zero, class.i0), (End::Infinity, class.iinf)] {
                total += 1;
                if numeric_integral_evidence(&term, k, end).verdict != expect {
                    mismatches += 1;
                }
            }
        }
    }
    s.push(
        COMPLETENESS,
        "numeric evidence agrees with the power-law rule",
        total,
        mismatches as f64,
        Bound::AtMost(0.0),
    );

    // Monotonicity: add a term at an empty interior slot.
    let mut rng = s.rng();
    let mut downgrades = 0usize;
    for _ in 0..m {
        let n = rng.gen_range(2..=4usize);
        let slot = rng.gen_range(1..n);
        let mut terms = vec![
            CoefficientTerm::power(0, 1.0, rng.gen_range(-6.0..3.0)),
            CoefficientTerm::power(n, 1.0, 2.0 * n as f64 - 3.0 + rng.gen_range(-3.0..3.0)),
        ];
        for k in 1..n {
            if k != slot && rng.gen_bool(0.5) {
                terms.push(CoefficientTerm::power(
                    k,
                    1.0,
                    2.0 * k as f64 - 3.0 + rng.gen_range(-3.0..3.0),
                ));
            }
        }
        let before = analyze(&MetricConfig::new(n, terms.clone())?);
        let crit = 2.0 * slot as f64 - 3.0;
        let p = if rng.gen_bool(0.5) {
            crit - rng.gen_range(0.0..2.0)
        } else {
            crit + rng.gen_range(0.0..2.0)
        };
        terms.push(CoefficientTerm::power(slot, rng.gen_range(0.5..2.0), p));
        let after = analyze(&MetricConfig::new(n, terms)?);
        for (b, a) in [
            (before.condition_i0, after.condition_i0),
            (before.condition_iinf, after.condition_iinf),
            (before.necessary_i0_any_k, after.necessary_i0_any_k),
            (before.necessary_iinf_any_k, after.necessary_iinf_any_k),
        ] {
            if truth_rank(a) < truth_rank(b) {
                downgrades += 1;
            }
        }
    }
    s.push(
        COMPLETENESS,
        "adding a divergent term never downgrades",
        m,
        downgrades as f64,
        Bound::AtMost(0.0),
    );

    // W(1) = 0 and strict increase on a half-decade grid.
    let mut rng = s.rng();
    let radii: Vec<f64> = (-12..=12).map(|i| 10f64.powf(i as f64 / 2.0)).collect();
    let (mut w1, mut violations) = (0.0f64, 0usize);
    let mut unbounded_worst = f64::INFINITY;
    let mut unbounded_count = 0usize;
    for i in 0..m {
        let cfg = if i == 0 {
            scale_invariant_profile(2, &[1.0, 0.0, 1.0])?
        } else {
            let n = rng.gen_range(2..=4);
            random_power_profile(&mut rng, n)?
        };
        w1 = w1.max(w_eval(&cfg, 1.0)?.abs());
        let w: Vec<f64> = radii.iter().map(|&r| w_eval(&cfg, r)).collect::<Result<_>>()?;
        violations += w.windows(2).filter(|p| !(p[1] > p[0])).count();
        let rep = analyze(&cfg);
        if rep.condition_i0 == Truth::Holds && rep.condition_iinf == Truth::Holds {
            unbounded_count += 1;
            unbounded_worst = unbounded_worst.min(decade_growth(&cfg)?);
        }
    }
    s.push(COMPLETENESS, "W(1) = 0", m, w1, Bound::AtMost(0.0));
    s.push(
        COMPLETENESS,
        "W strictly increasing on [1e-6, 1e6]",
        m,
        violations as f64,
        Bound::AtMost(0.0),
    );
    s.push(
        COMPLETENESS,
        "(I0) and (Iinf): last-decade growth of |W| vs previous",
        unbounded_count,
        if unbounded_count == 0 { 1.0 } else { unbounded_worst },
        Bound::AtLeast(UNBOUNDED_DECADE_RATIO),
    );
    Ok(())
}

/// A bounded power-law tail loses at least this factor per decade once its
/// exponent is below `-0.3`; divergent terms never shrink from one decade to the next.
pub const UNBOUNDED_DECADE_RATIO: f64 = 0.5;

/// `min` over both ends of `(|W(10^6)| - |W(10^5)|) / (|W(10^5)| - |W(10^4)|)`.
pub fn decade_growth(cfg: &MetricConfig) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for sign in [1.0, -1.0] {
        let w = |m: f64| -> Result<f64> { Ok(w_eval(cfg, 10f64.powf(sign * m))?.abs()) };
        let (a, b, c) = (w(4.0)?, w(5.0)?, w(6.0)?);
        worst = worst.min((c - b) / (b - a));
    }
    Ok(worst)
}

const PATHS: &str = "paths";

fn random_path<R: Rng + ?Sized>(rng: &mut R, g: Grid, steps: usize) -> Result<CurvePath> {
    let c0 = random_curve(rng, g, 2)?;
    let c1 = random_curve(rng, g, 2)?;
    let Ok(base) = linear_path(&c0, &c1, steps) else {
        return random_path(rng, g, steps);
    };
    let mut slices = base.slices().to_vec();
    for sl in slices.iter_mut().take(steps).skip(1) {
        let h = random_field(rng, g, 2);
        if let Ok(c) = DiscreteCurve::new(g, sl.samples().combine(1.0, h.values(), 0.05)) {
            *sl = c;
        }
    }
    CurvePath::new(slices)
}

fn paths(s: &mut Suite) -> Result<()> {
    let m = s.opts.instances;
    let cfgs = [
        MetricConfig::constant_endpoints(2)?,
        scale_invariant_profile(2, &[1.0, 0.5, 1.0])?,
    ];
    let g = grid(64);
    let mut rng = s.rng();
    let (mut cs, mut rev) = (0.0f64, 0.0f64);
    for i in 0..m {
        let cfg = &cfgs[i % 2];
        let p = random_path(&mut rng, g, 8)?;
        let e = path_energy(cfg, &p)?;
        let l = path_length(cfg, &p)?;
        cs = cs.max(l * l / e);
        rev = rev.max(rel(path_energy(cfg, &p.reverse())?, e));
    }
    s.push(PATHS, "path_length^2 <= path_energy", m, cs, Bound::AtMost(1.0 + 1e-12));
    s.push(PATHS, "energy of the reversed path", m, rev, Bound::AtMost(1e-13));

    // Smooth path c(t) = (1 + t) c0 + t^2 w, refined in T.
    let cfg = &cfgs[0];
    let c0 = make_circle(1.0, &[0.0, 0.0], g)?;
    let w = Samples::from_fn(&g, 2, |t| vec![0.3 * (2.0 * t).cos(), 0.2 * (3.0 * t).sin()])?;
    let smooth = |steps: usize| -> Result<f64> {
        let slices = (0..=steps)
            .map(|j| {
                let t = j as f64 / steps as f64;
                DiscreteCurve::new(g, c0.samples().combine(1.0 + t, &w, t * t))
            })
            .collect::<Result<Vec<_>>>()?;
        path_energy(cfg, &CurvePath::new(slices)?)
    };
    let (e8, e16, e32) = (smooth(8)?, smooth(16)?, smooth(32)?);
    s.push(
        PATHS,
        "|E_T - E_2T| ratio under T -> 2T",
        1,
        (e8 - e16) / (e16 - e32),
        Bound::Within(3.5, 4.5),
    );

    let g256 = grid(256);
    let mut worst = 0.0f64;
    let mut rng = s.rng();
    let mut starts = vec![make_circle(1.0, &[0.0, 0.0], g256)?];
    starts.push(random_curve(&mut rng, g256, 2)?);
    for c in &starts {
        let discrete = path_length(cfg, &radial_path(c, 1.0, 2.0, 400)?)?;
        worst = worst.max(rel(discrete, radial_path_length(cfg, c, 1.0, 2.0)?));
    }
    s.push(
        PATHS,
        "radial path length, T = 400 vs quadrature",
        starts.len(),
        worst,
        Bound::AtMost(1e-3),
    );

    let mut rng = s.rng();
    let checks = m.min(20);
    let mut worst = 0.0f64;
    for i in 0..checks {
        let p = random_path(&mut rng, grid(32), 4)?;
        worst = worst.max(gradient_check(&cfgs[i % 2], &p, &mut rng)?);
    }
    s.push(
        PATHS,
        "energy gradient vs central differences",
        checks,
        worst,
        Bound::AtMost(1e-6),
    );

    solver_checks(s)
}

fn solver_checks(s: &mut Suite) -> Result<()> {
    let cfg = MetricConfig::constant_endpoints(2)?;
    let g = grid(64);
    let mut rng = s.rng();
    let mut pairs = vec![(make_circle(1.0, &[0.0, 0.0], g)?, make_circle(2.0, &[0.0, 0.0], g)?)];
    for _ in 0..2 {
        let a = random_curve(&mut rng, g, 2)?;
        let h = random_field(&mut rng, g, 2);
        let b = DiscreteCurve::new(g, a.samples().combine(1.0, h.values(), 0.2))?;
        pairs.push((a, b));
    }
    let opts = SolverOptions {
        steps: 16,
        check_seed: s.opts.seed,
        ..SolverOptions::default()
    };
    let (mut rises, mut moved, mut bound_fail, mut asym, mut trust) = (0usize, 0usize, 0usize, 0.0f64, 0.0f64);
    for (a, b) in &pairs {
        let fwd = geodesic_bvp(&cfg, a, b, &opts)?;
        let bwd = geodesic_bvp(&cfg, b, a, &opts)?;
        for r in [&fwd, &bwd] {
            rises += r.energy_trace.windows(2).filter(|w| w[1] > w[0]).count();
            trust = trust.max(r.gradient_check);
        }
        if fwd.path.start() != a || fwd.path.end() != b || bwd.path.start() != b || bwd.path.end() != a {
            moved += 1;
        }
        bound_fail += length_bound_evidence(&cfg, &fwd.path)?
            .iter()
            .filter(|r| !r.holds)
            .count();
        asym = asym.max(rel(fwd.length, bwd.length));
    }
    let n = pairs.len();
    s.push(PATHS, "solver gradient trust check", 2 * n, trust, Bound::AtMost(1e-6));
    s.push(
        PATHS,
        "accepted iterates never raise the energy",
        2 * n,
        rises as f64,
        Bound::AtMost(0.0),
    );
    s.push(
        PATHS,
        "endpoints pinned bitwise",
        2 * n,
        moved as f64,
        Bound::AtMost(0.0),
    );
    s.push(
        PATHS,
        "|W(l_m) - W(l_0)| <= 1.1 C * length so far",
        n,
        bound_fail as f64,
        Bound::AtMost(0.0),
    );
    s.push(
        PATHS,
        "distance(c0, c1) = distance(c1, c0)",
        n,
        asym,
        Bound::AtMost(1e-6),
    );
    Ok(())
}

const COUNTER: &str = "counterexample";

fn counterexample(s: &mut Suite) -> Result<()> {
    for (case, p, alpha) in [(Case::Grow, 0.0, 10.0), (Case::Shrink, 2.0, -12.0)] {
        let label = match case {
            Case::Grow => "grow",
            Case::Shrink => "shrink",
        };
        let params = CounterexampleParams::standard(case, p, alpha);
        s.push(
            COUNTER,
            &format!("{label}: beta < 0"),
            1,
            params.beta(),
            Bound::AtMost(-f64::MIN_POSITIVE),
        );
        let cfg = MetricConfig::two_term(-3.0, p)?;
        let seq = build_sequence(&params)?;
        let rep = verify_sequence(&cfg, &seq, 16)?;
        for c in &rep.checks {
            s.push(
                COUNTER,
                &format!("{label}: {}", c.name),
                rep.rows.len(),
                if c.passed { 0.0 } else { 1.0 },
                Bound::AtMost(0.0),
            );
        }
        let pw = pointwise_bounds_check(&seq)?;
        let failed = pw.rows.iter().filter(|r| !r.holds).count();
        s.push(
            COUNTER,
            &format!("{label}: pointwise bounds"),
            pw.rows.len(),
            failed as f64,
            Bound::AtMost(0.0),
        );
    }
    Ok(())
}
