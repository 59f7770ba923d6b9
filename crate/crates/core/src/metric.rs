//! Length-dependent coefficient profiles and the metric
//! `G_c(h, g) = sum_k a_k(l_c) int <D_s^k h, D_s^k g> ds`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curve::{arc_derivatives, check_grids, curve_length, norm, DiscreteCurve, NormKind, TangentField};
use crate::error::{invalid, Result};
use crate::grid::{dot, Samples};
use crate::random::random_field;

/// A coefficient function `a_k : (0, inf) -> [0, inf)`.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientForm {
    /// `b * l^p`
    PowerLaw {
        b: f64,
        p: f64,
    },
    Constant {
        b: f64,
    },
    Tabulated(Table),
}

/// Monotone cubic interpolant through positive knots with power-law tails.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    left_exponent: f64,
    right_exponent: f64,
}

/// Fraction of knots at each end used to fit the tail exponents.
pub const TAIL_FRACTION: f64 = 0.25;

impl Table {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 4 || knots.len() != values.len() {
            return Err(invalid("tabulated coefficient needs >= 4 knots and one value per knot"));
        }
        if knots[0] <= 0.0 || knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("knots must be positive and strictly increasing"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("tabulated values must be finite and nonnegative"));
        }
        let slopes = pchip_slopes(&knots, &values);
        let m = ((TAIL_FRACTION * knots.len() as f64).ceil() as usize).max(2);
        let k = knots.len();
        let left_exponent = loglog_slope(&knots[..m], &values[..m]);
        let right_exponent = loglog_slope(&knots[k - m..], &values[k - m..]);
        Ok(Table {
            knots,
            values,
            slopes,
            left_exponent,
            right_exponent,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Fitted power-law exponents of the tails below and above the table.
    pub fn tail_exponents(&self) -> (f64, f64) {
        (self.left_exponent, self.right_exponent)
    }

    fn eval(&self, x: f64) -> f64 {
        let k = self.knots.len();
        if x <= self.knots[0] {
            return self.values[0] * (x / self.knots[0]).powf(self.left_exponent);
        }
        if x >= self.knots[k - 1] {
            return self.values[k - 1] * (x / self.knots[k - 1]).powf(self.right_exponent);
        }
        let i = self.knots.partition_point(|&t| t <= x) - 1;
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t),
            t * (1.0 - t) * (1.0 - t),
            t * t * (3.0 - 2.0 * t),
            t * t * (t - 1.0),
        );
        (h00 * self.values[i] + h10 * h * self.slopes[i] + h01 * self.values[i + 1] + h11 * h * self.slopes[i + 1])
            .max(0.0)
    }

    fn derivative(&self, x: f64) -> f64 {
        let k = self.knots.len();
        if x <= self.knots[0] {
            return self.left_exponent * self.eval(x) / x;
        }
        if x >= self.knots[k - 1] {
            return self.right_exponent * self.eval(x) / x;
        }
        let i = self.knots.partition_point(|&t| t <= x) - 1;
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let d00 = 6.0 * t * t - 6.0 * t;
        let d10 = 3.0 * t * t - 4.0 * t + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * t * t - 2.0 * t;
        (d00 * self.values[i] + d01 * self.values[i + 1]) / h + d10 * self.slopes[i] + d11 * self.slopes[i + 1]
    }
}

/// Fritsch-Butland slopes with the three-point end formula.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end = |h0: f64, h1: f64, m0: f64, m1: f64| {
        let s = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
        if s.signum() != m0.signum() {
            0.0
        } else if m0.signum() != m1.signum() && s.abs() > 3.0 * m0.abs() {
            3.0 * m0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// Least-squares slope of `ln y` against `ln x` over the positive entries.
fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&a, &b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTerm {
    pub k: usize,
    pub form: CoefficientForm,
}

impl CoefficientTerm {
    pub fn power(k: usize, b: f64, p: f64) -> Self {
        CoefficientTerm {
            k,
            form: CoefficientForm::PowerLaw { b, p },
        }
    }

    pub fn constant(k: usize, b: f64) -> Self {
        CoefficientTerm {
            k,
            form: CoefficientForm::Constant { b },
        }
    }

    pub fn table(k: usize, knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Ok(CoefficientTerm {
            k,
            form: CoefficientForm::Tabulated(Table::new(knots, values)?),
        })
    }

    /// Power-law view `(b, p)` when the coefficient has one.
    pub fn as_power_law(&self) -> Option<(f64, f64)> {
        match self.form {
            CoefficientForm::PowerLaw { b, p } => Some((b, p)),
            CoefficientForm::Constant { b } => Some((b, 0.0)),
            CoefficientForm::Tabulated(_) => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.form {
            CoefficientForm::PowerLaw { b, p } => {
                if !(*b >= 0.0) || !b.is_finite() || !p.is_finite() {
                    return Err(invalid(format!("term k={}: need b >= 0 and finite p", self.k)));
                }
            }
            CoefficientForm::Constant { b } => {
                if !(*b >= 0.0) || !b.is_finite() {
                    return Err(invalid(format!("term k={}: need b >= 0", self.k)));
                }
            }
            CoefficientForm::Tabulated(_) => {}
        }
        Ok(())
    }

    fn is_strictly_positive(&self) -> bool {
        match &self.form {
            CoefficientForm::PowerLaw { b, .. } | CoefficientForm::Constant { b } => *b > 0.0,
            CoefficientForm::Tabulated(t) => t.values.iter().all(|&v| v > 0.0),
        }
    }

    fn is_zero(&self) -> bool {
        match &self.form {
            CoefficientForm::PowerLaw { b, .. } | CoefficientForm::Constant { b } => *b == 0.0,
            CoefficientForm::Tabulated(t) => t.values.iter().all(|&v| v == 0.0),
        }
    }

    pub(crate) fn value(&self, ell: f64) -> f64 {
        match &self.form {
            CoefficientForm::PowerLaw { b, p } => {
                if *b == 0.0 {
                    0.0
                } else {
                    b * ell.powf(*p)
                }
            }
            CoefficientForm::Constant { b } => *b,
            CoefficientForm::Tabulated(t) => t.eval(ell),
        }
    }

    /// `ln a_k(ell)`, accurate where `a_k` itself would overflow.
    pub(crate) fn ln_value(&self, ell: f64) -> f64 {
        match &self.form {
            CoefficientForm::PowerLaw { b, p } => b.ln() + p * ell.ln(),
            CoefficientForm::Constant { b } => b.ln(),
            CoefficientForm::Tabulated(t) => t.eval(ell).ln(),
        }
    }

    pub(crate) fn derivative(&self, ell: f64) -> f64 {
        match &self.form {
            CoefficientForm::PowerLaw { b, p } => {
                if *b == 0.0 || *p == 0.0 {
                    0.0
                } else {
                    b * p * ell.powf(p - 1.0)
                }
            }
            CoefficientForm::Constant { .. } => 0.0,
            CoefficientForm::Tabulated(t) => t.derivative(ell),
        }
    }
}

/// `a_k(ell)`.
pub fn coefficient_eval(term: &CoefficientTerm, ell: f64) -> Result<f64> {
    if !(ell > 0.0) {
        return Err(invalid(format!("curve length must be positive, got {ell}")));
    }
    Ok(term.value(ell))
}

/// Order `n` and the coefficient terms of a length-weighted Sobolev metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MetricConfigJson", into = "MetricConfigJson")]
pub struct MetricConfig {
    n: usize,
    terms: Vec<CoefficientTerm>,
}

impl MetricConfig {
    pub fn new(n: usize, mut terms: Vec<CoefficientTerm>) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("metric order must be >= 2, got {n}")));
        }
        terms.sort_by_key(|t| t.k);
        for w in terms.windows(2) {
            if w[0].k == w[1].k {
                return Err(invalid(format!("duplicate coefficient for k={}", w[0].k)));
            }
        }
        for t in &terms {
            if t.k > n {
                return Err(invalid(format!("term k={} exceeds metric order {n}", t.k)));
            }
            t.validate()?;
        }
        for k in [0, n] {
            let ok = terms
                .iter()
                .find(|t| t.k == k)
                .is_some_and(|t| t.is_strictly_positive());
            if !ok {
                return Err(invalid(format!("a_{k} must be strictly positive")));
            }
        }
        Ok(MetricConfig { n, terms })
    }

    /// `a_0 = a_n = 1` constants.
    pub fn constant_endpoints(n: usize) -> Result<Self> {
        Self::new(
            n,
            vec![CoefficientTerm::constant(0, 1.0), CoefficientTerm::constant(n, 1.0)],
        )
    }

    /// `l^q <h,g> + l^p <D_s^2 h, D_s^2 g>`, the two-term second-order family.
    pub fn two_term(q: f64, p: f64) -> Result<Self> {
        Self::new(
            2,
            vec![CoefficientTerm::power(0, 1.0, q), CoefficientTerm::power(2, 1.0, p)],
        )
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[CoefficientTerm] {
        &self.terms
    }

    pub fn term(&self, k: usize) -> Option<&CoefficientTerm> {
        self.terms.iter().find(|t| t.k == k)
    }

    /// `a_k(ell)`, zero for absent terms.
    pub fn coefficient(&self, k: usize, ell: f64) -> f64 {
        self.term(k).map_or(0.0, |t| t.value(ell))
    }

    pub(crate) fn active_terms(&self) -> impl Iterator<Item = &CoefficientTerm> {
        self.terms.iter().filter(|t| !t.is_zero())
    }

    /// Adds or replaces the term for `term.k`.
    pub fn with_term(&self, term: CoefficientTerm) -> Result<Self> {
        let mut terms: Vec<_> = self.terms.iter().filter(|t| t.k != term.k).cloned().collect();
        terms.push(term);
        Self::new(self.n, terms)
    }
}

/// `a_k(l) = b_k l^(2k-3)`, making `G_{rho c}(rho h, rho h) = G_c(h, h)`.
pub fn scale_invariant_profile(n: usize, b: &[f64]) -> Result<MetricConfig> {
    if b.len() != n + 1 {
        return Err(invalid(format!("need {} coefficients, got {}", n + 1, b.len())));
    }
    let terms = b
        .iter()
        .enumerate()
        .map(|(k, &bk)| CoefficientTerm::power(k, bk, 2.0 * k as f64 - 3.0))
        .collect();
    MetricConfig::new(n, terms)
}

/// `int |D_s^k h|^2 ds` for `k = 0..=n`.
pub fn term_integrals(c: &DiscreteCurve, h: &TangentField, n: usize) -> Result<Vec<f64>> {
    check_grids(c, h)?;
    let ds = arc_derivatives(c, h.values(), n)?;
    Ok(ds.iter().map(|u| crate::curve::sq_l2_ds(c, u)).collect())
}

fn cross_integral(c: &DiscreteCurve, u: &Samples, v: &Samples) -> f64 {
    let s: f64 = u
        .rows()
        .zip(v.rows())
        .zip(c.speed())
        .map(|((p, q), sj)| dot(p, q) * sj)
        .sum();
    s * c.grid().weight()
}

/// `G_c(h, g)`.
pub fn eval_metric(cfg: &MetricConfig, c: &DiscreteCurve, h: &TangentField, g: &TangentField) -> Result<f64> {
    check_grids(c, h)?;
    check_grids(c, g)?;
    let ell = curve_length(c);
    let dh = arc_derivatives(c, h.values(), cfg.n)?;
    let same = h == g;
    let dg = if same {
        None
    } else {
        Some(arc_derivatives(c, g.values(), cfg.n)?)
    };
    let mut total = 0.0;
    for term in cfg.active_terms() {
        let u = &dh[term.k];
        let v = dg.as_ref().map_or(u, |d| &d[term.k]);
        total += term.value(ell) * cross_integral(c, u, v);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioWindow {
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl RatioWindow {
    fn empty() -> Self {
        RatioWindow {
            min_ratio: f64::INFINITY,
            max_ratio: 0.0,
        }
    }

    fn push(&mut self, r: f64) {
        self.min_ratio = self.min_ratio.min(r);
        self.max_ratio = self.max_ratio.max(r);
    }

    fn merge(&mut self, o: &RatioWindow) {
        self.min_ratio = self.min_ratio.min(o.min_ratio);
        self.max_ratio = self.max_ratio.max(o.max_ratio);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEquivalence {
    pub per_curve: Vec<RatioWindow>,
    pub pooled: RatioWindow,
}

/// Samples `sqrt(G_c(h,h)) / ||h||_{H^n(dtheta)}` over random band-limited `h`.
pub fn norm_equivalence_probe<R: Rng + ?Sized>(
    cfg: &MetricConfig,
    curves: &[DiscreteCurve],
    trials: usize,
    rng: &mut R,
) -> Result<NormEquivalence> {
    if curves.is_empty() || trials == 0 {
        return Err(invalid("probe needs at least one curve and one trial"));
    }
    let mut pooled = RatioWindow::empty();
    let mut per_curve = Vec::with_capacity(curves.len());
    for c in curves {
        let mut w = RatioWindow::empty();
        let mut accepted = 0;
        while accepted < trials {
            let h = random_field(rng, *c.grid(), c.dim());
            let flat = norm(c, &h, NormKind::HnDtheta(cfg.n))?;
            if flat == 0.0 {
                continue;
            }
            let g = eval_metric(cfg, c, &h, &h)?;
            w.push(g.sqrt() / flat);
            accepted += 1;
        }
        pooled.merge(&w);
        per_curve.push(w);
    }
    Ok(NormEquivalence { per_curve, pooled })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase", deny_unknown_fields)]
enum TermJson {
    Power {
        k: usize,
        b: f64,
        p: f64,
    },
    Const {
        k: usize,
        b: f64,
    },
    Table {
        k: usize,
        knots: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricConfigJson {
    n: usize,
    terms: Vec<TermJson>,
}

impl TryFrom<MetricConfigJson> for MetricConfig {
    type Error = crate::error::Error;

    fn try_from(j: MetricConfigJson) -> Result<Self> {
        let terms = j
            .terms
            .into_iter()
            .map(|t| match t {
                TermJson::Power { k, b, p } => Ok(CoefficientTerm::power(k, b, p)),
                TermJson::Const { k, b } => Ok(CoefficientTerm::constant(k, b)),
                TermJson::Table { k, knots, values } => CoefficientTerm::table(k, knots, values),
            })
            .collect::<Result<Vec<_>>>()?;
        MetricConfig::new(j.n, terms)
    }
}

impl From<MetricConfig> for MetricConfigJson {
    fn from(cfg: MetricConfig) -> Self {
        let terms = cfg
            .terms
            .into_iter()
            .map(|t| match t.form {
                CoefficientForm::PowerLaw { b, p } => TermJson::Power { k: t.k, b, p },
                CoefficientForm::Constant { b } => TermJson::Const { k: t.k, b },
                CoefficientForm::Tabulated(tab) => TermJson::Table {
                    k: t.k,
                    knots: tab.knots,
                    values: tab.values,
                },
            })
            .collect();
        MetricConfigJson { n: cfg.n, terms }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::make_circle;
    use crate::grid::Grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn coefficient_arithmetic() {
        let t = CoefficientTerm::power(0, 1.0, -3.0);
        assert_eq!(coefficient_eval(&t, 2.0).unwrap(), 0.125);
        let t = CoefficientTerm::constant(2, 5.0);
        assert_eq!(coefficient_eval(&t, 0.01).unwrap(), 5.0);
        assert_eq!(coefficient_eval(&t, 1e9).unwrap(), 5.0);
        assert!(coefficient_eval(&t, 0.0).is_err());
        assert!(coefficient_eval(&t, -1.0).is_err());
    }

    #[test]
    fn tabulated_linear_profile() {
        let knots = vec![0.5, 1.0, 2.0, 4.0];
        let t = CoefficientTerm::table(1, knots.clone(), knots.clone()).unwrap();
        assert!((coefficient_eval(&t, 1.3).unwrap() - 1.3).abs() < 1e-3);
        // tails extend l^1 on both sides
        assert!((coefficient_eval(&t, 0.1).unwrap() - 0.1).abs() < 1e-12);
        assert!((coefficient_eval(&t, 40.0).unwrap() - 40.0).abs() < 1e-9);
        let CoefficientForm::Tabulated(tab) = &t.form else {
            unreachable!()
        };
        let (l, r) = tab.tail_exponents();
        assert!((l - 1.0).abs() < 1e-12 && (r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tabulated_derivative_matches_difference_quotient() {
        let knots: Vec<f64> = (0..8).map(|i| 0.25 * 2f64.powi(i)).collect();
        let values: Vec<f64> = knots.iter().map(|x: &f64| x.powf(-1.5) + 0.3 * x).collect();
        let t = CoefficientTerm::table(0, knots, values).unwrap();
        for x in [0.1, 0.3, 0.9, 2.2, 7.0, 30.0, 100.0] {
            let h = 1e-6 * x;
            let fd = (t.value(x + h) - t.value(x - h)) / (2.0 * h);
            assert!((fd - t.derivative(x)).abs() <= 1e-5 * fd.abs().max(1.0), "x={x}");
        }
    }

    #[test]
    fn table_validation() {
        assert!(Table::new(vec![1.0, 2.0, 3.0], vec![1.0, 1.0, 1.0]).is_err());
        assert!(Table::new(vec![1.0, 2.0, 2.0, 3.0], vec![1.0; 4]).is_err());
        assert!(Table::new(vec![0.0, 1.0, 2.0, 3.0], vec![1.0; 4]).is_err());
        assert!(Table::new(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, -1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(MetricConfig::new(
            1,
            vec![CoefficientTerm::constant(0, 1.0), CoefficientTerm::constant(1, 1.0)]
        )
        .is_err());
        assert!(MetricConfig::new(2, vec![CoefficientTerm::constant(0, 1.0)]).is_err());
        assert!(MetricConfig::new(
            2,
            vec![CoefficientTerm::constant(0, 0.0), CoefficientTerm::constant(2, 1.0)]
        )
        .is_err());
        assert!(MetricConfig::new(
            2,
            vec![
                CoefficientTerm::constant(0, 1.0),
                CoefficientTerm::constant(2, 1.0),
                CoefficientTerm::constant(3, 1.0)
            ]
        )
        .is_err());
        assert!(MetricConfig::new(
            2,
            vec![CoefficientTerm::power(0, -1.0, 1.0), CoefficientTerm::constant(2, 1.0)]
        )
        .is_err());
        assert!(MetricConfig::constant_endpoints(2).is_ok());
    }

    #[test]
    fn scale_invariant_exponents() {
        let cfg = scale_invariant_profile(2, &[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(cfg.term(0).unwrap().as_power_law(), Some((1.0, -3.0)));
        assert_eq!(cfg.term(2).unwrap().as_power_law(), Some((1.0, 1.0)));
        let cfg = scale_invariant_profile(3, &[1.0; 4]).unwrap();
        let p: Vec<f64> = cfg.terms().iter().map(|t| t.as_power_law().unwrap().1).collect();
        assert_eq!(p, vec![-3.0, -1.0, 1.0, 3.0]);
        assert!(scale_invariant_profile(2, &[0.0, 1.0, 1.0]).is_err());
        assert!(scale_invariant_profile(2, &[1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn unit_circle_metric() {
        let g = Grid::with_points(512).unwrap();
        let c = make_circle(1.0, &[0.0, 0.0], g).unwrap();
        let cfg = MetricConfig::constant_endpoints(2).unwrap();
        let h = c.as_field();
        let val = eval_metric(&cfg, &c, &h, &h).unwrap();
        assert!((val - 4.0 * PI).abs() < 1e-8);
        let zero = TangentField::zeros(g, 2);
        assert_eq!(eval_metric(&cfg, &c, &zero, &zero).unwrap(), 0.0);
    }

    #[test]
    fn scale_invariance_of_profile() {
        let g = Grid::with_points(256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = crate::random::random_curve(&mut rng, g, 2).unwrap();
        let h = random_field(&mut rng, g, 2);
        let cfg = scale_invariant_profile(2, &[1.0, 0.0, 1.0]).unwrap();
        let base = eval_metric(&cfg, &c, &h, &h).unwrap();
        for rho in [0.1, 3.0, 50.0] {
            let v = eval_metric(&cfg, &c.scaled(rho).unwrap(), &h.scaled(rho), &h.scaled(rho)).unwrap();
            assert!((v - base).abs() <= 1e-12 * base, "rho={rho}");
        }
    }

    #[test]
    fn circle_norm_equivalence_window() {
        let g = Grid::with_points(256).unwrap();
        let c = make_circle(1.0, &[0.0, 0.0], g).unwrap();
        let (a0, a2) = (0.5, 3.0);
        let cfg = MetricConfig::new(
            2,
            vec![CoefficientTerm::constant(0, a0), CoefficientTerm::constant(2, a2)],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = norm_equivalence_probe(&cfg, &[c], 50, &mut rng).unwrap();
        // On the unit circle each Fourier mode has ratio^2 = (a0 + a2 m^4) / (1 + m^4).
        assert!(p.pooled.min_ratio >= a0.sqrt() * (1.0 - 1e-6));
        assert!(p.pooled.max_ratio <= a2.sqrt() * (1.0 + 1e-6));
        assert!(p.pooled.min_ratio > 0.0 && p.pooled.max_ratio.is_finite());
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let src = r#"{"n": 2, "terms": [
            {"k": 0, "form": "power", "b": 1.0, "p": -3.0},
            {"k": 1, "form": "table", "knots": [0.5, 1, 2, 4], "values": [1, 1, 1, 1]},
            {"k": 2, "form": "const", "b": 2.0}]}"#;
        let cfg: MetricConfig = serde_json::from_str(src).unwrap();
        assert_eq!(cfg.order(), 2);
        let again: MetricConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
        let bad =
            r#"{"n": 2, "terms": [{"k": 0, "form": "const", "b": 1.0, "x": 1}, {"k": 2, "form": "const", "b": 1.0}]}"#;
        assert!(serde_json::from_str::<MetricConfig>(bad).is_err());
        let bad = r#"{"n": 2, "extra": 0, "terms": []}"#;
        assert!(serde_json::from_str::<MetricConfig>(bad).is_err());
        let invalid = r#"{"n": 2, "terms": [{"k": 0, "form": "const", "b": 1.0}]}"#;
        assert!(serde_json::from_str::<MetricConfig>(invalid).is_err());
    }
}
