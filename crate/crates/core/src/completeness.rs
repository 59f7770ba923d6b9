//! Divergence of `I_{0,k} = int_0^1 r^{1/2-k} sqrt(a_k(r)) dr` and
//! `I_{inf,k} = int_1^inf r^{1/2-k} sqrt(a_k(r)) dr`, the conditions built on
//! them, and the length reparametrization `W`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::metric::{CoefficientTerm, MetricConfig};
use crate::quadrature::{integrate_log, QuadOptions};

/// Exponent band around the critical value `-1` inside which numeric evidence
/// gives no verdict.
pub const EXPONENT_TOLERANCE: f64 = 0.05;
/// Number of decades probed by the numeric evidence (`10^-m`, `m = 1..=8`).
pub const CUTOFF_DEPTH: u32 = 8;
/// Absolute tolerance of every partial integral.
pub const PARTIAL_ABS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum End {
    Zero,
    Infinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Divergent,
    Convergent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AnalyticPowerLaw,
    NumericEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// Fitted exponent of the integrand at the singular end.
    pub local_exponent: f64,
    pub cutoffs: Vec<f64>,
    pub partial_integrals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralVerdict {
    /// Value of the integral, `None` when divergent or unknown.
    pub value: Option<f64>,
    pub verdict: Verdict,
    pub method: Method,
    pub evidence: Option<Evidence>,
}

impl IntegralVerdict {
    fn analytic(verdict: Verdict, value: Option<f64>) -> Self {
        IntegralVerdict {
            value,
            verdict,
            method: Method::AnalyticPowerLaw,
            evidence: None,
        }
    }
}

/// `r^{1/2-k} sqrt(a_k(r))`.
pub fn integrand(term: &CoefficientTerm, k: usize, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid(format!("integrand needs r > 0, got {r}")));
    }
    Ok(integrand_unchecked(term, k, r))
}

fn integrand_unchecked(term: &CoefficientTerm, k: usize, r: f64) -> f64 {
    let a = term.value(r);
    if a == 0.0 {
        return 0.0;
    }
    r.powf(0.5 - k as f64) * a.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowerLawClass {
    pub i0: Verdict,
    pub iinf: Verdict,
}

/// For `a_k = b l^p` the integrand is `r^{1/2 - k + p/2}`: `I_{0,k}` diverges iff
/// `p <= 2k - 3`, `I_{inf,k}` iff `p >= 2k - 3`.
pub fn classify_power_law(k: usize, p: f64) -> PowerLawClass {
    let critical = 2.0 * k as f64 - 3.0;
    let v = |div: bool| if div { Verdict::Divergent } else { Verdict::Convergent };
    PowerLawClass {
        i0: v(p <= critical),
        iinf: v(p >= critical),
    }
}

fn analytic_verdict(k: usize, b: f64, p: f64, end: End) -> IntegralVerdict {
    if b == 0.0 {
        return IntegralVerdict::analytic(Verdict::Convergent, Some(0.0));
    }
    let class = classify_power_law(k, p);
    let e = 0.5 - k as f64 + 0.5 * p;
    match end {
        End::Zero if class.i0 == Verdict::Convergent => {
            IntegralVerdict::analytic(Verdict::Convergent, Some(b.sqrt() / (e + 1.0)))
        }
        End::Infinity if class.iinf == Verdict::Convergent => {
            IntegralVerdict::analytic(Verdict::Convergent, Some(-b.sqrt() / (e + 1.0)))
        }
        _ => IntegralVerdict::analytic(Verdict::Divergent, None),
    }
}

/// Partial integrals over `[10^-m, 1]` (or `[1, 10^m]`) and a fit of the
/// integrand's local exponent at the singular end.
pub fn numeric_integral_evidence(term: &CoefficientTerm, k: usize, end: End) -> IntegralVerdict {
    let f = |r: f64| integrand_unchecked(term, k, r);
    let outward = |m: u32| match end {
        End::Zero => 10f64.powi(-(m as i32)),
        End::Infinity => 10f64.powi(m as i32),
    };
    let opts = QuadOptions {
        abs_tol: PARTIAL_ABS_TOL,
        rel_tol: 1e-12,
        max_intervals: 4000,
    };

    let mut cutoffs = Vec::new();
    let mut partials = Vec::new();
    let mut acc = 0.0;
    let mut failure = None;
    for m in 1..=CUTOFF_DEPTH {
        let (lo, hi) = (outward(m - 1), outward(m));
        match integrate_log(f, lo.min(hi), lo.max(hi), opts) {
            Ok(q) => {
                acc += q.value;
                cutoffs.push(hi);
                partials.push(acc);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }

    // Local exponent from samples in the last two decades.
    let samples: Vec<(f64, f64)> = (0..=8)
        .map(|i| {
            let m = CUTOFF_DEPTH as f64 - 2.0 + 0.25 * i as f64;
            let r = match end {
                End::Zero => 10f64.powf(-m),
                End::Infinity => 10f64.powf(m),
            };
            (r, f(r))
        })
        .collect();
    let all_zero = samples.iter().all(|s| s.1 == 0.0) && partials.iter().all(|&p| p == 0.0);
    if all_zero && failure.is_none() {
        return IntegralVerdict {
            value: Some(0.0),
            verdict: Verdict::Convergent,
            method: Method::NumericEvidence,
            evidence: Some(Evidence {
                local_exponent: f64::NAN,
                cutoffs,
                partial_integrals: partials,
            }),
        };
    }
    let positive = samples.iter().all(|s| s.1 > 0.0 && s.1.is_finite());
    let exponent = if positive { fitted_slope(&samples) } else { f64::NAN };
    let evidence = Evidence {
        local_exponent: exponent,
        cutoffs,
        partial_integrals: partials.clone(),
    };
    if failure.is_some() || !exponent.is_finite() {
        return IntegralVerdict {
            value: None,
            verdict: Verdict::Inconclusive,
            method: Method::NumericEvidence,
            evidence: Some(evidence),
        };
    }

    let increments: Vec<f64> = partials
        .iter()
        .scan(0.0, |prev, &p| {
            let d = p - *prev;
            *prev = p;
            Some(d)
        })
        .collect();
    let tail = &increments[increments.len().saturating_sub(4)..];
    let exploding = tail.windows(2).all(|w| w[1] >= 1.5 * w[0] && w[1] > 0.0);
    let shrinking = tail.windows(2).all(|w| w[1] < w[0]);

    // At the zero end r^e diverges for e <= -1; at infinity for e >= -1.
    let (div_side, conv_side) = match end {
        End::Zero => (
            exponent <= -1.0 - EXPONENT_TOLERANCE,
            exponent >= -1.0 + EXPONENT_TOLERANCE,
        ),
        End::Infinity => (
            exponent >= -1.0 + EXPONENT_TOLERANCE,
            exponent <= -1.0 - EXPONENT_TOLERANCE,
        ),
    };
    let (verdict, value) = if div_side || exploding {
        (Verdict::Divergent, None)
    } else if conv_side && shrinking {
        (Verdict::Convergent, partials.last().copied())
    } else {
        (Verdict::Inconclusive, None)
    };
    IntegralVerdict {
        value,
        verdict,
        method: Method::NumericEvidence,
        evidence: Some(evidence),
    }
}

fn fitted_slope(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len() as f64;
    let pts: Vec<(f64, f64)> = samples.iter().map(|(r, v)| (r.ln(), v.ln())).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Verdict for one coefficient at one end, analytic when possible.
pub fn term_verdict(term: Option<&CoefficientTerm>, k: usize, end: End) -> IntegralVerdict {
    match term {
        None => IntegralVerdict::analytic(Verdict::Convergent, Some(0.0)),
        Some(t) => match t.as_power_law() {
            Some((b, p)) => analytic_verdict(k, b, p, end),
            None => numeric_integral_evidence(t, k, end),
        },
    }
}

/// Three-valued truth of a condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Holds,
    Fails,
    Inconclusive,
}

impl Truth {
    /// "Some integral in the set diverges."
    fn any_divergent<'a>(verdicts: impl Iterator<Item = &'a IntegralVerdict>) -> Truth {
        let mut unknown = false;
        for v in verdicts {
            match v.verdict {
                Verdict::Divergent => return Truth::Holds,
                Verdict::Inconclusive => unknown = true,
                Verdict::Convergent => {}
            }
        }
        if unknown {
            Truth::Inconclusive
        } else {
            Truth::Fails
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// Both sufficient conditions hold: the metric is complete.
    SufficientConditionsHold,
    /// A necessary condition fails: radial paths shrink or blow up in finite length.
    NecessaryFail,
    /// Necessary conditions hold but a sufficient one fails; no verdict.
    Gap,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRow {
    pub k: usize,
    pub end: End,
    pub verdict: Verdict,
    pub method: Method,
    /// Integral value when convergent, else the last partial integral if any.
    pub value_or_partial: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub n: usize,
    pub terms: Vec<TermRow>,
    pub condition_i0: Truth,
    pub condition_iinf: Truth,
    pub necessary_i0_any_k: Truth,
    pub necessary_iinf_any_k: Truth,
    pub classification: Classification,
}

impl CompletenessReport {
    pub fn verdict(&self, k: usize, end: End) -> Option<Verdict> {
        self.terms.iter().find(|r| r.k == k && r.end == end).map(|r| r.verdict)
    }
}

pub fn analyze(cfg: &MetricConfig) -> CompletenessReport {
    let n = cfg.order();
    let mut zero = Vec::with_capacity(n + 1);
    let mut inf = Vec::with_capacity(n + 1);
    for k in 0..=n {
        zero.push(term_verdict(cfg.term(k), k, End::Zero));
        inf.push(term_verdict(cfg.term(k), k, End::Infinity));
    }
    let condition_i0 = Truth::any_divergent(zero[1..].iter());
    let condition_iinf = Truth::any_divergent(inf[1..].iter());
    let necessary_i0_any_k = Truth::any_divergent(zero.iter());
    let necessary_iinf_any_k = Truth::any_divergent(inf.iter());

    let classification = if condition_i0 == Truth::Holds && condition_iinf == Truth::Holds {
        Classification::SufficientConditionsHold
    } else if necessary_i0_any_k == Truth::Fails || necessary_iinf_any_k == Truth::Fails {
        Classification::NecessaryFail
    } else if [condition_i0, condition_iinf, necessary_i0_any_k, necessary_iinf_any_k].contains(&Truth::Inconclusive) {
        Classification::Inconclusive
    } else {
        Classification::Gap
    };

    let row = |k: usize, end: End, v: &IntegralVerdict| TermRow {
        k,
        end,
        verdict: v.verdict,
        method: v.method,
        value_or_partial: v
            .value
            .or_else(|| v.evidence.as_ref().and_then(|e| e.partial_integrals.last().copied())),
        evidence: v.evidence.clone(),
    };
    let mut terms = Vec::with_capacity(2 * (n + 1));
    for k in 0..=n {
        terms.push(row(k, End::Zero, &zero[k]));
        terms.push(row(k, End::Infinity, &inf[k]));
    }
    CompletenessReport {
        n,
        terms,
        condition_i0,
        condition_iinf,
        necessary_i0_any_k,
        necessary_iinf_any_k,
        classification,
    }
}

/// Tolerance of the quadrature behind [`w_eval`].
pub const W_ABS_TOL: f64 = 1e-10;

/// `W(r) = sum_{k=1}^n int_1^r rho^{1/2-k} sqrt(a_k(rho)) drho`.
pub fn w_eval(cfg: &MetricConfig, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid(format!("W needs r > 0, got {r}")));
    }
    if r == 1.0 {
        return Ok(0.0);
    }
    let opts = QuadOptions {
        abs_tol: W_ABS_TOL,
        rel_tol: 1e-12,
        max_intervals: 4000,
    };
    let mut total = 0.0;
    for term in cfg.terms().iter().filter(|t| t.k >= 1) {
        let k = term.k;
        // Split into decades so each piece is well scaled.
        let mut lo = 1.0f64;
        let step = if r > 1.0 { 10.0 } else { 0.1 };
        loop {
            let hi = if r > 1.0 {
                (lo * step).min(r)
            } else {
                (lo * step).max(r)
            };
            let q = integrate_log(|x| integrand_unchecked(term, k, x), lo, hi, opts)?;
            total += q.value;
            if hi == r {
                break;
            }
            lo = hi;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::scale_invariant_profile;

    #[test]
    fn integrand_values() {
        let t = CoefficientTerm::power(0, 1.0, -3.0);
        assert!((integrand(&t, 0, 4.0).unwrap() - 0.25).abs() < 1e-15);
        let t = CoefficientTerm::constant(2, 1.0);
        assert_eq!(integrand(&t, 2, 1.0).unwrap(), 1.0);
        let t = CoefficientTerm::constant(1, 0.0);
        assert_eq!(integrand(&t, 1, 3.3).unwrap(), 0.0);
        assert!(integrand(&t, 1, 0.0).is_err());
    }

    #[test]
    fn power_law_rule_examples() {
        let c = classify_power_law(0, -3.0);
        assert_eq!((c.i0, c.iinf), (Verdict::Divergent, Verdict::Divergent));
        let c = classify_power_law(2, 0.0);
        assert_eq!((c.i0, c.iinf), (Verdict::Divergent, Verdict::Convergent));
        let c = classify_power_law(2, 2.0);
        assert_eq!((c.i0, c.iinf), (Verdict::Convergent, Verdict::Divergent));
    }

    #[test]
    fn numeric_matches_analytic_for_tabulated_power() {
        let knots: Vec<f64> = vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
        let term = CoefficientTerm::table(2, knots.clone(), vec![1.0; 6]).unwrap();
        assert_eq!(
            numeric_integral_evidence(&term, 2, End::Zero).verdict,
            Verdict::Divergent
        );
        let v = numeric_integral_evidence(&term, 2, End::Infinity);
        assert_eq!(v.verdict, Verdict::Convergent);
        // int_1^inf r^{-3/2} = 2, truncated at 1e8 leaves 2e-4.
        assert!((v.value.unwrap() - (2.0 - 2e-4)).abs() < 1e-8);
    }

    #[test]
    fn critical_integrand_is_never_convergent() {
        // k=1, a_1 = l^{-1}: integrand exactly 1/r.
        let term = CoefficientTerm::power(1, 1.0, -1.0);
        for end in [End::Zero, End::Infinity] {
            let v = numeric_integral_evidence(&term, 1, end);
            assert_ne!(v.verdict, Verdict::Convergent);
        }
    }

    #[test]
    fn zero_coefficient_numeric() {
        let term = CoefficientTerm::power(1, 0.0, 2.0);
        let v = numeric_integral_evidence(&term, 1, End::Zero);
        assert_eq!(v.verdict, Verdict::Convergent);
        assert_eq!(v.value, Some(0.0));
    }

    #[test]
    fn analyze_counterexample_families() {
        let r = analyze(&MetricConfig::two_term(-3.0, 0.0).unwrap());
        assert_eq!(r.condition_i0, Truth::Holds);
        assert_eq!(r.condition_iinf, Truth::Fails);
        assert_eq!(r.necessary_i0_any_k, Truth::Holds);
        assert_eq!(r.necessary_iinf_any_k, Truth::Holds);
        assert_eq!(r.classification, Classification::Gap);

        let r = analyze(&MetricConfig::two_term(-3.0, 2.0).unwrap());
        assert_eq!(r.condition_i0, Truth::Fails);
        assert_eq!(r.condition_iinf, Truth::Holds);
        assert_eq!(r.classification, Classification::Gap);

        let r = analyze(&scale_invariant_profile(2, &[1.0, 0.0, 1.0]).unwrap());
        assert_eq!(r.classification, Classification::SufficientConditionsHold);
    }

    #[test]
    fn analyze_necessary_failure() {
        // a_0 = l^2, a_2 = l^4: every integral converges at zero.
        let cfg = MetricConfig::two_term(2.0, 4.0).unwrap();
        let r = analyze(&cfg);
        assert_eq!(r.necessary_i0_any_k, Truth::Fails);
        assert_eq!(r.classification, Classification::NecessaryFail);
    }

    #[test]
    fn analytic_values_for_convergent_ends() {
        // k=2, a_2 = 1: int_1^inf r^{-3/2} dr = 2.
        let v = term_verdict(Some(&CoefficientTerm::constant(2, 1.0)), 2, End::Infinity);
        assert_eq!(v.value, Some(2.0));
        // k=0, a_0 = 4 l^0: int_0^1 2 r^{1/2} dr = 4/3.
        let v = term_verdict(Some(&CoefficientTerm::constant(0, 4.0)), 0, End::Zero);
        assert!((v.value.unwrap() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn w_closed_form() {
        let cfg = MetricConfig::new(
            2,
            vec![CoefficientTerm::constant(0, 1.0), CoefficientTerm::constant(2, 1.0)],
        )
        .unwrap();
        assert_eq!(w_eval(&cfg, 1.0).unwrap(), 0.0);
        for r in [1e-6, 0.01, 0.5, 2.0, 37.0, 1e6] {
            let exact = 2.0 * (1.0 - 1.0 / f64::sqrt(r));
            let w = w_eval(&cfg, r).unwrap();
            assert!(
                (w - exact).abs() <= 1e-9 * exact.abs().max(1.0),
                "r={r}: {w} vs {exact}"
            );
        }
        assert!(w_eval(&cfg, 0.0).is_err());
    }

    #[test]
    fn report_serializes_rows() {
        let r = analyze(&MetricConfig::two_term(-3.0, 0.0).unwrap());
        let j = serde_json::to_value(&r).unwrap();
        assert_eq!(j["classification"], "gap");
        assert_eq!(j["terms"].as_array().unwrap().len(), 6);
        assert_eq!(j["terms"][0]["end"], "zero");
        assert_eq!(j["terms"][0]["method"], "analytic_power_law");
    }
}
