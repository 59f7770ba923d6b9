//! Closed curves sampled on a periodic grid, arc-length calculus and norms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{derivative, dot, norm2, Grid, Samples};

/// Largest arc-length derivative order accepted by [`arc_derivative`].
pub const MAX_ARC_ORDER: usize = 8;

/// Relative floor below which a discrete speed counts as zero.
const IMMERSION_REL_FLOOR: f64 = 1e-12;

/// Samples of a closed immersed curve together with its speed `|c'|`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    grid: Grid,
    samples: Samples,
    speed: Vec<f64>,
}

impl DiscreteCurve {
    pub fn new(grid: Grid, samples: Samples) -> Result<Self> {
        if samples.dim() < 2 {
            return Err(invalid("curves live in R^d with d >= 2"));
        }
        let speed = speed_of(&grid, &samples)?;
        check_immersion(&speed)?;
        Ok(DiscreteCurve { grid, samples, speed })
    }

    pub fn from_fn(grid: Grid, dim: usize, f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let samples = Samples::from_fn(&grid, dim, f)?;
        Self::new(grid, samples)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn into_samples(self) -> Samples {
        self.samples
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Cached `|c'(theta_j)|`.
    pub fn speed(&self) -> &[f64] {
        &self.speed
    }

    pub fn scaled(&self, rho: f64) -> Result<DiscreteCurve> {
        DiscreteCurve::new(self.grid, self.samples.scaled(rho))
    }

    /// Applies `p -> R p + v` to every sample. `rotation` is row-major `d x d`.
    pub fn transformed(&self, rotation: &[f64], shift: &[f64]) -> Result<DiscreteCurve> {
        let d = self.dim();
        if rotation.len() != d * d || shift.len() != d {
            return Err(invalid("rigid motion has the wrong dimension"));
        }
        let s = self.samples.map_rows(|p| {
            (0..d)
                .map(|i| dot(&rotation[i * d..(i + 1) * d], p) + shift[i])
                .collect()
        });
        DiscreteCurve::new(self.grid, s)
    }

    /// The samples viewed as a tangent field along the curve itself.
    pub fn as_field(&self) -> TangentField {
        TangentField {
            grid: self.grid,
            values: self.samples.clone(),
        }
    }
}

/// Vector field along a curve, sampled on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField {
    grid: Grid,
    values: Samples,
}

impl TangentField {
    pub fn new(grid: Grid, values: Samples) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(TangentField { grid, values })
    }

    pub fn from_fn(grid: Grid, dim: usize, f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let values = Samples::from_fn(&grid, dim, f)?;
        Self::new(grid, values)
    }

    pub fn zeros(grid: Grid, dim: usize) -> Self {
        TangentField {
            grid,
            values: Samples::zeros(grid.len(), dim),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &Samples {
        &self.values
    }

    pub fn into_values(self) -> Samples {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.dim()
    }

    pub fn scaled(&self, a: f64) -> TangentField {
        TangentField {
            grid: self.grid,
            values: self.values.scaled(a),
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &TangentField, b: f64) -> TangentField {
        TangentField {
            grid: self.grid,
            values: self.values.combine(a, &other.values, b),
        }
    }

    pub fn rotated(&self, rotation: &[f64]) -> TangentField {
        let d = self.dim();
        TangentField {
            grid: self.grid,
            values: self
                .values
                .map_rows(|p| (0..d).map(|i| dot(&rotation[i * d..(i + 1) * d], p)).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    L2Dtheta,
    L2Ds,
    HnDtheta(usize),
    HnDs(usize),
}

pub(crate) fn speed_of(grid: &Grid, samples: &Samples) -> Result<Vec<f64>> {
    Ok(derivative(samples, grid)?.norms())
}

fn check_immersion(speed: &[f64]) -> Result<()> {
    let max = speed.iter().cloned().fold(0.0, f64::max);
    let floor = IMMERSION_REL_FLOOR * max;
    for (index, &s) in speed.iter().enumerate() {
        if !(s > floor) || !s.is_finite() {
            return Err(Error::NotImmersion {
                n: speed.len(),
                index,
                speed: s,
            });
        }
    }
    Ok(())
}

pub(crate) fn check_grids(c: &DiscreteCurve, h: &TangentField) -> Result<()> {
    if c.grid != h.grid {
        return Err(Error::GridMismatch(format!(
            "curve has N={}, field has N={}",
            c.grid.len(),
            h.grid.len()
        )));
    }
    if c.dim() != h.dim() {
        return Err(Error::GridMismatch(format!(
            "curve lives in R^{}, field in R^{}",
            c.dim(),
            h.dim()
        )));
    }
    Ok(())
}

/// Pointwise `|c'(theta_j)|`, rejecting curves that are not immersions.
pub fn arc_speed(c: &DiscreteCurve) -> Result<Vec<f64>> {
    let speed = speed_of(&c.grid, &c.samples)?;
    check_immersion(&speed)?;
    Ok(speed)
}

/// All arc-length derivatives `D_s^0 h, ..., D_s^k h`.
pub(crate) fn arc_derivatives(c: &DiscreteCurve, h: &Samples, k: usize) -> Result<Vec<Samples>> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(h.clone());
    for i in 0..k {
        let next = derivative(&out[i], &c.grid)?.div_rows(&c.speed);
        out.push(next);
    }
    Ok(out)
}

/// `D_s^k h = ((1/|c'|) d/dtheta)^k h`.
pub fn arc_derivative(c: &DiscreteCurve, h: &TangentField, k: usize) -> Result<TangentField> {
    check_grids(c, h)?;
    if k > MAX_ARC_ORDER {
        return Err(invalid(format!(
            "arc-length derivative order {k} exceeds {MAX_ARC_ORDER}"
        )));
    }
    let values = arc_derivatives(c, &h.values, k)?.pop().expect("k+1 entries");
    Ok(TangentField { grid: c.grid, values })
}

/// `int f ds` by the periodic trapezoid rule.
pub fn integrate_ds(c: &DiscreteCurve, f: &[f64]) -> Result<f64> {
    if f.len() != c.len() {
        return Err(Error::LengthMismatch {
            expected: c.len(),
            found: f.len(),
        });
    }
    let s: f64 = f.iter().zip(&c.speed).map(|(fj, sj)| fj * sj).sum();
    Ok(s * c.grid.weight())
}

pub fn curve_length(c: &DiscreteCurve) -> f64 {
    integrate_ds(c, &vec![1.0; c.len()]).expect("lengths agree")
}

/// `int |u|^2 ds` for a field sampled on the curve's grid.
pub(crate) fn sq_l2_ds(c: &DiscreteCurve, u: &Samples) -> f64 {
    let s: f64 = u.rows().zip(&c.speed).map(|(p, sj)| dot(p, p) * sj).sum();
    s * c.grid.weight()
}

pub(crate) fn sq_l2_dtheta(grid: &Grid, u: &Samples) -> f64 {
    dot(u.as_slice(), u.as_slice()) * grid.weight()
}

pub fn norm(c: &DiscreteCurve, h: &TangentField, kind: NormKind) -> Result<f64> {
    check_grids(c, h)?;
    let sq = match kind {
        NormKind::L2Dtheta => sq_l2_dtheta(&c.grid, &h.values),
        NormKind::L2Ds => sq_l2_ds(c, &h.values),
        NormKind::HnDtheta(n) => {
            if n == 0 {
                return Err(invalid("Sobolev order must be >= 1"));
            }
            let mut d = h.values.clone();
            for _ in 0..n {
                d = derivative(&d, &c.grid)?;
            }
            sq_l2_dtheta(&c.grid, &h.values) + sq_l2_dtheta(&c.grid, &d)
        }
        NormKind::HnDs(n) => {
            if n == 0 || n > MAX_ARC_ORDER {
                return Err(invalid(format!("Sobolev order {n} out of range")));
            }
            let ds = arc_derivatives(c, &h.values, n)?;
            sq_l2_ds(c, &ds[0]) + sq_l2_ds(c, &ds[n])
        }
    };
    Ok(sq.sqrt())
}

/// Sup norm over the grid of the pointwise Euclidean length.
pub fn sup_norm(h: &TangentField) -> f64 {
    h.values.rows().map(norm2).fold(0.0, f64::max)
}

/// Circle of radius `r`; the dimension is taken from `center`.
pub fn make_circle(r: f64, center: &[f64], grid: Grid) -> Result<DiscreteCurve> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(invalid(format!("circle radius must be positive, got {r}")));
    }
    let d = center.len();
    if d < 2 {
        return Err(invalid("circle center needs at least two coordinates"));
    }
    DiscreteCurve::from_fn(grid, d, |t| {
        let mut p = center.to_vec();
        p[0] += r * t.cos();
        p[1] += r * t.sin();
        p
    })
}

/// Points per bump frequency required for a bumpy circle.
pub const BUMPY_POINTS_PER_FREQUENCY: usize = 32;

/// `r (1 + eps sin(lambda theta)) (cos theta, sin theta)`: a circle with `2 lambda` bumps.
pub fn make_bumpy_circle(r: f64, eps: f64, lambda: u32, grid: Grid) -> Result<DiscreteCurve> {
    make_bumpy_circle_with(r, eps, lambda, grid, false)
}

#[doc(hidden)]
pub fn make_bumpy_circle_with(
    r: f64,
    eps: f64,
    lambda: u32,
    grid: Grid,
    allow_zero_eps: bool,
) -> Result<DiscreteCurve> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(invalid(format!("radius must be positive, got {r}")));
    }
    let eps_ok = (eps > 0.0 || (allow_zero_eps && eps == 0.0)) && eps < 1.0 / 3.0;
    if !eps_ok {
        return Err(invalid(format!("bump amplitude must lie in (0, 1/3), got {eps}")));
    }
    if lambda == 0 {
        return Err(invalid("bump frequency must be positive"));
    }
    let needed = BUMPY_POINTS_PER_FREQUENCY * lambda as usize;
    if grid.len() < needed {
        return Err(invalid(format!(
            "N={} cannot resolve frequency {lambda}; need N >= {needed}",
            grid.len()
        )));
    }
    let lam = lambda as f64;
    DiscreteCurve::from_fn(grid, 2, |t| {
        let rad = r * (1.0 + eps * (lam * t).sin());
        vec![rad * t.cos(), rad * t.sin()]
    })
}

/// Evaluates the periodic sequence `values` (one row per node) at angle `x`
/// by four-point Lagrange interpolation.
pub(crate) fn interpolate_periodic(values: &Samples, grid: &Grid, x: f64, out: &mut [f64]) {
    let n = grid.len() as isize;
    let u = x.rem_euclid(2.0 * PI) / grid.spacing();
    let nearest = u.round();
    if (u - nearest).abs() < 1e-12 {
        let j = (nearest as isize).rem_euclid(n) as usize;
        out.copy_from_slice(values.point(j));
        return;
    }
    let i = u.floor();
    let t = u - i;
    let i = i as isize;
    let w = [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ];
    out.iter_mut().for_each(|o| *o = 0.0);
    for (k, wk) in w.iter().enumerate() {
        let j = (i - 1 + k as isize).rem_euclid(n) as usize;
        for (o, v) in out.iter_mut().zip(values.point(j)) {
            *o += wk * v;
        }
    }
}

/// Resamples `c` at the angles `phi`, which must increase strictly and wrap once.
pub fn reparametrize(c: &DiscreteCurve, phi: &[f64]) -> Result<DiscreteCurve> {
    if phi.len() != c.len() {
        return Err(Error::LengthMismatch {
            expected: c.len(),
            found: phi.len(),
        });
    }
    let increasing = phi.windows(2).all(|w| w[1] > w[0]);
    let wraps = phi[0] + 2.0 * PI > phi[phi.len() - 1];
    if !increasing || !wraps {
        return Err(invalid("reparametrization must be strictly increasing modulo 2 pi"));
    }
    let d = c.dim();
    let mut data = vec![0.0; c.len() * d];
    for (j, &x) in phi.iter().enumerate() {
        interpolate_periodic(&c.samples, &c.grid, x, &mut data[j * d..(j + 1) * d]);
    }
    DiscreteCurve::new(c.grid, Samples::new(d, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::with_points(n).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn circle_speed_is_radius() {
        // The stencil shrinks the speed by exactly its symbol error, so a
        // 1e-10 match needs a fine grid.
        let c = make_circle(2.0, &[0.0, 0.0], grid(2048)).unwrap();
        assert!(c.speed().iter().all(|&s| rel(s, 2.0) < 1e-10));
        let c = make_circle(3.0, &[0.0, 0.0], grid(64)).unwrap();
        let expected = 3.0 * grid(64).derivative_symbol(1.0);
        assert!(c.speed().iter().all(|&s| rel(s, expected) < 1e-13));
    }

    #[test]
    fn translation_leaves_speed_unchanged() {
        let a = make_circle(3.0, &[0.0, 0.0], grid(64)).unwrap();
        let b = make_circle(3.0, &[5.0, -2.0], grid(64)).unwrap();
        for (x, y) in a.speed().iter().zip(b.speed()) {
            assert!(rel(*x, *y) < 1e-13);
        }
    }

    #[test]
    fn circle_rejects_bad_radius() {
        assert!(make_circle(0.0, &[0.0, 0.0], grid(32)).is_err());
        assert!(make_circle(-1.0, &[0.0, 0.0], grid(32)).is_err());
    }

    #[test]
    fn bumpy_speed_at_zero() {
        let (r, eps, lam) = (1.0, 0.25, 4u32);
        let c = make_bumpy_circle(r, eps, lam, grid(1024)).unwrap();
        let exact = r * (1.0 + eps * eps * (lam * lam) as f64).sqrt();
        assert!(rel(c.speed()[0], exact) < 1e-6);
    }

    #[test]
    fn bumpy_lower_bound_on_speed() {
        let c = make_bumpy_circle(1.0, 0.25, 4, grid(256)).unwrap();
        let min = c.speed().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= 0.75, "min speed {min}");
    }

    #[test]
    fn bumpy_length_exceeds_cosine_bound() {
        // |c'| >= eps r lambda |cos(lambda theta)| and int |cos| = 4, so l >= 4 eps r lambda.
        let c = make_bumpy_circle(1.0, 0.25, 8, grid(1024)).unwrap();
        assert!(curve_length(&c) >= 8.0);
    }

    #[test]
    fn bumpy_argument_checks() {
        let g = grid(256);
        assert!(make_bumpy_circle(1.0, 0.0, 5, g).is_err());
        assert!(make_bumpy_circle(1.0, 0.34, 5, g).is_err());
        assert!(make_bumpy_circle(1.0, 0.2, 9, g).is_err());
        let flat = make_bumpy_circle_with(1.0, 0.0, 5, g, true).unwrap();
        assert!(rel(curve_length(&flat), 2.0 * PI) < 1e-7);
    }

    #[test]
    fn retracing_curve_is_not_an_immersion() {
        // (cos t, cos 2t) runs along a parabola and turns back at t = 0 and pi.
        let g = grid(64);
        let mut rows = Vec::new();
        for j in 0..64usize {
            let t = g.theta(j.min(64 - j));
            rows.push(vec![t.cos(), (2.0 * t).cos()]);
        }
        let s = Samples::from_rows(&rows).unwrap();
        match DiscreteCurve::new(g, s) {
            Err(Error::NotImmersion { index, .. }) => assert!(index == 0 || index == 32),
            other => panic!("expected NotImmersion, got {other:?}"),
        }
    }

    #[test]
    fn arc_derivative_on_circles() {
        let g = grid(512);
        let c = make_circle(1.0, &[0.0, 0.0], g).unwrap();
        let t = arc_derivative(&c, &c.as_field(), 1).unwrap();
        let v = TangentField::from_fn(g, 2, |x| vec![-x.sin(), x.cos()]).unwrap();
        assert!(sup_norm(&t.combine(1.0, &v, -1.0)) < 1e-12);

        let r = 2.5;
        let c = make_circle(r, &[0.0, 0.0], g).unwrap();
        let k = arc_derivative(&c, &c.as_field(), 2).unwrap();
        let expected = TangentField::from_fn(g, 2, |x| vec![-x.cos() / r, -x.sin() / r]).unwrap();
        assert!(sup_norm(&k.combine(1.0, &expected, -1.0)) < 1e-12);

        let h = TangentField::from_fn(g, 2, |x| vec![x.sin(), 1.0]).unwrap();
        assert_eq!(arc_derivative(&c, &h, 0).unwrap(), h);
    }

    #[test]
    fn arc_derivative_scaling() {
        let g = grid(128);
        let c = make_bumpy_circle(1.0, 0.2, 3, Grid::with_points(128).unwrap()).unwrap();
        let h = TangentField::from_fn(g, 2, |x| vec![(2.0 * x).sin(), x.cos() + 0.5]).unwrap();
        for rho in [0.1, 3.0, 50.0] {
            let cs = c.scaled(rho).unwrap();
            for k in 0..=4 {
                let a = arc_derivative(&cs, &h, k).unwrap();
                let b = arc_derivative(&c, &h, k).unwrap().scaled(rho.powi(-(k as i32)));
                let diff = sup_norm(&a.combine(1.0, &b, -1.0));
                // Rounding in the speed grows about fourfold per stencil pass.
                let tol = if k <= 3 { 1e-13 } else { 1e-12 };
                assert!(diff <= tol * sup_norm(&b).max(1e-300), "k={k} rho={rho}");
            }
        }
    }

    #[test]
    fn grid_mismatch_detected() {
        let c = make_circle(1.0, &[0.0, 0.0], grid(32)).unwrap();
        let h = TangentField::zeros(grid(64), 2);
        assert!(matches!(arc_derivative(&c, &h, 1), Err(Error::GridMismatch(_))));
        let h3 = TangentField::zeros(grid(32), 3);
        assert!(matches!(norm(&c, &h3, NormKind::L2Ds), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn length_and_integrals() {
        let g = grid(8192);
        let c = make_circle(1.7, &[0.0, 0.0], g).unwrap();
        assert!(rel(curve_length(&c), 2.0 * PI * 1.7) < 1e-12);

        let c = make_circle(1.0, &[0.0, 0.0], grid(128)).unwrap();
        let ones = vec![1.0; 128];
        assert_eq!(integrate_ds(&c, &ones).unwrap(), curve_length(&c));
        let a = 3.7;
        let consts = vec![a; 128];
        assert!(rel(integrate_ds(&c, &consts).unwrap(), a * curve_length(&c)) < 1e-14);
        assert!(integrate_ds(&c, &ones[..100]).is_err());

        let c = make_circle(1.0, &[0.0, 0.0], grid(1024)).unwrap();
        let k = arc_derivative(&c, &c.as_field(), 2).unwrap();
        let f: Vec<f64> = k.values().rows().map(|p| dot(p, p)).collect();
        assert!(rel(integrate_ds(&c, &f).unwrap(), 2.0 * PI) < 1e-10);
    }

    #[test]
    fn length_scales_linearly() {
        let c = make_bumpy_circle(1.0, 0.2, 3, grid(128)).unwrap();
        let l = curve_length(&c);
        assert!(rel(curve_length(&c.scaled(7.5).unwrap()), 7.5 * l) < 1e-14);
    }

    #[test]
    fn circle_norms() {
        let c = make_circle(1.0, &[0.0, 0.0], grid(1024)).unwrap();
        let h = c.as_field();
        assert!(rel(norm(&c, &h, NormKind::L2Ds).unwrap(), (2.0 * PI).sqrt()) < 1e-10);
        assert!(rel(norm(&c, &h, NormKind::HnDs(2)).unwrap(), (4.0 * PI).sqrt()) < 1e-10);
        assert!(rel(norm(&c, &h, NormKind::L2Dtheta).unwrap(), (2.0 * PI).sqrt()) < 1e-12);
        assert_eq!(
            norm(&c, &TangentField::zeros(*c.grid(), 2), NormKind::HnDs(3)).unwrap(),
            0.0
        );
        assert!(norm(&c, &h, NormKind::HnDs(0)).is_err());
    }

    #[test]
    fn reparametrize_identity_and_shift() {
        let g = grid(256);
        let c = make_bumpy_circle(1.0, 0.2, 3, g).unwrap();
        let id: Vec<f64> = g.thetas().collect();
        let same = reparametrize(&c, &id).unwrap();
        assert_eq!(same.samples(), c.samples());

        // Cubic interpolation shrinks the circle by O(h^4), so 1e-10 needs a fine grid.
        let g = grid(2048);
        let circ = make_circle(1.0, &[0.0, 0.0], g).unwrap();
        let shift: Vec<f64> = g.thetas().map(|t| t + 0.37).collect();
        let moved = reparametrize(&circ, &shift).unwrap();
        assert!((curve_length(&moved) - curve_length(&circ)).abs() < 1e-10);
    }

    #[test]
    fn reparametrize_smooth_map() {
        let g = grid(512);
        let c = make_circle(1.0, &[0.0, 0.0], g).unwrap();
        let phi: Vec<f64> = g.thetas().map(|t| t + 0.3 * t.sin()).collect();
        let r = reparametrize(&c, &phi).unwrap();
        assert!((curve_length(&r) - 2.0 * PI).abs() <= 1e-6);
    }

    #[test]
    fn reparametrize_rejects_non_monotone() {
        let g = grid(32);
        let c = make_circle(1.0, &[0.0, 0.0], g).unwrap();
        let mut phi: Vec<f64> = g.thetas().collect();
        phi.swap(3, 4);
        assert!(reparametrize(&c, &phi).is_err());
        let wrapped: Vec<f64> = g.thetas().map(|t| 2.5 * t).collect();
        assert!(reparametrize(&c, &wrapped).is_err());
    }
}
