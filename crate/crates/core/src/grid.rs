//! Uniform periodic grids on the circle and the finite-difference derivative.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniform grid `theta_j = 2 pi j / N` on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(rename = "N")]
    n: usize,
    #[serde(default = "default_order")]
    scheme_order: u8,
}

fn default_order() -> u8 {
    4
}

impl Grid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(n: usize, scheme_order: u8) -> Result<Self> {
        let g = Grid { n, scheme_order };
        g.validate()?;
        Ok(g)
    }

    /// Fourth-order grid, the default scheme.
    pub fn with_points(n: usize) -> Result<Self> {
        Self::new(n, 4)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n < Self::MIN_POINTS || !self.n.is_multiple_of(2) {
            return Err(invalid(format!(
                "grid needs an even N >= {}, got {}",
                Self::MIN_POINTS,
                self.n
            )));
        }
        if self.scheme_order != 2 && self.scheme_order != 4 {
            return Err(invalid(format!(
                "scheme order must be 2 or 4, got {}",
                self.scheme_order
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn scheme_order(&self) -> u8 {
        self.scheme_order
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Trapezoid weight, identical for every node.
    pub fn weight(&self) -> f64 {
        self.spacing()
    }

    pub fn theta(&self, j: usize) -> f64 {
        2.0 * PI * (j % self.n) as f64 / self.n as f64
    }

    pub fn thetas(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |j| self.theta(j))
    }

    /// Multiplier of the discrete derivative on the Fourier mode `e^{i m theta}`
    /// (the exact derivative would give `m`).
    pub fn derivative_symbol(&self, m: f64) -> f64 {
        let h = self.spacing();
        match self.scheme_order {
            2 => (m * h).sin() / h,
            _ => (8.0 * (m * h).sin() - (2.0 * m * h).sin()) / (6.0 * h),
        }
    }
}

/// `N` points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    dim: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(invalid(format!(
                "{} values cannot be split into points of dimension {}",
                data.len(),
                dim
            )));
        }
        Ok(Samples { dim, data })
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        Samples {
            dim,
            data: vec![0.0; len * dim],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (j, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(invalid(format!("row {j} has {} coordinates, expected {dim}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Samples::new(dim, data)
    }

    pub fn from_fn(grid: &Grid, dim: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let mut data = Vec::with_capacity(grid.len() * dim);
        for theta in grid.thetas() {
            let p = f(theta);
            if p.len() != dim {
                return Err(invalid(format!("point has {} coordinates, expected {dim}", p.len())));
            }
            data.extend(p);
        }
        Ok(Samples { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn point_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn norms(&self) -> Vec<f64> {
        self.rows().map(norm2).collect()
    }

    pub fn scaled(&self, a: f64) -> Samples {
        Samples {
            dim: self.dim,
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Samples, b: f64) -> Samples {
        debug_assert_eq!(self.data.len(), other.data.len());
        Samples {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect(),
        }
    }

    /// Divides row `j` by `w[j]`.
    pub fn div_rows(&self, w: &[f64]) -> Samples {
        let mut out = self.clone();
        for (row, wj) in out.data.chunks_exact_mut(self.dim).zip(w) {
            row.iter_mut().for_each(|x| *x /= wj);
        }
        out
    }

    /// Maps each point through `f`, which must preserve the dimension.
    pub fn map_rows(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Samples {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            data.extend(f(row));
        }
        Samples { dim: self.dim, data }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

pub(crate) fn norm2(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Periodic central difference `d/dtheta` of each coordinate.
pub fn derivative(values: &Samples, grid: &Grid) -> Result<Samples> {
    let n = grid.len();
    if values.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: values.len(),
        });
    }
    let dim = values.dim();
    let h = grid.spacing();
    let v = values.as_slice();
    let mut out = vec![0.0; v.len()];
    let at = |j: usize, i: usize, off: isize| -> f64 {
        let jj = (j as isize + off).rem_euclid(n as isize) as usize;
        v[jj * dim + i]
    };
    match grid.scheme_order() {
        2 => {
            let c = 1.0 / (2.0 * h);
            for j in 0..n {
                for i in 0..dim {
                    out[j * dim + i] = (at(j, i, 1) - at(j, i, -1)) * c;
                }
            }
        }
        _ => {
            let c = 1.0 / (12.0 * h);
            for j in 0..n {
                for i in 0..dim {
                    let d1 = at(j, i, 1) - at(j, i, -1);
                    let d2 = at(j, i, 2) - at(j, i, -2);
                    out[j * dim + i] = (8.0 * d1 - d2) * c;
                }
            }
        }
    }
    Ok(Samples { dim, data: out })
}

/// Transpose of [`derivative`]; the stencil is antisymmetric so this is `-D`.
pub(crate) fn derivative_transpose(values: &Samples, grid: &Grid) -> Result<Samples> {
    let mut d = derivative(values, grid)?;
    d.data.iter_mut().for_each(|x| *x = -*x);
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_err(a: &Samples, b: &Samples) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn grid_rejects_small_or_odd() {
        assert!(Grid::new(8, 4).is_err());
        assert!(Grid::new(17, 4).is_err());
        assert!(Grid::new(32, 3).is_err());
        assert!(Grid::new(16, 2).is_ok());
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        for order in [2, 4] {
            let g = Grid::new(32, order).unwrap();
            let v = Samples::from_fn(&g, 3, |_| vec![1.5, -2.0, 7.25]).unwrap();
            let d = derivative(&v, &g).unwrap();
            assert!(d.as_slice().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn derivative_of_unit_circle_matches_symbol_error() {
        // The fourth-order stencil multiplies (cos, sin) by 1 - h^4/30 + O(h^6);
        // at N=256 that is 1.2096e-8.
        let g = Grid::with_points(256).unwrap();
        let c = Samples::from_fn(&g, 2, |t| vec![t.cos(), t.sin()]).unwrap();
        let exact = Samples::from_fn(&g, 2, |t| vec![-t.sin(), t.cos()]).unwrap();
        let err = max_err(&derivative(&c, &g).unwrap(), &exact);
        let h = g.spacing();
        let predicted = 1.0 - g.derivative_symbol(1.0);
        assert!((predicted - h.powi(4) / 30.0).abs() < 1e-12);
        assert!((err - predicted).abs() < 1e-3 * predicted, "err {err}");
        assert!(err < 1.25e-8);
        let g512 = Grid::with_points(512).unwrap();
        let c = Samples::from_fn(&g512, 2, |t| vec![t.cos(), t.sin()]).unwrap();
        let exact = Samples::from_fn(&g512, 2, |t| vec![-t.sin(), t.cos()]).unwrap();
        assert!(max_err(&derivative(&c, &g512).unwrap(), &exact) <= 1e-8);
    }

    #[test]
    fn fourth_order_convergence_on_sin3() {
        let err = |n: usize| {
            let g = Grid::with_points(n).unwrap();
            let v = Samples::from_fn(&g, 1, |t| vec![(3.0 * t).sin()]).unwrap();
            let exact = Samples::from_fn(&g, 1, |t| vec![3.0 * (3.0 * t).cos()]).unwrap();
            max_err(&derivative(&v, &g).unwrap(), &exact)
        };
        let ratio = err(64) / err(128);
        assert!((15.0..17.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn second_order_convergence() {
        let err = |n: usize| {
            let g = Grid::new(n, 2).unwrap();
            let v = Samples::from_fn(&g, 1, |t| vec![(2.0 * t).cos()]).unwrap();
            let exact = Samples::from_fn(&g, 1, |t| vec![-2.0 * (2.0 * t).sin()]).unwrap();
            max_err(&derivative(&v, &g).unwrap(), &exact)
        };
        let ratio = err(64) / err(128);
        assert!((3.8..4.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let g = Grid::with_points(32).unwrap();
        let v = Samples::zeros(30, 2);
        assert!(matches!(
            derivative(&v, &g),
            Err(Error::LengthMismatch {
                expected: 32,
                found: 30
            })
        ));
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = Grid::with_points(32).unwrap();
        let a = Samples::from_fn(&g, 2, |t| vec![(2.0 * t).sin() + 0.3, t.cos().powi(3)]).unwrap();
        let b = Samples::from_fn(&g, 2, |t| vec![(5.0 * t).cos(), (t + 1.0).sin()]).unwrap();
        let lhs = dot(derivative(&a, &g).unwrap().as_slice(), b.as_slice());
        let rhs = dot(a.as_slice(), derivative_transpose(&b, &g).unwrap().as_slice());
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
