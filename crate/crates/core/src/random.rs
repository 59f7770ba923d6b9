//! Seeded generators for band-limited test curves, fields and rigid motions.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::curve::{DiscreteCurve, TangentField};
use crate::error::{Error, Result};
use crate::grid::{Grid, Samples};

/// Highest Fourier mode used by the generators.
pub const DEFAULT_MODES: usize = 8;

/// Acceptance ratio `min |c'| / mean |c'|` for random curves.
pub const MIN_SPEED_RATIO: f64 = 0.1;

fn decay(m: usize) -> f64 {
    (2.0 / (1.0 + m as f64)).powi(3)
}

fn fourier_samples<R: Rng + ?Sized>(
    rng: &mut R,
    grid: &Grid,
    dim: usize,
    modes: std::ops::RangeInclusive<usize>,
    scale: f64,
) -> Samples {
    let mut coeffs = Vec::new();
    for m in modes {
        let amp = scale * decay(m);
        let a: Vec<f64> = (0..dim).map(|_| amp * rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..dim).map(|_| amp * rng.sample::<f64, _>(StandardNormal)).collect();
        coeffs.push((m as f64, a, b));
    }
    Samples::from_fn(grid, dim, |t| {
        let mut p = vec![0.0; dim];
        for (m, a, b) in &coeffs {
            let (s, c) = (m * t).sin_cos();
            for i in 0..dim {
                p[i] += a[i] * c + b[i] * s;
            }
        }
        p
    })
    .expect("dimension is consistent")
}

/// Truncated Fourier series with `|c_m| ~ (1+m)^-3`, rejection sampled until
/// `min |c'| >= 0.1 mean |c'|`.
pub fn random_curve<R: Rng + ?Sized>(rng: &mut R, grid: Grid, dim: usize) -> Result<DiscreteCurve> {
    for _ in 0..1000 {
        let mut s = fourier_samples(rng, &grid, dim, 1..=DEFAULT_MODES, 1.0);
        let shift: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for j in 0..s.len() {
            for (x, v) in s.point_mut(j).iter_mut().zip(&shift) {
                *x += v;
            }
        }
        if let Ok(c) = DiscreteCurve::new(grid, s) {
            let sp = c.speed();
            let mean = sp.iter().sum::<f64>() / sp.len() as f64;
            let min = sp.iter().cloned().fold(f64::INFINITY, f64::min);
            if min >= MIN_SPEED_RATIO * mean {
                return Ok(c);
            }
        }
    }
    Err(Error::Solver(
        "rejection sampling of random curves did not terminate".into(),
    ))
}

/// Band-limited random field, modes `0..=DEFAULT_MODES`.
pub fn random_field<R: Rng + ?Sized>(rng: &mut R, grid: Grid, dim: usize) -> TangentField {
    let values = fourier_samples(rng, &grid, dim, 0..=DEFAULT_MODES, 1.0);
    TangentField::new(grid, values).expect("lengths agree")
}

/// Uniform random rotation of `R^d` as a row-major matrix.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    if dim == 2 {
        let a = rng.gen_range(0.0..2.0 * PI);
        let (s, c) = a.sin_cos();
        return vec![c, -s, s, c];
    }
    // Gram-Schmidt on a Gaussian matrix, then fix the orientation.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for r in &rows {
            let p: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(x, y)| *x -= p * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            rows.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    if determinant_sign(&rows) < 0.0 {
        rows[0].iter_mut().for_each(|x| *x = -*x);
    }
    rows.concat()
}

fn determinant_sign(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let mut sign = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            m.swap(piv, col);
            sign = -sign;
        }
        if m[col][col] < 0.0 {
            sign = -sign;
        }
        let (top, rest) = m.split_at_mut(col + 1);
        let pivot = &top[col];
        for row in rest.iter_mut() {
            let f = row[col] / pivot[col];
            for (x, p) in row[col..n].iter_mut().zip(&pivot[col..n]) {
                *x -= f * p;
            }
        }
    }
    sign
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn curves_are_accepted_immersions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = Grid::with_points(128).unwrap();
        for _ in 0..20 {
            let c = random_curve(&mut rng, g, 2).unwrap();
            let sp = c.speed();
            let mean = sp.iter().sum::<f64>() / sp.len() as f64;
            assert!(sp.iter().all(|&s| s >= MIN_SPEED_RATIO * mean));
        }
    }

    #[test]
    fn rotations_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2, 3, 4] {
            let r = random_rotation(&mut rng, d);
            for i in 0..d {
                for j in 0..d {
                    let p: f64 = (0..d).map(|k| r[i * d + k] * r[j * d + k]).sum();
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((p - e).abs() < 1e-12);
                }
            }
            let rows: Vec<Vec<f64>> = r.chunks(d).map(|c| c.to_vec()).collect();
            assert_eq!(determinant_sign(&rows), 1.0);
        }
    }

    #[test]
    fn same_seed_same_curve() {
        let g = Grid::with_points(64).unwrap();
        let a = random_curve(&mut ChaCha8Rng::seed_from_u64(11), g, 3).unwrap();
        let b = random_curve(&mut ChaCha8Rng::seed_from_u64(11), g, 3).unwrap();
        assert_eq!(a, b);
    }
}
