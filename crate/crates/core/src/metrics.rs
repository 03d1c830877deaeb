//! Reconstruction quality measures: relative error, SSIM and the Gini index.

use thiserror::Error;

use crate::Real;
use nalgebra::DVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("reference vector has zero norm")]
    ZeroTruth,
    #[error("Gini index of the zero vector is undefined")]
    ZeroVector,
    #[error("shape {0:?} does not match length {1}")]
    Shape((usize, usize), usize),
}

/// `‖x − x_true‖ / ‖x_true‖`.
pub fn rre<T: Real>(x: &DVector<T>, x_true: &DVector<T>) -> Result<f64, MetricError> {
    let den = x_true.norm().f64();
    if den == 0.0 {
        return Err(MetricError::ZeroTruth);
    }
    Ok((x - x_true).norm().f64() / den)
}

/// Normalized sparsity measure of `c`: 0 for constant magnitudes, `1 − 1/K`
/// for a one-hot vector.
pub fn gini_index<T: Real>(c: &DVector<T>) -> Result<f64, MetricError> {
    let mut mags: Vec<f64> = c.iter().map(|v| v.f64().abs()).collect();
    let l1: f64 = mags.iter().sum();
    if l1 == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    mags.sort_by(f64::total_cmp);
    let k = mags.len() as f64;
    let acc: f64 = mags
        .iter()
        .enumerate()
        .map(|(i, m)| m / l1 * ((k - (i as f64 + 1.0) + 0.5) / k))
        .sum();
    Ok((1.0 - 2.0 * acc).clamp(0.0, 1.0))
}

const WIN: usize = 11;
const SIGMA: f64 = 1.5;

fn gaussian_window() -> [f64; WIN] {
    let mut g = [0.0; WIN];
    let c = (WIN / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Half-sample symmetric reflection of an out-of-range index.
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian filtering of a row-major `ny × nx` image.
fn filter(img: &[f64], ny: usize, nx: usize, g: &[f64; WIN]) -> Vec<f64> {
    let h = (WIN / 2) as isize;
    let mut tmp = vec![0.0; img.len()];
    for r in 0..ny {
        for c in 0..nx {
            tmp[c + nx * r] = (0..WIN)
                .map(|k| g[k] * img[reflect(c as isize + k as isize - h, nx) + nx * r])
                .sum();
        }
    }
    let mut out = vec![0.0; img.len()];
    for r in 0..ny {
        for c in 0..nx {
            out[c + nx * r] = (0..WIN)
                .map(|k| g[k] * tmp[c + nx * reflect(r as isize + k as isize - h, ny)])
                .sum();
        }
    }
    out
}

/// Mean structural similarity with an 11-tap Gaussian window (σ = 1.5).
///
/// `shape = (ny, nx)` with pixel `(r, c)` at index `c + nx·r`; a signal is
/// passed as `(1, N)`. Border pixels within half a window of an edge are
/// left out of the mean along every axis long enough to have an interior.
pub fn ssim<T: Real>(x: &DVector<T>, x_true: &DVector<T>, shape: (usize, usize)) -> Result<f64, MetricError> {
    let (ny, nx) = shape;
    if ny * nx != x.len() || x.len() != x_true.len() {
        return Err(MetricError::Shape(shape, x.len()));
    }
    let a: Vec<f64> = x.iter().map(|v| v.f64()).collect();
    let b: Vec<f64> = x_true.iter().map(|v| v.f64()).collect();
    let (lo, hi) = b.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let range = if hi > lo { hi - lo } else { 1.0 };
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let g = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter(&a, ny, nx, &g);
    let my = filter(&b, ny, nx, &g);
    let sxx = filter(&prod(&a, &a), ny, nx, &g);
    let syy = filter(&prod(&b, &b), ny, nx, &g);
    let sxy = filter(&prod(&a, &b), ny, nx, &g);
    let pad = WIN / 2;
    let span = |n: usize| if n > 2 * pad { pad..n - pad } else { 0..n };
    let (mut total, mut count) = (0.0, 0usize);
    for r in span(ny) {
        for c in span(nx) {
            let i = c + nx * r;
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            total += (2.0 * ux * uy + c1) * (2.0 * cxy + c2) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn rre_examples() {
        let t = v(&[1.0, -2.0, 3.0]);
        assert_eq!(rre(&t, &t).unwrap(), 0.0);
        assert_eq!(rre(&DVector::zeros(3), &t).unwrap(), 1.0);
        assert!((rre(&(&t * 2.0), &t).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(rre(&t, &DVector::zeros(3)), Err(MetricError::ZeroTruth));
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini_index(&DVector::from_element(8, 2.5)).unwrap(), 0.0);
        let mut e = DVector::zeros(10);
        e[3] = -4.0;
        assert!((gini_index(&e).unwrap() - 0.9).abs() < 1e-15);
        let c = v(&[0.1, 3.0, -1.0, 0.0, 2.0]);
        assert!((gini_index(&c).unwrap() - gini_index(&(&c * 7.0)).unwrap()).abs() < 1e-15);
        assert_eq!(gini_index(&DVector::<f64>::zeros(4)), Err(MetricError::ZeroVector));
    }

    fn pairwise_gini(c: &[f64]) -> f64 {
        let k = c.len() as f64;
        let l1: f64 = c.iter().map(|x| x.abs()).sum();
        let mut s = 0.0;
        for a in c {
            for b in c {
                s += (a.abs() - b.abs()).abs();
            }
        }
        // Mean-difference Gini, rescaled to the sorted-Lorenz normalization.
        s / (2.0 * k * l1)
    }

    #[test]
    fn gini_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let c: Vec<f64> = (0..20).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let g = gini_index(&v(&c)).unwrap();
            assert!((g - pairwise_gini(&c)).abs() < 1e-12);
        }
    }

    #[test]
    fn ssim_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = DVector::from_fn(32 * 24, |_, _| rng.gen_range(0.0..1.0));
        assert!((ssim(&x, &x, (24, 32)).unwrap() - 1.0).abs() < 1e-12);
        let shifted = x.add_scalar(0.05);
        assert!(ssim(&shifted, &x, (24, 32)).unwrap() < 1.0);
        let board = DVector::from_fn(16 * 16, |i, _| if (i % 16 + i / 16) % 2 == 0 { 1.0 } else { -1.0 });
        let s = ssim(&(-&board), &board, (16, 16)).unwrap();
        assert!(s < 0.0);
        let sig = DVector::from_fn(100, |i, _| (i as f64 / 10.0).sin());
        assert!((ssim(&sig, &sig, (1, 100)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_checkerboard_against_scalar_reference() {
        // With y = −x and x² ≡ 1 every local term has the closed form below.
        let board = DVector::from_fn(16 * 16, |i, _| if (i % 16 + i / 16) % 2 == 0 { 1.0 } else { -1.0 });
        let g = gaussian_window();
        let img: Vec<f64> = board.iter().copied().collect();
        let mu = filter(&img, 16, 16, &g);
        let (c1, c2) = (0.02f64.powi(2), 0.06f64.powi(2));
        let mut total = 0.0;
        for r in 5..11 {
            for c in 5..11 {
                let m = mu[c + 16 * r];
                let var = 1.0 - m * m;
                total += (c1 - 2.0 * m * m) * (c2 - 2.0 * var) / ((2.0 * m * m + c1) * (2.0 * var + c2));
            }
        }
        let expected = total / 36.0;
        assert!((ssim(&(-&board), &board, (16, 16)).unwrap() - expected).abs() < 1e-12);
    }
}
