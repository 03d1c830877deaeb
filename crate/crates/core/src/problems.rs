//! Benchmark problems: an undersampled 1D DCT of a piecewise-constant signal
//! and sparse-angle parallel-beam CT of the Shepp–Logan phantom.
//!
//! Both follow the whitened-noise convention `e ~ N(0, I)`: the ground truth
//! is scaled so that `√M / ‖A x_true‖ = σ_NL`, which keeps the discrepancy
//! target `τ²M` meaningful.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{DenseOperator, LinearOperator};
use crate::transforms::{d1_dirichlet, d2_aniso_neumann, dct_matrix, SparsifyingTransform};
use crate::Real;

/// Breakpoints (fractions of N) of the 1D test signal. Segment `k` starts at
/// breakpoint `k − 1` (or 0) and carries `SIGNAL_LEVELS[k]`; the tail after
/// the last breakpoint is zero.
pub const SIGNAL_BREAKS: [f64; 6] = [0.1, 0.25, 0.4, 0.6, 0.75, 0.9];
pub const SIGNAL_LEVELS: [f64; 6] = [0.0, 1.0, -0.5, 2.0, 0.5, 0.0];

/// Problem description as it appears in run configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ProblemSpec {
    #[serde(rename = "dct1d")]
    Dct1d {
        #[serde(default = "d_n1")]
        n: usize,
        #[serde(default = "d_m1")]
        m: usize,
        #[serde(default = "d_sigma1")]
        sigma_nl: f64,
    },
    #[serde(rename = "ct2d")]
    Ct2d {
        #[serde(default = "d_n2")]
        n: usize,
        #[serde(default = "d_angles")]
        n_angles: usize,
        #[serde(default = "d_sigma2")]
        sigma_nl: f64,
    },
}

fn d_n1() -> usize {
    1000
}
fn d_m1() -> usize {
    50
}
fn d_sigma1() -> f64 {
    0.03
}
fn d_n2() -> usize {
    64
}
fn d_angles() -> usize {
    28
}
fn d_sigma2() -> f64 {
    0.01
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            ProblemSpec::Dct1d { n, m, sigma_nl } => {
                if m == 0 || m > n {
                    return Err(format!("dct1d needs 1 ≤ m ≤ n (got m = {m}, n = {n})"));
                }
                positive(sigma_nl)
            }
            ProblemSpec::Ct2d { n, n_angles, sigma_nl } => {
                if n < 16 {
                    return Err(format!("ct2d needs n ≥ 16 (got {n})"));
                }
                if n_angles == 0 {
                    return Err("ct2d needs at least one angle".into());
                }
                positive(sigma_nl)
            }
        }
    }

    pub fn is_2d(&self) -> bool {
        matches!(self, ProblemSpec::Ct2d { .. })
    }

    pub fn build<T: Real>(&self, seed: u64) -> ProblemInstance<T> {
        match *self {
            ProblemSpec::Dct1d { n, m, sigma_nl } => make_1d_dct_problem(n, m, sigma_nl, seed),
            ProblemSpec::Ct2d { n, n_angles, sigma_nl } => make_ct_problem(n, n_angles, sigma_nl, seed),
        }
    }
}

fn positive(s: f64) -> Result<(), String> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(format!("sigma_nl must be positive (got {s})"))
    }
}

/// A generated test problem `b = A x_true + e`.
pub struct ProblemInstance<T: Real> {
    pub spec: ProblemSpec,
    pub a: Box<dyn LinearOperator<T>>,
    pub psi: SparsifyingTransform<T>,
    pub b: DVector<T>,
    pub x_true: Option<DVector<T>>,
    pub noise: DVector<T>,
    pub sigma_nl: f64,
    pub seed: u64,
    /// `(ny, nx)` for images.
    pub shape: Option<(usize, usize)>,
}

impl<T: Real> ProblemInstance<T> {
    /// Shape used for SSIM: the image grid, or `(1, N)` for signals.
    pub fn ssim_shape(&self) -> (usize, usize) {
        self.shape.unwrap_or((1, self.a.ncols()))
    }
}

/// Piecewise-constant test signal of length `n`, before scaling.
pub fn piecewise_signal(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let seg = SIGNAL_BREAKS.iter().filter(|&&b| t >= b).count();
            SIGNAL_LEVELS.get(seg).copied().unwrap_or(0.0)
        })
        .collect()
}

/// Standard-normal noise of length `m` from a ChaCha8 stream seeded by `seed`.
pub fn standard_noise(m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn assemble<T: Real>(
    spec: ProblemSpec,
    a: Box<dyn LinearOperator<T>>,
    psi: SparsifyingTransform<T>,
    raw: Vec<f64>,
    sigma_nl: f64,
    seed: u64,
    shape: Option<(usize, usize)>,
) -> ProblemInstance<T> {
    let m = a.nrows();
    let raw = DVector::from_iterator(raw.len(), raw.into_iter().map(T::lit));
    let ax = a.apply(&raw);
    let scale = (m as f64).sqrt() / (sigma_nl * ax.norm().f64());
    let x_true = raw * T::lit(scale);
    let noise = DVector::from_iterator(m, standard_noise(m, seed).into_iter().map(T::lit));
    let b = a.apply(&x_true) + &noise;
    ProblemInstance { spec, a, psi, b, x_true: Some(x_true), noise, sigma_nl, seed, shape }
}

/// First `m` orthonormal DCT-II coefficients of `x ∈ ℝⁿ`.
pub fn partial_dct<T: Real>(n: usize, m: usize) -> DenseOperator<T> {
    DenseOperator::new(dct_matrix::<T>(n).rows(0, m).into_owned())
}

/// Undersampled DCT problem with the Dirichlet first-difference transform.
pub fn make_1d_dct_problem<T: Real>(n: usize, m: usize, sigma_nl: f64, seed: u64) -> ProblemInstance<T> {
    let spec = ProblemSpec::Dct1d { n, m, sigma_nl };
    assemble(spec, Box::new(partial_dct::<T>(n, m)), d1_dirichlet(n), piecewise_signal(n), sigma_nl, seed, None)
}

/// `(intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)`.
const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Pixel-centre coordinates in `[−1, 1]²`, `y` pointing up.
fn pixel_coords(n: usize, r: usize, c: usize) -> (f64, f64) {
    let h = 2.0 / n as f64;
    ((c as f64 + 0.5) * h - 1.0, 1.0 - (r as f64 + 0.5) * h)
}

/// Ten-ellipse Shepp–Logan phantom (high-contrast intensities), row-major.
pub fn shepp_logan(n: usize) -> Vec<f64> {
    let mut img = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            let (x, y) = pixel_coords(n, r, c);
            for e in &SHEPP_LOGAN {
                let (cs, sn) = (e[5].to_radians().cos(), e[5].to_radians().sin());
                let (dx, dy) = (x - e[3], y - e[4]);
                let u = dx * cs + dy * sn;
                let v = -dx * sn + dy * cs;
                if (u / e[1]).powi(2) + (v / e[2]).powi(2) <= 1.0 {
                    img[c + n * r] += e[0];
                }
            }
        }
    }
    img
}

/// Pixel-driven parallel-beam projector with linear interpolation between
/// the two nearest detector bins.
///
/// Detector bins have unit spacing in pixel units, are centred on the
/// rotation axis and number `⌈√2·n⌉`; angles are `2πk / n_angles`. Row
/// `k·n_det + j` is bin `j` of angle `k`.
pub struct ParallelBeam<T: Real> {
    n: usize,
    n_det: usize,
    n_angles: usize,
    /// Per angle and pixel: left bin and the weight of the right bin.
    taps: Vec<(u32, T)>,
}

impl<T: Real> ParallelBeam<T> {
    pub fn new(n: usize, n_angles: usize) -> Self {
        let n_det = (std::f64::consts::SQRT_2 * n as f64).ceil() as usize;
        let mid_pix = (n as f64 - 1.0) / 2.0;
        let mid_det = (n_det as f64 - 1.0) / 2.0;
        let mut taps = Vec::with_capacity(n_angles * n * n);
        for k in 0..n_angles {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n_angles as f64;
            let (cs, sn) = (th.cos(), th.sin());
            for r in 0..n {
                for c in 0..n {
                    let x = c as f64 - mid_pix;
                    let y = mid_pix - r as f64;
                    let u = x * cs + y * sn + mid_det;
                    let j0 = u.floor();
                    taps.push((j0 as u32, T::lit(u - j0)));
                }
            }
        }
        Self { n, n_det, n_angles, taps }
    }

    pub fn n_det(&self) -> usize {
        self.n_det
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }
}

impl<T: Real> LinearOperator<T> for ParallelBeam<T> {
    fn nrows(&self) -> usize {
        self.n_det * self.n_angles
    }

    fn ncols(&self) -> usize {
        self.n * self.n
    }

    fn apply(&self, x: &DVector<T>) -> DVector<T> {
        let np = self.n * self.n;
        let mut y = DVector::zeros(self.nrows());
        for k in 0..self.n_angles {
            let off = k * self.n_det;
            for (p, &(j, f)) in self.taps[k * np..(k + 1) * np].iter().enumerate() {
                let v = x[p];
                let j = j as usize;
                y[off + j] += (T::one() - f) * v;
                if f > T::zero() {
                    y[off + j + 1] += f * v;
                }
            }
        }
        y
    }

    fn apply_adjoint(&self, y: &DVector<T>) -> DVector<T> {
        let np = self.n * self.n;
        let mut x = DVector::zeros(np);
        for k in 0..self.n_angles {
            let off = k * self.n_det;
            for (p, &(j, f)) in self.taps[k * np..(k + 1) * np].iter().enumerate() {
                let j = j as usize;
                let mut acc = (T::one() - f) * y[off + j];
                if f > T::zero() {
                    acc += f * y[off + j + 1];
                }
                x[p] += acc;
            }
        }
        x
    }
}

/// Sparse-angle CT of an `n × n` Shepp–Logan phantom with the anisotropic
/// Neumann gradient as sparsifying transform.
pub fn make_ct_problem<T: Real>(n: usize, n_angles: usize, sigma_nl: f64, seed: u64) -> ProblemInstance<T> {
    let spec = ProblemSpec::Ct2d { n, n_angles, sigma_nl };
    let a = Box::new(ParallelBeam::<T>::new(n, n_angles));
    assemble(spec, a, d2_aniso_neumann(n, n), shepp_logan(n), sigma_nl, seed, Some((n, n)))
}

#[derive(Serialize)]
struct InstanceMeta<'a> {
    spec: &'a ProblemSpec,
    seed: u64,
    sigma_nl: f64,
    rows: usize,
    cols: usize,
    shape: Option<(usize, usize)>,
    norm_b: f64,
    norm_noise: f64,
    norm_ax_true: Option<f64>,
    vectors_csv: &'static str,
}

/// Writes `instance.json` (metadata) and `instance.csv` with columns
/// `vector,index,value` for `b`, `noise` and `x_true`.
pub fn export_instance<T: Real>(inst: &ProblemInstance<T>, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let meta = InstanceMeta {
        spec: &inst.spec,
        seed: inst.seed,
        sigma_nl: inst.sigma_nl,
        rows: inst.a.nrows(),
        cols: inst.a.ncols(),
        shape: inst.shape,
        norm_b: inst.b.norm().f64(),
        norm_noise: inst.noise.norm().f64(),
        norm_ax_true: inst.x_true.as_ref().map(|x| inst.a.apply(x).norm().f64()),
        vectors_csv: "instance.csv",
    };
    fs::write(dir.join("instance.json"), serde_json::to_string_pretty(&meta)?)?;
    let mut out = std::io::BufWriter::new(fs::File::create(dir.join("instance.csv"))?);
    writeln!(out, "vector,index,value")?;
    let mut dump = |name: &str, v: &DVector<T>| -> std::io::Result<()> {
        for (i, x) in v.iter().enumerate() {
            writeln!(out, "{name},{i},{:.16e}", x.f64())?;
        }
        Ok(())
    };
    dump("b", &inst.b)?;
    dump("noise", &inst.noise)?;
    if let Some(x) = &inst.x_true {
        dump("x_true", x)?;
    }
    out.flush()
}

/// Dense copy of the CT operator, for small grids only.
pub fn ct_matrix<T: Real>(n: usize, n_angles: usize) -> DMatrix<T> {
    crate::linalg::to_dense(&ParallelBeam::<T>::new(n, n_angles))
}
