//! Sparsifying transforms Ψ (1D/2D first differences, or any dense matrix),
//! their kernel bases, and the orthonormal type-II DCT.
//!
//! Images with `ny` rows and `nx` columns are vectorized with the column index
//! varying fastest: pixel `(row, col)` sits at `col + nx * row`. The 2D
//! gradient stacks the vertical differences first and the horizontal ones
//! second, so `[[a, b], [c, d]]` maps to `(a−c, b−d, 0, 0, a−b, 0, c−d, 0)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustdct::{DctPlanner, TransformType2And3};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, LinearOperator};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureTag {
    Dirichlet1d,
    Neumann1d,
    Aniso2dNeumann,
    CustomDense,
}

/// A sparsifying transform Ψ: `R^N -> R^K` together with an orthonormal basis
/// of its kernel.
#[derive(Clone, Debug)]
pub struct SparsifyingTransform<T: Real> {
    tag: StructureTag,
    rows: usize,
    cols: usize,
    /// `(ny, nx)` for the 2D gradient, `(1, n)` for 1D transforms.
    grid: (usize, usize),
    dense: Option<DMatrix<T>>,
    kernel: DMatrix<T>,
}

/// Ψ for homogeneous Dirichlet boundary: `[Ψx]_k = x_k − x_{k+1}`, last row `x_N`.
pub fn d1_dirichlet<T: Real>(n: usize) -> SparsifyingTransform<T> {
    assert!(n >= 2, "d1_dirichlet needs N ≥ 2");
    SparsifyingTransform {
        tag: StructureTag::Dirichlet1d,
        rows: n,
        cols: n,
        grid: (1, n),
        dense: None,
        kernel: DMatrix::zeros(n, 0),
    }
}

/// Ψ for Neumann boundary: forward differences with a zero last row.
pub fn d1_neumann<T: Real>(n: usize) -> SparsifyingTransform<T> {
    assert!(n >= 2, "d1_neumann needs N ≥ 2");
    SparsifyingTransform {
        tag: StructureTag::Neumann1d,
        rows: n,
        cols: n,
        grid: (1, n),
        dense: None,
        kernel: constant_kernel(n),
    }
}

/// Anisotropic 2D gradient with Neumann boundary, `K = 2N` rows.
pub fn d2_aniso_neumann<T: Real>(nx: usize, ny: usize) -> SparsifyingTransform<T> {
    assert!(nx >= 2 && ny >= 2, "d2_aniso_neumann needs Nx, Ny ≥ 2");
    let n = nx * ny;
    SparsifyingTransform {
        tag: StructureTag::Aniso2dNeumann,
        rows: 2 * n,
        cols: n,
        grid: (ny, nx),
        dense: None,
        kernel: constant_kernel(n),
    }
}

/// Arbitrary dense Ψ; the kernel basis is computed from its SVD.
pub fn custom_dense<T: Real>(m: DMatrix<T>) -> SparsifyingTransform<T> {
    let (rows, cols) = m.shape();
    let kernel = null_space(&m);
    SparsifyingTransform { tag: StructureTag::CustomDense, rows, cols, grid: (1, cols), dense: Some(m), kernel }
}

fn constant_kernel<T: Real>(n: usize) -> DMatrix<T> {
    DMatrix::from_element(n, 1, T::one() / T::lit(n as f64).sqrt())
}

/// Orthonormal basis of `ker(m)` from a full SVD.
pub fn null_space<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let n = m.ncols();
    // Pad to at least square so the SVD exposes every right singular vector.
    let padded = if m.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.rows_mut(0, m.nrows()).copy_from(m);
        p
    } else {
        m.clone()
    };
    let dec = linalg::svd(&padded);
    let smax = if dec.s.is_empty() { T::zero() } else { dec.s[0] };
    let tol = smax * T::lit(n.max(m.nrows()) as f64) * T::default_epsilon();
    let idx: Vec<usize> = (0..dec.s.len()).filter(|&i| dec.s[i] <= tol).collect();
    let mut k = DMatrix::zeros(n, idx.len());
    for (j, &i) in idx.iter().enumerate() {
        k.set_column(j, &dec.v.column(i));
    }
    k
}

impl<T: Real> SparsifyingTransform<T> {
    pub fn tag(&self) -> StructureTag {
        self.tag
    }

    /// `(ny, nx)` grid the transform acts on.
    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    /// Orthonormal kernel basis `K` (N×P).
    pub fn kernel_basis(&self) -> &DMatrix<T> {
        &self.kernel
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel.ncols()
    }

    pub fn rank(&self) -> usize {
        self.cols - self.kernel_dim()
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        match &self.dense {
            Some(m) => m.clone(),
            None => linalg::to_dense(self),
        }
    }

    /// Exact `Ψ_ℓ† y` for `Ψ_ℓ = diag(w) Ψ` with the 1D difference transforms.
    ///
    /// The first `N−1` rows prescribe the increments `x_k − x_{k+1} = y_k / w_k`;
    /// Dirichlet fixes `x_N = y_N / w_N`, Neumann takes the zero-mean solution.
    pub fn pinv_1d(&self, w: &DVector<T>, y: &DVector<T>) -> Option<DVector<T>> {
        let n = self.cols;
        let mut x = DVector::zeros(n);
        match self.tag {
            StructureTag::Dirichlet1d => x[n - 1] = y[n - 1] / w[n - 1],
            StructureTag::Neumann1d => {}
            _ => return None,
        }
        for k in (0..n - 1).rev() {
            x[k] = x[k + 1] + y[k] / w[k];
        }
        if self.tag == StructureTag::Neumann1d {
            let mean = x.sum() / T::lit(n as f64);
            x.add_scalar_mut(-mean);
        }
        Some(x)
    }

    /// Exact `(Ψ_ℓ†)ᵀ v`, the transpose of [`Self::pinv_1d`].
    pub fn pinv_1d_adjoint(&self, w: &DVector<T>, v: &DVector<T>) -> Option<DVector<T>> {
        let n = self.cols;
        let mut v = v.clone();
        match self.tag {
            StructureTag::Dirichlet1d => {}
            StructureTag::Neumann1d => {
                let mean = v.sum() / T::lit(n as f64);
                v.add_scalar_mut(-mean);
            }
            _ => return None,
        }
        let mut y = DVector::zeros(n);
        let mut acc = T::zero();
        for k in 0..n - 1 {
            acc += v[k];
            y[k] = acc / w[k];
        }
        if self.tag == StructureTag::Dirichlet1d {
            acc += v[n - 1];
            y[n - 1] = acc / w[n - 1];
        }
        Some(y)
    }
}

impl<T: Real> LinearOperator<T> for SparsifyingTransform<T> {
    fn nrows(&self) -> usize {
        self.rows
    }

    fn ncols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &DVector<T>) -> DVector<T> {
        assert_eq!(x.len(), self.cols);
        let n = self.cols;
        match self.tag {
            StructureTag::Dirichlet1d | StructureTag::Neumann1d => {
                let mut y = DVector::zeros(n);
                for k in 0..n - 1 {
                    y[k] = x[k] - x[k + 1];
                }
                if self.tag == StructureTag::Dirichlet1d {
                    y[n - 1] = x[n - 1];
                }
                y
            }
            StructureTag::Aniso2dNeumann => {
                let (ny, nx) = self.grid;
                let mut y = DVector::zeros(2 * n);
                for r in 0..ny {
                    for c in 0..nx {
                        let p = c + nx * r;
                        if r + 1 < ny {
                            y[p] = x[p] - x[p + nx];
                        }
                        if c + 1 < nx {
                            y[n + p] = x[p] - x[p + 1];
                        }
                    }
                }
                y
            }
            StructureTag::CustomDense => self.dense.as_ref().unwrap() * x,
        }
    }

    fn apply_adjoint(&self, y: &DVector<T>) -> DVector<T> {
        assert_eq!(y.len(), self.rows);
        let n = self.cols;
        match self.tag {
            StructureTag::Dirichlet1d | StructureTag::Neumann1d => {
                let mut x = DVector::zeros(n);
                for k in 0..n - 1 {
                    x[k] += y[k];
                    x[k + 1] -= y[k];
                }
                if self.tag == StructureTag::Dirichlet1d {
                    x[n - 1] += y[n - 1];
                }
                x
            }
            StructureTag::Aniso2dNeumann => {
                let (ny, nx) = self.grid;
                let mut x = DVector::zeros(n);
                for r in 0..ny {
                    for c in 0..nx {
                        let p = c + nx * r;
                        if r + 1 < ny {
                            x[p] += y[p];
                            x[p + nx] -= y[p];
                        }
                        if c + 1 < nx {
                            x[p] += y[n + p];
                            x[p + 1] -= y[n + p];
                        }
                    }
                }
                x
            }
            StructureTag::CustomDense => self.dense.as_ref().unwrap().tr_mul(y),
        }
    }
}

/// Dense orthonormal DCT-II matrix `C[k, i] = α_k cos(π(2i+1)k / 2n)`.
pub fn dct_matrix<T: Real>(n: usize) -> DMatrix<T> {
    let nf = n as f64;
    DMatrix::from_fn(n, n, |k, i| {
        let alpha = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        T::lit(alpha * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * nf)).cos())
    })
}

/// Separable orthonormal 2D DCT-II `B` on an `ny × nx` grid (fast transform).
///
/// `apply` is `B`, `apply_adjoint` is `Bᵀ = B⁻¹`.
#[derive(Clone)]
pub struct Dct2 {
    nx: usize,
    ny: usize,
    row_plan: Arc<dyn TransformType2And3<f64>>,
    col_plan: Arc<dyn TransformType2And3<f64>>,
}

impl std::fmt::Debug for Dct2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dct2").field("nx", &self.nx).field("ny", &self.ny).finish()
    }
}

pub fn dct2(nx: usize, ny: usize) -> Dct2 {
    assert!(nx >= 1 && ny >= 1);
    let mut planner = DctPlanner::new();
    Dct2 { nx, ny, row_plan: planner.plan_dct2(nx), col_plan: planner.plan_dct2(ny) }
}

fn alphas(n: usize) -> (f64, f64) {
    ((1.0 / n as f64).sqrt(), (2.0 / n as f64).sqrt())
}

impl Dct2 {
    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    fn forward_1d(plan: &dyn TransformType2And3<f64>, buf: &mut [f64]) {
        plan.process_dct2(buf);
        let (a0, a) = alphas(buf.len());
        buf[0] *= a0;
        for v in buf[1..].iter_mut() {
            *v *= a;
        }
    }

    fn inverse_1d(plan: &dyn TransformType2And3<f64>, buf: &mut [f64]) {
        let (a0, a) = alphas(buf.len());
        buf[0] *= 2.0 * a0;
        for v in buf[1..].iter_mut() {
            *v *= a;
        }
        plan.process_dct3(buf);
    }

    fn run<T: Real>(&self, x: &DVector<T>, inverse: bool) -> DVector<T> {
        let (nx, ny) = (self.nx, self.ny);
        assert_eq!(x.len(), nx * ny);
        let mut data: Vec<f64> = x.iter().map(|v| v.f64()).collect();
        let step = |plan: &dyn TransformType2And3<f64>, buf: &mut [f64]| {
            if inverse {
                Self::inverse_1d(plan, buf)
            } else {
                Self::forward_1d(plan, buf)
            }
        };
        for row in data.chunks_mut(nx) {
            step(self.row_plan.as_ref(), row);
        }
        if ny > 1 {
            let mut col = vec![0.0; ny];
            for c in 0..nx {
                for r in 0..ny {
                    col[r] = data[c + nx * r];
                }
                step(self.col_plan.as_ref(), &mut col);
                for r in 0..ny {
                    data[c + nx * r] = col[r];
                }
            }
        }
        DVector::from_iterator(data.len(), data.into_iter().map(T::lit))
    }
}

impl<T: Real> LinearOperator<T> for Dct2 {
    fn nrows(&self) -> usize {
        self.nx * self.ny
    }
    fn ncols(&self) -> usize {
        self.nx * self.ny
    }
    fn apply(&self, x: &DVector<T>) -> DVector<T> {
        self.run(x, false)
    }
    fn apply_adjoint(&self, y: &DVector<T>) -> DVector<T> {
        self.run(y, true)
    }
}
