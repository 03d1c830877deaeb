//! Weighted pseudoinverses `Ψ_ℓ† = (diag(w) Ψ)†`, the kernel split
//! `x = x_ker + (Ψ_ℓ)_A† z`, and the priorconditioned operator
//! `Ā = A (Ψ_ℓ)_A†` with `(Ψ_ℓ)_A† = E Ψ_ℓ†`, `E = I − K (AK)† A`.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinearOperator};
use crate::transforms::{dct2, Dct2, SparsifyingTransform, StructureTag};
use crate::Real;

/// Seed of the probe vector used to read off the DCT eigenvalues of `ΨᵀΨ`.
const PROBE_SEED: u64 = 0x5eed_dc7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorcondError {
    #[error("A·K is rank deficient: ker(A) ∩ ker(Ψ) is nontrivial")]
    SingularKernelImage,
    #[error("PCG did not converge in {iters} iterations (relative residual {residual:.3e})")]
    CgNoConvergence { iters: usize, residual: f64 },
    #[error("weights must be strictly positive and finite")]
    InvalidWeights,
    #[error("strategy {0} is not available for this transform")]
    Unsupported(&'static str),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// How `Ψ_ℓ†` is applied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PinvStrategy {
    /// Exact pseudoinverse: closed-form substitution for 1D differences, SVD otherwise.
    Dense,
    /// `(Ψ_ℓᵀΨ_ℓ + δI)⁻¹ Ψ_ℓᵀ` via a dense Cholesky factorization.
    DeltaRegularized { delta: f64 },
    /// CG on `ΨᵀW²Ψ ξ = Ψᵀ W y` preconditioned by the DCT diagonalization of `ΨᵀΨ`.
    PcgDct { tol: f64, max_iters: usize },
    /// Sparse Cholesky of the weighted grid Laplacian `ΨᵀW²Ψ` grounded at pixel 0.
    /// 2D gradient only.
    SparseCholesky,
}

impl PinvStrategy {
    pub fn default_pcg() -> Self {
        PinvStrategy::PcgDct { tol: 1e-8, max_iters: 500 }
    }

    /// Sparse Cholesky for the 2D gradient, dense otherwise.
    pub fn default_for<T: Real>(psi: &SparsifyingTransform<T>) -> Self {
        match psi.tag() {
            StructureTag::Aniso2dNeumann => PinvStrategy::SparseCholesky,
            _ => PinvStrategy::Dense,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            PinvStrategy::Dense | PinvStrategy::SparseCholesky => Ok(()),
            PinvStrategy::DeltaRegularized { delta } if delta > 0.0 => Ok(()),
            PinvStrategy::DeltaRegularized { .. } => Err("delta must be positive".into()),
            PinvStrategy::PcgDct { tol, max_iters } if tol > 0.0 && tol < 1.0 && max_iters >= 1 => Ok(()),
            PinvStrategy::PcgDct { .. } => Err("PCG needs tol in (0,1) and max_iters ≥ 1".into()),
        }
    }
}

/// Factors of `AK = Q R` used to apply `(AK)†` and the projector `E`.
#[derive(Clone, Debug)]
pub struct KernelCache<T: Real> {
    pub basis: DMatrix<T>,
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
}

/// Result of splitting off the kernel component.
#[derive(Clone, Debug)]
pub struct KernelSplit<T: Real> {
    pub x_ker: DVector<T>,
    pub b_bar: DVector<T>,
    pub cache: KernelCache<T>,
}

/// `x_ker = K (AK)† b` and `b̄ = b − A x_ker`.
pub fn x_kernel<T: Real>(
    a: &dyn LinearOperator<T>,
    k: &DMatrix<T>,
    b: &DVector<T>,
) -> Result<KernelSplit<T>, PriorcondError> {
    let (n, p) = k.shape();
    let m = a.nrows();
    if p == 0 {
        let cache = KernelCache { basis: k.clone(), q: DMatrix::zeros(m, 0), r: DMatrix::zeros(0, 0) };
        return Ok(KernelSplit { x_ker: DVector::zeros(n), b_bar: b.clone(), cache });
    }
    let mut ak = DMatrix::zeros(m, p);
    for j in 0..p {
        ak.set_column(j, &a.apply(&k.column(j).into_owned()));
    }
    let (q, r) = linalg::economic_qr(&ak).map_err(|_| PriorcondError::SingularKernelImage)?;
    let cache = KernelCache { basis: k.clone(), q, r };
    let coeff = cache.solve_r(&cache.q.tr_mul(b));
    let x_ker = k * coeff;
    let b_bar = b - &cache.q * cache.q.tr_mul(b);
    Ok(KernelSplit { x_ker, b_bar, cache })
}

impl<T: Real> KernelCache<T> {
    pub fn kernel_dim(&self) -> usize {
        self.basis.ncols()
    }

    fn solve_r(&self, y: &DVector<T>) -> DVector<T> {
        self.r.solve_upper_triangular(y).expect("R of AK is nonsingular")
    }

    fn solve_rt(&self, y: &DVector<T>) -> DVector<T> {
        self.r.tr_solve_upper_triangular(y).expect("R of AK is nonsingular")
    }

    /// `E v = v − K (AK)† A v`.
    pub fn apply_e(&self, a: &dyn LinearOperator<T>, v: &DVector<T>) -> DVector<T> {
        if self.kernel_dim() == 0 {
            return v.clone();
        }
        let av = a.apply(v);
        v - &self.basis * self.solve_r(&self.q.tr_mul(&av))
    }

    /// `Eᵀ v = v − Aᵀ Q R⁻ᵀ Kᵀ v`.
    pub fn apply_e_adjoint(&self, a: &dyn LinearOperator<T>, v: &DVector<T>) -> DVector<T> {
        if self.kernel_dim() == 0 {
            return v.clone();
        }
        let c = self.solve_rt(&self.basis.tr_mul(v));
        v - a.apply_adjoint(&(&self.q * c))
    }

    /// `(I − QQᵀ) y` on the data side, so that `A E = (I − QQᵀ) A`.
    pub fn project_data(&self, y: &DVector<T>) -> DVector<T> {
        if self.kernel_dim() == 0 {
            return y.clone();
        }
        y - &self.q * self.q.tr_mul(y)
    }
}

/// Diagonal of `B ΨᵀΨ Bᵀ` for the 2D DCT `B`, read off with a probe vector.
#[derive(Clone, Debug)]
pub struct DctPreconditioner<T: Real> {
    dct: Dct2,
    lambda_pinv: DVector<T>,
    pub lambda: DVector<T>,
}

impl<T: Real> DctPreconditioner<T> {
    pub fn new(psi: &SparsifyingTransform<T>) -> Self {
        let (ny, nx) = psi.grid();
        let n = nx * ny;
        let dct = dct2(nx, ny);
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
        let probe = DVector::from_fn(n, |_, _| T::lit(rng.gen_range(0.5..1.5)));
        let back: DVector<T> = dct.apply_adjoint(&probe);
        let image: DVector<T> = dct.apply(&psi.apply_adjoint(&psi.apply(&back)));
        let lambda = image.component_div(&probe);
        let lmax = lambda.amax();
        let cut = lmax * T::lit(1e-10);
        let lambda_pinv = lambda.map(|l| if l.abs() <= cut { T::zero() } else { T::one() / l });
        Self { dct, lambda_pinv, lambda }
    }

    /// `Bᵀ Λ† B r`.
    pub fn apply(&self, r: &DVector<T>) -> DVector<T> {
        let f: DVector<T> = self.dct.apply(r);
        self.dct.apply_adjoint(&f.component_mul(&self.lambda_pinv))
    }
}

/// Outcome of a PCG solve.
#[derive(Clone, Debug)]
pub struct PcgSolution<T: Real> {
    pub xi: DVector<T>,
    pub iters: usize,
    pub residual: f64,
}

/// Solves `(ΨᵀW²Ψ) ξ = y` for `y ∈ col(Ψᵀ)` by preconditioned CG from `ξ₀ = 0`.
pub fn pcg_dct_solve<T: Real>(
    psi: &SparsifyingTransform<T>,
    w: &DVector<T>,
    y: &DVector<T>,
    pre: &DctPreconditioner<T>,
    tol: f64,
    max_iters: usize,
) -> Result<PcgSolution<T>, PriorcondError> {
    let n = psi.ncols();
    let w2 = w.component_mul(w);
    let op = |v: &DVector<T>| psi.apply_adjoint(&psi.apply(v).component_mul(&w2));
    let mut xi = DVector::zeros(n);
    if y.norm() == T::zero() {
        return Ok(PcgSolution { xi, iters: 0, residual: 0.0 });
    }
    let mut r = y.clone();
    let mut z = pre.apply(&r);
    let mut rz = r.dot(&z);
    let rz0 = rz;
    if rz0 <= T::zero() {
        return Ok(PcgSolution { xi, iters: 0, residual: 0.0 });
    }
    let mut p = z.clone();
    let tol_t = T::lit(tol);
    for k in 0..max_iters {
        let q = op(&p);
        let alpha = rz / p.dot(&q);
        xi.axpy(alpha, &p, T::one());
        r.axpy(-alpha, &q, T::one());
        z = pre.apply(&r);
        let rz_new = r.dot(&z);
        let rel = (rz_new.max(T::zero()) / rz0).sqrt();
        if rel <= tol_t {
            return Ok(PcgSolution { xi, iters: k + 1, residual: rel.f64() });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &p * beta;
    }
    let rel = (rz.max(T::zero()) / rz0).sqrt().f64();
    Err(PriorcondError::CgNoConvergence { iters: max_iters, residual: rel })
}

enum Backend<'a, T: Real> {
    Structured,
    Matrix(DMatrix<T>),
    Delta(Cholesky<T, Dyn>),
    Pcg { pre: &'a DctPreconditioner<T>, tol: f64, max_iters: usize },
    Sparse(CscCholesky<T>),
}

/// Cholesky factor of `ΨᵀW²Ψ` with row and column 0 removed. The grid graph is
/// connected, so the reduced matrix is positive definite.
fn grounded_laplacian<T: Real>(psi: &SparsifyingTransform<T>, w: &DVector<T>) -> Result<CscCholesky<T>, PriorcondError> {
    let (ny, nx) = psi.grid();
    let n = nx * ny;
    let mut coo = CooMatrix::new(n - 1, n - 1);
    let mut edge = |p: usize, q: usize, wt: T| {
        let w2 = wt * wt;
        if p > 0 {
            coo.push(p - 1, p - 1, w2);
        }
        if q > 0 {
            coo.push(q - 1, q - 1, w2);
        }
        if p > 0 && q > 0 {
            coo.push(p - 1, q - 1, -w2);
            coo.push(q - 1, p - 1, -w2);
        }
    };
    for r in 0..ny {
        for c in 0..nx {
            let p = c + nx * r;
            if r + 1 < ny {
                edge(p, p + nx, w[p]);
            }
            if c + 1 < nx {
                edge(p, p + 1, w[n + p]);
            }
        }
    }
    CscCholesky::factor(&CscMatrix::from(&coo)).map_err(|_| PriorcondError::Unsupported("sparse cholesky"))
}

/// `ξ` with `ΨᵀW²Ψ ξ = y` and `1ᵀξ = 0`, for `y ⊥ 1`.
fn grounded_solve<T: Real>(chol: &CscCholesky<T>, y: &DVector<T>) -> DVector<T> {
    let n = y.len();
    let red = chol.solve(&y.rows(1, n - 1));
    let mut xi = DVector::zeros(n);
    xi.rows_mut(1, n - 1).copy_from(&red);
    let mean = xi.mean();
    xi.add_scalar_mut(-mean);
    xi
}

/// `Ψ_ℓ† = (diag(w) Ψ)†` under a chosen strategy, applied matrix-free.
pub struct WeightedPinv<'a, T: Real> {
    psi: &'a SparsifyingTransform<T>,
    w: DVector<T>,
    backend: Backend<'a, T>,
}

impl<'a, T: Real> WeightedPinv<'a, T> {
    /// `pre` is required for [`PinvStrategy::PcgDct`] and ignored otherwise.
    pub fn new(
        psi: &'a SparsifyingTransform<T>,
        w: DVector<T>,
        strategy: PinvStrategy,
        pre: Option<&'a DctPreconditioner<T>>,
    ) -> Result<Self, PriorcondError> {
        if w.len() != psi.nrows() || w.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(PriorcondError::InvalidWeights);
        }
        let backend = match strategy {
            PinvStrategy::Dense => match psi.tag() {
                StructureTag::Dirichlet1d | StructureTag::Neumann1d => Backend::Structured,
                _ => {
                    let psi_w = DMatrix::from_diagonal(&w) * psi.to_dense();
                    Backend::Matrix(dense_pinv(&psi_w))
                }
            },
            PinvStrategy::DeltaRegularized { delta } => {
                let psi_w = DMatrix::from_diagonal(&w) * psi.to_dense();
                let mut g = psi_w.tr_mul(&psi_w);
                for i in 0..g.nrows() {
                    g[(i, i)] += T::lit(delta);
                }
                Backend::Delta(Cholesky::new(g).ok_or(PriorcondError::Unsupported("delta-regularized"))?)
            }
            PinvStrategy::PcgDct { tol, max_iters } => match pre {
                Some(pre) => Backend::Pcg { pre, tol, max_iters },
                None => return Err(PriorcondError::Unsupported("pcg-dct without preconditioner")),
            },
            PinvStrategy::SparseCholesky => match psi.tag() {
                StructureTag::Aniso2dNeumann => Backend::Sparse(grounded_laplacian(psi, &w)?),
                _ => return Err(PriorcondError::Unsupported("sparse cholesky needs the 2D gradient")),
            },
        };
        Ok(Self { psi, w, backend })
    }

    pub fn weights(&self) -> &DVector<T> {
        &self.w
    }

    pub fn transform(&self) -> &SparsifyingTransform<T> {
        self.psi
    }

    /// `Ψ_ℓ† y` for `y ∈ R^K`.
    pub fn apply(&self, y: &DVector<T>) -> Result<DVector<T>, PriorcondError> {
        match &self.backend {
            Backend::Structured => Ok(self.psi.pinv_1d(&self.w, y).expect("1D transform")),
            Backend::Matrix(p) => Ok(p * y),
            Backend::Delta(ch) => {
                let rhs = self.psi.apply_adjoint(&y.component_mul(&self.w));
                Ok(ch.solve(&rhs))
            }
            Backend::Pcg { pre, tol, max_iters } => {
                let rhs = self.psi.apply_adjoint(&y.component_mul(&self.w));
                Ok(pcg_dct_solve(self.psi, &self.w, &rhs, pre, *tol, *max_iters)?.xi)
            }
            Backend::Sparse(ch) => Ok(grounded_solve(ch, &self.psi.apply_adjoint(&y.component_mul(&self.w)))),
        }
    }

    /// `(Ψ_ℓ†)ᵀ v` for `v ∈ R^N`.
    pub fn apply_adjoint(&self, v: &DVector<T>) -> Result<DVector<T>, PriorcondError> {
        match &self.backend {
            Backend::Structured => Ok(self.psi.pinv_1d_adjoint(&self.w, v).expect("1D transform")),
            Backend::Matrix(p) => Ok(p.tr_mul(v)),
            Backend::Delta(ch) => Ok(self.psi.apply(&ch.solve(v)).component_mul(&self.w)),
            Backend::Pcg { pre, tol, max_iters } => {
                let k = self.psi.kernel_basis();
                let v_perp = if k.ncols() > 0 { v - k * k.tr_mul(v) } else { v.clone() };
                let xi = pcg_dct_solve(self.psi, &self.w, &v_perp, pre, *tol, *max_iters)?.xi;
                Ok(self.psi.apply(&xi).component_mul(&self.w))
            }
            Backend::Sparse(ch) => {
                let v_perp = v.add_scalar(-v.mean());
                Ok(self.psi.apply(&grounded_solve(ch, &v_perp)).component_mul(&self.w))
            }
        }
    }
}

/// Moore–Penrose pseudoinverse through the SVD with the usual rank cutoff.
pub fn dense_pinv<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let dec = linalg::svd(m);
    let smax = if dec.s.is_empty() { T::zero() } else { dec.s[0] };
    let tol = smax * T::lit(m.nrows().max(m.ncols()) as f64) * T::default_epsilon();
    let inv = dec.s.map(|s| if s > tol { T::one() / s } else { T::zero() });
    &dec.v * DMatrix::from_diagonal(&inv) * dec.u.transpose()
}

/// The oblique pseudoinverse `(Ψ_ℓ)_A† = E Ψ_ℓ†` and the priorconditioned
/// operator `Ā = A (Ψ_ℓ)_A†`.
///
/// Every application of `Ψ_ℓ†` or its transpose bumps `tally`.
pub struct ObliquePinv<'a, T: Real> {
    a: &'a dyn LinearOperator<T>,
    pinv: WeightedPinv<'a, T>,
    kernel: &'a KernelCache<T>,
    tally: &'a AtomicU64,
}

impl<'a, T: Real> ObliquePinv<'a, T> {
    pub fn new(
        a: &'a dyn LinearOperator<T>,
        pinv: WeightedPinv<'a, T>,
        kernel: &'a KernelCache<T>,
        tally: &'a AtomicU64,
    ) -> Self {
        Self { a, pinv, kernel, tally }
    }

    pub fn weighted(&self) -> &WeightedPinv<'a, T> {
        &self.pinv
    }

    fn pinv(&self, y: &DVector<T>) -> Result<DVector<T>, PriorcondError> {
        self.tally.fetch_add(1, Ordering::Relaxed);
        self.pinv.apply(y)
    }

    fn pinv_t(&self, v: &DVector<T>) -> Result<DVector<T>, PriorcondError> {
        self.tally.fetch_add(1, Ordering::Relaxed);
        self.pinv.apply_adjoint(v)
    }

    /// `E Ψ_ℓ† y`.
    pub fn apply(&self, y: &DVector<T>) -> Result<DVector<T>, PriorcondError> {
        let t = self.pinv(y)?;
        Ok(self.kernel.apply_e(self.a, &t))
    }

    /// `(Ψ_ℓ†)ᵀ Eᵀ v`.
    pub fn apply_adjoint(&self, v: &DVector<T>) -> Result<DVector<T>, PriorcondError> {
        let t = self.kernel.apply_e_adjoint(self.a, v);
        self.pinv_t(&t)
    }

    /// `Ā y = (I − QQᵀ) A Ψ_ℓ† y`.
    pub fn abar(&self, y: &DVector<T>) -> Result<DVector<T>, PriorcondError> {
        let t = self.pinv(y)?;
        Ok(self.kernel.project_data(&self.a.apply(&t)))
    }

    /// `Āᵀ u = (Ψ_ℓ†)ᵀ Aᵀ (I − QQᵀ) u`.
    pub fn abar_adjoint(&self, u: &DVector<T>) -> Result<DVector<T>, PriorcondError> {
        let t = self.a.apply_adjoint(&self.kernel.project_data(u));
        self.pinv_t(&t)
    }

    pub fn abar_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn abar_cols(&self) -> usize {
        self.pinv.psi.nrows()
    }
}
