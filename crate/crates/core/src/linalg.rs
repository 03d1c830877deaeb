//! Operator abstraction and the small dense kernels shared by all solvers:
//! economic QR with column updates, SVD and symmetric eigenvalue helpers,
//! Gram–Schmidt orthogonalization and Krylov basis construction.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::Real;

/// Relative tolerance below which a Gram–Schmidt residual counts as a breakdown.
pub const BREAKDOWN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is rank deficient (pivot {pivot:.3e} at column {column})")]
    RankDeficient { column: usize, pivot: f64 },
    #[error("Krylov seed vector is zero")]
    ZeroSeed,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Matrix-free linear map `R^cols -> R^rows`.
pub trait LinearOperator<T: Real>: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &DVector<T>) -> DVector<T>;
    fn apply_adjoint(&self, y: &DVector<T>) -> DVector<T>;
}

impl<T: Real, O: LinearOperator<T> + ?Sized> LinearOperator<T> for &O {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply(&self, x: &DVector<T>) -> DVector<T> {
        (**self).apply(x)
    }
    fn apply_adjoint(&self, y: &DVector<T>) -> DVector<T> {
        (**self).apply_adjoint(y)
    }
}

impl<T: Real, O: LinearOperator<T> + ?Sized> LinearOperator<T> for Box<O> {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply(&self, x: &DVector<T>) -> DVector<T> {
        (**self).apply(x)
    }
    fn apply_adjoint(&self, y: &DVector<T>) -> DVector<T> {
        (**self).apply_adjoint(y)
    }
}

/// Wraps an operator and tallies every forward and adjoint application.
///
/// The tally lives in the wrapper, so each solver run wraps the shared
/// operator once and owns its own count.
pub struct Counted<'a, T: Real> {
    inner: &'a dyn LinearOperator<T>,
    tally: AtomicU64,
}

impl<'a, T: Real> Counted<'a, T> {
    pub fn new(inner: &'a dyn LinearOperator<T>) -> Self {
        Self { inner, tally: AtomicU64::new(0) }
    }

    pub fn count(&self) -> u64 {
        self.tally.load(Ordering::Relaxed)
    }
}

impl<T: Real> LinearOperator<T> for Counted<'_, T> {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }
    fn apply(&self, x: &DVector<T>) -> DVector<T> {
        self.tally.fetch_add(1, Ordering::Relaxed);
        self.inner.apply(x)
    }
    fn apply_adjoint(&self, y: &DVector<T>) -> DVector<T> {
        self.tally.fetch_add(1, Ordering::Relaxed);
        self.inner.apply_adjoint(y)
    }
}

/// Explicit dense matrix as an operator.
#[derive(Clone, Debug)]
pub struct DenseOperator<T: Real> {
    pub matrix: DMatrix<T>,
}

impl<T: Real> DenseOperator<T> {
    pub fn new(matrix: DMatrix<T>) -> Self {
        Self { matrix }
    }
}

impl<T: Real> LinearOperator<T> for DenseOperator<T> {
    fn nrows(&self) -> usize {
        self.matrix.nrows()
    }
    fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
    fn apply(&self, x: &DVector<T>) -> DVector<T> {
        &self.matrix * x
    }
    fn apply_adjoint(&self, y: &DVector<T>) -> DVector<T> {
        self.matrix.tr_mul(y)
    }
}

/// Assembles an operator into a dense matrix column by column.
pub fn to_dense<T: Real>(op: &dyn LinearOperator<T>) -> DMatrix<T> {
    let n = op.ncols();
    let mut out = DMatrix::zeros(op.nrows(), n);
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = T::one();
        out.set_column(j, &op.apply(&e));
        e[j] = T::zero();
    }
    out
}

/// Matrix with orthonormal columns spanning a subspace of `R^ambient`.
#[derive(Clone, Debug)]
pub struct OrthonormalBasis<T: Real> {
    pub columns: DMatrix<T>,
}

impl<T: Real> OrthonormalBasis<T> {
    pub fn empty(ambient: usize) -> Self {
        Self { columns: DMatrix::zeros(ambient, 0) }
    }

    pub fn dim_ambient(&self) -> usize {
        self.columns.nrows()
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    /// Appends a unit vector assumed orthogonal to the current columns.
    pub fn push(&mut self, v: &DVector<T>) {
        let d = self.dim();
        let cols = std::mem::replace(&mut self.columns, DMatrix::zeros(0, 0));
        self.columns = cols.insert_column(d, T::zero());
        self.columns.set_column(d, v);
    }

    /// Orthogonalizes `v` against the basis and appends it unless it is
    /// numerically contained in the span. Returns whether a column was added.
    pub fn try_extend(&mut self, v: &DVector<T>, tol: T) -> bool {
        let before = v.norm();
        if before == T::zero() {
            return false;
        }
        let (r, _) = orthogonalize(&self.columns, v, true);
        let after = r.norm();
        if after <= tol * before {
            return false;
        }
        self.push(&(r / after));
        true
    }

    /// Largest entry of `|VᵀV − I|`.
    pub fn orthogonality_error(&self) -> T {
        let g = self.columns.tr_mul(&self.columns);
        let mut worst = T::zero();
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

/// Removes the components of `v` along the (orthonormal) columns of `q`.
///
/// Classical Gram–Schmidt, repeated once when `twice` is set. Returns the
/// residual and the accumulated coefficients `qᵀv`.
pub fn orthogonalize<T: Real>(q: &DMatrix<T>, v: &DVector<T>, twice: bool) -> (DVector<T>, DVector<T>) {
    if q.ncols() == 0 {
        return (v.clone(), DVector::zeros(0));
    }
    let mut coeffs = q.tr_mul(v);
    let mut r = v - q * &coeffs;
    if twice {
        let c2 = q.tr_mul(&r);
        r -= q * &c2;
        coeffs += c2;
    }
    (r, coeffs)
}

fn frobenius<T: Real>(m: &DMatrix<T>) -> T {
    m.norm()
}

/// Economic QR of a full-column-rank matrix with `diag(R) ≥ 0`.
pub fn economic_qr<T: Real>(m: &DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>), LinalgError> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(LinalgError::Dimension(format!("economic QR needs m ≥ n, got {rows}×{cols}")));
    }
    let scale = frobenius(m);
    let tol = T::lit(BREAKDOWN_TOL) * scale;
    let mut q = DMatrix::zeros(rows, cols);
    let mut r = DMatrix::zeros(cols, cols);
    for j in 0..cols {
        let col = m.column(j).into_owned();
        let (res, coeffs) = orthogonalize(&q.columns(0, j).into_owned(), &col, true);
        let pivot = res.norm();
        if pivot < tol || pivot == T::zero() {
            return Err(LinalgError::RankDeficient { column: j, pivot: pivot.f64() });
        }
        for i in 0..j {
            r[(i, j)] = coeffs[i];
        }
        r[(j, j)] = pivot;
        q.set_column(j, &(res / pivot));
    }
    Ok((q, r))
}

/// Extends an economic QR of `M` to one of `[M, col]` in `O(mn)`.
pub fn qr_append_column<T: Real>(
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    col: &DVector<T>,
) -> Result<(DMatrix<T>, DMatrix<T>), LinalgError> {
    let (m, n) = q.shape();
    if col.len() != m || r.shape() != (n, n) {
        return Err(LinalgError::Dimension("qr_append_column operands".into()));
    }
    if n == m {
        return Err(LinalgError::RankDeficient { column: n, pivot: 0.0 });
    }
    let (res, coeffs) = orthogonalize(q, col, true);
    let pivot = res.norm();
    if pivot <= T::lit(BREAKDOWN_TOL) * col.norm() {
        return Err(LinalgError::RankDeficient { column: n, pivot: pivot.f64() });
    }
    let mut q2 = q.clone().insert_column(n, T::zero());
    q2.set_column(n, &(res / pivot));
    let mut r2 = r.clone().insert_column(n, T::zero()).insert_row(n, T::zero());
    for i in 0..n {
        r2[(i, n)] = coeffs[i];
    }
    r2[(n, n)] = pivot;
    Ok((q2, r2))
}

/// QR factors `M = Q R` that tolerate rank deficiency and wide shapes.
///
/// Columns that add no new direction (relative residual below
/// [`BREAKDOWN_TOL`]) only extend `R`; `Q` keeps at most `min(m, n)` columns.
/// `R` is upper trapezoidal in a staircase pattern, which is all the projected
/// problems need since they only use `Q` through `Qᵀb` and `R` through its SVD.
#[derive(Clone, Debug)]
pub struct QrFactors<T: Real> {
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
}

impl<T: Real> QrFactors<T> {
    pub fn new(rows: usize) -> Self {
        Self { q: DMatrix::zeros(rows, 0), r: DMatrix::zeros(0, 0) }
    }

    pub fn from_matrix(m: &DMatrix<T>) -> Self {
        let mut f = Self::new(m.nrows());
        for j in 0..m.ncols() {
            f.push(&m.column(j).into_owned());
        }
        f
    }

    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    pub fn ncols(&self) -> usize {
        self.r.ncols()
    }

    /// Appends a column, adding a direction to `Q` when it is independent.
    pub fn push(&mut self, col: &DVector<T>) {
        let (res, coeffs) = orthogonalize(&self.q, col, true);
        let pivot = res.norm();
        let k = self.rank();
        let n = self.ncols();
        let grow = k < self.q.nrows() && pivot > T::lit(BREAKDOWN_TOL) * col.norm();
        let r = std::mem::replace(&mut self.r, DMatrix::zeros(0, 0));
        let mut r = r.insert_column(n, T::zero());
        for i in 0..k {
            r[(i, n)] = coeffs[i];
        }
        if grow {
            r = r.insert_row(k, T::zero());
            r[(k, n)] = pivot;
            let q = std::mem::replace(&mut self.q, DMatrix::zeros(0, 0));
            self.q = q.insert_column(k, T::zero());
            self.q.set_column(k, &(res / pivot));
        }
        self.r = r;
    }
}

/// Thin SVD with singular values sorted in descending order.
pub struct Svd<T: Real> {
    pub u: DMatrix<T>,
    pub s: DVector<T>,
    pub v: DMatrix<T>,
}

pub fn svd<T: Real>(m: &DMatrix<T>) -> Svd<T> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd { u: DMatrix::zeros(rows, 0), s: DVector::zeros(0), v: DMatrix::zeros(cols, 0) };
    }
    let dec = nalgebra::linalg::SVD::new(m.clone(), true, true);
    let u = dec.u.expect("left singular vectors requested");
    let vt = dec.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].partial_cmp(&dec.singular_values[a]).unwrap());
    let mut su = DMatrix::zeros(rows, k);
    let mut sv = DMatrix::zeros(cols, k);
    let mut ss = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        su.set_column(dst, &u.column(src));
        sv.set_column(dst, &vt.row(src).transpose());
        ss[dst] = dec.singular_values[src];
    }
    Svd { u: su, s: ss, v: sv }
}

/// Singular values only, descending.
pub fn singular_values<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    if m.nrows().min(m.ncols()) == 0 {
        return DVector::zeros(0);
    }
    let mut s: Vec<T> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    DVector::from_vec(s)
}

/// The `k` leading singular triplets of `m`.
pub fn truncated_svd<T: Real>(m: &DMatrix<T>, k: usize) -> Result<(DMatrix<T>, DVector<T>, DMatrix<T>), LinalgError> {
    let p = m.nrows().min(m.ncols());
    if k == 0 || k > p {
        return Err(LinalgError::Dimension(format!("truncated SVD rank {k} outside 1..={p}")));
    }
    let full = svd(m);
    Ok((full.u.columns(0, k).into_owned(), full.s.rows(0, k).into_owned(), full.v.columns(0, k).into_owned()))
}

/// Eigenvalues of a symmetric matrix in descending order.
pub fn sym_eigvals<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    sym_eig(m).0
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
pub fn sym_eig<T: Real>(m: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let half = T::lit(0.5);
    let sym = (m + m.transpose()) * half;
    let dec = nalgebra::linalg::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dec.eigenvalues[b].partial_cmp(&dec.eigenvalues[a]).unwrap());
    let vals = DVector::from_iterator(n, order.iter().map(|&i| dec.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &dec.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// 2-norm condition number from descending singular values (`inf` if singular).
pub fn condition_from_singular_values<T: Real>(s: &DVector<T>) -> T {
    if s.is_empty() {
        return T::one();
    }
    let smax = s[0];
    let smin = s[s.len() - 1];
    if smin <= T::zero() {
        return T::from_f64(f64::INFINITY).or_else(T::max_value).expect("representable bound");
    }
    smax / smin
}

/// Orthonormal basis of `span{seed, op·seed, …, op^{h−1}·seed}`.
///
/// Lanczos-style: each new vector is `op` applied to the latest basis vector,
/// orthogonalized against the full basis when `reorth` is set and against the
/// last two vectors otherwise. Stops early when the space becomes invariant.
pub fn krylov_basis<T, E, F>(mut op: F, seed: &DVector<T>, h: usize, reorth: bool) -> Result<OrthonormalBasis<T>, E>
where
    T: Real,
    E: From<LinalgError>,
    F: FnMut(&DVector<T>) -> Result<DVector<T>, E>,
{
    let norm = seed.norm();
    if norm < T::lit(1e-14) {
        return Err(LinalgError::ZeroSeed.into());
    }
    let mut basis = OrthonormalBasis::empty(seed.len());
    basis.push(&(seed / norm));
    while basis.dim() < h {
        let last = basis.columns.column(basis.dim() - 1).into_owned();
        let w = op(&last)?;
        let before = w.norm();
        let r = if reorth {
            orthogonalize(&basis.columns, &w, true).0
        } else {
            let d = basis.dim();
            let start = d.saturating_sub(2);
            orthogonalize(&basis.columns.columns(start, d - start).into_owned(), &w, false).0
        };
        let after = r.norm();
        if before == T::zero() || after <= T::lit(BREAKDOWN_TOL) * before {
            break;
        }
        basis.push(&(r / after));
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn qr_identity_and_single_column() {
        let (q, r) = economic_qr(&DMatrix::<f64>::identity(3, 3)).unwrap();
        assert!((q - DMatrix::identity(3, 3)).norm() < 1e-15);
        assert!((r - DMatrix::identity(3, 3)).norm() < 1e-15);
        let (q, r) = economic_qr(&DMatrix::<f64>::from_column_slice(2, 1, &[3.0, 4.0])).unwrap();
        assert!((q[(0, 0)] - 0.6).abs() < 1e-15 && (q[(1, 0)] - 0.8).abs() < 1e-15);
        assert!((r[(0, 0)] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn qr_random_reconstructs() {
        let m = random(20, 6, 1);
        let (q, r) = economic_qr(&m).unwrap();
        assert!((&q * &r - &m).norm() < 1e-12 * m.norm());
        assert!((q.tr_mul(&q) - DMatrix::identity(6, 6)).amax() < 1e-12);
        for j in 0..6 {
            assert!(r[(j, j)] > 0.0);
            for i in j + 1..6 {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn qr_rank_deficient() {
        let mut m = random(5, 3, 2);
        let c = m.column(0) * 2.0;
        m.set_column(2, &c);
        assert!(matches!(economic_qr(&m), Err(LinalgError::RankDeficient { column: 2, .. })));
    }

    #[test]
    fn append_orthogonal_and_degenerate() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let (q, r) = economic_qr(&e1).unwrap();
        let (q2, r2) = qr_append_column(&q, &r, &DVector::from_vec(vec![0.0, 1.0, 0.0])).unwrap();
        assert!((q2 - DMatrix::identity(3, 2)).norm() < 1e-15);
        assert!((r2 - DMatrix::identity(2, 2)).norm() < 1e-15);
        let err = qr_append_column(&q, &r, &DVector::from_vec(vec![2.0, 0.0, 0.0]));
        assert!(matches!(err, Err(LinalgError::RankDeficient { .. })));
    }

    #[test]
    fn append_matches_full_qr() {
        let m = random(30, 6, 3);
        let (q, r) = economic_qr(&m.columns(0, 5).into_owned()).unwrap();
        let (q2, r2) = qr_append_column(&q, &r, &m.column(5).into_owned()).unwrap();
        let (qf, rf) = economic_qr(&m).unwrap();
        assert!((q2 - qf).amax() < 1e-10);
        assert!((r2 - rf).amax() < 1e-10);
    }

    #[test]
    fn repeated_append_equals_assembled_qr() {
        let m = random(50, 8, 4);
        let (mut q, mut r) = economic_qr(&m.columns(0, 1).into_owned()).unwrap();
        for j in 1..8 {
            (q, r) = qr_append_column(&q, &r, &m.column(j).into_owned()).unwrap();
        }
        let (qf, rf) = economic_qr(&m).unwrap();
        assert!((q - qf).amax() < 1e-9);
        assert!((r - rf).amax() < 1e-9);
    }

    #[test]
    fn lenient_qr_handles_wide_matrices() {
        let m = random(4, 7, 5);
        let f = QrFactors::from_matrix(&m);
        assert_eq!(f.rank(), 4);
        assert_eq!(f.r.shape(), (4, 7));
        assert!((&f.q * &f.r - &m).norm() < 1e-12);
        assert!((f.q.tr_mul(&f.q) - DMatrix::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn tsvd_cases() {
        let d = DMatrix::from_diagonal(&DVector::<f64>::from_vec(vec![3.0, 2.0, 1.0]));
        let (_, s, _) = truncated_svd(&d, 2).unwrap();
        assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 2.0).abs() < 1e-14);

        let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let v = DVector::from_vec(vec![0.3, 4.0]);
        let m = &u * v.transpose();
        let (uu, ss, vv) = truncated_svd(&m, 1).unwrap();
        assert!((&uu * DMatrix::from_diagonal(&ss) * vv.transpose() - &m).amax() < 1e-12);

        let m = random(12, 8, 6);
        let all = singular_values(&m);
        let (uu, ss, vv) = truncated_svd(&m, 4).unwrap();
        let err = &m - &uu * DMatrix::from_diagonal(&ss) * vv.transpose();
        let e2 = singular_values(&err)[0];
        assert!((e2 - all[4]).abs() < 1e-10);
        assert!((uu.tr_mul(&uu) - DMatrix::identity(4, 4)).amax() < 1e-12);
        assert!((vv.tr_mul(&vv) - DMatrix::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn eigvals_cases() {
        let e = sym_eigvals(&DMatrix::<f64>::identity(4, 4));
        assert!(e.iter().all(|&x| (x - 1.0).abs() < 1e-15));
        let e = sym_eigvals(&DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, -2.0, 0.0])));
        assert_eq!(e.as_slice(), &[5.0, 0.0, -2.0]);
        let b = random(10, 10, 7);
        let s = &b + b.transpose();
        let e = sym_eigvals(&s);
        assert!((e.sum() - s.trace()).abs() < 1e-10);
        assert!(e.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn krylov_cases() {
        let seed = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let b = krylov_basis::<f64, LinalgError, _>(|v| Ok(v.clone()), &seed, 5, true).unwrap();
        assert_eq!(b.dim(), 1);

        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let b = krylov_basis::<f64, LinalgError, _>(|v| Ok(&d * v), &DVector::from_vec(vec![1.0, 1.0]), 5, true)
            .unwrap();
        assert_eq!(b.dim(), 2);
        assert!(b.orthogonality_error() < 1e-14);

        let z = DVector::<f64>::zeros(3);
        let err = krylov_basis::<f64, LinalgError, _>(|v| Ok(v.clone()), &z, 3, true);
        assert!(matches!(err, Err(LinalgError::ZeroSeed)));
    }

    #[test]
    fn krylov_spans_power_sequence() {
        let a = random(15, 15, 8);
        let s = a.tr_mul(&a);
        let seed = DVector::from_fn(15, |i, _| (i as f64).sin() + 1.0);
        let basis = krylov_basis::<f64, LinalgError, _>(|v| Ok(&s * v), &seed, 4, true).unwrap();
        assert_eq!(basis.dim(), 4);
        assert!(basis.orthogonality_error() < 1e-12);
        let mut p = seed.clone();
        for _ in 0..4 {
            let proj = &basis.columns * basis.columns.tr_mul(&p);
            assert!((&p - proj).norm() < 1e-9 * p.norm());
            p = &s * p;
        }
    }

    #[test]
    fn counted_tallies_each_call() {
        let op = DenseOperator::new(random(3, 4, 9));
        let c = Counted::new(&op);
        c.apply(&DVector::zeros(4));
        c.apply_adjoint(&DVector::zeros(3));
        c.apply(&DVector::zeros(4));
        assert_eq!(c.count(), 3);
    }

    #[test]
    fn dense_operator_adjoint() {
        let op = DenseOperator::new(random(6, 4, 10));
        let u = DVector::from_fn(4, |i, _| i as f64 - 1.5);
        let v = DVector::from_fn(6, |i, _| (i as f64).cos());
        let lhs = op.apply(&u).dot(&v);
        let rhs = u.dot(&op.apply_adjoint(&v));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn generic_over_f32() {
        let m = DMatrix::<f32>::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, 1.0, 0.0]);
        let (q, r) = economic_qr(&m).unwrap();
        assert!((&q * &r - &m).norm() < 1e-5);
    }
}
