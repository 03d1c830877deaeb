//! Dense spectral checks of the normal-equation matrices
//! `Q_st = AᵀA + μ ΨᵀW²Ψ` and `Q_pr = ĀᵀĀ + μI`, and of the rectangular,
//! rank-deficient Ostrowski bounds they rest on.
//!
//! Eigenvalues are indexed from 1 in descending order throughout.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, DenseOperator, LinearOperator};
use crate::priorcond::{dense_pinv, x_kernel, PriorcondError};
use crate::transforms::{self, SparsifyingTransform};
use crate::Real;

/// Relative slack used by every bound check.
pub const BOUND_SLACK: f64 = 1e-8;

/// One index of a bound check: `lower ≤ λ ≤ upper` up to `tol`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub i: usize,
    pub lambda: f64,
    pub lower: f64,
    pub upper: f64,
    pub tol: f64,
    /// `min(λ − lower, upper − λ)`; the entry passes when `slack ≥ −tol`.
    pub slack: f64,
}

impl BoundEntry {
    fn new(i: usize, lambda: f64, lower: f64, upper: f64, tol: f64) -> Self {
        Self { i, lambda, lower, upper, tol, slack: (lambda - lower).min(upper - lambda) }
    }

    pub fn holds(&self) -> bool {
        self.slack >= -self.tol
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub entries: Vec<BoundEntry>,
    pub pass: bool,
    pub violations: usize,
    /// Rank `R` of Ψ (theorem checks) or of X (Ostrowski).
    pub rank: usize,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    /// Scale the relative slack is measured against.
    pub scale: f64,
    pub kappa: Option<f64>,
    /// Lower bound on `κ(Q_st)`, available when Ψ has full column rank.
    pub kappa_lower: Option<f64>,
    /// Upper bound `1 + λ₁(AᵀA)λ₁(W⁻²)/(μ λ_R(ΨᵀΨ))` on `κ(Q_pr)`.
    pub kappa_upper: Option<f64>,
}

impl BoundReport {
    fn from_entries(entries: Vec<BoundEntry>, rank: usize, scale: f64) -> Self {
        let violations = entries.iter().filter(|e| !e.holds()).count();
        Self {
            entries,
            pass: violations == 0,
            violations,
            rank,
            c1: None,
            c2: None,
            scale,
            kappa: None,
            kappa_lower: None,
            kappa_upper: None,
        }
    }

    /// `κ` bound (if any) is respected within the relative slack.
    pub fn kappa_bound_holds(&self) -> bool {
        let k = match self.kappa {
            Some(k) => k,
            None => return true,
        };
        let up = self.kappa_upper.map_or(true, |u| k <= u * (1.0 + BOUND_SLACK));
        let lo = self.kappa_lower.map_or(true, |l| k >= l * (1.0 - BOUND_SLACK));
        up && lo
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Standard,
    Priorconditioned,
}

/// Dense analysis instance.
#[derive(Clone, Debug)]
pub struct DenseInstance {
    pub a: DMatrix<f64>,
    pub psi: SparsifyingTransform<f64>,
    pub w: DVector<f64>,
    pub mu: f64,
}

fn scaled_rows<T: Real>(m: &DMatrix<T>, w: &DVector<T>) -> DMatrix<T> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= w[i];
    }
    out
}

/// `AᵀA + μ ΨᵀW²Ψ`.
pub fn assemble_q_st<T: Real>(a: &DMatrix<T>, psi: &DMatrix<T>, w: &DVector<T>, mu: T) -> DMatrix<T> {
    let wpsi = scaled_rows(psi, w);
    let q = a.tr_mul(a) + wpsi.tr_mul(&wpsi) * mu;
    (&q + q.transpose()) * T::lit(0.5)
}

/// Dense `Ā = A E (WΨ)†`.
pub fn assemble_abar<T: Real>(
    a: &DMatrix<T>,
    psi: &DMatrix<T>,
    w: &DVector<T>,
    kernel: &DMatrix<T>,
) -> Result<DMatrix<T>, PriorcondError> {
    let n = a.ncols();
    let op = DenseOperator::new(a.clone());
    let split = x_kernel(&op, kernel, &DVector::zeros(a.nrows()))?;
    let pinv = dense_pinv(&scaled_rows(psi, w));
    let mut e = DMatrix::identity(n, n);
    for j in 0..n {
        e.set_column(j, &split.cache.apply_e(&op, &DVector::from_fn(n, |i, _| if i == j { T::one() } else { T::zero() })));
    }
    Ok(a * e * pinv)
}

/// `ĀᵀĀ + μ I_K`.
pub fn assemble_q_pr<T: Real>(
    a: &DMatrix<T>,
    psi: &DMatrix<T>,
    w: &DVector<T>,
    mu: T,
    kernel: &DMatrix<T>,
) -> Result<DMatrix<T>, PriorcondError> {
    let abar = assemble_abar(a, psi, w, kernel)?;
    let k = abar.ncols();
    let q = abar.tr_mul(&abar) + DMatrix::identity(k, k) * mu;
    Ok((&q + q.transpose()) * T::lit(0.5))
}

fn eig(m: &DMatrix<f64>) -> Vec<f64> {
    linalg::sym_eigvals(m).iter().copied().collect()
}

/// `λ_i` with 1-based `i`; indices past the end read as 0.
fn at(v: &[f64], i: usize) -> f64 {
    v.get(i - 1).copied().unwrap_or(0.0)
}

/// Index-by-index check of the eigenvalue bounds for `Q_st` or `Q_pr`.
pub fn verify_theorem_bounds(which: Which, inst: &DenseInstance) -> Result<BoundReport, PriorcondError> {
    let psi = inst.psi.to_dense();
    let (k, n) = psi.shape();
    let r = inst.psi.rank();
    let mu = inst.mu;
    let ata = eig(&inst.a.tr_mul(&inst.a));
    let ptp = eig(&psi.tr_mul(&psi));
    let lam_r_ptp = at(&ptp, r);
    let mut w2: Vec<f64> = inst.w.iter().map(|w| w * w).collect();
    w2.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut winv2: Vec<f64> = inst.w.iter().map(|w| 1.0 / (w * w)).collect();
    winv2.sort_by(|a, b| b.partial_cmp(a).unwrap());

    match which {
        Which::Standard => {
            let q = assemble_q_st(&inst.a, &psi, &inst.w, mu);
            let lam = eig(&q);
            let scale = lam[0].abs();
            let tol = BOUND_SLACK * scale;
            let entries = (1..=n)
                .map(|i| {
                    let upper = ata[0] + mu * ptp[0] * at(&w2, i);
                    let lower = if i <= r { at(&ata, n) + mu * lam_r_ptp * at(&w2, i + k - r) } else { at(&ata, n) };
                    BoundEntry::new(i, lam[i - 1], lower, upper, tol)
                })
                .collect();
            let mut rep = BoundReport::from_entries(entries, r, scale);
            rep.kappa = Some(lam[0] / lam[n - 1]);
            if r == n {
                let num = at(&ata, n) + mu * at(&ptp, n) * at(&w2, 1 + k - n);
                let den = ata[0] + mu * ptp[0] * at(&w2, k);
                rep.kappa_lower = Some(num / den);
            }
            Ok(rep)
        }
        Which::Priorconditioned => {
            let q = assemble_q_pr(&inst.a, &psi, &inst.w, mu, inst.psi.kernel_basis())?;
            let lam = eig(&q);
            let scale = lam[0].abs();
            let c1 = winv2[0] / lam_r_ptp;
            let c2 = ata[0] / lam_r_ptp;
            let mut entries = Vec::with_capacity(k);
            for i in 1..=k {
                let e = if i <= r {
                    let upper = mu + (c1 * at(&ata, i)).min(c2 * at(&winv2, i));
                    BoundEntry::new(i, lam[i - 1], mu, upper, BOUND_SLACK * scale)
                } else {
                    BoundEntry::new(i, lam[i - 1], mu, mu, BOUND_SLACK * mu)
                };
                entries.push(e);
            }
            let mut rep = BoundReport::from_entries(entries, r, scale);
            rep.c1 = Some(c1);
            rep.c2 = Some(c2);
            rep.kappa = Some(lam[0] / lam[k - 1]);
            rep.kappa_upper = Some(1.0 + ata[0] * winv2[0] / (mu * lam_r_ptp));
            Ok(rep)
        }
    }
}

/// Rectangular, rank-deficient Ostrowski bounds for `XᵀCX` (`C` n×n symmetric,
/// `X` n×m of rank `R`).
///
/// `XᵀCX` has `m − R` zero eigenvalues; the remaining `R`, in descending
/// order, satisfy `λ_i(XᵀCX) = θ_i λ_i(Z)` with `θ_i ∈ [λ_R(XᵀX), λ₁(XᵀX)]`
/// and `λ_{i+n−R}(C) ≤ λ_i(Z) ≤ λ_i(C)`. The bounds below take the extreme
/// `θ` for each sign, so for positive semidefinite `C` they read
/// `λ_{i+n−R}(C)λ_R(XᵀX) ≤ λ_i ≤ λ_i(C)λ₁(XᵀX)`; for PSD `C` the extra bound
/// `λ_i ≤ λ₁(C)λ_i(XᵀX)` is checked too.
pub fn ostrowski_check(c: &DMatrix<f64>, x: &DMatrix<f64>) -> BoundReport {
    let (n, m) = x.shape();
    let sv = linalg::singular_values(x);
    let smax = sv.get(0).copied().unwrap_or(0.0);
    let cut = smax * (n.max(m) as f64) * f64::EPSILON * 10.0;
    let r = sv.iter().filter(|&&s| s > cut).count();
    let xtx: Vec<f64> = sv.iter().map(|s| s * s).collect();
    let lc = eig(c);
    let c_norm = lc.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let scale = c_norm * smax * smax;

    let mut lam = eig(&(x.transpose() * c * x));
    // Split off the m − R eigenvalues closest to zero.
    let mut by_mag: Vec<usize> = (0..m).collect();
    by_mag.sort_by(|&a, &b| lam[a].abs().partial_cmp(&lam[b].abs()).unwrap());
    let tail: Vec<usize> = by_mag[..m - r].to_vec();
    let zeros: Vec<f64> = tail.iter().map(|&i| lam[i]).collect();
    let mut keep = vec![true; m];
    for &i in &tail {
        keep[i] = false;
    }
    lam = lam.iter().zip(keep).filter(|(_, k)| *k).map(|(v, _)| *v).collect();

    let psd = lc.last().map_or(true, |&l| l >= -BOUND_SLACK * c_norm);
    let tol = BOUND_SLACK * scale;
    let mut entries = Vec::with_capacity(m);
    for i in 1..=r {
        let lo_c = at(&lc, i + n - r);
        let up_c = at(&lc, i);
        let (s_lo, s_hi) = (xtx[r - 1], xtx[0]);
        let lower = (lo_c * s_lo).min(lo_c * s_hi);
        let mut upper = (up_c * s_lo).max(up_c * s_hi);
        if psd {
            upper = upper.min(lc[0] * xtx[i - 1]);
        }
        entries.push(BoundEntry::new(i, lam[i - 1], lower, upper, tol));
    }
    for (j, z) in zeros.into_iter().enumerate() {
        entries.push(BoundEntry::new(r + j + 1, z, 0.0, 0.0, 1e-10 * scale));
    }
    BoundReport::from_entries(entries, r, scale)
}

/// Number of clusters in a spectrum under single-linkage: a gap starts a new
/// cluster when it exceeds `factor` times the median gap (and the relative
/// roundoff floor `1e-8·max|λ|`).
pub fn cluster_count(eigs: &[f64], factor: f64) -> usize {
    if eigs.len() < 2 {
        return eigs.len();
    }
    let mut v = eigs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut gaps: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    let top = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let mut sorted = gaps.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let thr = (factor * median).max(BOUND_SLACK * top);
    gaps.retain(|&g| g > thr);
    gaps.len() + 1
}

/// Unpreconditioned CG on `Q u = v` from zero; iterations to reach
/// `‖r‖ ≤ tol·‖v‖`, or `max_iter` if it never does.
pub fn cg_iterations(q: &DMatrix<f64>, v: &DVector<f64>, tol: f64, max_iter: usize) -> usize {
    let mut u = DVector::zeros(v.len());
    let mut r = v.clone();
    let mut p = r.clone();
    let stop = tol * v.norm();
    let mut rr = r.norm_squared();
    for it in 0..max_iter {
        if rr.sqrt() <= stop {
            return it;
        }
        let qp = q * &p;
        let alpha = rr / p.dot(&qp);
        u.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &qp, 1.0);
        let rr_new = r.norm_squared();
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    max_iter
}

/// Ψ families used by the random instance generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiKind {
    Dirichlet1d,
    Neumann1d,
    Aniso2d,
    /// Random dense Ψ with a two-dimensional kernel.
    RankDeficient,
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.gen_range(lo.log10()..=hi.log10()))
}

/// Seeded random dense instance: `A` standard normal `m×n`, weights
/// log-uniform in `[1/w_range, w_range]`, `μ` log-uniform in `[1e-3, 1e3]`.
/// For `Aniso2d`, `n` is rounded down to a square grid.
pub fn random_instance(seed: u64, m: usize, n: usize, kind: PsiKind, w_range: f64) -> DenseInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = match kind {
        PsiKind::Dirichlet1d => transforms::d1_dirichlet(n),
        PsiKind::Neumann1d => transforms::d1_neumann(n),
        PsiKind::Aniso2d => {
            let s = ((n as f64).sqrt() as usize).max(2);
            transforms::d2_aniso_neumann(s, s)
        }
        PsiKind::RankDeficient => {
            let k = n + 3;
            transforms::custom_dense(normal_matrix(&mut rng, k, n - 2) * normal_matrix(&mut rng, n - 2, n))
        }
    };
    let n = LinearOperator::ncols(&psi);
    let a = normal_matrix(&mut rng, m, n);
    let k = psi.to_dense().nrows();
    let w = DVector::from_fn(k, |_, _| log_uniform(&mut rng, 1.0 / w_range, w_range));
    let mu = log_uniform(&mut rng, 1e-3, 1e3);
    DenseInstance { a, psi, w, mu }
}

/// Weights `small` on the first `s` entries and `large` elsewhere.
pub fn two_scale_weights(k: usize, s: usize, small: f64, large: f64) -> DVector<f64> {
    DVector::from_fn(k, |i, _| if i < s { small } else { large })
}

/// Shapes exercised by the Ostrowski suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OstrowskiVariant {
    Tall,
    Wide,
    RankDeficient,
    Indefinite,
    Psd,
}

impl OstrowskiVariant {
    pub const ALL: [OstrowskiVariant; 5] = [
        OstrowskiVariant::Tall,
        OstrowskiVariant::Wide,
        OstrowskiVariant::RankDeficient,
        OstrowskiVariant::Indefinite,
        OstrowskiVariant::Psd,
    ];
}

/// Seeded `(C, X)` pair for one Ostrowski trial.
pub fn random_ostrowski_case(seed: u64, variant: OstrowskiVariant) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sym = |rng: &mut ChaCha8Rng, n: usize| {
        let b = normal_matrix(rng, n, n);
        (&b + b.transpose()) * 0.5
    };
    let psd = |rng: &mut ChaCha8Rng, n: usize, r: usize| {
        let b = normal_matrix(rng, n, r);
        &b * b.transpose()
    };
    match variant {
        OstrowskiVariant::Tall => (sym(&mut rng, 8), normal_matrix(&mut rng, 8, 5)),
        OstrowskiVariant::Wide => (sym(&mut rng, 5), normal_matrix(&mut rng, 5, 8)),
        OstrowskiVariant::RankDeficient => {
            let x = normal_matrix(&mut rng, 7, 3) * normal_matrix(&mut rng, 3, 6);
            (sym(&mut rng, 7), x)
        }
        OstrowskiVariant::Indefinite => {
            let (n, m) = if rng.gen_bool(0.5) { (6, 4) } else { (4, 6) };
            let x = normal_matrix(&mut rng, n, 3) * normal_matrix(&mut rng, 3, m);
            (sym(&mut rng, n), x)
        }
        OstrowskiVariant::Psd => {
            let (n, m) = if rng.gen_bool(0.5) { (7, 5) } else { (5, 7) };
            let x = normal_matrix(&mut rng, n, 3) * normal_matrix(&mut rng, 3, m);
            (psd(&mut rng, n, n - 1), x)
        }
    }
}
