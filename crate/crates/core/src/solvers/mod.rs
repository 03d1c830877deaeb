//! Iteratively reweighted projection solvers.
//!
//! Every method alternates a weight update computed from `Ψx`, a projected
//! Tikhonov problem whose parameter `μ` is set by the discrepancy principle,
//! and a subspace update. They differ in where the subspace lives:
//!
//! * GKS / S-GKS: native space `ℝᴺ`, penalty `μ‖diag(w) Ψ x‖²`.
//! * PS-GKS and its restarted/recycled forms: transformed space `ℝᴷ`,
//!   standard-form penalty `μ‖u‖²` through the oblique pseudoinverse.
//! * PS-GKB: Golub–Kahan bidiagonalization of the priorconditioned operator,
//!   rebuilt every outer iteration.
//! * FGK: flexible Golub–Kahan with the preconditioner changing per step.

mod fgk;
mod psgkb;
mod psgks;
mod sgks;

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Counted, LinalgError, LinearOperator};
use crate::metrics;
use crate::priorcond::{DctPreconditioner, PinvStrategy, PriorcondError};
use crate::problems::ProblemInstance;
use crate::regparam::DpConfig;
use crate::transforms::SparsifyingTransform;
use crate::weights::{WeightError, WeightScheme};
use crate::Real;

pub use fgk::fgk_solve;
pub use psgkb::psgkb_solve;
pub use psgks::{initial_subspace_psgks, psgks_solve};
pub use sgks::sgks_solve;

/// Relative size below which a freshly orthogonalized direction counts as lost.
pub const STAGNATION_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Priorcond(#[from] PriorcondError),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "gks")]
    Gks,
    #[serde(rename = "s-gks")]
    Sgks,
    #[serde(rename = "res-s-gks")]
    ResSgks,
    #[serde(rename = "rec-s-gks")]
    RecSgks,
    #[serde(rename = "ps-gks")]
    Psgks,
    #[serde(rename = "res-ps-gks")]
    ResPsgks,
    #[serde(rename = "rec-ps-gks")]
    RecPsgks,
    #[serde(rename = "ps-gkb")]
    Psgkb,
    #[serde(rename = "fgk")]
    Fgk,
}

/// How the basis is kept bounded once it reaches `D_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wrap {
    None,
    Restart,
    Recycle,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Gks,
        Method::Sgks,
        Method::ResSgks,
        Method::RecSgks,
        Method::Psgks,
        Method::ResPsgks,
        Method::RecPsgks,
        Method::Psgkb,
        Method::Fgk,
    ];

    /// Display name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Method::Gks => "GKS",
            Method::Sgks => "S-GKS",
            Method::ResSgks => "resS-GKS",
            Method::RecSgks => "recS-GKS",
            Method::Psgks => "PS-GKS",
            Method::ResPsgks => "resPS-GKS",
            Method::RecPsgks => "recPS-GKS",
            Method::Psgkb => "PS-GKB",
            Method::Fgk => "FGK",
        }
    }

    /// Configuration tag, as accepted by serde.
    pub fn tag(self) -> &'static str {
        match self {
            Method::Gks => "gks",
            Method::Sgks => "s-gks",
            Method::ResSgks => "res-s-gks",
            Method::RecSgks => "rec-s-gks",
            Method::Psgks => "ps-gks",
            Method::ResPsgks => "res-ps-gks",
            Method::RecPsgks => "rec-ps-gks",
            Method::Psgkb => "ps-gkb",
            Method::Fgk => "fgk",
        }
    }

    pub fn wrap(self) -> Wrap {
        match self {
            Method::ResSgks | Method::ResPsgks => Wrap::Restart,
            Method::RecSgks | Method::RecPsgks => Wrap::Recycle,
            _ => Wrap::None,
        }
    }

    pub fn uses_pinv(self) -> bool {
        !matches!(self, Method::Gks | Method::Sgks | Method::ResSgks | Method::RecSgks)
    }

    /// Built-in weight preset for the method.
    pub fn default_weights(self, two_d: bool) -> WeightScheme {
        let name = match self {
            Method::Gks => "EQUAL",
            Method::Sgks | Method::RecSgks => "MM2",
            Method::ResSgks => "MM1",
            Method::Psgks | Method::ResPsgks | Method::RecPsgks | Method::Psgkb => "MM3",
            Method::Fgk if two_d => "MM2",
            Method::Fgk => "MM4",
        };
        WeightScheme::preset(name).expect("preset exists")
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s) || m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub weights: WeightScheme,
    pub max_iter: usize,
    /// Dimension of the initial Krylov space.
    pub h: usize,
    pub reorthogonalize: bool,
    /// Stop once `‖x_{ℓ+1} − x_ℓ‖ / ‖x_ℓ‖` drops below this; 0 runs the full budget.
    pub stop_tol: f64,
    pub d_min: usize,
    pub d_max: usize,
    pub dp: DpConfig,
    /// `None` picks [`PinvStrategy::default_for`] the transform.
    pub pinv: Option<PinvStrategy>,
}

impl SolverConfig {
    /// Defaults for `method` on a 1D problem.
    pub fn new(method: Method) -> Self {
        Self {
            method,
            weights: method.default_weights(false),
            max_iter: 150,
            h: 5,
            reorthogonalize: true,
            stop_tol: 0.0,
            d_min: 15,
            d_max: 25,
            dp: DpConfig::default(),
            pinv: None,
        }
    }

    pub fn with_weights(mut self, weights: WeightScheme) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if self.h == 0 {
            return bad("h must be at least 1".into());
        }
        if !(self.stop_tol >= 0.0) {
            return bad("stop_tol must be nonnegative".into());
        }
        if self.method.wrap() != Wrap::None && !(1 <= self.d_min && self.d_min < self.d_max) {
            return bad(format!("need 1 ≤ d_min < d_max (got {} and {})", self.d_min, self.d_max));
        }
        self.dp.validate().map_err(SolverError::InvalidConfig)?;
        if let Some(p) = &self.pinv {
            p.validate().map_err(SolverError::InvalidConfig)?;
        }
        self.weights.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub mu: f64,
    pub basis_dim: usize,
    pub rre: Option<f64>,
    pub ssim: Option<f64>,
    pub gini: f64,
    pub kappa: f64,
    pub n_a: u64,
    pub n_psi: u64,
    pub n_psidag: u64,
    pub dp_root_found: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIter,
    StopTol,
    Breakdown,
}

#[derive(Clone, Debug)]
pub struct SolveResult<T: Real> {
    pub x: DVector<T>,
    pub history: Vec<IterationRecord>,
    pub termination: Termination,
    /// What broke down, when `termination` is [`Termination::Breakdown`].
    pub breakdown: Option<String>,
}

impl<T: Real> SolveResult<T> {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.history.last()
    }
}

/// Borrowed view of a problem, enough to run any solver.
#[derive(Clone, Copy)]
pub struct ProblemRef<'a, T: Real> {
    pub a: &'a dyn LinearOperator<T>,
    pub psi: &'a SparsifyingTransform<T>,
    pub b: &'a DVector<T>,
    pub x_true: Option<&'a DVector<T>>,
    /// `(ny, nx)` used for SSIM; `(1, N)` for signals.
    pub shape: (usize, usize),
}

impl<'a, T: Real> From<&'a ProblemInstance<T>> for ProblemRef<'a, T> {
    fn from(p: &'a ProblemInstance<T>) -> Self {
        ProblemRef { a: p.a.as_ref(), psi: &p.psi, b: &p.b, x_true: p.x_true.as_ref(), shape: p.ssim_shape() }
    }
}

/// Runs the configured method.
pub fn solve<T: Real>(
    p: &ProblemRef<'_, T>,
    x0: Option<&DVector<T>>,
    cfg: &SolverConfig,
) -> Result<SolveResult<T>, SolverError> {
    cfg.validate()?;
    if p.b.len() != p.a.nrows() || p.psi.ncols() != p.a.ncols() {
        return Err(SolverError::InvalidConfig("operator and data dimensions disagree".into()));
    }
    match cfg.method {
        Method::Gks => {
            let mut c = cfg.clone();
            c.weights = WeightScheme::Equal;
            sgks_solve(p, x0, &c)
        }
        Method::Sgks | Method::ResSgks | Method::RecSgks => sgks_solve(p, x0, cfg),
        Method::Psgks | Method::ResPsgks | Method::RecPsgks => psgks_solve(p, x0, cfg),
        Method::Psgkb => psgkb_solve(p, cfg),
        Method::Fgk => fgk_solve(p, cfg),
    }
}

/// Operator wrappers owning the per-run application counts.
pub(crate) struct Ops<'a, T: Real> {
    pub a: Counted<'a, T>,
    pub psi: Counted<'a, T>,
    pub pinv: AtomicU64,
}

impl<'a, T: Real> Ops<'a, T> {
    pub fn new(p: &ProblemRef<'a, T>) -> Self {
        Self { a: Counted::new(p.a), psi: Counted::new(p.psi), pinv: AtomicU64::new(0) }
    }

    pub fn counts(&self) -> (u64, u64, u64) {
        (self.a.count(), self.psi.count(), self.pinv.load(Ordering::Relaxed))
    }
}

/// Builds history rows; quality metrics never touch the counted operators.
pub(crate) struct Recorder<'a, T: Real> {
    x_true: Option<&'a DVector<T>>,
    shape: (usize, usize),
    pub history: Vec<IterationRecord>,
}

pub(crate) struct Step<'b, T: Real> {
    pub iter: usize,
    pub mu: T,
    pub basis_dim: usize,
    pub x: &'b DVector<T>,
    pub psi_x: &'b DVector<T>,
    pub kappa: T,
    pub root_found: bool,
}

impl<'a, T: Real> Recorder<'a, T> {
    pub fn new(p: &ProblemRef<'a, T>) -> Self {
        Self { x_true: p.x_true, shape: p.shape, history: Vec::new() }
    }

    pub fn push(&mut self, s: Step<'_, T>, counts: (u64, u64, u64)) {
        let rre = self.x_true.and_then(|t| metrics::rre(s.x, t).ok());
        let ssim = self.x_true.and_then(|t| metrics::ssim(s.x, t, self.shape).ok());
        self.history.push(IterationRecord {
            iter: s.iter,
            mu: s.mu.f64(),
            basis_dim: s.basis_dim,
            rre,
            ssim,
            gini: metrics::gini_index(s.psi_x).unwrap_or(0.0),
            kappa: s.kappa.f64(),
            n_a: counts.0,
            n_psi: counts.1,
            n_psidag: counts.2,
            dp_root_found: s.root_found,
        });
    }
}

/// `‖x_new − x_old‖ / max(‖x_old‖, 1e-30) < tol`, never true for `tol = 0`.
pub(crate) fn converged<T: Real>(x_new: &DVector<T>, x_old: &DVector<T>, tol: f64) -> bool {
    tol > 0.0 && (x_new - x_old).norm().f64() / x_old.norm().f64().max(1e-30) < tol
}

/// Applies `op` to every column of `v`.
pub(crate) fn apply_columns<T: Real>(op: &dyn LinearOperator<T>, v: &DMatrix<T>) -> DMatrix<T> {
    let mut out = DMatrix::zeros(op.nrows(), v.ncols());
    for j in 0..v.ncols() {
        out.set_column(j, &op.apply(&v.column(j).into_owned()));
    }
    out
}

/// Preconditioner needed by the PCG pseudoinverse strategy.
pub(crate) fn pinv_setup<T: Real>(
    psi: &SparsifyingTransform<T>,
    cfg: &SolverConfig,
) -> (PinvStrategy, Option<DctPreconditioner<T>>) {
    let strategy = cfg.pinv.unwrap_or_else(|| PinvStrategy::default_for(psi));
    let pre = match strategy {
        PinvStrategy::PcgDct { .. } => Some(DctPreconditioner::new(psi)),
        _ => None,
    };
    (strategy, pre)
}

/// 2-norm condition number of `[top; √μ bottom]`, with `bottom = I` when absent.
pub fn projected_condition_number<T: Real>(top: &DMatrix<T>, bottom: Option<&DMatrix<T>>, mu: T) -> T {
    let d = top.ncols();
    if d == 0 {
        return T::one();
    }
    match bottom {
        None => {
            // σᵢ([R; √μ I]) = √(sᵢ² + μ), with sᵢ = 0 past the rank of R.
            let s = linalg::singular_values(top);
            let smax = s.iter().fold(T::zero(), |m, &v| m.max(v));
            let smin = if s.len() < d { T::zero() } else { s.iter().fold(smax, |m, &v| m.min(v)) };
            ((smax * smax + mu) / (smin * smin + mu)).sqrt()
        }
        Some(l) => {
            let mut h = DMatrix::zeros(top.nrows() + l.nrows(), d);
            h.rows_mut(0, top.nrows()).copy_from(top);
            h.rows_mut(top.nrows(), l.nrows()).copy_from(&(l * mu.sqrt()));
            let s = linalg::singular_values(&h);
            if s.len() < d {
                return linalg::condition_from_singular_values(&DVector::from_element(1, T::zero()));
            }
            linalg::condition_from_singular_values(&s)
        }
    }
}

/// Coefficients `C` (`D × D_min`) of the compressed basis `V·C`.
///
/// The leading `D_min − 1` columns are the dominant right singular vectors of
/// `H`; the last is the part of `coeff` they miss, normalized, or the next
/// singular vector when that part vanishes. With `D_min − 1 ≥ D` all right
/// singular vectors are kept.
pub fn compression_coefficients<T: Real>(h: &DMatrix<T>, coeff: &DVector<T>, d_min: usize) -> DMatrix<T> {
    let d = h.ncols();
    let dec = linalg::svd(h);
    let avail = dec.v.ncols();
    let keep = (d_min.saturating_sub(1)).min(avail);
    let w = dec.v.columns(0, keep).into_owned();
    if keep >= d {
        return w;
    }
    let resid = coeff - &w * w.tr_mul(coeff);
    let rn = resid.norm();
    let extra = if rn > T::lit(STAGNATION_TOL) * coeff.norm().max(T::one()) {
        resid / rn
    } else if keep < avail {
        dec.v.column(keep).into_owned()
    } else {
        return w;
    };
    let mut c = w.insert_column(keep, T::zero());
    c.set_column(keep, &extra);
    c
}

/// Compresses the orthonormal basis `V` (`K × D`) of a PS-GKS run to
/// `D_min` columns that still contain `z_current`.
///
/// `H = [R_Ā; √μ I]`; the kept directions are the leading `D_min − 1` right
/// singular vectors of `H`, completed by the normalized component of
/// `z_current` outside them.
pub fn compress_basis_tsvd<T: Real>(
    v: &DMatrix<T>,
    r_abar: &DMatrix<T>,
    mu: T,
    z_current: &DVector<T>,
    d_min: usize,
) -> DMatrix<T> {
    let d = v.ncols();
    let mut h = DMatrix::zeros(r_abar.nrows() + d, d);
    h.rows_mut(0, r_abar.nrows()).copy_from(r_abar);
    h.rows_mut(r_abar.nrows(), d).fill_with_identity();
    h.rows_mut(r_abar.nrows(), d).scale_mut(mu.sqrt());
    let dec = linalg::svd(&h);
    let keep = d_min.saturating_sub(1).min(d);
    let vt = v * dec.v.columns(0, keep);
    if keep >= d {
        return vt;
    }
    let resid = z_current - &vt * vt.tr_mul(z_current);
    let rn = resid.norm();
    let extra = if rn >= T::lit(STAGNATION_TOL) * z_current.norm().max(T::one()) {
        resid / rn
    } else {
        v * dec.v.column(keep)
    };
    let mut out = vt.insert_column(keep, T::zero());
    out.set_column(keep, &extra);
    out
}
