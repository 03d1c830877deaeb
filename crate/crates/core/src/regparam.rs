//! Discrepancy-principle choice of μ on the projected problems.
//!
//! With `R = P S Wᵀ` and `ĝ = Pᵀg`, the projected residual at `β = 1/μ` is
//! `ψ(β) = Σ ĝᵢ²/(1 + β sᵢ²)² + ‖g‖² − ‖ĝ‖² + offset − target`, which is
//! decreasing and convex in β, so Newton from `β = 0` climbs monotonically to
//! the root.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::Real;

/// Discrepancy principle settings: target `τ²·M`, admissible `μ` window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpConfig {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_mu_min")]
    pub mu_min: f64,
    #[serde(default = "default_mu_max")]
    pub mu_max: f64,
    /// μ used when even `β → ∞` leaves the residual above the target.
    #[serde(default)]
    pub unreachable: Unreachable,
}

/// Fallback when the projected problem cannot reach the discrepancy target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unreachable {
    /// Fit as closely as possible.
    #[default]
    MuMin,
    /// Treat the data as too noisy to fit.
    MuMax,
}

fn default_tau() -> f64 {
    1.01
}
fn default_mu_min() -> f64 {
    1e-7
}
fn default_mu_max() -> f64 {
    1e7
}

impl Default for DpConfig {
    fn default() -> Self {
        Self { tau: default_tau(), mu_min: default_mu_min(), mu_max: default_mu_max(), unreachable: Unreachable::default() }
    }
}

impl DpConfig {
    /// `τ²·M` for `M` data entries with unit-variance noise.
    pub fn target(&self, m: usize) -> f64 {
        self.tau * self.tau * m as f64
    }

    fn unreachable_mu(&self) -> f64 {
        match self.unreachable {
            Unreachable::MuMin => self.mu_min,
            Unreachable::MuMax => self.mu_max,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau > 0.0) {
            return Err("tau must be positive".into());
        }
        if !(self.mu_min > 0.0 && self.mu_min < self.mu_max) {
            return Err("need 0 < mu_min < mu_max".into());
        }
        Ok(())
    }
}

/// Projected data: `R` (possibly rectangular), `g = Qᵀb̄`, the out-of-range
/// residual `‖(I − QQᵀ)b̄‖²` and the target.
#[derive(Clone, Debug)]
pub struct DpInput<T: Real> {
    pub r: DMatrix<T>,
    pub g: DVector<T>,
    pub resid_offset: T,
    pub target: T,
}

#[derive(Clone, Debug)]
pub struct DpResult<T: Real> {
    pub mu: T,
    /// Newton reached `|ψ| ≤ 1e-10·target` and μ needed no clamping.
    pub root_found: bool,
    pub clamped: bool,
    pub newton_iters: usize,
    pub psi_at_mu: T,
    /// Newton iterates `β₀ = 0, β₁, …`.
    pub betas: Vec<T>,
}

/// SVD of the projected factor together with the rotated data.
#[derive(Clone, Debug)]
pub struct ProjectedSpectrum<T: Real> {
    pub s: DVector<T>,
    w: DMatrix<T>,
    ghat: DVector<T>,
    /// `‖g‖² − ‖ĝ‖²`, nonzero only when `R` has fewer columns than rows.
    g_outside: T,
    ncols: usize,
}

impl<T: Real> ProjectedSpectrum<T> {
    pub fn new(r: &DMatrix<T>, g: &DVector<T>) -> Self {
        let dec = linalg::svd(r);
        let ghat = dec.u.tr_mul(g);
        let g_outside = (g.norm_squared() - ghat.norm_squared()).max(T::zero());
        Self { s: dec.s, w: dec.v, ghat, g_outside, ncols: r.ncols() }
    }

    fn zero_cut(&self) -> T {
        let smax = if self.s.is_empty() { T::zero() } else { self.s[0] };
        smax * T::lit(1e-12)
    }

    /// `ψ(β)` and `ψ′(β)`.
    pub fn psi(&self, beta: T, offset: T, target: T) -> (T, T) {
        let two = T::lit(2.0);
        let mut val = self.g_outside + offset - target;
        let mut der = T::zero();
        for (s, g) in self.s.iter().zip(self.ghat.iter()) {
            let s2 = *s * *s;
            let d = T::one() + beta * s2;
            val += *g * *g / (d * d);
            der -= two * *g * *g * s2 / (d * d * d);
        }
        (val, der)
    }

    /// `lim_{β→∞} ψ(β)`.
    pub fn psi_infinity(&self, offset: T, target: T) -> T {
        let cut = self.zero_cut();
        let mut val = self.g_outside + offset - target;
        for (s, g) in self.s.iter().zip(self.ghat.iter()) {
            if *s <= cut {
                val += *g * *g;
            }
        }
        val
    }

    /// Minimizer of `‖Ru − g‖² + μ‖u‖²`.
    pub fn solve(&self, mu: T) -> DVector<T> {
        let coef = DVector::from_iterator(
            self.s.len(),
            self.s.iter().zip(self.ghat.iter()).map(|(s, g)| *s * *g / (*s * *s + mu)),
        );
        if self.ncols == 0 {
            return DVector::zeros(0);
        }
        &self.w * coef
    }

    /// Discrepancy-principle μ for the given offset and target.
    pub fn select(&self, offset: T, target: T, cfg: &DpConfig) -> DpResult<T> {
        let mu_min = T::lit(cfg.mu_min);
        let mu_max = T::lit(cfg.mu_max);
        let (psi0, _) = self.psi(T::zero(), offset, target);
        let fallback = |mu: T| DpResult {
            mu,
            root_found: false,
            clamped: false,
            newton_iters: 0,
            psi_at_mu: self.psi(T::one() / mu, offset, target).0,
            betas: vec![T::zero()],
        };
        if psi0 <= T::zero() {
            return fallback(mu_min);
        }
        if self.psi_infinity(offset, target) >= T::zero() {
            return fallback(T::lit(cfg.unreachable_mu()));
        }
        let tol = T::lit(1e-10) * target;
        let mut beta = T::zero();
        let mut betas = vec![beta];
        let mut iters = 0;
        let mut converged = false;
        let mut val = psi0;
        while iters < 100 {
            let (v, d) = self.psi(beta, offset, target);
            val = v;
            if v.abs() <= tol {
                converged = true;
                break;
            }
            if d >= T::zero() {
                break;
            }
            beta -= v / d;
            iters += 1;
            betas.push(beta);
        }
        if !converged {
            let (v, _) = self.psi(beta, offset, target);
            val = v;
            converged = v.abs() <= tol;
        }
        let raw = T::one() / beta;
        let clamped = raw < mu_min || raw > mu_max;
        let mu = raw.max(mu_min).min(mu_max);
        let psi_at_mu = if clamped { self.psi(T::one() / mu, offset, target).0 } else { val };
        DpResult { mu, root_found: converged && !clamped, clamped, newton_iters: iters, psi_at_mu, betas }
    }
}

/// `u = argmin ‖Ru − g‖² + μ‖u‖²`.
pub fn projected_ridge_solve<T: Real>(r: &DMatrix<T>, g: &DVector<T>, mu: T) -> DVector<T> {
    ProjectedSpectrum::new(r, g).solve(mu)
}

/// `ψ(β)` and `ψ′(β)` for a projected problem.
pub fn dp_psi<T: Real>(input: &DpInput<T>, beta: T) -> (T, T) {
    ProjectedSpectrum::new(&input.r, &input.g).psi(beta, input.resid_offset, input.target)
}

pub fn dp_select_mu<T: Real>(input: &DpInput<T>, cfg: &DpConfig) -> DpResult<T> {
    ProjectedSpectrum::new(&input.r, &input.g).select(input.resid_offset, input.target, cfg)
}

/// Discrepancy principle for the general-form problem
/// `min ‖G z − g‖² + μ‖L z‖²` with a square triangular `L`.
///
/// A well-conditioned `L` is absorbed (`u = L z`), reducing to standard form.
/// A numerically singular `L` falls back to bisection in `log μ` with direct
/// stacked least-squares solves.
pub fn general_form_dp<T: Real>(
    g_mat: &DMatrix<T>,
    l: &DMatrix<T>,
    g: &DVector<T>,
    offset: T,
    target: T,
    cfg: &DpConfig,
) -> (DpResult<T>, DVector<T>) {
    let d = g_mat.ncols();
    let square = l.nrows() == d && l.ncols() == d;
    let (dmin, dmax) = (0..l.nrows().min(d)).fold((T::max_value().unwrap(), T::zero()), |(lo, hi), i| {
        let v = l[(i, i)].abs();
        (lo.min(v), hi.max(v))
    });
    if d == 0 {
        let spec = ProjectedSpectrum::new(g_mat, g);
        let res = spec.select(offset, target, cfg);
        return (res, DVector::zeros(0));
    }
    if square && dmin > T::lit(1e-12) * dmax {
        let ghat = l
            .tr_solve_upper_triangular(&g_mat.transpose())
            .expect("triangular factor is nonsingular")
            .transpose();
        let spec = ProjectedSpectrum::new(&ghat, g);
        let res = spec.select(offset, target, cfg);
        let u = spec.solve(res.mu);
        let z = l.solve_upper_triangular(&u).expect("triangular factor is nonsingular");
        return (res, z);
    }
    bisection_general_form(g_mat, l, g, offset, target, cfg)
}

fn stacked_solve<T: Real>(g_mat: &DMatrix<T>, l: &DMatrix<T>, g: &DVector<T>, mu: T) -> DVector<T> {
    let (m, d) = g_mat.shape();
    let p = l.nrows();
    let mut h = DMatrix::zeros(m + p, d);
    h.rows_mut(0, m).copy_from(g_mat);
    h.rows_mut(m, p).copy_from(&(l * mu.sqrt()));
    let mut rhs = DVector::zeros(m + p);
    rhs.rows_mut(0, m).copy_from(g);
    let dec = linalg::svd(&h);
    let smax = if dec.s.is_empty() { T::zero() } else { dec.s[0] };
    let cut = smax * T::lit(1e-13);
    let c = dec.u.tr_mul(&rhs);
    let coef = DVector::from_iterator(
        dec.s.len(),
        dec.s.iter().zip(c.iter()).map(|(s, c)| if *s > cut { *c / *s } else { T::zero() }),
    );
    &dec.v * coef
}

fn bisection_general_form<T: Real>(
    g_mat: &DMatrix<T>,
    l: &DMatrix<T>,
    g: &DVector<T>,
    offset: T,
    target: T,
    cfg: &DpConfig,
) -> (DpResult<T>, DVector<T>) {
    let resid = |mu: T| {
        let z = stacked_solve(g_mat, l, g, mu);
        ((g_mat * &z - g).norm_squared() + offset - target, z)
    };
    let (lo, hi) = (cfg.mu_min.ln(), cfg.mu_max.ln());
    let (at_max, z_max) = resid(T::lit(cfg.mu_max));
    if at_max <= T::zero() {
        let res = DpResult {
            mu: T::lit(cfg.mu_min),
            root_found: false,
            clamped: false,
            newton_iters: 0,
            psi_at_mu: resid(T::lit(cfg.mu_min)).0,
            betas: vec![],
        };
        let z = stacked_solve(g_mat, l, g, res.mu);
        return (res, z);
    }
    let (at_min, _) = resid(T::lit(cfg.mu_min));
    if at_min >= T::zero() {
        let mu = T::lit(cfg.unreachable_mu());
        let (psi_at_mu, z) = if cfg.unreachable == Unreachable::MuMax { (at_max, z_max) } else { (at_min, stacked_solve(g_mat, l, g, mu)) };
        let res = DpResult { mu, root_found: false, clamped: false, newton_iters: 0, psi_at_mu, betas: vec![] };
        return (res, z);
    }
    let (mut a, mut b) = (lo, hi);
    let mut iters = 0;
    let mut best = resid(T::lit((a + b) / 2.0));
    for _ in 0..200 {
        iters += 1;
        let mid = 0.5 * (a + b);
        best = resid(T::lit(mid.exp()));
        if best.0.abs() <= T::lit(1e-10) * target || (b - a) < 1e-14 {
            break;
        }
        if best.0 > T::zero() {
            b = mid;
        } else {
            a = mid;
        }
    }
    let mu = T::lit((0.5 * (a + b)).exp());
    let res = DpResult { mu, root_found: true, clamped: false, newton_iters: iters, psi_at_mu: best.0, betas: vec![] };
    (res, best.1)
}
