use nalgebra::{DMatrix, DVector};

use super::{
    converged, pinv_setup, projected_condition_number, Ops, ProblemRef, Recorder, SolveResult, SolverConfig,
    SolverError, Step, Termination, STAGNATION_TOL,
};
use crate::linalg::{self, LinalgError, LinearOperator};
use crate::priorcond::{x_kernel, ObliquePinv, WeightedPinv};
use crate::regparam::ProjectedSpectrum;
use crate::Real;

/// Lower-bidiagonal factorization `Ā V = U B` with `U e₁ = b̄ / ‖b̄‖`.
pub(crate) struct Bidiag<T: Real> {
    pub v: DMatrix<T>,
    /// `(k+1) × k`.
    pub b: DMatrix<T>,
}

/// `steps` Golub–Kahan steps with full reorthogonalization, truncated at the
/// first lost direction.
pub(crate) fn golub_kahan<T: Real>(
    abar: &ObliquePinv<'_, T>,
    b_bar: &DVector<T>,
    steps: usize,
    reorth: bool,
) -> Result<Bidiag<T>, SolverError> {
    let beta1 = b_bar.norm();
    if beta1 < T::lit(1e-14) {
        return Err(LinalgError::ZeroSeed.into());
    }
    let (m, k) = (abar.abar_rows(), abar.abar_cols());
    let mut u = DMatrix::zeros(m, steps + 1);
    let mut v = DMatrix::zeros(k, steps);
    let mut b = DMatrix::<T>::zeros(steps + 1, steps);
    u.set_column(0, &(b_bar / beta1));
    let tol = T::lit(STAGNATION_TOL);
    let mut done = 0;
    for j in 0..steps {
        let mut p = abar.abar_adjoint(&u.column(j).into_owned())?;
        let pre = p.norm();
        if j > 0 {
            p.axpy(-b[(j, j - 1)], &v.column(j - 1).into_owned(), T::one());
        }
        if reorth && j > 0 {
            p = linalg::orthogonalize(&v.columns(0, j).into_owned(), &p, true).0;
        }
        let alpha = p.norm();
        if !(alpha > tol * pre) {
            break;
        }
        v.set_column(j, &(p / alpha));
        b[(j, j)] = alpha;
        done = j + 1;

        let mut q = abar.abar(&v.column(j).into_owned())?;
        let pre = q.norm();
        q.axpy(-alpha, &u.column(j).into_owned(), T::one());
        if reorth {
            q = linalg::orthogonalize(&u.columns(0, j + 1).into_owned(), &q, true).0;
        }
        let beta = q.norm();
        if !(beta > tol * pre) {
            break;
        }
        u.set_column(j + 1, &(q / beta));
        b[(j + 1, j)] = beta;
    }
    Ok(Bidiag {
        v: v.columns(0, done).into_owned(),
        b: b.view((0, 0), (done + 1, done)).into_owned(),
    })
}

/// PS-GKB: at outer iteration `ℓ` an `ℓ`-step bidiagonalization of the current
/// priorconditioned operator is computed from scratch and the projected
/// problem `min ‖B y − ‖b̄‖e₁‖² + μ‖y‖²` is solved with the discrepancy principle.
pub fn psgkb_solve<T: Real>(p: &ProblemRef<'_, T>, cfg: &SolverConfig) -> Result<SolveResult<T>, SolverError> {
    let ops = Ops::new(p);
    let a: &dyn LinearOperator<T> = &ops.a;
    let psi = &ops.psi;
    let split = x_kernel(a, p.psi.kernel_basis(), p.b)?;
    let (strategy, pre) = pinv_setup(p.psi, cfg);
    let target = T::lit(cfg.dp.target(a.nrows()));
    let b_bar = &split.b_bar;
    let beta1 = b_bar.norm();

    let mut x = DVector::zeros(a.ncols());
    let mut psi_x = DVector::zeros(psi.nrows());
    let mut mu_prev = T::one();
    let mut rec = Recorder::new(p);
    let mut termination = Termination::MaxIter;

    for iter in 1..=cfg.max_iter {
        let w = cfg.weights.compute(&psi_x, T::one() / mu_prev)?;
        let wp = WeightedPinv::new(p.psi, w, strategy, pre.as_ref())?;
        let abar = ObliquePinv::new(a, wp, &split.cache, &ops.pinv);
        let gk = golub_kahan(&abar, b_bar, iter, cfg.reorthogonalize)?;
        let mut rhs = DVector::zeros(gk.b.nrows());
        rhs[0] = beta1;
        let spec = ProjectedSpectrum::new(&gk.b, &rhs);
        let dp = spec.select(T::zero(), target, &cfg.dp);
        let mu = dp.mu;
        let y = spec.solve(mu);
        let x_new = abar.apply(&(&gk.v * &y))? + &split.x_ker;
        let psi_x_new = psi.apply(&x_new);
        let kappa = projected_condition_number(&gk.b, None, mu);
        rec.push(
            Step { iter, mu, basis_dim: gk.v.ncols(), x: &x_new, psi_x: &psi_x_new, kappa, root_found: dp.root_found },
            ops.counts(),
        );
        let stop = converged(&x_new, &x, cfg.stop_tol);
        x = x_new;
        psi_x = psi_x_new;
        mu_prev = mu;
        if stop {
            termination = Termination::StopTol;
            break;
        }
    }

    Ok(SolveResult { x, history: rec.history, termination, breakdown: None })
}
