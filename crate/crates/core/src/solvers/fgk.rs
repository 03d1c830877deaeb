use nalgebra::{DMatrix, DVector};

use super::{
    converged, pinv_setup, projected_condition_number, Ops, ProblemRef, Recorder, SolveResult, SolverConfig,
    SolverError, Step, Termination, STAGNATION_TOL,
};
use crate::linalg::{self, LinalgError, LinearOperator};
use crate::priorcond::{x_kernel, ObliquePinv, WeightedPinv};
use crate::regparam::general_form_dp;
use crate::Real;

fn append<T: Real>(m: DMatrix<T>, col: &DVector<T>) -> DMatrix<T> {
    let d = m.ncols();
    let mut m = m.insert_column(d, T::zero());
    m.set_column(d, col);
    m
}

/// Flexible Golub–Kahan with a preconditioner that changes every step.
///
/// Builds `A Z_ℓ = U_{ℓ+1} M_ℓ` (`M_ℓ` upper Hessenberg) and `Aᵀ U_ℓ = V_ℓ S_ℓ`
/// (`S_ℓ` upper triangular) with `z_ℓ = (Ψ_ℓ)_A† ((Ψ_ℓ)_A†)ᵀ v_ℓ`. The projected
/// problem `min ‖M y − ‖b̄‖e₁‖² + μ‖R_Ψ y‖²` uses the triangular factor of
/// `Ψ_ℓ Z_ℓ`, and `x_ℓ = x_ker + Z_ℓ y`. The columns of `Z` are not
/// orthogonal, so the run ends once `U` or `V` stops growing.
pub fn fgk_solve<T: Real>(p: &ProblemRef<'_, T>, cfg: &SolverConfig) -> Result<SolveResult<T>, SolverError> {
    let ops = Ops::new(p);
    let a: &dyn LinearOperator<T> = &ops.a;
    let psi = &ops.psi;
    let split = x_kernel(a, p.psi.kernel_basis(), p.b)?;
    let (strategy, pre) = pinv_setup(p.psi, cfg);
    let target = T::lit(cfg.dp.target(a.nrows()));
    let b_bar = &split.b_bar;
    let beta1 = b_bar.norm();
    if beta1 < T::lit(1e-14) {
        return Err(LinalgError::ZeroSeed.into());
    }
    let tol = T::lit(STAGNATION_TOL);

    let (m, n, k) = (a.nrows(), a.ncols(), psi.nrows());
    let mut u = DMatrix::from_column_slice(m, 1, (b_bar / beta1).as_slice());
    let mut v = DMatrix::<T>::zeros(n, 0);
    let mut z = DMatrix::<T>::zeros(n, 0);
    let mut psi_z = DMatrix::<T>::zeros(k, 0);
    let mut hess = DMatrix::<T>::zeros(1, 0);

    let mut x = DVector::zeros(n);
    let mut psi_x = DVector::zeros(k);
    let mut mu_prev = T::one();
    let mut rec = Recorder::new(p);
    let mut termination = Termination::MaxIter;
    let mut breakdown = None;

    for iter in 1..=cfg.max_iter {
        let w = cfg.weights.compute(&psi_x, T::one() / mu_prev)?;
        let wp = WeightedPinv::new(p.psi, w.clone(), strategy, pre.as_ref())?;
        let pinv = ObliquePinv::new(a, wp, &split.cache, &ops.pinv);

        let raw = a.apply_adjoint(&u.column(iter - 1).into_owned());
        let pre_norm = raw.norm();
        let (vj, _) = linalg::orthogonalize(&v, &raw, cfg.reorthogonalize);
        let s = vj.norm();
        if !(s > tol * pre_norm) {
            termination = Termination::Breakdown;
            breakdown = Some(format!("flexible Golub–Kahan breakdown in Aᵀu at step {iter}"));
            break;
        }
        let vj = vj / s;
        v = append(v, &vj);

        let zj = pinv.apply(&pinv.apply_adjoint(&vj)?)?;
        let az = a.apply(&zj);
        let pre_norm = az.norm();
        let (uj, coeffs) = linalg::orthogonalize(&u, &az, cfg.reorthogonalize);
        let h_next = uj.norm();
        if !(h_next > tol * pre_norm) {
            termination = Termination::Breakdown;
            breakdown = Some(format!("flexible Golub–Kahan breakdown in A z at step {iter}"));
            break;
        }
        u = append(u, &(uj / h_next));
        let mut col = coeffs.insert_row(iter, T::zero());
        col[iter] = h_next;
        hess = hess.insert_row(iter, T::zero());
        hess = append(hess, &col);
        z = append(z, &zj);
        psi_z = append(psi_z, &psi.apply(&zj));

        let mut wpsi_z = psi_z.clone();
        for mut c in wpsi_z.column_iter_mut() {
            c.component_mul_assign(&w);
        }
        let r_psi = wpsi_z.qr().r();
        let mut rhs = DVector::zeros(iter + 1);
        rhs[0] = beta1;
        let (dp, y) = general_form_dp(&hess, &r_psi, &rhs, T::zero(), target, &cfg.dp);
        let mu = dp.mu;
        let x_new = &z * &y + &split.x_ker;
        let psi_x_new = &psi_z * &y;
        let kappa = projected_condition_number(&hess, Some(&r_psi), mu);
        rec.push(
            Step { iter, mu, basis_dim: iter, x: &x_new, psi_x: &psi_x_new, kappa, root_found: dp.root_found },
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

    Ok(SolveResult { x, history: rec.history, termination, breakdown })
}
