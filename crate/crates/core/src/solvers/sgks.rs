use nalgebra::{DMatrix, DVector};

use super::{
    apply_columns, compression_coefficients, converged, projected_condition_number, Ops, ProblemRef, Recorder,
    SolveResult, SolverConfig, SolverError, Step, Termination, Wrap, STAGNATION_TOL,
};
use crate::linalg::{self, LinearOperator, QrFactors};
use crate::regparam::general_form_dp;
use crate::Real;

/// S-GKS in the native space; with equal weights this is plain GKS.
///
/// The basis `V` lives in `ℝᴺ`. `AV` is kept with a column-updated QR, `ΨV`
/// is stored so `Ψx = ΨV z` costs nothing, and the triangular factor of
/// `diag(w) ΨV` is recomputed whenever the weights change.
pub fn sgks_solve<T: Real>(
    p: &ProblemRef<'_, T>,
    x0: Option<&DVector<T>>,
    cfg: &SolverConfig,
) -> Result<SolveResult<T>, SolverError> {
    let ops = Ops::new(p);
    let (a, psi) = (&ops.a, &ops.psi);
    let n = a.ncols();
    let target = T::lit(cfg.dp.target(a.nrows()));
    let wrap = cfg.method.wrap();
    let b = p.b;
    let b_norm2 = b.norm_squared();

    let atb = a.apply_adjoint(b);
    let v0 = linalg::krylov_basis::<T, SolverError, _>(
        |v| Ok(a.apply_adjoint(&a.apply(v))),
        &atb,
        cfg.h,
        cfg.reorthogonalize,
    )?;
    let mut basis = v0.columns;
    let mut av = apply_columns(a, &basis);
    let mut psiv = apply_columns(psi, &basis);
    let mut qa = QrFactors::from_matrix(&av);

    let mut x = x0.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut psi_x = match x0 {
        Some(x0) if x0.norm() > T::zero() => psi.apply(x0),
        _ => DVector::zeros(psi.nrows()),
    };
    let mut mu_prev = T::one();
    let mut rec = Recorder::new(p);
    let mut termination = Termination::MaxIter;
    let mut breakdown = None;

    for iter in 1..=cfg.max_iter {
        let w = cfg.weights.compute(&psi_x, T::one() / mu_prev)?;
        let mut wpsiv = psiv.clone();
        for mut col in wpsiv.column_iter_mut() {
            col.component_mul_assign(&w);
        }
        let r_psi = wpsiv.qr().r();
        let g = qa.q.tr_mul(b);
        let offset = (b_norm2 - g.norm_squared()).max(T::zero());
        let (dp, z) = general_form_dp(&qa.r, &r_psi, &g, offset, target, &cfg.dp);
        let mu = dp.mu;
        let x_new = &basis * &z;
        let psi_x_new = &psiv * &z;
        let kappa = projected_condition_number(&qa.r, Some(&r_psi), mu);
        rec.push(
            Step { iter, mu, basis_dim: basis.ncols(), x: &x_new, psi_x: &psi_x_new, kappa, root_found: dp.root_found },
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
        if iter == cfg.max_iter {
            break;
        }

        let mut r = a.apply_adjoint(&(&av * &z - b));
        let w2psi = psi_x.component_mul(&w).component_mul(&w);
        r.axpy(mu, &psi.apply_adjoint(&w2psi), T::one());

        if wrap != Wrap::None && basis.ncols() >= cfg.d_max {
            let c = match wrap {
                Wrap::Restart => restart_coefficients(&z),
                _ => {
                    let mut h = DMatrix::zeros(qa.r.nrows() + r_psi.nrows(), z.len());
                    h.rows_mut(0, qa.r.nrows()).copy_from(&qa.r);
                    h.rows_mut(qa.r.nrows(), r_psi.nrows()).copy_from(&(&r_psi * mu.sqrt()));
                    Some(compression_coefficients(&h, &z, cfg.d_min))
                }
            };
            match c {
                Some(c) => {
                    basis = &basis * &c;
                    av = &av * &c;
                    psiv = &psiv * &c;
                    qa = QrFactors::from_matrix(&av);
                }
                None => {
                    // Zero iterate: restart from the residual direction.
                    let rn = r.norm();
                    if rn == T::zero() {
                        termination = Termination::Breakdown;
                        breakdown = Some("zero residual at restart".into());
                        break;
                    }
                    let v = r / rn;
                    basis = DMatrix::from_column_slice(n, 1, v.as_slice());
                    av = apply_columns(a, &basis);
                    psiv = apply_columns(psi, &basis);
                    qa = QrFactors::from_matrix(&av);
                }
            }
            continue;
        }

        let before = r.norm();
        let (res, _) = linalg::orthogonalize(&basis, &r, cfg.reorthogonalize);
        let after = res.norm();
        if !(after >= T::lit(STAGNATION_TOL) * before) || after == T::zero() {
            termination = Termination::Breakdown;
            breakdown = Some("basis stagnation: residual lies in the current subspace".into());
            break;
        }
        let v = res / after;
        let d = basis.ncols();
        basis = basis.insert_column(d, T::zero());
        basis.set_column(d, &v);
        let a_v = a.apply(&v);
        qa.push(&a_v);
        av = av.insert_column(d, T::zero());
        av.set_column(d, &a_v);
        let psi_v = psi.apply(&v);
        psiv = psiv.insert_column(d, T::zero());
        psiv.set_column(d, &psi_v);
    }

    Ok(SolveResult { x, history: rec.history, termination, breakdown })
}

/// `u / ‖u‖` as a one-column coefficient matrix, `None` for `u = 0`.
pub(super) fn restart_coefficients<T: Real>(u: &DVector<T>) -> Option<DMatrix<T>> {
    let n = u.norm();
    if n == T::zero() {
        return None;
    }
    Some(DMatrix::from_column_slice(u.len(), 1, (u / n).as_slice()))
}
