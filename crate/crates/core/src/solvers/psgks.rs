use nalgebra::{DMatrix, DVector};

use super::sgks::restart_coefficients;
use super::{
    compression_coefficients, converged, pinv_setup, projected_condition_number, Ops, ProblemRef, Recorder,
    SolveResult, SolverConfig, SolverError, Step, Termination, Wrap, STAGNATION_TOL,
};
use crate::linalg::{self, LinalgError, LinearOperator, OrthonormalBasis, QrFactors};
use crate::priorcond::{x_kernel, ObliquePinv, WeightedPinv};
use crate::regparam::ProjectedSpectrum;
use crate::Real;

/// Initial PS-GKS space `K_h(ĀᵀĀ, Āᵀb̄)`, augmented by `z₀ = Ψ₀x₀` when a
/// nonzero starting guess is supplied.
pub fn initial_subspace_psgks<T: Real>(
    abar: &ObliquePinv<'_, T>,
    b_bar: &DVector<T>,
    h: usize,
    reorthogonalize: bool,
    z0: Option<&DVector<T>>,
) -> Result<OrthonormalBasis<T>, SolverError> {
    let z0 = z0.filter(|z| z.norm() > T::zero());
    let seed = abar.abar_adjoint(b_bar)?;
    let mut basis = if seed.norm() < T::lit(1e-14) && z0.is_some() {
        OrthonormalBasis::empty(abar.abar_cols())
    } else {
        linalg::krylov_basis::<T, SolverError, _>(
            |v| Ok(abar.abar_adjoint(&abar.abar(v)?)?),
            &seed,
            h,
            reorthogonalize,
        )?
    };
    if let Some(z) = z0 {
        basis.try_extend(z, T::lit(1e-12));
    }
    if basis.dim() == 0 {
        return Err(LinalgError::ZeroSeed.into());
    }
    Ok(basis)
}

/// PS-GKS: the generalized Krylov space lives in the `K`-dimensional space of
/// `u = Ψ_ℓ x`, where the penalty is the identity.
///
/// The priorconditioned operator `Ā_ℓ = A (Ψ_ℓ)_A†` changes with the weights,
/// so `Ā_ℓ V` and its QR factorization are rebuilt at every iteration.
pub fn psgks_solve<T: Real>(
    p: &ProblemRef<'_, T>,
    x0: Option<&DVector<T>>,
    cfg: &SolverConfig,
) -> Result<SolveResult<T>, SolverError> {
    let ops = Ops::new(p);
    let a: &dyn LinearOperator<T> = &ops.a;
    let psi = &ops.psi;
    let split = x_kernel(a, p.psi.kernel_basis(), p.b)?;
    let (strategy, pre) = pinv_setup(p.psi, cfg);
    let make = |w: DVector<T>| -> Result<ObliquePinv<'_, T>, SolverError> {
        let wp = WeightedPinv::new(p.psi, w, strategy, pre.as_ref())?;
        Ok(ObliquePinv::new(a, wp, &split.cache, &ops.pinv))
    };
    let target = T::lit(cfg.dp.target(a.nrows()));
    let wrap = cfg.method.wrap();
    let b_bar = &split.b_bar;
    let bbar2 = b_bar.norm_squared();

    let x0 = x0.filter(|x| x.norm() > T::zero());
    let mut x = x0.cloned().unwrap_or_else(|| DVector::zeros(a.ncols()));
    let mut psi_x = x0.map(|x| psi.apply(x)).unwrap_or_else(|| DVector::zeros(psi.nrows()));
    let w0 = cfg.weights.compute(&psi_x, T::one())?;
    let z0 = x0.map(|_| psi_x.component_mul(&w0));
    let mut basis = {
        let abar0 = make(w0)?;
        initial_subspace_psgks(&abar0, b_bar, cfg.h, cfg.reorthogonalize, z0.as_ref())?.columns
    };

    let mut mu_prev = T::one();
    let mut rec = Recorder::new(p);
    let mut termination = Termination::MaxIter;
    let mut breakdown = None;

    for iter in 1..=cfg.max_iter {
        let w = cfg.weights.compute(&psi_x, T::one() / mu_prev)?;
        let abar = make(w)?;
        let d = basis.ncols();
        let mut abar_v = DMatrix::zeros(a.nrows(), d);
        for j in 0..d {
            abar_v.set_column(j, &abar.abar(&basis.column(j).into_owned())?);
        }
        let qr = QrFactors::from_matrix(&abar_v);
        let g = qr.q.tr_mul(b_bar);
        let offset = (bbar2 - g.norm_squared()).max(T::zero());
        let spec = ProjectedSpectrum::new(&qr.r, &g);
        let dp = spec.select(offset, target, &cfg.dp);
        let mu = dp.mu;
        let u = spec.solve(mu);
        let t = &basis * &u;
        let x_new = abar.apply(&t)? + &split.x_ker;
        let psi_x_new = psi.apply(&x_new);
        let kappa = projected_condition_number(&qr.r, None, mu);
        rec.push(
            Step { iter, mu, basis_dim: d, x: &x_new, psi_x: &psi_x_new, kappa, root_found: dp.root_found },
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

        let mut r = abar.abar_adjoint(&(&abar_v * &u - b_bar))?;
        r.axpy(mu, &t, T::one());

        if wrap != Wrap::None && d >= cfg.d_max {
            let c = match wrap {
                Wrap::Restart => restart_coefficients(&u),
                _ => {
                    let mut h = DMatrix::zeros(qr.r.nrows() + d, d);
                    h.rows_mut(0, qr.r.nrows()).copy_from(&qr.r);
                    h.rows_mut(qr.r.nrows(), d).fill_with_identity();
                    h.rows_mut(qr.r.nrows(), d).scale_mut(mu.sqrt());
                    Some(compression_coefficients(&h, &u, cfg.d_min))
                }
            };
            basis = match c {
                Some(c) => &basis * c,
                None => {
                    let rn = r.norm();
                    if rn == T::zero() {
                        termination = Termination::Breakdown;
                        breakdown = Some("zero residual at restart".into());
                        break;
                    }
                    DMatrix::from_column_slice(r.len(), 1, (r / rn).as_slice())
                }
            };
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
        basis = basis.insert_column(d, T::zero());
        basis.set_column(d, &(res / after));
    }

    Ok(SolveResult { x, history: rec.history, termination, breakdown })
}
