//! Reweighting rules for the IRLS penalty `‖W Ψ x‖²`: the MM family and the
//! IAS (sparse Bayesian) weights.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("θ-update minimizer is 0 (r = {r}, β = {beta}, z = 0)")]
    DegenerateUpdate { r: f64, beta: f64 },
    #[error("invalid weight parameters: {0}")]
    InvalidParameters(String),
}

/// Weighting rule applied to `z = Ψx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightScheme {
    /// `w = 1`, which turns S-GKS into plain GKS.
    Equal,
    /// `w = (z² + ε²)^{(p−2)/4}`.
    Mm { p: f64, epsilon: f64 },
    /// `w = |z|^{(p−2)/2}` for `|z| ≥ τ₁`, `τ₂^{(p−2)/2}` otherwise.
    Mm5 { p: f64, tau1: f64, tau2: f64 },
    /// IAS weights `w = (θ/ϑ)^{−1/2}` for the generalized gamma hyper-prior.
    Ias { r: f64, beta: f64 },
}

impl WeightScheme {
    /// `MM1`…`MM4` (p = 1, ε = 1, 1e-2, 1e-3, 1e-4), `MM5`, `IAS` (r = −1, β = 1), `Equal`.
    pub fn preset(name: &str) -> Option<Self> {
        let mm = |epsilon| Some(WeightScheme::Mm { p: 1.0, epsilon });
        match name.to_ascii_uppercase().as_str() {
            "MM1" => mm(1.0),
            "MM2" => mm(1e-2),
            "MM3" => mm(1e-3),
            "MM4" => mm(1e-4),
            "MM5" => Some(WeightScheme::Mm5 { p: 1.0, tau1: 1e-10, tau2: 1e-16 }),
            "IAS" => Some(WeightScheme::Ias { r: -1.0, beta: 1.0 }),
            "EQUAL" => Some(WeightScheme::Equal),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), WeightError> {
        let bad = |m: &str| Err(WeightError::InvalidParameters(m.into()));
        match *self {
            WeightScheme::Equal => Ok(()),
            WeightScheme::Mm { p, epsilon } => {
                if !(p > 0.0 && p < 2.0) {
                    return bad("MM needs p in (0, 2)");
                }
                if !(epsilon > 0.0) {
                    return bad("MM needs ε > 0");
                }
                Ok(())
            }
            WeightScheme::Mm5 { p, tau1, tau2 } => {
                if !(p > 0.0 && p < 2.0) || !(tau2 > 0.0) || tau2 > tau1 {
                    return bad("MM5 needs p in (0, 2) and 0 < τ₂ ≤ τ₁");
                }
                Ok(())
            }
            WeightScheme::Ias { r, beta } => {
                if r == 0.0 || !r.is_finite() || !(beta > 0.0) {
                    return bad("IAS needs r ≠ 0 and β > 0");
                }
                Ok(())
            }
        }
    }

    pub fn is_ias(&self) -> bool {
        matches!(self, WeightScheme::Ias { .. })
    }

    /// Weights for `z = Ψx`. `vartheta` is the IAS rate `ϑ = 1/μ`; other
    /// schemes ignore it.
    pub fn compute<T: Real>(&self, z: &DVector<T>, vartheta: T) -> Result<DVector<T>, WeightError> {
        match *self {
            WeightScheme::Equal => Ok(DVector::from_element(z.len(), T::one())),
            WeightScheme::Mm { p, epsilon } => Ok(mm_weights(z, p, epsilon)),
            WeightScheme::Mm5 { p, tau1, tau2 } => Ok(mm5_weights(z, p, tau1, tau2)),
            WeightScheme::Ias { r, beta } => ias_weights(z, r, beta, vartheta).map(|(w, _)| w),
        }
    }
}

pub fn mm_weights<T: Real>(z: &DVector<T>, p: f64, epsilon: f64) -> DVector<T> {
    let e2 = T::lit(epsilon * epsilon);
    let expo = T::lit((p - 2.0) / 4.0);
    z.map(|v| (v * v + e2).powf(expo))
}

pub fn mm5_weights<T: Real>(z: &DVector<T>, p: f64, tau1: f64, tau2: f64) -> DVector<T> {
    let expo = T::lit((p - 2.0) / 2.0);
    let floor = T::lit(tau2).powf(expo);
    let t1 = T::lit(tau1);
    z.map(|v| if v.abs() >= t1 { v.abs().powf(expo) } else { floor })
}

/// IAS variances `θ` and rate `ϑ` behind a set of IAS weights.
#[derive(Clone, Debug)]
pub struct IasState<T: Real> {
    pub theta: DVector<T>,
    pub vartheta: T,
}

/// `θ = argmin_{θ>0} z²/(2θ) + (θ/ϑ)^r − (rβ − 3/2) ln θ`.
pub fn ias_theta_update<T: Real>(z: T, r: f64, beta: f64, vartheta: T) -> Result<T, WeightError> {
    let z2 = z * z;
    let half = T::lit(0.5);
    if r == 1.0 {
        let eta = T::lit(beta - 1.5);
        let theta = vartheta * half * (eta + (eta * eta + T::lit(2.0) * z2 / vartheta).sqrt());
        if theta <= T::zero() {
            return Err(WeightError::DegenerateUpdate { r, beta });
        }
        return Ok(theta);
    }
    if r == -1.0 {
        let denom = T::lit(beta + 1.5);
        if denom <= T::zero() {
            return Err(WeightError::InvalidParameters("r = −1 needs β + 3/2 > 0".into()));
        }
        return Ok((z2 * half + vartheta) / denom);
    }
    theta_by_root_finding(z2, r, beta, vartheta)
}

/// Stationarity of the θ-objective multiplied by θ, `g(θ) = −z²/(2θ) + r(θ/ϑ)^r − η`,
/// which is strictly increasing in θ.
fn stationarity<T: Real>(theta: T, z2: T, r: T, eta: T, vartheta: T) -> (T, T) {
    let ratio = (theta / vartheta).powf(r);
    let g = -z2 / (T::lit(2.0) * theta) + r * ratio - eta;
    let dg = z2 / (T::lit(2.0) * theta * theta) + r * r * ratio / theta;
    (g, dg)
}

fn theta_by_root_finding<T: Real>(z2: T, r: f64, beta: f64, vartheta: T) -> Result<T, WeightError> {
    let eta = T::lit(r * beta - 1.5);
    let rt = T::lit(r);
    let floor = vartheta * T::lit(1e-14);
    let g = |t: T| stationarity(t, z2, rt, eta, vartheta);
    // Degenerate: g ≥ 0 everywhere, the minimizer sits at θ → 0.
    if g(floor).0 >= T::zero() {
        return Err(WeightError::DegenerateUpdate { r, beta });
    }
    let mut lo = floor;
    let mut hi = vartheta.max(z2) * T::lit(1e3);
    let mut grow = 0;
    while g(hi).0 < T::zero() {
        lo = hi;
        hi *= T::lit(10.0);
        grow += 1;
        if grow > 400 {
            return Err(WeightError::InvalidParameters("θ-update has no finite stationary point".into()));
        }
    }
    let mut theta = (lo * hi).sqrt();
    for _ in 0..200 {
        let (gv, dg) = g(theta);
        if gv == T::zero() {
            break;
        }
        if gv < T::zero() {
            lo = theta;
        } else {
            hi = theta;
        }
        let newton = theta - gv / dg;
        theta = if newton > lo && newton < hi { newton } else { (lo * hi).sqrt() };
        if (hi - lo) <= T::lit(1e-15) * hi {
            break;
        }
        let (g2, _) = g(theta);
        if g2.abs() <= T::lit(1e-14) * (z2 / (T::lit(2.0) * theta) + (rt * (theta / vartheta).powf(rt)).abs() + eta.abs()) {
            break;
        }
    }
    Ok(theta)
}

/// IAS weights `w_k = (θ_k/ϑ)^{−1/2}` with `θ_k` floored at `1e-14·ϑ`.
pub fn ias_weights<T: Real>(
    z: &DVector<T>,
    r: f64,
    beta: f64,
    vartheta: T,
) -> Result<(DVector<T>, IasState<T>), WeightError> {
    let floor = vartheta * T::lit(1e-14);
    let mut theta = DVector::zeros(z.len());
    for (k, &zk) in z.iter().enumerate() {
        theta[k] = match ias_theta_update(zk, r, beta, vartheta) {
            Ok(t) => t.max(floor),
            Err(WeightError::DegenerateUpdate { .. }) => floor,
            Err(e) => return Err(e),
        };
    }
    let w = theta.map(|t| (t / vartheta).powf(T::lit(-0.5)));
    Ok((w, IasState { theta, vartheta }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective(theta: f64, z: f64, r: f64, beta: f64, vt: f64) -> f64 {
        z * z / (2.0 * theta) + (theta / vt).powf(r) - (r * beta - 1.5) * theta.ln()
    }

    fn grid_minimizer(z: f64, r: f64, beta: f64, vt: f64) -> f64 {
        // coarse log grid then golden-section refinement
        let mut best = (f64::INFINITY, 0.0);
        let mut t = 1e-8;
        while t < 1e8 {
            let f = objective(t, z, r, beta, vt);
            if f < best.0 {
                best = (f, t);
            }
            t *= 1.001;
        }
        let (mut a, mut b) = (best.1 / 1.002, best.1 * 1.002);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if objective(c, z, r, beta, vt) < objective(d, z, r, beta, vt) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn mm_examples() {
        let z = DVector::<f64>::from_vec(vec![0.0, 3.0, -7.0]);
        assert!(mm_weights(&z, 2.0, 0.1).iter().all(|&w| w == 1.0));
        let w = mm_weights(&DVector::<f64>::from_vec(vec![0.0]), 1.0, 1e-3);
        assert!((w[0] - 10f64.powf(1.5)).abs() < 1e-9);
        let w = mm_weights(&DVector::<f64>::from_vec(vec![1.0]), 1.0, 1e-12);
        assert!((w[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mm5_examples() {
        let w = mm5_weights(&DVector::<f64>::from_vec(vec![1.0, 0.0, 1e-10]), 1.0, 1e-10, 1e-16);
        assert_eq!(w[0], 1.0);
        assert!((w[1] - 1e8).abs() < 1e-4);
        assert!((w[2] - 1e5).abs() < 1e-6);
    }

    #[test]
    fn theta_closed_forms() {
        let eta = 0.7;
        let t: f64 = ias_theta_update(0.0, 1.0, 1.5 + eta, 2.0).unwrap();
        assert!((t - 2.0 * eta).abs() < 1e-14);
        assert!((t - grid_minimizer(0.0, 1.0, 1.5 + eta, 2.0)).abs() < 1e-6);

        let t: f64 = ias_theta_update(2f64.sqrt(), 1.0, 1.5, 1.0).unwrap();
        assert!((t - 1.0).abs() < 1e-14);
        assert!((t - grid_minimizer(2f64.sqrt(), 1.0, 1.5, 1.0)).abs() < 1e-6);

        let t: f64 = ias_theta_update(0.0, -1.0, 1.0, 5.0).unwrap();
        assert!((t - 2.0).abs() < 1e-14);
        assert!((t - grid_minimizer(0.0, -1.0, 1.0, 5.0)).abs() < 1e-6);

        assert!(matches!(ias_theta_update(0.0, 1.0, 1.5, 1.0), Err(WeightError::DegenerateUpdate { .. })));
    }

    #[test]
    fn theta_general_r_matches_grid_search() {
        let t: f64 = ias_theta_update(1.0, 0.5, 3.01, 1.0).unwrap();
        assert!((t - grid_minimizer(1.0, 0.5, 3.01, 1.0)).abs() < 1e-6);
        for &(z, r, beta, vt) in &[(0.3, 2.0, 1.2, 0.5), (2.0, -0.5, 1.0, 3.0), (0.0, -2.0, 0.5, 1.0)] {
            let t: f64 = ias_theta_update(z, r, beta, vt).unwrap();
            let (g, _) = stationarity(t, z * z, r, r * beta - 1.5, vt);
            let scale = z * z / (2.0 * t) + (r * (t / vt).powf(r)).abs() + (r * beta - 1.5f64).abs();
            assert!(g.abs() <= 1e-12 * scale, "stationarity {g} at r={r}");
            let m = grid_minimizer(z, r, beta, vt);
            assert!((t - m).abs() <= 1e-6 * m.max(1.0));
        }
    }

    #[test]
    fn closed_form_stationarity_residual() {
        for &(z, beta, vt) in &[(0.0, 2.0, 1.0), (1.3, 1.7, 0.2), (5.0, 3.0, 10.0)] {
            let t: f64 = ias_theta_update(z, 1.0, beta, vt).unwrap();
            let d = -z * z / (2.0 * t * t) + 1.0 / vt - (beta - 1.5) / t;
            assert!(d.abs() < 1e-10 * (1.0 / vt + z * z / (t * t)));
            let t: f64 = ias_theta_update(z, -1.0, beta, vt).unwrap();
            let d = -z * z / (2.0 * t * t) - vt / (t * t) + (beta + 1.5) / t;
            assert!(d.abs() < 1e-10 * (vt / (t * t) + z * z / (t * t) + 1.0));
        }
    }

    #[test]
    fn ias_weight_examples() {
        let (w, st) = ias_weights(&DVector::<f64>::from_vec(vec![0.0]), -1.0, 1.0, 5.0).unwrap();
        assert!((st.theta[0] - 2.0).abs() < 1e-14);
        assert!((w[0] - 2.5f64.sqrt()).abs() < 1e-14);

        let (w1, _) = ias_weights(&DVector::<f64>::from_vec(vec![0.0]), -1.0, 1.0, 10.0).unwrap();
        assert!((w1[0] - w[0]).abs() < 1e-14);

        let z = DVector::<f64>::from_vec(vec![0.1, -0.1, 2.0, 0.0, 5.0]);
        let (w, _) = ias_weights(&z, -1.0, 1.0, 0.3).unwrap();
        assert_eq!(w[0], w[1]);
        assert!(w[3] >= w[0] && w[0] >= w[2] && w[2] >= w[4]);
    }

    #[test]
    fn degenerate_theta_is_floored() {
        let (w, st) = ias_weights(&DVector::<f64>::from_vec(vec![0.0, 1.0]), 1.0, 1.5, 2.0).unwrap();
        assert!((st.theta[0] - 2e-14).abs() < 1e-28);
        assert!(w[0].is_finite() && w[0] > w[1]);
    }

    #[test]
    fn presets() {
        assert_eq!(WeightScheme::preset("MM3"), Some(WeightScheme::Mm { p: 1.0, epsilon: 1e-3 }));
        assert_eq!(WeightScheme::preset("mm5"), Some(WeightScheme::Mm5 { p: 1.0, tau1: 1e-10, tau2: 1e-16 }));
        assert!(WeightScheme::preset("MM9").is_none());
        assert!(WeightScheme::Ias { r: 0.0, beta: 1.0 }.validate().is_err());
    }

    #[test]
    fn mm_majorant_touches_smoothed_objective() {
        // J(x) = Σ (z² + ε²)^{p/2}, majorant M(x, x_ℓ) = Σ (p/2) w_ℓ² z² + c(x_ℓ)
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (p, eps) = (1.0, 1e-2);
        let j = |z: &DVector<f64>| z.iter().map(|v| (v * v + eps * eps).powf(p / 2.0)).sum::<f64>();
        for _ in 0..20 {
            let zl = DVector::from_fn(20, |_, _| rng.gen_range(-2.0..2.0));
            let w = mm_weights(&zl, p, eps);
            let quad = |z: &DVector<f64>| (p / 2.0) * z.iter().zip(w.iter()).map(|(a, b)| b * b * a * a).sum::<f64>();
            let c = j(&zl) - quad(&zl);
            for _ in 0..20 {
                let z = DVector::from_fn(20, |_, _| rng.gen_range(-2.0..2.0));
                assert!(quad(&z) + c >= j(&z) - 1e-10);
            }
        }
    }
}
