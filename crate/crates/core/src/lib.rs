//! Priorconditioned generalized Krylov subspace solvers for sparsity-promoting
//! linear inverse problems `b = A x + e`.
//!
//! The crate covers the iteratively reweighted solvers (GKS, S-GKS, PS-GKS and
//! their restarted/recycled variants, PS-GKB, FGK), the weight rules they share
//! (MM and IAS), discrepancy-principle parameter selection, the test problems
//! used to benchmark them, and dense spectral checks of the eigenvalue bounds
//! behind priorconditioning.
//!
//! All numerical code is generic over [`Real`], implemented for `f32` and
//! `f64`. The `*64` aliases below fix the scalar to `f64`, which is what the
//! CLI and the acceptance suite use.

pub mod analysis;
pub mod linalg;
pub mod metrics;
pub mod priorcond;
pub mod problems;
pub mod regparam;
pub mod solvers;
pub mod transforms;
pub mod weights;

use std::fmt::{Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub use nalgebra::{DMatrix, DVector};

/// Floating-point scalar the library is generic over.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Display + LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal or parameter into `Self`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    /// Lossy conversion to `f64` for reporting.
    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Matrix64 = DMatrix<f64>;
pub type Vector64 = DVector<f64>;
pub type Transform64 = transforms::SparsifyingTransform<f64>;
pub type Problem64 = problems::ProblemInstance<f64>;
pub type SolveResult64 = solvers::SolveResult<f64>;
pub type BoundReport64 = analysis::BoundReport;
