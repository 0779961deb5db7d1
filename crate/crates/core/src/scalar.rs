//! Scalar abstraction shared by the numeric modules.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the planner, gait and estimation math.
///
/// Tolerances scale with the precision of the type: `f64` runs the tight
/// thresholds the tests pin, `f32` gets looser ones so the same algorithms
/// still terminate.
pub trait Real: RealField + Copy + Default + FromPrimitive + ToPrimitive {
    /// Rank and feasibility tolerance for the active-set QP.
    fn qp_tol() -> Self;
    /// Convergence threshold for the Riccati fixed-point iteration.
    fn riccati_tol() -> Self;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn is_finite_val(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f64 {
    fn qp_tol() -> Self {
        1e-10
    }
    fn riccati_tol() -> Self {
        1e-12
    }
}

impl Real for f32 {
    fn qp_tol() -> Self {
        1e-5
    }
    fn riccati_tol() -> Self {
        1e-6
    }
}

/// Clamp without requiring `Ord`.
#[inline]
pub(crate) fn clamp<T: Real>(x: T, lo: T, hi: T) -> T {
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}
