pub mod dob;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod hlip;
pub mod qp;
pub mod reference;
pub mod safety;
pub mod scalar;
pub mod sensing;
pub mod world;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases for the generic math types.
pub mod f64 {
    pub type HlipParams = crate::hlip::HlipParams<f64>;
    pub type HlipState = crate::hlip::HlipState<f64>;
    pub type S2SMatrices = crate::hlip::S2SMatrices<f64>;
    pub type StepGain = crate::hlip::StepGain<f64>;
    pub type DisturbanceObserver = crate::dob::DisturbanceObserver<f64>;
    pub type QpProblem = crate::qp::QpProblem<f64>;
    pub type QpSolution = crate::qp::QpSolution<f64>;
    pub type PlannerState = crate::safety::PlannerState<f64>;
    pub type BarrierSpec = crate::safety::BarrierSpec<f64>;
    pub type PlannerLimits = crate::safety::PlannerLimits<f64>;
    pub type SafetyHierarchy = crate::safety::SafetyHierarchy<f64>;
    pub type SafetyPlanner = crate::safety::SafetyPlanner<f64>;
    pub type EstimationSample = crate::estimation::EstimationSample<f64>;
    pub type MassEstimate = crate::estimation::MassEstimate<f64>;
}

/// Single-precision aliases for the generic math types.
pub mod f32 {
    pub type HlipParams = crate::hlip::HlipParams<f32>;
    pub type HlipState = crate::hlip::HlipState<f32>;
    pub type S2SMatrices = crate::hlip::S2SMatrices<f32>;
    pub type StepGain = crate::hlip::StepGain<f32>;
    pub type DisturbanceObserver = crate::dob::DisturbanceObserver<f32>;
    pub type QpProblem = crate::qp::QpProblem<f32>;
    pub type QpSolution = crate::qp::QpSolution<f32>;
    pub type PlannerState = crate::safety::PlannerState<f32>;
    pub type BarrierSpec = crate::safety::BarrierSpec<f32>;
    pub type PlannerLimits = crate::safety::PlannerLimits<f32>;
    pub type SafetyHierarchy = crate::safety::SafetyHierarchy<f32>;
    pub type SafetyPlanner = crate::safety::SafetyPlanner<f32>;
    pub type EstimationSample = crate::estimation::EstimationSample<f32>;
    pub type MassEstimate = crate::estimation::MassEstimate<f32>;
}
