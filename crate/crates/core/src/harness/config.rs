//! Scenario files: flat TOML with one section per subsystem.
//!
//! Every key has a default, so a scenario only lists what it changes.
//! Unknown keys are rejected.

use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::ForceBlend;
use crate::hlip::HlipParams;
use crate::sensing::{ProbeConfig, SensingParams};
use crate::world::{BoxBody, FootParams, ScriptedDisturbance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Cbf,
    CbfDob,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Cbf => "cbf",
            Mode::CbfDob => "cbf_dob",
        }
    }

    pub fn filtered(self) -> bool {
        self != Mode::Baseline
    }

    pub fn observer(self) -> bool {
        self == Mode::CbfDob
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "cbf" => Ok(Mode::Cbf),
            "cbf_dob" => Ok(Mode::CbfDob),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    pub dt: f64,
    pub duration: f64,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub goal_tolerance: f64,
    pub g: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            mode: Mode::CbfDob,
            seed: 0,
            dt: 0.01,
            duration: 30.0,
            start: [0.0, 0.0],
            goal: [3.2, 0.0],
            goal_tolerance: 0.1,
            g: 9.81,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HlipSection {
    pub z0: f64,
    pub t_ssp: f64,
    pub t_dsp: f64,
    /// Diagonal of the LQR state weight.
    pub q: [f64; 2],
    pub r: f64,
    pub u_max: f64,
    /// Gain from planner position error to velocity reference [1/s].
    pub kp: f64,
    pub v_ref_max: f64,
    pub fall_bound: f64,
    pub actuation_noise: f64,
}

impl Default for HlipSection {
    fn default() -> Self {
        Self {
            z0: 0.8,
            t_ssp: 0.35,
            t_dsp: 0.05,
            q: [1.0, 1.0],
            r: 1.0,
            u_max: 0.4,
            kp: 1.0,
            v_ref_max: 0.5,
            fall_bound: 0.5,
            actuation_noise: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DobSection {
    pub beta: f64,
}

impl Default for DobSection {
    fn default() -> Self {
        Self { beta: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub a_max: f64,
    pub v_max: f64,
    pub kappa: f64,
    /// Class-K slopes of the primary and secondary barriers.
    pub alpha: [f64; 2],
    pub relaxation_weight: f64,
    pub kp: f64,
    pub kd: f64,
    pub reference_duration: f64,
    pub zeta_samples: usize,
    /// Added to each box half-diagonal to form the barrier radius [m].
    pub robot_clearance: f64,
}

impl Default for PlannerSection {
    fn default() -> Self {
        Self {
            a_max: 1.0,
            v_max: 0.5,
            kappa: 2.0,
            alpha: [1.0, 1.0],
            relaxation_weight: 1.0,
            kp: 2.0,
            kd: 2.8,
            reference_duration: 12.0,
            zeta_samples: 41,
            robot_clearance: 0.22,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FootSection {
    pub lateral_offset: f64,
    pub radius: f64,
    pub push_limit: f64,
}

impl Default for FootSection {
    fn default() -> Self {
        let f = FootParams::default();
        Self {
            lateral_offset: f.lateral_offset,
            radius: f.radius,
            push_limit: f.push_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingSection {
    pub gamma: f64,
    pub k_p: f64,
    pub k_d: f64,
    pub lambda: f64,
    pub impedance_mismatch: f64,
    pub centroidal_bias: f64,
    pub force_noise: f64,
    pub foot_mass: f64,
}

impl Default for SensingSection {
    fn default() -> Self {
        let s = SensingParams::default();
        Self {
            gamma: s.blend.gamma,
            k_p: s.blend.k_p,
            k_d: s.blend.k_d,
            lambda: s.blend.lambda,
            impedance_mismatch: s.impedance_mismatch,
            centroidal_bias: s.centroidal_bias,
            force_noise: s.force_noise,
            foot_mass: s.foot_mass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSection {
    /// Friction coefficient assumed by the estimator.
    pub mu: f64,
    /// Batch size behind the mass ordering used by the planner.
    pub n_est: usize,
    /// Extra batch sizes reported in the estimation log.
    pub batch_sizes: Vec<usize>,
    pub probe_force: f64,
    pub kick_duration: f64,
    pub probe_dt: f64,
    pub approach_speed: f64,
    pub max_kicks: usize,
    /// Box priority used when estimation yields nothing.
    pub default_order: Vec<usize>,
}

impl Default for EstimationSection {
    fn default() -> Self {
        let p = ProbeConfig::default();
        Self {
            mu: 0.4,
            n_est: 1000,
            batch_sizes: vec![1000, 2000, 3000],
            probe_force: p.peak_force,
            kick_duration: p.kick_duration,
            probe_dt: p.dt,
            approach_speed: p.approach_speed,
            max_kicks: p.max_kicks,
            default_order: vec![0, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub center: [f64; 2],
    #[serde(default = "default_half_extent")]
    pub half_extent: f64,
    pub mass: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
}

fn default_half_extent() -> f64 {
    0.15
}

fn default_mu() -> f64 {
    0.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    pub first_step: usize,
    pub steps: usize,
    pub error: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub hlip: HlipSection,
    pub dob: DobSection,
    pub planner: PlannerSection,
    pub foot: FootSection,
    pub sensing: SensingSection,
    pub estimation: EstimationSection,
    pub boxes: Vec<BoxSection>,
    pub disturbance: Option<DisturbanceSection>,
}

fn v2(a: [f64; 2]) -> Vector2<f64> {
    Vector2::new(a[0], a[1])
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().replace('\n', " ")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        let s = &self.scenario;
        if !(s.dt > 0.0 && s.duration > 0.0 && s.g > 0.0 && s.goal_tolerance > 0.0) {
            return bad("scenario dt, duration, g and goal_tolerance must be positive");
        }
        if self.hlip.actuation_noise < 0.0 || self.sensing.force_noise < 0.0 {
            return bad("noise levels must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dob.beta) {
            return bad("dob.beta must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.sensing.gamma) {
            return bad("sensing.gamma must lie in [0, 1]");
        }
        if self.planner.zeta_samples < 2 {
            return bad("planner.zeta_samples must be at least 2");
        }
        if self.estimation.n_est == 0 || self.estimation.batch_sizes.contains(&0) {
            return bad("estimation batch sizes must be positive");
        }
        if self.estimation.default_order.iter().any(|&i| i >= self.boxes.len()) && !self.boxes.is_empty() {
            return bad("estimation.default_order references a missing box");
        }
        for b in &self.boxes {
            if !(b.mass > 0.0 && b.half_extent > 0.0 && b.mu >= 0.0) {
                return bad("boxes need mass > 0, half_extent > 0, mu >= 0");
            }
        }
        // the push limit has to separate the lightest and heaviest box
        if self.boxes.len() >= 2 {
            let caps: Vec<f64> = self.boxes.iter().map(|b| b.mu * b.mass * s.g).collect();
            let lo = caps.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = caps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let push = self.foot.push_limit;
            if !(lo < push && push < hi) {
                return Err(Error::Config(format!(
                    "foot.push_limit {push} N must lie between the box friction capacities {lo:.2} N and {hi:.2} N"
                )));
            }
        }
        Ok(())
    }

    pub fn hlip_params(&self) -> Result<HlipParams<f64>> {
        HlipParams::new(self.hlip.z0, self.scenario.g, self.hlip.t_ssp, self.hlip.t_dsp)
    }

    pub fn q_weight(&self) -> Matrix2<f64> {
        Matrix2::new(self.hlip.q[0], 0.0, 0.0, self.hlip.q[1])
    }

    pub fn start(&self) -> Vector2<f64> {
        v2(self.scenario.start)
    }

    pub fn goal(&self) -> Vector2<f64> {
        v2(self.scenario.goal)
    }

    pub fn bodies(&self) -> Result<Vec<BoxBody>> {
        self.boxes
            .iter()
            .map(|b| BoxBody::new(v2(b.center), b.half_extent, b.mass, b.mu))
            .collect()
    }

    pub fn foot_params(&self) -> FootParams {
        FootParams {
            lateral_offset: self.foot.lateral_offset,
            radius: self.foot.radius,
            push_limit: self.foot.push_limit,
        }
    }

    pub fn sensing_params(&self) -> SensingParams {
        let s = &self.sensing;
        SensingParams {
            blend: ForceBlend {
                gamma: s.gamma,
                k_p: s.k_p,
                k_d: s.k_d,
                lambda: s.lambda,
            },
            impedance_mismatch: s.impedance_mismatch,
            centroidal_bias: s.centroidal_bias,
            force_noise: s.force_noise,
            foot_mass: s.foot_mass,
        }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        let e = &self.estimation;
        ProbeConfig {
            peak_force: e.probe_force,
            kick_duration: e.kick_duration,
            dt: e.probe_dt,
            approach_speed: e.approach_speed,
            max_kicks: e.max_kicks,
            g: self.scenario.g,
        }
    }

    pub fn scripted(&self) -> Option<ScriptedDisturbance> {
        self.disturbance.as_ref().map(|d| ScriptedDisturbance {
            first_step: d.first_step,
            steps: d.steps,
            error: v2(d.error),
        })
    }
}
