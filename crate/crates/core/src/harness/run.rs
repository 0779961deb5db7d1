//! Scenario orchestration: estimation phase, hierarchy construction, rollout.

use nalgebra::Vector2;

use super::config::{Mode, ScenarioConfig};
use super::log::{summarize, LogRow, SummaryInputs};
use super::Summary;
use crate::error::{Error, Result};
use crate::estimation::{build_hierarchy, estimate_mass_with, fallback_hierarchy, Admission, MassEstimate};
use crate::reference::TrackerGains;
use crate::safety::{zeta_margin, BarrierSpec, PlannerLimits, SafetyHierarchy};
use crate::sensing::{run_probe, ForceSensor};
use crate::world::{World, WorldConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub batch_size: usize,
    pub n_samples: usize,
    pub m_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxEstimation {
    pub box_id: usize,
    pub true_mass: f64,
    pub batches: Vec<BatchResult>,
    /// Estimate from the planner's batch size.
    pub main: Option<MassEstimate<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimationReport {
    pub boxes: Vec<BoxEstimation>,
}

impl EstimationReport {
    pub fn masses(&self) -> Vec<Option<f64>> {
        self.boxes.iter().map(|b| b.main.as_ref().map(|m| m.m_star)).collect()
    }
}

/// Kicks each box in turn and estimates its mass for every configured batch size.
pub fn estimate_boxes(cfg: &ScenarioConfig) -> Result<EstimationReport> {
    let bodies = cfg.bodies()?;
    let probe = cfg.probe_config();
    let est = &cfg.estimation;
    let largest = est.batch_sizes.iter().copied().chain([est.n_est]).max().unwrap_or(est.n_est);
    let mut report = EstimationReport::default();
    for (i, body) in bodies.iter().enumerate() {
        let mut sensor = ForceSensor::new(cfg.sensing_params(), cfg.scenario.seed, 100 + i as u64)?;
        let samples = run_probe(body, Vector2::new(1.0, 0.0), &probe, &mut sensor, largest)?;
        let batch = |n: usize| {
            let rules = Admission {
                max_samples: n,
                ..Admission::default()
            };
            estimate_mass_with(&samples, est.mu, cfg.scenario.g, &rules).ok()
        };
        let batches = est
            .batch_sizes
            .iter()
            .map(|&n| {
                let m = batch(n);
                BatchResult {
                    batch_size: n,
                    n_samples: m.as_ref().map_or(0, |m| m.n_samples),
                    m_star: m.map(|m| m.m_star),
                }
            })
            .collect();
        report.boxes.push(BoxEstimation {
            box_id: i,
            true_mass: body.mass,
            batches,
            main: batch(est.n_est),
        });
    }
    Ok(report)
}

pub fn barrier_specs(cfg: &ScenarioConfig) -> Result<Vec<BarrierSpec<f64>>> {
    let p = &cfg.planner;
    cfg.bodies()?
        .iter()
        .map(|b| {
            let r = b.half_diagonal() + p.robot_clearance;
            let zeta = zeta_margin(r, p.v_max, cfg.scenario.dt, p.zeta_samples)?;
            BarrierSpec::new(b.center, r, zeta, p.alpha[0])
        })
        .collect()
}

pub fn planner_limits(cfg: &ScenarioConfig) -> Result<PlannerLimits<f64>> {
    PlannerLimits::new(cfg.planner.a_max, cfg.planner.v_max, cfg.planner.kappa)
}

/// Safety hierarchy from mass estimates, or the configured default order when any is missing.
pub fn hierarchy_for(cfg: &ScenarioConfig, report: &EstimationReport) -> Result<Option<SafetyHierarchy<f64>>> {
    let barriers = barrier_specs(cfg)?;
    if barriers.is_empty() {
        return Ok(None);
    }
    let limits = planner_limits(cfg)?;
    let w = cfg.planner.relaxation_weight;
    let estimates: Option<Vec<(usize, MassEstimate<f64>)>> = report
        .boxes
        .iter()
        .map(|b| b.main.clone().map(|m| (b.box_id, m)))
        .collect();
    let mut h = match estimates {
        Some(e) if e.len() == barriers.len() => build_hierarchy(&e, &barriers, (cfg.start(), cfg.goal()), w, limits)?,
        _ => fallback_hierarchy(&default_order(cfg), &barriers, w, limits)?,
    };
    if let Some(second) = h.levels.get_mut(1) {
        second.alpha_slope = cfg.planner.alpha[1];
    }
    Ok(Some(h))
}

fn default_order(cfg: &ScenarioConfig) -> Vec<usize> {
    let n = cfg.boxes.len();
    let mut order: Vec<usize> = cfg.estimation.default_order.iter().copied().filter(|&i| i < n).collect();
    order.extend((0..n).filter(|i| !cfg.estimation.default_order.contains(i)));
    order
}

pub fn world_config(cfg: &ScenarioConfig, hierarchy: Option<SafetyHierarchy<f64>>) -> Result<WorldConfig> {
    let barriers = barrier_specs(cfg)?;
    let logged = match &hierarchy {
        Some(h) => h.levels.clone(),
        None => default_order(cfg).into_iter().take(2).map(|i| barriers[i]).collect(),
    };
    Ok(WorldConfig {
        dt: cfg.scenario.dt,
        duration: cfg.scenario.duration,
        start: cfg.start(),
        goal: cfg.goal(),
        boxes: cfg.bodies()?,
        seed: cfg.scenario.seed,
        actuation_noise: cfg.hlip.actuation_noise,
        g: cfg.scenario.g,
        hlip: cfg.hlip_params()?,
        q_weight: cfg.q_weight(),
        r_weight: cfg.hlip.r,
        u_max: cfg.hlip.u_max,
        kp_hlip: cfg.hlip.kp,
        v_ref_max: cfg.hlip.v_ref_max,
        fall_bound: cfg.hlip.fall_bound,
        dob_beta: cfg.scenario.mode.observer().then_some(cfg.dob.beta),
        foot: cfg.foot_params(),
        sensing: cfg.sensing_params(),
        limits: planner_limits(cfg)?,
        hierarchy,
        logged_barriers: logged,
        tracker: TrackerGains {
            kp: cfg.planner.kp,
            kd: cfg.planner.kd,
        },
        reference_duration: cfg.planner.reference_duration,
        scripted: cfg.scripted(),
    })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<LogRow>,
    pub estimation: EstimationReport,
    pub summary: Summary,
}

pub fn summary_inputs(cfg: &ScenarioConfig) -> SummaryInputs {
    SummaryInputs {
        name: cfg.scenario.name.clone(),
        mode: cfg.scenario.mode.as_str().into(),
        seed: cfg.scenario.seed,
        goal: cfg.scenario.goal,
        goal_tolerance: cfg.scenario.goal_tolerance,
        true_masses: cfg.boxes.iter().map(|b| b.mass).collect(),
    }
}

/// Runs one scenario in memory.
pub fn simulate(cfg: &ScenarioConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mode = cfg.scenario.mode;
    let (estimation, hierarchy) = if mode.filtered() {
        let report = estimate_boxes(cfg)?;
        let h = hierarchy_for(cfg, &report)?;
        (report, h)
    } else {
        (EstimationReport::default(), None)
    };
    let fallback = hierarchy.as_ref().is_some_and(|h| h.fallback);
    let masses = if mode == Mode::Baseline {
        vec![None; cfg.boxes.len()]
    } else {
        estimation.masses()
    };
    let mut world = World::new(world_config(cfg, hierarchy)?)?;
    let records = world.run()?;
    if records.is_empty() {
        return Err(Error::SimulationFault {
            tick: 0,
            reason: "no ticks simulated".into(),
        });
    }
    let rows: Vec<LogRow> = records
        .into_iter()
        .map(|r| LogRow::from_record(r, mode.as_str(), fallback, &masses))
        .collect();
    let summary = summarize(&summary_inputs(cfg), &rows)?;
    Ok(RunOutput {
        rows,
        estimation,
        summary,
    })
}
