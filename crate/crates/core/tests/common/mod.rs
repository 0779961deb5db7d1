#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use safestep::harness::run::{barrier_specs, planner_limits};
use safestep::harness::ScenarioConfig;
use safestep::qp::QpProblem;
use safestep::safety::{BarrierSpec, CbfConstraint, PlannerLimits, PlannerState, SafetyHierarchy};

pub fn scenario(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    ScenarioConfig::load(&path).expect("scenario loads")
}

pub fn paper() -> ScenarioConfig {
    scenario("paper_scenario.toml")
}

/// Barriers and limits of the paper scenario, heavy box first.
pub fn paper_hierarchy() -> SafetyHierarchy<f64> {
    let cfg = paper();
    let b = barrier_specs(&cfg).unwrap();
    let (heavy, light) = if cfg.boxes[0].mass > cfg.boxes[1].mass { (0, 1) } else { (1, 0) };
    SafetyHierarchy::new(
        vec![b[heavy], b[light]],
        vec![heavy, light],
        cfg.planner.relaxation_weight,
        planner_limits(&cfg).unwrap(),
    )
    .unwrap()
}

pub fn limits() -> PlannerLimits<f64> {
    planner_limits(&paper()).unwrap()
}

pub fn barriers() -> Vec<BarrierSpec<f64>> {
    barrier_specs(&paper()).unwrap()
}

/// `n x n` grid over `[lo, hi]^2`.
pub fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = Vector2<f64>> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).flat_map(move |i| (0..n).map(move |j| Vector2::new(lo + i as f64 * step, lo + j as f64 * step)))
}

/// Brute-force minimizer of `f` over `{u in [lo, hi]^2 : a . u >= b for every row}`.
///
/// Candidates are an `n x n` grid, the same resolution along every constraint line
/// clipped to the square, and all pairwise line intersections. Each family is refined
/// with a 20x finer search around its winner. Returns `None` when nothing is feasible.
pub fn oracle_min(
    lo: f64,
    hi: f64,
    n: usize,
    rows: &[(Vector2<f64>, f64)],
    f: impl Fn(&Vector2<f64>) -> f64,
) -> Option<(Vector2<f64>, f64)> {
    let cell = (hi - lo) / (n - 1) as f64;
    let inside = |u: &Vector2<f64>| u.iter().all(|&c| c >= lo - 1e-12 && c <= hi + 1e-12);
    let feasible = |u: &Vector2<f64>| inside(u) && rows.iter().all(|(a, b)| a.dot(u) - b >= -1e-12);
    let mut best: Option<(Vector2<f64>, f64)>;
    let consider = |best: &mut Option<(Vector2<f64>, f64)>, u: Vector2<f64>| {
        if feasible(&u) {
            let v = f(&u);
            if best.map_or(true, |(_, b)| v < b) {
                *best = Some((u, v));
            }
        }
    };

    let mut area: Option<(Vector2<f64>, f64)> = None;
    for u in grid(lo, hi, n) {
        consider(&mut area, u);
    }
    if let Some((c, _)) = area {
        for i in -100..=100 {
            for j in -100..=100 {
                consider(&mut area, c + Vector2::new(i as f64, j as f64) * (cell / 20.0));
            }
        }
    }
    best = area;

    let mut lines: Vec<(Vector2<f64>, f64)> = rows.iter().filter(|(a, _)| a.norm() > 1e-12).copied().collect();
    for (a, b) in [((1.0, 0.0), lo), ((-1.0, 0.0), -hi), ((0.0, 1.0), lo), ((0.0, -1.0), -hi)] {
        lines.push((Vector2::new(a.0, a.1), b));
    }
    for (a, b) in &lines {
        // points p0 + t d on a . u = b
        let p0 = a * (b / a.norm_squared());
        let d = Vector2::new(-a.y, a.x) / a.norm();
        let reach = (hi - lo) * 2f64.sqrt() + p0.norm();
        let m = ((2.0 * reach / cell).ceil() as usize).max(2);
        let mut edge: Option<(Vector2<f64>, f64)> = None;
        let mut best_t = None;
        for i in 0..=m {
            let t = -reach + 2.0 * reach * i as f64 / m as f64;
            let before = edge.map(|e| e.1);
            consider(&mut edge, p0 + d * t);
            if edge.map(|e| e.1) != before {
                best_t = Some(t);
            }
        }
        if let Some(t0) = best_t {
            let step = 2.0 * reach / m as f64;
            for i in -400..=400 {
                consider(&mut edge, p0 + d * (t0 + step * i as f64 / 200.0));
            }
        }
        if let Some(e) = edge {
            consider(&mut best, e.0);
        }
    }
    for (i, (a1, b1)) in lines.iter().enumerate() {
        for (a2, b2) in &lines[i + 1..] {
            let det = a1.x * a2.y - a1.y * a2.x;
            if det.abs() > 1e-12 {
                consider(&mut best, Vector2::new((b1 * a2.y - a1.y * b2) / det, (a1.x * b2 - b1 * a2.x) / det));
            }
        }
    }
    best
}

pub fn random_state(rng: &mut impl Rng) -> PlannerState<f64> {
    PlannerState::new(
        Vector2::new(rng.gen_range(-0.2..2.2), rng.gen_range(-1.2..1.2)),
        Vector2::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)),
    )
}

/// The hierarchical QP written out independently: objective, primary row and the input box.
pub fn hierarchical_problem(
    hier: &SafetyHierarchy<f64>,
    state: &PlannerState<f64>,
    u_des: &Vector2<f64>,
    u_i: &Vector2<f64>,
) -> QpProblem<f64> {
    let k = hier.limits.kappa;
    let p = CbfConstraint::new(hier.primary(), state, k);
    let a2 = CbfConstraint::new(hier.secondary().unwrap(), state, k).a;
    let w = hier.relaxation_weight;
    let h = DMatrix::from_fn(2, 2, |i, j| 2.0 * ((i == j) as u8 as f64 + w * a2[i] * a2[j]));
    let c = DVector::from_fn(2, |i, _| -2.0 * u_des[i] - 2.0 * w * a2.dot(u_i) * a2[i]);
    let am = hier.limits.a_max;
    let a = DMatrix::from_row_slice(5, 2, &[p.a.x, p.a.y, 1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
    let b = DVector::from_row_slice(&[p.b, -am, -am, -am, -am]);
    QpProblem::new(h, c, a, b).unwrap()
}
