//! Planar world: a point-mass biped walking by H-LIP footsteps among sliding boxes.
//!
//! The robot's base follows the pendulum about a virtual pivot during single
//! support and coasts during double support. Each foot is drawn at a lateral
//! offset from the pivot so left and right feet sweep distinct lanes. Feet
//! are discs; boxes are axis-aligned squares resting on the ground with
//! Coulomb friction. A swing foot that meets a box either pushes it or is
//! stopped at its face, and the shortfall becomes a foot-placement error that
//! enters the step-to-step dynamics through `B^H`.

use nalgebra::{Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dob::{apply_dob, DisturbanceObserver};
use crate::error::{Error, Result};
use crate::hlip::{
    build_s2s, orbit_target_with, solve_step_gain, ssp_transition_matrix, stepping_controller, HlipParams,
    HlipState, S2SMatrices, StepGain,
};
use crate::reference::{reference_tracker, CubicSpline, TrackerGains};
use crate::safety::{position_barrier, BarrierSpec, PlannerLimits, PlannerState, SafetyHierarchy, SafetyPlanner};
use crate::sensing::{ForceSensor, SensingParams};

/// Speeds below this count as resting.
pub const REST_SPEED: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxBody {
    pub center: Vector2<f64>,
    pub half_extent: f64,
    pub mass: f64,
    pub velocity: Vector2<f64>,
    pub mu_ground: f64,
}

impl BoxBody {
    pub fn new(center: Vector2<f64>, half_extent: f64, mass: f64, mu_ground: f64) -> Result<Self> {
        if !(mass > 0.0 && half_extent > 0.0 && mu_ground >= 0.0) {
            return Err(Error::param("box needs mass > 0, half extent > 0, friction >= 0"));
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(Error::param("box center is not finite"));
        }
        Ok(Self {
            center,
            half_extent,
            mass,
            velocity: Vector2::zeros(),
            mu_ground,
        })
    }

    /// Static friction capacity `mu m g`.
    pub fn capacity(&self, g: f64) -> f64 {
        self.mu_ground * self.mass * g
    }

    pub fn half_diagonal(&self) -> f64 {
        self.half_extent * std::f64::consts::SQRT_2
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * self.velocity.norm_squared()
    }

    /// Signed distance from `p` to the square footprint.
    pub fn signed_distance(&self, p: &Vector2<f64>) -> f64 {
        let q = (p - self.center).abs().add_scalar(-self.half_extent);
        let outside = q.map(|c| c.max(0.0)).norm();
        outside + q.x.max(q.y).min(0.0)
    }

    /// Outward unit normal of the footprint nearest `p`.
    pub fn outward_normal(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let rel = p - self.center;
        let q = rel.abs().add_scalar(-self.half_extent);
        let sign = rel.map(|c| if c >= 0.0 { 1.0 } else { -1.0 });
        if q.x > 0.0 || q.y > 0.0 {
            let g = q.map(|c| c.max(0.0)).component_mul(&sign);
            g.normalize()
        } else if q.x > q.y {
            Vector2::new(sign.x, 0.0)
        } else {
            Vector2::new(0.0, sign.y)
        }
    }
}

/// Advances a box one tick under an external planar force and Coulomb friction.
///
/// Motion under constant acceleration is integrated exactly; a box that
/// would reverse within the tick stops where its speed reaches zero.
pub fn integrate_box(b: &mut BoxBody, force: &Vector2<f64>, dt: f64, g: f64) {
    let speed = b.velocity.norm();
    let friction = b.mu_ground * g;
    if speed <= REST_SPEED {
        b.velocity = Vector2::zeros();
        let f = force.norm();
        let cap = b.capacity(g);
        if f <= cap {
            return;
        }
        let a = force * ((f - cap) / (f * b.mass));
        b.center += a * (0.5 * dt * dt);
        b.velocity = a * dt;
        return;
    }
    let dir = b.velocity / speed;
    let a = force / b.mass - dir * friction;
    let v_new = b.velocity + a * dt;
    if v_new.dot(&b.velocity) <= 0.0 {
        let decel = -a.dot(&dir);
        let t_stop = (speed / decel).min(dt);
        b.center += b.velocity * t_stop + a * (0.5 * t_stop * t_stop);
        b.velocity = Vector2::zeros();
    } else {
        b.center += b.velocity * dt + a * (0.5 * dt * dt);
        b.velocity = v_new;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootParams {
    /// Lateral distance of each foot from the pendulum pivot [m].
    pub lateral_offset: f64,
    pub radius: f64,
    /// Largest force the swing foot can exert on an object [N].
    pub push_limit: f64,
}

impl Default for FootParams {
    fn default() -> Self {
        Self {
            lateral_offset: 0.135,
            radius: 0.13,
            push_limit: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactRecord {
    pub obstacle_id: usize,
    pub point: Vector2<f64>,
    /// Force the foot applies to the box [N].
    pub force: Vector2<f64>,
    pub duration_so_far: f64,
}

fn foot_clearance(b: &BoxBody, p: &Vector2<f64>, radius: f64) -> f64 {
    b.signed_distance(p) - radius
}

// First point of the segment where the foot disc touches the box.
fn first_touch(b: &BoxBody, from: &Vector2<f64>, to: &Vector2<f64>, radius: f64) -> Option<Vector2<f64>> {
    if foot_clearance(b, from, radius) <= 0.0 {
        // already touching: only motion into the box is obstructed
        let leaving = (to - from).dot(&b.outward_normal(from)) >= 0.0;
        return if leaving { None } else { Some(*from) };
    }
    const PROBES: usize = 16;
    let at = |s: f64| from + (to - from) * s;
    let mut lo = 0.0;
    let mut hi = None;
    for k in 1..=PROBES {
        let s = k as f64 / PROBES as f64;
        if foot_clearance(b, &at(s), radius) < 0.0 {
            hi = Some(s);
            break;
        }
        lo = s;
    }
    let mut hi = hi?;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if foot_clearance(b, &at(mid), radius) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(at(lo))
}

// Keeps the part of the remaining motion tangent to the face at `hit`, then
// clears any residual overlap near a corner.
fn slide(b: &BoxBody, hit: &Vector2<f64>, target: &Vector2<f64>, radius: f64) -> Vector2<f64> {
    let n = b.outward_normal(hit);
    let rest = target - hit;
    let into = rest.dot(&n).min(0.0);
    let mut p = hit + rest - n * into;
    for _ in 0..4 {
        let gap = foot_clearance(b, &p, radius);
        if gap >= 0.0 {
            break;
        }
        p -= b.outward_normal(&p) * gap;
    }
    p
}

/// Moves the swing foot from `swing_current` toward `swing_target` against one box.
///
/// The force needed to keep the foot on its path is capped by the push
/// limit. A resting box whose friction capacity holds against that force
/// stops the foot's motion into its face; otherwise the box slides and the
/// foot follows its face. Motion along the face is never obstructed.
/// Returns `None` when the path misses the box.
pub fn resolve_contact(
    swing_target: &Vector2<f64>,
    swing_current: &Vector2<f64>,
    body: &mut BoxBody,
    dt: f64,
    foot: &FootParams,
    g: f64,
) -> (Option<ContactRecord>, Vector2<f64>) {
    let Some(hit) = first_touch(body, swing_current, swing_target, foot.radius) else {
        return (None, *swing_target);
    };
    let push_dir = -body.outward_normal(&hit);
    let depth = (swing_target - hit).dot(&push_dir).max(0.0);
    let face_speed = body.velocity.dot(&push_dir);
    let friction = body.capacity(g);
    let required = (body.mass * (depth / dt - face_speed) / dt + friction).max(0.0);
    let f = required.min(foot.push_limit);
    let record = ContactRecord {
        obstacle_id: 0,
        point: hit + push_dir * foot.radius,
        force: push_dir * f,
        duration_so_far: 0.0,
    };
    let resting = body.velocity.norm() <= REST_SPEED;
    if resting && f <= friction {
        return (Some(record), slide(body, &hit, swing_target, foot.radius));
    }
    integrate_box(body, &record.force, dt, g);
    let adjusted = match first_touch(body, swing_current, swing_target, foot.radius) {
        Some(h) => slide(body, &h, swing_target, foot.radius),
        None => *swing_target,
    };
    (Some(record), adjusted)
}

/// Applies a placement error to one S2S step.
///
/// The realized step is `u - e`; the lumped disturbance is `w = B^H (-e)`.
pub fn inject_disturbance(
    s2s: &S2SMatrices<f64>,
    x: &HlipState<f64>,
    u_commanded: f64,
    placement_error: f64,
) -> (HlipState<f64>, Vector2<f64>) {
    let w = s2s.b_h * (-placement_error);
    let next = s2s.a_h * x.to_vector() + s2s.b_h * u_commanded + w;
    (HlipState::from_vector(&next), w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    Left,
    Right,
}

impl Leg {
    /// Lateral side: left feet sit at `+y`.
    pub fn side(self) -> f64 {
        match self {
            Leg::Left => 1.0,
            Leg::Right => -1.0,
        }
    }

    pub fn other(self) -> Leg {
        match self {
            Leg::Left => Leg::Right,
            Leg::Right => Leg::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub base_pos: Vector2<f64>,
    pub base_vel: Vector2<f64>,
    pub stance_foot_pos: Vector2<f64>,
    pub swing_foot_pos: Vector2<f64>,
    /// Fraction of the current step cycle elapsed.
    pub step_phase: f64,
    pub stance_leg: Leg,
}

/// Fixed placement error imposed on a run of consecutive steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedDisturbance {
    pub first_step: usize,
    pub steps: usize,
    pub error: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub dt: f64,
    pub duration: f64,
    pub start: Vector2<f64>,
    pub goal: Vector2<f64>,
    pub boxes: Vec<BoxBody>,
    pub seed: u64,
    /// Standard deviation of foot placement noise per axis [m].
    pub actuation_noise: f64,
    pub g: f64,
    pub hlip: HlipParams<f64>,
    pub q_weight: Matrix2<f64>,
    pub r_weight: f64,
    pub u_max: f64,
    /// Gain of the velocity reference `phi' + k (phi - base)`.
    pub kp_hlip: f64,
    pub v_ref_max: f64,
    /// Largest pivot-to-base distance per axis before the robot counts as fallen.
    pub fall_bound: f64,
    /// Q-filter pole; `None` disables the observer.
    pub dob_beta: Option<f64>,
    pub foot: FootParams,
    pub sensing: SensingParams,
    pub limits: PlannerLimits<f64>,
    /// `None` leaves the planner unfiltered.
    pub hierarchy: Option<SafetyHierarchy<f64>>,
    /// Barriers reported as `h1`, `h2` in the log, highest priority first.
    pub logged_barriers: Vec<BarrierSpec<f64>>,
    pub tracker: TrackerGains<f64>,
    pub reference_duration: f64,
    pub scripted: Option<ScriptedDisturbance>,
}

/// State of the world after one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: u64,
    pub time: f64,
    pub base: Vector2<f64>,
    pub base_vel: Vector2<f64>,
    pub phi: Vector2<f64>,
    pub phi_dot: Vector2<f64>,
    pub u_plan: Vector2<f64>,
    pub delta: f64,
    pub v_des: Vector2<f64>,
    /// True on the tick a footstep is chosen.
    pub step_event: bool,
    pub step_index: usize,
    pub step_cmd: Vector2<f64>,
    /// Realized step and error of the most recent touchdown.
    pub step_real: Vector2<f64>,
    pub placement_error: Vector2<f64>,
    /// Placement error from contacts or scripted faults, excluding actuation noise.
    pub obstruction_error: Vector2<f64>,
    pub dob_offset: Vector2<f64>,
    /// Pre-impact velocity minus the orbit velocity targeted by the previous step.
    pub vel_err: Vector2<f64>,
    pub h: [Option<f64>; 2],
    pub h_base: [Option<f64>; 2],
    pub f_hat: Vector2<f64>,
    pub f_true: Vector2<f64>,
    pub contact: Option<usize>,
    pub boxes: Vec<Vector2<f64>>,
    pub swing_foot: Vector2<f64>,
    pub primary_feasible: bool,
    pub secondary_feasible: bool,
    pub fallen: bool,
}

struct StepPlan {
    cmd: Vector2<f64>,
    target: Vector2<f64>,
    lift: Vector2<f64>,
    noise: Vector2<f64>,
}

pub struct World {
    pub config: WorldConfig,
    pub robot: RobotState,
    pub boxes: Vec<BoxBody>,
    pub planner: SafetyPlanner<f64>,
    pub tick: u64,
    pub step_index: usize,
    pub fallen: bool,
    s2s: S2SMatrices<f64>,
    gain: StepGain<f64>,
    tick_flow: Matrix2<f64>,
    ssp_flow: Matrix2<f64>,
    n_ssp: usize,
    n_dsp: usize,
    pivot: Vector2<f64>,
    dob: Option<[DisturbanceObserver<f64>; 2]>,
    reference: Option<CubicSpline<f64>>,
    sensor: ForceSensor,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    plan: Option<StepPlan>,
    last_cmd: Option<Vector2<f64>>,
    last_v_star: Option<Vector2<f64>>,
    last_real: Vector2<f64>,
    last_error: Vector2<f64>,
    last_obstruction: Vector2<f64>,
    dob_offset: Vector2<f64>,
    v_des: Vector2<f64>,
    contact_ticks: Vec<u32>,
}

fn ticks_for(duration: f64, dt: f64, what: &str) -> Result<usize> {
    let n = (duration / dt).round();
    if (n * dt - duration).abs() > 1e-9 {
        return Err(Error::param(format!("{what} must be a whole number of ticks")));
    }
    Ok(n as usize)
}

fn quintic(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self> {
        if !(config.dt > 0.0 && config.duration > 0.0) {
            return Err(Error::param("dt and duration must be positive"));
        }
        if !(config.u_max > 0.0 && config.fall_bound > 0.0 && config.v_ref_max >= 0.0) {
            return Err(Error::param("u_max, fall bound and reference speed must be positive"));
        }
        if config.logged_barriers.len() > 2 {
            return Err(Error::param("at most two logged barriers"));
        }
        let n_ssp = ticks_for(config.hlip.t_ssp, config.dt, "single support")?;
        let n_dsp = ticks_for(config.hlip.t_dsp, config.dt, "double support")?;
        if n_ssp == 0 {
            return Err(Error::param("single support needs at least one tick"));
        }
        let s2s = build_s2s(&config.hlip)?;
        let gain = solve_step_gain(&s2s, config.q_weight, config.r_weight)?;
        let dob = match config.dob_beta {
            Some(beta) => Some([
                DisturbanceObserver::new(&s2s, beta)?,
                DisturbanceObserver::new(&s2s, beta)?,
            ]),
            None => None,
        };
        let reference = if (config.goal - config.start).norm() > 1e-12 {
            Some(CubicSpline::through(&[config.start, config.goal], config.reference_duration)?)
        } else {
            None
        };
        let noise = if config.actuation_noise > 0.0 {
            Some(Normal::new(0.0, config.actuation_noise).map_err(|e| Error::param(e.to_string()))?)
        } else {
            None
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(0);
        let sensor = ForceSensor::new(config.sensing, config.seed, 1)?;
        let lateral = Vector2::new(0.0, config.foot.lateral_offset);
        let robot = RobotState {
            base_pos: config.start,
            base_vel: Vector2::zeros(),
            stance_foot_pos: config.start + lateral,
            swing_foot_pos: config.start - lateral,
            step_phase: 0.0,
            stance_leg: Leg::Left,
        };
        let planner = SafetyPlanner::new(config.hierarchy.clone(), config.limits, PlannerState::at_rest(config.start));
        Ok(Self {
            tick_flow: ssp_transition_matrix(&config.hlip, config.dt)?,
            ssp_flow: ssp_transition_matrix(&config.hlip, config.hlip.t_ssp)?,
            boxes: config.boxes.clone(),
            contact_ticks: vec![0; config.boxes.len()],
            pivot: config.start,
            config,
            robot,
            planner,
            tick: 0,
            step_index: 0,
            fallen: false,
            s2s,
            gain,
            n_ssp,
            n_dsp,
            dob,
            reference,
            sensor,
            rng,
            noise,
            plan: None,
            last_cmd: None,
            last_v_star: None,
            last_real: Vector2::zeros(),
            last_error: Vector2::zeros(),
            last_obstruction: Vector2::zeros(),
            dob_offset: Vector2::zeros(),
            v_des: Vector2::zeros(),
        })
    }

    pub fn s2s(&self) -> &S2SMatrices<f64> {
        &self.s2s
    }

    pub fn step_gain(&self) -> &StepGain<f64> {
        &self.gain
    }

    fn cycle(&self) -> usize {
        self.n_ssp + self.n_dsp
    }

    fn lateral(&self, leg: Leg) -> Vector2<f64> {
        Vector2::new(0.0, leg.side() * self.config.foot.lateral_offset)
    }

    fn decide_step(&mut self) -> Result<(Vector2<f64>, Vector2<f64>)> {
        let cfg = &self.config;
        let period = cfg.hlip.step_period();
        let p = self.robot.base_pos - self.pivot;
        let mut cmd = Vector2::zeros();
        let mut v_star = Vector2::zeros();
        let mut vel_err = Vector2::zeros();
        let state = self.planner.state;
        let v_des = (state.phi_dot + (state.phi - self.robot.base_pos) * cfg.kp_hlip)
            .map(|c| c.clamp(-cfg.v_ref_max, cfg.v_ref_max));
        for axis in 0..2 {
            // single support is disturbance-free, so the pre-impact state is known exactly
            let x = self.ssp_flow * Vector2::new(p[axis], self.robot.base_vel[axis]);
            let x_pred = HlipState::from_vector(&x);
            if let Some(prev) = self.last_v_star {
                vel_err[axis] = x_pred.v - prev[axis];
            }
            let (x_star, u_star) = orbit_target_with(&self.s2s, period, v_des[axis])?;
            let u_nom = stepping_controller(&self.gain, &x_pred, &x_star, u_star, cfg.u_max);
            let mut u = u_nom;
            if let (Some(dob), Some(prev)) = (self.dob.as_mut(), self.last_cmd) {
                let offset = dob[axis].update(prev[axis], x_pred.v)?;
                self.dob_offset[axis] = offset;
                u = apply_dob(u_nom, offset, cfg.u_max);
            }
            cmd[axis] = u;
            v_star[axis] = x_star.v;
        }
        let swing = self.robot.stance_leg.other();
        let noise = match &self.noise {
            Some(n) => Vector2::new(n.sample(&mut self.rng), n.sample(&mut self.rng)),
            None => Vector2::zeros(),
        };
        let scripted = match cfg.scripted {
            Some(s) if self.step_index >= s.first_step && self.step_index < s.first_step + s.steps => s.error,
            _ => Vector2::zeros(),
        };
        let target = self.pivot + cmd + self.lateral(swing) + noise - scripted;
        self.plan = Some(StepPlan {
            cmd,
            target,
            lift: self.robot.swing_foot_pos,
            noise,
        });
        self.last_cmd = Some(cmd);
        self.last_v_star = Some(v_star);
        self.v_des = v_des;
        Ok((cmd, vel_err))
    }

    fn touchdown(&mut self) {
        let plan = self.plan.take().expect("touchdown follows a step decision");
        let swing = self.robot.stance_leg.other();
        let real = self.robot.swing_foot_pos - self.lateral(swing) - self.pivot;
        self.last_real = real;
        self.last_error = plan.cmd - real;
        self.last_obstruction = self.last_error + plan.noise;
        self.pivot += real;
        let old_stance = self.robot.stance_foot_pos;
        self.robot.stance_foot_pos = self.robot.swing_foot_pos;
        self.robot.swing_foot_pos = old_stance;
        self.robot.stance_leg = swing;
        self.step_index += 1;
    }

    /// Advances the world by one control tick.
    pub fn step(&mut self) -> Result<TickRecord> {
        if self.fallen {
            return Err(Error::SimulationFault {
                tick: self.tick as usize,
                reason: "robot has fallen".into(),
            });
        }
        let dt = self.config.dt;
        let g = self.config.g;
        let time = self.tick as f64 * dt;
        let phase_tick = (self.tick % self.cycle() as u64) as usize;

        let reference = match &self.reference {
            Some(s) => s.eval(time),
            None => (self.config.goal, Vector2::zeros()),
        };
        let ps = self.planner.state;
        let u_des = reference_tracker(&self.config.tracker, &reference, &ps.phi, &ps.phi_dot, self.config.limits.a_max);
        let plan_out = self.planner.tick(&u_des, dt)?;

        let mut step_event = false;
        let mut step_cmd = self.last_cmd.unwrap_or_else(Vector2::zeros);
        let mut vel_err = Vector2::zeros();
        if phase_tick == 0 {
            let (cmd, err) = self.decide_step()?;
            step_event = true;
            step_cmd = cmd;
            vel_err = err;
        }

        let mut f_true = Vector2::zeros();
        let mut impact = None;
        let mut touched = None;
        let mut pushed = vec![false; self.boxes.len()];
        let mut swing_foot = self.robot.swing_foot_pos;
        if phase_tick < self.n_ssp {
            for axis in 0..2 {
                let p = self.robot.base_pos[axis] - self.pivot[axis];
                let x = self.tick_flow * Vector2::new(p, self.robot.base_vel[axis]);
                self.robot.base_pos[axis] = self.pivot[axis] + x[0];
                self.robot.base_vel[axis] = x[1];
            }
            let plan = self.plan.as_ref().expect("single support has a step plan");
            let tau = (phase_tick + 1) as f64 / self.n_ssp as f64;
            let desired = plan.lift + (plan.target - plan.lift) * quintic(tau);
            let current = self.robot.swing_foot_pos;
            let mut foot = desired;
            for (i, body) in self.boxes.iter_mut().enumerate() {
                let (rec, adjusted) = resolve_contact(&foot, &current, body, dt, &self.config.foot, g);
                if let Some(rec) = rec {
                    foot = adjusted;
                    f_true += rec.force;
                    pushed[i] = true;
                    if self.contact_ticks[i] == 0 {
                        impact = Some(desired - current);
                    }
                    touched.get_or_insert(i);
                }
            }
            self.robot.swing_foot_pos = foot;
            swing_foot = foot;
            if phase_tick + 1 == self.n_ssp {
                self.touchdown();
            }
        } else {
            self.robot.base_pos += self.robot.base_vel * dt;
        }
        for (i, body) in self.boxes.iter_mut().enumerate() {
            if pushed[i] {
                self.contact_ticks[i] += 1;
            } else {
                self.contact_ticks[i] = 0;
                integrate_box(body, &Vector2::zeros(), dt, g);
            }
        }
        let reading = self.sensor.measure(&f_true, impact.map(|d| d / dt), dt);

        let p = self.robot.base_pos - self.pivot;
        if p.amax() > self.config.fall_bound {
            self.fallen = true;
        }
        let finite = [self.robot.base_pos, self.robot.base_vel, self.planner.state.phi, reading.f_hat]
            .iter()
            .all(|v| v.iter().all(|c| c.is_finite()))
            && self.boxes.iter().all(|b| b.center.iter().all(|c| c.is_finite()));
        if !finite {
            return Err(Error::SimulationFault {
                tick: self.tick as usize,
                reason: "non-finite state".into(),
            });
        }

        let phi = self.planner.state.phi;
        let base = self.robot.base_pos;
        let level = |k: usize, at: &Vector2<f64>| self.config.logged_barriers.get(k).map(|b| position_barrier(b, at));
        self.robot.step_phase = (phase_tick + 1) as f64 / self.cycle() as f64;
        let record = TickRecord {
            tick: self.tick,
            time: time + dt,
            base,
            base_vel: self.robot.base_vel,
            phi,
            phi_dot: self.planner.state.phi_dot,
            u_plan: plan_out.u,
            delta: plan_out.delta,
            v_des: self.v_des,
            step_event,
            step_index: self.step_index,
            step_cmd,
            step_real: self.last_real,
            placement_error: self.last_error,
            obstruction_error: self.last_obstruction,
            dob_offset: self.dob_offset,
            vel_err,
            h: [level(0, &phi), level(1, &phi)],
            h_base: [level(0, &base), level(1, &base)],
            f_hat: reading.f_hat,
            f_true,
            contact: touched,
            boxes: self.boxes.iter().map(|b| b.center).collect(),
            swing_foot,
            primary_feasible: plan_out.primary_feasible,
            secondary_feasible: plan_out.secondary_feasible,
            fallen: self.fallen,
        };
        self.tick += 1;
        Ok(record)
    }

    /// Runs until the configured duration elapses or the robot falls.
    pub fn run(&mut self) -> Result<Vec<TickRecord>> {
        let total = ticks_for(self.config.duration, self.config.dt, "duration")?;
        let mut out = Vec::with_capacity(total);
        while (self.tick as usize) < total {
            let rec = self.step()?;
            let stop = rec.fallen;
            out.push(rec);
            if stop {
                break;
            }
        }
        Ok(out)
    }
}

pub fn step_world(world: &mut World) -> Result<TickRecord> {
    world.step()
}
