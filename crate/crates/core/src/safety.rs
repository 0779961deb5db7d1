//! Double-integrator safety filter with a two-level barrier hierarchy.
//!
//! Each obstacle contributes a disc barrier `h = |phi - c|^2 - (r^2 + zeta)`,
//! positive outside the inflated disc. Position barriers have relative
//! degree two under the double integrator, so the filters constrain the
//! extended barrier `h_e = h' + kappa h` through `h_e' >= -alpha h_e`, which is
//! affine in the acceleration input.
//!
//! The primary (heavier obstacle) barrier is a hard constraint. The
//! secondary one is enforced by a separate intermediate QP whose solution
//! `u_i` anchors a penalty `W delta^2`, `delta = h_e2'(u) - h_e2'(u_i)`, in the
//! final QP.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};
use crate::qp::{solve_qp, QpProblem};
use crate::scalar::{clamp, Real};

/// Virtual double-integrator state: planar position and velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerState<T: Real> {
    pub phi: Vector2<T>,
    pub phi_dot: Vector2<T>,
}

impl<T: Real> PlannerState<T> {
    pub fn new(phi: Vector2<T>, phi_dot: Vector2<T>) -> Self {
        Self { phi, phi_dot }
    }

    pub fn at_rest(phi: Vector2<T>) -> Self {
        Self {
            phi,
            phi_dot: Vector2::zeros(),
        }
    }

    /// Exact double-integrator update under constant `u`, then velocity projection onto the box.
    pub fn integrate(&self, u: &Vector2<T>, dt: T, v_max: T) -> Self {
        let half = T::lit(0.5);
        let phi = self.phi + self.phi_dot * dt + u * (half * dt * dt);
        let v = self.phi_dot + u * dt;
        Self {
            phi,
            phi_dot: v.map(|c| clamp(c, -v_max, v_max)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSpec<T: Real> {
    pub center: Vector2<T>,
    pub radius: T,
    /// Squared-distance margin added to `radius^2`.
    pub zeta: T,
    /// Slope of the linear class-K function.
    pub alpha_slope: T,
}

impl<T: Real> BarrierSpec<T> {
    pub fn new(center: Vector2<T>, radius: T, zeta: T, alpha_slope: T) -> Result<Self> {
        if radius < T::zero() || zeta < T::zero() || alpha_slope <= T::zero() {
            return Err(Error::param("barrier needs radius >= 0, zeta >= 0, alpha > 0"));
        }
        if !(center.iter().all(|c| c.is_finite_val()) && radius.is_finite_val() && zeta.is_finite_val()) {
            return Err(Error::param("barrier data is not finite"));
        }
        Ok(Self {
            center,
            radius,
            zeta,
            alpha_slope,
        })
    }

    /// Radius of the zero level set.
    pub fn inflated_radius(&self) -> T {
        (self.radius * self.radius + self.zeta).sqrt()
    }
}

/// Acceleration box and extended-barrier gain shared by both QPs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerLimits<T: Real> {
    pub a_max: T,
    pub v_max: T,
    pub kappa: T,
}

impl<T: Real> PlannerLimits<T> {
    pub fn new(a_max: T, v_max: T, kappa: T) -> Result<Self> {
        if !(a_max > T::zero() && v_max >= T::zero() && kappa > T::zero()) {
            return Err(Error::param("planner limits need a_max > 0, v_max >= 0, kappa > 0"));
        }
        Ok(Self { a_max, v_max, kappa })
    }
}

/// Barriers ordered by priority, highest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyHierarchy<T: Real> {
    pub levels: Vec<BarrierSpec<T>>,
    /// Obstacle id of each level.
    pub obstacle_ids: Vec<usize>,
    pub relaxation_weight: T,
    pub limits: PlannerLimits<T>,
    /// Set when the ordering came from configuration instead of mass estimates.
    pub fallback: bool,
}

impl<T: Real> SafetyHierarchy<T> {
    pub fn new(
        levels: Vec<BarrierSpec<T>>,
        obstacle_ids: Vec<usize>,
        relaxation_weight: T,
        limits: PlannerLimits<T>,
    ) -> Result<Self> {
        if levels.is_empty() || levels.len() > 2 {
            return Err(Error::param("hierarchy supports one primary and at most one secondary barrier"));
        }
        if obstacle_ids.len() != levels.len() {
            return Err(Error::param("one obstacle id per barrier level"));
        }
        if relaxation_weight < T::zero() {
            return Err(Error::param("relaxation weight must be non-negative"));
        }
        Ok(Self {
            levels,
            obstacle_ids,
            relaxation_weight,
            limits,
            fallback: false,
        })
    }

    pub fn primary(&self) -> &BarrierSpec<T> {
        &self.levels[0]
    }

    pub fn secondary(&self) -> Option<&BarrierSpec<T>> {
        self.levels.get(1)
    }
}

/// `h = |phi - c|^2 - (r^2 + zeta)`.
pub fn barrier_value<T: Real>(spec: &BarrierSpec<T>, state: &PlannerState<T>) -> T {
    position_barrier(spec, &state.phi)
}

pub fn position_barrier<T: Real>(spec: &BarrierSpec<T>, phi: &Vector2<T>) -> T {
    (phi - spec.center).norm_squared() - (spec.radius * spec.radius + spec.zeta)
}

/// Affine CBF row `a . u >= b` for the extended barrier of one obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfConstraint<T: Real> {
    pub a: Vector2<T>,
    pub b: T,
    pub h: T,
    pub h_dot: T,
    pub h_ext: T,
}

impl<T: Real> CbfConstraint<T> {
    pub fn new(spec: &BarrierSpec<T>, state: &PlannerState<T>, kappa: T) -> Self {
        let two = T::lit(2.0);
        let d = state.phi - spec.center;
        let h = barrier_value(spec, state);
        let h_dot = two * d.dot(&state.phi_dot);
        let h_ext = h_dot + kappa * h;
        // h_e' = 2|v|^2 + 2 d.u + kappa h'
        let drift = two * state.phi_dot.norm_squared() + kappa * h_dot;
        Self {
            a: d * two,
            b: -spec.alpha_slope * h_ext - drift,
            h,
            h_dot,
            h_ext,
        }
    }

    /// Margin `a . u - b`; non-negative when `u` satisfies the condition.
    pub fn margin(&self, u: &Vector2<T>) -> T {
        self.a.dot(u) - self.b
    }
}

/// Squared-distance margin covering one planning interval of motion.
///
/// Brute force over a `samples x samples` grid of admissible velocities in
/// `[-v_max, v_max]^2`: the largest speed `s` gives `2 r s t + (s t)^2`.
pub fn zeta_margin<T: Real>(radius: T, v_max: T, t_step: T, samples: usize) -> Result<T> {
    if samples < 2 {
        return Err(Error::param("zeta grid needs at least two samples per axis"));
    }
    if radius < T::zero() || v_max < T::zero() || t_step < T::zero() {
        return Err(Error::param("zeta inputs must be non-negative"));
    }
    let n = T::from_usize(samples - 1).expect("sample count fits");
    let mut worst = T::zero();
    for i in 0..samples {
        let vx = -v_max + T::lit(2.0) * v_max * T::from_usize(i).unwrap() / n;
        for j in 0..samples {
            let vy = -v_max + T::lit(2.0) * v_max * T::from_usize(j).unwrap() / n;
            let reach = (vx * vx + vy * vy).sqrt() * t_step;
            let grow = T::lit(2.0) * radius * reach + reach * reach;
            if grow > worst {
                worst = grow;
            }
        }
    }
    Ok(worst)
}

fn box_rows<T: Real>(a_max: T) -> [(Vector2<T>, T); 4] {
    let (o, z) = (T::one(), T::zero());
    [
        (Vector2::new(o, z), -a_max),
        (Vector2::new(-o, z), -a_max),
        (Vector2::new(z, o), -a_max),
        (Vector2::new(z, -o), -a_max),
    ]
}

fn build_qp<T: Real>(h: DMatrix<T>, c: DVector<T>, cbf: Option<&CbfConstraint<T>>, a_max: T) -> Result<QpProblem<T>> {
    let mut rows: Vec<(Vector2<T>, T)> = Vec::with_capacity(5);
    if let Some(k) = cbf {
        rows.push((k.a, k.b));
    }
    rows.extend(box_rows(a_max));
    let a = DMatrix::from_fn(rows.len(), 2, |r, j| rows[r].0[j]);
    let b = DVector::from_fn(rows.len(), |r, _| rows[r].1);
    QpProblem::new(h, c, a, b)
}

fn clamp_box<T: Real>(u: &Vector2<T>, a_max: T) -> Vector2<T> {
    u.map(|c| clamp(c, -a_max, a_max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntermediateResult<T: Real> {
    pub u: Vector2<T>,
    pub feasible: bool,
}

/// Minimizes `|u_des - u|^2` under the secondary barrier and the input box.
///
/// Without a secondary barrier this is the box projection of `u_des`. When
/// the box cannot satisfy the barrier the most compliant box vertex is
/// returned with `feasible = false`.
pub fn intermediate_qp<T: Real>(
    hierarchy: &SafetyHierarchy<T>,
    state: &PlannerState<T>,
    u_des: &Vector2<T>,
) -> Result<IntermediateResult<T>> {
    check_input(u_des)?;
    let a_max = hierarchy.limits.a_max;
    let Some(spec) = hierarchy.secondary() else {
        return Ok(IntermediateResult {
            u: clamp_box(u_des, a_max),
            feasible: true,
        });
    };
    let cbf = CbfConstraint::new(spec, state, hierarchy.limits.kappa);
    let h = DMatrix::identity(2, 2) * T::lit(2.0);
    let c = DVector::from_fn(2, |i, _| -T::lit(2.0) * u_des[i]);
    let sol = solve_qp(&build_qp(h, c, Some(&cbf), a_max)?)?;
    if sol.is_optimal() {
        Ok(IntermediateResult {
            u: Vector2::new(sol.x_star[0], sol.x_star[1]),
            feasible: true,
        })
    } else {
        let u = cbf.a.map(|a| if a >= T::zero() { a_max } else { -a_max });
        Ok(IntermediateResult { u, feasible: false })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchicalResult<T: Real> {
    pub u_star: Vector2<T>,
    /// Secondary relaxation `h_e2'(u*) - h_e2'(u_i)`.
    pub delta: T,
    pub u_intermediate: Vector2<T>,
    /// False when the primary constraint cannot be met inside the input box;
    /// `u_star` is then the emergency braking command.
    pub primary_feasible: bool,
    pub secondary_feasible: bool,
}

/// Hierarchical safety filter.
pub fn hierarchical_qp<T: Real>(
    hierarchy: &SafetyHierarchy<T>,
    state: &PlannerState<T>,
    u_des: &Vector2<T>,
) -> Result<HierarchicalResult<T>> {
    let inter = intermediate_qp(hierarchy, state, u_des)?;
    hierarchical_qp_with(hierarchy, state, u_des, &inter)
}

/// Hierarchical filter given a precomputed intermediate input.
pub fn hierarchical_qp_with<T: Real>(
    hierarchy: &SafetyHierarchy<T>,
    state: &PlannerState<T>,
    u_des: &Vector2<T>,
    inter: &IntermediateResult<T>,
) -> Result<HierarchicalResult<T>> {
    check_input(u_des)?;
    let limits = hierarchy.limits;
    let two = T::lit(2.0);
    let w = hierarchy.relaxation_weight;
    let primary = CbfConstraint::new(hierarchy.primary(), state, limits.kappa);
    let secondary = hierarchy
        .secondary()
        .map(|s| CbfConstraint::new(s, state, limits.kappa));

    // |u_d - u|^2 + W (a2 . (u - u_i))^2  ->  1/2 u' H u + c' u
    let mut h = DMatrix::identity(2, 2) * two;
    let mut c = DVector::from_fn(2, |i, _| -two * u_des[i]);
    if let Some(sec) = &secondary {
        let a2 = sec.a;
        let anchor = a2.dot(&inter.u);
        for i in 0..2 {
            c[i] -= two * w * anchor * a2[i];
            for j in 0..2 {
                h[(i, j)] += two * w * a2[i] * a2[j];
            }
        }
    }
    let sol = solve_qp(&build_qp(h, c, Some(&primary), limits.a_max)?)?;
    if !sol.is_optimal() {
        let brake = clamp_box(&(-state.phi_dot * limits.kappa), limits.a_max);
        return Ok(HierarchicalResult {
            u_star: brake,
            delta: T::zero(),
            u_intermediate: inter.u,
            primary_feasible: false,
            secondary_feasible: inter.feasible,
        });
    }
    let u_star = Vector2::new(sol.x_star[0], sol.x_star[1]);
    let delta = secondary
        .map(|s| s.a.dot(&(u_star - inter.u)))
        .unwrap_or_else(T::zero);
    Ok(HierarchicalResult {
        u_star,
        delta,
        u_intermediate: inter.u,
        primary_feasible: true,
        secondary_feasible: inter.feasible,
    })
}

fn check_input<T: Real>(u: &Vector2<T>) -> Result<()> {
    if u.iter().all(|c| c.is_finite_val()) {
        Ok(())
    } else {
        Err(Error::param("desired acceleration is not finite"))
    }
}

/// Stateful planner: filters the tracker output and integrates the virtual double integrator.
#[derive(Debug, Clone)]
pub struct SafetyPlanner<T: Real> {
    pub hierarchy: Option<SafetyHierarchy<T>>,
    pub limits: PlannerLimits<T>,
    pub state: PlannerState<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerTick<T: Real> {
    pub u_des: Vector2<T>,
    pub u: Vector2<T>,
    pub delta: T,
    pub primary_feasible: bool,
    pub secondary_feasible: bool,
}

impl<T: Real> SafetyPlanner<T> {
    /// `hierarchy = None` runs the tracker unfiltered.
    pub fn new(hierarchy: Option<SafetyHierarchy<T>>, limits: PlannerLimits<T>, state: PlannerState<T>) -> Self {
        Self {
            hierarchy,
            limits,
            state,
        }
    }

    pub fn tick(&mut self, u_des: &Vector2<T>, dt: T) -> Result<PlannerTick<T>> {
        let out = match &self.hierarchy {
            Some(hier) => {
                let r = hierarchical_qp(hier, &self.state, u_des)?;
                PlannerTick {
                    u_des: *u_des,
                    u: r.u_star,
                    delta: r.delta,
                    primary_feasible: r.primary_feasible,
                    secondary_feasible: r.secondary_feasible,
                }
            }
            None => PlannerTick {
                u_des: *u_des,
                u: clamp_box(u_des, self.limits.a_max),
                delta: T::zero(),
                primary_feasible: true,
                secondary_feasible: true,
            },
        };
        self.state = self.state.integrate(&out.u, dt, self.limits.v_max);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(cx: f64, cy: f64) -> BarrierSpec<f64> {
        BarrierSpec::new(Vector2::new(cx, cy), 0.2121, 0.04, 1.0).unwrap()
    }

    fn limits() -> PlannerLimits<f64> {
        PlannerLimits::new(1.0, 0.5, 2.0).unwrap()
    }

    #[test]
    fn barrier_sign_convention() {
        let s = spec(1.0, 0.0);
        let at_center = PlannerState::at_rest(Vector2::new(1.0, 0.0));
        assert!((barrier_value(&s, &at_center) + (0.2121f64.powi(2) + 0.04)).abs() < 1e-15);
        let on_edge = PlannerState::at_rest(Vector2::new(1.0 + s.inflated_radius(), 0.0));
        assert!(barrier_value(&s, &on_edge).abs() < 1e-15);
        let outside = PlannerState::at_rest(Vector2::new(1.5, 0.0));
        // 0.25 - (0.04498641 + 0.04)
        assert!((barrier_value(&s, &outside) - (0.25 - 0.2121f64.powi(2) - 0.04)).abs() < 1e-15);
        assert!((barrier_value(&spec(0.0, 0.0), &PlannerState::at_rest(Vector2::new(0.5, 0.0))) - 0.165).abs() < 1e-3);
    }

    #[test]
    fn zeta_grid_hits_velocity_corner() {
        assert_eq!(zeta_margin(0.2121, 0.0, 0.01, 11).unwrap(), 0.0);
        let z = zeta_margin(0.2121f64, 0.5, 0.01, 41).unwrap();
        let s = 0.5 * 2f64.sqrt() * 0.01;
        assert!((z - (2.0 * 0.2121 * s + s * s)).abs() < 1e-6);
        assert!(zeta_margin(0.2f64, 0.5, 0.01, 1).is_err());
    }

    #[test]
    fn intermediate_keeps_feasible_desired_input() {
        let hier = SafetyHierarchy::new(vec![spec(1.0, -0.4), spec(1.0, 0.4)], vec![0, 1], 10.0, limits()).unwrap();
        let state = PlannerState::at_rest(Vector2::new(0.0, 0.0));
        let u_des = Vector2::new(0.3, -0.1);
        let r = intermediate_qp(&hier, &state, &u_des).unwrap();
        assert!(r.feasible);
        assert!((r.u - u_des).amax() < 1e-12);
    }

    #[test]
    fn intermediate_single_constraint_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lim = PlannerLimits::new(100.0, 0.5, 2.0).unwrap();
        let mut checked = 0;
        while checked < 20 {
            let sec = spec(rng.gen_range(0.5..1.5), rng.gen_range(-0.5..0.5));
            let hier = SafetyHierarchy::new(vec![spec(-5.0, -5.0), sec], vec![0, 1], 10.0, lim).unwrap();
            let state = PlannerState::new(
                Vector2::new(rng.gen_range(-0.5..0.3), rng.gen_range(-0.5..0.5)),
                Vector2::new(rng.gen_range(0.0..0.5), rng.gen_range(-0.2..0.2)),
            );
            let u_des = Vector2::new(rng.gen_range(-1.0..3.0), rng.gen_range(-1.0..1.0));
            let k = CbfConstraint::new(&sec, &state, lim.kappa);
            let viol = k.b - k.a.dot(&u_des);
            if viol <= 0.0 {
                continue;
            }
            let expected = u_des + k.a * (viol / k.a.norm_squared());
            if expected.amax() > 50.0 {
                continue;
            }
            let r = intermediate_qp(&hier, &state, &u_des).unwrap();
            assert!((r.u - expected).amax() < 1e-9);
            checked += 1;
        }
    }

    #[test]
    fn hierarchical_passthrough_when_inactive() {
        let hier = SafetyHierarchy::new(vec![spec(1.0, -0.4), spec(1.0, 0.4)], vec![0, 1], 10.0, limits()).unwrap();
        let state = PlannerState::at_rest(Vector2::new(-1.0, 0.0));
        let u_des = Vector2::new(0.2, 0.0);
        let r = hierarchical_qp(&hier, &state, &u_des).unwrap();
        assert!((r.u_star - u_des).amax() < 1e-12);
        assert!(r.delta.abs() < 1e-12);
    }

    #[test]
    fn zero_weight_is_plain_cbf_qp() {
        let primary = spec(1.0, -0.4);
        let l = limits();
        let two = SafetyHierarchy::new(vec![primary, spec(1.0, 0.4)], vec![0, 1], 0.0, l).unwrap();
        let one = SafetyHierarchy::new(vec![primary], vec![0], 0.0, l).unwrap();
        let state = PlannerState::new(Vector2::new(0.6, 0.05), Vector2::new(0.4, 0.0));
        let u_des = Vector2::new(1.0, -1.0);
        let a = hierarchical_qp(&two, &state, &u_des).unwrap();
        let b = hierarchical_qp(&one, &state, &u_des).unwrap();
        assert!((a.u_star - b.u_star).amax() < 1e-12);
    }

    #[test]
    fn emergency_brake_when_primary_infeasible() {
        // closing fast on the disc: braking needs u_x <= -0.65 but the box allows 0.1
        let hier = SafetyHierarchy::new(vec![spec(1.0, 0.0)], vec![0], 10.0, PlannerLimits::new(0.1, 0.5, 2.0).unwrap()).unwrap();
        let state = PlannerState::new(Vector2::new(0.7, 0.0), Vector2::new(0.5, 0.0));
        let r = hierarchical_qp(&hier, &state, &Vector2::new(0.0, 0.0)).unwrap();
        assert!(!r.primary_feasible);
        assert!(r.u_star[0] < 0.0);
    }

    #[test]
    fn rejects_non_finite_input() {
        let hier = SafetyHierarchy::new(vec![spec(1.0, 0.0)], vec![0], 10.0, limits()).unwrap();
        let state = PlannerState::at_rest(Vector2::new(0.0, 0.0));
        assert!(hierarchical_qp(&hier, &state, &Vector2::new(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn planner_projects_velocity() {
        let s = PlannerState::new(Vector2::new(0.0, 0.0), Vector2::new(0.49, -0.49));
        let n = s.integrate(&Vector2::new(1.0, -1.0), 0.1, 0.5);
        assert_eq!(n.phi_dot, Vector2::new(0.5, -0.5));
    }
}
