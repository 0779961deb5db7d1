//! Interaction force sensing and object mass estimation.
//!
//! The planar interaction force is a blend of the centroidal residual and an
//! impedance-model force at the swing foot. Each admitted sample yields a
//! one-dimensional nonnegative least-squares mass `m = max(0, <f, d>/<d, d>)`
//! with `d = a + mu g v/|v|`; the batch estimate is their mean.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::safety::{BarrierSpec, PlannerLimits, SafetyHierarchy};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationSample<T: Real> {
    pub f_hat: Vector2<T>,
    pub v_obj: Vector2<T>,
    pub a_obj: Vector2<T>,
    pub timestamp: T,
    /// Control ticks elapsed since this contact began.
    pub ticks_since_onset: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceBlend<T: Real> {
    pub gamma: T,
    pub k_p: T,
    pub k_d: T,
    /// Scalar effective task-space inertia [kg].
    pub lambda: T,
}

impl<T: Real> ForceBlend<T> {
    pub fn new(gamma: T, k_p: T, k_d: T, lambda: T) -> Result<Self> {
        if !(gamma >= T::zero() && gamma <= T::one()) {
            return Err(Error::param("blend weight must lie in [0, 1]"));
        }
        Ok(Self { gamma, k_p, k_d, lambda })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassEstimate<T: Real> {
    pub m_star: T,
    pub n_samples: usize,
    pub per_sample: Vec<T>,
}

/// Sample admission thresholds for the impact filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admission<T: Real> {
    /// Samples this close to contact onset are dropped.
    pub onset_ticks: u32,
    /// Drop samples whose force exceeds this multiple of the running median.
    pub spike_factor: T,
    /// Stop after this many admitted samples.
    pub max_samples: usize,
}

impl<T: Real> Default for Admission<T> {
    fn default() -> Self {
        Self {
            onset_ticks: 3,
            spike_factor: T::lit(5.0),
            max_samples: usize::MAX,
        }
    }
}

/// Planar residual of the robot's centroidal dynamics, `M a - f_ground`.
///
/// Gravity has no planar component, so only the horizontal terms remain.
pub fn centroidal_force<T: Real>(com_acc: &Vector2<T>, total_mass: T, f_ground: &Vector2<T>) -> Vector2<T> {
    com_acc * total_mass - f_ground
}

/// `K_p e + K_d e' + lambda e''` with `e = x_desired - x_actual`.
pub fn impedance_force<T: Real>(
    blend: &ForceBlend<T>,
    e: &Vector2<T>,
    e_dot: &Vector2<T>,
    e_ddot: &Vector2<T>,
) -> Vector2<T> {
    e * blend.k_p + e_dot * blend.k_d + e_ddot * blend.lambda
}

pub fn blend_forces<T: Real>(blend: &ForceBlend<T>, f_cm: &Vector2<T>, f_imp: &Vector2<T>) -> Vector2<T> {
    f_cm * blend.gamma + f_imp * (T::one() - blend.gamma)
}

/// Regressor `a + mu g v/|v|`; the friction term vanishes for a resting object.
pub fn regressor<T: Real>(sample: &EstimationSample<T>, mu: T, g: T) -> Vector2<T> {
    let speed = sample.v_obj.norm();
    if speed < T::lit(1e-6) {
        sample.a_obj
    } else {
        sample.a_obj + sample.v_obj * (mu * g / speed)
    }
}

/// `argmin_{m >= 0} |f - m d|^2`, or `None` when `d` is degenerate.
pub fn nnls_1d<T: Real>(f: &Vector2<T>, d: &Vector2<T>) -> Option<T> {
    let dd = d.norm_squared();
    if !(dd > T::lit(1e-12)) {
        return None;
    }
    let m = f.dot(d) / dd;
    Some(if m > T::zero() { m } else { T::zero() })
}

pub fn estimate_mass<T: Real>(samples: &[EstimationSample<T>], mu: T, g: T) -> Result<MassEstimate<T>> {
    estimate_mass_with(samples, mu, g, &Admission::default())
}

pub fn estimate_mass_with<T: Real>(
    samples: &[EstimationSample<T>],
    mu: T,
    g: T,
    rules: &Admission<T>,
) -> Result<MassEstimate<T>> {
    let mut per_sample = Vec::new();
    // sorted magnitudes of past candidates for the running median
    let mut history: Vec<T> = Vec::new();
    for s in samples {
        if per_sample.len() >= rules.max_samples {
            break;
        }
        let finite = [s.f_hat, s.v_obj, s.a_obj].iter().all(|v| v.iter().all(|c| c.is_finite_val()));
        if !finite || s.ticks_since_onset < rules.onset_ticks {
            continue;
        }
        let mag = s.f_hat.norm();
        if !(mag > T::zero()) {
            continue;
        }
        let spike = history.len() >= 5 && mag > rules.spike_factor * history[history.len() / 2];
        let at = history.partition_point(|&x| x < mag);
        history.insert(at, mag);
        if spike {
            continue;
        }
        if let Some(m) = nnls_1d(&s.f_hat, &regressor(s, mu, g)) {
            per_sample.push(m);
        }
    }
    if per_sample.is_empty() {
        return Err(Error::EstimationUnavailable("no admissible interaction samples".into()));
    }
    let n = per_sample.len();
    let sum = per_sample.iter().fold(T::zero(), |a, &b| a + b);
    Ok(MassEstimate {
        m_star: sum / T::from_usize(n).unwrap(),
        n_samples: n,
        per_sample,
    })
}

fn distance_to_segment<T: Real>(p: &Vector2<T>, a: &Vector2<T>, b: &Vector2<T>) -> T {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if !(len2 > T::zero()) {
        return (p - a).norm();
    }
    let mut s = (p - a).dot(&ab) / len2;
    s = if s < T::zero() { T::zero() } else if s > T::one() { T::one() } else { s };
    (p - (a + ab * s)).norm()
}

/// Orders barriers by descending estimated mass.
///
/// `barriers[id]` is the barrier of obstacle `id`. Masses within `1e-9` of
/// each other tie; the obstacle nearer the straight `start -> goal` path
/// then takes priority, and after that the lower id.
pub fn build_hierarchy<T: Real>(
    estimates: &[(usize, MassEstimate<T>)],
    barriers: &[BarrierSpec<T>],
    path: (Vector2<T>, Vector2<T>),
    relaxation_weight: T,
    limits: PlannerLimits<T>,
) -> Result<SafetyHierarchy<T>> {
    if estimates.is_empty() {
        return Err(Error::param("no mass estimates to order"));
    }
    if let Some((id, _)) = estimates.iter().find(|(id, _)| *id >= barriers.len()) {
        return Err(Error::param(format!("no barrier for obstacle {id}")));
    }
    let tie = T::lit(1e-9);
    let mut order: Vec<(usize, T, T)> = estimates
        .iter()
        .map(|(id, m)| (*id, m.m_star, distance_to_segment(&barriers[*id].center, &path.0, &path.1)))
        .collect();
    order.sort_by(|x, y| {
        if (x.1 - y.1).abs() > tie {
            y.1.partial_cmp(&x.1).unwrap()
        } else {
            x.2.partial_cmp(&y.2).unwrap().then(x.0.cmp(&y.0))
        }
    });
    order.truncate(2);
    let ids: Vec<usize> = order.iter().map(|o| o.0).collect();
    SafetyHierarchy::new(ids.iter().map(|&i| barriers[i]).collect(), ids, relaxation_weight, limits)
}

/// Hierarchy from a configured priority order, flagged as a fallback.
pub fn fallback_hierarchy<T: Real>(
    default_order: &[usize],
    barriers: &[BarrierSpec<T>],
    relaxation_weight: T,
    limits: PlannerLimits<T>,
) -> Result<SafetyHierarchy<T>> {
    if default_order.iter().any(|&i| i >= barriers.len()) {
        return Err(Error::param("default order references a missing obstacle"));
    }
    let ids: Vec<usize> = default_order.iter().copied().take(2).collect();
    let mut h = SafetyHierarchy::new(ids.iter().map(|&i| barriers[i]).collect(), ids, relaxation_weight, limits)?;
    h.fallback = true;
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::{solve_qp, QpProblem};
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Uniform};

    fn sample(f: [f64; 2], v: [f64; 2], a: [f64; 2]) -> EstimationSample<f64> {
        EstimationSample {
            f_hat: Vector2::new(f[0], f[1]),
            v_obj: Vector2::new(v[0], v[1]),
            a_obj: Vector2::new(a[0], a[1]),
            timestamp: 0.0,
            ticks_since_onset: 10,
        }
    }

    #[test]
    fn force_models() {
        let f = centroidal_force(&Vector2::new(0.5, 0.0), 33.0, &Vector2::new(10.0, 0.0));
        assert!((f - Vector2::new(6.5, 0.0)).amax() < 1e-12);
        assert_eq!(centroidal_force(&Vector2::zeros(), 33.0, &Vector2::zeros()), Vector2::zeros());
        let b = ForceBlend::new(0.5, 500.0, 40.0, 2.0).unwrap();
        let z = Vector2::zeros();
        assert_eq!(impedance_force(&b, &Vector2::new(0.01, 0.0), &z, &z), Vector2::new(5.0, 0.0));
        assert_eq!(blend_forces(&b, &Vector2::new(4.0, 0.0), &Vector2::new(6.0, 0.0)), Vector2::new(5.0, 0.0));
        let one = ForceBlend::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(blend_forces(&one, &Vector2::new(4.0, 1.0), &Vector2::new(6.0, 0.0)), Vector2::new(4.0, 1.0));
        assert!(ForceBlend::new(1.5, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn exact_ratio_and_clamp() {
        let est = estimate_mass(&[sample([5.0, 0.0], [0.0, 0.0], [1.0, 0.0])], 0.4, 9.81).unwrap();
        assert_eq!(est.m_star, 5.0);
        let est = estimate_mass(&[sample([-5.0, 0.0], [0.0, 0.0], [1.0, 0.0])], 0.4, 9.81).unwrap();
        assert_eq!(est.m_star, 0.0);
    }

    #[test]
    fn friction_term_uses_velocity_direction() {
        // 5 kg sliding at 0.1 m/s while decelerating: f = m (a + mu g)
        let mu_g = 0.4 * 9.81;
        let s = sample([5.0 * (0.2 + mu_g), 0.0], [0.1, 0.0], [0.2, 0.0]);
        let est = estimate_mass(&[s], 0.4, 9.81).unwrap();
        assert!((est.m_star - 5.0).abs() < 1e-12);
    }

    #[test]
    fn impact_and_empty_batches() {
        let mut onset = sample([5.0, 0.0], [0.0, 0.0], [1.0, 0.0]);
        onset.ticks_since_onset = 1;
        assert!(matches!(estimate_mass(&[onset], 0.4, 9.81), Err(Error::EstimationUnavailable(_))));
        assert!(estimate_mass::<f64>(&[], 0.4, 9.81).is_err());

        let mut batch: Vec<_> = (0..10).map(|_| sample([5.0, 0.0], [0.0, 0.0], [1.0, 0.0])).collect();
        batch.push(sample([500.0, 0.0], [0.0, 0.0], [1.0, 0.0]));
        let est = estimate_mass(&batch, 0.4, 9.81).unwrap();
        assert_eq!(est.n_samples, 10);
        assert_eq!(est.m_star, 5.0);
    }

    #[test]
    fn nnls_matches_qp_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = Uniform::new(-10.0, 10.0);
        let mut checked = 0;
        while checked < 100 {
            let f = Vector2::new(u.sample(&mut rng), u.sample(&mut rng));
            let d = Vector2::new(u.sample(&mut rng), u.sample(&mut rng));
            if d.norm() < 0.1 {
                continue;
            }
            let p = QpProblem::new(
                DMatrix::from_element(1, 1, 2.0 * d.norm_squared()),
                DVector::from_element(1, -2.0 * f.dot(&d)),
                DMatrix::from_element(1, 1, 1.0),
                DVector::from_element(1, 0.0),
            )
            .unwrap();
            let qp: f64 = solve_qp(&p).unwrap().x_star[0];
            assert!((nnls_1d(&f, &d).unwrap() - qp).abs() < 1e-10);
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn scale_equivariant(fx in 0.1f64..50.0, fy in -5.0f64..5.0, ax in 0.1f64..2.0, vx in 0.0f64..0.5, c in 0.1f64..10.0) {
            let s = sample([fx, fy], [vx, 0.0], [ax, 0.0]);
            let mut scaled = s;
            scaled.f_hat *= c;
            let m = estimate_mass(&[s], 0.4, 9.81).unwrap().m_star;
            let mc = estimate_mass(&[scaled], 0.4, 9.81).unwrap().m_star;
            prop_assert!((mc - c * m).abs() <= 1e-9 * (1.0 + mc.abs()));
        }
    }

    #[test]
    fn ordering_survives_ten_percent_noise() {
        let mut correct = 0;
        for trial in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let acc = Uniform::new(0.0, 2.0);
            let speed = Uniform::new(0.01, 0.3);
            let unit = Normal::new(0.0, 1.0).unwrap();
            let mut run = |m: f64| {
                let batch: Vec<_> = (0..50)
                    .map(|_| {
                        let s = sample([0.0, 0.0], [speed.sample(&mut rng), 0.0], [acc.sample(&mut rng) - 1.0, 0.0]);
                        let clean = regressor(&s, 0.4, 9.81) * m;
                        let sigma = 0.1 * clean.norm();
                        let noise = Vector2::new(unit.sample(&mut rng), unit.sample(&mut rng)) * sigma;
                        EstimationSample { f_hat: clean + noise, ..s }
                    })
                    .collect();
                estimate_mass(&batch, 0.4, 9.81).unwrap().m_star
            };
            if run(15.0) > run(5.0) {
                correct += 1;
            }
        }
        assert!(correct >= 190, "{correct}/200");
    }

    fn est(m: f64) -> MassEstimate<f64> {
        MassEstimate {
            m_star: m,
            n_samples: 1,
            per_sample: vec![m],
        }
    }

    fn barriers() -> Vec<BarrierSpec<f64>> {
        vec![
            BarrierSpec::new(Vector2::new(1.0, -0.4), 0.4, 0.0, 1.0).unwrap(),
            BarrierSpec::new(Vector2::new(1.0, 0.3), 0.4, 0.0, 1.0).unwrap(),
        ]
    }

    #[test]
    fn hierarchy_ordering() {
        let lim = PlannerLimits::new(1.0, 0.5, 2.0).unwrap();
        let path = (Vector2::new(0.0, 0.0), Vector2::new(3.2, 0.0));
        let h = build_hierarchy(&[(0, est(15.2)), (1, est(4.1))], &barriers(), path, 10.0, lim).unwrap();
        assert_eq!(h.obstacle_ids, vec![0, 1]);
        let swapped = build_hierarchy(&[(1, est(4.1)), (0, est(15.2))], &barriers(), path, 10.0, lim).unwrap();
        assert_eq!(swapped, h);
        let light_first = build_hierarchy(&[(0, est(4.1)), (1, est(15.2))], &barriers(), path, 10.0, lim).unwrap();
        assert_eq!(light_first.obstacle_ids, vec![1, 0]);
        // equal masses: obstacle 1 sits nearer the path
        for _ in 0..3 {
            let tie = build_hierarchy(&[(0, est(5.0)), (1, est(5.0))], &barriers(), path, 10.0, lim).unwrap();
            assert_eq!(tie.obstacle_ids, vec![1, 0]);
        }
        let fb = fallback_hierarchy(&[0, 1], &barriers(), 10.0, lim).unwrap();
        assert!(fb.fallback);
    }
}
