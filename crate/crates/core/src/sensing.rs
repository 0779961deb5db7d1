//! Synthetic interaction-force sensing and the mass probe experiment.
//!
//! The simulator knows the true contact force. The robot only sees two
//! imperfect estimates of it: a centroidal residual built from a biased
//! nominal ground force, and an impedance-model force computed with gains
//! that differ from the swing leg's true closed-loop impedance. Their blend
//! is what the estimator consumes.

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::estimation::{blend_forces, impedance_force, EstimationSample, ForceBlend};
use crate::world::{integrate_box, BoxBody};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingParams {
    pub blend: ForceBlend<f64>,
    /// True leg impedance is the nominal one scaled by this factor.
    pub impedance_mismatch: f64,
    /// Relative bias of the centroidal residual.
    pub centroidal_bias: f64,
    /// Standard deviation of additive force noise per axis [N].
    pub force_noise: f64,
    /// Swing-foot mass behind the impact spike at contact onset [kg].
    pub foot_mass: f64,
}

impl Default for SensingParams {
    fn default() -> Self {
        Self {
            blend: ForceBlend {
                gamma: 0.5,
                k_p: 500.0,
                k_d: 45.0,
                lambda: 2.0,
            },
            impedance_mismatch: 1.2,
            centroidal_bias: 0.1,
            force_noise: 1.0,
            foot_mass: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceReading {
    pub f_hat: Vector2<f64>,
    pub f_cm: Vector2<f64>,
    pub f_imp: Vector2<f64>,
}

/// Stateful sensor: tracks the swing-leg deflection under the true force.
#[derive(Debug, Clone)]
pub struct ForceSensor {
    params: SensingParams,
    noise: Normal<f64>,
    rng: ChaCha8Rng,
    e: Vector2<f64>,
    e_dot: Vector2<f64>,
}

impl ForceSensor {
    pub fn new(params: SensingParams, seed: u64, stream: u64) -> Result<Self> {
        if !(params.force_noise >= 0.0) || !(params.impedance_mismatch > 0.0) {
            return Err(Error::param("sensing noise must be >= 0 and impedance mismatch > 0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self {
            params,
            noise: Normal::new(0.0, params.force_noise).map_err(|e| Error::param(e.to_string()))?,
            rng,
            e: Vector2::zeros(),
            e_dot: Vector2::zeros(),
        })
    }

    fn noise_vec(&mut self) -> Vector2<f64> {
        Vector2::new(self.noise.sample(&mut self.rng), self.noise.sample(&mut self.rng))
    }

    /// One sensing tick. `impact` is the foot velocity stopped by a new contact, if any.
    pub fn measure(&mut self, f_true: &Vector2<f64>, impact: Option<Vector2<f64>>, dt: f64) -> ForceReading {
        let p = self.params;
        let b = &p.blend;
        let s = p.impedance_mismatch;
        // true swing-leg impedance driven by the contact force
        let e_ddot = (f_true - self.e * (b.k_p * s) - self.e_dot * (b.k_d * s)) / (b.lambda * s);
        self.e_dot += e_ddot * dt;
        self.e += self.e_dot * dt;
        let f_imp = impedance_force(b, &self.e, &self.e_dot, &e_ddot) + self.noise_vec();

        let mut f_cm = f_true * (1.0 + p.centroidal_bias) + self.noise_vec();
        if let Some(v) = impact {
            f_cm += v * (p.foot_mass / dt);
        }
        ForceReading {
            f_hat: blend_forces(b, &f_cm, &f_imp),
            f_cm,
            f_imp,
        }
    }
}

/// Kick experiment used to gather estimation samples for one box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    /// Peak force of one half-sine kick [N].
    pub peak_force: f64,
    pub kick_duration: f64,
    /// Sensing period during the probe [s].
    pub dt: f64,
    /// Foot speed when it meets the box [m/s].
    pub approach_speed: f64,
    pub max_kicks: usize,
    pub g: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            peak_force: 100.0,
            kick_duration: 0.4,
            dt: 0.001,
            approach_speed: 0.5,
            max_kicks: 200,
            g: 9.81,
        }
    }
}

/// Kicks a copy of `body` along `direction` until `target` samples are recorded.
///
/// Samples are logged only while the foot pushes a box that is sliding at
/// both ends of the tick; impact and stationary phases still produce
/// readings but are left to the estimator's admission filter when they slip
/// through.
pub fn run_probe(
    body: &BoxBody,
    direction: Vector2<f64>,
    probe: &ProbeConfig,
    sensor: &mut ForceSensor,
    target: usize,
) -> Result<Vec<EstimationSample<f64>>> {
    if !(probe.peak_force > 0.0 && probe.kick_duration > 0.0 && probe.dt > 0.0) {
        return Err(Error::param("probe force, duration and period must be positive"));
    }
    let dir = direction
        .try_normalize(1e-12)
        .ok_or_else(|| Error::param("probe direction is zero"))?;
    let mut b = *body;
    b.velocity = Vector2::zeros();
    let ticks = (probe.kick_duration / probe.dt).round() as usize;
    let mut samples = Vec::new();
    let mut time = 0.0;
    for _ in 0..probe.max_kicks {
        for i in 0..ticks {
            let tau = (i as f64 + 0.5) * probe.dt / probe.kick_duration;
            let f_true = dir * (probe.peak_force * (std::f64::consts::PI * tau).sin());
            let v0 = b.velocity;
            integrate_box(&mut b, &f_true, probe.dt, probe.g);
            let v1 = b.velocity;
            let impact = (i == 0).then(|| dir * probe.approach_speed);
            let reading = sensor.measure(&f_true, impact, probe.dt);
            time += probe.dt;
            if v0.norm() > 1e-6 && v1.norm() > 1e-6 {
                samples.push(EstimationSample {
                    f_hat: reading.f_hat,
                    v_obj: (v0 + v1) * 0.5,
                    a_obj: (v1 - v0) / probe.dt,
                    timestamp: time,
                    ticks_since_onset: i as u32,
                });
            }
            if samples.len() >= target {
                return Ok(samples);
            }
        }
        // let the box coast to rest before the next kick
        let mut coast = 0;
        while b.velocity.norm() > 0.0 && coast < 100_000 {
            integrate_box(&mut b, &Vector2::zeros(), probe.dt, probe.g);
            sensor.measure(&Vector2::zeros(), None, probe.dt);
            time += probe.dt;
            coast += 1;
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::estimate_mass;

    fn quiet() -> SensingParams {
        SensingParams {
            force_noise: 0.0,
            ..SensingParams::default()
        }
    }

    #[test]
    fn free_swing_settles() {
        let mut s = ForceSensor::new(SensingParams::default(), 3, 0).unwrap();
        let mut last = Vector2::zeros();
        for _ in 0..200 {
            last = s.measure(&Vector2::zeros(), None, 0.01).f_imp;
        }
        // only the noise floor remains
        assert!(last.norm() < 5.0);
        let mut q = ForceSensor::new(quiet(), 3, 0).unwrap();
        q.measure(&Vector2::new(20.0, 0.0), None, 0.01);
        for _ in 0..300 {
            last = q.measure(&Vector2::zeros(), None, 0.01).f_imp;
        }
        assert!(last.norm() < 1.0);
    }

    #[test]
    fn steady_push_reads_close_to_truth() {
        let mut s = ForceSensor::new(quiet(), 3, 0).unwrap();
        let f = Vector2::new(30.0, 0.0);
        let mut r = s.measure(&f, None, 0.001);
        for _ in 0..3000 {
            r = s.measure(&f, None, 0.001);
        }
        assert!((r.f_cm[0] - 33.0).abs() < 1e-9);
        assert!((r.f_imp[0] - 30.0 / 1.2).abs() < 1e-3);
        assert!((r.f_hat[0] - 0.5 * (33.0 + 25.0)).abs() < 1e-3);
    }

    #[test]
    fn probe_orders_boxes() {
        let heavy = BoxBody::new(Vector2::new(1.0, -0.4), 0.15, 15.0, 0.4).unwrap();
        let light = BoxBody::new(Vector2::new(1.0, 0.4), 0.15, 5.0, 0.4).unwrap();
        let probe = ProbeConfig::default();
        let mut s = ForceSensor::new(SensingParams::default(), 9, 1).unwrap();
        let hs = run_probe(&heavy, Vector2::new(1.0, 0.0), &probe, &mut s, 1000).unwrap();
        let ls = run_probe(&light, Vector2::new(1.0, 0.0), &probe, &mut s, 1000).unwrap();
        assert_eq!(hs.len(), 1000);
        let mh = estimate_mass(&hs, 0.4, 9.81).unwrap().m_star;
        let ml = estimate_mass(&ls, 0.4, 9.81).unwrap().m_star;
        assert!(mh > ml, "{mh} {ml}");
        assert!(mh > 7.5 && mh < 30.0 && ml > 2.5 && ml < 10.0, "{mh} {ml}");
    }
}
