//! Hybrid linear inverted pendulum (H-LIP) reduced-order gait model.
//!
//! The pendulum alternates a single-support phase, `p'' = lambda^2 p`, with a
//! constant-velocity double-support phase. Sampling the state at the end of
//! each single-support phase gives a linear step-to-step (S2S) map driven by
//! the step size. One instance runs per horizontal axis.

use nalgebra::{Matrix2, RowVector2, Vector2};

use crate::error::{Error, Result};
use crate::scalar::{clamp, Real};

/// Pendulum constants. `lambda` is derived from `z0` and `g` on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlipParams<T: Real> {
    pub z0: T,
    pub g: T,
    pub lambda: T,
    pub t_ssp: T,
    pub t_dsp: T,
}

impl<T: Real> HlipParams<T> {
    pub fn new(z0: T, g: T, t_ssp: T, t_dsp: T) -> Result<Self> {
        for (name, v) in [("z0", z0), ("g", g), ("t_ssp", t_ssp), ("t_dsp", t_dsp)] {
            if !v.is_finite_val() {
                return Err(Error::param(format!("{name} is not finite")));
            }
        }
        if z0 <= T::zero() || g <= T::zero() || t_ssp <= T::zero() || t_dsp < T::zero() {
            return Err(Error::param(
                "require z0 > 0, g > 0, t_ssp > 0 and t_dsp >= 0",
            ));
        }
        Ok(Self {
            z0,
            g,
            lambda: (g / z0).sqrt(),
            t_ssp,
            t_dsp,
        })
    }

    /// z0 = 0.8 m, g = 9.81 m/s^2, 0.35 s single support, 0.05 s double support.
    pub fn cassie_scale() -> Self {
        Self::new(T::lit(0.8), T::lit(9.81), T::lit(0.35), T::lit(0.05))
            .expect("default pendulum constants are valid")
    }

    /// Duration of one full step cycle.
    pub fn step_period(&self) -> T {
        self.t_ssp + self.t_dsp
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.z0, self.g, self.lambda, self.t_ssp, self.t_dsp]
            .iter()
            .all(|v| v.is_finite_val());
        if !ok {
            return Err(Error::param("pendulum parameters are not finite"));
        }
        if self.z0 <= T::zero() || self.g <= T::zero() || self.t_ssp <= T::zero() || self.t_dsp < T::zero() {
            return Err(Error::param("pendulum parameters out of range"));
        }
        Ok(())
    }
}

/// Mass position relative to the stance foot and mass velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HlipState<T: Real> {
    pub p: T,
    pub v: T,
}

impl<T: Real> HlipState<T> {
    pub fn new(p: T, v: T) -> Self {
        Self { p, v }
    }

    pub fn to_vector(self) -> Vector2<T> {
        Vector2::new(self.p, self.v)
    }

    pub fn from_vector(x: &Vector2<T>) -> Self {
        Self { p: x[0], v: x[1] }
    }
}

/// Discrete step-to-step pair `x[k+1] = a_h x[k] + b_h u[k]`, output `y = c_h x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S2SMatrices<T: Real> {
    pub a_h: Matrix2<T>,
    pub b_h: Vector2<T>,
    pub c_h: RowVector2<T>,
}

impl<T: Real> S2SMatrices<T> {
    pub fn step(&self, x: &HlipState<T>, u: T) -> HlipState<T> {
        HlipState::from_vector(&(self.a_h * x.to_vector() + self.b_h * u))
    }

    pub fn output(&self, x: &HlipState<T>) -> T {
        (self.c_h * x.to_vector())[0]
    }
}

/// LQR stepping gain together with the weights and Riccati solution that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepGain<T: Real> {
    pub k_step: RowVector2<T>,
    pub q_weight: Matrix2<T>,
    pub r_weight: T,
    pub riccati: Matrix2<T>,
}

/// Closed-form `expm(A_ssp t)` with `A_ssp = [[0, 1], [lambda^2, 0]]`.
pub fn ssp_transition_matrix<T: Real>(params: &HlipParams<T>, t: T) -> Result<Matrix2<T>> {
    params.validate()?;
    if !t.is_finite_val() || t < T::zero() {
        return Err(Error::param("transition time must be finite and non-negative"));
    }
    let lam = params.lambda;
    let (c, s) = ((lam * t).cosh(), (lam * t).sinh());
    Ok(Matrix2::new(c, s / lam, lam * s, c))
}

pub fn build_s2s<T: Real>(params: &HlipParams<T>) -> Result<S2SMatrices<T>> {
    let e = ssp_transition_matrix(params, params.t_ssp)?;
    let dsp = Matrix2::new(T::one(), params.t_dsp, T::zero(), T::one());
    Ok(S2SMatrices {
        a_h: e * dsp,
        b_h: e * Vector2::new(-T::one(), T::zero()),
        c_h: RowVector2::new(T::zero(), T::one()),
    })
}

/// Largest eigenvalue magnitude of a real 2x2 matrix.
pub fn spectral_radius<T: Real>(m: &Matrix2<T>) -> T {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m.determinant();
    let half = tr / T::lit(2.0);
    let disc = half * half - det;
    if disc >= T::zero() {
        let r = disc.sqrt();
        (half + r).abs().max((half - r).abs())
    } else {
        // complex pair: |eig|^2 = det
        det.abs().sqrt()
    }
}

/// Infinite-horizon discrete LQR gain by fixed-point iteration of the Riccati map.
///
/// The returned `k_step` follows the stepping-law convention `u = k_step x`,
/// i.e. it is the negated textbook gain.
pub fn solve_step_gain<T: Real>(s2s: &S2SMatrices<T>, q: Matrix2<T>, r: T) -> Result<StepGain<T>> {
    if !(r > T::zero()) || !r.is_finite_val() {
        return Err(Error::param("control weight r must be positive and finite"));
    }
    if (q - q.transpose()).amax() > T::qp_tol() || q[(0, 0)] < T::zero() || q.determinant() < -T::qp_tol() {
        return Err(Error::param("state weight q must be symmetric positive semidefinite"));
    }
    let a = s2s.a_h;
    let b = s2s.b_h;
    let ctrb = Matrix2::from_columns(&[b, a * b]);
    if ctrb.determinant().abs() <= T::qp_tol() {
        return Err(Error::numerical("step-to-step pair is not controllable"));
    }

    let at = a.transpose();
    let mut p = q;
    let mut converged = false;
    for _ in 0..10_000 {
        let pb = p * b;
        let denom = r + (b.transpose() * pb)[0];
        let k = (pb.transpose() * a) / denom; // row vector (B'PA)/(R+B'PB)
        let next = at * p * a - (at * pb) * k + q;
        let next = (next + next.transpose()) / T::lit(2.0);
        let diff = (next - p).amax();
        p = next;
        if diff < T::riccati_tol() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::numerical("Riccati iteration did not converge in 10000 steps"));
    }

    let pb = p * b;
    let denom = r + (b.transpose() * pb)[0];
    let k_step = -(pb.transpose() * a) / denom;
    let closed = a + b * k_step;
    if spectral_radius(&closed) >= T::one() {
        return Err(Error::numerical("LQR closed loop is not Schur stable"));
    }
    Ok(StepGain {
        k_step,
        q_weight: q,
        r_weight: r,
        riccati: p,
    })
}

/// Max-norm residual of the discrete algebraic Riccati equation at `p`.
pub fn dare_residual<T: Real>(s2s: &S2SMatrices<T>, q: &Matrix2<T>, r: T, p: &Matrix2<T>) -> T {
    let a = s2s.a_h;
    let b = s2s.b_h;
    let pb = p * b;
    let denom = r + (b.transpose() * pb)[0];
    let res = p - a.transpose() * p * a + (a.transpose() * pb) * (pb.transpose() * a) / denom - q;
    res.amax()
}

/// Period-1 orbit with average forward speed `v_des`.
///
/// Returns the pre-impact fixed point `x*` and step length `u* = v_des * (t_ssp + t_dsp)`
/// with `x* = a_h x* + b_h u*`.
pub fn orbit_target<T: Real>(params: &HlipParams<T>, v_des: T) -> Result<(HlipState<T>, T)> {
    if !v_des.is_finite_val() {
        return Err(Error::param("desired velocity is not finite"));
    }
    let s2s = build_s2s(params)?;
    orbit_target_with(&s2s, params.step_period(), v_des)
}

/// Same as [`orbit_target`] with a prebuilt S2S pair.
pub fn orbit_target_with<T: Real>(s2s: &S2SMatrices<T>, period: T, v_des: T) -> Result<(HlipState<T>, T)> {
    let u = v_des * period;
    let m = Matrix2::identity() - s2s.a_h;
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::numerical("orbit fixed-point system is singular"))?;
    Ok((HlipState::from_vector(&(inv * s2s.b_h * u)), u))
}

/// `u = u_orbit + k_step (x_robot - x_orbit)`, saturated to `[-u_max, u_max]`.
pub fn stepping_controller<T: Real>(
    gain: &StepGain<T>,
    x_robot: &HlipState<T>,
    x_orbit: &HlipState<T>,
    u_orbit: T,
    u_max: T,
) -> T {
    let err = x_robot.to_vector() - x_orbit.to_vector();
    let u = u_orbit + (gain.k_step * err)[0];
    clamp(u, -u_max, u_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series_expm(lam: f64, t: f64, terms: usize) -> Matrix2<f64> {
        let a = Matrix2::new(0.0, 1.0, lam * lam, 0.0) * t;
        let mut term = Matrix2::identity();
        let mut sum = Matrix2::identity();
        for k in 1..terms {
            term = term * a / k as f64;
            sum += term;
        }
        sum
    }

    fn params_with_lambda(lam: f64) -> HlipParams<f64> {
        HlipParams::new(9.81 / (lam * lam), 9.81, 0.35, 0.05).unwrap()
    }

    #[test]
    fn lambda_consistent_with_height() {
        let p = HlipParams::<f64>::cassie_scale();
        assert!((p.lambda * p.lambda * p.z0 - p.g).abs() / p.g < 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(HlipParams::new(0.0, 9.81, 0.3, 0.1).is_err());
        assert!(HlipParams::new(0.8, 9.81, 0.3, -0.1).is_err());
        assert!(HlipParams::new(f64::NAN, 9.81, 0.3, 0.1).is_err());
        let mut p = HlipParams::<f64>::cassie_scale();
        p.lambda = f64::INFINITY;
        assert!(ssp_transition_matrix(&p, 0.1).is_err());
        assert!(ssp_transition_matrix(&HlipParams::<f64>::cassie_scale(), -0.1).is_err());
    }

    #[test]
    fn transition_at_zero_is_identity() {
        let p = HlipParams::<f64>::cassie_scale();
        assert_eq!(ssp_transition_matrix(&p, 0.0).unwrap(), Matrix2::identity());
    }

    #[test]
    fn transition_matches_series() {
        let p = params_with_lambda(3.5);
        let closed = ssp_transition_matrix(&p, 0.4).unwrap();
        let series = series_expm(3.5, 0.4, 30);
        assert!((closed - series).amax() < 1e-12);
        assert_abs_diff_eq!(closed.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_dsp_reduces_to_lip() {
        let p = HlipParams::new(0.8, 9.81, 0.35, 0.0).unwrap();
        let s2s = build_s2s(&p).unwrap();
        assert_eq!(s2s.a_h, ssp_transition_matrix(&p, 0.35).unwrap());
    }

    #[test]
    fn b_is_negated_first_column() {
        let p = HlipParams::<f64>::cassie_scale();
        let s2s = build_s2s(&p).unwrap();
        let e = ssp_transition_matrix(&p, p.t_ssp).unwrap();
        assert_eq!(s2s.b_h, -e.column(0));
    }

    #[test]
    fn s2s_matches_series_product() {
        let p = HlipParams::<f64>::cassie_scale();
        let s2s = build_s2s(&p).unwrap();
        let e = series_expm(p.lambda, 0.35, 30);
        let a = e * Matrix2::new(1.0, 0.05, 0.0, 1.0);
        let b = e * Vector2::new(-1.0, 0.0);
        assert!((s2s.a_h - a).amax() < 1e-12);
        assert!((s2s.b_h - b).amax() < 1e-12);
    }

    #[test]
    fn lqr_gain_stabilizes_and_solves_dare() {
        let p = HlipParams::<f64>::cassie_scale();
        let s2s = build_s2s(&p).unwrap();
        let gain = solve_step_gain(&s2s, Matrix2::identity(), 1.0).unwrap();
        assert!(dare_residual(&s2s, &gain.q_weight, 1.0, &gain.riccati) < 1e-9);
        assert!(spectral_radius(&(s2s.a_h + s2s.b_h * gain.k_step)) < 1.0);
    }

    #[test]
    fn lqr_gain_invariant_to_cost_scaling() {
        let s2s = build_s2s(&HlipParams::<f64>::cassie_scale()).unwrap();
        let g1 = solve_step_gain(&s2s, Matrix2::identity(), 1.0).unwrap();
        let g10 = solve_step_gain(&s2s, Matrix2::identity() * 10.0, 10.0).unwrap();
        assert!((g1.k_step - g10.k_step).amax() < 1e-9);
    }

    #[test]
    fn lqr_rejects_bad_weights() {
        let s2s = build_s2s(&HlipParams::<f64>::cassie_scale()).unwrap();
        assert!(solve_step_gain(&s2s, Matrix2::identity(), 0.0).is_err());
        assert!(solve_step_gain(&s2s, Matrix2::new(1.0, 2.0, 0.0, 1.0), 1.0).is_err());
    }

    #[test]
    fn rest_orbit_is_zero() {
        let p = HlipParams::<f64>::cassie_scale();
        let (x, u) = orbit_target(&p, 0.0).unwrap();
        assert_eq!(u, 0.0);
        assert_eq!(x, HlipState::new(0.0, 0.0));
    }

    #[test]
    fn orbit_is_fixed_point() {
        let p = HlipParams::<f64>::cassie_scale();
        let s2s = build_s2s(&p).unwrap();
        for v in [-0.5, -0.1, 0.3, 0.45] {
            let (x, u) = orbit_target(&p, v).unwrap();
            let res = x.to_vector() - s2s.a_h * x.to_vector() - s2s.b_h * u;
            assert!(res.amax() < 1e-10);
        }
        let (_, u) = orbit_target(&p, 0.3).unwrap();
        assert_abs_diff_eq!(u, 0.12, epsilon = 1e-15);
    }

    #[test]
    fn stepping_controller_linearity() {
        let p = HlipParams::<f64>::cassie_scale();
        let s2s = build_s2s(&p).unwrap();
        let gain = solve_step_gain(&s2s, Matrix2::identity(), 1.0).unwrap();
        let (xo, uo) = orbit_target(&p, 0.2).unwrap();
        assert_eq!(stepping_controller(&gain, &xo, &xo, uo, 0.4), uo);
        let xr = HlipState::new(xo.p + 0.05, xo.v);
        let u = stepping_controller(&gain, &xr, &xo, uo, 10.0);
        assert_abs_diff_eq!(u, uo + 0.05 * gain.k_step[0], epsilon = 1e-15);
        let big = HlipState::new(xo.p + 5.0, xo.v);
        assert_eq!(stepping_controller(&gain, &big, &xo, uo, 0.4).abs(), 0.4);
    }

    #[test]
    fn closed_loop_converges_to_orbit() {
        let p = HlipParams::<f64>::cassie_scale();
        let s2s = build_s2s(&p).unwrap();
        let gain = solve_step_gain(&s2s, Matrix2::identity(), 1.0).unwrap();
        let rho = spectral_radius(&(s2s.a_h + s2s.b_h * gain.k_step));
        let (xo, uo) = orbit_target(&p, 0.3).unwrap();
        let mut x = HlipState::new(xo.p + 0.03, xo.v - 0.1);
        for _ in 0..20 {
            let u = stepping_controller(&gain, &x, &xo, uo, f64::INFINITY);
            x = s2s.step(&x, u);
        }
        let err = (x.to_vector() - xo.to_vector()).norm();
        assert!(err < 1e-6, "error after 20 steps {err}, rho {rho}");
    }

    #[test]
    fn works_in_single_precision() {
        let p = HlipParams::<f32>::cassie_scale();
        let s2s = build_s2s(&p).unwrap();
        let gain = solve_step_gain(&s2s, Matrix2::identity(), 1.0).unwrap();
        assert!(spectral_radius(&(s2s.a_h + s2s.b_h * gain.k_step)) < 1.0);
    }
}
