//! Nominal reference: clamped cubic spline through waypoints and a PD tracker.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::scalar::{clamp, Real};

/// Planar cubic spline with zero end velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline<T: Real> {
    times: Vec<T>,
    points: Vec<Vector2<T>>,
    // second derivatives at the knots
    curv: Vec<Vector2<T>>,
}

impl<T: Real> CubicSpline<T> {
    pub fn new(times: Vec<T>, points: Vec<Vector2<T>>) -> Result<Self> {
        if times.len() < 2 || times.len() != points.len() {
            return Err(Error::param("spline needs matching times and points, at least two"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("spline times must increase strictly"));
        }
        let n = times.len();
        let six = T::lit(6.0);
        let two = T::lit(2.0);
        let h: Vec<T> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let slope = |i: usize| (points[i + 1] - points[i]) / h[i];

        // tridiagonal system with clamped (zero slope) ends
        let mut sub = vec![T::zero(); n];
        let mut diag = vec![T::zero(); n];
        let mut sup = vec![T::zero(); n];
        let mut rhs = vec![Vector2::zeros(); n];
        diag[0] = two * h[0];
        sup[0] = h[0];
        rhs[0] = slope(0) * six;
        for i in 1..n - 1 {
            sub[i] = h[i - 1];
            diag[i] = two * (h[i - 1] + h[i]);
            sup[i] = h[i];
            rhs[i] = (slope(i) - slope(i - 1)) * six;
        }
        sub[n - 1] = h[n - 2];
        diag[n - 1] = two * h[n - 2];
        rhs[n - 1] = -slope(n - 2) * six;

        for i in 1..n {
            let m = sub[i] / diag[i - 1];
            diag[i] -= m * sup[i - 1];
            let prev = rhs[i - 1];
            rhs[i] -= prev * m;
        }
        let mut curv = vec![Vector2::zeros(); n];
        curv[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            curv[i] = (rhs[i] - curv[i + 1] * sup[i]) / diag[i];
        }
        Ok(Self { times, points, curv })
    }

    /// Straight start-to-goal spline with knots spaced by distance over `duration`.
    pub fn through(waypoints: &[Vector2<T>], duration: T) -> Result<Self> {
        if waypoints.len() < 2 || !(duration > T::zero()) {
            return Err(Error::param("need two waypoints and a positive duration"));
        }
        let lengths: Vec<T> = waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        let total = lengths.iter().fold(T::zero(), |a, &b| a + b);
        if !(total > T::zero()) {
            return Err(Error::param("waypoints coincide"));
        }
        let mut times = vec![T::zero()];
        let mut acc = T::zero();
        for l in lengths {
            acc += l;
            times.push(duration * acc / total);
        }
        Self::new(times, waypoints.to_vec())
    }

    pub fn duration(&self) -> T {
        *self.times.last().unwrap() - self.times[0]
    }

    /// Position and velocity at `t`, held at the end points outside the knot range.
    pub fn eval(&self, t: T) -> (Vector2<T>, Vector2<T>) {
        let n = self.times.len();
        if t <= self.times[0] {
            return (self.points[0], Vector2::zeros());
        }
        if t >= self.times[n - 1] {
            return (self.points[n - 1], Vector2::zeros());
        }
        let i = match self.times.iter().position(|&k| k > t) {
            Some(j) => j - 1,
            None => n - 2,
        };
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let (a, b) = (t1 - t, t - t0);
        let (m0, m1) = (self.curv[i], self.curv[i + 1]);
        let six = T::lit(6.0);
        let c0 = self.points[i] / h - m0 * (h / six);
        let c1 = self.points[i + 1] / h - m1 * (h / six);
        let pos = m0 * (a * a * a / (six * h)) + m1 * (b * b * b / (six * h)) + c0 * a + c1 * b;
        let two = T::lit(2.0);
        let vel = -m0 * (a * a / (two * h)) + m1 * (b * b / (two * h)) - c0 + c1;
        (pos, vel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerGains<T: Real> {
    pub kp: T,
    pub kd: T,
}

/// PD acceleration toward a reference point, clamped to the input box.
pub fn reference_tracker<T: Real>(
    gains: &TrackerGains<T>,
    reference: &(Vector2<T>, Vector2<T>),
    phi: &Vector2<T>,
    phi_dot: &Vector2<T>,
    a_max: T,
) -> Vector2<T> {
    let u = (reference.0 - phi) * gains.kp + (reference.1 - phi_dot) * gains.kd;
    u.map(|c| clamp(c, -a_max, a_max))
}
