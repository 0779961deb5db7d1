//! Disturbance observer on the step-to-step channel.
//!
//! The nominal plant is `P_n(z) = C (zI - A)^-1 B` from step size to
//! pre-impact velocity. Input disturbances are estimated as
//! `Q (P_n^-1 y - u)`, where only the proper composition `Q P_n^-1` is ever
//! realized. The returned offset is the negated estimate and is added to the
//! next commanded step.

use nalgebra::{Matrix2, RowVector2, Vector2};

use crate::error::{Error, Result};
use crate::hlip::S2SMatrices;
use crate::scalar::{clamp, Real};

/// First-order low-pass `Q(z) = (1 - beta) / (z - beta)` with unit DC gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QFilter<T: Real> {
    pub beta: T,
    pub state: T,
}

impl<T: Real> QFilter<T> {
    pub fn new(beta: T) -> Result<Self> {
        if !beta.is_finite_val() || beta < T::zero() || beta >= T::one() {
            return Err(Error::param("Q-filter pole must lie in [0, 1)"));
        }
        Ok(Self {
            beta,
            state: T::zero(),
        })
    }

    /// Emits the current output and absorbs `x` (one-sample delay).
    pub fn filter(&mut self, x: T) -> T {
        let out = self.state;
        self.state = self.beta * self.state + (T::one() - self.beta) * x;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalPlant<T: Real> {
    pub a_h: Matrix2<T>,
    pub b_h: Vector2<T>,
    pub c_h: RowVector2<T>,
}

impl<T: Real> NominalPlant<T> {
    pub fn new(s2s: &S2SMatrices<T>) -> Result<Self> {
        let plant = Self {
            a_h: s2s.a_h,
            b_h: s2s.b_h,
            c_h: s2s.c_h,
        };
        let cb = (plant.c_h * plant.b_h)[0];
        if cb.abs() <= T::qp_tol() {
            return Err(Error::param("nominal plant must have relative degree one"));
        }
        Ok(plant)
    }
}

/// Coefficients of `P_n(z)` in descending powers of `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferCoeffs<T: Real> {
    /// `[n1, n0]` for `n1 z + n0`.
    pub numerator: [T; 2],
    /// `[1, d1, d0]` for `z^2 + d1 z + d0`.
    pub denominator: [T; 3],
}

pub fn nominal_transfer_coeffs<T: Real>(plant: &NominalPlant<T>) -> TransferCoeffs<T> {
    let a = &plant.a_h;
    let (b1, b2) = (plant.b_h[0], plant.b_h[1]);
    let (c1, c2) = (plant.c_h[0], plant.c_h[1]);
    // C adj(zI - A) B with adj = [[z - a22, a12], [a21, z - a11]]
    let n1 = c1 * b1 + c2 * b2;
    let n0 = c1 * (a[(0, 1)] * b2 - a[(1, 1)] * b1) + c2 * (a[(1, 0)] * b1 - a[(0, 0)] * b2);
    TransferCoeffs {
        numerator: [n1, n0],
        denominator: [T::one(), -a.trace(), a.determinant()],
    }
}

/// Per-axis observer memory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DobState<T: Real> {
    /// Q-filtered input history `u^Q`.
    pub u_prev_filtered: T,
    /// Transposed direct-form state of the composed filter `Q P_n^-1`.
    pub inverse_plant_state: Vector2<T>,
    pub correction: T,
}

/// Biquad coefficients of `Q P_n^-1`, normalized so the leading denominator term is one.
fn composed_filter<T: Real>(q: &QFilter<T>, plant: &NominalPlant<T>) -> Result<([T; 3], [T; 2])> {
    let tf = nominal_transfer_coeffs(plant);
    let [n1, n0] = tf.numerator;
    let zero = n0 / n1;
    if zero.abs() >= T::one() {
        return Err(Error::numerical(
            "nominal plant zero outside the unit disc; Q P_n^-1 would be unstable",
        ));
    }
    let beta = q.beta;
    let gain = (T::one() - beta) / n1;
    let num = [gain, gain * tf.denominator[1], gain * tf.denominator[2]];
    // (z - beta)(z + zero)
    let den = [zero - beta, -beta * zero];
    Ok((num, den))
}

/// One observer update at a step event.
///
/// `u_prev` is the step applied at the previous event and `y_latest` the
/// pre-impact velocity it produced. Returns the offset `u^Q - Q P_n^-1 y`
/// (the negated disturbance estimate) and the advanced state.
pub fn dob_correction<T: Real>(
    dob: &DobState<T>,
    q: &QFilter<T>,
    plant: &NominalPlant<T>,
    u_prev: T,
    y_latest: T,
) -> Result<(T, DobState<T>)> {
    if !u_prev.is_finite_val() || !y_latest.is_finite_val() {
        return Err(Error::numerical("observer input is not finite"));
    }
    let (num, den) = composed_filter(q, plant)?;
    let s = dob.inverse_plant_state;
    let r = num[0] * y_latest + s[0];
    let next_s = Vector2::new(
        num[1] * y_latest - den[0] * r + s[1],
        num[2] * y_latest - den[1] * r,
    );
    let uq = q.beta * dob.u_prev_filtered + (T::one() - q.beta) * u_prev;
    let offset = uq - r;
    if !offset.is_finite_val() {
        return Err(Error::numerical("observer diverged"));
    }
    Ok((
        offset,
        DobState {
            u_prev_filtered: uq,
            inverse_plant_state: next_s,
            correction: offset,
        },
    ))
}

pub fn apply_dob<T: Real>(u_nominal: T, offset: T, u_max: T) -> T {
    clamp(u_nominal + offset, -u_max, u_max)
}

/// Observer bundle owned by one simulation axis.
#[derive(Debug, Clone, Copy)]
pub struct DisturbanceObserver<T: Real> {
    pub q: QFilter<T>,
    pub plant: NominalPlant<T>,
    pub state: DobState<T>,
}

impl<T: Real> DisturbanceObserver<T> {
    pub fn new(s2s: &S2SMatrices<T>, beta: T) -> Result<Self> {
        let q = QFilter::new(beta)?;
        let plant = NominalPlant::new(s2s)?;
        composed_filter(&q, &plant)?;
        Ok(Self {
            q,
            plant,
            state: DobState::default(),
        })
    }

    pub fn update(&mut self, u_prev: T, y_latest: T) -> Result<T> {
        let (offset, next) = dob_correction(&self.state, &self.q, &self.plant, u_prev, y_latest)?;
        self.state = next;
        Ok(offset)
    }
}
