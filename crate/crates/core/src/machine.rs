//! Fourth-order (two-axis transient) synchronous machine model.
//!
//! State ordering is `[delta, domega, eq_p, ed_p]` and input ordering is
//! `[T_m, E_fd, i_R, i_I]` everywhere in the crate. Terminal currents are
//! treated as known inputs, so the model is decentralized: the network is
//! never solved inside the filter.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DynamicModel, MeasJacobian, MeasVec, StateCov, StateVec};

/// Physical constants of the machine, per unit on machine base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MachineParams {
    /// Inertia constant (s).
    pub h: f64,
    /// Damping factor (pu torque / pu speed). Negative values stand in for
    /// the negative damping torque of a fast exciter without stabilizer.
    pub k_d: f64,
    /// Synchronous speed (rad/s).
    pub omega0: f64,
    pub x_d: f64,
    pub x_q: f64,
    pub xp_d: f64,
    pub xp_q: f64,
    /// d-axis open-circuit transient time constant (s).
    pub tp_d0: f64,
    /// q-axis open-circuit transient time constant (s).
    pub tp_q0: f64,
}

impl Default for MachineParams {
    /// Generator G1 of the classic two-area benchmark (machine base, 60 Hz).
    fn default() -> Self {
        Self {
            h: 6.5,
            k_d: 0.0,
            omega0: 2.0 * PI * 60.0,
            x_d: 1.8,
            x_q: 1.7,
            xp_d: 0.3,
            xp_q: 0.55,
            tp_d0: 8.0,
            tp_q0: 0.4,
        }
    }
}

impl MachineParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.h, self.k_d, self.omega0, self.x_d, self.x_q, self.xp_d, self.xp_q, self.tp_d0,
            self.tp_q0,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("machine parameters must be finite".into()));
        }
        if self.h <= 0.0 || self.tp_d0 <= 0.0 || self.tp_q0 <= 0.0 || self.omega0 <= 0.0 {
            return Err(Error::Config(
                "H, T'd0, T'q0 and omega0 must be strictly positive".into(),
            ));
        }
        if !(self.x_d >= self.xp_d && self.xp_d > 0.0) || !(self.x_q >= self.xp_q && self.xp_q > 0.0) {
            return Err(Error::Config("reactances must satisfy x_d >= x'_d > 0 and x_q >= x'_q > 0".into()));
        }
        Ok(())
    }
}

/// Machine dynamic state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    /// Rotor angle (rad), never wrapped.
    pub delta: f64,
    /// Rotor speed deviation (pu).
    pub domega: f64,
    /// q-axis transient voltage (pu).
    pub eq_p: f64,
    /// d-axis transient voltage (pu).
    pub ed_p: f64,
}

impl StateVector {
    pub const NAMES: [&'static str; 4] = ["delta", "domega", "eq_p", "ed_p"];

    pub fn new(delta: f64, domega: f64, eq_p: f64, ed_p: f64) -> Self {
        Self { delta, domega, eq_p, ed_p }
    }

    pub fn to_vector(&self) -> StateVec {
        Vector4::new(self.delta, self.domega, self.eq_p, self.ed_p)
    }

    pub fn from_vector(v: &StateVec) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Known inputs: mechanical torque, field voltage, terminal current phasor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InputVector {
    pub t_m: f64,
    pub e_fd: f64,
    pub i_r: f64,
    pub i_i: f64,
}

impl InputVector {
    pub fn new(t_m: f64, e_fd: f64, i_r: f64, i_i: f64) -> Self {
        Self { t_m, e_fd, i_r, i_i }
    }

    pub fn is_finite(&self) -> bool {
        [self.t_m, self.e_fd, self.i_r, self.i_i].iter().all(|v| v.is_finite())
    }
}

/// Terminal voltage phasor in the network frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub e_r: f64,
    pub e_i: f64,
}

impl MeasurementVector {
    pub fn new(e_r: f64, e_i: f64) -> Self {
        Self { e_r, e_i }
    }

    pub fn to_vector(&self) -> MeasVec {
        Vector2::new(self.e_r, self.e_i)
    }

    pub fn from_vector(v: &MeasVec) -> Self {
        Self::new(v[0], v[1])
    }

    pub fn is_finite(&self) -> bool {
        self.e_r.is_finite() && self.e_i.is_finite()
    }
}

/// A quantity resolved on the rotor d and q axes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DqPair {
    pub d: f64,
    pub q: f64,
}

/// Rotates a network-frame phasor `(re, im)` into the rotor frame.
pub fn to_dq(delta: f64, re: f64, im: f64) -> DqPair {
    let (s, c) = delta.sin_cos();
    DqPair { d: s * re - c * im, q: c * re + s * im }
}

/// Inverse of [`to_dq`].
pub fn from_dq(delta: f64, dq: DqPair) -> (f64, f64) {
    let (s, c) = delta.sin_cos();
    (s * dq.d + c * dq.q, -c * dq.d + s * dq.q)
}

/// Terminal voltage `h(x, u)`.
pub fn measurement_fn(x: &StateVector, u: &InputVector, p: &MachineParams) -> MeasurementVector {
    let (s, c) = x.delta.sin_cos();
    let i = to_dq(x.delta, u.i_r, u.i_i);
    MeasurementVector {
        e_r: s * x.ed_p + c * x.eq_p - (c * p.xp_d * i.d - s * p.xp_q * i.q),
        e_i: -c * x.ed_p + s * x.eq_p - (s * p.xp_d * i.d + c * p.xp_q * i.q),
    }
}

/// Air-gap torque of the transient model (equal to air-gap power with no
/// stator resistance).
pub fn electric_torque(x: &StateVector, idq: DqPair, p: &MachineParams) -> f64 {
    x.ed_p * idq.d + x.eq_p * idq.q + (p.xp_q - p.xp_d) * idq.d * idq.q
}

/// Continuous-time rates `[dδ/dt, dΔω/dt, de'q/dt, de'd/dt]`.
pub fn state_derivative(x: &StateVector, u: &InputVector, p: &MachineParams) -> StateVector {
    let i = to_dq(x.delta, u.i_r, u.i_i);
    let t_e = electric_torque(x, i, p);
    StateVector {
        delta: p.omega0 * x.domega,
        domega: (u.t_m - t_e - p.k_d * x.domega) / (2.0 * p.h),
        eq_p: (u.e_fd - x.eq_p - (p.x_d - p.xp_d) * i.d) / p.tp_d0,
        ed_p: (-x.ed_p + (p.x_q - p.xp_q) * i.q) / p.tp_q0,
    }
}

pub fn euler_substep(x: &StateVector, u: &InputVector, p: &MachineParams, dt: f64) -> StateVector {
    let v = x.to_vector() + state_derivative(x, u, p).to_vector() * dt;
    StateVector::from_vector(&v)
}

/// `∂f/∂x` of [`state_derivative`].
pub fn derivative_jacobian(x: &StateVector, u: &InputVector, p: &MachineParams) -> Matrix4<f64> {
    let i = to_dq(x.delta, u.i_r, u.i_i);
    // ∂i_d/∂δ = i_q, ∂i_q/∂δ = -i_d
    let dte_ddelta = x.ed_p * i.q - x.eq_p * i.d + (p.xp_q - p.xp_d) * (i.q * i.q - i.d * i.d);
    let m = 2.0 * p.h;
    Matrix4::new(
        0.0, p.omega0, 0.0, 0.0,
        -dte_ddelta / m, -p.k_d / m, -i.q / m, -i.d / m,
        -(p.x_d - p.xp_d) * i.q / p.tp_d0, 0.0, -1.0 / p.tp_d0, 0.0,
        -(p.x_q - p.xp_q) * i.d / p.tp_q0, 0.0, 0.0, -1.0 / p.tp_q0,
    )
}

/// Jacobian of [`euler_substep`]: `I + dt ∂f/∂x`.
pub fn transition_jacobian(x: &StateVector, u: &InputVector, p: &MachineParams, dt: f64) -> Matrix4<f64> {
    Matrix4::identity() + derivative_jacobian(x, u, p) * dt
}

/// `∂h/∂x`; the Δω column is identically zero.
pub fn measurement_jacobian(x: &StateVector, u: &InputVector, p: &MachineParams) -> Matrix2x4<f64> {
    let (s, c) = x.delta.sin_cos();
    let i = to_dq(x.delta, u.i_r, u.i_i);
    // h = A(δ) v, v = [e'd + x'q i_q, e'q - x'd i_d]
    let a = Matrix2::new(s, c, -c, s);
    let da = Matrix2::new(c, -s, s, c);
    let v = Vector2::new(x.ed_p + p.xp_q * i.q, x.eq_p - p.xp_d * i.d);
    let dv = Vector2::new(-p.xp_q * i.d, -p.xp_d * i.q);
    let dh_ddelta = da * v + a * dv;
    Matrix2x4::new(
        dh_ddelta[0], 0.0, c, s,
        dh_ddelta[1], 0.0, s, -c,
    )
}

/// The machine as a [`DynamicModel`] for the filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynchronousMachine {
    pub params: MachineParams,
}

impl SynchronousMachine {
    pub fn new(params: MachineParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl DynamicModel for SynchronousMachine {
    type Input = InputVector;

    fn derivative(&self, x: &StateVec, u: &InputVector) -> StateVec {
        state_derivative(&StateVector::from_vector(x), u, &self.params).to_vector()
    }

    fn derivative_jacobian(&self, x: &StateVec, u: &InputVector) -> StateCov {
        derivative_jacobian(&StateVector::from_vector(x), u, &self.params)
    }

    fn measure(&self, x: &StateVec, u: &InputVector) -> MeasVec {
        measurement_fn(&StateVector::from_vector(x), u, &self.params).to_vector()
    }

    fn measure_jacobian(&self, x: &StateVec, u: &InputVector) -> MeasJacobian {
        measurement_jacobian(&StateVector::from_vector(x), u, &self.params)
    }
}
