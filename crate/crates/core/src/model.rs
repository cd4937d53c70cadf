//! State-space model abstraction used by the filter.
//!
//! The estimator is written against [`DynamicModel`] so that the same
//! prediction/correction code runs on the synchronous machine and on the
//! linear toy systems used for testing.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::linalg::central_difference;

pub type StateVec = Vector4<f64>;
pub type StateCov = Matrix4<f64>;
pub type MeasVec = Vector2<f64>;
pub type MeasCov = Matrix2<f64>;
pub type MeasJacobian = Matrix2x4<f64>;

/// Continuous-time dynamics `dx/dt = f(x, u)` with measurement `z = h(x, u)`.
pub trait DynamicModel {
    type Input: Copy;

    fn derivative(&self, x: &StateVec, u: &Self::Input) -> StateVec;

    /// Analytic `∂f/∂x`.
    fn derivative_jacobian(&self, x: &StateVec, u: &Self::Input) -> StateCov;

    fn measure(&self, x: &StateVec, u: &Self::Input) -> MeasVec;

    /// Analytic `∂h/∂x`.
    fn measure_jacobian(&self, x: &StateVec, u: &Self::Input) -> MeasJacobian;
}

/// One-step integration rule applied per prediction sub-step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// `x + f(x) dt`
    #[default]
    Euler,
    /// Heun's two-stage modified Euler.
    ModifiedEuler,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMethod {
    #[default]
    Analytic,
    FiniteDifference,
}

const FD_REL_STEP: f64 = 1e-6;

/// Discrete transition `Φ(x) = x + ∫f dt` and its Jacobian for a chosen
/// integrator and Jacobian source.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discretization {
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub jacobian: JacobianMethod,
}

impl Discretization {
    pub fn step<M: DynamicModel>(&self, model: &M, x: &StateVec, u: &M::Input, dt: f64) -> StateVec {
        let k1 = model.derivative(x, u);
        match self.integrator {
            Integrator::Euler => x + k1 * dt,
            Integrator::ModifiedEuler => {
                let pred = x + k1 * dt;
                let k2 = model.derivative(&pred, u);
                x + (k1 + k2) * (0.5 * dt)
            }
        }
    }

    pub fn step_jacobian<M: DynamicModel>(
        &self,
        model: &M,
        x: &StateVec,
        u: &M::Input,
        dt: f64,
    ) -> StateCov {
        match self.jacobian {
            JacobianMethod::FiniteDifference => {
                central_difference(|v| self.step(model, v, u, dt), x, FD_REL_STEP)
            }
            JacobianMethod::Analytic => {
                let a1 = model.derivative_jacobian(x, u);
                match self.integrator {
                    Integrator::Euler => StateCov::identity() + a1 * dt,
                    Integrator::ModifiedEuler => {
                        let pred = x + model.derivative(x, u) * dt;
                        let a2 = model.derivative_jacobian(&pred, u);
                        let dpred = StateCov::identity() + a1 * dt;
                        StateCov::identity() + (a1 + a2 * dpred) * (0.5 * dt)
                    }
                }
            }
        }
    }

    pub fn measurement_jacobian<M: DynamicModel>(
        &self,
        model: &M,
        x: &StateVec,
        u: &M::Input,
    ) -> MeasJacobian {
        match self.jacobian {
            JacobianMethod::Analytic => model.measure_jacobian(x, u),
            JacobianMethod::FiniteDifference => {
                central_difference(|v| model.measure(v, u), x, FD_REL_STEP)
            }
        }
    }
}

/// Linear time-invariant model `dx/dt = A x`, `z = C x`; used as a test bed
/// where the EKF must collapse to the ordinary Kalman filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub a: StateCov,
    pub c: MeasJacobian,
}

impl DynamicModel for LinearModel {
    type Input = ();

    fn derivative(&self, x: &StateVec, _: &()) -> StateVec {
        self.a * x
    }

    fn derivative_jacobian(&self, _: &StateVec, _: &()) -> StateCov {
        self.a
    }

    fn measure(&self, x: &StateVec, _: &()) -> MeasVec {
        self.c * x
    }

    fn measure_jacobian(&self, _: &StateVec, _: &()) -> MeasJacobian {
        self.c
    }
}
