//! Linearization-error based nonlinearity indexes.
//!
//! For a map `g` linearized at `x`, the residual of the first-order Taylor
//! expansion along a perturbation `dx` is weighted by the inverse noise
//! covariance to give a dimensionless index. Values well below one mean the
//! linearization error is buried in the noise.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::inverse_quadratic_form;
use crate::machine::{InputVector, MachineParams, StateVector, SynchronousMachine};
use crate::model::{Discretization, DynamicModel, MeasCov, MeasVec, StateCov, StateVec};

/// Indexes of the transition (`n_phi`) and measurement (`n_h`) functions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NonlinearityIndexes {
    pub n_phi: f64,
    pub n_h: f64,
}

impl NonlinearityIndexes {
    pub const ZERO: Self = Self { n_phi: 0.0, n_h: 0.0 };

    /// Both indexes below one.
    pub fn is_quasi_linear(&self) -> bool {
        self.n_phi < 1.0 && self.n_h < 1.0
    }
}

/// Change of the state between two consecutive measurement instants.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StatePerturbation(pub StateVec);

impl StatePerturbation {
    pub fn zero() -> Self {
        Self(StateVec::zeros())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0 * factor)
    }
}

/// `g(x + dx) - [g(x) + J dx]`.
pub fn taylor_residual<const N: usize, const M: usize, F>(
    g: F,
    jacobian: &SMatrix<f64, M, N>,
    x: &SVector<f64, N>,
    dx: &SVector<f64, N>,
) -> SVector<f64, M>
where
    F: Fn(&SVector<f64, N>) -> SVector<f64, M>,
{
    g(&(x + dx)) - (g(x) + jacobian * dx)
}

/// `εᵀ W⁻¹ ε`.
pub fn normalized_index<const M: usize>(
    residual: &SVector<f64, M>,
    covariance: &SMatrix<f64, M, M>,
) -> Result<f64> {
    inverse_quadratic_form(residual, covariance)
}

/// Transition index over an interval `dt`: returns `(ε_Φ, n(Φ))`.
pub fn transition_index<M: DynamicModel>(
    model: &M,
    disc: &Discretization,
    x: &StateVec,
    dx: &StatePerturbation,
    u: &M::Input,
    dt: f64,
    q: &StateCov,
) -> Result<(StateVec, f64)> {
    let jac = disc.step_jacobian(model, x, u, dt);
    let eps = taylor_residual(|v| disc.step(model, v, u, dt), &jac, x, &dx.0);
    let n = normalized_index(&eps, q)?;
    Ok((eps, n))
}

/// Measurement index: returns `(ε_h, n(h))`.
pub fn measurement_index<M: DynamicModel>(
    model: &M,
    disc: &Discretization,
    x: &StateVec,
    dx: &StatePerturbation,
    u: &M::Input,
    r: &MeasCov,
) -> Result<(MeasVec, f64)> {
    let jac = disc.measurement_jacobian(model, x, u);
    let eps = taylor_residual(|v| model.measure(v, u), &jac, x, &dx.0);
    let n = normalized_index(&eps, r)?;
    Ok((eps, n))
}

#[allow(clippy::too_many_arguments)]
pub fn indexes<M: DynamicModel>(
    model: &M,
    disc: &Discretization,
    x: &StateVec,
    dx: &StatePerturbation,
    u: &M::Input,
    dt: f64,
    q: &StateCov,
    r: &MeasCov,
) -> Result<NonlinearityIndexes> {
    let (_, n_phi) = transition_index(model, disc, x, dx, u, dt, q)?;
    let (_, n_h) = measurement_index(model, disc, x, dx, u, r)?;
    Ok(NonlinearityIndexes { n_phi, n_h })
}

/// `n(Φ)` of the machine's Euler transition over `dt`.
pub fn index_phi(
    x: &StateVector,
    dx: &StatePerturbation,
    u: &InputVector,
    p: &MachineParams,
    dt: f64,
    q: &StateCov,
) -> Result<(StateVec, f64)> {
    let model = SynchronousMachine { params: *p };
    transition_index(&model, &Discretization::default(), &x.to_vector(), dx, u, dt, q)
}

/// `n(h)` of the machine's terminal-voltage measurement.
pub fn index_h(
    x: &StateVector,
    dx: &StatePerturbation,
    u: &InputVector,
    p: &MachineParams,
    r: &MeasCov,
) -> Result<(MeasVec, f64)> {
    let model = SynchronousMachine { params: *p };
    measurement_index(&model, &Discretization::default(), &x.to_vector(), dx, u, r)
}
