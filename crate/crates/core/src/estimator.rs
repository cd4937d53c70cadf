//! Extended Kalman filter with multi-step prediction and the adaptive
//! prediction-factor controller.
//!
//! Each measurement interval `dt` is split into `2^M_p` Euler sub-steps
//! before the correction. In adaptive mode `M_p` moves by one per interval,
//! up when either nonlinearity index exceeds the upper threshold and down
//! when both fall under the lower one.

use std::time::Instant;

use nalgebra::{Matrix2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, symmetrize};
use crate::machine::{
    to_dq, InputVector, MachineParams, MeasurementVector, StateVector, SynchronousMachine,
};
use crate::model::{Discretization, DynamicModel, MeasCov, MeasVec, StateCov, StateVec};
use crate::nonlinearity::{indexes, NonlinearityIndexes, StatePerturbation};

/// Largest prediction factor accepted anywhere (2^20 sub-steps per interval).
pub const MP_CAP: u32 = 20;

/// Mean and covariance of the state estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief {
    pub mean: StateVec,
    pub cov: StateCov,
}

impl GaussianBelief {
    pub fn new(mean: StateVec, cov: StateCov) -> Self {
        Self { mean, cov }
    }

    pub fn state(&self) -> StateVector {
        StateVector::from_vector(&self.mean)
    }

    /// Covariance symmetric within 1e-10 with eigenvalues no lower than
    /// `-1e-10 * trace`.
    pub fn covariance_is_valid(&self) -> bool {
        let asym = (self.cov - self.cov.transpose()).abs().max();
        asym <= 1e-10 && min_eigenvalue(&self.cov) >= -1e-10 * self.cov.trace().abs()
    }
}

/// Process and measurement noise covariances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub q: StateCov,
    pub r: MeasCov,
}

impl NoiseModel {
    pub fn diagonal(q: [f64; 4], r: [f64; 2]) -> Result<Self> {
        let model = Self {
            q: StateCov::from_diagonal(&Vector4::from(q)),
            r: MeasCov::from_diagonal(&Vector2::from(r)),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let q_ok = (0..4).all(|i| self.q[(i, i)] > 0.0 && self.q[(i, i)].is_finite());
        let r_ok = (0..2).all(|i| self.r[(i, i)] > 0.0 && self.r[(i, i)].is_finite());
        if !q_ok || !r_ok {
            return Err(Error::Config("noise covariance diagonals must be positive and finite".into()));
        }
        Ok(())
    }
}

/// How process noise is split across the sub-steps of one interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QSubstepMode {
    /// Full `Q` added at every sub-step.
    #[default]
    Full,
    /// `Q / 2^M_p` per sub-step, so one interval accumulates about `Q`.
    Scaled,
}

impl QSubstepMode {
    pub fn substep_q(&self, q: &StateCov, mp: u32) -> StateCov {
        match self {
            QSubstepMode::Full => *q,
            QSubstepMode::Scaled => q / f64::from(1u32 << mp),
        }
    }
}

/// Thresholds and limits of the adaptive controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmspConfig {
    pub upper: f64,
    pub lower: f64,
    pub m_max: u32,
    pub m_init: u32,
}

impl Default for AmspConfig {
    fn default() -> Self {
        Self { upper: 0.3, lower: 0.005, m_max: 5, m_init: 0 }
    }
}

impl AmspConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower > 0.0 && self.lower < self.upper && self.upper.is_finite()) {
            return Err(Error::Config(format!(
                "AMSP thresholds must satisfy 0 < L < U (got L = {}, U = {})",
                self.lower, self.upper
            )));
        }
        if self.m_init > self.m_max || self.m_max > MP_CAP {
            return Err(Error::Config(format!(
                "AMSP factors must satisfy 0 <= M_init <= M_max <= {MP_CAP}"
            )));
        }
        Ok(())
    }
}

/// Which prediction-factor policy the filter runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorMode {
    /// Plain EKF, one prediction step per measurement.
    Ekf,
    /// Constant factor.
    Cmsp(u32),
    /// Adaptive factor.
    Amsp(AmspConfig),
}

impl EstimatorMode {
    /// Short identifier used in reports: `ekf`, `cmsp5`, `amsp`.
    pub fn label(&self) -> String {
        match self {
            EstimatorMode::Ekf => "ekf".into(),
            EstimatorMode::Cmsp(m) => format!("cmsp{m}"),
            EstimatorMode::Amsp(_) => "amsp".into(),
        }
    }

    fn initial_mp(&self) -> u32 {
        match self {
            EstimatorMode::Ekf => 0,
            EstimatorMode::Cmsp(m) => *m,
            EstimatorMode::Amsp(cfg) => cfg.m_init,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EstimatorMode::Ekf => Ok(()),
            EstimatorMode::Cmsp(m) if *m > MP_CAP => {
                Err(Error::Config(format!("CMSP factor must be <= {MP_CAP}")))
            }
            EstimatorMode::Cmsp(_) => Ok(()),
            EstimatorMode::Amsp(cfg) => cfg.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FilterOptions {
    pub discretization: Discretization,
    pub q_substep: QSubstepMode,
}

/// Output of one filter pass over a measurement sequence.
#[derive(Debug, Clone)]
pub struct FilterRun {
    /// Posterior per measurement; entry 0 is the initial belief.
    pub estimates: Vec<GaussianBelief>,
    /// Prediction factor used to reach each measurement.
    pub mp_trace: Vec<u32>,
    /// Indexes over the full interval, fed to the controller.
    pub index_trace: Vec<NonlinearityIndexes>,
    /// Indexes at the sub-step resolution actually used for prediction.
    pub substep_index_trace: Vec<NonlinearityIndexes>,
    /// Seconds elapsed from the first prediction to the end of each step.
    pub step_times: Vec<f64>,
    /// Seconds from the first prediction to the last correction.
    pub wall_time: f64,
}

impl FilterRun {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    /// Wall time spent producing steps `start..end`.
    pub fn time_between(&self, start: usize, end: usize) -> f64 {
        if end <= start || end == 0 {
            return 0.0;
        }
        let before = if start == 0 { 0.0 } else { self.step_times[start - 1] };
        self.step_times[end - 1] - before
    }
}

fn numerical(reason: impl Into<String>) -> Error {
    Error::Numerical { step: 0, reason: reason.into() }
}

fn at_step(err: Error, step: usize) -> Error {
    match err {
        Error::Numerical { reason, .. } => Error::Numerical { step, reason },
        other => other,
    }
}

/// One prediction sub-step: Euler mean update and `F P Fᵀ + Q_sub`, with the
/// Jacobian taken at the pre-step mean.
pub fn predict_substep<M: DynamicModel>(
    model: &M,
    disc: &Discretization,
    belief: &GaussianBelief,
    u: &M::Input,
    dt_sub: f64,
    q_sub: &StateCov,
) -> GaussianBelief {
    let f = disc.step_jacobian(model, &belief.mean, u, dt_sub);
    let mean = disc.step(model, &belief.mean, u, dt_sub);
    let cov = symmetrize(&(f * belief.cov * f.transpose() + q_sub));
    GaussianBelief { mean, cov }
}

/// `2^mp` sub-steps of `dt / 2^mp` with the input held.
#[allow(clippy::too_many_arguments)]
pub fn multi_step_predict<M: DynamicModel>(
    model: &M,
    disc: &Discretization,
    belief: &GaussianBelief,
    u: &M::Input,
    dt: f64,
    mp: u32,
    noise: &NoiseModel,
    mode: QSubstepMode,
) -> GaussianBelief {
    let n = 1u32 << mp;
    let dt_sub = dt / f64::from(n);
    let q_sub = mode.substep_q(&noise.q, mp);
    let mut b = *belief;
    for _ in 0..n {
        b = predict_substep(model, disc, &b, u, dt_sub, &q_sub);
    }
    b
}

/// Measurement update with the Jacobian at the prior mean.
pub fn correct<M: DynamicModel>(
    model: &M,
    disc: &Discretization,
    belief: &GaussianBelief,
    z: &MeasVec,
    u: &M::Input,
    r: &MeasCov,
) -> Result<GaussianBelief> {
    let h = disc.measurement_jacobian(model, &belief.mean, u);
    let ph_t = belief.cov * h.transpose();
    let s: Matrix2<f64> = symmetrize(&(h * ph_t + r));
    let s_inv = s
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| numerical(format!("innovation covariance not positive definite: {s}")))?;
    let gain = ph_t * s_inv;
    let innovation = z - model.measure(&belief.mean, u);
    let mean = belief.mean + gain * innovation;
    let cov = symmetrize(&((StateCov::identity() - gain * h) * belief.cov));
    if !mean.iter().all(|v| v.is_finite()) || !cov.iter().all(|v| v.is_finite()) {
        return Err(numerical("non-finite posterior"));
    }
    Ok(GaussianBelief { mean, cov })
}

/// Next prediction factor given the latest indexes.
pub fn amsp_update(mp: u32, idx: &NonlinearityIndexes, cfg: &AmspConfig) -> u32 {
    if idx.n_phi > cfg.upper || idx.n_h > cfg.upper {
        (mp + 1).min(cfg.m_max)
    } else if idx.n_phi < cfg.lower && idx.n_h < cfg.lower {
        mp.saturating_sub(1)
    } else {
        mp
    }
}

/// Runs the filter over `zs`/`us` starting from `initial` (the posterior at
/// index 0).
///
/// At step `k` the perturbation used for the indexes is the change predicted
/// over the previous interval, `x̂_{k-1}(-) - x̂_{k-2}(+)`, evaluated at the
/// current posterior. The indexes therefore pick the factor for the next
/// prediction without looking at `z_k`.
#[allow(clippy::too_many_arguments)]
pub fn run_filter_with<M: DynamicModel>(
    model: &M,
    zs: &[MeasVec],
    us: &[M::Input],
    initial: GaussianBelief,
    noise: &NoiseModel,
    mode: &EstimatorMode,
    dt: f64,
    opts: &FilterOptions,
) -> Result<FilterRun> {
    if zs.len() != us.len() || zs.len() < 2 {
        return Err(Error::Argument(format!(
            "need equal-length measurement and input sequences of length >= 2 (got {} and {})",
            zs.len(),
            us.len()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Argument(format!("measurement interval must be positive, got {dt}")));
    }
    noise.validate()?;
    mode.validate()?;

    let n = zs.len();
    let disc = &opts.discretization;
    let mut estimates = Vec::with_capacity(n);
    let mut mp_trace = Vec::with_capacity(n);
    let mut index_trace = Vec::with_capacity(n);
    let mut substep_index_trace = Vec::with_capacity(n);
    let mut step_times = Vec::with_capacity(n);

    let mut mp = mode.initial_mp();
    let mut post = initial;
    let mut last_change = StatePerturbation::zero();
    estimates.push(post);
    mp_trace.push(mp);
    index_trace.push(NonlinearityIndexes::ZERO);
    substep_index_trace.push(NonlinearityIndexes::ZERO);
    step_times.push(0.0);

    let start = Instant::now();
    for k in 1..n {
        let u = &us[k - 1];
        let idx = indexes(model, disc, &post.mean, &last_change, u, dt, &noise.q, &noise.r)?;
        mp = match mode {
            EstimatorMode::Ekf => 0,
            EstimatorMode::Cmsp(m) => *m,
            EstimatorMode::Amsp(cfg) => amsp_update(mp, &idx, cfg),
        };
        let scale = 1.0 / f64::from(1u32 << mp);
        let sub_idx = indexes(
            model,
            disc,
            &post.mean,
            &last_change.scaled(scale),
            u,
            dt * scale,
            &opts.q_substep.substep_q(&noise.q, mp),
            &noise.r,
        )?;

        let prior = multi_step_predict(model, disc, &post, u, dt, mp, noise, opts.q_substep);
        if !prior.mean.iter().all(|v| v.is_finite()) || !prior.cov.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical { step: k, reason: "non-finite prediction".into() });
        }
        last_change = StatePerturbation(prior.mean - post.mean);
        post = correct(model, disc, &prior, &zs[k], &us[k], &noise.r).map_err(|e| at_step(e, k))?;

        estimates.push(post);
        mp_trace.push(mp);
        index_trace.push(idx);
        substep_index_trace.push(sub_idx);
        step_times.push(start.elapsed().as_secs_f64());
    }
    let wall_time = *step_times.last().unwrap_or(&0.0);

    Ok(FilterRun { estimates, mp_trace, index_trace, substep_index_trace, step_times, wall_time })
}

const INIT_TOL: f64 = 1e-10;
const INIT_MAX_ITER: usize = 100;

/// Steady-state back-solve of the machine state from terminal phasors.
///
/// The phasors are averaged over the supplied samples. The rotor angle is the
/// root of `v_d(δ) = x_q i_q(δ)` (the equilibrium of the d-axis transient
/// voltage), found by Newton iteration from the terminal-voltage angle.
pub fn init_belief(
    first_measurements: &[MeasurementVector],
    first_inputs: &[InputVector],
    p: &MachineParams,
    p0: &StateCov,
) -> Result<GaussianBelief> {
    if first_measurements.is_empty() || first_measurements.len() != first_inputs.len() {
        return Err(Error::Initialization(
            "need at least one measurement/input pair of matching length".into(),
        ));
    }
    p.validate()?;
    let n = first_measurements.len() as f64;
    let e_r = first_measurements.iter().map(|z| z.e_r).sum::<f64>() / n;
    let e_i = first_measurements.iter().map(|z| z.e_i).sum::<f64>() / n;
    let i_r = first_inputs.iter().map(|u| u.i_r).sum::<f64>() / n;
    let i_i = first_inputs.iter().map(|u| u.i_i).sum::<f64>() / n;
    if ![e_r, e_i, i_r, i_i].iter().all(|v| v.is_finite()) {
        return Err(Error::Initialization("non-finite initial phasors".into()));
    }

    // g(δ) = sinδ·a - cosδ·b with a, b the components of E + j x_q I
    let a = e_r - p.x_q * i_i;
    let b = e_i + p.x_q * i_r;
    let magnitude = a.hypot(b);
    if magnitude < 1e-9 {
        return Err(Error::Initialization("internal voltage vanishes; phasors are non-physical".into()));
    }
    let mut delta = e_i.atan2(e_r);
    let mut converged = false;
    for _ in 0..INIT_MAX_ITER {
        let (s, c) = delta.sin_cos();
        let g = s * a - c * b;
        let dg = c * a + s * b;
        if dg.abs() < 1e-12 * magnitude {
            delta += 0.5;
            continue;
        }
        let step = g / dg;
        delta -= step;
        if step.abs() < INIT_TOL {
            converged = true;
            break;
        }
    }
    if !converged || !delta.is_finite() {
        return Err(Error::Initialization("rotor-angle back-solve did not converge".into()));
    }
    // the other root points the q axis away from the internal voltage
    let (s, c) = delta.sin_cos();
    if c * a + s * b < 0.0 {
        delta += std::f64::consts::PI;
    }
    let i = to_dq(delta, i_r, i_i);
    let v = to_dq(delta, e_r, e_i);
    let mean = StateVector::new(delta, 0.0, v.q + p.xp_d * i.d, v.d - p.xp_q * i.q);
    Ok(GaussianBelief { mean: mean.to_vector(), cov: *p0 })
}

/// Machine filter: back-solves the initial mean from the first sample, then
/// runs [`run_filter_with`].
#[allow(clippy::too_many_arguments)]
pub fn run_filter(
    zs: &[MeasurementVector],
    us: &[InputVector],
    p: &MachineParams,
    noise: &NoiseModel,
    p0: &StateCov,
    mode: &EstimatorMode,
    dt: f64,
    opts: &FilterOptions,
) -> Result<FilterRun> {
    if zs.is_empty() || us.is_empty() {
        return Err(Error::Argument("empty measurement sequence".into()));
    }
    let model = SynchronousMachine::new(*p)?;
    let initial = init_belief(&zs[..1], &us[..1], p, p0)?;
    let z: Vec<MeasVec> = zs.iter().map(MeasurementVector::to_vector).collect();
    run_filter_with(&model, &z, us, initial, noise, mode, dt, opts)
}
