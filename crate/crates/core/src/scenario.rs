//! Ground-truth generation on a single machine connected to an infinite bus.
//!
//! The network is a Thevenin source behind an external reactance. A staged
//! three-phase fault changes the source and reactance: the fault shunts the
//! source, clearing at the near end restores half of it and clearing at the
//! remote end leaves the post-fault reactance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::machine::{
    electric_torque, measurement_fn, state_derivative, to_dq, InputVector, MachineParams,
    MeasurementVector, StateVector,
};

/// |Δω| above which the machine is considered to have lost synchronism.
pub const INSTABILITY_LIMIT: f64 = 0.5;

/// Damping regime, emulating stabilizers off/on through `K_D`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingProfile {
    #[default]
    LightlyDamped,
    WellDamped,
}

impl DampingProfile {
    pub fn k_d(&self) -> f64 {
        match self {
            DampingProfile::LightlyDamped => -2.0,
            DampingProfile::WellDamped => 40.0,
        }
    }
}

/// Pre-fault active power and terminal voltage magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPoint {
    pub p: f64,
    pub v_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub duration: f64,
    pub dt_sim: f64,
    pub fault_start: f64,
    /// Near-end clearing delay after `fault_start`.
    pub fault_clear_near: f64,
    /// Remote-end clearing delay after `fault_start`.
    pub fault_clear_remote: f64,
    pub v_inf: f64,
    pub x_e_pre: f64,
    pub x_e_fault: f64,
    pub x_e_post: f64,
    pub operating_point: OperatingPoint,
    pub damping_profile: DampingProfile,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::lightly_damped()
    }
}

impl ScenarioConfig {
    /// 30 s run with the fault at 10.1 s.
    pub fn lightly_damped() -> Self {
        Self {
            duration: 30.0,
            dt_sim: 0.001,
            fault_start: 10.1,
            fault_clear_near: 0.05,
            fault_clear_remote: 0.1,
            v_inf: 1.0,
            x_e_pre: 0.25,
            x_e_fault: 0.02,
            x_e_post: 0.4,
            operating_point: OperatingPoint { p: 0.9, v_t: 1.0 },
            damping_profile: DampingProfile::LightlyDamped,
        }
    }

    /// 720 s run with the fault at 60.1 s.
    pub fn well_damped() -> Self {
        Self {
            duration: 720.0,
            fault_start: 60.1,
            damping_profile: DampingProfile::WellDamped,
            ..Self::lightly_damped()
        }
    }

    pub fn preset(profile: DampingProfile) -> Self {
        match profile {
            DampingProfile::LightlyDamped => Self::lightly_damped(),
            DampingProfile::WellDamped => Self::well_damped(),
        }
    }

    /// Machine constants with the profile's damping applied.
    pub fn machine_params(&self, base: &MachineParams) -> MachineParams {
        MachineParams { k_d: self.damping_profile.k_d(), ..*base }
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt_sim).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.duration, self.dt_sim, self.fault_start, self.fault_clear_near,
            self.fault_clear_remote, self.v_inf, self.x_e_pre, self.x_e_fault, self.x_e_post,
            self.operating_point.p, self.operating_point.v_t,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("scenario values must be finite".into()));
        }
        // fault_start >= duration is allowed and means no disturbance
        if self.duration <= 0.0 || self.fault_start < 0.0 {
            return Err(Error::Config("scenario requires duration > 0 and fault_start >= 0".into()));
        }
        if self.dt_sim <= 0.0 || self.dt_sim > self.duration {
            return Err(Error::Config("dt_sim must be positive and below the duration".into()));
        }
        if self.fault_clear_near < 0.0 || self.fault_clear_remote < self.fault_clear_near {
            return Err(Error::Config("clearing times must satisfy 0 <= near <= remote".into()));
        }
        if self.x_e_pre <= 0.0 || self.x_e_post <= 0.0 || self.x_e_fault < 0.0 {
            return Err(Error::Config("external reactances must be positive (fault reactance >= 0)".into()));
        }
        if self.v_inf <= 0.0 || self.operating_point.v_t <= 0.0 {
            return Err(Error::Config("bus voltages must be positive".into()));
        }
        Ok(())
    }

    /// Thevenin source voltage and reactance seen by the machine at `t`.
    pub fn network_at(&self, t: f64) -> (f64, f64) {
        let eps = 0.5 * self.dt_sim;
        let since = t - self.fault_start;
        if since < -eps {
            (self.v_inf, self.x_e_pre)
        } else if since < self.fault_clear_near - eps {
            (0.0, self.x_e_fault)
        } else if since < self.fault_clear_remote - eps {
            (0.5 * self.v_inf, 0.5 * (self.x_e_fault + self.x_e_post))
        } else {
            (self.v_inf, self.x_e_post)
        }
    }
}

/// Noise-free states, inputs and terminal phasors on a uniform grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TruthTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub inputs: Vec<InputVector>,
    pub measurements: Vec<MeasurementVector>,
}

impl TruthTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Grid spacing, taken from the first two samples.
    pub fn dt(&self) -> Option<f64> {
        (self.times.len() >= 2).then(|| self.times[1] - self.times[0])
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            times: self.times[start..end].to_vec(),
            states: self.states[start..end].to_vec(),
            inputs: self.inputs[start..end].to_vec(),
            measurements: self.measurements[start..end].to_vec(),
        }
    }

    pub fn push(&mut self, t: f64, x: StateVector, u: InputVector, z: MeasurementVector) {
        self.times.push(t);
        self.states.push(x);
        self.inputs.push(u);
        self.measurements.push(z);
    }
}

/// Terminal currents from equating the machine's terminal voltage with the
/// line relation `e = v_src + j x_e i`. Returns `(i_R, i_I, e)`.
pub fn solve_stator_network(
    x: &StateVector,
    v_src: f64,
    x_e: f64,
    p: &MachineParams,
) -> Result<(f64, f64, MeasurementVector)> {
    // e(i) is affine in the current: e = e0 + M i
    let probe = |i_r, i_i| measurement_fn(x, &InputVector::new(0.0, 0.0, i_r, i_i), p);
    let e0 = probe(0.0, 0.0);
    let c1 = probe(1.0, 0.0);
    let c2 = probe(0.0, 1.0);
    let m = [[c1.e_r - e0.e_r, c2.e_r - e0.e_r], [c1.e_i - e0.e_i, c2.e_i - e0.e_i]];
    // (M - Z) i = v_src·[1, 0] - e0 with Z = [[0, -x_e], [x_e, 0]]
    let a = [[m[0][0], m[0][1] + x_e], [m[1][0] - x_e, m[1][1]]];
    let rhs = [v_src - e0.e_r, -e0.e_i];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    if det.abs() < 1e-12 * scale * scale || !det.is_finite() {
        return Err(Error::Scenario(format!("singular stator/network system (det = {det:e})")));
    }
    let i_r = (rhs[0] * a[1][1] - a[0][1] * rhs[1]) / det;
    let i_i = (a[0][0] * rhs[1] - rhs[0] * a[1][0]) / det;
    let e = measurement_fn(x, &InputVector::new(0.0, 0.0, i_r, i_i), p);
    Ok((i_r, i_i, e))
}

/// Equilibrium `(x0, u0)` delivering `op` through `x_e` into the bus.
///
/// The terminal angle follows from the power transfer across the line, and
/// the rotor angle from the q-axis voltage `E_t + j x_q I`; the transient
/// voltages and field voltage then zero the machine equations.
pub fn steady_state_init(
    op: &OperatingPoint,
    v_inf: f64,
    x_e: f64,
    p: &MachineParams,
) -> Result<(StateVector, InputVector)> {
    p.validate()?;
    if !(x_e > 0.0) || !(v_inf > 0.0) || !(op.v_t > 0.0) {
        return Err(Error::Scenario("operating point needs positive voltages and reactance".into()));
    }
    let sin_theta = op.p * x_e / (op.v_t * v_inf);
    if !(sin_theta.abs() < 1.0) {
        return Err(Error::Scenario(format!(
            "infeasible operating point: P = {} exceeds the transfer limit {}",
            op.p,
            op.v_t * v_inf / x_e
        )));
    }
    let theta = sin_theta.asin();
    let (e_r, e_i) = (op.v_t * theta.cos(), op.v_t * theta.sin());
    // I = (E_t - V_inf) / (j x_e)
    let (i_r, i_i) = (e_i / x_e, -(e_r - v_inf) / x_e);
    let delta = (e_i + p.x_q * i_r).atan2(e_r - p.x_q * i_i);
    let idq = to_dq(delta, i_r, i_i);
    let vdq = to_dq(delta, e_r, e_i);
    let eq_p = vdq.q + p.xp_d * idq.d;
    let ed_p = vdq.d - p.xp_q * idq.q;
    let x0 = StateVector::new(delta, 0.0, eq_p, ed_p);
    let t_m = electric_torque(&x0, idq, p);
    let e_fd = eq_p + (p.x_d - p.xp_d) * idq.d;
    let u0 = InputVector::new(t_m, e_fd, i_r, i_i);

    let rates = state_derivative(&x0, &u0, p).to_vector();
    let (ni_r, ni_i, _) = solve_stator_network(&x0, v_inf, x_e, p)?;
    let mismatch = rates.abs().max().max((ni_r - i_r).abs()).max((ni_i - i_i).abs());
    if !(mismatch < 1e-8) {
        return Err(Error::Scenario(format!("equilibrium residual {mismatch:e} too large")));
    }
    Ok((x0, u0))
}

/// Integrates the machine with a classical fourth-order Runge-Kutta scheme,
/// solving the network at every stage.
pub fn simulate(cfg: &ScenarioConfig, p: &MachineParams) -> Result<TruthTrajectory> {
    cfg.validate()?;
    p.validate()?;
    let (x0, u0) = steady_state_init(&cfg.operating_point, cfg.v_inf, cfg.x_e_pre, p)?;
    let n = cfg.n_steps();
    let dt = cfg.dt_sim;

    let rates = |x: &StateVector, v_src: f64, x_e: f64| -> Result<StateVector> {
        let (i_r, i_i, _) = solve_stator_network(x, v_src, x_e, p)?;
        Ok(state_derivative(x, &InputVector::new(u0.t_m, u0.e_fd, i_r, i_i), p))
    };

    let mut traj = TruthTrajectory {
        times: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        inputs: Vec::with_capacity(n),
        measurements: Vec::with_capacity(n),
    };
    let mut x = x0;
    for k in 0..n {
        let t = k as f64 * dt;
        let (v_src, x_e) = cfg.network_at(t);
        let (i_r, i_i, _) = solve_stator_network(&x, v_src, x_e, p)?;
        let u = InputVector::new(u0.t_m, u0.e_fd, i_r, i_i);
        traj.push(t, x, u, measurement_fn(&x, &u, p));
        if k + 1 == n {
            break;
        }

        let xv = x.to_vector();
        let k1 = rates(&x, v_src, x_e)?.to_vector();
        let k2 = rates(&StateVector::from_vector(&(xv + k1 * (0.5 * dt))), v_src, x_e)?.to_vector();
        let k3 = rates(&StateVector::from_vector(&(xv + k2 * (0.5 * dt))), v_src, x_e)?.to_vector();
        let k4 = rates(&StateVector::from_vector(&(xv + k3 * dt)), v_src, x_e)?.to_vector();
        x = StateVector::from_vector(&(xv + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)));

        if !x.is_finite() || x.domega.abs() > INSTABILITY_LIMIT {
            return Err(Error::Unstable { time: t + dt, domega: x.domega });
        }
    }
    Ok(traj)
}
