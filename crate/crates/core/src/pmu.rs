//! PMU-style measurement synthesis from noise-free trajectories.

use log::warn;
use nalgebra::{Matrix2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::NoiseModel;
use crate::machine::{InputVector, MeasurementVector, StateVector};
use crate::model::StateCov;
use crate::scenario::TruthTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Reporting rate (samples/s).
    pub pmu_rate: f64,
    /// RMS total vector error added to the phasors.
    pub tve: f64,
    /// Relative noise on `E_fd` and `T_m`.
    pub input_noise: f64,
    /// Whether the current phasor inputs carry TVE noise as well.
    pub noisy_current_inputs: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { pmu_rate: 25.0, tve: 0.04, input_noise: 0.04, noisy_current_inputs: true, seed: 0 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pmu_rate > 0.0 && self.pmu_rate.is_finite()) {
            return Err(Error::Config("pmu_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.tve) || !(0.0..1.0).contains(&self.input_noise) {
            return Err(Error::Config("tve and input_noise must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Noisy PMU stream plus the decimated truth it was generated from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementSeries {
    pub times: Vec<f64>,
    pub z_seq: Vec<MeasurementVector>,
    pub u_seq: Vec<InputVector>,
    /// Absent when the series was read from a measurement file alone.
    pub truth_ref: Option<Vec<StateVector>>,
}

impl MeasurementSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> Option<f64> {
        (self.times.len() >= 2).then(|| self.times[1] - self.times[0])
    }
}

/// Rows of the simulation grid per reported sample.
pub fn decimation_ratio(dt_sim: f64, rate: f64) -> Result<usize> {
    let ratio = 1.0 / (rate * dt_sim);
    let rounded = ratio.round();
    if !(rounded >= 1.0) || (ratio - rounded).abs() > 1e-6 * rounded {
        return Err(Error::Config(format!(
            "rate {rate} samples/s does not evenly divide the simulation rate {}",
            1.0 / dt_sim
        )));
    }
    Ok(rounded as usize)
}

/// Keeps every `1/(rate·dt)`-th row starting at row 0.
pub fn decimate(traj: &TruthTrajectory, rate: f64) -> Result<TruthTrajectory> {
    let dt = traj
        .dt()
        .ok_or_else(|| Error::Config("cannot decimate a trajectory with fewer than two rows".into()))?;
    let step = decimation_ratio(dt, rate)?;
    let pick = |i: usize| i % step == 0;
    Ok(TruthTrajectory {
        times: traj.times.iter().enumerate().filter(|(i, _)| pick(*i)).map(|(_, v)| *v).collect(),
        states: traj.states.iter().enumerate().filter(|(i, _)| pick(*i)).map(|(_, v)| *v).collect(),
        inputs: traj.inputs.iter().enumerate().filter(|(i, _)| pick(*i)).map(|(_, v)| *v).collect(),
        measurements: traj
            .measurements
            .iter()
            .enumerate()
            .filter(|(i, _)| pick(*i))
            .map(|(_, v)| *v)
            .collect(),
    })
}

/// Adds zero-mean Gaussian noise with per-component standard deviation
/// `tve·|Z|/√2`, so the RMS total vector error equals `tve`.
pub fn add_phasor_noise<R: Rng + ?Sized>(re: f64, im: f64, tve: f64, rng: &mut R) -> (f64, f64) {
    let sigma = tve * re.hypot(im) / std::f64::consts::SQRT_2;
    let n_re: f64 = rng.sample(StandardNormal);
    let n_im: f64 = rng.sample(StandardNormal);
    if sigma == 0.0 {
        return (re, im);
    }
    (re + sigma * n_re, im + sigma * n_im)
}

fn relative_noise<R: Rng + ?Sized>(v: f64, level: f64, rng: &mut R) -> f64 {
    let n: f64 = rng.sample(StandardNormal);
    if level == 0.0 {
        v
    } else {
        v * (1.0 + level * n)
    }
}

/// Decimates `traj` to the PMU rate and adds seeded noise.
pub fn synthesize(traj: &TruthTrajectory, cfg: &SynthConfig) -> Result<MeasurementSeries> {
    cfg.validate()?;
    let dec = decimate(traj, cfg.pmu_rate)?;
    Ok(synthesize_decimated(&dec, cfg))
}

/// Noise injection on an already decimated trajectory.
///
/// Draw order per row is fixed (`e_R, e_I, i_R, i_I, T_m, E_fd`) and the
/// current draws are consumed even when currents stay clean, so toggling
/// `noisy_current_inputs` leaves the other channels' noise unchanged.
pub fn synthesize_decimated(dec: &TruthTrajectory, cfg: &SynthConfig) -> MeasurementSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut z_seq = Vec::with_capacity(dec.len());
    let mut u_seq = Vec::with_capacity(dec.len());
    for (z, u) in dec.measurements.iter().zip(&dec.inputs) {
        let (e_r, e_i) = add_phasor_noise(z.e_r, z.e_i, cfg.tve, &mut rng);
        let (ni_r, ni_i) = add_phasor_noise(u.i_r, u.i_i, cfg.tve, &mut rng);
        let (i_r, i_i) = if cfg.noisy_current_inputs { (ni_r, ni_i) } else { (u.i_r, u.i_i) };
        let t_m = relative_noise(u.t_m, cfg.input_noise, &mut rng);
        let e_fd = relative_noise(u.e_fd, cfg.input_noise, &mut rng);
        z_seq.push(MeasurementVector::new(e_r, e_i));
        u_seq.push(InputVector::new(t_m, e_fd, i_r, i_i));
    }
    MeasurementSeries {
        times: dec.times.clone(),
        z_seq,
        u_seq,
        truth_ref: Some(dec.states.clone()),
    }
}

/// Scaling rules turning a trajectory's largest per-sample state changes into
/// the filter's noise settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseRule {
    /// `Q` standard deviation as a fraction of the largest change.
    pub q_fraction: f64,
    /// `P0` standard deviation as a multiple of the largest change.
    pub p0_factor: f64,
    /// Measurement noise standard deviation per component (pu).
    pub r_std: f64,
    /// Square the `Q`/`P0` rules into variances (otherwise used verbatim).
    pub squared: bool,
}

impl Default for NoiseRule {
    fn default() -> Self {
        Self { q_fraction: 0.04, p0_factor: 10.0, r_std: 0.04, squared: true }
    }
}

/// Floor for a state whose recorded change is zero.
pub const CHANGE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedNoise {
    pub noise: NoiseModel,
    pub p0: StateCov,
    /// `max_k |x_{k+1} - x_k|` per state, after flooring.
    pub max_changes: [f64; 4],
    /// States whose change had to be floored.
    pub floored: [bool; 4],
}

pub fn derive_noise_model(traj: &TruthTrajectory) -> Result<DerivedNoise> {
    derive_noise_model_with(traj, &NoiseRule::default())
}

pub fn derive_noise_model_with(traj: &TruthTrajectory, rule: &NoiseRule) -> Result<DerivedNoise> {
    if traj.len() < 2 {
        return Err(Error::Config("noise model needs a trajectory of at least two samples".into()));
    }
    let mut changes = [0.0f64; 4];
    for w in traj.states.windows(2) {
        let d = w[1].to_vector() - w[0].to_vector();
        for (c, v) in changes.iter_mut().zip(d.iter()) {
            *c = c.max(v.abs());
        }
    }
    let mut floored = [false; 4];
    for (i, c) in changes.iter_mut().enumerate() {
        if !(*c >= CHANGE_FLOOR) {
            warn!("state `{}` never changes; flooring its scale at {CHANGE_FLOOR:e}", StateVector::NAMES[i]);
            *c = CHANGE_FLOOR;
            floored[i] = true;
        }
    }
    let shape = |v: f64| if rule.squared { v * v } else { v };
    let q = Vector4::from_fn(|i, _| shape(rule.q_fraction * changes[i]));
    let p0 = Vector4::from_fn(|i, _| shape(rule.p0_factor * changes[i]));
    let noise = NoiseModel {
        q: StateCov::from_diagonal(&q),
        r: Matrix2::from_diagonal_element(rule.r_std * rule.r_std),
    };
    noise.validate()?;
    Ok(DerivedNoise { noise, p0: StateCov::from_diagonal(&p0), max_changes: changes, floored })
}
