//! Seeded Monte-Carlo comparison of estimator modes.
//!
//! All modes of one trial see the same noisy series, so comparisons between
//! modes are paired. Squared errors are summed in trial order, which keeps
//! reports bit-identical regardless of parallelism.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{run_filter, EstimatorMode, FilterOptions, FilterRun};
use crate::machine::{MachineParams, StateVector};
use crate::nonlinearity::NonlinearityIndexes;
use crate::pmu::{decimate, derive_noise_model, synthesize_decimated, DerivedNoise, SynthConfig};
use crate::scenario::{simulate, ScenarioConfig, TruthTrajectory};

pub type PerState = [f64; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub trials: usize,
    pub base_seed: u64,
    /// Reporting segment length (s).
    pub segment_length: f64,
    pub modes: Vec<EstimatorMode>,
    /// Run trials on the rayon pool. Wall times are then contended and only
    /// indicative.
    pub parallel: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            base_seed: 0,
            segment_length: 10.0,
            modes: vec![EstimatorMode::Ekf],
            parallel: false,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("at least one Monte-Carlo trial is required".into()));
        }
        if !(self.segment_length > 0.0) {
            return Err(Error::Config("segment_length must be positive".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("no estimator modes requested".into()));
        }
        self.modes.iter().try_for_each(EstimatorMode::validate)
    }

    /// Seed of trial `n`.
    pub fn trial_seed(&self, n: usize) -> u64 {
        self.base_seed ^ n as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimingStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl TimingStats {
    fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { mean, min, max }
    }
}

/// Per-mode results.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    pub mode: EstimatorMode,
    pub label: String,
    pub whole: PerState,
    pub segments: Vec<PerState>,
    /// MSE at every measurement step.
    pub mse_curve: Vec<PerState>,
    /// Prediction factor averaged over trials, per step.
    pub mean_mp: Vec<f64>,
    /// Controller indexes averaged over trials, per step.
    pub mean_index: Vec<NonlinearityIndexes>,
    /// Sub-step indexes averaged over trials, per step.
    pub mean_substep_index: Vec<NonlinearityIndexes>,
    /// Total filter time per trial.
    pub wall_time: TimingStats,
    /// Mean filter time spent in each segment.
    pub segment_times: Vec<f64>,
    /// Filter time of every trial, in trial order.
    pub trial_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub times: Vec<f64>,
    /// Step ranges of the reporting segments; the last may be shorter.
    pub segments: Vec<Range<usize>>,
    pub trials: usize,
    pub noise: DerivedNoise,
    pub modes: Vec<ModeReport>,
}

impl McReport {
    pub fn mode(&self, label: &str) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.label == label)
    }
}

/// Per-state MSE across trials at one step.
pub fn mse_at_step(estimates: &[StateVector], truth: &StateVector) -> PerState {
    let mut acc = [0.0; 4];
    if estimates.is_empty() {
        return acc;
    }
    let t = truth.to_vector();
    for e in estimates {
        let d = e.to_vector() - t;
        for i in 0..4 {
            acc[i] += d[i] * d[i];
        }
    }
    acc.map(|v| v / estimates.len() as f64)
}

/// Time average of an MSE curve over `range`.
pub fn mmse(curve: &[PerState], range: Range<usize>) -> Result<PerState> {
    if range.is_empty() || range.end > curve.len() {
        return Err(Error::Argument(format!(
            "mMSE range {range:?} is empty or exceeds the {} available steps",
            curve.len()
        )));
    }
    let n = range.len() as f64;
    let mut acc = [0.0; 4];
    for row in &curve[range] {
        for i in 0..4 {
            acc[i] += row[i];
        }
    }
    Ok(acc.map(|v| v / n))
}

/// Consecutive ranges of `per_segment` steps covering `0..n`.
pub fn segment_ranges(n: usize, per_segment: usize) -> Vec<Range<usize>> {
    let per = per_segment.max(1);
    (0..n).step_by(per).map(|s| s..(s + per).min(n)).collect()
}

struct TrialOutcome {
    sq_err: Vec<PerState>,
    mp: Vec<u32>,
    idx: Vec<NonlinearityIndexes>,
    sub_idx: Vec<NonlinearityIndexes>,
    run: FilterRun,
}

fn run_trial(
    dec: &TruthTrajectory,
    p: &MachineParams,
    noise: &DerivedNoise,
    synth: &SynthConfig,
    mc: &McConfig,
    opts: &FilterOptions,
    dt: f64,
    trial: usize,
) -> Result<Vec<TrialOutcome>> {
    let series = synthesize_decimated(dec, &SynthConfig { seed: mc.trial_seed(trial), ..*synth });
    mc.modes
        .iter()
        .map(|mode| {
            let run = run_filter(&series.z_seq, &series.u_seq, p, &noise.noise, &noise.p0, mode, dt, opts)
                .map_err(|e| Error::Trial { trial, mode: mode.label(), source: Box::new(e) })?;
            let sq_err = run
                .estimates
                .iter()
                .zip(&dec.states)
                .map(|(b, x)| mse_at_step(&[b.state()], x))
                .collect();
            Ok(TrialOutcome {
                sq_err,
                mp: run.mp_trace.clone(),
                idx: run.index_trace.clone(),
                sub_idx: run.substep_index_trace.clone(),
                run,
            })
        })
        .collect()
}

struct Accumulator {
    sq_err: Vec<PerState>,
    mp: Vec<f64>,
    idx: Vec<NonlinearityIndexes>,
    sub_idx: Vec<NonlinearityIndexes>,
    times: Vec<f64>,
    segment_times: Vec<f64>,
}

impl Accumulator {
    fn new(n: usize, segments: usize) -> Self {
        Self {
            sq_err: vec![[0.0; 4]; n],
            mp: vec![0.0; n],
            idx: vec![NonlinearityIndexes::ZERO; n],
            sub_idx: vec![NonlinearityIndexes::ZERO; n],
            times: Vec::new(),
            segment_times: vec![0.0; segments],
        }
    }

    fn add(&mut self, t: &TrialOutcome, segments: &[Range<usize>]) {
        for k in 0..self.sq_err.len() {
            for i in 0..4 {
                self.sq_err[k][i] += t.sq_err[k][i];
            }
            self.mp[k] += f64::from(t.mp[k]);
            self.idx[k].n_phi += t.idx[k].n_phi;
            self.idx[k].n_h += t.idx[k].n_h;
            self.sub_idx[k].n_phi += t.sub_idx[k].n_phi;
            self.sub_idx[k].n_h += t.sub_idx[k].n_h;
        }
        self.times.push(t.run.wall_time);
        for (acc, seg) in self.segment_times.iter_mut().zip(segments) {
            *acc += t.run.time_between(seg.start, seg.end);
        }
    }
}

/// Simulates the scenario once and runs the Monte-Carlo batch on it.
pub fn run_mc(
    scenario: &ScenarioConfig,
    machine: &MachineParams,
    synth: &SynthConfig,
    mc: &McConfig,
    opts: &FilterOptions,
) -> Result<McReport> {
    let p = scenario.machine_params(machine);
    let truth = simulate(scenario, &p)?;
    run_mc_on_truth(&truth, &p, synth, mc, opts)
}

/// Monte-Carlo batch on a given full-rate truth trajectory.
pub fn run_mc_on_truth(
    truth: &TruthTrajectory,
    p: &MachineParams,
    synth: &SynthConfig,
    mc: &McConfig,
    opts: &FilterOptions,
) -> Result<McReport> {
    run_mc_with_noise(truth, p, synth, mc, opts, derive_noise_model)
}

/// As [`run_mc_on_truth`], with the noise model built by `noise` from the
/// PMU-rate truth.
pub fn run_mc_with_noise(
    truth: &TruthTrajectory,
    p: &MachineParams,
    synth: &SynthConfig,
    mc: &McConfig,
    opts: &FilterOptions,
    noise: impl FnOnce(&TruthTrajectory) -> Result<DerivedNoise>,
) -> Result<McReport> {
    mc.validate()?;
    synth.validate()?;
    let dec = decimate(truth, synth.pmu_rate)?;
    let noise = noise(&dec)?;
    let n = dec.len();
    let dt = 1.0 / synth.pmu_rate;
    let per_segment = (mc.segment_length / dt).round() as usize;
    let segments = segment_ranges(n, per_segment);

    let mut accs: Vec<Accumulator> = mc.modes.iter().map(|_| Accumulator::new(n, segments.len())).collect();
    let chunk = if mc.parallel { rayon::current_num_threads().max(1) * 2 } else { 1 };
    let trial_ids: Vec<usize> = (0..mc.trials).collect();
    for ids in trial_ids.chunks(chunk) {
        let outcomes: Vec<Result<Vec<TrialOutcome>>> = if mc.parallel {
            ids.par_iter()
                .map(|&t| run_trial(&dec, p, &noise, synth, mc, opts, dt, t))
                .collect()
        } else {
            ids.iter().map(|&t| run_trial(&dec, p, &noise, synth, mc, opts, dt, t)).collect()
        };
        for outcome in outcomes {
            for (acc, trial) in accs.iter_mut().zip(outcome?) {
                acc.add(&trial, &segments);
            }
        }
    }

    let inv = 1.0 / mc.trials as f64;
    let modes = mc
        .modes
        .iter()
        .zip(accs)
        .map(|(mode, acc)| {
            let mse_curve: Vec<PerState> = acc.sq_err.iter().map(|r| r.map(|v| v * inv)).collect();
            let whole = mmse(&mse_curve, 0..n)?;
            let seg = segments.iter().map(|r| mmse(&mse_curve, r.clone())).collect::<Result<Vec<_>>>()?;
            let scale = |v: &NonlinearityIndexes| NonlinearityIndexes { n_phi: v.n_phi * inv, n_h: v.n_h * inv };
            Ok(ModeReport {
                mode: *mode,
                label: mode.label(),
                whole,
                segments: seg,
                mse_curve,
                mean_mp: acc.mp.iter().map(|v| v * inv).collect(),
                mean_index: acc.idx.iter().map(scale).collect(),
                mean_substep_index: acc.sub_idx.iter().map(scale).collect(),
                wall_time: TimingStats::from_samples(&acc.times),
                segment_times: acc.segment_times.iter().map(|v| v * inv).collect(),
                trial_times: acc.times,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(McReport { times: dec.times.clone(), segments, trials: mc.trials, noise, modes })
}

/// `mode,state,segment,mMSE` with one `whole` row and one row per segment.
pub fn write_mmse_csv<W: Write>(report: &McReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "state", "segment", "mMSE"])?;
    for m in &report.modes {
        for (i, state) in StateVector::NAMES.iter().enumerate() {
            w.write_record([m.label.as_str(), state, "whole", &m.whole[i].to_string()])?;
            for (s, seg) in m.segments.iter().enumerate() {
                w.write_record([m.label.as_str(), state, &(s + 1).to_string(), &seg[i].to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `mode,mean_s,min_s,max_s`.
pub fn write_timing_csv<W: Write>(report: &McReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "mean_s", "min_s", "max_s"])?;
    for m in &report.modes {
        let t = m.wall_time;
        w.write_record([m.label.clone(), t.mean.to_string(), t.min.to_string(), t.max.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `mode,segment,mean_s`.
pub fn write_segment_timing_csv<W: Write>(report: &McReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "segment", "mean_s"])?;
    for m in &report.modes {
        for (s, t) in m.segment_times.iter().enumerate() {
            w.write_record([m.label.clone(), (s + 1).to_string(), t.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-step MSE, mean `M_p` and mean indexes for plotting.
pub fn write_curves_csv<W: Write>(report: &McReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "mode", "t", "mse_delta", "mse_domega", "mse_eq_p", "mse_ed_p", "mean_mp", "mean_n_phi",
        "mean_n_h", "mean_sub_n_phi", "mean_sub_n_h",
    ])?;
    for m in &report.modes {
        for (k, t) in report.times.iter().enumerate() {
            let e = &m.mse_curve[k];
            let (i, s) = (m.mean_index[k], m.mean_substep_index[k]);
            let row = [
                *t, e[0], e[1], e[2], e[3], m.mean_mp[k], i.n_phi, i.n_h, s.n_phi, s.n_h,
            ];
            let mut rec = vec![m.label.clone()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
