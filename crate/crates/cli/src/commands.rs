use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use amsp_core::estimator::run_filter;
use amsp_core::io::{ingest_trajectory, load_measurements, write_measurements, write_trajectory};
use amsp_core::machine::StateVector;
use amsp_core::montecarlo::{
    run_mc_with_noise, write_curves_csv, write_mmse_csv, write_segment_timing_csv, write_timing_csv, McReport,
};
use amsp_core::pmu::{decimate, derive_noise_model_with, synthesize, DerivedNoise};
use amsp_core::scenario::{simulate, TruthTrajectory};
use amsp_core::{Error, FilterRun, Result};
use log::info;

use crate::config::ExperimentConfig;
use crate::output::{read_mmse, read_timing, write_estimates, write_traces};

pub const MMSE_FILE: &str = "mmse.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const SEGMENT_TIMING_FILE: &str = "segment_timing.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const COMPARE_FILE: &str = "compare.txt";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn read_existing(path: &Path) -> Result<TruthTrajectory> {
    if !path.exists() {
        return Err(Error::Config(format!("missing input file {}", path.display())));
    }
    ingest_trajectory(path)
}

/// Simulates the configured scenario and writes the full-rate truth.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let traj = simulate(&cfg.scenario(), &cfg.machine_params())?;
    let path = cfg.paths.resolve(&cfg.paths.truth);
    write_trajectory(&traj, create(&path)?)?;
    info!("wrote {} rows to {}", traj.len(), path.display());
    Ok(path)
}

pub struct SynthOutput {
    pub measurements: PathBuf,
    pub truth_pmu: PathBuf,
    pub rows: usize,
}

/// Decimates the truth file and adds PMU noise.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<SynthOutput> {
    cfg.synth.validate()?;
    let truth = read_existing(&cfg.paths.resolve(&cfg.paths.truth))?;
    let series = synthesize(&truth, &cfg.synth)?;
    let dec = decimate(&truth, cfg.synth.pmu_rate)?;
    let measurements = cfg.paths.resolve(&cfg.paths.measurements);
    let truth_pmu = cfg.paths.resolve(&cfg.paths.truth_pmu);
    write_measurements(&series, create(&measurements)?)?;
    write_trajectory(&dec, create(&truth_pmu)?)?;
    info!("wrote {} samples to {}", series.len(), measurements.display());
    Ok(SynthOutput { measurements, truth_pmu, rows: series.len() })
}

pub struct EstimateOutput {
    pub run: FilterRun,
    pub estimates: PathBuf,
    pub traces: PathBuf,
    /// Per-state MSE against the decimated truth, when it is available.
    pub mse: Option<[f64; 4]>,
}

/// Runs the configured estimator over the measurement file.
pub fn cmd_estimate(cfg: &ExperimentConfig) -> Result<EstimateOutput> {
    cfg.validate()?;
    let mpath = cfg.paths.resolve(&cfg.paths.measurements);
    if !mpath.exists() {
        return Err(Error::Config(format!("missing input file {}", mpath.display())));
    }
    let series = load_measurements(&mpath)?;
    let dt = series
        .dt()
        .ok_or_else(|| Error::Config("measurement file needs at least two rows".into()))?;
    let truth_path = cfg.paths.resolve(&cfg.paths.truth_pmu);
    let truth = if truth_path.exists() { Some(ingest_trajectory(&truth_path)?) } else { None };
    let derived = match (&truth, cfg.estimator.noise.needs_truth()) {
        (Some(t), true) => Some(derive_noise_model_with(t, &cfg.estimator.noise.rule)?),
        _ => None,
    };
    let (noise, p0) = cfg.estimator.noise.apply(derived)?;
    let p = cfg.machine_params();
    let mode = cfg.estimator.mode();
    let run = run_filter(&series.z_seq, &series.u_seq, &p, &noise, &p0, &mode, dt, &cfg.estimator.options())?;

    let estimates = cfg.paths.resolve(&cfg.paths.estimates);
    let traces = cfg.paths.resolve(&cfg.paths.traces);
    write_estimates(&series.times, &run, create(&estimates)?)?;
    write_traces(&series.times, &run, create(&traces)?)?;
    let mse = truth.filter(|t| t.len() == run.len()).map(|t| state_mse(&run, &t.states));
    Ok(EstimateOutput { run, estimates, traces, mse })
}

fn state_mse(run: &FilterRun, truth: &[StateVector]) -> [f64; 4] {
    let mut acc = [0.0; 4];
    for (b, x) in run.estimates.iter().zip(truth) {
        let d = b.mean - x.to_vector();
        for i in 0..4 {
            acc[i] += d[i] * d[i];
        }
    }
    acc.map(|v| v / truth.len() as f64)
}

/// Runs the Monte-Carlo batch and writes all report files into `out`.
pub fn cmd_mc(cfg: &ExperimentConfig) -> Result<McReport> {
    cfg.validate()?;
    let mc = cfg.mc_config()?;
    let p = cfg.machine_params();
    let truth = simulate(&cfg.scenario(), &p)?;
    let noise = &cfg.estimator.noise;
    let report = run_mc_with_noise(&truth, &p, &cfg.synth, &mc, &cfg.estimator.options(), |dec| {
        let derived = derive_noise_model_with(dec, &noise.rule)?;
        let (model, p0) = noise.apply(Some(derived))?;
        Ok(DerivedNoise { noise: model, p0, ..derived })
    })?;
    let out = &cfg.paths.out;
    write_mmse_csv(&report, create(&out.join(MMSE_FILE))?)?;
    write_timing_csv(&report, create(&out.join(TIMING_FILE))?)?;
    write_segment_timing_csv(&report, create(&out.join(SEGMENT_TIMING_FILE))?)?;
    write_curves_csv(&report, create(&out.join(CURVES_FILE))?)?;
    Ok(report)
}

/// Renders `mmse.csv` and `timing.csv` from `dir` as a mode × state ×
/// segment table.
pub fn render_table(dir: &Path) -> Result<String> {
    let open = |name: &str| {
        let p = dir.join(name);
        File::open(&p).map_err(|e| Error::Config(format!("cannot open {}: {e}", p.display())))
    };
    let rows = read_mmse(open(MMSE_FILE)?)?;
    let timing = read_timing(open(TIMING_FILE)?)?;

    let mut segments: Vec<String> = Vec::new();
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in &rows {
        if !segments.contains(&r.segment) {
            segments.push(r.segment.clone());
        }
        let key = (r.mode.clone(), r.state.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut s = format!("{:<8}{:<8}", "mode", "state");
    for seg in &segments {
        let name = if seg == "whole" { "Whole".to_string() } else { format!("Seg#{seg}") };
        s.push_str(&format!("{name:>12}"));
    }
    s.push('\n');
    for (mode, state) in &keys {
        s.push_str(&format!("{mode:<8}{state:<8}"));
        for seg in &segments {
            let v = rows
                .iter()
                .find(|r| &r.mode == mode && &r.state == state && &r.segment == seg)
                .map(|r| format!("{:.3e}", r.mmse))
                .unwrap_or_else(|| "-".into());
            s.push_str(&format!("{v:>12}"));
        }
        s.push('\n');
    }
    s.push_str(&format!("\n{:<8}{:>12}{:>12}{:>12}\n", "mode", "mean_s", "min_s", "max_s"));
    for t in &timing {
        s.push_str(&format!("{:<8}{:>12.4e}{:>12.4e}{:>12.4e}\n", t.mode, t.mean, t.min, t.max));
    }
    Ok(s)
}

/// Runs the batch (unless `from` points at existing results) and writes the
/// rendered table next to the CSVs.
pub fn cmd_compare(cfg: &ExperimentConfig, from: Option<&Path>) -> Result<String> {
    let dir = match from {
        Some(d) => d.to_path_buf(),
        None => {
            cmd_mc(cfg)?;
            cfg.paths.out.clone()
        }
    };
    let table = render_table(&dir)?;
    std::fs::write(dir.join(COMPARE_FILE), &table)?;
    Ok(table)
}
