use std::path::PathBuf;
use std::process::ExitCode;

use amsp_cli::commands::{cmd_compare, cmd_estimate, cmd_mc, cmd_simulate, cmd_synth};
use amsp_cli::config::ModeKind;
use amsp_cli::{exit_code, ExperimentConfig};
use amsp_core::estimator::QSubstepMode;
use amsp_core::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Synchronous-machine dynamic state estimation with adaptive multi-step
/// prediction.
#[derive(Parser)]
#[command(name = "amsp", version, about)]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Noise seed (synth) or base seed (mc, compare).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the fault scenario and write the truth trajectory.
    Simulate,
    /// Decimate the truth and add PMU noise.
    Synth {
        /// Truth trajectory to read.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run one estimator over a measurement file.
    Estimate {
        /// Measurement file to read.
        #[arg(long)]
        measurements: Option<PathBuf>,
        /// PMU-rate truth used for the noise model and error report.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Run the Monte-Carlo comparison and write report CSVs.
    Mc {
        #[command(flatten)]
        batch: BatchArgs,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Render the mode by state by segment table, running the batch first
    /// unless --from is given.
    Compare {
        /// Directory holding existing mmse.csv and timing.csv.
        #[arg(long)]
        from: Option<PathBuf>,
        #[command(flatten)]
        batch: BatchArgs,
        #[command(flatten)]
        est: EstimatorArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum QArg {
    Full,
    Scaled,
}

#[derive(Args)]
struct EstimatorArgs {
    /// Estimator for `estimate`.
    #[arg(long, value_enum)]
    mode: Option<ModeKind>,
    /// Fixed prediction factor for cmsp.
    #[arg(long)]
    mp: Option<u32>,
    /// Upper index threshold U.
    #[arg(long)]
    upper: Option<f64>,
    /// Lower index threshold L.
    #[arg(long)]
    lower: Option<f64>,
    /// Largest adaptive prediction factor.
    #[arg(long)]
    mmax: Option<u32>,
    /// Process noise per prediction sub-step.
    #[arg(long, value_enum)]
    q_substep: Option<QArg>,
}

#[derive(Args)]
struct BatchArgs {
    /// Number of trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated mode labels, e.g. ekf,cmsp5,amsp.
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<String>>,
    /// Run trials on all cores (wall times become contended).
    #[arg(long)]
    parallel: bool,
}

impl EstimatorArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let e = &mut cfg.estimator;
        if let Some(m) = self.mode {
            e.mode = m;
        }
        if let Some(mp) = self.mp {
            e.mp = mp;
        }
        if let Some(u) = self.upper {
            e.amsp.upper = u;
        }
        if let Some(l) = self.lower {
            e.amsp.lower = l;
        }
        if let Some(m) = self.mmax {
            e.amsp.m_max = m;
        }
        if let Some(q) = self.q_substep {
            e.q_substep = match q {
                QArg::Full => QSubstepMode::Full,
                QArg::Scaled => QSubstepMode::Scaled,
            };
        }
    }
}

impl BatchArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(t) = self.trials {
            cfg.mc.trials = t;
        }
        if let Some(m) = &self.modes {
            cfg.mc.modes = m.clone();
        }
        if self.parallel {
            cfg.mc.parallel = true;
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.paths.out = out;
    }
    if let Some(seed) = cli.seed {
        cfg.synth.seed = seed;
        cfg.mc.base_seed = seed;
    }
    match cli.command {
        Command::Simulate => {
            let path = cmd_simulate(&cfg)?;
            println!("truth: {}", path.display());
        }
        Command::Synth { truth } => {
            if let Some(t) = truth {
                cfg.paths.truth = t;
            }
            let o = cmd_synth(&cfg)?;
            println!("measurements: {} ({} rows)", o.measurements.display(), o.rows);
            println!("pmu-rate truth: {}", o.truth_pmu.display());
        }
        Command::Estimate { measurements, truth, est } => {
            if let Some(m) = measurements {
                cfg.paths.measurements = m;
            }
            if let Some(t) = truth {
                cfg.paths.truth_pmu = t;
            }
            est.apply(&mut cfg);
            let o = cmd_estimate(&cfg)?;
            println!("mode {}: wall time {:.6} s over {} steps", cfg.estimator.mode().label(), o.run.wall_time, o.run.len());
            if let Some(mse) = o.mse {
                println!("mse delta {:.3e} domega {:.3e} eq_p {:.3e} ed_p {:.3e}", mse[0], mse[1], mse[2], mse[3]);
            }
            println!("estimates: {}", o.estimates.display());
            println!("traces: {}", o.traces.display());
        }
        Command::Mc { batch, est } => {
            batch.apply(&mut cfg);
            est.apply(&mut cfg);
            let r = cmd_mc(&cfg)?;
            for m in &r.modes {
                println!("{:<8} mean wall time {:.6} s", m.label, m.wall_time.mean);
            }
            println!("reports in {}", cfg.paths.out.display());
        }
        Command::Compare { from, batch, est } => {
            batch.apply(&mut cfg);
            est.apply(&mut cfg);
            print!("{}", cmd_compare(&cfg, from.as_deref())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
