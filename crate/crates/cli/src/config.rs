//! Experiment configuration file.
//!
//! Every section is optional; missing keys fall back to the profile presets
//! and library defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use amsp_core::estimator::{AmspConfig, EstimatorMode, FilterOptions, NoiseModel, QSubstepMode};
use amsp_core::machine::MachineParams;
use amsp_core::model::{Discretization, Integrator, JacobianMethod};
use amsp_core::montecarlo::McConfig;
use amsp_core::nalgebra::Matrix4;
use amsp_core::pmu::{DerivedNoise, NoiseRule, SynthConfig};
use amsp_core::scenario::{DampingProfile, OperatingPoint, ScenarioConfig};
use amsp_core::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub machine: MachineParams,
    pub scenario: ScenarioSection,
    pub synth: SynthConfig,
    pub estimator: EstimatorSection,
    pub mc: McSection,
    pub paths: PathsSection,
}

/// Profile preset plus per-field overrides.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub profile: DampingProfile,
    /// Replaces the profile's damping factor.
    pub k_d: Option<f64>,
    pub duration: Option<f64>,
    pub dt_sim: Option<f64>,
    pub fault_start: Option<f64>,
    pub fault_clear_near: Option<f64>,
    pub fault_clear_remote: Option<f64>,
    pub v_inf: Option<f64>,
    pub x_e_pre: Option<f64>,
    pub x_e_fault: Option<f64>,
    pub x_e_post: Option<f64>,
    pub operating_point: Option<OperatingPoint>,
}

impl ScenarioSection {
    pub fn resolve(&self) -> ScenarioConfig {
        let mut c = ScenarioConfig::preset(self.profile);
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.duration, self.duration);
        set(&mut c.dt_sim, self.dt_sim);
        set(&mut c.fault_start, self.fault_start);
        set(&mut c.fault_clear_near, self.fault_clear_near);
        set(&mut c.fault_clear_remote, self.fault_clear_remote);
        set(&mut c.v_inf, self.v_inf);
        set(&mut c.x_e_pre, self.x_e_pre);
        set(&mut c.x_e_fault, self.x_e_fault);
        set(&mut c.x_e_post, self.x_e_post);
        if let Some(op) = self.operating_point {
            c.operating_point = op;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Ekf,
    Cmsp,
    #[default]
    Amsp,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    pub mode: ModeKind,
    /// Fixed factor for `cmsp`.
    pub mp: u32,
    pub amsp: AmspConfig,
    pub q_substep: QSubstepMode,
    pub integrator: Integrator,
    pub jacobian: JacobianMethod,
    pub noise: NoiseSection,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            mode: ModeKind::Amsp,
            mp: 5,
            amsp: AmspConfig::default(),
            q_substep: QSubstepMode::default(),
            integrator: Integrator::default(),
            jacobian: JacobianMethod::default(),
            noise: NoiseSection::default(),
        }
    }
}

impl EstimatorSection {
    pub fn mode(&self) -> EstimatorMode {
        match self.mode {
            ModeKind::Ekf => EstimatorMode::Ekf,
            ModeKind::Cmsp => EstimatorMode::Cmsp(self.mp),
            ModeKind::Amsp => EstimatorMode::Amsp(self.amsp),
        }
    }

    pub fn options(&self) -> FilterOptions {
        FilterOptions {
            discretization: Discretization { integrator: self.integrator, jacobian: self.jacobian },
            q_substep: self.q_substep,
        }
    }

    /// Parses a report label such as `ekf`, `cmsp3` or `amsp`.
    pub fn parse_mode(&self, label: &str) -> Result<EstimatorMode> {
        match label {
            "ekf" => Ok(EstimatorMode::Ekf),
            "amsp" => Ok(EstimatorMode::Amsp(self.amsp)),
            _ => label
                .strip_prefix("cmsp")
                .and_then(|m| m.parse().ok())
                .map(EstimatorMode::Cmsp)
                .ok_or_else(|| Error::Config(format!("unknown estimator mode `{label}`"))),
        }
    }
}

/// Noise settings: derived from the truth by `rule` unless given explicitly.
/// Explicit values are variances.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub rule: NoiseRule,
    pub q: Option<[f64; 4]>,
    pub r: Option<[f64; 2]>,
    pub p0: Option<[f64; 4]>,
}

impl NoiseSection {
    fn is_explicit(&self) -> bool {
        self.q.is_some() && self.r.is_some() && self.p0.is_some()
    }

    /// Applies explicit overrides on top of a derived model.
    pub fn apply(&self, derived: Option<DerivedNoise>) -> Result<(NoiseModel, Matrix4<f64>)> {
        let (mut noise, mut p0) = match derived {
            Some(d) => (d.noise, d.p0),
            None if self.is_explicit() => (NoiseModel::diagonal([1.0; 4], [1.0; 2])?, Matrix4::identity()),
            None => {
                return Err(Error::Config(
                    "no truth trajectory to derive the noise model from; give estimator.noise.q, r and p0 or a truth file"
                        .into(),
                ))
            }
        };
        if let Some(q) = self.q {
            noise.q = Matrix4::from_diagonal(&q.into());
        }
        if let Some(r) = self.r {
            noise.r = amsp_core::nalgebra::Matrix2::from_diagonal(&r.into());
        }
        if let Some(v) = self.p0 {
            p0 = Matrix4::from_diagonal(&v.into());
        }
        noise.validate()?;
        Ok((noise, p0))
    }

    pub fn needs_truth(&self) -> bool {
        !self.is_explicit()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub trials: usize,
    pub base_seed: u64,
    /// Defaults to 10 s for the lightly damped and 60 s for the well damped profile.
    pub segment_length: Option<f64>,
    pub modes: Vec<String>,
    pub parallel: bool,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            trials: 100,
            base_seed: 0,
            segment_length: None,
            modes: ["ekf", "cmsp1", "cmsp3", "cmsp5", "amsp"].map(String::from).to_vec(),
            parallel: false,
        }
    }
}

/// File locations; relative names are resolved against `out`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub out: PathBuf,
    pub truth: PathBuf,
    pub truth_pmu: PathBuf,
    pub measurements: PathBuf,
    pub estimates: PathBuf,
    pub traces: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            truth: "truth.csv".into(),
            truth_pmu: "truth_pmu.csv".into(),
            measurements: "measurements.csv".into(),
            estimates: "estimates.csv".into(),
            traces: "traces.csv".into(),
        }
    }
}

impl PathsSection {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn scenario(&self) -> ScenarioConfig {
        self.scenario.resolve()
    }

    /// Machine constants with the scenario's damping applied.
    pub fn machine_params(&self) -> MachineParams {
        let mut p = self.scenario().machine_params(&self.machine);
        if let Some(k_d) = self.scenario.k_d {
            p.k_d = k_d;
        }
        p
    }

    pub fn mc_config(&self) -> Result<McConfig> {
        let segment_length = self.mc.segment_length.unwrap_or(match self.scenario.profile {
            DampingProfile::LightlyDamped => 10.0,
            DampingProfile::WellDamped => 60.0,
        });
        let modes = self.mc.modes.iter().map(|m| self.estimator.parse_mode(m)).collect::<Result<_>>()?;
        Ok(McConfig {
            trials: self.mc.trials,
            base_seed: self.mc.base_seed,
            segment_length,
            modes,
            parallel: self.mc.parallel,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.machine_params().validate()?;
        self.scenario().validate()?;
        self.synth.validate()?;
        self.estimator.mode().validate()?;
        self.mc_config()?.validate()
    }
}
