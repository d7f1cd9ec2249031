//! Run configuration: defaults, TOML files and validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chain_bench::ChainParams;
use clap::ValueEnum;
use panoc_gn::{Mode, SolverParams64};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Accelerator {
    /// Gauss-Newton direction on every iteration.
    Gn,
    /// Gauss-Newton every `k_gn` iterations, L-BFGS in between.
    Hybrid,
    Lbfgs,
    /// Plain projected gradient steps.
    None,
}

impl Accelerator {
    pub fn mode(self) -> Mode {
        match self {
            Accelerator::Gn => Mode::GnOnly,
            Accelerator::Hybrid => Mode::Hybrid,
            Accelerator::Lbfgs => Mode::LbfgsOnly,
            Accelerator::None => Mode::Plain,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Accelerator::Gn => "gn",
            Accelerator::Hybrid => "hybrid",
            Accelerator::Lbfgs => "lbfgs",
            Accelerator::None => "none",
        }
    }
}

impl fmt::Display for Accelerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Initial guess of each closed-loop solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Start {
    /// Previous solution shifted by one stage, padded with its last input.
    Warm,
    /// Zero.
    Cold,
}

impl fmt::Display for Start {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Start::Warm => "warm",
            Start::Cold => "cold",
        })
    }
}

/// Input applied to the free end for a few steps, starting from rest.
///
/// In TOML either `"random"` (uniform in `[-1, 1]³`, drawn from the run
/// seed) or a fixed velocity such as `[-1.0, 1.0, 1.0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Disturbance {
    Fixed([f64; 3]),
    Random(RandomTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RandomTag {
    Random,
}

impl Disturbance {
    pub const RANDOM: Disturbance = Disturbance::Random(RandomTag::Random);
}

impl FromStr for Disturbance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim().eq_ignore_ascii_case("random") {
            return Ok(Self::RANDOM);
        }
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad disturbance component {p:?}: {e}"))
            })
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [a, b, c] => Ok(Self::Fixed([a, b, c])),
            _ => Err(format!(
                "disturbance needs 3 comma-separated values or \"random\", got {s:?}"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub gamma0: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub k_gn: usize,
    /// Defaults to the horizon length.
    pub lbfgs_mem: Option<usize>,
    /// Used by `solve`; the other commands take a list.
    pub accelerator: Accelerator,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverParams64::default();
        Self {
            gamma0: None,
            alpha: d.alpha,
            beta: d.beta,
            tol: d.tol,
            max_iter: d.max_iter,
            k_gn: d.k_gn,
            lbfgs_mem: None,
            accelerator: Accelerator::Hybrid,
        }
    }
}

impl SolverConfig {
    pub fn params(&self, accelerator: Accelerator, horizon: usize, record_trace: bool) -> SolverParams64 {
        SolverParams64 {
            gamma0: self.gamma0,
            alpha: self.alpha,
            beta: self.beta,
            tol: self.tol,
            max_iter: self.max_iter,
            k_gn: self.k_gn,
            lbfgs_mem: self.lbfgs_mem.unwrap_or(horizon).max(1),
            mode: accelerator.mode(),
            record_trace,
            ..Default::default()
        }
    }
}

/// Initial state of `solve` and `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceConfig {
    pub disturbance: Disturbance,
    pub disturbance_steps: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            disturbance: Disturbance::RANDOM,
            disturbance_steps: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub accelerators: Vec<Accelerator>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            accelerators: vec![Accelerator::Gn, Accelerator::Lbfgs],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub n_step: usize,
    /// Random initial states per horizon.
    pub instances: usize,
    pub accelerators: Vec<Accelerator>,
    pub disturbance_steps: usize,
    /// Worker threads. Timings are only contention-free with one.
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_min: 10,
            n_max: 45,
            n_step: 5,
            instances: 32,
            accelerators: vec![Accelerator::Hybrid, Accelerator::Lbfgs],
            disturbance_steps: 5,
            jobs: 1,
        }
    }
}

impl SweepConfig {
    pub fn horizons(&self) -> Vec<usize> {
        (self.n_min..=self.n_max).step_by(self.n_step.max(1)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Simulated time in seconds.
    pub duration: f64,
    pub starts: Vec<Start>,
    pub accelerators: Vec<Accelerator>,
    pub disturbance: Disturbance,
    pub disturbance_steps: usize,
    /// `‖x − x_eq‖` the closed loop should reach by the end of the run.
    pub tracking_tol: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            duration: 60.0,
            starts: vec![Start::Warm, Start::Cold],
            accelerators: vec![Accelerator::Hybrid, Accelerator::Lbfgs],
            disturbance: Disturbance::Fixed([-1.0, 1.0, 1.0]),
            disturbance_steps: 5,
            tracking_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            format: Format::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Chain parameter file; replaces `[chain]` when set. Relative paths
    /// resolve against the directory of the config file.
    pub chain_file: Option<PathBuf>,
    pub chain: ChainParams,
    pub solver: SolverConfig,
    pub instance: InstanceConfig,
    pub compare: CompareConfig,
    pub sweep: SweepConfig,
    pub mpc: MpcConfig,
    pub output: OutputConfig,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn load_chain_params(path: &Path) -> Result<ChainParams, CliError> {
    toml::from_str(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file and, if it names one, its chain parameter file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg: Self =
            toml::from_str(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(file) = cfg.chain_file.take() {
            let file = path.parent().map_or(file.clone(), |dir| dir.join(&file));
            cfg.chain = load_chain_params(&file)?;
            cfg.chain_file = Some(file);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.chain.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for acc in [Accelerator::Gn, Accelerator::Lbfgs] {
            self.solver
                .params(acc, self.chain.horizon, false)
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        let sw = &self.sweep;
        if sw.n_min == 0 || sw.n_min > sw.n_max || sw.n_step == 0 {
            return bad(format!(
                "empty horizon range {}..={} step {}",
                sw.n_min, sw.n_max, sw.n_step
            ));
        }
        if sw.instances == 0 || sw.jobs == 0 {
            return bad("sweep instances and jobs must be at least 1".into());
        }
        let lists = [
            ("compare", &self.compare.accelerators),
            ("sweep", &sw.accelerators),
            ("mpc", &self.mpc.accelerators),
        ];
        for (name, list) in lists {
            if list.is_empty() {
                return bad(format!("{name}.accelerators is empty"));
            }
        }
        if self.mpc.starts.is_empty() {
            return bad("mpc.starts is empty".into());
        }
        if !(self.mpc.duration > 0.0 && self.mpc.duration.is_finite()) {
            return bad(format!("mpc duration must be positive, got {}", self.mpc.duration));
        }
        if !(self.mpc.tracking_tol > 0.0) {
            return bad("mpc tracking_tol must be positive".into());
        }
        for d in [self.instance.disturbance, self.mpc.disturbance] {
            if let Disturbance::Fixed(v) = d {
                if v.iter().any(|c| !c.is_finite()) {
                    return bad(format!("disturbance {v:?} is not finite"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip_through_toml() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn disturbance_forms() {
        assert_eq!("random".parse::<Disturbance>().unwrap(), Disturbance::RANDOM);
        assert_eq!(
            "-1, 1,1".parse::<Disturbance>().unwrap(),
            Disturbance::Fixed([-1.0, 1.0, 1.0])
        );
        assert!("1,2".parse::<Disturbance>().is_err());
        let cfg =
            RunConfig::from_toml_str("[mpc]\ndisturbance = \"random\"\n[instance]\ndisturbance = [0.5, 0, 0]").unwrap();
        assert_eq!(cfg.mpc.disturbance, Disturbance::RANDOM);
        assert_eq!(cfg.instance.disturbance, Disturbance::Fixed([0.5, 0.0, 0.0]));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml_str("[solver]\ntoll = 1e-3").is_err());
        let mut cfg = RunConfig::default();
        cfg.solver.tol = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.sweep.n_min = 50;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.mpc.accelerators.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn horizons_are_inclusive() {
        let sw = SweepConfig {
            n_min: 10,
            n_max: 45,
            n_step: 5,
            ..Default::default()
        };
        assert_eq!(sw.horizons(), vec![10, 15, 20, 25, 30, 35, 40, 45]);
    }

    #[test]
    fn lbfgs_memory_follows_horizon() {
        let s = SolverConfig::default();
        assert_eq!(s.params(Accelerator::Lbfgs, 27, false).lbfgs_mem, 27);
        let s = SolverConfig {
            lbfgs_mem: Some(5),
            ..Default::default()
        };
        assert_eq!(s.params(Accelerator::Lbfgs, 27, false).lbfgs_mem, 5);
    }
}
