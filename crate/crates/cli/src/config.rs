//! Run configuration: one JSON file, then command-line overrides.

use std::path::{Path, PathBuf};

use lassoggm::model::Hyperparameters;
use lassoggm::sampler::McmcConfig;
use lassoggm::simgen::{StructureKind, StructureSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::read_json;

/// Chain settings. The seed lives at the top level of [`RunConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub grid_points: usize,
    pub step_tau: f64,
    pub step_q: f64,
    pub step_s: f64,
}

impl Default for McmcSection {
    fn default() -> Self {
        let d = McmcConfig::default();
        McmcSection {
            iterations: d.iterations,
            burn_in: d.burn_in,
            thin: d.thin,
            grid_points: d.grid_points,
            step_tau: d.step_tau,
            step_q: d.step_q,
            step_s: d.step_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSection {
    pub kind: StructureKind,
    pub p: usize,
    #[serde(default = "default_pi")]
    pub pi: f64,
}

fn default_pi() -> f64 {
    0.1
}

/// One row of an evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationEntry {
    pub truth: PathBuf,
    pub estimate: PathBuf,
    /// Edge marginals from a fit; when given, edges come from the median graph.
    #[serde(default)]
    pub marginals: Option<PathBuf>,
    #[serde(default)]
    pub structure: Option<String>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub replicate: Option<usize>,
    #[serde(default)]
    pub method: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub mcmc: McmcSection,
    pub hyperparameters: Hyperparameters,
    /// simulate: generator and sample size.
    pub structure: Option<StructureSection>,
    pub n: Option<usize>,
    pub replicates: usize,
    /// fit, fit-mixture, fit-dp, predict: input data.
    pub data: Option<PathBuf>,
    /// predict: the first `train_size` rows of `data` train, the rest test,
    /// unless a separate `test` file is given.
    pub train_size: Option<usize>,
    pub test: Option<PathBuf>,
    pub k_range: Vec<usize>,
    pub top_k: usize,
    pub threshold: Option<f64>,
    /// fit: write every retained state as JSON lines.
    pub save_samples: bool,
    /// evaluate: truth/estimate pairs.
    pub evaluations: Vec<EvaluationEntry>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            threads: None,
            mcmc: McmcSection::default(),
            hyperparameters: Hyperparameters::default(),
            structure: None,
            n: None,
            replicates: 1,
            data: None,
            train_size: None,
            test: None,
            k_range: vec![1, 2, 3],
            top_k: 5,
            threshold: None,
            save_samples: false,
            evaluations: Vec::new(),
        }
    }
}

/// Command-line values that replace their configuration counterparts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub top_k: Option<usize>,
    pub threshold: Option<f64>,
    pub data: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => read_json(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.iterations {
            self.mcmc.iterations = v;
        }
        if let Some(v) = o.burn_in {
            self.mcmc.burn_in = v;
        }
        if let Some(v) = o.thin {
            self.mcmc.thin = v;
        }
        if let Some(v) = o.threads {
            self.threads = Some(v);
        }
        if let Some(v) = &o.out_dir {
            self.out_dir = v.clone();
        }
        if let Some(v) = o.top_k {
            self.top_k = v;
        }
        if let Some(v) = o.threshold {
            self.threshold = Some(v);
        }
        if let Some(v) = &o.data {
            self.data = Some(v.clone());
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.mcmc_config().validate()?;
        self.hyperparameters.ggm.validate()?;
        self.hyperparameters.dp.validate()?;
        if self.top_k == 0 {
            return Err(CliError::Config("top_k must be at least 1".into()));
        }
        if let Some(t) = self.threshold {
            if !(t >= 0.0) {
                return Err(CliError::Config(format!("threshold must be nonnegative, got {t}")));
            }
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        if self.k_range.is_empty() || self.k_range.contains(&0) {
            return Err(CliError::Config("k_range must list positive values".into()));
        }
        Ok(())
    }

    pub fn mcmc_config(&self) -> McmcConfig {
        let m = &self.mcmc;
        McmcConfig {
            iterations: m.iterations,
            burn_in: m.burn_in,
            thin: m.thin,
            seed: self.seed,
            grid_points: m.grid_points,
            step_tau: m.step_tau,
            step_q: m.step_q,
            step_s: m.step_s,
        }
    }

    pub fn structure_spec(&self, replicate: usize) -> CliResult<StructureSpec> {
        let s = self
            .structure
            .ok_or_else(|| CliError::Config("simulate needs a \"structure\" block".into()))?;
        let spec = StructureSpec {
            kind: s.kind,
            p: s.p,
            pi: s.pi,
            seed: self.seed.wrapping_add(replicate as u64),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn data_path(&self) -> CliResult<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::Config("no input data: set \"data\" or pass --data".into()))
    }
}
