use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotators::{AnnotatorMode, AnnotatorPool, RewardTable};
use crate::losses::OptimizerSettings;
use crate::policy::PromptDistribution;
use crate::ranking::RankingSettings;
use crate::rng::{stream, streams};
use crate::{Error, Result};

/// Every parameter of a simulated run. Deserialization fills no defaults:
/// each field must be present in the JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentRunConfig {
    pub seed: u64,
    pub prompts: usize,
    pub responses: usize,
    pub rho: PromptWeights,
    /// Responses sampled per prompt.
    pub d: usize,
    /// Annotators per pair.
    pub h: u64,
    pub annotator_mode: AnnotatorMode,
    /// Training samples per iteration.
    pub m: usize,
    pub iterations: usize,
    pub beta: f64,
    pub reward: RewardSource,
    pub ranking: RankingSettings,
    pub optimizer: OptimizerSettings,
    /// Draws in the evaluation set.
    pub n_eval: usize,
    pub concentrability: ConcentrabilitySettings,
}

/// Either the string `"uniform"` or an explicit weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PromptWeights {
    Named(NamedWeights),
    Weights(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedWeights {
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RewardSource {
    /// Entries drawn i.i.d. uniform on `[-scale, scale]` from the run seed.
    Uniform { scale: f64 },
    /// A `prompts x responses` CSV; relative paths resolve against the config file.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrabilitySettings {
    /// Random policies tried besides the centre.
    pub perturbations: usize,
    /// Standard deviation of the Gaussian logit noise.
    pub noise_scale: f64,
}

impl Default for ConcentrabilitySettings {
    fn default() -> Self {
        Self {
            perturbations: 64,
            noise_scale: 0.5,
        }
    }
}

impl AlignmentRunConfig {
    /// Parses and validates a config. `base_dir` anchors relative reward paths.
    pub fn from_json_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut config: Self = serde_path_to_error::deserialize(de).map_err(config_error)?;
        if let (RewardSource::Csv { path }, Some(base)) = (&mut config.reward, base_dir) {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text, path.parent())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, message: &str| Err(Error::config(field, message));
        if self.prompts == 0 {
            return fail("prompts", "must be at least 1");
        }
        if self.responses < 2 {
            return fail("responses", "must be at least 2");
        }
        if self.d < 2 || self.d > self.responses {
            return fail("d", "must lie in [2, responses]");
        }
        if self.h == 0 {
            return fail("h", "must be at least 1");
        }
        if self.m == 0 {
            return fail("m", "must be at least 1");
        }
        if self.iterations == 0 {
            return fail("iterations", "must be at least 1");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return fail("beta", "must be positive");
        }
        if self.n_eval == 0 {
            return fail("n_eval", "must be at least 1");
        }
        if let RewardSource::Uniform { scale } = self.reward {
            if !(scale >= 0.0 && scale.is_finite()) {
                return fail("reward.scale", "must be nonnegative");
            }
        }
        if !(self.concentrability.noise_scale > 0.0 && self.concentrability.noise_scale.is_finite()) {
            return fail("concentrability.noise_scale", "must be positive");
        }
        self.prompt_distribution()?;
        self.ranking.validate()?;
        self.optimizer.validate()
    }

    pub fn prompt_distribution(&self) -> Result<PromptDistribution> {
        match &self.rho {
            PromptWeights::Named(NamedWeights::Uniform) => PromptDistribution::uniform(self.prompts),
            PromptWeights::Weights(w) => {
                if w.len() != self.prompts {
                    return Err(Error::config(
                        "rho",
                        format!("has {} weights for {} prompts", w.len(), self.prompts),
                    ));
                }
                PromptDistribution::new(w.clone()).map_err(|e| Error::config("rho", e.to_string()))
            }
        }
    }

    pub fn build_rewards(&self) -> Result<RewardTable> {
        match &self.reward {
            RewardSource::Uniform { scale } => RewardTable::uniform_random(
                self.prompts,
                self.responses,
                *scale,
                &mut stream(self.seed, streams::REWARDS),
            ),
            RewardSource::Csv { path } => {
                let table = RewardTable::from_csv_path(path)?;
                if table.prompts() != self.prompts || table.responses() != self.responses {
                    return Err(Error::config(
                        "reward.path",
                        format!(
                            "table is {}x{}, expected {}x{}",
                            table.prompts(),
                            table.responses(),
                            self.prompts,
                            self.responses
                        ),
                    ));
                }
                Ok(table)
            }
        }
    }

    pub fn annotator_pool(&self) -> Result<AnnotatorPool> {
        AnnotatorPool::new(self.h, self.annotator_mode, self.seed)
    }
}

fn config_error(err: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = err.path().to_string();
    let inner = err.into_inner();
    if inner.is_syntax() || inner.is_eof() {
        return Error::Parse {
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        };
    }
    let message = inner.to_string();
    let field = match missing_field(&message) {
        Some(name) if path == "." => name.to_string(),
        Some(name) => format!("{path}.{name}"),
        None => path,
    };
    Error::Config { field, message }
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}
