//! Run configuration: a TOML file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use absa_core::encoder::pretrain::{MaskingScheme, PretrainParams};
use absa_core::eval::Approach;
use absa_core::experiment::ExperimentConfig;
use absa_core::training::grid::Grid;
use absa_core::training::{AdaptationStrategy, Hyperparams};
use absa_core::transform::GeneratorParams;
use absa_core::{EncoderConfig, TransformMethod};
use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Defaults to 4 * hidden.
    pub ffn_size: Option<usize>,
    pub dropout_rate: f64,
    pub use_pooler: bool,
    pub init_std: f64,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 32,
            heads: 2,
            ffn_size: None,
            dropout_rate: 0.0,
            use_pooler: true,
            init_std: 0.02,
        }
    }
}

impl EncoderSection {
    pub fn build(&self, vocab_size: usize, max_positions: usize) -> EncoderConfig {
        let mut config = EncoderConfig::new(self.layers, self.hidden, self.heads, vocab_size, max_positions);
        if let Some(f) = self.ffn_size {
            config.ffn_size = f;
        }
        config.dropout_rate = self.dropout_rate;
        config.use_pooler = self.use_pooler;
        config.init_std = self.init_std;
        config
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let hp = Hyperparams::default();
        Self {
            learning_rate: hp.learning_rate,
            batch_size: hp.batch_size,
            epochs: hp.epochs,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mask_rate: f64,
    pub max_seq_len: usize,
    pub masking: MaskingScheme,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let p = PretrainParams::default();
        Self {
            epochs: p.epochs,
            steps_per_epoch: p.steps_per_epoch,
            batch_size: p.batch_size,
            learning_rate: p.learning_rate,
            mask_rate: p.mask_rate,
            max_seq_len: p.max_seq_len,
            masking: p.masking,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub reviews: usize,
    pub aspect_rate: f64,
    pub positive_rate: f64,
    pub filler_rate: f64,
}

impl Default for GenerateSection {
    fn default() -> Self {
        let g = GeneratorParams::default();
        Self {
            reviews: 2000,
            aspect_rate: g.aspect_rate,
            positive_rate: g.positive_rate,
            filler_rate: g.filler_rate,
        }
    }
}

impl GenerateSection {
    pub fn params(&self) -> GeneratorParams {
        GeneratorParams {
            aspect_rate: self.aspect_rate,
            positive_rate: self.positive_rate,
            filler_rate: self.filler_rate,
        }
    }
}

/// Contents of the `--config` file. Relative paths are resolved against
/// the file's directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub vocab: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub categories: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub method: Option<TransformMethod>,
    pub strategy: Option<AdaptationStrategy>,
    pub approach: Option<Approach>,
    pub max_seq_len: Option<usize>,
    pub train_fraction: Option<f64>,
    pub threshold: Option<f64>,
    pub encoder: EncoderSection,
    pub train: TrainSection,
    pub grid: Option<Grid>,
    pub pretrain: PretrainSection,
    pub generate: GenerateSection,
    pub experiment: Option<ExperimentConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.vocab,
            &mut config.dataset,
            &mut config.categories,
            &mut config.lexicon,
            &mut config.init,
            &mut config.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn method(&self) -> TransformMethod {
        self.method.unwrap_or(TransformMethod::NliB)
    }

    pub fn strategy(&self) -> AdaptationStrategy {
        self.strategy.unwrap_or(AdaptationStrategy::FineTuning)
    }

    pub fn approach(&self) -> Approach {
        self.approach.unwrap_or(Approach::SentencePair)
    }

    pub fn max_seq_len(&self) -> usize {
        self.max_seq_len.unwrap_or(48)
    }

    pub fn train_fraction(&self) -> f64 {
        self.train_fraction.unwrap_or(0.8)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold.unwrap_or(absa_core::training::suite::DEFAULT_THRESHOLD)
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed: self.seed(),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid.clone().unwrap_or_default()
    }

    pub fn pretrain_params(&self) -> PretrainParams {
        let p = &self.pretrain;
        PretrainParams {
            epochs: p.epochs,
            steps_per_epoch: p.steps_per_epoch,
            batch_size: p.batch_size,
            learning_rate: p.learning_rate,
            mask_rate: p.mask_rate,
            max_seq_len: p.max_seq_len,
            masking: p.masking,
            seed: self.seed(),
        }
    }
}

/// Collects every configuration problem so they can be reported together
/// before any work starts.
#[derive(Debug, Default)]
pub struct Problems(Vec<String>);

impl Problems {
    pub fn push(&mut self, problem: impl Into<String>) {
        self.0.push(problem.into());
    }

    pub fn check(&mut self, ok: bool, problem: impl FnOnce() -> String) {
        if !ok {
            self.0.push(problem());
        }
    }

    /// Records a missing required path or a path that does not exist.
    pub fn existing<'a>(&mut self, what: &str, path: Option<&'a PathBuf>) -> Option<&'a PathBuf> {
        match path {
            None => {
                self.push(format!("{what} is required (flag or config key)"));
                None
            }
            Some(p) if !p.exists() => {
                self.push(format!("{what} {} does not exist", p.display()));
                None
            }
            Some(p) => Some(p),
        }
    }

    pub fn optional_existing(&mut self, what: &str, path: Option<&PathBuf>) {
        if let Some(p) = path {
            if !p.exists() {
                self.push(format!("{what} {} does not exist", p.display()));
            }
        }
    }

    pub fn finish(self) -> Result<()> {
        if self.0.is_empty() {
            return Ok(());
        }
        let list: Vec<String> = self.0.iter().enumerate().map(|(i, p)| format!("  {}. {p}", i + 1)).collect();
        bail!("invalid configuration:\n{}", list.join("\n"))
    }
}

pub fn check_hyperparams(problems: &mut Problems, hp: &Hyperparams) {
    if let Err(e) = hp.validate() {
        problems.push(e.to_string());
    }
}

pub fn check_encoder(problems: &mut Problems, section: &EncoderSection, max_seq_len: usize) {
    // vocab size is not known yet; any positive value exercises the rest
    if let Err(e) = section.build(1, max_seq_len).validate() {
        problems.push(format!("encoder: {e}"));
    }
}

pub fn check_fraction(problems: &mut Problems, f: f64) {
    problems.check(f > 0.0 && f < 1.0, || format!("train_fraction must lie strictly between 0 and 1, got {f}"));
}
