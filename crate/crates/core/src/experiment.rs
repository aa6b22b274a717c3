//! The approach x strategy comparison on synthetic data: pretrain a small
//! encoder, then train and score the pair classifier and the single-sentence
//! suite under both adaptation strategies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::encoder::pretrain::{pretrain, PretrainHistory, PretrainParams};
use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::Result;
use crate::eval::{compare_report, f1_scores, gold_of, Approach, ComparisonReport, EvalReport};
use crate::rng;
use crate::tokenizer::Vocab;
use crate::training::pair::PairTask;
use crate::training::suite::{SuiteTask, DEFAULT_THRESHOLD};
use crate::training::{AdaptationStrategy, Hyperparams, TrainHistory};
use crate::transform::{
    clause_sentences, generate_synthetic_reviews, split_dataset, task_vocab, CategoryConfig, GeneratorParams,
    Lexicon, Review, TransformMethod,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub reviews: usize,
    pub categories: Vec<String>,
    pub train_fraction: f64,
    pub generator: GeneratorParams,
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub max_seq_len: usize,
    /// Reviews generated (with an independent seed) as the pretraining corpus.
    pub pretrain_reviews: usize,
    pub pretrain: PretrainParams,
    pub method: TransformMethod,
    pub pair: Hyperparams,
    pub single: Hyperparams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            reviews: 2000,
            categories: ["ac", "air_panas", "kebersihan", "linen", "service", "wifi"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            train_fraction: 0.8,
            generator: GeneratorParams::default(),
            layers: 2,
            hidden: 32,
            heads: 2,
            max_seq_len: 48,
            pretrain_reviews: 2000,
            pretrain: PretrainParams {
                epochs: 4,
                steps_per_epoch: 100,
                batch_size: 16,
                learning_rate: 1e-3,
                max_seq_len: 48,
                ..Default::default()
            },
            method: TransformMethod::NliB,
            pair: Hyperparams {
                learning_rate: 1e-3,
                batch_size: 64,
                epochs: 10,
                seed: 0,
            },
            single: Hyperparams {
                learning_rate: 1e-3,
                batch_size: 64,
                epochs: 10,
                seed: 0,
            },
        }
    }
}

/// Data shared by every cell of the comparison.
pub struct Workspace {
    pub categories: CategoryConfig,
    pub vocab: Vocab,
    pub encoder_config: EncoderConfig,
    pub encoder: EncoderParams,
    pub pretrain_history: PretrainHistory,
    pub train: Vec<Review>,
    pub validation: Vec<Review>,
}

/// Pretraining documents: clause sentences of each generated review that
/// has at least two clauses.
pub fn pretraining_corpus(reviews: &[Review], lexicon: &Lexicon) -> Vec<Vec<String>> {
    reviews
        .iter()
        .map(|r| clause_sentences(&r.text, lexicon))
        .filter(|d| d.len() >= 2)
        .collect()
}

impl ExperimentConfig {
    pub fn category_config(&self) -> Result<CategoryConfig> {
        CategoryConfig::new(self.categories.iter().cloned())
    }

    pub fn prepare(&self) -> Result<Workspace> {
        let lexicon = Lexicon::default();
        let categories = self.category_config()?;
        let vocab = task_vocab(&categories, &lexicon)?;
        let encoder_config = EncoderConfig::new(
            self.layers,
            self.hidden,
            self.heads,
            vocab.len(),
            self.max_seq_len.max(self.pretrain.max_seq_len),
        );
        encoder_config.validate()?;

        let corpus_reviews = generate_synthetic_reviews(
            rng::derive_seed(self.seed, "pretrain-corpus", 0),
            self.pretrain_reviews,
            &categories,
            &lexicon,
            self.generator,
        )?;
        let corpus = pretraining_corpus(&corpus_reviews, &lexicon);
        let pretrain_hp = PretrainParams {
            seed: self.seed,
            ..self.pretrain.clone()
        };
        let (encoder, pretrain_history) = pretrain(&corpus, &vocab, &encoder_config, &pretrain_hp)?;

        let reviews = generate_synthetic_reviews(self.seed, self.reviews, &categories, &lexicon, self.generator)?;
        let (train, validation) = split_dataset(&reviews, self.train_fraction, self.seed)?;
        Ok(Workspace {
            categories,
            vocab,
            encoder_config,
            encoder,
            pretrain_history,
            train,
            validation,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub approach: Approach,
    pub strategy: AdaptationStrategy,
    pub report: EvalReport,
    /// Training history of the pair model, or of the aspect model for the suite.
    pub history: TrainHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
    pub comparison: ComparisonReport,
    pub pretrain_history: PretrainHistory,
    /// Pair classifier with an untrained head on the pretrained encoder.
    pub baseline_f1: f64,
}

impl ExperimentResult {
    pub fn f1(&self, approach: Approach, strategy: AdaptationStrategy) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.approach == approach && c.strategy == strategy)
            .map(|c| c.report.micro_f1)
    }
}

pub fn run_cell(
    cfg: &ExperimentConfig,
    ws: &Workspace,
    approach: Approach,
    strategy: AdaptationStrategy,
) -> Result<CellResult> {
    let gold = gold_of(&ws.validation);
    let (predictions, history) = match approach {
        Approach::SentencePair => {
            let task = PairTask {
                categories: &ws.categories,
                method: cfg.method,
                vocab: &ws.vocab,
                max_seq_len: cfg.max_seq_len,
            };
            let hp = Hyperparams {
                seed: cfg.seed,
                ..cfg.pair.clone()
            };
            let (model, history) = task.train(&ws.encoder_config, ws.encoder.clone(), &ws.train, &[], strategy, &hp)?;
            (task.predict(&model, &ws.validation)?, history)
        }
        Approach::SingleSentence => {
            let task = SuiteTask {
                categories: &ws.categories,
                vocab: &ws.vocab,
                max_seq_len: cfg.max_seq_len,
                threshold: DEFAULT_THRESHOLD,
            };
            let hp = Hyperparams {
                seed: cfg.seed,
                ..cfg.single.clone()
            };
            let (suite, history) = task.train(&ws.encoder_config, &ws.encoder, &ws.train, &[], strategy, &hp)?;
            (suite.predict(&ws.validation, &ws.vocab, cfg.max_seq_len)?, history.aspect)
        }
    };
    let report = f1_scores(&predictions, &gold)?;
    log::info!("{approach} / {strategy}: micro F1 {:.4}", report.micro_f1);
    Ok(CellResult {
        approach,
        strategy,
        report,
        history,
    })
}

/// Micro F1 of a pair classifier whose head is freshly initialized.
pub fn baseline_f1(cfg: &ExperimentConfig, ws: &Workspace) -> Result<f64> {
    let task = PairTask {
        categories: &ws.categories,
        method: cfg.method,
        vocab: &ws.vocab,
        max_seq_len: cfg.max_seq_len,
    };
    let model = crate::training::Model::new(ws.encoder_config.clone(), ws.encoder.clone(), task.head(), cfg.seed)?;
    Ok(f1_scores(&task.predict(&model, &ws.validation)?, &gold_of(&ws.validation))?.micro_f1)
}

/// Runs all four cells.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let ws = cfg.prepare()?;
    let mut cells = Vec::new();
    for approach in [Approach::SingleSentence, Approach::SentencePair] {
        for strategy in [AdaptationStrategy::FeatureExtraction, AdaptationStrategy::FineTuning] {
            cells.push(run_cell(cfg, &ws, approach, strategy)?);
        }
    }
    let table: BTreeMap<(Approach, AdaptationStrategy), f64> =
        cells.iter().map(|c| ((c.approach, c.strategy), c.report.micro_f1)).collect();
    Ok(ExperimentResult {
        comparison: compare_report(&table)?,
        baseline_f1: baseline_f1(cfg, &ws)?,
        cells,
        pretrain_history: ws.pretrain_history,
    })
}
