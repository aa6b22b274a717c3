//! Single-sentence approach: one multilabel aspect model plus one sentiment
//! model per category.

use std::collections::BTreeMap;

use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::eval::Predictions;
use crate::input_repr::{encode_single, InputRepresentation};
use crate::rng;
use crate::tokenizer::{Tokenizer, Vocab};
use crate::transform::{group_by_category, CategoryConfig, LabelSet, Polarity, Review};

use super::{train, AdaptationStrategy, Example, Gold, HeadKind, Hyperparams, Model, TrainHistory, Validation};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SingleSentenceSuite {
    pub categories: Vec<String>,
    pub aspect: Model,
    pub sentiment: BTreeMap<String, Model>,
    /// Categories without any training reviews; they are never predicted.
    pub skipped: Vec<String>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteHistory {
    pub aspect: TrainHistory,
    pub sentiment: BTreeMap<String, TrainHistory>,
}

impl SingleSentenceSuite {
    pub fn model_count(&self) -> usize {
        1 + self.sentiment.len()
    }

    /// Categories whose aspect score exceeds the threshold, each with the
    /// argmax polarity of its sentiment model.
    pub fn predict_one(&self, repr: &InputRepresentation) -> Result<LabelSet> {
        let aspect_scores = self.aspect.scores(repr)?;
        let mut out = LabelSet::new();
        for (category, &score) in self.categories.iter().zip(&aspect_scores) {
            if score <= self.threshold {
                continue;
            }
            if let Some(model) = self.sentiment.get(category) {
                let s = model.scores(repr)?;
                let polarity = if s[1] > s[0] { Polarity::Negative } else { Polarity::Positive };
                out.insert((category.clone(), polarity));
            }
        }
        Ok(out)
    }

    pub fn predict(&self, reviews: &[Review], vocab: &Vocab, max_seq_len: usize) -> Result<Predictions> {
        let inputs = encode_texts(reviews.iter().map(|r| r.text.as_str()), vocab, max_seq_len)?;
        reviews
            .iter()
            .zip(&inputs)
            .map(|(r, repr)| Ok((r.id.clone(), self.predict_one(repr)?)))
            .collect()
    }
}

fn encode_texts<'t>(
    texts: impl Iterator<Item = &'t str>,
    vocab: &Vocab,
    max_seq_len: usize,
) -> Result<Vec<InputRepresentation>> {
    let tokenizer = Tokenizer::new(vocab);
    texts
        .map(|t| encode_single(&tokenizer.tokenize(t), vocab, max_seq_len))
        .collect()
}

pub struct SuiteTask<'a> {
    pub categories: &'a CategoryConfig,
    pub vocab: &'a Vocab,
    pub max_seq_len: usize,
    pub threshold: f64,
}

impl SuiteTask<'_> {
    pub fn aspect_examples(&self, reviews: &[Review]) -> Result<Vec<Example>> {
        let inputs = encode_texts(reviews.iter().map(|r| r.text.as_str()), self.vocab, self.max_seq_len)?;
        Ok(inputs
            .into_iter()
            .zip(reviews)
            .map(|(repr, r)| Example {
                repr,
                gold: Gold::Labels(self.categories.categories().iter().map(|c| r.gold.contains_key(c)).collect()),
            })
            .collect())
    }

    /// Sentiment examples per category, for every configured category.
    pub fn sentiment_examples(&self, reviews: &[Review]) -> Result<BTreeMap<String, Vec<Example>>> {
        group_by_category(reviews, self.categories)
            .into_iter()
            .map(|(category, group)| {
                let inputs = encode_texts(group.iter().map(|(t, _)| t.as_str()), self.vocab, self.max_seq_len)?;
                let examples = inputs
                    .into_iter()
                    .zip(&group)
                    .map(|(repr, (_, p))| Example {
                        repr,
                        gold: Gold::Class(p.index()),
                    })
                    .collect();
                Ok((category, examples))
            })
            .collect()
    }

    /// Seed of the `index`-th model of a suite (0 is the aspect model).
    fn model_hp(hp: &Hyperparams, index: u64) -> Hyperparams {
        Hyperparams {
            seed: rng::derive_seed(hp.seed, "suite", index),
            ..hp.clone()
        }
    }

    /// Untrained suite: every model wraps a copy of `encoder` with a fresh head.
    pub fn initial_suite(
        &self,
        encoder_config: &EncoderConfig,
        encoder: &EncoderParams,
        hp: &Hyperparams,
    ) -> Result<SingleSentenceSuite> {
        let categories = self.categories.categories().to_vec();
        let aspect = Model::new(
            encoder_config.clone(),
            encoder.clone(),
            HeadKind::MultilabelAspect {
                categories: categories.len(),
            },
            Self::model_hp(hp, 0).seed,
        )?;
        let sentiment = categories
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let seed = Self::model_hp(hp, i as u64 + 1).seed;
                Ok((
                    c.clone(),
                    Model::new(encoder_config.clone(), encoder.clone(), HeadKind::PerCategorySentiment, seed)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(SingleSentenceSuite {
            categories,
            aspect,
            sentiment,
            skipped: Vec::new(),
            threshold: self.threshold,
        })
    }

    /// Trains a fresh suite on `train_reviews`.
    pub fn train(
        &self,
        encoder_config: &EncoderConfig,
        encoder: &EncoderParams,
        train_reviews: &[Review],
        validation: &[Review],
        strategy: AdaptationStrategy,
        hp: &Hyperparams,
    ) -> Result<(SingleSentenceSuite, SuiteHistory)> {
        let suite = self.initial_suite(encoder_config, encoder, hp)?;
        self.fit(suite, train_reviews, validation, strategy, hp)
    }

    /// Trains every model of `suite`. Sentiment models of categories that no
    /// training review mentions are dropped and reported in `skipped`.
    /// Validation reviews, if any, feed per-epoch losses.
    pub fn fit(
        &self,
        mut suite: SingleSentenceSuite,
        train_reviews: &[Review],
        validation: &[Review],
        strategy: AdaptationStrategy,
        hp: &Hyperparams,
    ) -> Result<(SingleSentenceSuite, SuiteHistory)> {
        if suite.categories != self.categories.categories() {
            return Err(Error::InvalidArgument("suite categories differ from the configured ones".into()));
        }
        if hp.epochs == 0 {
            return Ok((suite, SuiteHistory::default()));
        }
        if train_reviews.is_empty() {
            return Err(Error::InvalidArgument("no training reviews".into()));
        }
        let validation_aspect = self.aspect_examples(validation)?;
        let (aspect, aspect_history) = train(
            suite.aspect,
            &self.aspect_examples(train_reviews)?,
            &Validation {
                examples: &validation_aspect,
                f1: None,
            },
            strategy,
            &Self::model_hp(hp, 0),
        )?;
        suite.aspect = aspect;

        let mut history = SuiteHistory {
            aspect: aspect_history,
            sentiment: BTreeMap::new(),
        };
        let mut validation_groups = self.sentiment_examples(validation)?;
        for (i, (category, examples)) in self.sentiment_examples(train_reviews)?.into_iter().enumerate() {
            let Some(model) = suite.sentiment.remove(&category) else {
                continue;
            };
            if examples.is_empty() {
                log::warn!("no training reviews mention {category}; skipping its sentiment model");
                suite.skipped.push(category);
                continue;
            }
            let val = validation_groups.remove(&category).unwrap_or_default();
            let (model, h) = train(
                model,
                &examples,
                &Validation {
                    examples: &val,
                    f1: None,
                },
                strategy,
                &Self::model_hp(hp, i as u64 + 1),
            )?;
            suite.sentiment.insert(category.clone(), model);
            history.sentiment.insert(category, h);
        }
        Ok((suite, history))
    }
}
