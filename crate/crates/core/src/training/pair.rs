//! Sentence-pair approach: one classifier over (auxiliary sentence, review)
//! pairs, aggregated back into per-review label sets.

use std::collections::{BTreeMap, HashMap};

use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::Result;
use crate::eval::Predictions;
use crate::input_repr::{encode_pair, InputRepresentation};
use crate::tokenizer::{Token, Tokenizer, Vocab};
use crate::transform::{
    aggregate_predictions, transform_dataset, AuxLabel, CategoryConfig, PairInstance, PairScores, Review,
    TransformMethod,
};

use super::{train, AdaptationStrategy, Example, Gold, HeadKind, Hyperparams, Model, TrainHistory, Validation};

/// Encodes pair instances, tokenizing each distinct text once.
pub fn encode_instances(
    instances: &[PairInstance],
    vocab: &Vocab,
    max_seq_len: usize,
) -> Result<Vec<InputRepresentation>> {
    let tokenizer = Tokenizer::new(vocab);
    let mut cache: HashMap<&str, Vec<Token>> = HashMap::new();
    let mut out = Vec::with_capacity(instances.len());
    for inst in instances {
        for text in [inst.text_a.as_str(), inst.text_b.as_str()] {
            cache.entry(text).or_insert_with(|| tokenizer.tokenize(text));
        }
        out.push(encode_pair(&cache[inst.text_a.as_str()], &cache[inst.text_b.as_str()], vocab, max_seq_len)?);
    }
    Ok(out)
}

pub fn pair_examples(instances: &[PairInstance], vocab: &Vocab, max_seq_len: usize) -> Result<Vec<Example>> {
    Ok(encode_instances(instances, vocab, max_seq_len)?
        .into_iter()
        .zip(instances)
        .map(|(repr, inst)| Example {
            repr,
            gold: Gold::Class(inst.label.class_index()),
        })
        .collect())
}

/// Groups per-pair classifier scores by review.
pub fn collect_pair_scores(
    instances: &[PairInstance],
    scores: &[Vec<f64>],
    method: TransformMethod,
) -> BTreeMap<String, PairScores> {
    let mut out: BTreeMap<String, PairScores> = BTreeMap::new();
    for (inst, s) in instances.iter().zip(scores) {
        let entry = out.entry(inst.review_id.clone()).or_insert_with(|| {
            if method.is_binary() {
                PairScores::Binary(BTreeMap::new())
            } else {
                PairScores::Multi(BTreeMap::new())
            }
        });
        match entry {
            PairScores::Binary(map) => {
                let polarity = inst.aux_polarity.unwrap_or(AuxLabel::None);
                map.insert((inst.category.clone(), polarity), s[1]);
            }
            PairScores::Multi(map) => {
                map.insert(inst.category.clone(), [s[0], s[1], s[2]]);
            }
        }
    }
    out
}

/// Predicted label set for every review.
pub fn predict_pairs(
    model: &Model,
    reviews: &[Review],
    config: &CategoryConfig,
    method: TransformMethod,
    vocab: &Vocab,
    max_seq_len: usize,
) -> Result<Predictions> {
    let instances = transform_dataset(reviews, config, method);
    let inputs = encode_instances(&instances, vocab, max_seq_len)?;
    let scores = super::predict(model, &inputs, 64)?;
    let grouped = collect_pair_scores(&instances, &scores, method);
    let mut out = Predictions::new();
    for review in reviews {
        let labels = match grouped.get(&review.id) {
            Some(s) => aggregate_predictions(s, config, method)?,
            None => Default::default(),
        };
        out.insert(review.id.clone(), labels);
    }
    Ok(out)
}

/// Everything needed to train and evaluate one pair classifier.
pub struct PairTask<'a> {
    pub categories: &'a CategoryConfig,
    pub method: TransformMethod,
    pub vocab: &'a Vocab,
    pub max_seq_len: usize,
}

impl PairTask<'_> {
    pub fn head(&self) -> HeadKind {
        HeadKind::PairClassifier {
            classes: self.method.num_classes(),
        }
    }

    pub fn examples(&self, reviews: &[Review]) -> Result<Vec<Example>> {
        pair_examples(
            &transform_dataset(reviews, self.categories, self.method),
            self.vocab,
            self.max_seq_len,
        )
    }

    pub fn predict(&self, model: &Model, reviews: &[Review]) -> Result<Predictions> {
        predict_pairs(model, reviews, self.categories, self.method, self.vocab, self.max_seq_len)
    }

    /// Trains a pair classifier on `train_reviews`; when `validation` is
    /// nonempty its loss and F1 are tracked per epoch.
    pub fn train(
        &self,
        encoder_config: &EncoderConfig,
        encoder: EncoderParams,
        train_reviews: &[Review],
        validation: &[Review],
        strategy: AdaptationStrategy,
        hp: &Hyperparams,
    ) -> Result<(Model, TrainHistory)> {
        let model = Model::new(encoder_config.clone(), encoder, self.head(), hp.seed)?;
        self.train_model(model, train_reviews, validation, strategy, hp)
    }

    /// Continues training an existing pair classifier.
    pub fn train_model(
        &self,
        model: Model,
        train_reviews: &[Review],
        validation: &[Review],
        strategy: AdaptationStrategy,
        hp: &Hyperparams,
    ) -> Result<(Model, TrainHistory)> {
        if model.head.kind != self.head() {
            return Err(crate::error::Error::InvalidArgument(format!(
                "model head {:?} does not fit method {}",
                model.head.kind, self.method
            )));
        }
        let train_set = self.examples(train_reviews)?;
        let validation_set = self.examples(validation)?;
        let gold = crate::eval::gold_of(validation);
        let f1 = |m: &Model| -> Result<f64> { Ok(crate::eval::f1_scores(&self.predict(m, validation)?, &gold)?.micro_f1) };
        let tracking = Validation {
            examples: &validation_set,
            f1: if validation.is_empty() { None } else { Some(&f1) },
        };
        train(model, &train_set, &tracking, strategy, hp)
    }
}
