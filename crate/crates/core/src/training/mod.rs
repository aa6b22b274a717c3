//! Classification heads, feature-extraction vs fine-tuning training, and the
//! experiment drivers built on them.

pub mod adam;
pub mod grid;
pub mod pair;
pub mod suite;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, ArrayView1, ArrayViewD, ArrayViewMutD, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encoder::model::{backward, forward_trimmed};
use crate::encoder::{Dense, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::input_repr::InputRepresentation;
use crate::rng;

use adam::Adam;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    /// One sigmoid output per aspect category.
    MultilabelAspect { categories: usize },
    /// Softmax over {positive, negative}.
    PerCategorySentiment,
    /// Softmax over 2 (B-methods) or 3 (M-methods) classes.
    PairClassifier { classes: usize },
}

impl HeadKind {
    pub fn outputs(self) -> usize {
        match self {
            HeadKind::MultilabelAspect { categories } => categories,
            HeadKind::PerCategorySentiment => 2,
            HeadKind::PairClassifier { classes } => classes,
        }
    }

    pub fn is_multilabel(self) -> bool {
        matches!(self, HeadKind::MultilabelAspect { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub kind: HeadKind,
    pub dense: Dense,
}

impl Head {
    pub fn init(kind: HeadKind, hidden: usize, std: f64, rng: &mut rng::Rng) -> Self {
        Self {
            kind,
            dense: Dense {
                weight: crate::encoder::truncated_normal((hidden, kind.outputs()), std, rng),
                bias: Array1::zeros(kind.outputs()),
            },
        }
    }

    pub fn zeros(kind: HeadKind, hidden: usize) -> Self {
        Self {
            kind,
            dense: Dense::zeros(hidden, kind.outputs()),
        }
    }

    fn logits(&self, cls: &ArrayView1<'_, f64>) -> Array1<f64> {
        let mut z = cls.dot(&self.dense.weight);
        z += &self.dense.bias;
        z
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softmax(z: &Array1<f64>) -> Array1<f64> {
    let max = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = z.mapv(|v| (v - max).exp());
    let sum = e.sum();
    e / sum
}

fn activate(kind: HeadKind, logits: &Array1<f64>) -> Vec<f64> {
    if kind.is_multilabel() {
        logits.iter().map(|&z| sigmoid(z)).collect()
    } else {
        softmax(logits).to_vec()
    }
}

/// Affine map then sigmoid (multilabel) or softmax (other heads).
pub fn head_forward(cls: &ArrayView1<'_, f64>, head: &Head) -> Result<Vec<f64>> {
    if cls.len() != head.dense.weight.nrows() || head.dense.weight.ncols() != head.kind.outputs() {
        return Err(Error::ShapeMismatch(format!(
            "cls vector of length {} for head weight {:?} ({} outputs)",
            cls.len(),
            head.dense.weight.dim(),
            head.kind.outputs()
        )));
    }
    Ok(activate(head.kind, &head.logits(cls)))
}

/// Gold target for one example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gold {
    Class(usize),
    Labels(Vec<bool>),
}

const PROB_FLOOR: f64 = 1e-12;

/// Loss from scores: mean binary cross-entropy for the multilabel head,
/// categorical cross-entropy otherwise. Probabilities are clamped to
/// `[1e-12, 1 - 1e-12]`.
pub fn compute_loss(scores: &[f64], gold: &Gold, kind: HeadKind) -> Result<f64> {
    let clamp = |p: f64| p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    match (kind.is_multilabel(), gold) {
        (true, Gold::Labels(labels)) => {
            if labels.len() != scores.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {} scores",
                    labels.len(),
                    scores.len()
                )));
            }
            let total: f64 = scores
                .iter()
                .zip(labels)
                .map(|(&p, &y)| if y { -clamp(p).ln() } else { -(1.0 - clamp(p)).ln() })
                .sum();
            Ok(total / scores.len() as f64)
        }
        (false, Gold::Class(c)) => {
            if *c >= scores.len() {
                return Err(Error::GoldOutOfRange {
                    label: *c,
                    classes: scores.len(),
                });
            }
            Ok(-scores[*c].max(PROB_FLOOR).ln())
        }
        _ => Err(Error::InvalidArgument(format!("gold {gold:?} does not fit head {kind:?}"))),
    }
}

/// Loss and its gradient w.r.t. the logits, computed stably from logits.
fn loss_from_logits(logits: &Array1<f64>, gold: &Gold, kind: HeadKind) -> Result<(f64, Array1<f64>)> {
    match (kind.is_multilabel(), gold) {
        (true, Gold::Labels(labels)) => {
            if labels.len() != logits.len() {
                return Err(Error::ShapeMismatch("label count differs from head outputs".into()));
            }
            let k = logits.len() as f64;
            let mut loss = 0.0;
            let mut d = Array1::zeros(logits.len());
            for (i, (&z, &y)) in logits.iter().zip(labels).enumerate() {
                let y = f64::from(u8::from(y));
                // softplus(z) - y z
                loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
                d[i] = (sigmoid(z) - y) / k;
            }
            Ok((loss / k, d))
        }
        (false, Gold::Class(c)) => {
            if *c >= logits.len() {
                return Err(Error::GoldOutOfRange {
                    label: *c,
                    classes: logits.len(),
                });
            }
            let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            let mut d = logits.mapv(|z| (z - lse).exp());
            d[*c] -= 1.0;
            Ok((lse - logits[*c], d))
        }
        _ => Err(Error::InvalidArgument(format!("gold {gold:?} does not fit head {kind:?}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptationStrategy {
    /// Encoder frozen; only the head is trained.
    FeatureExtraction,
    /// Encoder and head are trained together.
    FineTuning,
}

impl fmt::Display for AdaptationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdaptationStrategy::FeatureExtraction => "feature-extraction",
            AdaptationStrategy::FineTuning => "fine-tuning",
        })
    }
}

impl FromStr for AdaptationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "feature-extraction" | "fe" => Ok(AdaptationStrategy::FeatureExtraction),
            "fine-tuning" | "ft" => Ok(AdaptationStrategy::FineTuning),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            batch_size: 32,
            epochs: 25,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub validation_f1: Option<f64>,
    /// Wall-clock time; left out of every serialized form so outputs are
    /// reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    /// `epoch,train_loss,validation_loss,validation_f1` rows. Timing is left
    /// out so the file is reproducible.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.10}")).unwrap_or_default();
        let mut out = String::from("epoch,train_loss,validation_loss,validation_f1\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:.10},{},{}\n",
                e.epoch,
                e.train_loss,
                opt(e.validation_loss),
                opt(e.validation_f1)
            ));
        }
        out
    }
}

/// An encoder with a classification head on its `[CLS]` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: EncoderConfig,
    pub encoder: EncoderParams,
    pub head: Head,
}

impl Model {
    /// Wraps a (pretrained) encoder with a freshly initialized head.
    pub fn new(config: EncoderConfig, encoder: EncoderParams, kind: HeadKind, seed: u64) -> Result<Self> {
        encoder.check_shapes(&config)?;
        let head = Head::init(kind, config.hidden, config.init_std, &mut rng::substream(seed, rng::INIT, 1));
        Ok(Self { config, encoder, head })
    }

    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = self.encoder.tensors();
        out.push(("head.weight".into(), self.head.dense.weight.view().into_dyn()));
        out.push(("head.bias".into(), self.head.dense.bias.view().into_dyn()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = self.encoder.tensors_mut();
        out.push(("head.weight".into(), self.head.dense.weight.view_mut().into_dyn()));
        out.push(("head.bias".into(), self.head.dense.bias.view_mut().into_dyn()));
        out
    }

    /// `[CLS]` (pooled) vector of one input, inference mode.
    pub fn features(&self, repr: &InputRepresentation) -> Result<Array1<f64>> {
        Ok(forward_trimmed(repr, &self.encoder, &self.config, None)?.0.cls)
    }

    pub fn scores(&self, repr: &InputRepresentation) -> Result<Vec<f64>> {
        head_forward(&self.features(repr)?.view(), &self.head)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub repr: InputRepresentation,
    pub gold: Gold,
}

/// Loss of one example, accumulating gradients (scaled by `weight`) into the
/// head and, when given, the encoder.
pub(crate) fn example_loss_grad(
    model: &Model,
    example: &Example,
    head_grad: Option<&mut Dense>,
    encoder_grad: Option<&mut EncoderParams>,
    weight: f64,
    dropout: Option<&mut rng::Rng>,
) -> Result<f64> {
    let (output, cache) = forward_trimmed(&example.repr, &model.encoder, &model.config, dropout)?;
    let logits = model.head.logits(&output.cls.view());
    let (loss, mut d_logits) = loss_from_logits(&logits, &example.gold, model.head.kind)?;
    d_logits *= weight;
    if let Some(g) = head_grad {
        accumulate_head_grad(g, &output.cls.view(), &d_logits);
    }
    if let Some(eg) = encoder_grad {
        let d_cls = model.head.dense.weight.dot(&d_logits);
        backward(&cache, &output, &model.encoder, &model.config, None, Some(&d_cls.view()), eg);
    }
    Ok(loss)
}

fn accumulate_head_grad(g: &mut Dense, cls: &ArrayView1<'_, f64>, d_logits: &Array1<f64>) {
    ndarray::linalg::general_mat_mul(
        1.0,
        &cls.view().insert_axis(Axis(1)),
        &d_logits.view().insert_axis(Axis(0)),
        1.0,
        &mut g.weight,
    );
    g.bias += d_logits;
}

/// Mean loss over examples, inference mode.
pub fn evaluate_loss(model: &Model, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ex in examples {
        total += example_loss_grad(model, ex, None, None, 1.0, None)?;
    }
    Ok(total / examples.len() as f64)
}

/// Validation data and an optional F1 callback run after every epoch.
#[derive(Default)]
pub struct Validation<'a> {
    pub examples: &'a [Example],
    pub f1: Option<&'a dyn Fn(&Model) -> Result<f64>>,
}

/// Minibatch Adam training for `hp.epochs` epochs.
///
/// Under feature extraction the encoder is never written; `[CLS]` features
/// are computed once and only the head is optimized.
pub fn train(
    mut model: Model,
    train_set: &[Example],
    validation: &Validation<'_>,
    strategy: AdaptationStrategy,
    hp: &Hyperparams,
) -> Result<(Model, TrainHistory)> {
    hp.validate()?;
    if hp.epochs == 0 {
        return Ok((model, TrainHistory::default()));
    }
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let features: Option<Vec<Array1<f64>>> = match strategy {
        AdaptationStrategy::FeatureExtraction => Some(
            train_set
                .iter()
                .map(|ex| model.features(&ex.repr))
                .collect::<Result<_>>()?,
        ),
        AdaptationStrategy::FineTuning => None,
    };
    let validation_features: Option<Vec<Array1<f64>>> = match strategy {
        AdaptationStrategy::FeatureExtraction => Some(
            validation
                .examples
                .iter()
                .map(|ex| model.features(&ex.repr))
                .collect::<Result<_>>()?,
        ),
        AdaptationStrategy::FineTuning => None,
    };

    let mut adam = Adam::new(hp.learning_rate);
    let mut dropout_rng = rng::stream(hp.seed, rng::DROPOUT);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let kind = model.head.kind;
    let hidden = model.config.hidden;

    for epoch in 0..hp.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng::substream(hp.seed, rng::SHUFFLE, epoch as u64));
        let mut epoch_loss = 0.0;
        for (step, batch) in order.chunks(hp.batch_size).enumerate() {
            let weight = 1.0 / batch.len() as f64;
            let mut head_grad = Dense::zeros(hidden, kind.outputs());
            let mut batch_loss = 0.0;
            match &features {
                Some(feats) => {
                    for &i in batch {
                        let logits = model.head.logits(&feats[i].view());
                        let (loss, mut d) = loss_from_logits(&logits, &train_set[i].gold, kind)?;
                        d *= weight;
                        accumulate_head_grad(&mut head_grad, &feats[i].view(), &d);
                        batch_loss += loss * weight;
                    }
                    check_loss(batch_loss, epoch, step)?;
                    adam.step(
                        vec![
                            model.head.dense.weight.view_mut().into_dyn(),
                            model.head.dense.bias.view_mut().into_dyn(),
                        ],
                        vec![head_grad.weight.view().into_dyn(), head_grad.bias.view().into_dyn()],
                    );
                }
                None => {
                    let mut encoder_grad = EncoderParams::zeros(&model.config);
                    for &i in batch {
                        let loss = example_loss_grad(
                            &model,
                            &train_set[i],
                            Some(&mut head_grad),
                            Some(&mut encoder_grad),
                            weight,
                            Some(&mut dropout_rng),
                        )?;
                        batch_loss += loss * weight;
                    }
                    check_loss(batch_loss, epoch, step)?;
                    let mut grads: Vec<ArrayViewD<'_, f64>> =
                        encoder_grad.tensors().into_iter().map(|(_, g)| g).collect();
                    grads.push(head_grad.weight.view().into_dyn());
                    grads.push(head_grad.bias.view().into_dyn());
                    let params: Vec<_> = model.tensors_mut().into_iter().map(|(_, p)| p).collect();
                    adam.step(params, grads);
                }
            }
            epoch_loss += batch_loss * batch.len() as f64;
        }
        let train_loss = epoch_loss / train_set.len() as f64;

        let validation_loss = if validation.examples.is_empty() {
            None
        } else if let Some(vf) = &validation_features {
            let mut total = 0.0;
            for (f, ex) in vf.iter().zip(validation.examples) {
                total += loss_from_logits(&model.head.logits(&f.view()), &ex.gold, kind)?.0;
            }
            Some(total / vf.len() as f64)
        } else {
            Some(evaluate_loss(&model, validation.examples)?)
        };
        let validation_f1 = validation.f1.map(|f| f(&model)).transpose()?;
        let seconds = started.elapsed().as_secs_f64();
        log::info!(
            "epoch {epoch}: train loss {train_loss:.5}, validation loss {validation_loss:?}, F1 {validation_f1:?} ({seconds:.1}s)"
        );
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            validation_loss,
            validation_f1,
            seconds,
        });
    }
    Ok((model, history))
}

fn check_loss(loss: f64, epoch: usize, step: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { epoch, step, loss })
    }
}

/// Scores for every input, in input order. `batch_size` only controls
/// chunking; results do not depend on it.
pub fn predict(model: &Model, inputs: &[InputRepresentation], batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(batch_size.max(1)) {
        for repr in chunk {
            out.push(model.scores(repr)?);
        }
    }
    Ok(out)
}
