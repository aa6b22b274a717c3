//! Masked language modeling and next sentence prediction.

use ndarray::{Array1, Array2, Axis};
use rand::seq::{index, IndexedRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::model::{backward, forward_trimmed, layer_norm, layer_norm_backward, EncoderOutput};
use super::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::input_repr::{encode_pair, InputRepresentation};
use crate::rng;
use crate::tokenizer::{SpecialIds, Tokenizer, Vocab};
use crate::training::adam::Adam;

/// How selected positions are corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskingScheme {
    /// Every selected token becomes `[MASK]`.
    #[default]
    AllMask,
    /// 80% `[MASK]`, 10% random token, 10% unchanged.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedBatch {
    pub token_ids: Vec<usize>,
    /// Ascending positions whose original token must be predicted.
    pub target_positions: Vec<usize>,
    pub target_ids: Vec<usize>,
}

/// Unpadded positions that hold neither `[CLS]`, `[SEP]` nor `[PAD]`.
pub fn maskable_positions(repr: &InputRepresentation, special: SpecialIds) -> Vec<usize> {
    (0..repr.real_length)
        .filter(|&i| {
            let t = repr.token_ids[i];
            t != special.cls && t != special.sep && t != special.pad
        })
        .collect()
}

/// Selects `round(rate * maskable)` positions without replacement and replaces
/// them with `[MASK]`.
pub fn mlm_mask(repr: &InputRepresentation, special: SpecialIds, rate: f64, seed: u64) -> Result<MaskedBatch> {
    mlm_mask_with(repr, special, rate, &mut rng::stream(seed, rng::MASK), MaskingScheme::AllMask, 0)
}

pub fn mlm_mask_with(
    repr: &InputRepresentation,
    special: SpecialIds,
    rate: f64,
    rng: &mut rng::Rng,
    scheme: MaskingScheme,
    vocab_size: usize,
) -> Result<MaskedBatch> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("mask rate must lie in [0, 1], got {rate}")));
    }
    let candidates = maskable_positions(repr, special);
    let count = (rate * candidates.len() as f64).round() as usize;
    let mut target_positions: Vec<usize> = index::sample(rng, candidates.len(), count)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    target_positions.sort_unstable();
    let mut token_ids = repr.token_ids.clone();
    let target_ids = target_positions.iter().map(|&p| repr.token_ids[p]).collect();
    for &p in &target_positions {
        token_ids[p] = match scheme {
            MaskingScheme::AllMask => special.mask,
            MaskingScheme::Mixed => {
                let roll: f64 = rng.random();
                if roll < 0.8 || vocab_size == 0 {
                    special.mask
                } else if roll < 0.9 {
                    rng.random_range(0..vocab_size)
                } else {
                    token_ids[p]
                }
            }
        };
    }
    Ok(MaskedBatch {
        token_ids,
        target_positions,
        target_ids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NspLabel {
    IsNext,
    NotNext,
}

impl NspLabel {
    pub fn index(self) -> usize {
        match self {
            NspLabel::IsNext => 0,
            NspLabel::NotNext => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NspPair {
    pub sentence_a: String,
    pub sentence_b: String,
    pub label: NspLabel,
    /// Source document of each sentence.
    pub doc_a: usize,
    pub doc_b: usize,
}

/// Samples `n` sentence pairs, each `IsNext` with probability 0.5.
pub fn nsp_sample(documents: &[Vec<String>], n: usize, seed: u64) -> Result<Vec<NspPair>> {
    nsp_sample_with(documents, n, 0.5, &mut rng::stream(seed, rng::NSP))
}

pub fn nsp_sample_with(
    documents: &[Vec<String>],
    n: usize,
    is_next_probability: f64,
    rng: &mut rng::Rng,
) -> Result<Vec<NspPair>> {
    if !(0.0..=1.0).contains(&is_next_probability) {
        return Err(Error::InvalidArgument("IsNext probability must lie in [0, 1]".into()));
    }
    let multi: Vec<usize> = (0..documents.len()).filter(|&d| documents[d].len() >= 2).collect();
    let nonempty: Vec<usize> = (0..documents.len()).filter(|&d| !documents[d].is_empty()).collect();
    if multi.is_empty() && is_next_probability > 0.0 {
        return Err(Error::InvalidArgument(
            "next sentence sampling needs a document with at least 2 sentences".into(),
        ));
    }
    if nonempty.len() < 2 && is_next_probability < 1.0 {
        return Err(Error::InvalidArgument(
            "NotNext sampling needs at least 2 nonempty documents".into(),
        ));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.random_bool(is_next_probability) {
            let &d = multi.choose(rng).expect("checked nonempty");
            let i = rng.random_range(0..documents[d].len() - 1);
            out.push(NspPair {
                sentence_a: documents[d][i].clone(),
                sentence_b: documents[d][i + 1].clone(),
                label: NspLabel::IsNext,
                doc_a: d,
                doc_b: d,
            });
        } else {
            let a = rng.random_range(0..nonempty.len());
            let mut b = rng.random_range(0..nonempty.len() - 1);
            if b >= a {
                b += 1;
            }
            let (da, db) = (nonempty[a], nonempty[b]);
            out.push(NspPair {
                sentence_a: documents[da].choose(rng).expect("nonempty").clone(),
                sentence_b: documents[db].choose(rng).expect("nonempty").clone(),
                label: NspLabel::NotNext,
                doc_a: da,
                doc_b: db,
            });
        }
    }
    Ok(out)
}

/// One pretraining example: a masked pair and its NSP label.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainExample {
    pub repr: InputRepresentation,
    pub masked: MaskedBatch,
    pub nsp: NspLabel,
}

fn log_softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Joint loss (mean MLM cross-entropy over targets + NSP cross-entropy) for
/// one example. When `grad` is given, parameter gradients scaled by `weight`
/// are accumulated into it.
pub(crate) fn example_loss(
    example: &PretrainExample,
    params: &EncoderParams,
    config: &EncoderConfig,
    grad: Option<(&mut EncoderParams, f64)>,
    dropout: Option<&mut rng::Rng>,
) -> Result<(f64, f64)> {
    let mut repr = example.repr.clone();
    repr.token_ids.clone_from(&example.masked.token_ids);
    let (output, cache) = forward_trimmed(&repr, params, config, dropout)?;
    let EncoderOutput { hidden, cls } = &output;

    // masked LM over target rows, output layer tied to the token table
    let targets = &example.masked.target_positions;
    let m = targets.len();
    let mut mlm_loss = 0.0;
    let mut d_hidden = Array2::zeros(hidden.dim());
    let mut mlm_parts = None;
    if m > 0 {
        let rows = hidden.select(Axis(0), targets);
        let (z, norm_cache) = layer_norm(&rows.view(), &params.mlm_norm, config.layer_norm_eps);
        let mut logits = z.dot(&params.embeddings.token.t());
        logits += &params.mlm_bias;
        let mut d_logits = Array2::zeros(logits.dim());
        for (r, (&target, row)) in example.masked.target_ids.iter().zip(logits.axis_iter(Axis(0))).enumerate() {
            let logp = log_softmax_row(row.as_slice().expect("contiguous"));
            mlm_loss -= logp[target];
            for (j, lp) in logp.iter().enumerate() {
                d_logits[[r, j]] = lp.exp();
            }
            d_logits[[r, target]] -= 1.0;
        }
        mlm_loss /= m as f64;
        d_logits /= m as f64;
        mlm_parts = Some((z, norm_cache, d_logits, rows));
    }

    let mut nsp_logits = cls.dot(&params.nsp.weight);
    nsp_logits += &params.nsp.bias;
    let nsp_logp = log_softmax_row(nsp_logits.as_slice().expect("contiguous"));
    let nsp_loss = -nsp_logp[example.nsp.index()];

    if let Some((grad, weight)) = grad {
        let mut d_cls = Array1::zeros(cls.len());
        let mut d_nsp = Array1::from_iter(nsp_logp.iter().map(|lp| lp.exp()));
        d_nsp[example.nsp.index()] -= 1.0;
        d_nsp *= weight;
        ndarray::linalg::general_mat_mul(
            1.0,
            &cls.view().insert_axis(Axis(1)),
            &d_nsp.view().insert_axis(Axis(0)),
            1.0,
            &mut grad.nsp.weight,
        );
        grad.nsp.bias += &d_nsp;
        d_cls += &params.nsp.weight.dot(&d_nsp);

        if let Some((z, norm_cache, mut d_logits, _rows)) = mlm_parts {
            d_logits *= weight;
            grad.mlm_bias += &d_logits.sum_axis(Axis(0));
            ndarray::linalg::general_mat_mul(1.0, &d_logits.t(), &z, 1.0, &mut grad.embeddings.token);
            let dz = d_logits.dot(&params.embeddings.token);
            let d_rows = layer_norm_backward(&dz.view(), &norm_cache, &params.mlm_norm, &mut grad.mlm_norm);
            for (r, &p) in targets.iter().enumerate() {
                let mut row = d_hidden.row_mut(p);
                row += &d_rows.row(r);
            }
        }
        backward(
            &cache,
            &output,
            params,
            config,
            Some(&d_hidden.view()),
            Some(&d_cls.view()),
            grad,
        );
    }
    Ok((mlm_loss, nsp_loss))
}

/// Builds masked NSP examples from sampled pairs.
pub fn build_examples(
    pairs: &[NspPair],
    vocab: &Vocab,
    max_seq_len: usize,
    mask_rate: f64,
    scheme: MaskingScheme,
    rng: &mut rng::Rng,
) -> Result<Vec<PretrainExample>> {
    let tokenizer = Tokenizer::new(vocab);
    pairs
        .iter()
        .map(|pair| {
            let a = tokenizer.tokenize(&pair.sentence_a);
            let b = tokenizer.tokenize(&pair.sentence_b);
            let a = if a.is_empty() {
                vec![crate::tokenizer::Token {
                    surface: crate::tokenizer::UNK.to_string(),
                    id: vocab.special().unk,
                    is_continuation: false,
                }]
            } else {
                a
            };
            let repr = encode_pair(&a, &b, vocab, max_seq_len)?;
            let masked = mlm_mask_with(&repr, vocab.special(), mask_rate, rng, scheme, vocab.len())?;
            Ok(PretrainExample {
                repr,
                masked,
                nsp: pair.label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainParams {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mask_rate: f64,
    pub max_seq_len: usize,
    #[serde(default)]
    pub masking: MaskingScheme,
    pub seed: u64,
}

impl Default for PretrainParams {
    fn default() -> Self {
        Self {
            epochs: 4,
            steps_per_epoch: 50,
            batch_size: 16,
            learning_rate: 1e-3,
            mask_rate: 0.15,
            max_seq_len: 32,
            masking: MaskingScheme::AllMask,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PretrainHistory {
    /// Mean joint loss per epoch.
    pub loss: Vec<f64>,
    pub mlm_loss: Vec<f64>,
    pub nsp_loss: Vec<f64>,
}

/// Mean (mlm, nsp) loss over examples, without gradients.
pub fn evaluate_loss(
    examples: &[PretrainExample],
    params: &EncoderParams,
    config: &EncoderConfig,
) -> Result<(f64, f64)> {
    let mut total = (0.0, 0.0);
    for ex in examples {
        let (m, n) = example_loss(ex, params, config, None, None)?;
        total.0 += m;
        total.1 += n;
    }
    let n = examples.len().max(1) as f64;
    Ok((total.0 / n, total.1 / n))
}

/// Fraction of examples whose NSP argmax matches the label.
pub fn nsp_accuracy(examples: &[PretrainExample], params: &EncoderParams, config: &EncoderConfig) -> Result<f64> {
    let mut correct = 0usize;
    for ex in examples {
        let out = forward_trimmed(&ex.repr, params, config, None)?.0;
        let logits = out.cls.dot(&params.nsp.weight) + &params.nsp.bias;
        let predicted = if logits[0] >= logits[1] { NspLabel::IsNext } else { NspLabel::NotNext };
        correct += usize::from(predicted == ex.nsp);
    }
    Ok(correct as f64 / examples.len().max(1) as f64)
}

/// Pretrains freshly initialized parameters on `corpus` (documents of sentences).
pub fn pretrain(
    corpus: &[Vec<String>],
    vocab: &Vocab,
    config: &EncoderConfig,
    hp: &PretrainParams,
) -> Result<(EncoderParams, PretrainHistory)> {
    if config.vocab_size != vocab.len() {
        return Err(Error::ShapeMismatch(format!(
            "encoder vocab_size {} but vocabulary has {} tokens",
            config.vocab_size,
            vocab.len()
        )));
    }
    let params = EncoderParams::init(config, &mut rng::stream(hp.seed, rng::INIT))?;
    pretrain_from(params, corpus, vocab, config, hp)
}

/// Continues pretraining from `params`.
pub fn pretrain_from(
    mut params: EncoderParams,
    corpus: &[Vec<String>],
    vocab: &Vocab,
    config: &EncoderConfig,
    hp: &PretrainParams,
) -> Result<(EncoderParams, PretrainHistory)> {
    if corpus.iter().all(Vec::is_empty) {
        return Err(Error::InvalidArgument("pretraining corpus is empty".into()));
    }
    if hp.batch_size == 0 || hp.learning_rate <= 0.0 {
        return Err(Error::InvalidArgument("batch size and learning rate must be positive".into()));
    }
    if hp.max_seq_len > config.max_positions {
        return Err(Error::InvalidArgument("max_seq_len exceeds max_positions".into()));
    }
    params.check_shapes(config)?;
    let mut adam = Adam::new(hp.learning_rate);
    let mut history = PretrainHistory::default();
    let mut dropout_rng = rng::stream(hp.seed, rng::DROPOUT);
    for epoch in 0..hp.epochs {
        let (mut sum_mlm, mut sum_nsp) = (0.0, 0.0);
        for step in 0..hp.steps_per_epoch {
            let global = (epoch * hp.steps_per_epoch + step) as u64;
            let pairs = nsp_sample_with(corpus, hp.batch_size, 0.5, &mut rng::substream(hp.seed, rng::NSP, global))?;
            let examples = build_examples(
                &pairs,
                vocab,
                hp.max_seq_len,
                hp.mask_rate,
                hp.masking,
                &mut rng::substream(hp.seed, rng::MASK, global),
            )?;
            let mut grad = EncoderParams::zeros(config);
            let weight = 1.0 / examples.len() as f64;
            let (mut step_mlm, mut step_nsp) = (0.0, 0.0);
            for ex in &examples {
                let (m, n) = example_loss(ex, &params, config, Some((&mut grad, weight)), Some(&mut dropout_rng))?;
                step_mlm += m * weight;
                step_nsp += n * weight;
            }
            let loss = step_mlm + step_nsp;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step, loss });
            }
            sum_mlm += step_mlm;
            sum_nsp += step_nsp;
            let grads: Vec<_> = grad.tensors().into_iter().map(|(_, g)| g).collect();
            let views: Vec<_> = params.tensors_mut().into_iter().map(|(_, p)| p).collect();
            adam.step(views, grads);
        }
        let steps = hp.steps_per_epoch.max(1) as f64;
        history.mlm_loss.push(sum_mlm / steps);
        history.nsp_loss.push(sum_nsp / steps);
        history.loss.push((sum_mlm + sum_nsp) / steps);
        log::info!(
            "pretrain epoch {epoch}: loss {:.4} (mlm {:.4}, nsp {:.4})",
            history.loss[epoch],
            history.mlm_loss[epoch],
            history.nsp_loss[epoch]
        );
    }
    Ok((params, history))
}
