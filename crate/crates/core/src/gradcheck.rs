//! Central finite-difference checks of analytic gradients.

use ndarray::{ArrayD, ArrayViewMutD};
use serde::{Deserialize, Serialize};

use crate::encoder::pretrain::{example_loss, PretrainExample};
use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::training::{example_loss_grad, Example, Model};

/// Something whose named tensors can be perturbed in place.
pub trait Parameters: Clone {
    fn parameters_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)>;
}

impl Parameters for EncoderParams {
    fn parameters_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        self.tensors_mut()
    }
}

impl Parameters for Model {
    fn parameters_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        self.tensors_mut()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub name: String,
    /// `|analytic - numeric| / max(|analytic|, |numeric|, ZERO_FLOOR)` using
    /// Euclidean norms over the whole tensor.
    pub relative_error: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
}

/// Gradient norm below which a group counts as identically zero. Groups
/// such as the attention key bias have an exactly zero gradient (softmax is
/// shift invariant), where finite differences only see rounding noise.
pub const ZERO_FLOOR: f64 = 1e-5;

fn norm(values: impl Iterator<Item = f64>) -> f64 {
    values.map(|v| v * v).sum::<f64>().sqrt()
}

fn nudge<P: Parameters>(params: &mut P, tensor: usize, element: usize, delta: f64) {
    let mut tensors = params.parameters_mut();
    let data = tensors[tensor]
        .1
        .as_slice_mut()
        .expect("parameter tensors are contiguous");
    data[element] += delta;
}

/// Compares `analytic` (same order and shapes as `parameters_mut`) with
/// central differences of `loss`.
pub fn compare<P, L>(params: &P, analytic: &[(String, ArrayD<f64>)], step: f64, loss: L) -> Result<Vec<GroupCheck>>
where
    P: Parameters,
    L: Fn(&P) -> Result<f64>,
{
    let mut work = params.clone();
    let shapes: Vec<(String, Vec<usize>)> = work
        .parameters_mut()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if shapes.len() != analytic.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradient tensors for {} parameters",
            analytic.len(),
            shapes.len()
        )));
    }
    let mut out = Vec::with_capacity(shapes.len());
    for (t, ((name, shape), (_, grad))) in shapes.iter().zip(analytic).enumerate() {
        if grad.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch(format!("gradient for {name} has shape {:?}", grad.shape())));
        }
        let mut numeric = Vec::with_capacity(grad.len());
        for e in 0..grad.len() {
            nudge(&mut work, t, e, step);
            let up = loss(&work)?;
            nudge(&mut work, t, e, -2.0 * step);
            let down = loss(&work)?;
            nudge(&mut work, t, e, step);
            numeric.push((up - down) / (2.0 * step));
        }
        let analytic_norm = norm(grad.iter().copied());
        let numeric_norm = norm(numeric.iter().copied());
        let diff = norm(grad.iter().zip(&numeric).map(|(a, n)| a - n));
        out.push(GroupCheck {
            name: name.clone(),
            relative_error: diff / analytic_norm.max(numeric_norm).max(ZERO_FLOOR),
            analytic_norm,
            numeric_norm,
        });
    }
    Ok(out)
}

fn owned(tensors: Vec<(String, ndarray::ArrayViewD<'_, f64>)>) -> Vec<(String, ArrayD<f64>)> {
    tensors.into_iter().map(|(n, t)| (n, t.to_owned())).collect()
}

fn require_no_dropout(config: &EncoderConfig) -> Result<()> {
    if config.dropout_rate != 0.0 {
        return Err(Error::InvalidArgument("gradient checks need dropout_rate 0".into()));
    }
    Ok(())
}

/// Mean classification loss of `model` over `examples`.
pub fn classification_loss(model: &Model, examples: &[Example]) -> Result<f64> {
    let w = 1.0 / examples.len() as f64;
    examples
        .iter()
        .map(|ex| Ok(example_loss_grad(model, ex, None, None, 1.0, None)? * w))
        .sum()
}

/// Gradient check of the mean classification loss over every tensor of the
/// model (encoder groups unused by the loss have zero gradients).
pub fn check_classifier_gradients(model: &Model, examples: &[Example], step: f64) -> Result<Vec<GroupCheck>> {
    require_no_dropout(&model.config)?;
    if examples.is_empty() {
        return Err(Error::InvalidArgument("gradient check needs at least one example".into()));
    }
    let mut encoder_grad = EncoderParams::zeros(&model.config);
    let mut head_grad = crate::encoder::Dense::zeros(model.config.hidden, model.head.kind.outputs());
    let w = 1.0 / examples.len() as f64;
    for ex in examples {
        example_loss_grad(model, ex, Some(&mut head_grad), Some(&mut encoder_grad), w, None)?;
    }
    let mut analytic = owned(encoder_grad.tensors());
    analytic.push(("head.weight".into(), head_grad.weight.into_dyn()));
    analytic.push(("head.bias".into(), head_grad.bias.into_dyn()));
    compare(model, &analytic, step, |m| classification_loss(m, examples))
}

/// Gradient check of the mean joint MLM + NSP loss.
pub fn check_pretrain_gradients(
    params: &EncoderParams,
    config: &EncoderConfig,
    examples: &[PretrainExample],
    step: f64,
) -> Result<Vec<GroupCheck>> {
    require_no_dropout(config)?;
    if examples.is_empty() {
        return Err(Error::InvalidArgument("gradient check needs at least one example".into()));
    }
    let w = 1.0 / examples.len() as f64;
    let mut grad = EncoderParams::zeros(config);
    for ex in examples {
        example_loss(ex, params, config, Some((&mut grad, w)), None)?;
    }
    compare(params, &owned(grad.tensors()), step, |p| {
        examples.iter().try_fold(0.0, |acc, ex| {
            let (mlm, nsp) = example_loss(ex, p, config, None, None)?;
            Ok(acc + (mlm + nsp) * w)
        })
    })
}

/// Largest relative error across groups.
pub fn max_relative_error(checks: &[GroupCheck]) -> f64 {
    checks.iter().map(|c| c.relative_error).fold(0.0, f64::max)
}
