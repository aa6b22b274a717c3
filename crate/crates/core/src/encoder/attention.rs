//! Multi-head scaled dot-product self-attention over one sequence.

use ndarray::{s, Array2, ArrayView2, Axis};

use super::{Dense, LayerParams};
use crate::error::{Error, Result};

pub(crate) fn linear(x: &ArrayView2<'_, f64>, dense: &Dense) -> Array2<f64> {
    let mut y = x.dot(&dense.weight);
    y += &dense.bias;
    y
}

/// Accumulates parameter gradients of `y = x W + b` and returns `dL/dx`.
pub(crate) fn linear_backward(
    x: &ArrayView2<'_, f64>,
    dy: &ArrayView2<'_, f64>,
    dense: &Dense,
    grad: &mut Dense,
) -> Array2<f64> {
    ndarray::linalg::general_mat_mul(1.0, &x.t(), dy, 1.0, &mut grad.weight);
    grad.bias += &dy.sum_axis(Axis(0));
    dy.dot(&dense.weight.t())
}

/// Row-wise softmax over keys whose mask entry is 1. Masked keys get exactly
/// zero weight; a row with no visible key is all zeros.
pub fn masked_softmax(scores: &mut Array2<f64>, mask: &[u8]) {
    for mut row in scores.axis_iter_mut(Axis(0)) {
        let max = row
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m != 0)
            .map(|(&s, _)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (s, &m) in row.iter_mut().zip(mask) {
            if m != 0 {
                *s = (*s - max).exp();
                sum += *s;
            } else {
                *s = 0.0;
            }
        }
        if sum > 0.0 {
            row.mapv_inplace(|s| s / sum);
        }
    }
}

pub(crate) struct AttentionCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// One (T, T) weight matrix per head.
    pub(crate) probs: Vec<Array2<f64>>,
    context: Array2<f64>,
}

pub(crate) fn attention_forward(
    x: &ArrayView2<'_, f64>,
    mask: &[u8],
    layer: &LayerParams,
    heads: usize,
) -> (Array2<f64>, AttentionCache) {
    let (t, h) = x.dim();
    let d = h / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let q = linear(x, &layer.query);
    let k = linear(x, &layer.key);
    let v = linear(x, &layer.value);
    let mut context = Array2::zeros((t, h));
    let mut probs = Vec::with_capacity(heads);
    for head in 0..heads {
        let cols = s![.., head * d..(head + 1) * d];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        scores *= scale;
        masked_softmax(&mut scores, mask);
        context.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }
    let out = linear(&context.view(), &layer.attention_output);
    (
        out,
        AttentionCache {
            q,
            k,
            v,
            probs,
            context,
        },
    )
}

pub(crate) fn attention_backward(
    x: &ArrayView2<'_, f64>,
    d_out: &ArrayView2<'_, f64>,
    cache: &AttentionCache,
    layer: &LayerParams,
    grad: &mut LayerParams,
    heads: usize,
) -> Array2<f64> {
    let (t, h) = x.dim();
    let d = h / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let d_context = linear_backward(
        &cache.context.view(),
        d_out,
        &layer.attention_output,
        &mut grad.attention_output,
    );
    let mut dq = Array2::zeros((t, h));
    let mut dk = Array2::zeros((t, h));
    let mut dv = Array2::zeros((t, h));
    for (head, p) in cache.probs.iter().enumerate() {
        let cols = s![.., head * d..(head + 1) * d];
        let dc = d_context.slice(cols);
        let dp = dc.dot(&cache.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&dc));
        // softmax backward: dS = P * (dP - rowsum(dP * P))
        let mut ds = dp;
        for (mut ds_row, p_row) in ds.axis_iter_mut(Axis(0)).zip(p.axis_iter(Axis(0))) {
            let dot: f64 = ds_row.iter().zip(p_row.iter()).map(|(a, b)| a * b).sum();
            ds_row.zip_mut_with(&p_row, |g, &pv| *g = pv * (*g - dot));
        }
        ds *= scale;
        dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
    }
    let mut dx = linear_backward(x, &dq.view(), &layer.query, &mut grad.query);
    dx += &linear_backward(x, &dk.view(), &layer.key, &mut grad.key);
    dx += &linear_backward(x, &dv.view(), &layer.value, &mut grad.value);
    dx
}

fn check_inputs(x: &ArrayView2<'_, f64>, mask: &[u8], layer: &LayerParams, heads: usize) -> Result<()> {
    let (t, h) = x.dim();
    if mask.len() != t {
        return Err(Error::ShapeMismatch(format!("mask length {} for {t} positions", mask.len())));
    }
    if heads == 0 || h % heads != 0 || layer.query.weight.dim() != (h, h) {
        return Err(Error::ShapeMismatch(format!(
            "hidden size {h} incompatible with {heads} heads or layer weights {:?}",
            layer.query.weight.dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("attention input".into()));
    }
    Ok(())
}

/// Multi-head self-attention including the output projection (no residual).
pub fn self_attention(
    x: &ArrayView2<'_, f64>,
    mask: &[u8],
    layer: &LayerParams,
    heads: usize,
) -> Result<Array2<f64>> {
    check_inputs(x, mask, layer, heads)?;
    Ok(attention_forward(x, mask, layer, heads).0)
}

/// Per-head attention weight matrices (query rows, key columns).
pub fn attention_weights(
    x: &ArrayView2<'_, f64>,
    mask: &[u8],
    layer: &LayerParams,
    heads: usize,
) -> Result<Vec<Array2<f64>>> {
    check_inputs(x, mask, layer, heads)?;
    Ok(attention_forward(x, mask, layer, heads).1.probs)
}
