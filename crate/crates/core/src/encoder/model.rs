//! Encoder forward pass with activation caching, and its backward pass.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;

use super::attention::{attention_backward, attention_forward, linear, linear_backward, AttentionCache};
use super::{EncoderConfig, EncoderParams, LayerNormParams};
use crate::error::{Error, Result};
use crate::input_repr::{embed_ids, InputRepresentation};
use crate::rng::Rng;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub(crate) struct NormCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

pub(crate) fn layer_norm(x: &ArrayView2<'_, f64>, p: &LayerNormParams, eps: f64) -> (Array2<f64>, NormCache) {
    let n = x.ncols() as f64;
    let mut xhat = x.to_owned();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.axis_iter_mut(Axis(0)).zip(rstd.iter_mut()) {
        let mean = row.sum() / n;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *r = 1.0 / (var + eps).sqrt();
        row *= *r;
    }
    let mut y = &xhat * &p.gamma;
    y += &p.beta;
    (y, NormCache { xhat, rstd })
}

pub(crate) fn layer_norm_backward(
    dy: &ArrayView2<'_, f64>,
    cache: &NormCache,
    p: &LayerNormParams,
    grad: &mut LayerNormParams,
) -> Array2<f64> {
    let n = dy.ncols() as f64;
    grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    grad.beta += &dy.sum_axis(Axis(0));
    let mut dx = dy * &p.gamma;
    for ((mut row, xhat), &r) in dx
        .axis_iter_mut(Axis(0))
        .zip(cache.xhat.axis_iter(Axis(0)))
        .zip(cache.rstd.iter())
    {
        let mean_d = row.sum() / n;
        let mean_dx = row.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
        row.zip_mut_with(&xhat, |g, &xh| *g = r * (*g - mean_d - xh * mean_dx));
    }
    dx
}

/// Inverted-dropout multiplier mask, or `None` when dropout is off.
fn dropout_mask(shape: (usize, usize), rate: f64, rng: Option<&mut Rng>) -> Option<Array2<f64>> {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            Some(Array2::from_shape_simple_fn(shape, || {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            }))
        }
        _ => None,
    }
}

fn apply_mask(x: &mut Array2<f64>, mask: &Option<Array2<f64>>) {
    if let Some(m) = mask {
        *x *= m;
    }
}

struct LayerCache {
    input: Array2<f64>,
    attention: AttentionCache,
    attention_dropout: Option<Array2<f64>>,
    norm1: NormCache,
    mid: Array2<f64>,
    ffn_pre: Array2<f64>,
    ffn_act: Array2<f64>,
    ffn_dropout: Option<Array2<f64>>,
    norm2: NormCache,
}

/// Activations kept for the backward pass.
pub(crate) struct ForwardCache {
    token_ids: Vec<usize>,
    segment_ids: Vec<usize>,
    embedding_norm: NormCache,
    embedding_dropout: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    pooled: Option<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    /// Final hidden state per position, shape (T, H).
    pub hidden: Array2<f64>,
    /// Pooled `[CLS]` vector (tanh dense layer, unless the pooler is bypassed).
    pub cls: Array1<f64>,
}

/// Runs the encoder on raw id slices. Positions are `0..token_ids.len()`.
/// `dropout` supplies randomness in training mode; `None` is inference mode.
pub(crate) fn forward(
    token_ids: &[usize],
    segment_ids: &[usize],
    mask: &[u8],
    params: &EncoderParams,
    config: &EncoderConfig,
    mut dropout: Option<&mut Rng>,
) -> Result<(EncoderOutput, ForwardCache)> {
    let eps = config.layer_norm_eps;
    let rate = config.dropout_rate;
    let summed = embed_ids(token_ids, segment_ids, &params.embeddings)?;
    let (mut h, embedding_norm) = layer_norm(&summed.view(), &params.embedding_norm, eps);
    let embedding_dropout = dropout_mask(h.dim(), rate, dropout.as_deref_mut());
    apply_mask(&mut h, &embedding_dropout);

    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (mut attn, attention) = attention_forward(&h.view(), mask, layer, config.heads);
        let attention_dropout = dropout_mask(attn.dim(), rate, dropout.as_deref_mut());
        apply_mask(&mut attn, &attention_dropout);
        attn += &h;
        let (mid, norm1) = layer_norm(&attn.view(), &layer.attention_norm, eps);
        let ffn_pre = linear(&mid.view(), &layer.ffn_in);
        let ffn_act = ffn_pre.mapv(gelu);
        let mut ffn = linear(&ffn_act.view(), &layer.ffn_out);
        let ffn_dropout = dropout_mask(ffn.dim(), rate, dropout.as_deref_mut());
        apply_mask(&mut ffn, &ffn_dropout);
        ffn += &mid;
        let (out, norm2) = layer_norm(&ffn.view(), &layer.ffn_norm, eps);
        layers.push(LayerCache {
            input: std::mem::replace(&mut h, out),
            attention,
            attention_dropout,
            norm1,
            mid,
            ffn_pre,
            ffn_act,
            ffn_dropout,
            norm2,
        });
    }

    let first = h.row(0).to_owned();
    let (cls, pooled) = if config.use_pooler {
        let mut z = first.dot(&params.pooler.weight);
        z += &params.pooler.bias;
        z.mapv_inplace(f64::tanh);
        (z.clone(), Some(z))
    } else {
        (first, None)
    };
    Ok((
        EncoderOutput { hidden: h, cls },
        ForwardCache {
            token_ids: token_ids.to_vec(),
            segment_ids: segment_ids.to_vec(),
            embedding_norm,
            embedding_dropout,
            layers,
            pooled,
        },
    ))
}

/// Backpropagates gradients w.r.t. the hidden states and/or the `[CLS]`
/// vector, accumulating parameter gradients into `grad`.
pub(crate) fn backward(
    cache: &ForwardCache,
    output: &EncoderOutput,
    params: &EncoderParams,
    config: &EncoderConfig,
    d_hidden: Option<&ArrayView2<'_, f64>>,
    d_cls: Option<&ArrayView1<'_, f64>>,
    grad: &mut EncoderParams,
) {
    let mut dh = match d_hidden {
        Some(d) => d.to_owned(),
        None => Array2::zeros(output.hidden.dim()),
    };
    if let Some(d_cls) = d_cls {
        match &cache.pooled {
            Some(pooled) => {
                let dz = d_cls.to_owned() * &pooled.mapv(|p| 1.0 - p * p);
                let first = output.hidden.row(0);
                let first2 = first.view().insert_axis(Axis(0));
                let dz2 = dz.view().insert_axis(Axis(0));
                let dfirst = linear_backward(&first2, &dz2, &params.pooler, &mut grad.pooler);
                let mut row = dh.row_mut(0);
                row += &dfirst.row(0);
            }
            None => {
                let mut row = dh.row_mut(0);
                row += d_cls;
            }
        }
    }

    for ((layer, lc), lg) in params
        .layers
        .iter()
        .zip(&cache.layers)
        .zip(grad.layers.iter_mut())
        .rev()
    {
        let mut d_ffn = layer_norm_backward(&dh.view(), &lc.norm2, &layer.ffn_norm, &mut lg.ffn_norm);
        // residual branch into `mid`
        let mut d_mid = d_ffn.clone();
        apply_mask(&mut d_ffn, &lc.ffn_dropout);
        let mut d_act = linear_backward(&lc.ffn_act.view(), &d_ffn.view(), &layer.ffn_out, &mut lg.ffn_out);
        d_act.zip_mut_with(&lc.ffn_pre, |g, &x| *g *= gelu_grad(x));
        d_mid += &linear_backward(&lc.mid.view(), &d_act.view(), &layer.ffn_in, &mut lg.ffn_in);

        let mut d_attn = layer_norm_backward(&d_mid.view(), &lc.norm1, &layer.attention_norm, &mut lg.attention_norm);
        let mut d_input = d_attn.clone();
        apply_mask(&mut d_attn, &lc.attention_dropout);
        d_input += &attention_backward(
            &lc.input.view(),
            &d_attn.view(),
            &lc.attention,
            layer,
            lg,
            config.heads,
        );
        dh = d_input;
    }

    apply_mask(&mut dh, &cache.embedding_dropout);
    let d_sum = layer_norm_backward(&dh.view(), &cache.embedding_norm, &params.embedding_norm, &mut grad.embedding_norm);
    for (i, row) in d_sum.axis_iter(Axis(0)).enumerate() {
        let mut t = grad.embeddings.token.row_mut(cache.token_ids[i]);
        t += &row;
        let mut s = grad.embeddings.segment.row_mut(cache.segment_ids[i]);
        s += &row;
        let mut p = grad.embeddings.position.row_mut(i);
        p += &row;
    }
}

/// Inference-mode forward pass over a full, padded input representation.
pub fn encoder_forward(
    repr: &InputRepresentation,
    params: &EncoderParams,
    config: &EncoderConfig,
) -> Result<EncoderOutput> {
    config.validate()?;
    params.check_shapes(config)?;
    let n = repr.token_ids.len();
    if repr.segment_ids.len() != n || repr.attention_mask.len() != n {
        return Err(Error::ShapeMismatch("input representation sequences differ in length".into()));
    }
    if n > config.max_positions {
        return Err(Error::ShapeMismatch(format!(
            "sequence length {n} exceeds max_positions {}",
            config.max_positions
        )));
    }
    Ok(forward(&repr.token_ids, &repr.segment_ids, &repr.attention_mask, params, config, None)?.0)
}

/// Forward over only the unpadded prefix. Padded positions never influence
/// unpadded ones, so the `[CLS]` vector is the same as for the full input.
pub(crate) fn forward_trimmed(
    repr: &InputRepresentation,
    params: &EncoderParams,
    config: &EncoderConfig,
    dropout: Option<&mut Rng>,
) -> Result<(EncoderOutput, ForwardCache)> {
    let n = repr.real_length;
    forward(
        &repr.token_ids[..n],
        &repr.segment_ids[..n],
        &repr.attention_mask[..n],
        params,
        config,
        dropout,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderParams;
    use crate::rng;

    #[test]
    fn gelu_derivative_matches_finite_difference() {
        for &x in &[-3.0, -1.0, -0.1, 0.0, 0.4, 2.5] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = ndarray::array![[1.0, 2.0, 3.0, 6.0], [0.0, -1.0, 4.0, 1.0]];
        let (y, _) = layer_norm(&x.view(), &LayerNormParams::identity(4), 1e-12);
        for row in y.axis_iter(Axis(0)) {
            assert!(row.sum().abs() < 1e-12);
            assert!((row.iter().map(|v| v * v).sum::<f64>() / 4.0 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_layers_is_normalized_embedding() {
        let config = EncoderConfig::new(0, 8, 2, 12, 8);
        let params = EncoderParams::init(&config, &mut rng::stream(1, rng::INIT)).unwrap();
        let repr = InputRepresentation {
            token_ids: vec![2, 5, 3, 0],
            segment_ids: vec![0; 4],
            position_ids: (0..4).collect(),
            attention_mask: vec![1, 1, 1, 0],
            real_length: 3,
        };
        let out = encoder_forward(&repr, &params, &config).unwrap();
        let summed = crate::input_repr::embed(&repr, &params.embeddings).unwrap();
        let (expected, _) = layer_norm(&summed.view(), &params.embedding_norm, config.layer_norm_eps);
        assert_eq!(out.hidden, expected);
    }

    #[test]
    fn dropout_is_off_in_inference_and_seeded_in_training() {
        let mut config = EncoderConfig::new(1, 8, 2, 12, 8);
        config.dropout_rate = 0.5;
        let params = EncoderParams::init(&config, &mut rng::stream(1, rng::INIT)).unwrap();
        let ids = [2, 5, 6, 3];
        let segs = [0; 4];
        let mask = [1; 4];
        let a = forward(&ids, &segs, &mask, &params, &config, None).unwrap().0;
        let b = forward(&ids, &segs, &mask, &params, &config, None).unwrap().0;
        assert_eq!(a, b);
        let mut r1 = rng::stream(3, rng::DROPOUT);
        let mut r2 = rng::stream(3, rng::DROPOUT);
        let c = forward(&ids, &segs, &mask, &params, &config, Some(&mut r1)).unwrap().0;
        let d = forward(&ids, &segs, &mask, &params, &config, Some(&mut r2)).unwrap().0;
        assert_eq!(c, d);
        assert_ne!(a, c);
    }
}
