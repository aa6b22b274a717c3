//! A small bidirectional transformer encoder with hand-written backprop, and
//! its masked-LM / next-sentence pretraining.

pub mod attention;
pub mod model;
pub mod pretrain;

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::input_repr::EmbeddingTables;

pub use model::{encoder_forward, EncoderOutput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Number of transformer blocks (L). Zero is allowed as a degenerate case.
    pub layers: usize,
    /// Hidden size (H).
    pub hidden: usize,
    /// Attention heads (A); must divide `hidden`.
    pub heads: usize,
    pub ffn_size: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
    #[serde(default)]
    pub dropout_rate: f64,
    /// Pass the `[CLS]` state through a tanh dense layer before the heads.
    #[serde(default = "default_true")]
    pub use_pooler: bool,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default = "default_ln_eps")]
    pub layer_norm_eps: f64,
}

fn default_true() -> bool {
    true
}

fn default_init_std() -> f64 {
    0.02
}

fn default_ln_eps() -> f64 {
    1e-12
}

impl EncoderConfig {
    /// A config with the usual defaults: `ffn_size = 4H`, no dropout, pooler on.
    pub fn new(layers: usize, hidden: usize, heads: usize, vocab_size: usize, max_positions: usize) -> Self {
        Self {
            layers,
            hidden,
            heads,
            ffn_size: 4 * hidden,
            max_positions,
            vocab_size,
            dropout_rate: 0.0,
            use_pooler: true,
            init_std: default_init_std(),
            layer_norm_eps: default_ln_eps(),
        }
    }

    /// L=12, H=768, A=12.
    pub fn bert_base(vocab_size: usize) -> Self {
        Self::new(12, 768, 12, vocab_size, 512)
    }

    /// L=24, H=1024, A=16.
    pub fn bert_large(vocab_size: usize) -> Self {
        Self::new(24, 1024, 16, vocab_size, 512)
    }

    /// L=2, H=32, A=2; the desk-scale default.
    pub fn tiny(vocab_size: usize) -> Self {
        Self::new(2, 32, 2, vocab_size, 64)
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("ffn_size", self.ffn_size),
            ("max_positions", self.max_positions),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("encoder {name} must be at least 1")));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// `y = x W + b` with `W` stored as (in, out).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn init(inputs: usize, outputs: usize, std: f64, rng: &mut crate::rng::Rng) -> Self {
        Self {
            weight: truncated_normal((inputs, outputs), std, rng),
            bias: Array1::zeros(outputs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNormParams {
    fn identity(n: usize) -> Self {
        Self {
            gamma: Array1::ones(n),
            beta: Array1::zeros(n),
        }
    }

    fn zeros(n: usize) -> Self {
        Self {
            gamma: Array1::zeros(n),
            beta: Array1::zeros(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub attention_output: Dense,
    pub attention_norm: LayerNormParams,
    pub ffn_in: Dense,
    pub ffn_out: Dense,
    pub ffn_norm: LayerNormParams,
}

impl LayerParams {
    fn init(config: &EncoderConfig, rng: &mut crate::rng::Rng) -> Self {
        let (h, f, std) = (config.hidden, config.ffn_size, config.init_std);
        Self {
            query: Dense::init(h, h, std, rng),
            key: Dense::init(h, h, std, rng),
            value: Dense::init(h, h, std, rng),
            attention_output: Dense::init(h, h, std, rng),
            attention_norm: LayerNormParams::identity(h),
            ffn_in: Dense::init(h, f, std, rng),
            ffn_out: Dense::init(f, h, std, rng),
            ffn_norm: LayerNormParams::identity(h),
        }
    }

    fn zeros(config: &EncoderConfig) -> Self {
        let (h, f) = (config.hidden, config.ffn_size);
        Self {
            query: Dense::zeros(h, h),
            key: Dense::zeros(h, h),
            value: Dense::zeros(h, h),
            attention_output: Dense::zeros(h, h),
            attention_norm: LayerNormParams::zeros(h),
            ffn_in: Dense::zeros(h, f),
            ffn_out: Dense::zeros(f, h),
            ffn_norm: LayerNormParams::zeros(h),
        }
    }
}

/// All learnable arrays of the encoder plus its pretraining heads.
///
/// The masked-LM output layer reuses the token embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub embeddings: EmbeddingTables,
    pub embedding_norm: LayerNormParams,
    pub layers: Vec<LayerParams>,
    pub pooler: Dense,
    pub mlm_norm: LayerNormParams,
    pub mlm_bias: Array1<f64>,
    pub nsp: Dense,
}

pub(crate) fn truncated_normal(shape: (usize, usize), std: f64, rng: &mut crate::rng::Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || std * truncated_standard_normal(rng))
}

/// Standard normal restricted to [-2, 2] by rejection.
fn truncated_standard_normal(rng: &mut crate::rng::Rng) -> f64 {
    loop {
        // Box-Muller
        let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.random();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        if z.abs() <= 2.0 {
            return z;
        }
    }
}

macro_rules! push_dense {
    ($out:ident, $prefix:expr, $dense:expr, $view:ident) => {
        $out.push((format!("{}.weight", $prefix), $dense.weight.$view().into_dyn()));
        $out.push((format!("{}.bias", $prefix), $dense.bias.$view().into_dyn()));
    };
}

macro_rules! push_norm {
    ($out:ident, $prefix:expr, $norm:expr, $view:ident) => {
        $out.push((format!("{}.gamma", $prefix), $norm.gamma.$view().into_dyn()));
        $out.push((format!("{}.beta", $prefix), $norm.beta.$view().into_dyn()));
    };
}

impl EncoderParams {
    /// Truncated-normal weights (std `config.init_std`), unit norm gains, zero biases.
    pub fn init(config: &EncoderConfig, rng: &mut crate::rng::Rng) -> Result<Self> {
        config.validate()?;
        let (h, std) = (config.hidden, config.init_std);
        let embeddings = EmbeddingTables {
            token: truncated_normal((config.vocab_size, h), std, rng),
            segment: truncated_normal((2, h), std, rng),
            position: truncated_normal((config.max_positions, h), std, rng),
        };
        let layers = (0..config.layers).map(|_| LayerParams::init(config, rng)).collect();
        Ok(Self {
            embeddings,
            embedding_norm: LayerNormParams::identity(h),
            layers,
            pooler: Dense::init(h, h, std, rng),
            mlm_norm: LayerNormParams::identity(h),
            mlm_bias: Array1::zeros(config.vocab_size),
            nsp: Dense::init(h, 2, std, rng),
        })
    }

    /// All-zero arrays shaped for `config`; used as gradient accumulators.
    pub fn zeros(config: &EncoderConfig) -> Self {
        let h = config.hidden;
        Self {
            embeddings: EmbeddingTables::zeros(config.vocab_size, config.max_positions, h),
            embedding_norm: LayerNormParams::zeros(h),
            layers: (0..config.layers).map(|_| LayerParams::zeros(config)).collect(),
            pooler: Dense::zeros(h, h),
            mlm_norm: LayerNormParams::zeros(h),
            mlm_bias: Array1::zeros(config.vocab_size),
            nsp: Dense::zeros(h, 2),
        }
    }

    /// Named views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        encoder_tensors_ref(self, &mut out);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = Vec::new();
        encoder_tensors_mut(self, &mut out);
        out
    }

    /// Checks that every tensor has the shape `config` implies.
    pub fn check_shapes(&self, config: &EncoderConfig) -> Result<()> {
        let expected = Self::zeros(config);
        let want = expected.tensors();
        let have = self.tensors();
        if want.len() != have.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} tensors, found {}",
                want.len(),
                have.len()
            )));
        }
        for ((name, w), (_, h)) in want.iter().zip(&have) {
            if w.shape() != h.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: expected {:?}, found {:?}",
                    w.shape(),
                    h.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// SHA-256 over tensor names, shapes and little-endian values.
    pub fn sha256_hex(&self) -> String {
        tensors_sha256_hex(&self.tensors())
    }
}

fn encoder_tensors_ref<'a>(this: &'a EncoderParams, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
    let s = this;
    out.push(("embeddings.token".to_string(), s.embeddings.token.view().into_dyn()));
    out.push(("embeddings.segment".to_string(), s.embeddings.segment.view().into_dyn()));
    out.push(("embeddings.position".to_string(), s.embeddings.position.view().into_dyn()));
    push_norm!(out, "embeddings.norm", s.embedding_norm, view);
    for (i, layer) in s.layers.iter().enumerate() {
        let p = format!("layer.{i}");
        push_dense!(out, format!("{p}.attention.query"), layer.query, view);
        push_dense!(out, format!("{p}.attention.key"), layer.key, view);
        push_dense!(out, format!("{p}.attention.value"), layer.value, view);
        push_dense!(out, format!("{p}.attention.output"), layer.attention_output, view);
        push_norm!(out, format!("{p}.attention.norm"), layer.attention_norm, view);
        push_dense!(out, format!("{p}.ffn.in"), layer.ffn_in, view);
        push_dense!(out, format!("{p}.ffn.out"), layer.ffn_out, view);
        push_norm!(out, format!("{p}.ffn.norm"), layer.ffn_norm, view);
    }
    push_dense!(out, "pooler", s.pooler, view);
    push_norm!(out, "mlm.norm", s.mlm_norm, view);
    out.push(("mlm.bias".to_string(), s.mlm_bias.view().into_dyn()));
    push_dense!(out, "nsp", s.nsp, view);
}

fn encoder_tensors_mut<'a>(this: &'a mut EncoderParams, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>) {
    let s = this;
    out.push(("embeddings.token".to_string(), s.embeddings.token.view_mut().into_dyn()));
    out.push(("embeddings.segment".to_string(), s.embeddings.segment.view_mut().into_dyn()));
    out.push(("embeddings.position".to_string(), s.embeddings.position.view_mut().into_dyn()));
    push_norm!(out, "embeddings.norm", s.embedding_norm, view_mut);
    for (i, layer) in s.layers.iter_mut().enumerate() {
        let p = format!("layer.{i}");
        push_dense!(out, format!("{p}.attention.query"), layer.query, view_mut);
        push_dense!(out, format!("{p}.attention.key"), layer.key, view_mut);
        push_dense!(out, format!("{p}.attention.value"), layer.value, view_mut);
        push_dense!(out, format!("{p}.attention.output"), layer.attention_output, view_mut);
        push_norm!(out, format!("{p}.attention.norm"), layer.attention_norm, view_mut);
        push_dense!(out, format!("{p}.ffn.in"), layer.ffn_in, view_mut);
        push_dense!(out, format!("{p}.ffn.out"), layer.ffn_out, view_mut);
        push_norm!(out, format!("{p}.ffn.norm"), layer.ffn_norm, view_mut);
    }
    push_dense!(out, "pooler", s.pooler, view_mut);
    push_norm!(out, "mlm.norm", s.mlm_norm, view_mut);
    out.push(("mlm.bias".to_string(), s.mlm_bias.view_mut().into_dyn()));
    push_dense!(out, "nsp", s.nsp, view_mut);
}

/// SHA-256 of a list of named tensors.
pub fn tensors_sha256_hex(tensors: &[(String, ArrayViewD<'_, f64>)]) -> String {
    let mut hasher = Sha256::new();
    for (name, t) in tensors {
        hasher.update(name.as_bytes());
        for &d in t.shape() {
            hasher.update((d as u64).to_le_bytes());
        }
        for &x in t.iter() {
            hasher.update(x.to_le_bytes());
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::tiny(50).validate().is_ok());
        assert!(EncoderConfig::bert_base(100).validate().is_ok());
        assert!(EncoderConfig::bert_large(100).validate().is_ok());
        let mut bad = EncoderConfig::tiny(50);
        bad.heads = 3;
        assert!(bad.validate().is_err());
        bad = EncoderConfig::tiny(50);
        bad.vocab_size = 0;
        assert!(bad.validate().is_err());
        bad = EncoderConfig::tiny(50);
        bad.dropout_rate = 1.0;
        assert!(bad.validate().is_err());
        assert_eq!(EncoderConfig::bert_base(10).ffn_size, 3072);
    }

    #[test]
    fn init_shapes_and_statistics() {
        let config = EncoderConfig::tiny(40);
        let params = EncoderParams::init(&config, &mut rng::stream(0, rng::INIT)).unwrap();
        params.check_shapes(&config).unwrap();
        let zeros = EncoderParams::zeros(&config);
        assert_eq!(params.parameter_count(), zeros.parameter_count());
        let token = &params.embeddings.token;
        assert!(token.iter().all(|x| x.abs() <= 0.04 + 1e-12));
        let std = (token.iter().map(|x| x * x).sum::<f64>() / token.len() as f64).sqrt();
        // a normal truncated at 2 sigma has std ~0.88 sigma
        assert!((std - 0.0176).abs() < 0.002, "std {std}");
        assert!(params.layers[0].attention_norm.gamma.iter().all(|&g| g == 1.0));

        let mut other = config.clone();
        other.hidden = 16;
        assert!(params.check_shapes(&other).is_err());
    }

    #[test]
    fn tensor_names_are_unique_and_hash_tracks_values() {
        let config = EncoderConfig::tiny(40);
        let mut params = EncoderParams::init(&config, &mut rng::stream(0, rng::INIT)).unwrap();
        let names: std::collections::BTreeSet<_> = params.tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), params.tensors().len());
        let before = params.sha256_hex();
        assert_eq!(before, params.clone().sha256_hex());
        params.layers[1].ffn_out.bias[3] += 1e-12;
        assert_ne!(before, params.sha256_hex());
    }
}
