//! Aspect-based sentiment analysis recast as sentence-pair classification.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! ```text
//! reviews ─► transform (auxiliary sentences) ─► tokenizer (WordPiece)
//!         ─► input_repr ([CLS] a [SEP] b [SEP]) ─► encoder (transformer, MLM/NSP)
//!         ─► training (heads, feature extraction / fine-tuning, grid search)
//!         ─► eval (pair-level micro/macro F1, error listings)
//! ```

pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod input_repr;
pub mod rng;
pub mod tokenizer;
pub mod training;
pub mod transform;

pub use encoder::{EncoderConfig, EncoderParams};
pub use error::{Error, Result};
pub use input_repr::{encode_pair, encode_single, InputRepresentation};
pub use tokenizer::{tokenize, Token, Vocab};
pub use transform::{AuxLabel, CategoryConfig, PairInstance, Polarity, Review, TransformMethod};
