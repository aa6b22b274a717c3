//! Fixed-length BERT input layout and the summed embedding lookup.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{Token, Vocab};

pub const DEFAULT_MAX_SEQ_LEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRepresentation {
    pub token_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    pub position_ids: Vec<usize>,
    pub attention_mask: Vec<u8>,
    pub real_length: usize,
}

impl InputRepresentation {
    pub fn max_seq_len(&self) -> usize {
        self.token_ids.len()
    }

    fn assemble(ids: Vec<usize>, segments: Vec<usize>, max_seq_len: usize, pad: usize) -> Self {
        let real_length = ids.len();
        debug_assert!(real_length <= max_seq_len);
        let mut token_ids = ids;
        let mut segment_ids = segments;
        token_ids.resize(max_seq_len, pad);
        segment_ids.resize(max_seq_len, 0);
        let attention_mask = (0..max_seq_len).map(|i| u8::from(i < real_length)).collect();
        Self {
            token_ids,
            segment_ids,
            position_ids: (0..max_seq_len).collect(),
            attention_mask,
            real_length,
        }
    }
}

/// `[CLS] tokens [SEP]`, tail-truncated to fit, then padded.
pub fn encode_single(tokens: &[Token], vocab: &Vocab, max_seq_len: usize) -> Result<InputRepresentation> {
    if max_seq_len < 3 {
        return Err(Error::InvalidArgument(format!(
            "max_seq_len must be at least 3 for a single sequence, got {max_seq_len}"
        )));
    }
    let special = vocab.special();
    let keep = tokens.len().min(max_seq_len - 2);
    let mut ids = Vec::with_capacity(max_seq_len);
    ids.push(special.cls);
    ids.extend(tokens[..keep].iter().map(|t| t.id));
    ids.push(special.sep);
    let segments = vec![0; ids.len()];
    Ok(InputRepresentation::assemble(ids, segments, max_seq_len, special.pad))
}

/// Lengths after longest-first truncation: while over budget, drop the last
/// token of whichever sequence is longer (`b` on ties).
pub fn truncate_pair_lengths(len_a: usize, len_b: usize, budget: usize) -> (usize, usize) {
    let (mut a, mut b) = (len_a, len_b);
    while a + b > budget {
        if a > b {
            a -= 1;
        } else {
            b -= 1;
        }
    }
    (a, b)
}

/// `[CLS] a [SEP] b [SEP]` with segment 0 for the first part and 1 for the
/// second, truncated longest-first, then padded.
pub fn encode_pair(
    tokens_a: &[Token],
    tokens_b: &[Token],
    vocab: &Vocab,
    max_seq_len: usize,
) -> Result<InputRepresentation> {
    if max_seq_len < 4 {
        return Err(Error::InvalidArgument(format!(
            "max_seq_len must be at least 4 for a pair, got {max_seq_len}"
        )));
    }
    if tokens_a.is_empty() {
        return Err(Error::InvalidArgument("first sequence of a pair is empty".into()));
    }
    let special = vocab.special();
    let (keep_a, keep_b) = truncate_pair_lengths(tokens_a.len(), tokens_b.len(), max_seq_len - 3);
    let mut ids = Vec::with_capacity(max_seq_len);
    ids.push(special.cls);
    ids.extend(tokens_a[..keep_a].iter().map(|t| t.id));
    ids.push(special.sep);
    let first = ids.len();
    ids.extend(tokens_b[..keep_b].iter().map(|t| t.id));
    ids.push(special.sep);
    let mut segments = vec![0; first];
    segments.resize(ids.len(), 1);
    Ok(InputRepresentation::assemble(ids, segments, max_seq_len, special.pad))
}

/// Token, segment and position tables, each with `hidden` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables {
    pub token: Array2<f64>,
    pub segment: Array2<f64>,
    pub position: Array2<f64>,
}

impl EmbeddingTables {
    pub fn zeros(vocab_size: usize, max_positions: usize, hidden: usize) -> Self {
        Self {
            token: Array2::zeros((vocab_size, hidden)),
            segment: Array2::zeros((2, hidden)),
            position: Array2::zeros((max_positions, hidden)),
        }
    }

    pub fn hidden(&self) -> usize {
        self.token.ncols()
    }
}

fn check_index(what: &'static str, index: usize, bound: usize, position: usize) -> Result<()> {
    if index >= bound {
        return Err(Error::IndexOutOfBounds {
            what,
            index,
            bound,
            position,
        });
    }
    Ok(())
}

/// Row-wise sum of token, segment and position embeddings.
pub fn embed(repr: &InputRepresentation, tables: &EmbeddingTables) -> Result<Array2<f64>> {
    embed_ids(&repr.token_ids, &repr.segment_ids, tables)
}

/// [`embed`] over raw id slices; position `i` uses position row `i`.
pub fn embed_ids(token_ids: &[usize], segment_ids: &[usize], tables: &EmbeddingTables) -> Result<Array2<f64>> {
    let h = tables.hidden();
    if tables.segment.ncols() != h || tables.position.ncols() != h {
        return Err(Error::ShapeMismatch("embedding tables disagree on hidden size".into()));
    }
    if segment_ids.len() != token_ids.len() {
        return Err(Error::ShapeMismatch("token and segment id lengths differ".into()));
    }
    let mut out = Array2::zeros((token_ids.len(), h));
    for (i, (mut row, (&tok, &seg))) in out
        .axis_iter_mut(Axis(0))
        .zip(token_ids.iter().zip(segment_ids))
        .enumerate()
    {
        check_index("token", tok, tables.token.nrows(), i)?;
        check_index("segment", seg, tables.segment.nrows(), i)?;
        check_index("position", i, tables.position.nrows(), i)?;
        row.assign(&tables.token.row(tok));
        row += &tables.segment.row(seg);
        row += &tables.position.row(i);
    }
    Ok(out)
}
