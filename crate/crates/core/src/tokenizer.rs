//! Vocabulary loading, basic tokenization and WordPiece segmentation.
//!
//! Vocabulary files follow the BERT convention: UTF-8, one token per line, the
//! 0-based line number is the token id. A published BERT `vocab.txt` can be
//! loaded unchanged.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const CONTINUATION_PREFIX: &str = "##";
pub const DEFAULT_MAX_WORD_CHARS: usize = 200;

/// Ids of the five special tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub pad: usize,
    pub unk: usize,
    pub cls: usize,
    pub sep: usize,
    pub mask: usize,
}

impl SpecialIds {
    pub fn contains(&self, id: usize) -> bool {
        id == self.pad || id == self.unk || id == self.cls || id == self.sep || id == self.mask
    }
}

#[derive(Debug, Clone)]
pub struct Vocab {
    entries: Vec<String>,
    id_of: HashMap<String, usize>,
    special: SpecialIds,
}

impl Vocab {
    /// Builds a vocabulary from an ordered token list. Ids are list positions.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if entries.is_empty() {
            return Err(Error::EmptyVocab);
        }
        let mut id_of = HashMap::with_capacity(entries.len());
        for (id, token) in entries.iter().enumerate() {
            if let Some(first) = id_of.insert(token.clone(), id) {
                return Err(Error::DuplicateToken {
                    token: token.clone(),
                    first: first + 1,
                    second: id + 1,
                });
            }
        }
        let lookup = |name: &'static str| id_of.get(name).copied().ok_or(Error::MissingSpecial(name));
        let special = SpecialIds {
            pad: lookup(PAD)?,
            unk: lookup(UNK)?,
            cls: lookup(CLS)?,
            sep: lookup(SEP)?,
            mask: lookup(MASK)?,
        };
        Ok(Self {
            entries,
            id_of,
            special,
        })
    }

    /// Reads a vocabulary file from a byte stream: one token per line.
    pub fn load<R: Read>(mut source: R) -> Result<Self> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        let text = String::from_utf8(bytes)?;
        if text.is_empty() {
            return Err(Error::EmptyVocab);
        }
        Self::from_tokens(text.lines())
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::load(std::fs::File::open(path)?)
    }

    /// Serializes in the one-token-per-line file layout.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for token in &self.entries {
            out.push_str(token);
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.id_of.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.id_of.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.entries.get(id).map(String::as_str)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn special(&self) -> SpecialIds {
        self.special
    }
}

/// A vocabulary-resolved subword.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub id: usize,
    pub is_continuation: bool,
}

impl Token {
    fn resolve(surface: String, vocab: &Vocab) -> Self {
        let id = vocab.id_of(&surface).unwrap_or(vocab.special.unk);
        let is_continuation = surface.starts_with(CONTINUATION_PREFIX);
        Self {
            surface,
            id,
            is_continuation,
        }
    }
}

fn is_punctuation(c: char) -> bool {
    // ASCII symbols such as `$` and `^` are not in a P* category but are still
    // split off, as in the reference BERT tokenizer.
    if c.is_ascii() {
        return c.is_ascii_punctuation();
    }
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

fn is_control(c: char) -> bool {
    if c == '\t' || c == '\n' || c == '\r' {
        return false;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::Control | GeneralCategory::Format
    )
}

/// Options for the basic (pre-WordPiece) tokenization pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasicOptions {
    pub lowercase: bool,
    /// Strip combining marks after NFD decomposition. Off by default.
    pub strip_accents: bool,
}

impl Default for BasicOptions {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_accents: false,
        }
    }
}

/// Lowercases, splits on whitespace and splits every punctuation character
/// into its own word.
pub fn basic_tokenize(text: &str) -> Vec<String> {
    basic_tokenize_with(text, BasicOptions::default())
}

pub fn basic_tokenize_with(text: &str, options: BasicOptions) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, words: &mut Vec<String>| {
        if !current.is_empty() {
            words.push(std::mem::take(current));
        }
    };
    for c in text.chars() {
        if c == '\0' || c == char::REPLACEMENT_CHARACTER || is_control(c) {
            continue;
        }
        if c.is_whitespace() {
            flush(&mut current, &mut words);
        } else if is_punctuation(c) {
            flush(&mut current, &mut words);
            words.push(c.to_string());
        } else if options.lowercase {
            current.extend(c.to_lowercase());
        } else {
            current.push(c);
        }
    }
    flush(&mut current, &mut words);
    if options.strip_accents {
        for word in &mut words {
            *word = word
                .nfd()
                .filter(|&c| get_general_category(c) != GeneralCategory::NonspacingMark)
                .collect();
        }
        words.retain(|w| !w.is_empty());
    }
    words
}

/// Greedy first-longest-match segmentation of a single word.
///
/// Returns `["[UNK]"]` if the word is longer than `max_word_chars` characters
/// or if some suffix has no matching vocabulary prefix.
pub fn wordpiece(word: &str, vocab: &Vocab, max_word_chars: usize) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() > max_word_chars {
        return vec![UNK.to_string()];
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while start < end {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.extend(&chars[start..end]);
            if vocab.contains(&candidate) {
                found = Some(candidate.clone());
                break;
            }
            end -= 1;
        }
        match found {
            Some(piece) => pieces.push(piece),
            None => return vec![UNK.to_string()],
        }
        start = end;
    }
    pieces
}

/// Configurable tokenizer: basic tokenization followed by WordPiece.
#[derive(Debug, Clone)]
pub struct Tokenizer<'v> {
    pub vocab: &'v Vocab,
    pub basic: BasicOptions,
    pub max_word_chars: usize,
}

impl<'v> Tokenizer<'v> {
    pub fn new(vocab: &'v Vocab) -> Self {
        Self {
            vocab,
            basic: BasicOptions::default(),
            max_word_chars: DEFAULT_MAX_WORD_CHARS,
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        basic_tokenize_with(text, self.basic)
            .iter()
            .flat_map(|word| wordpiece(word, self.vocab, self.max_word_chars))
            .map(|piece| Token::resolve(piece, self.vocab))
            .collect()
    }

    pub fn oov_stats<S: AsRef<str>>(&self, corpus: &[S]) -> OovStats {
        let mut stats = OovStats::default();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in corpus {
            for word in basic_tokenize_with(text.as_ref(), self.basic) {
                stats.total_words += 1;
                let pieces = wordpiece(&word, self.vocab, self.max_word_chars);
                if pieces.len() == 1 && pieces[0] == UNK {
                    stats.oov_word_occurrences += 1;
                    *counts.entry(word).or_default() += 1;
                }
            }
        }
        let mut oov_list: Vec<(String, usize)> = counts.into_iter().collect();
        oov_list.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        stats.unique_oov_words = oov_list.len();
        stats.oov_list = oov_list;
        stats
    }
}

/// Tokenizes with default options.
pub fn tokenize(text: &str, vocab: &Vocab) -> Vec<Token> {
    Tokenizer::new(vocab).tokenize(text)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct OovStats {
    pub total_words: usize,
    pub oov_word_occurrences: usize,
    pub unique_oov_words: usize,
    /// (word, frequency), most frequent first.
    pub oov_list: Vec<(String, usize)>,
}

pub fn oov_stats<S: AsRef<str>>(corpus: &[S], vocab: &Vocab) -> OovStats {
    Tokenizer::new(vocab).oov_stats(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

    fn vocab_with(extra: &[&str]) -> Vocab {
        Vocab::from_tokens(SPECIALS.iter().copied().chain(extra.iter().copied())).unwrap()
    }

    #[test]
    fn load_assigns_line_ids() {
        let vocab = Vocab::load("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\ndan".as_bytes()).unwrap();
        assert_eq!(vocab.len(), 6);
        assert_eq!(vocab.id_of("dan"), Some(5));
        assert_eq!(vocab.special().mask, 4);
        let with_newline = Vocab::load("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\ndan\n".as_bytes()).unwrap();
        assert_eq!(with_newline.len(), 6);
    }

    #[test]
    fn load_rejects_duplicates() {
        let err = Vocab::load("[PAD]\n[UNK]\n[CLS]\n[SEP]\ndan\ndan\n[MASK]".as_bytes()).unwrap_err();
        match err {
            Error::DuplicateToken { token, first, second } => {
                assert_eq!(token, "dan");
                assert_eq!((first, second), (5, 6));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_rejects_missing_special_and_empty() {
        let err = Vocab::load("[PAD]\n[UNK]\n[CLS]\n[SEP]\ndan".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MissingSpecial("[MASK]")));
        assert!(matches!(Vocab::load("".as_bytes()), Err(Error::EmptyVocab)));
        assert!(matches!(
            Vocab::load(&[0xffu8, 0xfe][..]),
            Err(Error::VocabEncoding(_))
        ));
    }

    #[test]
    fn basic_tokenization() {
        assert_eq!(basic_tokenize("Kamar bersih!"), vec!["kamar", "bersih", "!"]);
        assert!(basic_tokenize("").is_empty());
        assert_eq!(basic_tokenize("  dan\t dan "), vec!["dan", "dan"]);
        assert_eq!(
            basic_tokenize("service-positif"),
            vec!["service", "-", "positif"]
        );
        assert_eq!(basic_tokenize("a\u{3000}b「c」"), vec!["a", "b", "「", "c", "」"]);
    }

    #[test]
    fn accent_stripping_is_opt_in() {
        let on = BasicOptions {
            lowercase: true,
            strip_accents: true,
        };
        assert_eq!(basic_tokenize("Café"), vec!["café"]);
        assert_eq!(basic_tokenize_with("Café", on), vec!["cafe"]);
    }

    #[test]
    fn wordpiece_hand_trace() {
        let vocab = vocab_with(&["k", "ka", "kam", "kamar", "##n", "##nya", "##a"]);
        assert_eq!(wordpiece("kamarnya", &vocab, 200), vec!["kamar", "##nya"]);
    }

    #[test]
    fn wordpiece_unknown_and_too_long() {
        let vocab = vocab_with(&["a", "##a", "b"]);
        assert_eq!(wordpiece("zzzz", &vocab, 200), vec![UNK]);
        // all-or-nothing: a partial match still yields a single [UNK]
        assert_eq!(wordpiece("az", &vocab, 200), vec![UNK]);
        assert_eq!(wordpiece("aaa", &vocab, 2), vec![UNK]);
        assert_eq!(wordpiece("aaa", &vocab, 3), vec!["a", "##a", "##a"]);
    }

    #[test]
    fn tokenize_composition() {
        let vocab = Vocab::load("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\ndan".as_bytes()).unwrap();
        let tokens = tokenize("dan dan", &vocab);
        assert_eq!(tokens.len(), 2);
        assert!(tokens.iter().all(|t| t.id == 5 && !t.is_continuation));
        assert!(tokenize("", &vocab).is_empty());
        let unk = tokenize("xyz", &vocab);
        assert_eq!(unk[0].id, vocab.special().unk);
    }

    #[test]
    fn oov_counts() {
        let vocab = vocab_with(&["a", "##a"]);
        let stats = oov_stats(&["zzzz zzzz"], &vocab);
        assert_eq!(stats.total_words, 2);
        assert_eq!(stats.oov_word_occurrences, 2);
        assert_eq!(stats.unique_oov_words, 1);
        assert_eq!(stats.oov_list, vec![("zzzz".to_string(), 2)]);
        let clean = oov_stats(&["aa a", "aaa"], &vocab);
        assert_eq!(clean.oov_word_occurrences, 0);
        assert_eq!(clean.total_words, 3);
    }
}
