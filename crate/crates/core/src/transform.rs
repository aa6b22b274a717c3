//! Conversion between the single-sentence and sentence-pair formulations of
//! aspect-based sentiment analysis.
//!
//! A review with gold pairs `{(service, positive)}` becomes, under NLI-B, one
//! instance per (category, polarity) combination:
//!
//! ```text
//! text_a              text_b            label
//! service-positif     <review text>     1
//! service-negatif     <review text>     0
//! service-none        <review text>     0
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub const ALL: [Polarity; 2] = [Polarity::Positive, Polarity::Negative];

    pub fn index(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

impl From<Polarity> for AuxLabel {
    fn from(p: Polarity) -> Self {
        match p {
            Polarity::Positive => AuxLabel::Positive,
            Polarity::Negative => AuxLabel::Negative,
        }
    }
}

/// Polarity plus the `none` class marking an absent aspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuxLabel {
    Positive,
    Negative,
    None,
}

impl AuxLabel {
    /// Expansion order for generated instances.
    pub const ALL: [AuxLabel; 3] = [AuxLabel::Positive, AuxLabel::Negative, AuxLabel::None];

    /// Class index used by three-way pair heads.
    pub fn index(self) -> usize {
        match self {
            AuxLabel::Positive => 0,
            AuxLabel::Negative => 1,
            AuxLabel::None => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Indonesian word used inside auxiliary sentences.
    pub fn word(self) -> &'static str {
        match self {
            AuxLabel::Positive => "positif",
            AuxLabel::Negative => "negatif",
            AuxLabel::None => "none",
        }
    }

    /// Short form used in error listings, e.g. `ac-neg`.
    pub fn short(self) -> &'static str {
        match self {
            AuxLabel::Positive => "pos",
            AuxLabel::Negative => "neg",
            AuxLabel::None => "none",
        }
    }

    pub fn polarity(self) -> Option<Polarity> {
        match self {
            AuxLabel::Positive => Some(Polarity::Positive),
            AuxLabel::Negative => Some(Polarity::Negative),
            AuxLabel::None => None,
        }
    }
}

impl fmt::Display for AuxLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuxLabel::Positive => "positive",
            AuxLabel::Negative => "negative",
            AuxLabel::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TransformMethod {
    #[serde(rename = "nli-b")]
    NliB,
    #[serde(rename = "nli-m")]
    NliM,
    #[serde(rename = "qa-b")]
    QaB,
    #[serde(rename = "qa-m")]
    QaM,
}

impl TransformMethod {
    pub const ALL: [TransformMethod; 4] = [
        TransformMethod::NliB,
        TransformMethod::NliM,
        TransformMethod::QaB,
        TransformMethod::QaM,
    ];

    /// B-methods emit one binary instance per (category, polarity).
    pub fn is_binary(self) -> bool {
        matches!(self, TransformMethod::NliB | TransformMethod::QaB)
    }

    /// Number of classes of the pair classifier trained on this method's output.
    pub fn num_classes(self) -> usize {
        if self.is_binary() {
            2
        } else {
            3
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformMethod::NliB => "nli-b",
            TransformMethod::NliM => "nli-m",
            TransformMethod::QaB => "qa-b",
            TransformMethod::QaM => "qa-m",
        }
    }
}

impl fmt::Display for TransformMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "nli-b" => Ok(TransformMethod::NliB),
            "nli-m" => Ok(TransformMethod::NliM),
            "qa-b" => Ok(TransformMethod::QaB),
            "qa-m" => Ok(TransformMethod::QaM),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// A review and its gold (category, polarity) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Review {
    pub id: String,
    pub text: String,
    /// At most one polarity per category.
    pub gold: BTreeMap<String, Polarity>,
}

impl Review {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            gold: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, category: impl Into<String>, polarity: Polarity) -> Self {
        self.gold.insert(category.into(), polarity);
        self
    }

    pub fn gold_set(&self) -> LabelSet {
        self.gold.iter().map(|(c, p)| (c.clone(), *p)).collect()
    }

    pub fn validate(&self, config: &CategoryConfig) -> Result<()> {
        for category in self.gold.keys() {
            if !config.contains(category) {
                return Err(Error::InvalidReview {
                    id: self.id.clone(),
                    problem: format!("category {category:?} is not configured"),
                });
            }
        }
        Ok(())
    }
}

/// A set of (category, polarity) pairs for one review.
pub type LabelSet = BTreeSet<(String, Polarity)>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ReviewLabelRecord {
    category: String,
    polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ReviewRecord {
    id: String,
    text: String,
    labels: Vec<ReviewLabelRecord>,
}

impl Serialize for Review {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ReviewRecord {
            id: self.id.clone(),
            text: self.text.clone(),
            labels: self
                .gold
                .iter()
                .map(|(category, polarity)| ReviewLabelRecord {
                    category: category.clone(),
                    polarity: *polarity,
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Review {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let record = ReviewRecord::deserialize(deserializer)?;
        let mut gold = BTreeMap::new();
        for label in record.labels {
            if let Some(previous) = gold.insert(label.category.clone(), label.polarity) {
                if previous != label.polarity {
                    return Err(serde::de::Error::custom(format!(
                        "category {:?} labeled both positive and negative",
                        label.category
                    )));
                }
            }
        }
        Ok(Review {
            id: record.id,
            text: record.text,
            gold,
        })
    }
}

/// Label of a generated pair: binary for B-methods, three-way for M-methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairLabel {
    Binary(u8),
    Class(AuxLabel),
}

impl PairLabel {
    /// Class index for the pair classifier.
    pub fn class_index(self) -> usize {
        match self {
            PairLabel::Binary(b) => usize::from(b),
            PairLabel::Class(label) => label.index(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairInstance {
    pub text_a: String,
    pub text_b: String,
    pub label: PairLabel,
    pub review_id: String,
    pub category: String,
    pub aux_polarity: Option<AuxLabel>,
}

/// Question templates for the QA methods. `<category>` and `<polarity>` are
/// substituted. These templates are a local convention, not a fixed standard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxTemplates {
    pub qa_m: String,
    pub qa_b: String,
}

impl Default for AuxTemplates {
    fn default() -> Self {
        Self {
            qa_m: "bagaimana pendapat tentang <category> ?".to_string(),
            qa_b: "apakah pendapat tentang <category> <polarity> ?".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryConfig {
    categories: Vec<String>,
    display_names: Vec<String>,
    pub templates: AuxTemplates,
}

impl CategoryConfig {
    /// The ten hotel-review categories used by default.
    pub const DEFAULT_CATEGORIES: [&'static str; 10] = [
        "ac",
        "air_panas",
        "bau",
        "general",
        "kebersihan",
        "linen",
        "service",
        "sunrise_meal",
        "tv",
        "wifi",
    ];

    pub fn new<I, S>(categories: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let categories: Vec<String> = categories.into_iter().map(Into::into).collect();
        let display_names = categories.clone();
        Self::with_display_names(categories, display_names)
    }

    pub fn with_display_names(categories: Vec<String>, display_names: Vec<String>) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::InvalidCategories("empty".into()));
        }
        if display_names.len() != categories.len() {
            return Err(Error::InvalidCategories(
                "display name count differs from category count".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for c in &categories {
            if c.is_empty() || c.chars().any(char::is_whitespace) {
                return Err(Error::InvalidCategories(format!("bad category name {c:?}")));
            }
            if !seen.insert(c.as_str()) {
                return Err(Error::InvalidCategories(format!("duplicate {c:?}")));
            }
        }
        Ok(Self {
            categories,
            display_names,
            templates: AuxTemplates::default(),
        })
    }

    /// Parses a category file: one category per line, optionally followed by a
    /// tab and a display name. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut categories = Vec::new();
        let mut display = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, shown) = match line.split_once('\t') {
                Some((name, shown)) => (name.trim(), shown.trim()),
                None => (line, line),
            };
            categories.push(name.to_string());
            display.push(shown.to_string());
        }
        Self::with_display_names(categories, display)
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn display_names(&self) -> &[String] {
        &self.display_names
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn contains(&self, category: &str) -> bool {
        self.categories.iter().any(|c| c == category)
    }

    pub fn index_of(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }

    /// Auxiliary sentence for one (category, polarity) under `method`.
    ///
    /// `polarity` must be given for B-methods and omitted for M-methods.
    pub fn build_aux_sentence(
        &self,
        category: &str,
        polarity: Option<AuxLabel>,
        method: TransformMethod,
    ) -> Result<String> {
        if !self.contains(category) {
            return Err(Error::UnknownCategory(category.to_string()));
        }
        match (method.is_binary(), polarity) {
            (true, None) => Err(Error::PolarityMismatch {
                method: method.name(),
                problem: "requires a polarity",
            }),
            (false, Some(_)) => Err(Error::PolarityMismatch {
                method: method.name(),
                problem: "takes no polarity",
            }),
            (true, Some(p)) => Ok(match method {
                TransformMethod::NliB => format!("{category}-{}", p.word()),
                _ => self
                    .templates
                    .qa_b
                    .replace("<category>", category)
                    .replace("<polarity>", p.word()),
            }),
            (false, None) => Ok(match method {
                TransformMethod::NliM => category.to_string(),
                _ => self.templates.qa_m.replace("<category>", category),
            }),
        }
    }
}

impl Default for CategoryConfig {
    fn default() -> Self {
        Self::new(Self::DEFAULT_CATEGORIES).expect("default categories are valid")
    }
}

/// Expands reviews into sentence-pair instances.
///
/// Order: review, then category, then polarity (positive, negative, none).
pub fn transform_dataset(
    reviews: &[Review],
    config: &CategoryConfig,
    method: TransformMethod,
) -> Vec<PairInstance> {
    let per_review = if method.is_binary() { 3 } else { 1 } * config.len();
    let mut out = Vec::with_capacity(reviews.len() * per_review);
    // auxiliary sentences depend only on (category, polarity)
    let mut aux_cache: HashMap<(usize, Option<AuxLabel>), String> = HashMap::new();
    let mut aux = |ci: usize, p: Option<AuxLabel>| -> String {
        aux_cache
            .entry((ci, p))
            .or_insert_with(|| {
                config
                    .build_aux_sentence(&config.categories[ci], p, method)
                    .expect("configured category with matching polarity")
            })
            .clone()
    };
    for review in reviews {
        for (ci, category) in config.categories.iter().enumerate() {
            let gold = review.gold.get(category).copied().map(AuxLabel::from).unwrap_or(AuxLabel::None);
            if method.is_binary() {
                for polarity in AuxLabel::ALL {
                    out.push(PairInstance {
                        text_a: aux(ci, Some(polarity)),
                        text_b: review.text.clone(),
                        label: PairLabel::Binary(u8::from(gold == polarity)),
                        review_id: review.id.clone(),
                        category: category.clone(),
                        aux_polarity: Some(polarity),
                    });
                }
            } else {
                out.push(PairInstance {
                    text_a: aux(ci, None),
                    text_b: review.text.clone(),
                    label: PairLabel::Class(gold),
                    review_id: review.id.clone(),
                    category: category.clone(),
                    aux_polarity: None,
                });
            }
        }
    }
    out
}

/// Per-category sentiment datasets: a review appears under every category in
/// its gold set, labeled with that category's polarity.
pub fn group_by_category(
    reviews: &[Review],
    config: &CategoryConfig,
) -> BTreeMap<String, Vec<(String, Polarity)>> {
    let mut groups: BTreeMap<String, Vec<(String, Polarity)>> = config
        .categories
        .iter()
        .map(|c| (c.clone(), Vec::new()))
        .collect();
    for review in reviews {
        for (category, polarity) in &review.gold {
            if let Some(group) = groups.get_mut(category) {
                group.push((review.text.clone(), *polarity));
            }
        }
    }
    groups
}

/// Model scores for all generated pairs of one review.
#[derive(Debug, Clone, PartialEq)]
pub enum PairScores {
    /// B-methods: probability of label 1 for each (category, polarity).
    Binary(BTreeMap<(String, AuxLabel), f64>),
    /// M-methods: class distribution `[positive, negative, none]` per category.
    Multi(BTreeMap<String, [f64; 3]>),
}

// tie-break order: none > negative > positive
const DECISION_ORDER: [AuxLabel; 3] = [AuxLabel::None, AuxLabel::Negative, AuxLabel::Positive];

fn argmax_label(score: impl Fn(AuxLabel) -> f64) -> AuxLabel {
    let mut best = DECISION_ORDER[0];
    let mut best_score = score(best);
    for label in &DECISION_ORDER[1..] {
        let s = score(*label);
        if s > best_score {
            best = *label;
            best_score = s;
        }
    }
    best
}

/// Turns pair scores back into a (category, polarity) set.
pub fn aggregate_predictions(
    scores: &PairScores,
    config: &CategoryConfig,
    method: TransformMethod,
) -> Result<LabelSet> {
    let mut out = LabelSet::new();
    for category in &config.categories {
        let label = match scores {
            PairScores::Binary(map) => {
                if !method.is_binary() {
                    return Err(Error::InvalidArgument(format!(
                        "binary scores given for {method}"
                    )));
                }
                let mut values = [0.0; 3];
                for polarity in AuxLabel::ALL {
                    values[polarity.index()] = *map
                        .get(&(category.clone(), polarity))
                        .ok_or_else(|| Error::MissingScore {
                            category: category.clone(),
                            polarity: polarity.to_string(),
                        })?;
                }
                argmax_label(|l| values[l.index()])
            }
            PairScores::Multi(map) => {
                if method.is_binary() {
                    return Err(Error::InvalidArgument(format!(
                        "class distributions given for {method}"
                    )));
                }
                let dist = map.get(category).ok_or_else(|| Error::MissingScore {
                    category: category.clone(),
                    polarity: "distribution".into(),
                })?;
                let sum: f64 = dist.iter().sum();
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidDistribution {
                        category: category.clone(),
                        sum,
                    });
                }
                argmax_label(|l| dist[l.index()])
            }
        };
        if let Some(polarity) = label.polarity() {
            out.insert((category.clone(), polarity));
        }
    }
    Ok(out)
}

fn check_split_args(n: usize, train_fraction: f64) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidFraction(train_fraction));
    }
    if n < 2 {
        return Err(Error::TooFewItems(n));
    }
    Ok((train_fraction * n as f64).round() as usize)
}

/// Seeded shuffle-and-cut split with `round(train_fraction * n)` train items.
pub fn split_dataset<T: Clone>(items: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let n_train = check_split_args(items.len(), train_fraction)?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut rng::stream(seed, rng::SPLIT));
    let train = order[..n_train].iter().map(|&i| items[i].clone()).collect();
    let validation = order[n_train..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, validation))
}

/// Splits pair instances by review id so that no review straddles the split.
/// The size rule applies to the number of distinct reviews. Instance order is
/// preserved within each side.
pub fn split_pairs_by_review(
    instances: &[PairInstance],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<PairInstance>, Vec<PairInstance>)> {
    let mut ids: Vec<&str> = Vec::new();
    let mut seen = BTreeSet::new();
    for inst in instances {
        if seen.insert(inst.review_id.as_str()) {
            ids.push(inst.review_id.as_str());
        }
    }
    let (train_ids, _) = split_dataset(&ids, train_fraction, seed)?;
    let train_ids: BTreeSet<&str> = train_ids.into_iter().collect();
    Ok(instances
        .iter()
        .cloned()
        .partition(|inst| train_ids.contains(inst.review_id.as_str())))
}

/// Words that signal one category and the cues that carry its polarity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub keywords: Vec<String>,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub entries: BTreeMap<String, LexiconEntry>,
    /// Aspect-free phrases, used as optional prefixes and as the text of
    /// reviews with no aspects.
    #[serde(default)]
    pub fillers: Vec<String>,
    #[serde(default = "default_connectors")]
    pub connectors: Vec<String>,
}

fn default_connectors() -> Vec<String> {
    [" dan ", " , ", " tapi "].iter().map(|s| s.to_string()).collect()
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for Lexicon {
    /// Hotel-review lexicon for the default categories. Every cue word
    /// belongs to exactly one category and polarity.
    fn default() -> Self {
        let table: [(&str, &[&str], &[&str], &[&str]); 10] = [
            ("ac", &["ac", "pendingin"], &["dingin", "sejuk"], &["bocor", "berisik"]),
            ("air_panas", &["shower", "pemanas"], &["hangat", "deras"], &["mati", "macet"]),
            ("bau", &["aroma", "udara"], &["wangi", "segar"], &["apek", "pengap"]),
            ("general", &["hotel", "lokasi"], &["nyaman", "strategis"], &["jauh", "mengecewakan"]),
            ("kebersihan", &["lantai", "toilet"], &["bersih", "kinclong"], &["kotor", "berdebu"]),
            ("linen", &["sprei", "handuk"], &["lembut", "harum"], &["kusam", "bernoda"]),
            ("service", &["pelayanan", "resepsionis"], &["ramah", "sigap"], &["judes", "kasar"]),
            ("sunrise_meal", &["sarapan", "makanan"], &["enak", "lengkap"], &["hambar", "sedikit"]),
            ("tv", &["tv", "televisi"], &["jernih", "bagus"], &["rusak", "buram"]),
            ("wifi", &["wifi", "internet"], &["cepat", "stabil"], &["lambat", "putus"]),
        ];
        let entries = table
            .iter()
            .map(|(c, k, p, n)| {
                (
                    c.to_string(),
                    LexiconEntry {
                        keywords: words(k),
                        positive: words(p),
                        negative: words(n),
                    },
                )
            })
            .collect();
        Self {
            entries,
            fillers: words(&["kami menginap semalam", "menginap bersama keluarga", "liburan akhir pekan"]),
            connectors: default_connectors(),
        }
    }
}

impl Lexicon {
    pub fn validate(&self, config: &CategoryConfig) -> Result<()> {
        for category in config.categories() {
            let entry = self
                .entries
                .get(category)
                .ok_or_else(|| Error::LexiconMissing(category.clone()))?;
            for (list, name) in [
                (&entry.keywords, "keywords"),
                (&entry.positive, "positive"),
                (&entry.negative, "negative"),
            ] {
                if list.is_empty() || list.iter().any(|w| w.trim().is_empty()) {
                    return Err(Error::EmptyLexiconEntry {
                        category: category.clone(),
                        list: name,
                    });
                }
            }
        }
        if self.connectors.is_empty() {
            return Err(Error::InvalidArgument("lexicon has no connectors".into()));
        }
        Ok(())
    }

    /// Every word the generator can emit, in sorted order.
    pub fn all_words(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let phrases = self
            .entries
            .values()
            .flat_map(|e| e.keywords.iter().chain(&e.positive).chain(&e.negative))
            .chain(&self.fillers)
            .chain(&self.connectors);
        for phrase in phrases {
            out.extend(crate::tokenizer::basic_tokenize(phrase));
        }
        out
    }
}

/// Sampling probabilities of the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Probability that a given category is mentioned in a review.
    pub aspect_rate: f64,
    /// Probability that a mentioned category is positive.
    pub positive_rate: f64,
    /// Probability of prefixing a filler phrase.
    pub filler_rate: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            aspect_rate: 0.2,
            positive_rate: 0.6,
            filler_rate: 0.3,
        }
    }
}

/// Seeded synthetic reviews built from `<keyword> <cue>` clauses whose gold
/// labels follow the cues by construction.
pub fn generate_synthetic_reviews(
    seed: u64,
    n: usize,
    config: &CategoryConfig,
    lexicon: &Lexicon,
    params: GeneratorParams,
) -> Result<Vec<Review>> {
    lexicon.validate(config)?;
    for (name, p) in [
        ("aspect_rate", params.aspect_rate),
        ("positive_rate", params.positive_rate),
        ("filler_rate", params.filler_rate),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {p}")));
        }
    }
    let mut rng = rng::stream(seed, rng::GENERATE);
    let width = n.to_string().len().max(4);
    let mut reviews = Vec::with_capacity(n);
    for i in 0..n {
        let mut review = Review::new(format!("r{i:0width$}"), String::new());
        let mut clauses = Vec::new();
        for category in config.categories() {
            if !rng.random_bool(params.aspect_rate) {
                continue;
            }
            let entry = &lexicon.entries[category];
            let polarity = if rng.random_bool(params.positive_rate) {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            let cues = match polarity {
                Polarity::Positive => &entry.positive,
                Polarity::Negative => &entry.negative,
            };
            let keyword = entry.keywords.choose(&mut rng).expect("validated nonempty");
            let cue = cues.choose(&mut rng).expect("validated nonempty");
            clauses.push(format!("{keyword} {cue}"));
            review.gold.insert(category.clone(), polarity);
        }
        clauses.shuffle(&mut rng);
        let mut text = String::new();
        let use_filler = !lexicon.fillers.is_empty() && (clauses.is_empty() || rng.random_bool(params.filler_rate));
        if use_filler {
            text.push_str(lexicon.fillers.choose(&mut rng).expect("nonempty"));
        }
        for (k, clause) in clauses.iter().enumerate() {
            if k > 0 {
                text.push_str(lexicon.connectors.choose(&mut rng).expect("validated nonempty"));
            } else if !text.is_empty() {
                text.push_str(" , ");
            }
            text.push_str(clause);
        }
        review.text = text;
        reviews.push(review);
    }
    Ok(reviews)
}

/// Splits a review text into clause sentences at connector boundaries.
/// Used to build pretraining documents from reviews.
pub fn clause_sentences(text: &str, lexicon: &Lexicon) -> Vec<String> {
    let mut parts = vec![text.to_string()];
    for connector in &lexicon.connectors {
        parts = parts
            .iter()
            .flat_map(|p| p.split(connector.as_str()).map(str::to_string).collect::<Vec<_>>())
            .collect();
    }
    parts
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Reads JSON-lines records, skipping blank lines. Errors cite the 1-based line.
pub fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| Error::Json { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item).map_err(|source| Error::Json { line: 0, source })?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// A vocabulary covering everything the generator and the auxiliary
/// sentences can produce: the special tokens, every whole word, and single
/// letters/digits (plain and `##`) so unseen words still segment.
pub fn task_vocab(config: &CategoryConfig, lexicon: &Lexicon) -> Result<crate::tokenizer::Vocab> {
    use crate::tokenizer::{basic_tokenize, CLS, CONTINUATION_PREFIX, MASK, PAD, SEP, UNK};
    let mut words = lexicon.all_words();
    for category in config.categories() {
        for method in TransformMethod::ALL {
            let polarities: Vec<Option<AuxLabel>> = if method.is_binary() {
                AuxLabel::ALL.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for p in polarities {
                words.extend(basic_tokenize(&config.build_aux_sentence(category, p, method)?));
            }
        }
    }
    let chars: Vec<String> = ('a'..='z').chain('0'..='9').map(String::from).collect();
    let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP, MASK].iter().map(|s| s.to_string()).collect();
    tokens.extend(chars.iter().filter(|c| !words.contains(*c)).cloned());
    tokens.extend(words);
    tokens.extend(chars.iter().map(|c| format!("{CONTINUATION_PREFIX}{c}")));
    crate::tokenizer::Vocab::from_tokens(tokens)
}

pub fn load_reviews(path: impl AsRef<Path>) -> Result<Vec<Review>> {
    read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_reviews(path: impl AsRef<Path>, reviews: &[Review]) -> Result<()> {
    write_jsonl(std::io::BufWriter::new(std::fs::File::create(path)?), reviews)
}
