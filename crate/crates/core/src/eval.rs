//! Pair-level F1, strategy/approach comparison tables and error listings.
//!
//! A prediction is a set of (category, polarity) pairs per review; a pair is a
//! true positive iff the same pair is in the review's gold set. Micro F1 over
//! all pairs is the headline number, macro F1 is reported alongside.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::AdaptationStrategy;
use crate::transform::{AuxLabel, LabelSet, Polarity, Review};

/// Label sets keyed by review id.
pub type Predictions = BTreeMap<String, LabelSet>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_from_counts(self.tp, self.fp, self.fn_)
    }

    fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `2PR / (P + R)`, taken as 0 when precision and recall are both 0 or undefined.
pub fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub category: String,
    pub polarity: Polarity,
    #[serde(flatten)]
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairLevelConfusion {
    pub per_pair: Vec<PairCounts>,
    pub micro: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_category_f1: BTreeMap<String, f64>,
    pub confusion: PairLevelConfusion,
    /// Ids of reviews whose predicted set differs from gold.
    pub misclassified: Vec<String>,
}

fn check_ids(predictions: &Predictions, gold: &Predictions) -> Result<()> {
    let missing_in_predictions: Vec<String> = gold.keys().filter(|k| !predictions.contains_key(*k)).cloned().collect();
    let missing_in_gold: Vec<String> = predictions.keys().filter(|k| !gold.contains_key(*k)).cloned().collect();
    if missing_in_predictions.is_empty() && missing_in_gold.is_empty() {
        Ok(())
    } else {
        Err(Error::IdMismatch {
            missing_in_predictions,
            missing_in_gold,
        })
    }
}

/// Micro and macro F1 over (category, polarity) pairs.
pub fn f1_scores(predictions: &Predictions, gold: &Predictions) -> Result<EvalReport> {
    check_ids(predictions, gold)?;
    let mut per_pair: BTreeMap<(String, Polarity), Counts> = BTreeMap::new();
    let mut misclassified = Vec::new();
    for (id, gold_set) in gold {
        let predicted = &predictions[id];
        if predicted != gold_set {
            misclassified.push(id.clone());
        }
        for pair in predicted {
            let c = per_pair.entry(pair.clone()).or_default();
            if gold_set.contains(pair) {
                c.tp += 1;
            } else {
                c.fp += 1;
            }
        }
        for pair in gold_set.difference(predicted) {
            per_pair.entry(pair.clone()).or_default().fn_ += 1;
        }
    }

    let mut micro = Counts::default();
    let mut per_category: BTreeMap<String, Counts> = BTreeMap::new();
    let mut macro_sum = 0.0;
    let mut supported = 0usize;
    for ((category, _), c) in &per_pair {
        micro.add(*c);
        per_category.entry(category.clone()).or_default().add(*c);
        if c.tp + c.fn_ > 0 {
            macro_sum += c.f1();
            supported += 1;
        }
    }
    Ok(EvalReport {
        micro_precision: micro.precision(),
        micro_recall: micro.recall(),
        micro_f1: micro.f1(),
        macro_f1: if supported == 0 { 0.0 } else { macro_sum / supported as f64 },
        per_category_f1: per_category.into_iter().map(|(k, c)| (k, c.f1())).collect(),
        confusion: PairLevelConfusion {
            per_pair: per_pair
                .into_iter()
                .map(|((category, polarity), counts)| PairCounts {
                    category,
                    polarity,
                    counts,
                })
                .collect(),
            micro,
        },
        misclassified,
    })
}

/// Gold label sets keyed by review id.
pub fn gold_of(reviews: &[Review]) -> Predictions {
    reviews.iter().map(|r| (r.id.clone(), r.gold_set())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    SingleSentence,
    SentencePair,
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::SingleSentence => "single-sentence",
            Approach::SentencePair => "sentence-pair",
        })
    }
}

impl std::str::FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" | "single-sentence" => Ok(Approach::SingleSentence),
            "pair" | "sentence-pair" => Ok(Approach::SentencePair),
            other => Err(Error::InvalidArgument(format!("unknown approach {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    /// e.g. "fine-tuning > feature-extraction".
    pub claim: String,
    /// (better cell, its F1, worse cell, its F1) for every comparable pair.
    pub comparisons: Vec<(String, f64, String, f64)>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub entries: Vec<(Approach, AdaptationStrategy, f64)>,
    pub orderings: Vec<OrderingCheck>,
}

/// Lays out the approach × strategy F1 table and checks that fine-tuning
/// beats feature extraction and sentence-pair beats single-sentence wherever
/// both cells are present.
pub fn compare_report(results: &BTreeMap<(Approach, AdaptationStrategy), f64>) -> Result<ComparisonReport> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("comparison needs at least one result".into()));
    }
    let cell = |a: Approach, s: AdaptationStrategy| format!("{a}/{s}");
    let mut orderings = Vec::new();

    let mut by_strategy = Vec::new();
    for a in [Approach::SingleSentence, Approach::SentencePair] {
        if let (Some(&ft), Some(&fe)) = (
            results.get(&(a, AdaptationStrategy::FineTuning)),
            results.get(&(a, AdaptationStrategy::FeatureExtraction)),
        ) {
            by_strategy.push((
                cell(a, AdaptationStrategy::FineTuning),
                ft,
                cell(a, AdaptationStrategy::FeatureExtraction),
                fe,
            ));
        }
    }
    let mut by_approach = Vec::new();
    for s in [AdaptationStrategy::FeatureExtraction, AdaptationStrategy::FineTuning] {
        if let (Some(&pair), Some(&single)) = (
            results.get(&(Approach::SentencePair, s)),
            results.get(&(Approach::SingleSentence, s)),
        ) {
            by_approach.push((
                cell(Approach::SentencePair, s),
                pair,
                cell(Approach::SingleSentence, s),
                single,
            ));
        }
    }
    for (claim, comparisons) in [
        ("fine-tuning > feature-extraction", by_strategy),
        ("sentence-pair > single-sentence", by_approach),
    ] {
        if !comparisons.is_empty() {
            let holds = comparisons.iter().all(|(_, better, _, worse)| better > worse);
            orderings.push(OrderingCheck {
                claim: claim.to_string(),
                comparisons,
                holds,
            });
        }
    }
    Ok(ComparisonReport {
        entries: results.iter().map(|(&(a, s), &f)| (a, s, f)).collect(),
        orderings,
    })
}

impl ComparisonReport {
    pub fn get(&self, approach: Approach, strategy: AdaptationStrategy) -> Option<f64> {
        self.entries
            .iter()
            .find(|(a, s, _)| *a == approach && *s == strategy)
            .map(|e| e.2)
    }

    pub fn all_orderings_hold(&self) -> bool {
        self.orderings.iter().all(|o| o.holds)
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:<20} {:>8}", "approach", "strategy", "F1")?;
        for (a, s, v) in &self.entries {
            writeln!(f, "{:<18} {:<20} {:>8.4}", a.to_string(), s.to_string(), v)?;
        }
        for o in &self.orderings {
            writeln!(f)?;
            writeln!(f, "{}: {}", o.claim, if o.holds { "holds" } else { "VIOLATED" })?;
            for (better, bf, worse, wf) in &o.comparisons {
                writeln!(f, "  {better} {bf:.4} vs {worse} {wf:.4} (delta {:+.4})", bf - wf)?;
            }
        }
        Ok(())
    }
}

/// One review whose predicted pairs differ from gold, restricted to the
/// categories in disagreement. Labels read `<category>-<pos|neg|none>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Misclassification {
    pub id: String,
    pub text: String,
    pub predicted: Vec<String>,
    pub gold: Vec<String>,
}

fn label_for(set: &LabelSet, category: &str) -> AuxLabel {
    [Polarity::Positive, Polarity::Negative]
        .into_iter()
        .find(|p| set.contains(&(category.to_string(), *p)))
        .map(AuxLabel::from)
        .unwrap_or(AuxLabel::None)
}

/// Lists every review with a disagreement, in `reviews` order. A review missing
/// from `predictions` is treated as predicting nothing.
pub fn error_report(predictions: &Predictions, gold: &Predictions, reviews: &[Review]) -> Vec<Misclassification> {
    let empty = LabelSet::new();
    let mut out = Vec::new();
    for review in reviews {
        let predicted = predictions.get(&review.id).unwrap_or(&empty);
        let gold_set = gold.get(&review.id).unwrap_or(&empty);
        let categories: BTreeSet<&str> = predicted
            .symmetric_difference(gold_set)
            .map(|(c, _)| c.as_str())
            .collect();
        if categories.is_empty() {
            continue;
        }
        let mut entry = Misclassification {
            id: review.id.clone(),
            text: review.text.clone(),
            predicted: Vec::new(),
            gold: Vec::new(),
        };
        for category in categories {
            entry
                .predicted
                .push(format!("{category}-{}", label_for(predicted, category).short()));
            entry.gold.push(format!("{category}-{}", label_for(gold_set, category).short()));
        }
        out.push(entry);
    }
    out
}

/// Number of (category) disagreements across a listing.
pub fn discrepancy_count(listing: &[Misclassification]) -> usize {
    listing.iter().map(|m| m.predicted.len()).sum()
}

/// `learning_rate,batch_size,f1`-style CSV writer for simple float tables.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}
