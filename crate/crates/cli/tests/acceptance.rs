//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use absa_core::encoder::attention::attention_weights;
use absa_core::encoder::model::encoder_forward;
use absa_core::encoder::pretrain::{maskable_positions, mlm_mask, nsp_sample, NspLabel};
use absa_core::eval::{f1_scores, gold_of, Approach, Predictions};
use absa_core::experiment::{baseline_f1, pretraining_corpus, run_cell, ExperimentConfig, Workspace};
use absa_core::gradcheck::{check_classifier_gradients, max_relative_error};
use absa_core::rng::{self, Rng as ChaCha};
use absa_core::tokenizer::{wordpiece, Vocab, DEFAULT_MAX_WORD_CHARS, UNK};
use absa_core::training::grid::{grid_search, Grid};
use absa_core::training::pair::{collect_pair_scores, PairTask};
use absa_core::training::{AdaptationStrategy, Hyperparams, Model};
use absa_core::transform::{
    aggregate_predictions, generate_synthetic_reviews, task_vocab, transform_dataset, GeneratorParams, LabelSet,
    Lexicon, PairLabel, Polarity, Review,
};
use absa_core::{encode_pair, tokenize, CategoryConfig, EncoderConfig, EncoderParams, InputRepresentation, TransformMethod};
use ndarray::{s, Array2};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

const METHODS: [TransformMethod; 4] = [
    TransformMethod::NliB,
    TransformMethod::NliM,
    TransformMethod::QaB,
    TransformMethod::QaM,
];

// 1. Greedy longest-match segmentation against an independent oracle.
fn tokenizer_fidelity() -> Outcome {
    let mut rng = rng::stream(1, "acceptance-vocab");
    let alphabet: Vec<char> = "abdegiklmnprstu".chars().collect();
    let piece = |rng: &mut ChaCha| -> String {
        let len = rng.random_range(1..=5);
        (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
    };
    let mut pieces = BTreeSet::new();
    while pieces.len() < 495 {
        let p = piece(&mut rng);
        pieces.insert(if rng.random_bool(0.5) { format!("##{p}") } else { p });
    }
    let vocab = Vocab::from_tokens(
        ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
            .iter()
            .map(|s| s.to_string())
            .chain(pieces.iter().cloned()),
    )
    .map_err(fail)?;
    let oracle = |word: &str| -> Vec<String> {
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let prefix = if start == 0 { "" } else { "##" };
            let best = (start + 1..=chars.len())
                .rev()
                .map(|end| (end, format!("{prefix}{}", chars[start..end].iter().collect::<String>())))
                .find(|(_, p)| pieces.contains(p));
            match best {
                Some((end, p)) => {
                    out.push(p);
                    start = end;
                }
                None => return vec![UNK.to_string()],
            }
        }
        out
    };
    let mut mismatches = 0;
    let mut unknown = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..=14);
        let word: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        let got = wordpiece(&word, &vocab, DEFAULT_MAX_WORD_CHARS);
        unknown += usize::from(got == [UNK]);
        mismatches += usize::from(got != oracle(&word));
    }
    ensure(
        mismatches == 0 && vocab.len() == 500,
        format!("{mismatches} mismatches over 1000 words, vocab {} ({unknown} unknown words)", vocab.len()),
    )
}

// 2. transform -> ideal scores -> aggregate recovers gold.
fn transform_round_trip() -> Outcome {
    let config = CategoryConfig::default();
    let params = GeneratorParams {
        aspect_rate: 0.3,
        ..Default::default()
    };
    let reviews = generate_synthetic_reviews(2, 500, &config, &Lexicon::default(), params).map_err(fail)?;
    let mut discrepancies = 0;
    for method in METHODS {
        let instances = transform_dataset(&reviews, &config, method);
        let scores: Vec<Vec<f64>> = instances
            .iter()
            .map(|i| match i.label {
                PairLabel::Binary(b) => vec![1.0 - f64::from(b), f64::from(b)],
                PairLabel::Class(c) => {
                    let mut v = vec![0.0; 3];
                    v[c.index()] = 1.0;
                    v
                }
            })
            .collect();
        let grouped = collect_pair_scores(&instances, &scores, method);
        for review in &reviews {
            let labels = aggregate_predictions(&grouped[&review.id], &config, method).map_err(fail)?;
            discrepancies += usize::from(labels != review.gold_set());
        }
    }
    ensure(discrepancies == 0, format!("{discrepancies} discrepancies over 500 reviews x 4 methods"))
}

// 3. NLI-B expansion count and the six-row worked example.
fn expansion_arithmetic() -> Outcome {
    let config = CategoryConfig::default();
    let reviews = generate_synthetic_reviews(3, 9448, &config, &Lexicon::default(), GeneratorParams::default())
        .map_err(fail)?;
    let count = transform_dataset(&reviews, &config, TransformMethod::NliB).len();
    let fixture = Review::new("t1", "kamarnya bersih dan pelayanannya bagus")
        .with_label("service", Polarity::Positive)
        .with_label("kebersihan", Polarity::Positive);
    let two = CategoryConfig::new(["service", "kebersihan"]).map_err(fail)?;
    let rows: Vec<(String, String, u8)> = transform_dataset(&[fixture], &two, TransformMethod::NliB)
        .into_iter()
        .map(|p| match p.label {
            PairLabel::Binary(b) => (p.text_a, p.text_b, b),
            PairLabel::Class(_) => (p.text_a, p.text_b, u8::MAX),
        })
        .collect();
    let text = "kamarnya bersih dan pelayanannya bagus";
    let expected: Vec<(String, String, u8)> = [
        ("service-positif", 1),
        ("service-negatif", 0),
        ("service-none", 0),
        ("kebersihan-positif", 1),
        ("kebersihan-negatif", 0),
        ("kebersihan-none", 0),
    ]
    .iter()
    .map(|(a, l)| (a.to_string(), text.to_string(), *l))
    .collect();
    ensure(
        count == 283_440 && rows == expected,
        format!("{count} instances (expected 283440); worked example rows match: {}", rows == expected),
    )
}

// 4. Analytic vs numeric gradients of the pair-classification loss.
fn gradient_correctness() -> Outcome {
    let categories = CategoryConfig::new(["ac", "wifi", "linen"]).map_err(fail)?;
    let lexicon = Lexicon::default();
    let vocab = task_vocab(&categories, &lexicon).map_err(fail)?;
    let mut config = EncoderConfig::new(2, 8, 2, vocab.len(), 16);
    config.ffn_size = 32;
    config.init_std = 0.3;
    let encoder = EncoderParams::init(&config, &mut rng::stream(4, rng::INIT)).map_err(fail)?;
    let task = PairTask {
        categories: &categories,
        method: TransformMethod::NliB,
        vocab: &vocab,
        max_seq_len: 16,
    };
    let mut model = Model::new(config, encoder, task.head(), 4).map_err(fail)?;
    model.head.dense.weight.mapv_inplace(|w| w * 20.0);
    let reviews = generate_synthetic_reviews(5, 2, &categories, &lexicon, GeneratorParams::default()).map_err(fail)?;
    let examples: Vec<_> = task.examples(&reviews).map_err(fail)?.into_iter().take(4).collect();
    let checks = check_classifier_gradients(&model, &examples, 1e-5).map_err(fail)?;
    let worst = checks
        .iter()
        .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
        .map(|c| c.name.clone())
        .unwrap_or_default();
    let max = max_relative_error(&checks);
    ensure(max < 1e-4, format!("max relative error {max:.2e} over {} groups (worst {worst})", checks.len()))
}

fn random_repr(rng: &mut ChaCha, vocab_size: usize, max_len: usize) -> InputRepresentation {
    let real = rng.random_range(3..=max_len);
    let split = rng.random_range(1..real);
    let token_ids: Vec<usize> = (0..max_len)
        .map(|i| match i {
            0 => 2,
            i if i < real => rng.random_range(5..vocab_size),
            _ => 0,
        })
        .collect();
    InputRepresentation {
        token_ids,
        segment_ids: (0..max_len).map(|i| usize::from(i >= split && i < real)).collect(),
        position_ids: (0..max_len).collect(),
        attention_mask: (0..max_len).map(|i| u8::from(i < real)).collect(),
        real_length: real,
    }
}

// 5. Attention rows, masked keys and pad invariance on random inputs.
fn attention_invariants() -> Outcome {
    let mut rng = rng::stream(5, "acceptance-attention");
    let mut config = EncoderConfig::new(2, 16, 2, 40, 16);
    config.init_std = 0.3;
    let params = EncoderParams::init(&config, &mut rng::stream(5, rng::INIT)).map_err(fail)?;
    let mut noisy = params.clone();
    noisy.embeddings.token.row_mut(0).mapv_inplace(|_| rng.random_range(-5.0..5.0));
    let (mut worst_sum, mut worst_masked, mut worst_pad) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..1000 {
        let t = rng.random_range(1..=16);
        let x = Array2::from_shape_simple_fn((t, 16), || rng.random_range(-3.0..3.0));
        let mut mask: Vec<u8> = (0..t).map(|_| u8::from(rng.random_bool(0.7))).collect();
        mask[rng.random_range(0..t)] = 1;
        for layer in &params.layers {
            for probs in attention_weights(&x.view(), &mask, layer, config.heads).map_err(fail)? {
                for row in probs.rows() {
                    let (mut visible, mut hidden) = (0.0, 0.0_f64);
                    for (p, &m) in row.iter().zip(&mask) {
                        if m == 1 {
                            visible += p;
                        } else {
                            hidden = hidden.max(*p);
                        }
                    }
                    worst_sum = worst_sum.max((visible - 1.0_f64).abs());
                    worst_masked = worst_masked.max(hidden);
                }
            }
        }
        let repr = random_repr(&mut rng, 40, 16);
        let base = encoder_forward(&repr, &params, &config).map_err(fail)?;
        let mut scrambled = repr.clone();
        for i in repr.real_length..16 {
            scrambled.token_ids[i] = rng.random_range(0..40);
        }
        let n = repr.real_length;
        for out in [
            encoder_forward(&scrambled, &params, &config).map_err(fail)?,
            encoder_forward(&repr, &noisy, &config).map_err(fail)?,
        ] {
            let d = (&out.hidden.slice(s![..n, ..]) - &base.hidden.slice(s![..n, ..]))
                .iter()
                .chain((&out.cls - &base.cls).iter())
                .fold(0.0_f64, |m, v| m.max(v.abs()));
            worst_pad = worst_pad.max(d);
        }
    }
    ensure(
        worst_sum < 1e-6 && worst_masked < 1e-9 && worst_pad < 1e-12,
        format!("row-sum error {worst_sum:.1e}, max masked weight {worst_masked:.1e}, pad drift {worst_pad:.1e}"),
    )
}

// 6. Mask counts, specials and the IsNext fraction.
fn mlm_nsp_statistics() -> Outcome {
    let categories = CategoryConfig::default();
    let lexicon = Lexicon::default();
    let vocab = task_vocab(&categories, &lexicon).map_err(fail)?;
    let special = vocab.special();
    let params = GeneratorParams {
        aspect_rate: 0.4,
        ..Default::default()
    };
    let reviews = generate_synthetic_reviews(6, 3000, &categories, &lexicon, params).map_err(fail)?;
    let corpus = pretraining_corpus(&reviews, &lexicon);
    let pairs = nsp_sample(&corpus, 10_000, 6).map_err(fail)?;
    let next = pairs.iter().filter(|p| p.label == NspLabel::IsNext).count() as f64 / pairs.len() as f64;
    let mut wrong_counts = 0;
    let mut specials_masked = 0;
    for (i, pair) in pairs.iter().take(2000).enumerate() {
        let repr = encode_pair(&tokenize(&pair.sentence_a, &vocab), &tokenize(&pair.sentence_b, &vocab), &vocab, 48)
            .map_err(fail)?;
        let maskable = maskable_positions(&repr, special);
        let masked = mlm_mask(&repr, special, 0.15, i as u64).map_err(fail)?;
        wrong_counts += usize::from(masked.target_positions.len() != (0.15 * maskable.len() as f64).round() as usize);
        specials_masked += masked
            .target_positions
            .iter()
            .filter(|&&p| special.contains(repr.token_ids[p]))
            .count();
    }
    ensure(
        wrong_counts == 0 && specials_masked == 0 && (next - 0.5).abs() <= 0.02,
        format!("{wrong_counts} wrong mask counts, {specials_masked} specials masked, IsNext fraction {next:.4}"),
    )
}

// 7. Feature extraction leaves the encoder hash unchanged.
fn freeze_contract(cfg: &ExperimentConfig, ws: &Workspace) -> Outcome {
    let task = PairTask {
        categories: &ws.categories,
        method: cfg.method,
        vocab: &ws.vocab,
        max_seq_len: cfg.max_seq_len,
    };
    let before = ws.encoder.sha256_hex();
    let hp = Hyperparams {
        epochs: 2,
        ..cfg.pair.clone()
    };
    let (model, _) = task
        .train(&ws.encoder_config, ws.encoder.clone(), &ws.train[..200], &[], AdaptationStrategy::FeatureExtraction, &hp)
        .map_err(fail)?;
    let after = model.encoder.sha256_hex();
    ensure(before == after, format!("encoder sha256 {}... before and {}... after", &before[..12], &after[..12]))
}

// 8. Approach x strategy comparison at desk scale.
fn desk_comparison(cfg: &ExperimentConfig, ws: &Workspace, started: Instant) -> Outcome {
    let f1 = |approach, strategy| -> Result<f64, String> {
        let t = Instant::now();
        let cell = run_cell(cfg, ws, approach, strategy).map_err(fail)?;
        println!("    {approach} / {strategy}: F1 {:.4} ({:.0} s)", cell.report.micro_f1, t.elapsed().as_secs_f64());
        Ok(cell.report.micro_f1)
    };
    let pair_ft = f1(Approach::SentencePair, AdaptationStrategy::FineTuning)?;
    let pair_fe = f1(Approach::SentencePair, AdaptationStrategy::FeatureExtraction)?;
    let single_ft = f1(Approach::SingleSentence, AdaptationStrategy::FineTuning)?;
    let single_fe = f1(Approach::SingleSentence, AdaptationStrategy::FeatureExtraction)?;
    let baseline = baseline_f1(cfg, ws).map_err(fail)?;
    let minutes = started.elapsed().as_secs_f64() / 60.0;
    let ok = pair_ft > pair_fe && single_ft > single_fe && pair_ft > single_ft && pair_ft >= 0.95 && minutes < 20.0;
    ensure(
        ok,
        format!(
            "pair FT {pair_ft:.4} / FE {pair_fe:.4}, single FT {single_ft:.4} / FE {single_fe:.4}, \
             untrained head {baseline:.4}, vocab {}, {minutes:.1} min",
            ws.vocab.len()
        ),
    )
}

// 9. Grid shape, divergent learning rate ranked last, spread reported.
fn grid_harness(cfg: &ExperimentConfig, ws: &Workspace) -> Outcome {
    let task = PairTask {
        categories: &ws.categories,
        method: cfg.method,
        vocab: &ws.vocab,
        max_seq_len: cfg.max_seq_len,
    };
    let gold = gold_of(&ws.validation);
    let base = Hyperparams {
        epochs: 1,
        seed: cfg.seed,
        ..cfg.pair.clone()
    };
    let run = |hp: &Hyperparams| -> absa_core::Result<f64> {
        let (model, _) = task.train(&ws.encoder_config, ws.encoder.clone(), &ws.train, &[], AdaptationStrategy::FineTuning, hp)?;
        Ok(f1_scores(&task.predict(&model, &ws.validation)?, &gold)?.micro_f1)
    };
    let sane = grid_search(&Grid::default(), &base, run).map_err(fail)?;
    let injected = Grid {
        learning_rates: vec![3e-5, 2e-5, 1.0],
        batch_sizes: vec![16, 32],
    };
    let with_divergent = grid_search(&injected, &base, run).map_err(fail)?;
    let last_two: Vec<f64> = with_divergent.ranked().skip(4).map(|r| r.learning_rate).collect();
    let ok = sane.rows.len() == 4 && last_two == [1.0, 1.0];
    let divergent: Vec<String> = with_divergent
        .rows
        .iter()
        .filter(|r| r.learning_rate == 1.0)
        .map(|r| format!("F1 {:.4}{}", r.f1, if r.diverged { " diverged" } else { "" }))
        .collect();
    ensure(
        ok,
        format!(
            "{} rows, sane spread {:.4}, best lr {} batch {}; lr 1.0 runs ({}) ranked last: {}",
            sane.rows.len(),
            sane.spread(),
            sane.best().learning_rate,
            sane.best().batch_size,
            divergent.join(", "),
            last_two == [1.0, 1.0]
        ),
    )
}

fn random_set(rng: &mut ChaCha, categories: &[&str]) -> LabelSet {
    let mut set = LabelSet::new();
    for c in categories {
        match rng.random_range(0..3) {
            0 => {}
            1 => {
                set.insert((c.to_string(), Polarity::Positive));
            }
            _ => {
                set.insert((c.to_string(), Polarity::Negative));
            }
        }
    }
    set
}

// 10. Micro F1 against an independent scalar implementation.
fn metric_oracle() -> Outcome {
    let categories = ["ac", "air_panas", "linen", "tv", "wifi"];
    let mut rng = rng::stream(10, "acceptance-metric");
    let mut worst = 0.0_f64;
    for _ in 0..10_000 {
        let n = rng.random_range(1..10);
        let mut pred = Predictions::new();
        let mut gold = Predictions::new();
        for i in 0..n {
            pred.insert(format!("r{i}"), random_set(&mut rng, &categories));
            gold.insert(format!("r{i}"), random_set(&mut rng, &categories));
        }
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for (id, g) in &gold {
            for label in &pred[id] {
                if g.contains(label) {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
            fn_ += g.iter().filter(|l| !pred[id].contains(*l)).count() as f64;
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let expected = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        let got = f1_scores(&pred, &gold).map_err(fail)?.micro_f1;
        worst = worst.max((got - expected).abs());
    }
    let gold: Predictions = (0..50)
        .map(|i| {
            let mut set = random_set(&mut rng, &categories);
            set.insert(("tv".into(), Polarity::Positive));
            set.remove(&("tv".to_string(), Polarity::Negative));
            (format!("r{i}"), set)
        })
        .collect();
    let empty: Predictions = gold.keys().map(|k| (k.clone(), LabelSet::new())).collect();
    let perfect = f1_scores(&gold, &gold).map_err(fail)?.micro_f1;
    let none = f1_scores(&empty, &gold).map_err(fail)?.micro_f1;
    ensure(
        worst <= 1e-12 && perfect == 1.0 && none == 0.0,
        format!("max deviation {worst:.1e} over 10000 configurations; perfect {perfect}, empty {none}"),
    )
}

fn absa(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_absa"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(fail)?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("absa {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

const CLI_CONFIG: &str = r#"
seed = 5
vocab = "vocab.txt"
dataset = "reviews.jsonl"
max_seq_len = 32

[encoder]
layers = 1
hidden = 16
heads = 2

[train]
epochs = 1
learning_rate = 1e-3
batch_size = 32

[pretrain]
epochs = 1
steps_per_epoch = 10
batch_size = 8
learning_rate = 1e-3
mask_rate = 0.15
max_seq_len = 32
masking = "all-mask"

[grid]
learning_rates = [1e-3, 5e-4]
batch_sizes = [32]

[experiment]
seed = 5
reviews = 120
pretrain_reviews = 120
hidden = 16
layers = 1
max_seq_len = 32

[experiment.pretrain]
epochs = 1
steps_per_epoch = 10
batch_size = 8
learning_rate = 1e-3
mask_rate = 0.15
max_seq_len = 32
seed = 0

[experiment.pair]
learning_rate = 1e-3
batch_size = 32
epochs = 1
seed = 0

[experiment.single]
learning_rate = 1e-3
batch_size = 32
epochs = 1
seed = 0
"#;

/// Runs the full command sequence in `dir`.
fn cli_sequence(dir: &Path) -> Result<(), String> {
    std::fs::write(dir.join("run.toml"), CLI_CONFIG).map_err(fail)?;
    std::fs::write(dir.join("lines.txt"), "kamar bersih dan wifi cepat\nsprei kusam tapi tv jernih\n").map_err(fail)?;
    let c = ["--config", "run.toml"];
    let with = |rest: &[&'static str]| -> Vec<&'static str> { c.iter().copied().chain(rest.iter().copied()).collect() };
    absa(dir, &with(&["generate", "--n", "150", "--out", "reviews.jsonl", "--vocab-out", "vocab.txt"]))?;
    absa(dir, &with(&["tokenize", "--input", "lines.txt", "--out", "tokens.txt"]))?;
    absa(dir, &with(&["transform", "--method", "qa-m", "--out", "pairs.jsonl"]))?;
    absa(dir, &with(&["pretrain", "--out", "pretrained"]))?;
    absa(dir, &with(&["train", "--init", "pretrained/encoder.ckpt", "--out", "pair"]))?;
    absa(
        dir,
        &with(&["train", "--approach", "single-sentence", "--init", "pretrained/encoder.ckpt", "--out", "single"]),
    )?;
    absa(dir, &with(&["grid", "--init", "pretrained/encoder.ckpt", "--out", "grid"]))?;
    absa(dir, &with(&["eval", "--model", "pair/model.ckpt", "--out", "eval"]))?;
    absa(dir, &with(&["eval", "--runs", "pair", "single", "--out", "compare"]))?;
    absa(dir, &with(&["report", "--out", "report"]))?;
    Ok(())
}

const PRIMARY_OUTPUTS: [&str; 25] = [
    "reviews.jsonl",
    "vocab.txt",
    "tokens.txt",
    "pairs.jsonl",
    "pretrained/encoder.ckpt",
    "pretrained/pretrain_history.csv",
    "pair/model.ckpt",
    "pair/history.csv",
    "pair/report.json",
    "pair/per_category.csv",
    "pair/misclassified.jsonl",
    "pair/run.json",
    "single/suite.ckpt",
    "single/history.csv",
    "single/report.json",
    "grid/grid.csv",
    "grid/grid.json",
    "eval/report.json",
    "eval/misclassified.jsonl",
    "compare/comparison.json",
    "compare/comparison.txt",
    "report/comparison.json",
    "report/cells.json",
    "report/results.csv",
    "report/pretrain_history.csv",
];

// 11. Every command, run twice, writes byte-identical outputs.
fn cli_determinism() -> Outcome {
    let first = tempfile::tempdir().map_err(fail)?;
    let second = tempfile::tempdir().map_err(fail)?;
    cli_sequence(first.path())?;
    cli_sequence(second.path())?;
    let mut differing = Vec::new();
    for name in PRIMARY_OUTPUTS {
        let a = std::fs::read(first.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        let b = std::fs::read(second.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        if a != b {
            differing.push(name);
        }
    }
    ensure(
        differing.is_empty(),
        format!("{} output files compared across two runs; differing: {differing:?}", PRIMARY_OUTPUTS.len()),
    )
}

/// Runtime limits in seconds; criterion 8 checks its own.
fn time_limit(number: usize) -> Option<f64> {
    match number {
        1 => Some(1.0),
        2 => Some(10.0),
        3 => Some(30.0),
        4 => Some(120.0),
        _ => None,
    }
}

fn main() {
    let started = Instant::now();
    let mut failures = 0;
    let mut report = |number: usize, name: &str, outcome: Outcome, t: Instant| {
        let secs = t.elapsed().as_secs_f64();
        let outcome = match (outcome, time_limit(number)) {
            (Ok(detail), Some(limit)) if secs >= limit => Err(format!("{detail}; over the {limit} s limit")),
            (outcome, _) => outcome,
        };
        match outcome {
            Ok(detail) => println!("PASS  {number:>2}. {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failures += 1;
                println!("FAIL  {number:>2}. {name}: {detail} [{secs:.1} s]");
            }
        }
    };

    let t = Instant::now();
    report(1, "tokenizer greedy match", tokenizer_fidelity(), t);
    let t = Instant::now();
    report(2, "transform round trip", transform_round_trip(), t);
    let t = Instant::now();
    report(3, "expansion arithmetic", expansion_arithmetic(), t);
    let t = Instant::now();
    report(4, "gradient check", gradient_correctness(), t);
    let t = Instant::now();
    report(5, "attention and padding invariants", attention_invariants(), t);
    let t = Instant::now();
    report(6, "masking and next-sentence statistics", mlm_nsp_statistics(), t);

    let cfg = ExperimentConfig::default();
    let desk_started = Instant::now();
    match cfg.prepare() {
        Ok(ws) => {
            println!(
                "      desk workspace: {} train / {} validation reviews, pretraining loss {:?}",
                ws.train.len(),
                ws.validation.len(),
                ws.pretrain_history.loss.iter().map(|l| format!("{l:.3}")).collect::<Vec<_>>()
            );
            let t = Instant::now();
            report(7, "feature-extraction freeze", freeze_contract(&cfg, &ws), t);
            let t = Instant::now();
            report(8, "desk-scale comparison", desk_comparison(&cfg, &ws, desk_started), t);
            let t = Instant::now();
            report(9, "grid harness", grid_harness(&cfg, &ws), t);
        }
        Err(e) => {
            for (n, name) in [(7, "feature-extraction freeze"), (8, "desk-scale comparison"), (9, "grid harness")] {
                report(n, name, Err(format!("workspace preparation failed: {e}")), desk_started);
            }
        }
    }

    let t = Instant::now();
    report(10, "micro F1 oracle", metric_oracle(), t);
    let t = Instant::now();
    report(11, "CLI determinism", cli_determinism(), t);

    println!("acceptance: {} of 11 criteria passed in {:.1} s", 11 - failures, started.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}
