use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use absa_core::checkpoint::{self, ArtifactKind};
use absa_core::encoder::pretrain::{pretrain, pretrain_from, PretrainHistory};
use absa_core::eval::{compare_report, csv_table, error_report, f1_scores, gold_of, Approach, EvalReport, Predictions};
use absa_core::experiment::{pretraining_corpus, run_comparison};
use absa_core::rng;
use absa_core::tokenizer::{Tokenizer, Vocab};
use absa_core::training::grid::grid_search;
use absa_core::training::pair::PairTask;
use absa_core::training::suite::{SingleSentenceSuite, SuiteHistory, SuiteTask};
use absa_core::training::{AdaptationStrategy, Model, TrainHistory};
use absa_core::transform::{
    generate_synthetic_reviews, load_reviews, save_reviews, split_dataset, task_vocab, transform_dataset, write_jsonl,
    Lexicon, Review,
};
use absa_core::{CategoryConfig, EncoderConfig, EncoderParams};
use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{check_encoder, check_fraction, check_hyperparams, Problems, RunConfig};
use crate::{Command, Common};

/// Config file merged with flag overrides.
fn merged(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.vocab.is_some() {
        cfg.vocab.clone_from(&common.vocab);
    }
    if common.dataset.is_some() {
        cfg.dataset.clone_from(&common.dataset);
    }
    if common.method.is_some() {
        cfg.method = common.method;
    }
    if common.strategy.is_some() {
        cfg.strategy = common.strategy;
    }
    if common.out.is_some() {
        cfg.out.clone_from(&common.out);
    }
    Ok(cfg)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, items)?;
    Ok(buf)
}

fn load_categories(path: Option<&PathBuf>) -> Result<CategoryConfig> {
    match path {
        Some(p) => CategoryConfig::load_file(p).with_context(|| format!("loading categories {}", p.display())),
        None => Ok(CategoryConfig::default()),
    }
}

fn load_lexicon(path: Option<&PathBuf>) -> Result<Lexicon> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading lexicon {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing lexicon {}", p.display()))
        }
        None => Ok(Lexicon::default()),
    }
}

fn load_vocab(path: &Path) -> Result<Vocab> {
    Vocab::load_file(path).with_context(|| format!("loading vocabulary {}", path.display()))
}

fn load_dataset(path: &Path, categories: &CategoryConfig) -> Result<Vec<Review>> {
    let reviews = load_reviews(path).with_context(|| format!("loading dataset {}", path.display()))?;
    for r in &reviews {
        r.validate(categories).with_context(|| format!("review {}", r.id))?;
    }
    Ok(reviews)
}

pub fn run(common: &Common, command: Command) -> Result<()> {
    let mut cfg = merged(common)?;
    match command {
        Command::Generate {
            n,
            lexicon,
            categories,
            vocab_out,
        } => {
            if lexicon.is_some() {
                cfg.lexicon = lexicon;
            }
            if categories.is_some() {
                cfg.categories = categories;
            }
            generate(&cfg, n, vocab_out)
        }
        Command::Tokenize { text, input } => tokenize(&cfg, &text, input),
        Command::Transform { categories } => {
            if categories.is_some() {
                cfg.categories = categories;
            }
            transform(&cfg)
        }
        Command::Pretrain { lexicon } => {
            if lexicon.is_some() {
                cfg.lexicon = lexicon;
            }
            pretrain_cmd(&cfg)
        }
        Command::Train {
            approach,
            init,
            epochs,
            learning_rate,
            batch_size,
            categories,
        } => {
            cfg.approach = approach.or(cfg.approach);
            if init.is_some() {
                cfg.init = init;
            }
            if categories.is_some() {
                cfg.categories = categories;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(lr) = learning_rate {
                cfg.train.learning_rate = lr;
            }
            if let Some(b) = batch_size {
                cfg.train.batch_size = b;
            }
            train_cmd(&cfg)
        }
        Command::Grid {
            approach,
            init,
            epochs,
            categories,
        } => {
            cfg.approach = approach.or(cfg.approach);
            if init.is_some() {
                cfg.init = init;
            }
            if categories.is_some() {
                cfg.categories = categories;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            grid_cmd(&cfg)
        }
        Command::Eval {
            model,
            runs,
            categories,
        } => {
            if categories.is_some() {
                cfg.categories = categories;
            }
            if runs.is_empty() {
                eval_cmd(&cfg, model)
            } else {
                compare_cmd(&cfg, &runs)
            }
        }
        Command::Report => report_cmd(&cfg),
    }
}

fn require_out(problems: &mut Problems, cfg: &RunConfig) -> PathBuf {
    match &cfg.out {
        Some(p) => p.clone(),
        None => {
            problems.push("--out is required");
            PathBuf::new()
        }
    }
}

fn generate(cfg: &RunConfig, n: Option<usize>, vocab_out: Option<PathBuf>) -> Result<()> {
    let mut problems = Problems::default();
    problems.optional_existing("lexicon", cfg.lexicon.as_ref());
    problems.optional_existing("categories", cfg.categories.as_ref());
    let out = require_out(&mut problems, cfg);
    let params = cfg.generate.params();
    for (name, p) in [
        ("aspect_rate", params.aspect_rate),
        ("positive_rate", params.positive_rate),
        ("filler_rate", params.filler_rate),
    ] {
        problems.check((0.0..=1.0).contains(&p), || format!("generate.{name} must lie in [0, 1], got {p}"));
    }
    problems.finish()?;

    let categories = load_categories(cfg.categories.as_ref())?;
    let lexicon = load_lexicon(cfg.lexicon.as_ref())?;
    lexicon.validate(&categories).context("invalid lexicon")?;
    let n = n.unwrap_or(cfg.generate.reviews);
    let reviews = generate_synthetic_reviews(cfg.seed(), n, &categories, &lexicon, params)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    save_reviews(&out, &reviews)?;
    println!("wrote {} reviews to {}", reviews.len(), out.display());
    if let Some(path) = vocab_out {
        let vocab = task_vocab(&categories, &lexicon)?;
        write(&path, vocab.to_file_string())?;
        println!("wrote {} vocabulary entries to {}", vocab.len(), path.display());
    }
    Ok(())
}

fn tokenize(cfg: &RunConfig, texts: &[String], input: Option<PathBuf>) -> Result<()> {
    let mut problems = Problems::default();
    let vocab_path = problems.existing("vocabulary", cfg.vocab.as_ref()).cloned();
    problems.optional_existing("input", input.as_ref());
    problems.check(!texts.is_empty() || input.is_some(), || "give --text or --input".to_string());
    problems.finish()?;

    let vocab = load_vocab(&vocab_path.expect("checked"))?;
    let mut lines: Vec<String> = texts.to_vec();
    if let Some(path) = &input {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        for line in BufReader::new(file).lines() {
            lines.push(line?);
        }
    }
    let tokenizer = Tokenizer::new(&vocab);
    let mut out = String::new();
    for line in &lines {
        let tokens: Vec<&str> = tokenizer.tokenize(line).into_iter().map(|t| vocab.token(t.id).unwrap_or("")).collect::<Vec<_>>();
        let _ = writeln!(out, "{}", tokens.join(" "));
    }
    let stats = tokenizer.oov_stats(&lines);
    let _ = writeln!(out, "# words: {}", stats.total_words);
    let _ = writeln!(out, "# oov occurrences: {}", stats.oov_word_occurrences);
    let _ = writeln!(out, "# unique oov words: {}", stats.unique_oov_words);
    for (word, count) in &stats.oov_list {
        let _ = writeln!(out, "# oov {word} {count}");
    }
    match &cfg.out {
        Some(path) => write(path, out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn transform(cfg: &RunConfig) -> Result<()> {
    let mut problems = Problems::default();
    let dataset = problems.existing("dataset", cfg.dataset.as_ref()).cloned();
    problems.optional_existing("categories", cfg.categories.as_ref());
    let out = require_out(&mut problems, cfg);
    problems.finish()?;

    let categories = load_categories(cfg.categories.as_ref())?;
    let reviews = load_dataset(&dataset.expect("checked"), &categories)?;
    let method = cfg.method();
    let instances = transform_dataset(&reviews, &categories, method);
    write(&out, jsonl(&instances)?)?;
    let per_category = if method.is_binary() { 3 } else { 1 };
    println!(
        "{} instances = {} reviews x {} categories x {} ({method})",
        instances.len(),
        reviews.len(),
        categories.len(),
        per_category
    );
    Ok(())
}

fn pretrain_history_csv(history: &PretrainHistory) -> String {
    let rows: Vec<Vec<String>> = (0..history.loss.len())
        .map(|e| {
            vec![
                e.to_string(),
                format!("{:.10}", history.loss[e]),
                format!("{:.10}", history.mlm_loss[e]),
                format!("{:.10}", history.nsp_loss[e]),
            ]
        })
        .collect();
    csv_table(&["epoch", "loss", "mlm_loss", "nsp_loss"], &rows)
}

fn pretrain_cmd(cfg: &RunConfig) -> Result<()> {
    let mut problems = Problems::default();
    let dataset = problems.existing("dataset", cfg.dataset.as_ref()).cloned();
    let vocab_path = problems.existing("vocabulary", cfg.vocab.as_ref()).cloned();
    problems.optional_existing("lexicon", cfg.lexicon.as_ref());
    problems.optional_existing("categories", cfg.categories.as_ref());
    problems.optional_existing("init", cfg.init.as_ref());
    let out = require_out(&mut problems, cfg);
    let hp = cfg.pretrain_params();
    problems.check(hp.batch_size > 0 && hp.learning_rate > 0.0, || {
        "pretrain.batch_size and pretrain.learning_rate must be positive".to_string()
    });
    problems.check((0.0..=1.0).contains(&hp.mask_rate), || format!("pretrain.mask_rate {} outside [0, 1]", hp.mask_rate));
    check_encoder(&mut problems, &cfg.encoder, hp.max_seq_len);
    problems.finish()?;

    let categories = load_categories(cfg.categories.as_ref())?;
    let lexicon = load_lexicon(cfg.lexicon.as_ref())?;
    let vocab = load_vocab(&vocab_path.expect("checked"))?;
    let reviews = load_dataset(&dataset.expect("checked"), &categories)?;
    let corpus = pretraining_corpus(&reviews, &lexicon);
    if corpus.is_empty() {
        bail!("no review splits into two or more clauses; nothing to pretrain on");
    }
    let (config, params, history) = match &cfg.init {
        Some(init) => {
            let (config, params) = checkpoint::load_encoder(init)?;
            let (params, history) = pretrain_from(params, &corpus, &vocab, &config, &hp)?;
            (config, params, history)
        }
        None => {
            let config = cfg.encoder.build(vocab.len(), hp.max_seq_len.max(cfg.max_seq_len()));
            let (params, history) = pretrain(&corpus, &vocab, &config, &hp)?;
            (config, params, history)
        }
    };
    fs::create_dir_all(&out)?;
    checkpoint::save_encoder(out.join("encoder.ckpt"), &config, &params)?;
    write(&out.join("pretrain_history.csv"), pretrain_history_csv(&history))?;
    println!(
        "pretrained on {} documents; final loss {}",
        corpus.len(),
        history.loss.last().map_or("n/a".to_string(), |l| format!("{l:.4}"))
    );
    Ok(())
}

/// Everything `train`, `grid` and `eval` need after validation.
struct Setup {
    categories: CategoryConfig,
    vocab: Vocab,
    train: Vec<Review>,
    validation: Vec<Review>,
    out: PathBuf,
}

fn training_setup(cfg: &RunConfig, problems: &mut Problems) -> Result<Setup> {
    let dataset = problems.existing("dataset", cfg.dataset.as_ref()).cloned();
    let vocab_path = problems.existing("vocabulary", cfg.vocab.as_ref()).cloned();
    problems.optional_existing("categories", cfg.categories.as_ref());
    problems.optional_existing("init", cfg.init.as_ref());
    let out = require_out(problems, cfg);
    check_hyperparams(problems, &cfg.hyperparams());
    check_encoder(problems, &cfg.encoder, cfg.max_seq_len());
    check_fraction(problems, cfg.train_fraction());
    problems.check(cfg.max_seq_len() >= 4, || format!("max_seq_len must be at least 4, got {}", cfg.max_seq_len()));
    std::mem::take(problems).finish()?;

    let categories = load_categories(cfg.categories.as_ref())?;
    let vocab = load_vocab(&vocab_path.expect("checked"))?;
    let reviews = load_dataset(&dataset.expect("checked"), &categories)?;
    let (train, validation) = split_dataset(&reviews, cfg.train_fraction(), cfg.seed())?;
    Ok(Setup {
        categories,
        vocab,
        train,
        validation,
        out,
    })
}

/// Where training starts from.
enum Start {
    Encoder(EncoderConfig, EncoderParams),
    Model(Model),
    Suite(SingleSentenceSuite),
}

fn starting_point(cfg: &RunConfig, vocab: &Vocab) -> Result<Start> {
    let start = match &cfg.init {
        None => {
            let config = cfg.encoder.build(vocab.len(), cfg.max_seq_len());
            let params = EncoderParams::init(&config, &mut rng::stream(cfg.seed(), rng::INIT))?;
            Start::Encoder(config, params)
        }
        Some(path) => {
            let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let kind = checkpoint::read_checkpoint(BufReader::new(file))?.metadata.kind;
            match kind {
                ArtifactKind::Encoder => {
                    let (config, params) = checkpoint::load_encoder(path)?;
                    Start::Encoder(config, params)
                }
                ArtifactKind::Model => Start::Model(checkpoint::load_model(path)?),
                ArtifactKind::Suite => Start::Suite(checkpoint::load_suite(path)?),
            }
        }
    };
    let config = match &start {
        Start::Encoder(c, _) => c,
        Start::Model(m) => &m.config,
        Start::Suite(s) => &s.aspect.config,
    };
    if config.vocab_size != vocab.len() {
        bail!(
            "encoder expects a vocabulary of {} tokens but the vocabulary file has {}",
            config.vocab_size,
            vocab.len()
        );
    }
    if config.max_positions < cfg.max_seq_len() {
        bail!(
            "max_seq_len {} exceeds the encoder's {} positions",
            cfg.max_seq_len(),
            config.max_positions
        );
    }
    Ok(start)
}

enum Trained {
    Pair(Model, TrainHistory),
    Suite(SingleSentenceSuite, SuiteHistory),
}

impl Trained {
    fn predict(&self, cfg: &RunConfig, setup: &Setup, reviews: &[Review]) -> Result<Predictions> {
        Ok(match self {
            Trained::Pair(model, _) => pair_task(cfg, setup).predict(model, reviews)?,
            Trained::Suite(suite, _) => suite.predict(reviews, &setup.vocab, cfg.max_seq_len())?,
        })
    }

    fn history_csv(&self) -> String {
        let mut rows = Vec::new();
        let mut add = |name: &str, h: &TrainHistory| {
            for e in &h.epochs {
                let opt = |v: Option<f64>| v.map(|x| format!("{x:.10}")).unwrap_or_default();
                rows.push(vec![
                    name.to_string(),
                    e.epoch.to_string(),
                    format!("{:.10}", e.train_loss),
                    opt(e.validation_loss),
                    opt(e.validation_f1),
                ]);
            }
        };
        match self {
            Trained::Pair(_, h) => add("pair", h),
            Trained::Suite(_, h) => {
                add("aspect", &h.aspect);
                for (category, history) in &h.sentiment {
                    add(&format!("sentiment:{category}"), history);
                }
            }
        }
        csv_table(&["model", "epoch", "train_loss", "validation_loss", "validation_f1"], &rows)
    }
}

fn pair_task<'a>(cfg: &RunConfig, setup: &'a Setup) -> PairTask<'a> {
    PairTask {
        categories: &setup.categories,
        method: cfg.method(),
        vocab: &setup.vocab,
        max_seq_len: cfg.max_seq_len(),
    }
}

fn suite_task<'a>(cfg: &RunConfig, setup: &'a Setup) -> SuiteTask<'a> {
    SuiteTask {
        categories: &setup.categories,
        vocab: &setup.vocab,
        max_seq_len: cfg.max_seq_len(),
        threshold: cfg.threshold(),
    }
}

fn fit(
    cfg: &RunConfig,
    setup: &Setup,
    start: Start,
    hp: &absa_core::training::Hyperparams,
    track_validation: bool,
) -> absa_core::Result<Trained> {
    let validation: &[Review] = if track_validation { &setup.validation } else { &[] };
    let strategy = cfg.strategy();
    match (cfg.approach(), start) {
        (Approach::SentencePair, Start::Encoder(config, params)) => {
            let (m, h) = pair_task(cfg, setup).train(&config, params, &setup.train, validation, strategy, hp)?;
            Ok(Trained::Pair(m, h))
        }
        (Approach::SentencePair, Start::Model(model)) => {
            let (m, h) = pair_task(cfg, setup).train_model(model, &setup.train, validation, strategy, hp)?;
            Ok(Trained::Pair(m, h))
        }
        (Approach::SingleSentence, Start::Encoder(config, params)) => {
            let (s, h) = suite_task(cfg, setup).train(&config, &params, &setup.train, validation, strategy, hp)?;
            Ok(Trained::Suite(s, h))
        }
        (Approach::SingleSentence, Start::Suite(suite)) => {
            let (s, h) = suite_task(cfg, setup).fit(suite, &setup.train, validation, strategy, hp)?;
            Ok(Trained::Suite(s, h))
        }
        (approach, _) => Err(absa_core::Error::InvalidArgument(format!(
            "the init checkpoint does not match the {approach} approach"
        ))),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RunSummary {
    approach: Approach,
    strategy: AdaptationStrategy,
    method: absa_core::TransformMethod,
    seed: u64,
    learning_rate: f64,
    batch_size: usize,
    epochs: usize,
    train_reviews: usize,
    validation_reviews: usize,
    micro_f1: f64,
    macro_f1: f64,
}

fn per_category_csv(report: &EvalReport) -> String {
    let rows: Vec<Vec<String>> = report
        .per_category_f1
        .iter()
        .map(|(c, f)| vec![c.clone(), format!("{f:.6}")])
        .collect();
    csv_table(&["category", "f1"], &rows)
}

/// report.json, per_category.csv and misclassified.jsonl under `dir`.
fn write_evaluation(dir: &Path, predictions: &Predictions, reviews: &[Review]) -> Result<EvalReport> {
    let gold = gold_of(reviews);
    let report = f1_scores(predictions, &gold)?;
    write(&dir.join("report.json"), to_json(&report)?)?;
    write(&dir.join("per_category.csv"), per_category_csv(&report))?;
    write(&dir.join("misclassified.jsonl"), jsonl(&error_report(predictions, &gold, reviews))?)?;
    Ok(report)
}

fn checkpoint_name(approach: Approach) -> &'static str {
    match approach {
        Approach::SentencePair => "model.ckpt",
        Approach::SingleSentence => "suite.ckpt",
    }
}

fn train_cmd(cfg: &RunConfig) -> Result<()> {
    let mut problems = Problems::default();
    if let (Some(init), Some(out)) = (&cfg.init, &cfg.out) {
        problems.check(init != &out.join(checkpoint_name(cfg.approach())), || {
            format!("refusing to overwrite the init checkpoint {}", init.display())
        });
    }
    let setup = training_setup(cfg, &mut problems)?;
    let start = starting_point(cfg, &setup.vocab)?;
    let hp = cfg.hyperparams();
    let trained = fit(cfg, &setup, start, &hp, true)?;

    fs::create_dir_all(&setup.out)?;
    let ckpt = setup.out.join(checkpoint_name(cfg.approach()));
    match &trained {
        Trained::Pair(model, _) => checkpoint::save_model(&ckpt, model)?,
        Trained::Suite(suite, _) => {
            for c in &suite.skipped {
                println!("skipped sentiment model for {c}: no training reviews");
            }
            checkpoint::save_suite(&ckpt, suite)?
        }
    }
    write(&setup.out.join("history.csv"), trained.history_csv())?;
    let predictions = trained.predict(cfg, &setup, &setup.validation)?;
    let report = write_evaluation(&setup.out, &predictions, &setup.validation)?;
    let summary = RunSummary {
        approach: cfg.approach(),
        strategy: cfg.strategy(),
        method: cfg.method(),
        seed: cfg.seed(),
        learning_rate: hp.learning_rate,
        batch_size: hp.batch_size,
        epochs: hp.epochs,
        train_reviews: setup.train.len(),
        validation_reviews: setup.validation.len(),
        micro_f1: report.micro_f1,
        macro_f1: report.macro_f1,
    };
    write(&setup.out.join("run.json"), to_json(&summary)?)?;
    println!(
        "{} / {}: validation micro F1 {:.4}, macro F1 {:.4}",
        summary.approach, summary.strategy, report.micro_f1, report.macro_f1
    );
    Ok(())
}

fn grid_cmd(cfg: &RunConfig) -> Result<()> {
    let mut problems = Problems::default();
    let grid = cfg.grid();
    problems.check(!grid.combinations().is_empty(), || "grid needs at least one learning rate and batch size".into());
    for &lr in &grid.learning_rates {
        problems.check(lr > 0.0 && lr.is_finite(), || format!("grid learning rate {lr} must be positive"));
    }
    for &b in &grid.batch_sizes {
        problems.check(b > 0, || "grid batch sizes must be at least 1".to_string());
    }
    let setup = training_setup(cfg, &mut problems)?;
    // validate the starting checkpoint once before any run
    starting_point(cfg, &setup.vocab)?;
    let result = grid_search(&grid, &cfg.hyperparams(), |hp| {
        let start = starting_point(cfg, &setup.vocab).map_err(|e| absa_core::Error::InvalidArgument(e.to_string()))?;
        let trained = fit(cfg, &setup, start, hp, false)?;
        let predictions = trained
            .predict(cfg, &setup, &setup.validation)
            .map_err(|e| absa_core::Error::InvalidArgument(e.to_string()))?;
        Ok(f1_scores(&predictions, &gold_of(&setup.validation))?.micro_f1)
    })?;
    fs::create_dir_all(&setup.out)?;
    write(&setup.out.join("grid.csv"), result.to_csv())?;
    write(&setup.out.join("grid.json"), to_json(&result)?)?;
    print!("{}", result.to_csv());
    let best = result.best();
    println!(
        "best: learning_rate {} batch_size {} (F1 {:.4}); spread {:.4}",
        best.learning_rate,
        best.batch_size,
        best.f1,
        result.spread()
    );
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, model: Option<PathBuf>) -> Result<()> {
    let mut problems = Problems::default();
    let model_path = problems.existing("--model", model.as_ref()).cloned();
    let dataset = problems.existing("dataset", cfg.dataset.as_ref()).cloned();
    let vocab_path = problems.existing("vocabulary", cfg.vocab.as_ref()).cloned();
    problems.optional_existing("categories", cfg.categories.as_ref());
    let out = require_out(&mut problems, cfg);
    problems.finish()?;

    let categories = load_categories(cfg.categories.as_ref())?;
    let vocab = load_vocab(&vocab_path.expect("checked"))?;
    let reviews = load_dataset(&dataset.expect("checked"), &categories)?;
    let model_path = model_path.expect("checked");
    let file = fs::File::open(&model_path)?;
    let kind = checkpoint::read_checkpoint(BufReader::new(file))?.metadata.kind;
    let predictions = match kind {
        ArtifactKind::Model => {
            let model = checkpoint::load_model(&model_path)?;
            let task = PairTask {
                categories: &categories,
                method: cfg.method(),
                vocab: &vocab,
                max_seq_len: cfg.max_seq_len(),
            };
            if model.head.kind != task.head() {
                bail!("model head {:?} does not fit method {}", model.head.kind, cfg.method());
            }
            task.predict(&model, &reviews)?
        }
        ArtifactKind::Suite => {
            let suite = checkpoint::load_suite(&model_path)?;
            if suite.categories != categories.categories() {
                bail!("suite was trained on categories {:?}", suite.categories);
            }
            suite.predict(&reviews, &vocab, cfg.max_seq_len())?
        }
        ArtifactKind::Encoder => bail!("{} holds a bare encoder; give a model or suite", model_path.display()),
    };
    let report = write_evaluation(&out, &predictions, &reviews)?;
    println!("micro F1 {:.4}, macro F1 {:.4}", report.micro_f1, report.macro_f1);
    Ok(())
}

fn compare_cmd(cfg: &RunConfig, runs: &[PathBuf]) -> Result<()> {
    let mut problems = Problems::default();
    for dir in runs {
        problems.check(dir.join("run.json").exists(), || format!("{} has no run.json", dir.display()));
    }
    let out = require_out(&mut problems, cfg);
    problems.finish()?;

    let mut table = BTreeMap::new();
    for dir in runs {
        let text = fs::read_to_string(dir.join("run.json"))?;
        let run: RunSummary = serde_json::from_str(&text).with_context(|| format!("parsing {}/run.json", dir.display()))?;
        if table.insert((run.approach, run.strategy), run.micro_f1).is_some() {
            bail!("two runs share approach {} and strategy {}", run.approach, run.strategy);
        }
    }
    let report = compare_report(&table).map_err(|e| anyhow!(e))?;
    write(&out.join("comparison.json"), to_json(&report)?)?;
    write(&out.join("comparison.txt"), report.to_string())?;
    print!("{report}");
    Ok(())
}

fn report_cmd(cfg: &RunConfig) -> Result<()> {
    let mut problems = Problems::default();
    let out = require_out(&mut problems, cfg);
    let mut experiment = cfg.experiment.clone().unwrap_or_default();
    if let Some(seed) = cfg.seed {
        experiment.seed = seed;
    }
    if let Some(method) = cfg.method {
        experiment.method = method;
    }
    check_hyperparams(&mut problems, &experiment.pair);
    check_hyperparams(&mut problems, &experiment.single);
    check_fraction(&mut problems, experiment.train_fraction);
    problems.check(experiment.reviews >= 2, || "experiment.reviews must be at least 2".to_string());
    if let Err(e) = experiment.category_config() {
        problems.push(format!("experiment.categories: {e}"));
    }
    problems.finish()?;

    let result = run_comparison(&experiment)?;
    fs::create_dir_all(&out)?;
    write(&out.join("comparison.json"), to_json(&result.comparison)?)?;
    write(&out.join("comparison.txt"), result.comparison.to_string())?;
    write(&out.join("cells.json"), to_json(&result.cells)?)?;
    write(&out.join("pretrain_history.csv"), pretrain_history_csv(&result.pretrain_history))?;
    let rows: Vec<Vec<String>> = result
        .cells
        .iter()
        .map(|c| {
            vec![
                c.approach.to_string(),
                c.strategy.to_string(),
                format!("{:.6}", c.report.micro_f1),
                format!("{:.6}", c.report.macro_f1),
            ]
        })
        .collect();
    write(&out.join("results.csv"), csv_table(&["approach", "strategy", "micro_f1", "macro_f1"], &rows))?;
    print!("{}", result.comparison);
    println!("untrained-head baseline F1: {:.4}", result.baseline_f1);
    Ok(())
}
