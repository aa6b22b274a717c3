use absa_core::encoder::pretrain::{build_examples, nsp_sample, MaskingScheme};
use absa_core::gradcheck::{check_classifier_gradients, check_pretrain_gradients, max_relative_error, GroupCheck};
use absa_core::rng;
use absa_core::training::pair::pair_examples;
use absa_core::training::suite::SuiteTask;
use absa_core::training::{HeadKind, Model};
use absa_core::transform::{
    generate_synthetic_reviews, task_vocab, transform_dataset, GeneratorParams, Lexicon,
};
use absa_core::{CategoryConfig, EncoderConfig, EncoderParams, TransformMethod, Vocab};

const TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-5;

fn setup() -> (CategoryConfig, Vocab, EncoderConfig) {
    let categories = CategoryConfig::new(["ac", "wifi", "linen"]).unwrap();
    let vocab = task_vocab(&categories, &Lexicon::default()).unwrap();
    let mut config = EncoderConfig::new(2, 8, 2, vocab.len(), 16);
    config.ffn_size = 32;
    // a wider init makes every group's gradient clearly nonzero
    config.init_std = 0.3;
    (categories, vocab, config)
}

fn assert_close(checks: &[GroupCheck]) {
    for c in checks {
        assert!(
            c.relative_error < TOLERANCE,
            "{}: relative error {:.3e} (analytic {:.3e}, numeric {:.3e})",
            c.name,
            c.relative_error,
            c.analytic_norm,
            c.numeric_norm
        );
    }
}

#[test]
fn pair_classifier_gradients_match_finite_differences() {
    let (categories, vocab, config) = setup();
    let reviews = generate_synthetic_reviews(5, 2, &categories, &Lexicon::default(), GeneratorParams {
        aspect_rate: 0.6,
        ..Default::default()
    })
    .unwrap();
    for method in [TransformMethod::NliB, TransformMethod::QaM] {
        let instances = transform_dataset(&reviews, &categories, method);
        let examples: Vec<_> = pair_examples(&instances, &vocab, 16).unwrap().into_iter().step_by(2).collect();
        let encoder = EncoderParams::init(&config, &mut rng::stream(11, rng::INIT)).unwrap();
        let kind = HeadKind::PairClassifier {
            classes: method.num_classes(),
        };
        let mut model = Model::new(config.clone(), encoder, kind, 11).unwrap();
        model.head.dense.weight.mapv_inplace(|w| w * 20.0);
        let checks = check_classifier_gradients(&model, &examples, STEP).unwrap();
        assert_eq!(checks.len(), model.tensors().len());
        let pooler = checks.iter().find(|c| c.name == "pooler.weight").unwrap();
        assert!(pooler.analytic_norm > 1e-6);
        assert_close(&checks);
        assert!(max_relative_error(&checks) < TOLERANCE);
    }
}

#[test]
fn single_sentence_head_gradients_match_finite_differences() {
    let (categories, vocab, mut config) = setup();
    config.use_pooler = false;
    let reviews = generate_synthetic_reviews(9, 3, &categories, &Lexicon::default(), GeneratorParams {
        aspect_rate: 0.7,
        ..Default::default()
    })
    .unwrap();
    let task = SuiteTask {
        categories: &categories,
        vocab: &vocab,
        max_seq_len: 16,
        threshold: 0.5,
    };
    let encoder = EncoderParams::init(&config, &mut rng::stream(4, rng::INIT)).unwrap();
    let aspect = Model::new(
        config.clone(),
        encoder.clone(),
        HeadKind::MultilabelAspect {
            categories: categories.len(),
        },
        4,
    )
    .unwrap();
    assert_close(&check_classifier_gradients(&aspect, &task.aspect_examples(&reviews).unwrap(), STEP).unwrap());

    let groups = task.sentiment_examples(&reviews).unwrap();
    let (_, examples) = groups.iter().find(|(_, e)| !e.is_empty()).unwrap();
    let sentiment = Model::new(config, encoder, HeadKind::PerCategorySentiment, 4).unwrap();
    assert_close(&check_classifier_gradients(&sentiment, examples, STEP).unwrap());
}

#[test]
fn pretraining_gradients_match_finite_differences() {
    let (_, vocab, config) = setup();
    let docs: Vec<Vec<String>> = vec![
        vec!["kamar bersih".into(), "ac dingin".into(), "wifi cepat".into()],
        vec!["sprei kotor".into(), "tv rusak".into()],
    ];
    let pairs = nsp_sample(&docs, 3, 2).unwrap();
    let examples = build_examples(&pairs, &vocab, 16, 0.3, MaskingScheme::AllMask, &mut rng::stream(2, rng::MASK)).unwrap();
    assert!(examples.iter().any(|e| !e.masked.target_positions.is_empty()));
    let params = EncoderParams::init(&config, &mut rng::stream(8, rng::INIT)).unwrap();
    let checks = check_pretrain_gradients(&params, &config, &examples, STEP).unwrap();
    let mlm = checks.iter().find(|c| c.name == "mlm.bias").unwrap();
    assert!(mlm.analytic_norm > 1e-3);
    assert_close(&checks);
}

#[test]
fn gradient_check_rejects_dropout() {
    let (_, vocab, mut config) = setup();
    config.dropout_rate = 0.1;
    let params = EncoderParams::zeros(&config);
    let model = Model::new(config, params, HeadKind::PairClassifier { classes: 2 }, 0).unwrap();
    let _ = vocab;
    assert!(check_classifier_gradients(&model, &[], STEP).is_err());
}
