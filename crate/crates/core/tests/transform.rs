use absa_core::eval::{f1_scores, gold_of};
use absa_core::training::pair::collect_pair_scores;
use absa_core::transform::{
    aggregate_predictions, clause_sentences, generate_synthetic_reviews, split_dataset, task_vocab, transform_dataset,
    GeneratorParams, Lexicon, PairLabel,
};
use absa_core::{tokenize, CategoryConfig, TransformMethod};

const METHODS: [TransformMethod; 4] = [
    TransformMethod::NliB,
    TransformMethod::NliM,
    TransformMethod::QaB,
    TransformMethod::QaM,
];

/// One-hot (or 0/1) scores that agree with each instance's label.
fn ideal_scores(labels: impl Iterator<Item = PairLabel>) -> Vec<Vec<f64>> {
    labels
        .map(|label| match label {
            PairLabel::Binary(b) => vec![1.0 - f64::from(b), f64::from(b)],
            PairLabel::Class(c) => {
                let mut v = vec![0.0; 3];
                v[c.index()] = 1.0;
                v
            }
        })
        .collect()
}

#[test]
fn ideal_scores_recover_gold_for_every_method() {
    let config = CategoryConfig::default();
    let params = GeneratorParams {
        aspect_rate: 0.35,
        ..Default::default()
    };
    let reviews = generate_synthetic_reviews(11, 150, &config, &Lexicon::default(), params).unwrap();
    for method in METHODS {
        let instances = transform_dataset(&reviews, &config, method);
        let scores = ideal_scores(instances.iter().map(|i| i.label));
        let grouped = collect_pair_scores(&instances, &scores, method);
        for review in &reviews {
            let labels = aggregate_predictions(&grouped[&review.id], &config, method).unwrap();
            assert_eq!(labels, review.gold_set(), "{method} on {}", review.id);
        }
    }
}

#[test]
fn expansion_counts() {
    let config = CategoryConfig::default();
    let reviews = generate_synthetic_reviews(3, 57, &config, &Lexicon::default(), GeneratorParams::default()).unwrap();
    let k = config.len();
    for method in METHODS {
        let per_category = if method.is_binary() { 3 } else { 1 };
        assert_eq!(transform_dataset(&reviews, &config, method).len(), 57 * k * per_category);
    }
}

#[test]
fn binary_methods_have_one_positive_per_category() {
    let config = CategoryConfig::default();
    let reviews = generate_synthetic_reviews(5, 40, &config, &Lexicon::default(), GeneratorParams::default()).unwrap();
    let instances = transform_dataset(&reviews, &config, TransformMethod::QaB);
    for chunk in instances.chunks(3) {
        let ones = chunk.iter().filter(|i| i.label == PairLabel::Binary(1)).count();
        assert_eq!(ones, 1);
        assert!(chunk.iter().all(|i| i.category == chunk[0].category && i.review_id == chunk[0].review_id));
    }
}

#[test]
fn generated_text_is_in_vocabulary() {
    let config = CategoryConfig::default();
    let lexicon = Lexicon::default();
    let vocab = task_vocab(&config, &lexicon).unwrap();
    let reviews = generate_synthetic_reviews(9, 200, &config, &lexicon, GeneratorParams::default()).unwrap();
    for method in METHODS {
        for inst in transform_dataset(&reviews[..20], &config, method) {
            for text in [&inst.text_a, &inst.text_b] {
                assert!(tokenize(text, &vocab).iter().all(|t| t.id != vocab.special().unk), "{text}");
            }
        }
    }
}

#[test]
fn clauses_partition_the_review() {
    let config = CategoryConfig::default();
    let lexicon = Lexicon::default();
    let reviews = generate_synthetic_reviews(2, 100, &config, &lexicon, GeneratorParams::default()).unwrap();
    for review in &reviews {
        let clauses = clause_sentences(&review.text, &lexicon);
        let clause_words: Vec<&str> = clauses.iter().flat_map(|c| c.split_whitespace()).collect();
        let connectors: Vec<&str> = lexicon.connectors.iter().map(|c| c.trim()).collect();
        let text_words: Vec<&str> = review.text.split_whitespace().filter(|w| !connectors.contains(w)).collect();
        assert_eq!(clause_words, text_words);
        // the filler prefix shares a clause with the first aspect
        assert!(clauses.len() >= review.gold.len().min(1));
    }
}

#[test]
fn split_is_a_partition() {
    let items: Vec<usize> = (0..97).collect();
    let (train, validation) = split_dataset(&items, 0.8, 4).unwrap();
    assert_eq!(train.len(), 78);
    let mut all: Vec<usize> = train.iter().chain(&validation).copied().collect();
    all.sort_unstable();
    assert_eq!(all, items);
    assert_eq!(split_dataset(&items, 0.8, 4).unwrap().0, train);
}

#[test]
fn gold_predictions_score_perfectly() {
    let config = CategoryConfig::default();
    let reviews = generate_synthetic_reviews(8, 60, &config, &Lexicon::default(), GeneratorParams::default()).unwrap();
    let gold = gold_of(&reviews);
    let report = f1_scores(&gold, &gold).unwrap();
    assert_eq!(report.micro_f1, 1.0);
    assert!(report.misclassified.is_empty());
}
