#![allow(dead_code)]

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use kbqa::io::{build_relation_detection_task, read_gold_parses, GoldParse};
use kbqa::kb::KnowledgeBase;
use kbqa::scorers::{ModelKind, QuestionInput, RelationDetector, RelationInput, RelationScorer, ScorerConfig};
use kbqa::trainer::{build_vocab, train, Hyperparams, TrainingExample};
use kbqa::Result;

pub mod gradcheck;
pub mod oracles;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn toy_kb() -> KnowledgeBase {
    let triples = BufReader::new(File::open(fixture("toy_triples.tsv")).unwrap());
    let catalog = BufReader::new(File::open(fixture("toy_entities.tsv")).unwrap());
    KnowledgeBase::load(triples, Some(catalog)).unwrap()
}

pub fn toy_parses() -> Vec<GoldParse> {
    read_gold_parses(BufReader::new(File::open(fixture("toy_parses.tsv")).unwrap())).unwrap()
}

pub fn toy_examples(kb: &KnowledgeBase) -> Vec<TrainingExample> {
    let (records, skipped) = build_relation_detection_task(kb, &toy_parses()).unwrap();
    assert_eq!(skipped, 0);
    records.iter().map(|r| r.to_example().unwrap()).collect()
}

/// HR-BiLSTM fitted to the relation detection task built from the toy parses.
pub fn trained_toy_detector(kb: &KnowledgeBase) -> RelationDetector {
    let data = toy_examples(kb);
    let mut cfg = ScorerConfig::for_model(ModelKind::HrBilstm);
    cfg.hidden = 16;
    cfg.embed_dim = 16;
    let mut model = RelationDetector::new(cfg, build_vocab(&data), 7).unwrap();
    let hp = Hyperparams {
        learning_rate: 0.5,
        hidden_size: 16,
        epochs: 80,
        seed: 7,
        ..Hyperparams::default()
    };
    train(&mut model, &data, &hp).unwrap();
    model
}

/// Scores relations by a hand-set table on whole relation names; chains
/// take the mean of their parts. Unlisted relations score 0.
pub struct KeywordScorer(pub Vec<(&'static str, f64)>);

impl RelationScorer for KeywordScorer {
    fn score(&self, _q: &QuestionInput, r: &RelationInput) -> Result<f64> {
        let s: f64 = r
            .name_tokens
            .iter()
            .map(|n| self.0.iter().find(|(k, _)| k == n).map_or(0.0, |(_, s)| *s))
            .sum();
        Ok(s / r.name_tokens.len() as f64)
    }
}
