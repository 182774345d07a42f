//! Margin-ranking training with sampled negatives, and relation-detection
//! accuracy.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::encoders::Vocabulary;
use crate::error::{Error, Result};
use crate::scorers::{QuestionInput, RelationDetector, RelationInput, RelationScorer};
use crate::tensor::{sgd_step, Graph, Var};

/// Negatives drawn per example when the pool is larger than this.
pub const DEFAULT_NEGATIVE_CAP: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingExample {
    pub question: QuestionInput,
    pub gold: RelationInput,
    /// Candidate pool; may or may not contain `gold`.
    pub pool: Vec<RelationInput>,
}

impl TrainingExample {
    /// Pool members other than the gold relation, deduplicated, in pool order.
    pub fn negatives(&self) -> Vec<&RelationInput> {
        let mut seen = BTreeSet::new();
        self.pool
            .iter()
            .filter(|r| **r != self.gold && seen.insert(*r))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    pub margin: f64,
    pub learning_rate: f64,
    pub hidden_size: usize,
    pub epochs: usize,
    /// `None`: every negative when the pool holds at most 20, otherwise 20.
    pub negatives: Option<usize>,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            margin: 0.5,
            learning_rate: 0.5,
            hidden_size: 50,
            epochs: 10,
            negatives: None,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.hidden_size == 0 || self.epochs == 0 || self.negatives == Some(0) {
            return Err(Error::Config(
                "hidden size, epochs and negatives per example must be positive".into(),
            ));
        }
        Ok(())
    }

    fn negative_count(&self, available: usize) -> usize {
        match self.negatives {
            Some(k) => k.min(available),
            None => available.min(DEFAULT_NEGATIVE_CAP),
        }
    }
}

/// `max(0, γ − s⁺ + s⁻)`.
pub fn ranking_loss(s_pos: f64, s_neg: f64, margin: f64) -> f64 {
    (margin - s_pos + s_neg).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept, when a dev set was given.
    pub best_epoch: Option<usize>,
}

impl TrainingReport {
    /// One JSON object per line, one line per epoch.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for rec in &self.epochs {
            let line = serde_json::to_string(rec).map_err(|e| Error::Format(e.to_string()))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Vocabulary over every question and relation token of `data`.
pub fn build_vocab<'a, I: IntoIterator<Item = &'a TrainingExample>>(data: I) -> Vocabulary {
    let mut vocab = Vocabulary::new();
    for ex in data {
        for t in ex.question.tokens() {
            vocab.add(t);
        }
        for r in std::iter::once(&ex.gold).chain(&ex.pool) {
            for t in r.word_tokens.iter().chain(&r.name_tokens) {
                vocab.add(t);
            }
        }
    }
    vocab
}

fn check_examples(model: &RelationDetector, data: &[TrainingExample]) -> Result<()> {
    let view = model.config().view;
    for (i, ex) in data.iter().enumerate() {
        for r in std::iter::once(&ex.gold).chain(&ex.pool) {
            r.validate(view)
                .map_err(|e| Error::Config(format!("example {i}: {e}")))?;
        }
    }
    Ok(())
}

/// Summed hinge losses of one example, as a graph node.
fn example_loss<'p>(
    g: &mut Graph<'p>,
    model: &'p RelationDetector,
    ex: &TrainingExample,
    negatives: &[&RelationInput],
    margin: f64,
) -> Result<Var> {
    let q = model.encode_question(g, &ex.question)?;
    let gold = model.encode_relation(g, &ex.gold)?;
    let s_pos = model.match_score(g, &q, &gold)?;
    let mut hinges = Vec::with_capacity(negatives.len());
    for r in negatives {
        let rr = model.encode_relation(g, r)?;
        let s_neg = model.match_score(g, &q, &rr)?;
        let diff = g.sub(s_neg, s_pos)?;
        let shifted = g.add_scalar(diff, margin);
        hinges.push(g.relu(shifted));
    }
    let row = g.concat_cols(&hinges)?;
    Ok(g.sum(row))
}

fn run_epoch(
    model: &mut RelationDetector,
    data: &[TrainingExample],
    hp: &Hyperparams,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for &i in &order {
        let ex = &data[i];
        let pool = ex.negatives();
        let k = hp.negative_count(pool.len());
        let sampled: Vec<&RelationInput> = pool.choose_multiple(rng, k).copied().collect();
        if sampled.is_empty() {
            continue;
        }
        let grads = {
            let mut g = Graph::new();
            let loss = example_loss(&mut g, model, ex, &sampled, hp.margin)?;
            let value = g.scalar(loss);
            total += value;
            if value <= 0.0 {
                continue;
            }
            g.backward(loss)?
        };
        let params = model.params_mut();
        params.zero_grads();
        params.accumulate(&grads)?;
        sgd_step(params, hp.learning_rate)?;
    }
    Ok(total / data.len() as f64)
}

/// Plain per-example SGD on the summed hinge loss. Deterministic in `hp.seed`.
pub fn train(model: &mut RelationDetector, data: &[TrainingExample], hp: &Hyperparams) -> Result<TrainingReport> {
    train_inner(model, data, None, hp)
}

/// As [`train`], evaluating `dev` after every epoch and restoring the
/// parameters of the epoch with the best dev accuracy (earliest on ties).
pub fn train_with_dev(
    model: &mut RelationDetector,
    data: &[TrainingExample],
    dev: &[TrainingExample],
    hp: &Hyperparams,
) -> Result<TrainingReport> {
    train_inner(model, data, Some(dev), hp)
}

fn train_inner(
    model: &mut RelationDetector,
    data: &[TrainingExample],
    dev: Option<&[TrainingExample]>,
    hp: &Hyperparams,
) -> Result<TrainingReport> {
    hp.validate()?;
    if data.is_empty() {
        return Err(Error::Usage("no training examples".into()));
    }
    check_examples(model, data)?;
    if let Some(dev) = dev {
        check_examples(model, dev)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut report = TrainingReport::default();
    let mut best: Option<(f64, crate::tensor::ParamStore)> = None;
    for epoch in 1..=hp.epochs {
        let mean_loss = run_epoch(model, data, hp, &mut rng)?;
        let train_accuracy = evaluate_accuracy(&*model, data)?;
        let dev_accuracy = dev.map(|d| evaluate_accuracy(&*model, d)).transpose()?;
        if let Some(acc) = dev_accuracy {
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, model.params().clone()));
                report.best_epoch = Some(epoch);
            }
        }
        report.epochs.push(EpochRecord {
            epoch,
            mean_loss,
            train_accuracy,
            dev_accuracy,
        });
    }
    if let Some((_, params)) = best {
        *model.params_mut() = params;
    }
    Ok(report)
}

/// Whether `gold` strictly beats every other candidate.
fn is_correct<S: RelationScorer + ?Sized>(scorer: &S, ex: &TrainingExample) -> Result<bool> {
    let mut candidates = vec![ex.gold.clone()];
    candidates.extend(ex.negatives().into_iter().cloned());
    let scores = scorer.score_all(&ex.question, &candidates)?;
    Ok(scores[1..].iter().all(|s| scores[0] > *s))
}

/// Fraction of examples whose gold relation strictly outscores the rest of
/// its pool; ties count as misses. An empty data set scores 0.
pub fn evaluate_accuracy<S: RelationScorer + ?Sized>(scorer: &S, data: &[TrainingExample]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for ex in data {
        if is_correct(scorer, ex)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// [`evaluate_accuracy`] with examples spread over `workers` threads.
pub fn evaluate_accuracy_parallel<S: RelationScorer + Sync + ?Sized>(
    scorer: &S,
    data: &[TrainingExample],
    workers: usize,
) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let chunk = data.len().div_ceil(workers.max(1));
    let hits = std::thread::scope(|s| {
        let handles: Vec<_> = data
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || -> Result<usize> {
                    let mut n = 0;
                    for ex in part {
                        n += usize::from(is_correct(scorer, ex)?);
                    }
                    Ok(n)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .sum::<Result<usize>>()
    })?;
    Ok(hits as f64 / data.len() as f64)
}
