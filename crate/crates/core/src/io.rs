//! File formats: flat `key = value` run configs, gold parses, relation
//! detection task files and per-question answer records.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kb::{Constraint, KnowledgeBase};
use crate::linker::simple_linker_score;
use crate::pipeline::{replace_mention, Answer, PipelineConfig, Unanswerable};
use crate::scorers::{ModelKind, QuestionInput, RelationInput, ScorerConfig};
use crate::trainer::{Hyperparams, TrainingExample};
use crate::text::normalize;

/// Every tunable of a run: scorer shape, training and pipeline knobs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scorer: ScorerConfig,
    pub train: Hyperparams,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_pairs(&BTreeMap::new()).expect("defaults are valid")
    }
}

/// Keys accepted by [`RunConfig`].
pub const CONFIG_KEYS: &[&str] = &[
    "model",
    "variant",
    "view",
    "hidden_size",
    "embed_dim",
    "window",
    "buckets",
    "hash_seed",
    "margin",
    "learning_rate",
    "epochs",
    "negatives",
    "seed",
    "k",
    "k_prime",
    "l",
    "alpha",
    "beta",
    "theta",
];

fn value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
}

/// Reads `key = value` lines; `#` starts a comment line.
pub fn parse_config_pairs<R: BufRead>(reader: R) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(i + 1, format!("expected key = value, got {line:?}")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Parses a `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl RunConfig {
    /// Builds from key/value pairs. `model` picks the default view and
    /// variant; explicit `view`/`variant` keys override them.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = pairs.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown config key {k:?}")));
        }
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let model: ModelKind = get("model").map(str::parse).transpose()?.unwrap_or(ModelKind::HrBilstm);
        let mut scorer = ScorerConfig::for_model(model);
        let mut train = Hyperparams::default();
        let mut pipeline = PipelineConfig::default();
        for (k, v) in pairs {
            match k.as_str() {
                "model" => {}
                "variant" => scorer.variant = v.parse()?,
                "view" => scorer.view = v.parse()?,
                "hidden_size" => {
                    scorer.hidden = value(k, v)?;
                    train.hidden_size = scorer.hidden;
                }
                "embed_dim" => scorer.embed_dim = value(k, v)?,
                "window" => scorer.window = value(k, v)?,
                "buckets" => scorer.buckets = value(k, v)?,
                "hash_seed" => scorer.hash_seed = value(k, v)?,
                "margin" => train.margin = value(k, v)?,
                "learning_rate" => train.learning_rate = value(k, v)?,
                "epochs" => train.epochs = value(k, v)?,
                "negatives" => {
                    train.negatives = if v == "auto" { None } else { Some(value(k, v)?) }
                }
                "seed" => train.seed = value(k, v)?,
                "k" => pipeline.k = value(k, v)?,
                "k_prime" => pipeline.k_prime = value(k, v)?,
                "l" => pipeline.l = value(k, v)?,
                "alpha" => pipeline.alpha = value(k, v)?,
                "beta" => pipeline.beta = value(k, v)?,
                "theta" => pipeline.theta = value(k, v)?,
                _ => unreachable!("keys checked above"),
            }
        }
        scorer.validate()?;
        train.validate()?;
        pipeline.validate()?;
        Ok(RunConfig {
            scorer,
            train,
            pipeline,
        })
    }

    /// Config file contents with `overrides` applied on top.
    pub fn load<R: BufRead>(file: Option<R>, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = file.map(parse_config_pairs).transpose()?.unwrap_or_default();
        for (k, v) in overrides {
            pairs.insert(k.clone(), v.clone());
        }
        RunConfig::from_pairs(&pairs)
    }
}

/// Gold semantic parse of one question, by KB keys.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldParse {
    pub qid: String,
    pub question: String,
    pub topic: String,
    pub chain: Vec<String>,
    /// `(node position, entity key, relation name)`.
    pub constraints: Vec<(usize, String, String)>,
    pub answers: Vec<String>,
}

fn split_list(field: &str, sep: char) -> Vec<String> {
    let f = field.trim();
    if f.is_empty() || f == "-" {
        return Vec::new();
    }
    f.split(sep).map(|s| s.trim().to_string()).collect()
}

fn tab_fields(line: &str, n: usize, lineno: usize) -> Result<Vec<&str>> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != n {
        return Err(Error::parse(lineno, format!("expected {n} tab-separated fields, got {}", f.len())));
    }
    Ok(f)
}

/// Reads `qid<TAB>question<TAB>topic<TAB>r1|r2<TAB>constraints<TAB>answers`,
/// where constraints are `node,entity,relation` items joined by `|` and
/// answers are entity keys joined by `|`. `-` marks an empty list.
pub fn read_gold_parses<R: BufRead>(reader: R) -> Result<Vec<GoldParse>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f = tab_fields(line, 6, n)?;
        if f[..4].iter().any(|x| x.trim().is_empty()) {
            return Err(Error::parse(n, "empty qid, question, topic or chain"));
        }
        let chain = split_list(f[3], '|');
        if chain.is_empty() || chain.len() > 2 || chain.iter().any(String::is_empty) {
            return Err(Error::parse(n, format!("chain must hold 1 or 2 relations, got {:?}", f[3])));
        }
        let constraints = split_list(f[4], '|')
            .into_iter()
            .map(|c| {
                let parts: Vec<&str> = c.split(',').map(str::trim).collect();
                match parts.as_slice() {
                    [pos, e, r] if !e.is_empty() && !r.is_empty() => match pos.parse::<usize>() {
                        Ok(p) if p >= 1 && p <= chain.len() => Ok((p, e.to_string(), r.to_string())),
                        _ => Err(Error::parse(n, format!("bad constraint node in {c:?}"))),
                    },
                    _ => Err(Error::parse(n, format!("constraint {c:?} is not node,entity,relation"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(GoldParse {
            qid: f[0].trim().to_string(),
            question: f[1].trim().to_string(),
            topic: f[2].trim().to_string(),
            chain,
            constraints,
            answers: split_list(f[5], '|'),
        });
    }
    Ok(out)
}

/// One relation detection example by relation names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetRecord {
    pub qid: String,
    /// Normalized question, topic mention replaced by `<e>` when found.
    pub question: String,
    pub gold: Vec<String>,
    pub pool: Vec<Vec<String>>,
}

impl DatasetRecord {
    pub fn to_example(&self) -> Result<TrainingExample> {
        Ok(TrainingExample {
            question: QuestionInput::from_text(&self.question)?,
            gold: RelationInput::from_names(&self.gold)?,
            pool: self
                .pool
                .iter()
                .map(|c| RelationInput::from_names(c))
                .collect::<Result<_>>()?,
        })
    }
}

/// Reads `qid<TAB>question<TAB>r1|r2<TAB>pool`, the pool being chains
/// joined by `;`, each chain `r1|r2`. `-` marks an empty pool.
pub fn read_task<R: BufRead>(reader: R) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f = tab_fields(line, 4, n)?;
        let chain_of = |s: &str| -> Result<Vec<String>> {
            let c = split_list(s, '|');
            if c.is_empty() || c.len() > 2 || c.iter().any(String::is_empty) {
                return Err(Error::parse(n, format!("bad chain {s:?}")));
            }
            Ok(c)
        };
        if f[0].trim().is_empty() || normalize(f[1]).is_empty() {
            return Err(Error::parse(n, "empty qid or question"));
        }
        out.push(DatasetRecord {
            qid: f[0].trim().to_string(),
            question: f[1].trim().to_string(),
            gold: chain_of(f[2])?,
            pool: split_list(f[3], ';')
                .iter()
                .map(|c| chain_of(c))
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

pub fn write_task<W: Write>(mut w: W, records: &[DatasetRecord]) -> Result<()> {
    for r in records {
        let pool = if r.pool.is_empty() {
            "-".to_string()
        } else {
            r.pool.iter().map(|c| c.join("|")).collect::<Vec<_>>().join(";")
        };
        writeln!(w, "{}\t{}\t{}\t{}", r.qid, r.question, r.gold.join("|"), pool)?;
    }
    Ok(())
}

/// Relation detection records from gold parses: the pool holds every core
/// chain of the topic entity other than the gold one. Parses whose topic
/// entity is missing from `kb` are skipped and counted.
pub fn build_relation_detection_task(kb: &KnowledgeBase, parses: &[GoldParse]) -> Result<(Vec<DatasetRecord>, usize)> {
    let mut out = Vec::with_capacity(parses.len());
    let mut skipped = 0;
    for p in parses {
        let Some(topic) = kb.entity_id(&p.topic) else {
            skipped += 1;
            continue;
        };
        let name = &kb.entity(topic).name;
        let question = match simple_linker_score(&p.question, name) {
            Ok((_, Some(m))) => replace_mention(&p.question, &m)?,
            _ => normalize(&p.question),
        };
        let pool = kb
            .core_chain_candidates(topic)?
            .iter()
            .map(|c| kb.chain_names(c).into_iter().map(str::to_string).collect::<Vec<_>>())
            .filter(|c| *c != p.chain)
            .collect();
        out.push(DatasetRecord {
            qid: p.qid.clone(),
            question,
            gold: p.chain.clone(),
            pool,
        });
    }
    Ok((out, skipped))
}

impl GoldParse {
    /// Resolved constraints against `kb`.
    pub fn resolve_constraints(&self, kb: &KnowledgeBase) -> Result<Vec<Constraint>> {
        self.constraints
            .iter()
            .map(|(node, e, r)| {
                Ok(Constraint {
                    node: *node,
                    entity: kb.resolve_entity(e)?,
                    relation: kb.resolve_relation(r)?,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintRecord {
    pub node: usize,
    pub entity: String,
    pub relation: String,
}

/// Per-question output of the answering pipeline.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnswerRecord {
    pub qid: String,
    pub question: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<String>,
    pub constraints: Vec<ConstraintRecord>,
    pub answers: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linker_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rerank_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relation_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unanswerable: Option<String>,
}

impl AnswerRecord {
    pub fn new(kb: &KnowledgeBase, qid: &str, question: &str, result: &std::result::Result<Answer, Unanswerable>) -> Self {
        let mut rec = AnswerRecord {
            qid: qid.to_string(),
            question: question.to_string(),
            entity: None,
            chain: None,
            constraints: Vec::new(),
            answers: Vec::new(),
            linker_score: None,
            rerank_score: None,
            relation_score: None,
            query_score: None,
            unanswerable: None,
        };
        match result {
            Err(u) => rec.unanswerable = Some(u.to_string()),
            Ok(a) => {
                let q = &a.query;
                rec.entity = Some(kb.entity(q.entity).key.clone());
                rec.chain = Some(kb.chain_label(&q.chain));
                rec.constraints = q
                    .constraints
                    .iter()
                    .map(|c| ConstraintRecord {
                        node: c.node,
                        entity: kb.entity(c.entity).key.clone(),
                        relation: kb.relation(c.relation).name.clone(),
                    })
                    .collect();
                rec.answers = a.answers.iter().map(|e| kb.entity(*e).name.clone()).collect();
                rec.linker_score = a.reranked.iter().find(|r| r.entity == q.entity).map(|r| r.linker_score);
                rec.rerank_score = Some(q.rerank_score);
                rec.relation_score = Some(q.relation_score);
                rec.query_score = Some(q.score);
            }
        }
        rec
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }
}
