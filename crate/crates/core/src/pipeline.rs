//! Two-step KBQA: link, re-rank entities with relation scores on the raw
//! question, detect core chains with the topic mention replaced by `<e>`,
//! pick the best (entity, chain) pair, attach constraints, execute.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;

use crate::encoders::ENTITY_TOKEN;
use crate::error::{Error, Result};
use crate::kb::{Constraint, EntityId, KnowledgeBase, RelationChain, RelationId};
use crate::linker::{constraint_linker_score_excluding, enumerate_mentions, link_top_k, LinkerScore, Mention};
use crate::scorers::{QuestionInput, RelationInput, RelationScorer};
use crate::text::normalize;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Initial linked entities.
    pub k: usize,
    /// Entities kept after re-ranking.
    pub k_prime: usize,
    /// Top relations consulted when re-ranking.
    pub l: usize,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 50,
            k_prime: 10,
            l: 5,
            alpha: 0.6,
            beta: 0.5,
            theta: 0.6,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.k_prime == 0 || self.k_prime >= self.k {
            return Err(Error::Config(format!(
                "need 0 < k_prime < k, got k={} k_prime={}",
                self.k, self.k_prime
            )));
        }
        if self.l == 0 {
            return Err(Error::Config("l must be at least 1".into()));
        }
        if !unit(self.alpha) || !unit(self.beta) {
            return Err(Error::Config(format!(
                "alpha and beta must lie in [0, 1], got {} and {}",
                self.alpha, self.beta
            )));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Config(format!("theta must be positive, got {}", self.theta)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RerankedEntity {
    pub entity: EntityId,
    pub mention: Mention,
    pub linker_score: f64,
    /// Best score among the entity's relations in the top-`l` set, or 0.
    pub relation_score: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredChain {
    pub chain: RelationChain,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryCandidate {
    pub entity: EntityId,
    pub chain: RelationChain,
    pub constraints: Vec<Constraint>,
    pub rerank_score: f64,
    pub relation_score: f64,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Linking,
    Reranking,
    RelationDetection,
    QueryGeneration,
    ConstraintDetection,
    Execution,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Linking => "linking",
            Stage::Reranking => "reranking",
            Stage::RelationDetection => "relation_detection",
            Stage::QueryGeneration => "query_generation",
            Stage::ConstraintDetection => "constraint_detection",
            Stage::Execution => "execution",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A question the pipeline could not answer, with the stage that gave up.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("unanswerable at {stage}: {reason}")]
pub struct Unanswerable {
    pub stage: Stage,
    pub reason: String,
}

impl Unanswerable {
    fn at(stage: Stage) -> impl FnOnce(Error) -> Unanswerable {
        move |e| Unanswerable {
            stage,
            reason: e.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Answer {
    pub query: QueryCandidate,
    pub answers: BTreeSet<EntityId>,
    pub linked: Vec<LinkerScore>,
    pub reranked: Vec<RerankedEntity>,
}

fn relation_input(kb: &KnowledgeBase, chain: &RelationChain) -> Result<RelationInput> {
    RelationInput::from_names(&kb.chain_names(chain))
}

/// Re-ranks linked entities by `α·s_linker + (1−α)·max_{r ∈ R^l_q ∩ R_e} s_rel(r; q)`,
/// scoring single relations against the raw question. Keeps the top `k_prime`.
pub fn rerank_entities<S: RelationScorer + ?Sized>(
    cfg: &PipelineConfig,
    kb: &KnowledgeBase,
    scorer: &S,
    q: &str,
    initial: &[LinkerScore],
) -> Result<Vec<RerankedEntity>> {
    if initial.is_empty() {
        return Err(Error::Usage("nothing to re-rank".into()));
    }
    let mut per_entity = Vec::with_capacity(initial.len());
    let mut all = BTreeSet::new();
    for ls in initial {
        let rels = kb.relations_of_entity(ls.entity)?;
        all.extend(rels.iter().copied());
        per_entity.push(rels);
    }
    let all: Vec<RelationId> = all.into_iter().collect();
    let inputs = all
        .iter()
        .map(|r| RelationInput::from_names(&[kb.relation(*r).name.as_str()]))
        .collect::<Result<Vec<_>>>()?;
    let question = QuestionInput::from_text(q)?;
    let scores = scorer.score_all(&question, &inputs)?;
    let mut ranked: Vec<(RelationId, f64)> = all.into_iter().zip(scores).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(cfg.l);
    let top: BTreeMap<RelationId, f64> = ranked.into_iter().collect();

    let mut out: Vec<RerankedEntity> = initial
        .iter()
        .zip(&per_entity)
        .map(|(ls, rels)| {
            let best = rels
                .iter()
                .filter_map(|r| top.get(r).copied())
                .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
                .unwrap_or(0.0);
            RerankedEntity {
                entity: ls.entity,
                mention: ls.mention.clone(),
                linker_score: ls.score,
                relation_score: best,
                score: cfg.alpha * ls.score + (1.0 - cfg.alpha) * best,
            }
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.entity.cmp(&b.entity)));
    out.truncate(cfg.k_prime);
    Ok(out)
}

/// The normalized question with the mention's characters replaced by `<e>`.
pub fn replace_mention(q: &str, mention: &Mention) -> Result<String> {
    let norm = normalize(q);
    let chars: Vec<char> = norm.chars().collect();
    let fits = mention.end() <= chars.len()
        && chars[mention.start..mention.end()].iter().collect::<String>() == mention.text;
    let aligned = fits
        && (mention.start == 0 || chars[mention.start - 1] == ' ')
        && (mention.end() == chars.len() || chars[mention.end()] == ' ');
    if !aligned {
        return Err(Error::Reformat(format!(
            "mention {:?} at {} not found in {:?}",
            mention.text, mention.start, norm
        )));
    }
    let mut out: String = chars[..mention.start].iter().collect();
    out.push_str(ENTITY_TOKEN);
    out.extend(&chars[mention.end()..]);
    Ok(out)
}

/// Scores every core chain of `e` against the question with `mention`
/// replaced by `<e>`.
pub fn detect_relations<S: RelationScorer + ?Sized>(
    kb: &KnowledgeBase,
    scorer: &S,
    q: &str,
    e: EntityId,
    mention: &Mention,
) -> Result<Vec<ScoredChain>> {
    let question = QuestionInput::from_text(&replace_mention(q, mention)?)?;
    let chains = kb.core_chain_candidates(e)?;
    let inputs = chains
        .iter()
        .map(|c| relation_input(kb, c))
        .collect::<Result<Vec<_>>>()?;
    let scores = scorer.score_all(&question, &inputs)?;
    Ok(chains
        .into_iter()
        .zip(scores)
        .map(|(chain, score)| ScoredChain { chain, score })
        .collect())
}

/// Arg-max of `β·s_rerank(e) + (1−β)·s_rel(r; e, q)` over all entity/chain
/// pairs; ties go to the smaller entity id, then the earlier chain.
pub fn generate_query(
    cfg: &PipelineConfig,
    candidates: &[(RerankedEntity, Vec<ScoredChain>)],
) -> Option<QueryCandidate> {
    let mut order: Vec<&(RerankedEntity, Vec<ScoredChain>)> = candidates.iter().collect();
    order.sort_by_key(|(e, _)| e.entity);
    let mut best: Option<QueryCandidate> = None;
    for (e, chains) in order {
        let mut chains: Vec<&ScoredChain> = chains.iter().collect();
        chains.sort_by(|a, b| a.chain.cmp(&b.chain));
        for c in chains {
            let score = cfg.beta * e.score + (1.0 - cfg.beta) * c.score;
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(QueryCandidate {
                    entity: e.entity,
                    chain: c.chain.clone(),
                    constraints: Vec::new(),
                    rerank_score: e.score,
                    relation_score: c.score,
                    score,
                });
            }
        }
    }
    best
}

/// Year of a `YYYY` or `YYYY-MM-DD` name.
pub fn date_year(name: &str) -> Option<i32> {
    let name = name.trim();
    if name.len() == 4 && name.bytes().all(|b| b.is_ascii_digit()) {
        return name.parse().ok();
    }
    use chrono::Datelike;
    NaiveDate::parse_from_str(name, "%Y-%m-%d")
        .ok()
        .filter(|_| name.len() == 10)
        .map(|d| d.year())
}

/// Four-digit tokens of the normalized question outside the given span.
fn question_years(norm: &str, exclude: &Mention) -> BTreeSet<i32> {
    enumerate_mentions(norm)
        .into_iter()
        .filter(|m| !m.text.contains(' ') && !m.overlaps(exclude.start, exclude.len))
        .filter(|m| m.text.len() == 4 && m.text.bytes().all(|b| b.is_ascii_digit()))
        .filter_map(|m| m.text.parse().ok())
        .collect()
}

/// Attaches constraints to the answer nodes and CVT intermediate nodes of
/// `candidate`. Date-named neighbors attach iff the question holds their
/// year; others attach when their constraint-linker score exceeds θ.
/// Answer nodes only accept neighbors over relations named with "type".
pub fn detect_constraints(
    cfg: &PipelineConfig,
    kb: &KnowledgeBase,
    q: &str,
    topic_mention: &Mention,
    candidate: &QueryCandidate,
) -> Result<QueryCandidate> {
    let walks = kb.walk(candidate.entity, &candidate.chain)?;
    let len = candidate.chain.len();
    let mut query_nodes: BTreeSet<EntityId> = BTreeSet::new();
    let mut attach: BTreeSet<(usize, EntityId)> = BTreeSet::new();
    for w in &walks {
        query_nodes.extend(w.iter().copied());
        for (pos, &v) in w.iter().enumerate().skip(1) {
            if pos == len || kb.entity(v).cvt {
                attach.insert((pos, v));
            }
        }
    }
    let query_nodes: Vec<EntityId> = query_nodes.into_iter().collect();
    let norm = normalize(q);
    let years = question_years(&norm, topic_mention);
    let exclude = Some((topic_mention.start, topic_mention.len));
    let mut found = BTreeSet::new();
    let mut scored: BTreeMap<EntityId, bool> = BTreeMap::new();
    let neighbors = kb.subgraph_neighbors(&query_nodes);
    for (pos, v) in attach {
        for n in neighbors.iter().filter(|n| n.node == v) {
            if pos == len && !kb.relation(n.relation).name.contains("type") {
                continue;
            }
            let pass = match scored.get(&n.neighbor) {
                Some(p) => *p,
                None => {
                    let name = &kb.entity(n.neighbor).name;
                    let p = match date_year(name) {
                        Some(year) => years.contains(&year),
                        None if normalize(name).is_empty() => false,
                        None => constraint_linker_score_excluding(&norm, name, exclude)?.0 > cfg.theta,
                    };
                    scored.insert(n.neighbor, p);
                    p
                }
            };
            if pass {
                found.insert(Constraint {
                    node: pos,
                    entity: n.neighbor,
                    relation: n.relation,
                });
            }
        }
    }
    let mut out = candidate.clone();
    out.constraints = found.into_iter().collect();
    Ok(out)
}

/// A knowledge base, a frozen relation scorer and the pipeline knobs.
pub struct Pipeline<'a, S: ?Sized> {
    pub kb: &'a KnowledgeBase,
    pub scorer: &'a S,
    pub config: PipelineConfig,
}

impl<'a, S: RelationScorer + ?Sized> Pipeline<'a, S> {
    pub fn new(kb: &'a KnowledgeBase, scorer: &'a S, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline { kb, scorer, config })
    }

    /// Links with [`link_top_k`] and answers.
    pub fn answer_question(&self, q: &str) -> std::result::Result<Answer, Unanswerable> {
        let linked = link_top_k(q, self.kb, self.config.k).map_err(Unanswerable::at(Stage::Linking))?;
        self.answer_with_links(q, linked)
    }

    /// Answers from a given initial entity list.
    pub fn answer_with_links(
        &self,
        q: &str,
        linked: Vec<LinkerScore>,
    ) -> std::result::Result<Answer, Unanswerable> {
        if linked.is_empty() {
            return Err(Unanswerable {
                stage: Stage::Linking,
                reason: "no entity matches the question".into(),
            });
        }
        let reranked = rerank_entities(&self.config, self.kb, self.scorer, q, &linked)
            .map_err(Unanswerable::at(Stage::Reranking))?;
        let mut detected = Vec::with_capacity(reranked.len());
        for e in &reranked {
            let chains = detect_relations(self.kb, self.scorer, q, e.entity, &e.mention)
                .map_err(Unanswerable::at(Stage::RelationDetection))?;
            if !chains.is_empty() {
                detected.push((e.clone(), chains));
            }
        }
        let top = generate_query(&self.config, &detected).ok_or_else(|| Unanswerable {
            stage: Stage::QueryGeneration,
            reason: "no re-ranked entity has a candidate chain".into(),
        })?;
        let mention = &reranked
            .iter()
            .find(|e| e.entity == top.entity)
            .expect("query entity comes from the re-ranked list")
            .mention;
        let query = detect_constraints(&self.config, self.kb, q, mention, &top)
            .map_err(Unanswerable::at(Stage::ConstraintDetection))?;
        let answers = self
            .kb
            .execute_query(query.entity, &query.chain, &query.constraints)
            .map_err(Unanswerable::at(Stage::Execution))?;
        Ok(Answer {
            query,
            answers,
            linked,
            reranked,
        })
    }
}
