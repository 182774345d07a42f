//! Character-overlap entity linking over word-aligned question n-grams.
//!
//! All lengths and positions are counted in characters of the normalized
//! text (see [`crate::text::normalize`]).

use std::collections::BTreeMap;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase};
use crate::text::normalize;

/// Longest mention considered, in words.
pub const MAX_MENTION_WORDS: usize = 6;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mention {
    pub text: String,
    /// Character offset into the normalized question.
    pub start: usize,
    /// Length in characters.
    pub len: usize,
}

impl Mention {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn overlaps(&self, start: usize, len: usize) -> bool {
        self.start < start + len && start < self.end()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkerScore {
    pub entity: EntityId,
    pub mention: Mention,
    pub score: f64,
}

/// Length in characters of the longest common substring.
pub fn lccs_len(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &ca in &a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Every word-aligned n-gram of up to six words of an already normalized
/// question, ordered by start then length.
pub fn enumerate_mentions(normalized: &str) -> Vec<Mention> {
    let mut words = Vec::new();
    let mut start = None;
    for (i, c) in normalized.chars().chain(std::iter::once(' ')).enumerate() {
        if c == ' ' {
            if let Some(s) = start.take() {
                words.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    let chars: Vec<char> = normalized.chars().collect();
    let mut out = Vec::new();
    for i in 0..words.len() {
        for j in i..words.len().min(i + MAX_MENTION_WORDS) {
            let (s, e) = (words[i].0, words[j].1);
            out.push(Mention {
                text: chars[s..e].iter().collect(),
                start: s,
                len: e - s,
            });
        }
    }
    out
}

fn prepare(q: &str, e_name: &str) -> Result<(String, String)> {
    let (q, e) = (normalize(q), normalize(e_name));
    if q.is_empty() || e.is_empty() {
        return Err(Error::Domain("linker inputs must be non-empty after normalization".into()));
    }
    Ok((q, e))
}

fn best_mention<F>(q: &str, e: &str, exclude: Option<(usize, usize)>, term: F) -> (f64, Option<Mention>)
where
    F: Fn(f64, &Mention) -> f64,
{
    let mut best = (0.0, None);
    for m in enumerate_mentions(q) {
        if exclude.is_some_and(|(s, l)| m.overlaps(s, l)) {
            continue;
        }
        let overlap = lccs_len(&m.text, e);
        if overlap == 0 {
            continue;
        }
        let s = term(overlap as f64, &m);
        if best.1.is_none() || s > best.0 {
            best = (s, Some(m));
        }
    }
    best
}

/// `max_m |m∩e|/|q| + |m∩e|/|e| + p_m/|q|` over mentions with non-zero
/// overlap; `(0, None)` when there are none.
pub fn simple_linker_score(q: &str, e_name: &str) -> Result<(f64, Option<Mention>)> {
    let (q, e) = prepare(q, e_name)?;
    let (lq, le) = (q.chars().count() as f64, e.chars().count() as f64);
    Ok(best_mention(&q, &e, None, |o, m| o / lq + o / le + m.start as f64 / lq))
}

/// `max_m |m∩e|/|q| + |m∩e|/|e|`.
pub fn constraint_linker_score(q: &str, e_name: &str) -> Result<(f64, Option<Mention>)> {
    constraint_linker_score_excluding(q, e_name, None)
}

/// As [`constraint_linker_score`], ignoring mentions that overlap the
/// character span `(start, len)`.
pub fn constraint_linker_score_excluding(
    q: &str,
    e_name: &str,
    exclude: Option<(usize, usize)>,
) -> Result<(f64, Option<Mention>)> {
    let (q, e) = prepare(q, e_name)?;
    let (lq, le) = (q.chars().count() as f64, e.chars().count() as f64);
    Ok(best_mention(&q, &e, exclude, |o, _| o / lq + o / le))
}

/// The three-term and two-term values of one mention of the normalized
/// question, in that order.
pub fn mention_scores(q: &str, e_name: &str, m: &Mention) -> Result<(f64, f64)> {
    let (q, e) = prepare(q, e_name)?;
    let (lq, le) = (q.chars().count() as f64, e.chars().count() as f64);
    if m.end() > q.chars().count() {
        return Err(Error::Domain(format!("mention {:?} lies outside the question", m.text)));
    }
    let o = lccs_len(&m.text, &e) as f64;
    let two = o / lq + o / le;
    Ok((two + m.start as f64 / lq, two))
}

fn rank(mut scores: Vec<LinkerScore>, k: usize) -> Vec<LinkerScore> {
    scores.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.entity.cmp(&b.entity)));
    scores.truncate(k);
    scores
}

/// Top-`k` non-CVT entities by [`simple_linker_score`], zero scores dropped,
/// ties broken by entity id.
pub fn link_top_k(q: &str, kb: &KnowledgeBase, k: usize) -> Result<Vec<LinkerScore>> {
    if k == 0 {
        return Err(Error::Usage("k must be at least 1".into()));
    }
    if normalize(q).is_empty() {
        return Err(Error::Domain("empty question".into()));
    }
    let mut scores = Vec::new();
    for id in kb.entity_ids() {
        let e = kb.entity(id);
        if e.cvt || normalize(&e.name).is_empty() {
            continue;
        }
        if let (s, Some(mention)) = simple_linker_score(q, &e.name)? {
            scores.push(LinkerScore {
                entity: id,
                mention,
                score: s,
            });
        }
    }
    Ok(rank(scores, k))
}

/// First word-aligned occurrence of `text` in the normalized question.
pub fn locate_mention(q: &str, text: &str) -> Option<Mention> {
    let target = normalize(text);
    enumerate_mentions(&normalize(q))
        .into_iter()
        .find(|m| m.text == target)
}

/// One line of a pre-linked results file.
#[derive(Clone, Debug, PartialEq)]
pub struct PrelinkedEntry {
    pub entity: String,
    pub mention: String,
    pub score: f64,
}

/// Reads `question id<TAB>entity id<TAB>mention<TAB>score` lines, grouped by
/// question id in file order.
pub fn read_prelinked<R: BufRead>(reader: R) -> Result<BTreeMap<String, Vec<PrelinkedEntry>>> {
    let mut out: BTreeMap<String, Vec<PrelinkedEntry>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 || f[..3].iter().any(|x| x.trim().is_empty()) {
            return Err(Error::parse(i + 1, "expected question id, entity id, mention and score"));
        }
        let score: f64 = f[3]
            .trim()
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse(i + 1, format!("bad score {:?}", f[3])))?;
        out.entry(f[0].trim().to_string()).or_default().push(PrelinkedEntry {
            entity: f[1].trim().to_string(),
            mention: f[2].trim().to_string(),
            score,
        });
    }
    Ok(out)
}

/// Pre-linked entries as a ranked top-`k` list for question `q`.
pub fn resolve_prelinked(
    kb: &KnowledgeBase,
    q: &str,
    entries: &[PrelinkedEntry],
    k: usize,
) -> Result<Vec<LinkerScore>> {
    if k == 0 {
        return Err(Error::Usage("k must be at least 1".into()));
    }
    let mut scores = Vec::new();
    for e in entries {
        let entity = kb.resolve_entity(&e.entity)?;
        if scores.iter().any(|s: &LinkerScore| s.entity == entity) {
            continue;
        }
        let mention = locate_mention(q, &e.mention).ok_or_else(|| {
            Error::Reformat(format!("mention {:?} does not occur in {:?}", e.mention, q))
        })?;
        scores.push(LinkerScore {
            entity,
            mention,
            score: e.score,
        });
    }
    Ok(rank(scores, k))
}
