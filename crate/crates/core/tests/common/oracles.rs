//! Straight-line reference implementations, written without reference to
//! the library's internals.

use std::collections::BTreeSet;

/// Longest common substring by checking every substring of `a` against `b`.
pub fn lccs_brute(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: String = b.to_string();
    let mut best = 0;
    for i in 0..a.len() {
        for j in i + 1..=a.len() {
            let sub: String = a[i..j].iter().collect();
            if j - i > best && b.contains(&sub) {
                best = j - i;
            }
        }
    }
    best
}

/// `(start in chars, text)` of every contiguous run of 1..=6 words.
pub fn ngrams(q: &str) -> Vec<(usize, String)> {
    let words: Vec<&str> = q.split(' ').collect();
    let mut starts = Vec::new();
    let mut pos = 0;
    for w in &words {
        starts.push(pos);
        pos += w.chars().count() + 1;
    }
    let mut out = Vec::new();
    for i in 0..words.len() {
        for n in 1..=6 {
            if i + n > words.len() {
                break;
            }
            out.push((starts[i], words[i..i + n].join(" ")));
        }
    }
    out
}

/// Best linker value over mentions with non-zero overlap, 0 when none.
/// Inputs must already be normalized.
pub fn linker_brute(q: &str, e: &str, with_position: bool) -> f64 {
    let lq = q.chars().count() as f64;
    let le = e.chars().count() as f64;
    let mut best: Option<f64> = None;
    for (p, m) in ngrams(q) {
        let o = lccs_brute(&m, e) as f64;
        if o == 0.0 {
            continue;
        }
        let mut s = o / lq + o / le;
        if with_position {
            s += p as f64 / lq;
        }
        best = Some(best.map_or(s, |b: f64| b.max(s)));
    }
    best.unwrap_or(0.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

/// Attention-pooled cosine with `a_ij = hr_i · hq_j`.
pub fn apcnn_brute(hq: &[Vec<f64>], hr: &[Vec<f64>]) -> f64 {
    let a: Vec<Vec<f64>> = hr.iter().map(|r| hq.iter().map(|q| dot(r, q)).collect()).collect();
    let row_max: Vec<f64> = a.iter().map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
    let col_max: Vec<f64> = (0..hq.len())
        .map(|j| a.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let wr = softmax(&row_max);
    let wq = softmax(&col_max);
    let d = hq[0].len();
    let sr: Vec<f64> = (0..d).map(|k| hr.iter().zip(&wr).map(|(r, w)| w * r[k]).sum()).collect();
    let sq: Vec<f64> = (0..d).map(|k| hq.iter().zip(&wq).map(|(q, w)| w * q[k]).sum()).collect();
    cosine(&sq, &sr)
}

/// Re-rank score of one entity: `α·link + (1−α)·max over its relations in
/// the top-`l` set`, the top set chosen by score then relation index.
pub fn rerank_brute(
    alpha: f64,
    l: usize,
    link: f64,
    entity_relations: &BTreeSet<usize>,
    all_relation_scores: &[(usize, f64)],
) -> f64 {
    let mut sorted = all_relation_scores.to_vec();
    sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let top: Vec<(usize, f64)> = sorted.into_iter().take(l).collect();
    let best = top
        .iter()
        .filter(|(r, _)| entity_relations.contains(r))
        .map(|(_, s)| *s)
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
        .unwrap_or(0.0);
    alpha * link + (1.0 - alpha) * best
}

/// One entity: `(id, rerank score, [(chain id, relation score)])`.
pub type Candidate = (usize, f64, Vec<(usize, f64)>);

/// Best `β·rerank + (1−β)·rel` over the cross product of `cands`.
pub fn generate_brute(beta: f64, cands: &[Candidate]) -> Option<f64> {
    cands
        .iter()
        .flat_map(|(_, rr, chains)| chains.iter().map(move |(_, s)| beta * rr + (1.0 - beta) * s))
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
}
