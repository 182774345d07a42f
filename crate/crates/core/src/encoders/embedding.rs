use std::collections::HashMap;
use std::io::BufRead;

use rand::Rng;

use super::Vocabulary;
use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Var};

/// A `V×d` embedding matrix held in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    param: ParamId,
    vocab_size: usize,
    dim: usize,
}

impl EmbeddingTable {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        vocab_size: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let param = store.insert_uniform(name, vec![vocab_size, dim], rng)?;
        Ok(EmbeddingTable {
            param,
            vocab_size,
            dim,
        })
    }

    /// Binds to an existing parameter (e.g. loaded from a checkpoint).
    pub fn from_param(store: &ParamStore, param: ParamId) -> Result<Self> {
        match store.tensor(param).shape() {
            [v, d] => Ok(EmbeddingTable {
                param,
                vocab_size: *v,
                dim: *d,
            }),
            s => Err(Error::Shape(format!("embedding table must be 2-d, got {s:?}"))),
        }
    }

    pub fn param(&self) -> ParamId {
        self.param
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Embeds `tokens` as a `T×d` matrix; unknown tokens use `<unk>`.
    pub fn embed<'p>(
        &self,
        g: &mut Graph<'p>,
        store: &'p ParamStore,
        vocab: &Vocabulary,
        tokens: &[String],
    ) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::Domain("cannot embed an empty token list".into()));
        }
        let ids: Vec<usize> = tokens.iter().map(|t| vocab.lookup(t)).collect();
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab_size) {
            return Err(Error::Shape(format!(
                "token index {bad} outside table of {} rows",
                self.vocab_size
            )));
        }
        let table = g.param(store, self.param);
        g.gather_rows(table, &ids)
    }

    /// Copies pretrained vectors into matching vocabulary rows; returns how
    /// many rows were set. With `freeze`, those rows are excluded from
    /// training updates.
    pub fn apply_pretrained(
        &self,
        store: &mut ParamStore,
        vocab: &Vocabulary,
        pretrained: &PretrainedEmbeddings,
        freeze: bool,
    ) -> Result<usize> {
        if pretrained.dim != self.dim {
            return Err(Error::Config(format!(
                "pretrained dimension {} does not match embedding dimension {}",
                pretrained.dim, self.dim
            )));
        }
        let mut frozen = vec![false; self.vocab_size];
        let mut applied = 0;
        let t = store.tensor_mut(self.param);
        for (token, vector) in &pretrained.vectors {
            if let Some(row) = vocab.get(token) {
                t.values_mut()[row * self.dim..(row + 1) * self.dim].copy_from_slice(vector);
                frozen[row] = true;
                applied += 1;
            }
        }
        if freeze {
            store.freeze_rows(self.param, frozen)?;
        }
        Ok(applied)
    }
}

/// Vectors read from a whitespace-separated `token v1 ... vd` file.
#[derive(Clone, Debug, Default)]
pub struct PretrainedEmbeddings {
    pub dim: usize,
    pub vectors: Vec<(String, Vec<f64>)>,
    /// Lines dropped because their dimension disagreed with the first
    /// vector's.
    pub skipped: usize,
}

impl PretrainedEmbeddings {
    pub fn as_map(&self) -> HashMap<&str, &[f64]> {
        self.vectors
            .iter()
            .map(|(t, v)| (t.as_str(), v.as_slice()))
            .collect()
    }
}

pub fn load_pretrained<R: BufRead>(reader: R) -> Result<PretrainedEmbeddings> {
    let mut out = PretrainedEmbeddings::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let vector = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(n + 1, format!("bad float: {e}")))?;
        if vector.is_empty() {
            return Err(Error::parse(n + 1, format!("token {token} has no vector")));
        }
        if out.dim == 0 {
            out.dim = vector.len();
        }
        if vector.len() != out.dim {
            out.skipped += 1;
            continue;
        }
        out.vectors.push((token.to_string(), vector));
    }
    Ok(out)
}
