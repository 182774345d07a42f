use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelKind, QuestionInput, RelationInput, RelationScorer, RelationView, ScorerConfig};
use crate::encoders::{
    combine_layers, encode_question_deep, run_bilstm, BiLstmLayer, CnnLayer, EmbeddingTable,
    QuestionEncoding, ResidualVariant, TrigramHasher, Vocabulary,
};
use crate::error::{Error, Result};
use crate::tensor::{read_checkpoint, write_checkpoint, Checkpoint, Graph, ParamId, ParamStore, Var};

/// Attention-pooled CNN score with an identity bilinear form.
///
/// `hq` is `N×d`, `hr` is `M×d`. Alignment `a = hr·hqᵀ`; relation weights
/// are a softmax over each relation row's best alignment, question weights
/// a softmax over each question row's best alignment; the score is the
/// cosine of the two weighted sums.
pub fn score_apcnn(g: &mut Graph<'_>, hq: Var, hr: Var) -> Result<Var> {
    let (n, d) = match g.shape(hq) {
        [n, d] if *n > 0 => (*n, *d),
        s => return Err(Error::Shape(format!("question states must be N×d, got {s:?}"))),
    };
    let m = match g.shape(hr) {
        [m, dr] if *m > 0 && *dr == d => *m,
        s => return Err(Error::Shape(format!("relation states must be M×{d}, got {s:?}"))),
    };
    let hq_t = g.transpose(hq)?;
    let align = g.matmul(hr, hq_t)?;
    let align_t = g.transpose(align)?;
    let best_per_rel = g.max_pool_rows(align_t)?;
    let best_per_q = g.max_pool_rows(align)?;
    let w_r = g.softmax(best_per_rel)?;
    let w_q = g.softmax(best_per_q)?;
    let w_r = g.reshape(w_r, vec![1, m])?;
    let w_q = g.reshape(w_q, vec![1, n])?;
    let sum_r = g.matmul(w_r, hr)?;
    let sum_q = g.matmul(w_q, hq)?;
    g.cosine(sum_q, sum_r)
}

#[derive(Clone, Debug)]
enum Parts {
    Lstm {
        embed: EmbeddingTable,
        q1: BiLstmLayer,
        q2: Option<BiLstmLayer>,
        rel: BiLstmLayer,
        mix: Option<ParamId>,
    },
    Cnn {
        embed: EmbeddingTable,
        q1: CnnLayer,
        q2: CnnLayer,
        rel: CnnLayer,
        mix: Option<ParamId>,
    },
    Trigram {
        cnn: CnnLayer,
    },
}

/// Question side of a scorer forward pass.
#[derive(Clone, Copy, Debug)]
pub enum QuestionRepr {
    Vector(Var),
    /// Separately pooled layers for the weighted-sum ablation.
    Layers { first: Var, second: Var },
    /// Unpooled CNN states for attention pooling.
    Hidden(Var),
}

/// Relation side of a scorer forward pass.
#[derive(Clone, Copy, Debug)]
pub enum RelationRepr {
    Vector(Var),
    Hidden(Var),
}

/// A trainable relation scorer: configuration, vocabulary and parameters.
#[derive(Clone, Debug)]
pub struct RelationDetector {
    config: ScorerConfig,
    vocab: Vocabulary,
    hasher: TrigramHasher,
    params: ParamStore,
    parts: Parts,
}

impl RelationDetector {
    /// A freshly initialized detector; parameters are uniform in
    /// `[-0.08, 0.08]` drawn from `seed`.
    pub fn new(config: ScorerConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        let hasher = TrigramHasher::new(config.buckets, config.hash_seed)?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let (e, h, w) = (config.embed_dim, config.hidden, config.window);
        let wants_mix = config.variant == ResidualVariant::WeightedSum;
        let parts = match config.model {
            ModelKind::Bicnn | ModelKind::Apcnn => Parts::Trigram {
                cnn: CnnLayer::new(&mut params, "cnn", w, config.buckets, 2 * h, rng)?,
            },
            ModelKind::HrCnn => {
                let embed = EmbeddingTable::new(&mut params, "embedding", vocab.len(), e, rng)?;
                Parts::Cnn {
                    embed,
                    q1: CnnLayer::new(&mut params, "q1", w, e, 2 * h, rng)?,
                    q2: CnnLayer::new(&mut params, "q2", w, 2 * h, 2 * h, rng)?,
                    rel: CnnLayer::new(&mut params, "rel", w, e, 2 * h, rng)?,
                    mix: if wants_mix {
                        Some(params.insert_uniform("mix", vec![2], rng)?)
                    } else {
                        None
                    },
                }
            }
            _ => {
                let embed = EmbeddingTable::new(&mut params, "embedding", vocab.len(), e, rng)?;
                let q1 = BiLstmLayer::new(&mut params, "q1", e, h, rng)?;
                let q2 = if config.model.is_deep() {
                    Some(BiLstmLayer::new(&mut params, "q2", 2 * h, h, rng)?)
                } else {
                    None
                };
                let rel = BiLstmLayer::new(&mut params, "rel", e, h, rng)?;
                let mix = if config.model == ModelKind::WeightedSum {
                    Some(params.insert_uniform("mix", vec![2], rng)?)
                } else {
                    None
                };
                Parts::Lstm {
                    embed,
                    q1,
                    q2,
                    rel,
                    mix,
                }
            }
        };
        Ok(RelationDetector {
            config,
            vocab,
            hasher,
            params,
            parts,
        })
    }

    fn bind(config: ScorerConfig, vocab: Vocabulary, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let hasher = TrigramHasher::new(config.buckets, config.hash_seed)?;
        let (e, h) = (config.embed_dim, config.hidden);
        let missing = |n: &str| Error::Format(format!("missing parameter {n}"));
        let parts = match config.model {
            ModelKind::Bicnn | ModelKind::Apcnn => Parts::Trigram {
                cnn: CnnLayer::bind(&params, "cnn")?,
            },
            ModelKind::HrCnn => Parts::Cnn {
                embed: EmbeddingTable::from_param(&params, params.id("embedding").ok_or_else(|| missing("embedding"))?)?,
                q1: CnnLayer::bind(&params, "q1")?,
                q2: CnnLayer::bind(&params, "q2")?,
                rel: CnnLayer::bind(&params, "rel")?,
                mix: params.id("mix"),
            },
            _ => Parts::Lstm {
                embed: EmbeddingTable::from_param(&params, params.id("embedding").ok_or_else(|| missing("embedding"))?)?,
                q1: BiLstmLayer::bind(&params, "q1", e, h)?,
                q2: if config.model.is_deep() {
                    Some(BiLstmLayer::bind(&params, "q2", 2 * h, h)?)
                } else {
                    None
                },
                rel: BiLstmLayer::bind(&params, "rel", e, h)?,
                mix: params.id("mix"),
            },
        };
        if let Parts::Lstm { embed, .. } | Parts::Cnn { embed, .. } = &parts {
            if embed.vocab_size() != vocab.len() || embed.dim() != e {
                return Err(Error::Format(format!(
                    "embedding table {}×{} does not match vocabulary {} / dimension {e}",
                    embed.vocab_size(),
                    embed.dim(),
                    vocab.len()
                )));
            }
        }
        let detector = RelationDetector {
            config,
            vocab,
            hasher,
            params,
            parts,
        };
        if detector.config.variant == ResidualVariant::WeightedSum && detector.mix().is_none() {
            return Err(missing("mix"));
        }
        Ok(detector)
    }

    pub fn config(&self) -> &ScorerConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Embedding table, for models that use one.
    pub fn embedding(&self) -> Option<&EmbeddingTable> {
        match &self.parts {
            Parts::Lstm { embed, .. } | Parts::Cnn { embed, .. } => Some(embed),
            Parts::Trigram { .. } => None,
        }
    }

    fn mix(&self) -> Option<ParamId> {
        match &self.parts {
            Parts::Lstm { mix, .. } | Parts::Cnn { mix, .. } => *mix,
            Parts::Trigram { .. } => None,
        }
    }

    fn embed<'p>(&'p self, g: &mut Graph<'p>, embed: &EmbeddingTable, tokens: &[String]) -> Result<Var> {
        embed.embed(g, &self.params, &self.vocab, tokens)
    }

    fn trigram_input(&self, g: &mut Graph<'_>, tokens: &[String]) -> Result<Var> {
        Ok(g.input(self.hasher.word_matrix(tokens)?))
    }

    pub fn encode_question<'p>(&'p self, g: &mut Graph<'p>, q: &QuestionInput) -> Result<QuestionRepr> {
        let variant = self.config.variant;
        let encoding = match &self.parts {
            Parts::Lstm { embed, q1, q2, .. } => {
                let x = self.embed(g, embed, q.tokens())?;
                match q2 {
                    Some(q2) => encode_question_deep(g, &self.params, (q1, q2), x, variant)?,
                    None => {
                        let h = run_bilstm(g, &self.params, q1, x, None)?.hidden;
                        QuestionEncoding::Single(g.max_pool_rows(h)?)
                    }
                }
            }
            Parts::Cnn { embed, q1, q2, .. } => {
                let x = self.embed(g, embed, q.tokens())?;
                let first = q1.encode(g, &self.params, x)?;
                let second = q2.encode(g, &self.params, first)?;
                combine_layers(g, first, second, variant)?
            }
            Parts::Trigram { cnn } => {
                let x = self.trigram_input(g, q.tokens())?;
                let h = cnn.encode(g, &self.params, x)?;
                return Ok(match self.config.model {
                    ModelKind::Apcnn => QuestionRepr::Hidden(h),
                    _ => QuestionRepr::Vector(g.max_pool_rows(h)?),
                });
            }
        };
        Ok(match encoding {
            QuestionEncoding::Single(v) => QuestionRepr::Vector(v),
            QuestionEncoding::Layers { first, second } => QuestionRepr::Layers { first, second },
        })
    }

    pub fn encode_relation<'p>(&'p self, g: &mut Graph<'p>, r: &RelationInput) -> Result<RelationRepr> {
        let view = self.config.view;
        r.validate(view).map_err(|_| {
            Error::Domain(format!("relation {:?} has no tokens for view {view}", r.name_tokens))
        })?;
        match &self.parts {
            Parts::Lstm { embed, rel, .. } => {
                let rows = match view {
                    RelationView::Words => {
                        let x = self.embed(g, embed, &r.word_tokens)?;
                        run_bilstm(g, &self.params, rel, x, None)?.hidden
                    }
                    RelationView::Names => {
                        let x = self.embed(g, embed, &r.name_tokens)?;
                        run_bilstm(g, &self.params, rel, x, None)?.hidden
                    }
                    RelationView::Both => {
                        let xw = self.embed(g, embed, &r.word_tokens)?;
                        let words = run_bilstm(g, &self.params, rel, xw, None)?;
                        let xn = self.embed(g, embed, &r.name_tokens)?;
                        let init = (words.fwd_final, words.bwd_final);
                        let names = run_bilstm(g, &self.params, rel, xn, Some(init))?;
                        g.concat_rows(&[words.hidden, names.hidden])?
                    }
                };
                Ok(RelationRepr::Vector(g.max_pool_rows(rows)?))
            }
            Parts::Cnn { embed, rel, .. } => {
                let mut blocks = Vec::with_capacity(2);
                if view != RelationView::Names {
                    let x = self.embed(g, embed, &r.word_tokens)?;
                    blocks.push(rel.encode(g, &self.params, x)?);
                }
                if view != RelationView::Words {
                    let x = self.embed(g, embed, &r.name_tokens)?;
                    blocks.push(rel.encode(g, &self.params, x)?);
                }
                let rows = g.concat_rows(&blocks)?;
                Ok(RelationRepr::Vector(g.max_pool_rows(rows)?))
            }
            Parts::Trigram { cnn } => {
                let tokens = if r.word_tokens.is_empty() {
                    &r.name_tokens
                } else {
                    &r.word_tokens
                };
                let x = self.trigram_input(g, tokens)?;
                let h = cnn.encode(g, &self.params, x)?;
                Ok(match self.config.model {
                    ModelKind::Apcnn => RelationRepr::Hidden(h),
                    _ => RelationRepr::Vector(g.max_pool_rows(h)?),
                })
            }
        }
    }

    /// Scalar score node for an encoded pair.
    pub fn match_score<'p>(&'p self, g: &mut Graph<'p>, q: &QuestionRepr, r: &RelationRepr) -> Result<Var> {
        match (q, r) {
            (QuestionRepr::Vector(hq), RelationRepr::Vector(hr)) => g.cosine(*hq, *hr),
            (QuestionRepr::Layers { first, second }, RelationRepr::Vector(hr)) => {
                let mix = self
                    .mix()
                    .ok_or_else(|| Error::Usage("weighted-sum scoring without layer weights".into()))?;
                // (e^w1·cos1 + e^w2·cos2) / (e^w1 + e^w2)
                let c1 = g.cosine(*first, *hr)?;
                let c2 = g.cosine(*second, *hr)?;
                let cs = g.concat_cols(&[c1, c2])?;
                let w = g.param(&self.params, mix);
                let w = g.softmax(w)?;
                let w = g.reshape(w, vec![1, 2])?;
                let weighted = g.mul(cs, w)?;
                Ok(g.sum(weighted))
            }
            (QuestionRepr::Hidden(hq), RelationRepr::Hidden(hr)) => score_apcnn(g, *hq, *hr),
            _ => Err(Error::Usage("question and relation encodings do not match".into())),
        }
    }

    pub fn score_var<'p>(&'p self, g: &mut Graph<'p>, q: &QuestionInput, r: &RelationInput) -> Result<Var> {
        let qr = self.encode_question(g, q)?;
        let rr = self.encode_relation(g, r)?;
        self.match_score(g, &qr, &rr)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let metadata = [
            ("format", "kbqa-detector".to_string()),
            ("model", c.model.to_string()),
            ("variant", c.variant.to_string()),
            ("view", c.view.to_string()),
            ("hidden", c.hidden.to_string()),
            ("embed_dim", c.embed_dim.to_string()),
            ("window", c.window.to_string()),
            ("buckets", c.buckets.to_string()),
            ("hash_seed", c.hash_seed.to_string()),
            ("vocab_fingerprint", self.vocab.fingerprint()),
            ("vocab", self.vocab.tokens().join("\n")),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let mut params = self.params.clone();
        params.clear_grads();
        Checkpoint { metadata, params }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let get = |k: &str| {
            ckpt.meta(k)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {k}")))
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Format(format!("checkpoint field {k} is not a number")))
        };
        if get("format")? != "kbqa-detector" {
            return Err(Error::Format("not a detector checkpoint".into()));
        }
        let config = ScorerConfig {
            model: get("model")?.parse()?,
            variant: get("variant")?.parse()?,
            view: get("view")?.parse()?,
            hidden: num("hidden")? as usize,
            embed_dim: num("embed_dim")? as usize,
            window: num("window")? as usize,
            buckets: num("buckets")? as usize,
            hash_seed: num("hash_seed")?,
        };
        let vocab_text = get("vocab")?;
        let tokens: Vec<&str> = vocab_text.split('\n').collect();
        let vocab = Vocabulary::from_tokens(tokens.iter().copied());
        if vocab.len() != tokens.len() || vocab.tokens().iter().zip(&tokens).any(|(a, b)| a != b) {
            return Err(Error::Format("checkpoint vocabulary is not in canonical order".into()));
        }
        if vocab.fingerprint() != get("vocab_fingerprint")? {
            return Err(Error::Format("vocabulary fingerprint mismatch".into()));
        }
        RelationDetector::bind(config, vocab, ckpt.params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_checkpoint(&mut w, &self.to_checkpoint())?;
        use std::io::Write;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        RelationDetector::from_checkpoint(read_checkpoint(&mut r)?)
    }
}

impl RelationScorer for RelationDetector {
    fn score(&self, q: &QuestionInput, r: &RelationInput) -> Result<f64> {
        let mut g = Graph::new();
        let s = self.score_var(&mut g, q, r)?;
        Ok(g.scalar(s))
    }

    fn score_all(&self, q: &QuestionInput, rs: &[RelationInput]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let qr = self.encode_question(&mut g, q)?;
        rs.iter()
            .map(|r| {
                let rr = self.encode_relation(&mut g, r)?;
                let s = self.match_score(&mut g, &qr, &rr)?;
                Ok(g.scalar(s))
            })
            .collect()
    }
}
