//! Relation scorers `s_rel(r; q)`: the hierarchical residual BiLSTM, its
//! single-view and weighted-sum ablations, the CNN baselines and an
//! ensemble combiner.

mod config;
mod detector;
mod ensemble;

pub use config::{ModelKind, RelationView, ScorerConfig};
pub use detector::{score_apcnn, QuestionRepr, RelationDetector, RelationRepr};
pub use ensemble::{ensemble_score, Ensemble};

use crate::encoders::ENTITY_TOKEN;
use crate::error::{Error, Result};
use crate::text::{relation_words, tokenize};

/// A candidate relation or two-relation chain seen through two token views.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationInput {
    /// Words from the tokenized relation names, e.g. `episodes written`.
    pub word_tokens: Vec<String>,
    /// Whole relation names, one per chain element, e.g. `episodes_written`.
    pub name_tokens: Vec<String>,
}

impl RelationInput {
    /// Builds both views from a chain of one or two relation names.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        if names.is_empty() || names.len() > 2 {
            return Err(Error::Domain(format!(
                "relation chains have length 1 or 2, got {}",
                names.len()
            )));
        }
        Ok(RelationInput {
            word_tokens: names.iter().flat_map(|n| relation_words(n.as_ref())).collect(),
            name_tokens: names.iter().map(|n| n.as_ref().to_string()).collect(),
        })
    }

    /// Checks the token counts required by `view`.
    pub fn validate(&self, view: RelationView) -> Result<()> {
        if self.name_tokens.len() > 2 {
            return Err(Error::Config(format!(
                "chain of {} relation names exceeds 2",
                self.name_tokens.len()
            )));
        }
        let words_ok = !self.word_tokens.is_empty();
        let names_ok = !self.name_tokens.is_empty();
        let ok = match view {
            RelationView::Words => words_ok,
            RelationView::Names => names_ok,
            RelationView::Both => words_ok && names_ok,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("relation {:?} lacks tokens for view {view}", self.name_tokens)))
        }
    }

    /// Chain form, e.g. `starring_roles-series`.
    pub fn chain_name(&self) -> String {
        self.name_tokens.join("-")
    }
}

/// Question tokens, with the topic-entity mention optionally replaced by
/// `<e>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuestionInput {
    tokens: Vec<String>,
}

impl QuestionInput {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Domain("empty question".into()));
        }
        if tokens.iter().filter(|t| *t == ENTITY_TOKEN).count() > 1 {
            return Err(Error::Domain("question holds more than one <e> token".into()));
        }
        Ok(QuestionInput { tokens })
    }

    /// Tokenizes raw text through the shared normalization.
    pub fn from_text(text: &str) -> Result<Self> {
        QuestionInput::new(tokenize(text))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Anything that can score a relation against a question.
pub trait RelationScorer {
    fn score(&self, q: &QuestionInput, r: &RelationInput) -> Result<f64>;

    fn score_all(&self, q: &QuestionInput, rs: &[RelationInput]) -> Result<Vec<f64>> {
        rs.iter().map(|r| self.score(q, r)).collect()
    }
}

impl<T: RelationScorer + ?Sized> RelationScorer for &T {
    fn score(&self, q: &QuestionInput, r: &RelationInput) -> Result<f64> {
        (**self).score(q, r)
    }

    fn score_all(&self, q: &QuestionInput, rs: &[RelationInput]) -> Result<Vec<f64>> {
        (**self).score_all(q, rs)
    }
}

impl<T: RelationScorer + ?Sized> RelationScorer for Box<T> {
    fn score(&self, q: &QuestionInput, r: &RelationInput) -> Result<f64> {
        (**self).score(q, r)
    }

    fn score_all(&self, q: &QuestionInput, rs: &[RelationInput]) -> Result<Vec<f64>> {
        (**self).score_all(q, rs)
    }
}
