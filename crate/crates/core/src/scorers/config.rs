use std::fmt;
use std::str::FromStr;

use crate::encoders::{ResidualVariant, DEFAULT_TRIGRAM_BUCKETS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    HrBilstm,
    Bicnn,
    Apcnn,
    BilstmWords,
    BilstmNames,
    HrCnn,
    WeightedSum,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::HrBilstm,
        ModelKind::Bicnn,
        ModelKind::Apcnn,
        ModelKind::BilstmWords,
        ModelKind::BilstmNames,
        ModelKind::HrCnn,
        ModelKind::WeightedSum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::HrBilstm => "hr_bilstm",
            ModelKind::Bicnn => "bicnn",
            ModelKind::Apcnn => "apcnn",
            ModelKind::BilstmWords => "bilstm_words",
            ModelKind::BilstmNames => "bilstm_names",
            ModelKind::HrCnn => "hr_cnn",
            ModelKind::WeightedSum => "weighted_sum",
        }
    }

    /// Models reading character trigrams instead of word embeddings.
    pub fn uses_trigrams(self) -> bool {
        matches!(self, ModelKind::Bicnn | ModelKind::Apcnn)
    }

    /// Models with a two-layer question encoder.
    pub fn is_deep(self) -> bool {
        matches!(self, ModelKind::HrBilstm | ModelKind::HrCnn | ModelKind::WeightedSum)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

/// Which relation tokens feed the relation encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RelationView {
    Words,
    Names,
    Both,
}

impl RelationView {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationView::Words => "words",
            RelationView::Names => "names",
            RelationView::Both => "both",
        }
    }
}

impl fmt::Display for RelationView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "words" => Ok(RelationView::Words),
            "names" => Ok(RelationView::Names),
            "both" => Ok(RelationView::Both),
            _ => Err(Error::Config(format!("unknown relation view {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScorerConfig {
    pub model: ModelKind,
    pub variant: ResidualVariant,
    /// BiLSTM hidden size `d_h`; CNN models use `2·d_h` filters.
    pub hidden: usize,
    pub view: RelationView,
    pub embed_dim: usize,
    pub window: usize,
    pub buckets: usize,
    pub hash_seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig::for_model(ModelKind::HrBilstm)
    }
}

impl ScorerConfig {
    /// Defaults for `model`, with the view and variant it requires.
    pub fn for_model(model: ModelKind) -> Self {
        let view = match model {
            ModelKind::BilstmWords | ModelKind::Bicnn | ModelKind::Apcnn => RelationView::Words,
            ModelKind::BilstmNames => RelationView::Names,
            _ => RelationView::Both,
        };
        let variant = match model {
            ModelKind::WeightedSum => ResidualVariant::WeightedSum,
            _ => ResidualVariant::HiddenShortcut,
        };
        ScorerConfig {
            model,
            variant,
            hidden: 50,
            view,
            embed_dim: 50,
            window: 3,
            buckets: DEFAULT_TRIGRAM_BUCKETS,
            hash_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.hidden == 0 || self.embed_dim == 0 || self.buckets == 0 {
            return fail("hidden size, embedding dimension and bucket count must be positive".into());
        }
        if self.window.is_multiple_of(2) {
            return fail(format!("convolution window {} must be odd", self.window));
        }
        let required_view = match self.model {
            ModelKind::BilstmWords | ModelKind::Bicnn | ModelKind::Apcnn => Some(RelationView::Words),
            ModelKind::BilstmNames => Some(RelationView::Names),
            _ => None,
        };
        if let Some(v) = required_view {
            if self.view != v {
                return fail(format!("model {} requires view {v}, got {}", self.model, self.view));
            }
        }
        match (self.model, self.variant) {
            (ModelKind::WeightedSum, v) if v != ResidualVariant::WeightedSum => {
                fail(format!("model weighted_sum requires variant weighted_sum, got {v}"))
            }
            (ModelKind::HrBilstm, ResidualVariant::WeightedSum) => {
                fail("hr_bilstm takes a residual variant; use model weighted_sum for the weighted sum".into())
            }
            _ => Ok(()),
        }
    }
}
