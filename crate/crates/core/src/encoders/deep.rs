use std::fmt;
use std::str::FromStr;

use super::{run_bilstm, BiLstmLayer};
use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamStore, Var};

/// How the two question layers are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ResidualVariant {
    /// `max_pool(Γ1 + Γ2)`
    HiddenShortcut,
    /// `max_pool(Γ1) + max_pool(Γ2)`
    PooledShortcut,
    /// `max_pool(Γ2)`, no shortcut.
    SecondLayerOnly,
    /// Both pooled layers kept apart and mixed at scoring time.
    WeightedSum,
}

impl ResidualVariant {
    pub const ALL: [ResidualVariant; 4] = [
        ResidualVariant::HiddenShortcut,
        ResidualVariant::PooledShortcut,
        ResidualVariant::SecondLayerOnly,
        ResidualVariant::WeightedSum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResidualVariant::HiddenShortcut => "hidden_shortcut",
            ResidualVariant::PooledShortcut => "pooled_shortcut",
            ResidualVariant::SecondLayerOnly => "second_layer_only",
            ResidualVariant::WeightedSum => "weighted_sum",
        }
    }
}

impl fmt::Display for ResidualVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResidualVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown residual variant {s:?}")))
    }
}

#[derive(Clone, Copy, Debug)]
pub enum QuestionEncoding {
    Single(Var),
    /// Pooled first and second layer, for [`ResidualVariant::WeightedSum`].
    Layers { first: Var, second: Var },
}

/// Combines two equally shaped `N×k` layer outputs into a question
/// representation.
pub fn combine_layers(g: &mut Graph<'_>, first: Var, second: Var, variant: ResidualVariant) -> Result<QuestionEncoding> {
    if g.shape(first) != g.shape(second) {
        return Err(Error::Shape(format!(
            "residual layers differ in shape: {:?} vs {:?}",
            g.shape(first),
            g.shape(second)
        )));
    }
    Ok(match variant {
        ResidualVariant::HiddenShortcut => {
            let sum = g.add(first, second)?;
            QuestionEncoding::Single(g.max_pool_rows(sum)?)
        }
        ResidualVariant::PooledShortcut => {
            let a = g.max_pool_rows(first)?;
            let b = g.max_pool_rows(second)?;
            QuestionEncoding::Single(g.add(a, b)?)
        }
        ResidualVariant::SecondLayerOnly => QuestionEncoding::Single(g.max_pool_rows(second)?),
        ResidualVariant::WeightedSum => QuestionEncoding::Layers {
            first: g.max_pool_rows(first)?,
            second: g.max_pool_rows(second)?,
        },
    })
}

/// Two stacked BiLSTMs over the question embeddings `q` (`N×d`), the second
/// reading the first's `N×2d_h` output directly.
pub fn encode_question_deep<'p>(
    g: &mut Graph<'p>,
    store: &'p ParamStore,
    layers: (&BiLstmLayer, &BiLstmLayer),
    q: Var,
    variant: ResidualVariant,
) -> Result<QuestionEncoding> {
    let (l1, l2) = layers;
    if l1.d_h != l2.d_h {
        return Err(Error::Shape(format!(
            "residual layers need equal hidden sizes, got {} and {}",
            l1.d_h, l2.d_h
        )));
    }
    if l2.d_in != l1.output_dim() {
        return Err(Error::Shape(format!(
            "second layer reads width {}, first layer emits {}",
            l2.d_in,
            l1.output_dim()
        )));
    }
    let gamma1 = run_bilstm(g, store, l1, q, None)?.hidden;
    let gamma2 = run_bilstm(g, store, l2, gamma1, None)?.hidden;
    combine_layers(g, gamma1, gamma2, variant)
}
