use super::{QuestionInput, RelationInput, RelationScorer};
use crate::error::{Error, Result};

/// Unweighted mean of member scores.
pub fn ensemble_score(scores: &[(String, f64)]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Usage("ensemble of zero detectors".into()));
    }
    Ok(scores.iter().map(|(_, s)| s).sum::<f64>() / scores.len() as f64)
}

/// Several named detectors averaged into one scorer.
pub struct Ensemble {
    members: Vec<(String, Box<dyn RelationScorer + Send + Sync>)>,
}

impl Ensemble {
    pub fn new(members: Vec<(String, Box<dyn RelationScorer + Send + Sync>)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Usage("ensemble of zero detectors".into()));
        }
        Ok(Ensemble { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

impl RelationScorer for Ensemble {
    fn score(&self, q: &QuestionInput, r: &RelationInput) -> Result<f64> {
        let scores = self
            .members
            .iter()
            .map(|(id, m)| Ok((id.clone(), m.score(q, r)?)))
            .collect::<Result<Vec<_>>>()?;
        ensemble_score(&scores)
    }
}
