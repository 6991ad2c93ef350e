use serde::{Deserialize, Serialize};

use super::score::Scorer;
use crate::encoder::EncoderParams;
use crate::kbstream::Question;
use crate::pairgen::{Candidate, MentionPattern};
use crate::{Error, Result};

/// Scores of an exemplar's pairs under the model of its source phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotLabels {
    pub positive: f64,
    /// One label per frozen negative, in the same order.
    pub negatives: Vec<f64>,
}

/// A retained training question with a frozen candidate list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: Question,
    pub mention_pattern: MentionPattern,
    pub positive: Candidate,
    pub negatives: Vec<Candidate>,
    pub source_phase: usize,
    pub labels: Option<SnapshotLabels>,
}

impl Exemplar {
    pub fn relation_id(&self) -> &str {
        &self.positive.relation.id
    }
}

/// Fills the labels of freshly selected exemplars with scores under `params`.
/// Labels are set once; an exemplar that already has them is rejected.
pub fn snapshot_labels(exemplars: &mut [Exemplar], params: &EncoderParams) -> Result<()> {
    if let Some(e) = exemplars.iter().find(|e| e.labels.is_some()) {
        return Err(Error::LabelsFrozen(e.question.id));
    }
    for chunk in exemplars.chunks_mut(64) {
        let mut scorer = Scorer::new(params);
        for e in chunk.iter_mut() {
            let mp = &e.mention_pattern;
            let mut score = |c: &Candidate| {
                let n = scorer.score_texts(&mp.mention, &mp.pattern, &c.subject.text, &c.relation.text);
                scorer.scalar(n)
            };
            let positive = score(&e.positive);
            let negatives: Vec<f64> = e.negatives.iter().map(&mut score).collect();
            if !positive.is_finite() || negatives.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("snapshot of question {}", e.question.id)));
            }
            e.labels = Some(SnapshotLabels { positive, negatives });
        }
    }
    Ok(())
}
