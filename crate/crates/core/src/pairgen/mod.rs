//! Question to `(mention, pattern)` conversion and candidate pair generation.

mod candidates;
mod mention;

use serde::{Deserialize, Serialize};

pub use candidates::{generate_candidates, make_pairs, CandidateConfig, KbIndex};
pub use mention::{surface_set, to_mention_pattern, MentionMode, MentionPattern, PLACEHOLDER};

use crate::kbstream::Named;

/// A `(subject, relation)` pair a question is ranked against.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Candidate {
    pub subject: Named,
    pub relation: Named,
}

impl Candidate {
    pub fn key(&self) -> (&str, &str) {
        (&self.subject.id, &self.relation.id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub question_id: u32,
    pub candidates: Vec<Candidate>,
    pub gold_index: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// The four texts fed to the encoders plus the pair's polarity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub mention: String,
    pub pattern: String,
    pub subject: String,
    pub relation: String,
    pub polarity: Polarity,
}

impl TrainingPair {
    pub fn new(mp: &MentionPattern, c: &Candidate, polarity: Polarity) -> Self {
        Self {
            mention: mp.mention.clone(),
            pattern: mp.pattern.clone(),
            subject: c.subject.text.clone(),
            relation: c.relation.text.clone(),
            polarity,
        }
    }
}

pub fn write_candidate_cache(path: &std::path::Path, sets: &[CandidateSet]) -> crate::Result<()> {
    crate::kbstream::write_jsonl_rows(path, sets)
}

pub fn read_candidate_cache(path: &std::path::Path) -> crate::Result<Vec<CandidateSet>> {
    crate::kbstream::read_jsonl_rows(path)
}
