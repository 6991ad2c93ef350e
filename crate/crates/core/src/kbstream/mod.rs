//! The evolving knowledge base and its phase-wise question splits.

mod ingest;
mod io;
mod stream;
mod synthetic;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use ingest::{ingest_corpus, parse_corpus, relation_surface, CorpusFormat};
pub use io::{corpus_digest, load_stream, write_stream};
pub(crate) use io::{read_jsonl as read_jsonl_rows, write_jsonl as write_jsonl_rows};
pub use stream::{build_stream, SplitRatios};
pub use synthetic::{generate_synthetic, SyntheticConfig};

/// An identifier paired with the surface text the encoders read.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Named {
    pub id: String,
    pub text: String,
}

impl Named {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// A `(subject, relation, object)` fact.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: Named,
    pub relation: Named,
    pub object: Named,
}

impl Triple {
    pub fn key(&self) -> (&str, &str, &str) {
        (&self.subject.id, &self.relation.id, &self.object.id)
    }
}

/// Character span `[start, end)` into a question's text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: u32,
    pub text: String,
    pub gold: Triple,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mention_span: Option<Span>,
}

impl Question {
    pub fn tokens(&self) -> Vec<&str> {
        self.text.split_whitespace().collect()
    }

    pub fn relation_id(&self) -> &str {
        &self.gold.relation.id
    }

    /// The text covered by the gold mention span, if annotated and in range.
    pub fn mention_text(&self) -> Option<String> {
        let span = self.mention_span?;
        if span.start >= span.end || span.end > self.text.chars().count() {
            return None;
        }
        Some(
            self.text
                .chars()
                .skip(span.start)
                .take(span.end - span.start)
                .collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// One phase `D_i`: cumulative facts, the relation types first seen in this
/// phase, and the questions about those relations.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseDataset {
    pub phase: usize,
    pub facts: Vec<Triple>,
    pub relations_new: BTreeSet<String>,
    pub train: Vec<Question>,
    pub valid: Vec<Question>,
    pub test: Vec<Question>,
}

impl PhaseDataset {
    pub fn question_count(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn split(&self, split: Split) -> &[Question] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn fact_relations(&self) -> BTreeSet<&str> {
        self.facts.iter().map(|t| t.relation.id.as_str()).collect()
    }

    /// Relation types that have at least one question in this phase.
    pub fn question_relations(&self) -> BTreeSet<&str> {
        self.train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .map(Question::relation_id)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseFiles {
    pub phase: usize,
    pub questions: String,
    pub facts: String,
    pub relations_new: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub version: u32,
    pub phases: usize,
    pub seed: u64,
    pub ratios: SplitRatios,
    /// SHA-256 of the canonical serialization of the source corpus.
    pub corpus_sha256: String,
    pub files: Vec<PhaseFiles>,
}

/// Per-phase question and relation counts as a fixed-width text table.
pub fn statistics_table(phases: &[PhaseDataset]) -> String {
    let mut rows: Vec<(String, Vec<usize>)> = vec![
        ("# q in train".into(), phases.iter().map(|p| p.train.len()).collect()),
        ("# q in validation".into(), phases.iter().map(|p| p.valid.len()).collect()),
        ("# q in test".into(), phases.iter().map(|p| p.test.len()).collect()),
        (
            "# relations in F_i".into(),
            phases.iter().map(|p| p.fact_relations().len()).collect(),
        ),
        (
            "# relations of q".into(),
            phases.iter().map(|p| p.question_relations().len()).collect(),
        ),
    ];
    let mut out = format!("{:<20}", "Dataset");
    for p in phases {
        out.push_str(&format!("{:>10}", format!("D_{}", p.phase)));
    }
    out.push('\n');
    for (name, vals) in rows.drain(..) {
        out.push_str(&format!("{name:<20}"));
        for v in vals {
            out.push_str(&format!("{v:>10}"));
        }
        out.push('\n');
    }
    out
}
