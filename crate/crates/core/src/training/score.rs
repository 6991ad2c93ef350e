use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderParams, NodeId, Session};
use crate::pairgen::TrainingPair;

/// Sum of the mention/subject and pattern/relation cosine similarities.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PairScore(pub f64);

impl PairScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Score graph builder over one tape. Cosine nodes are shared between pairs
/// with the same (mention, subject) or (pattern, relation) texts.
pub struct Scorer<'p> {
    pub session: Session<'p>,
    char_pairs: HashMap<(String, String), NodeId>,
    word_pairs: HashMap<(String, String), NodeId>,
}

impl<'p> Scorer<'p> {
    pub fn new(params: &'p EncoderParams) -> Self {
        Self {
            session: Session::new(params),
            char_pairs: HashMap::new(),
            word_pairs: HashMap::new(),
        }
    }

    pub fn char_cosine(&mut self, mention: &str, subject: &str) -> NodeId {
        let key = (mention.to_string(), subject.to_string());
        if let Some(&id) = self.char_pairs.get(&key) {
            return id;
        }
        let m = self.session.char_vector(mention);
        let s = self.session.char_vector(subject);
        let c = self.session.tape.cosine(m, s);
        self.char_pairs.insert(key, c);
        c
    }

    pub fn word_cosine(&mut self, pattern: &str, relation: &str) -> NodeId {
        let key = (pattern.to_string(), relation.to_string());
        if let Some(&id) = self.word_pairs.get(&key) {
            return id;
        }
        let (p, r) = self.session.paired_word_vectors(pattern, relation);
        let c = self.session.tape.cosine(p, r);
        self.word_pairs.insert(key, c);
        c
    }

    pub fn score_texts(&mut self, mention: &str, pattern: &str, subject: &str, relation: &str) -> NodeId {
        let a = self.char_cosine(mention, subject);
        let b = self.word_cosine(pattern, relation);
        self.session.tape.add(a, b)
    }

    pub fn score_node(&mut self, pair: &TrainingPair) -> NodeId {
        self.score_texts(&pair.mention, &pair.pattern, &pair.subject, &pair.relation)
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.session.tape.scalar(id)
    }
}

pub fn score(pair: &TrainingPair, params: &EncoderParams) -> PairScore {
    let mut s = Scorer::new(params);
    let n = s.score_node(pair);
    PairScore(s.scalar(n))
}
