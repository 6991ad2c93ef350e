use std::collections::HashMap;

use super::params::{EncoderParams, Side};
use super::tape::{NodeId, Tape};

/// Builds encoder graphs on a tape, reusing nodes for repeated texts.
pub struct Session<'p> {
    pub params: &'p EncoderParams,
    pub tape: Tape,
    chars: HashMap<String, NodeId>,
    features: HashMap<String, NodeId>,
    means: HashMap<String, NodeId>,
    isolated: HashMap<String, NodeId>,
}

impl<'p> Session<'p> {
    pub fn new(params: &'p EncoderParams) -> Self {
        Self {
            params,
            tape: Tape::new(),
            chars: HashMap::new(),
            features: HashMap::new(),
            means: HashMap::new(),
            isolated: HashMap::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.tape.value(id).data
    }

    /// Char CNN: embed, convolve, tanh, max-pool over positions.
    pub fn char_vector(&mut self, text: &str) -> NodeId {
        if let Some(&id) = self.chars.get(text) {
            return id;
        }
        let p = self.params;
        let ids = p.vocab.char_ids(text);
        let x = self.tape.gather(p, p.char_table(), ids);
        let h = self.tape.conv_tanh(p, x, p.banks(Side::Char));
        let v = self.tape.max_rows(h);
        self.chars.insert(text.to_string(), v);
        v
    }

    /// Word CNN position features (one row per token) before pooling.
    pub fn word_features(&mut self, text: &str) -> NodeId {
        if let Some(&id) = self.features.get(text) {
            return id;
        }
        let p = self.params;
        let ids = p.vocab.word_ids(text);
        let x = self.tape.gather(p, p.word_table(), ids);
        let h = self.tape.conv_tanh(p, x, p.banks(Side::Word));
        self.features.insert(text.to_string(), h);
        h
    }

    /// Mean of the position features, used as the attention context of the
    /// opposite side of a pattern/relation pair.
    pub fn word_mean(&mut self, text: &str) -> NodeId {
        if let Some(&id) = self.means.get(text) {
            return id;
        }
        let h = self.word_features(text);
        let m = self.tape.mean_rows(h);
        self.means.insert(text.to_string(), m);
        m
    }

    /// Attentive pooling of the word features with an optional context node.
    pub fn word_vector(&mut self, text: &str, context: Option<NodeId>) -> NodeId {
        let h = self.word_features(text);
        let p = self.params;
        self.tape.attn_pool(p, h, p.attention(), context)
    }

    /// Word vector with attention from the learned parameter alone.
    pub fn word_vector_isolated(&mut self, text: &str) -> NodeId {
        if let Some(&id) = self.isolated.get(text) {
            return id;
        }
        let v = self.word_vector(text, None);
        self.isolated.insert(text.to_string(), v);
        v
    }

    /// Pattern and relation vectors, each attending with the other's mean features.
    pub fn paired_word_vectors(&mut self, pattern: &str, relation: &str) -> (NodeId, NodeId) {
        let pm = self.word_mean(pattern);
        let rm = self.word_mean(relation);
        let vp = self.word_vector(pattern, Some(rm));
        let vr = self.word_vector(relation, Some(pm));
        (vp, vr)
    }
}
