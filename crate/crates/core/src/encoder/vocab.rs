use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::util::normalize_text;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
/// Word id of the mention placeholder `<e>`.
pub const SLOT: usize = 2;

const CHAR_RESERVED: [&str; 2] = ["<pad>", "<unk>"];
const WORD_RESERVED: [&str; 3] = ["<pad>", "<unk>", "<e>"];

/// Append-only character and word vocabularies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabLists", into = "VocabLists")]
pub struct Vocab {
    chars: Vec<String>,
    words: Vec<String>,
    char_ids: HashMap<String, usize>,
    word_ids: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabLists {
    chars: Vec<String>,
    words: Vec<String>,
}

impl From<VocabLists> for Vocab {
    fn from(l: VocabLists) -> Self {
        let index = |v: &[String]| v.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self {
            char_ids: index(&l.chars),
            word_ids: index(&l.words),
            chars: l.chars,
            words: l.words,
        }
    }
}

impl From<Vocab> for VocabLists {
    fn from(v: Vocab) -> Self {
        Self {
            chars: v.chars,
            words: v.words,
        }
    }
}

impl Default for Vocab {
    fn default() -> Self {
        VocabLists {
            chars: CHAR_RESERVED.iter().map(|s| s.to_string()).collect(),
            words: WORD_RESERVED.iter().map(|s| s.to_string()).collect(),
        }
        .into()
    }
}

impl Vocab {
    pub fn n_chars(&self) -> usize {
        self.chars.len()
    }

    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    /// Character ids of the normalized text; unknown characters map to `<unk>`.
    /// Empty text encodes as a single `<unk>`.
    pub fn char_ids(&self, text: &str) -> Vec<usize> {
        let norm = normalize_text(text);
        let ids: Vec<usize> = norm
            .chars()
            .map(|c| *self.char_ids.get(c.encode_utf8(&mut [0; 4]) as &str).unwrap_or(&UNK))
            .collect();
        if ids.is_empty() {
            vec![UNK]
        } else {
            ids
        }
    }

    pub fn word_ids(&self, text: &str) -> Vec<usize> {
        let norm = normalize_text(text);
        let ids: Vec<usize> = norm
            .split(' ')
            .filter(|w| !w.is_empty())
            .map(|w| *self.word_ids.get(w).unwrap_or(&UNK))
            .collect();
        if ids.is_empty() {
            vec![UNK]
        } else {
            ids
        }
    }

    /// Adds unseen characters and words of `text`; returns how many of each were added.
    pub fn extend_with(&mut self, text: &str) -> (usize, usize) {
        let norm = normalize_text(text);
        let mut added = (0, 0);
        for c in norm.chars() {
            let key = c.to_string();
            if !self.char_ids.contains_key(&key) {
                self.char_ids.insert(key.clone(), self.chars.len());
                self.chars.push(key);
                added.0 += 1;
            }
        }
        for w in norm.split(' ').filter(|w| !w.is_empty()) {
            if !self.word_ids.contains_key(w) {
                self.word_ids.insert(w.to_string(), self.words.len());
                self.words.push(w.to_string());
                added.1 += 1;
            }
        }
        added
    }
}
