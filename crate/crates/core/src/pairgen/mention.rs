use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::kbstream::Question;
use crate::util::{collapse_ws, normalize_text};
use crate::{Error, Result};

pub const PLACEHOLDER: &str = "<e>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionMode {
    /// Use the annotated span.
    Gold,
    /// Longest run of question tokens equal to a known entity surface form.
    Heuristic,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MentionPattern {
    pub mention: String,
    pub pattern: String,
}

impl MentionPattern {
    /// Substitutes the mention back into the pattern.
    pub fn restore(&self) -> String {
        collapse_ws(&self.pattern.replacen(PLACEHOLDER, &self.mention, 1))
    }

    fn from_tokens(tokens: &[&str], start: usize, end: usize) -> Self {
        let mut pattern: Vec<&str> = tokens[..start].to_vec();
        pattern.push(PLACEHOLDER);
        pattern.extend_from_slice(&tokens[end..]);
        Self {
            mention: tokens[start..end].join(" "),
            pattern: pattern.join(" "),
        }
    }
}

/// Converts a question into a `(mention, pattern)` tuple. `entity_surfaces`
/// holds normalized entity names and is only read in heuristic mode.
pub fn to_mention_pattern(
    question: &Question,
    mode: MentionMode,
    entity_surfaces: &HashSet<String>,
) -> Result<MentionPattern> {
    match mode {
        MentionMode::Gold => {
            let span = question
                .mention_span
                .ok_or(Error::MissingAnnotation(question.id))?;
            let chars: Vec<char> = question.text.chars().collect();
            if span.start >= span.end || span.end > chars.len() {
                return Err(Error::MissingAnnotation(question.id));
            }
            let prefix: String = chars[..span.start].iter().collect();
            let mention: String = chars[span.start..span.end].iter().collect();
            let suffix: String = chars[span.end..].iter().collect();
            let mention = collapse_ws(&mention);
            if mention.is_empty() {
                return Err(Error::MissingAnnotation(question.id));
            }
            Ok(MentionPattern {
                mention,
                pattern: collapse_ws(&format!("{prefix} {PLACEHOLDER} {suffix}")),
            })
        }
        MentionMode::Heuristic => Ok(heuristic(question, entity_surfaces)),
    }
}

fn heuristic(question: &Question, entity_surfaces: &HashSet<String>) -> MentionPattern {
    let tokens = question.tokens();
    let lowered: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();

    let mut best: Option<(usize, usize, usize)> = None;
    for i in 0..tokens.len() {
        for j in i + 1..=tokens.len() {
            let candidate = lowered[i..j].join(" ");
            if entity_surfaces.contains(&candidate) {
                let len = candidate.chars().count();
                if best.is_none_or(|(_, _, l)| len > l) {
                    best = Some((i, j, len));
                }
            }
        }
    }
    if let Some((i, j, _)) = best {
        return MentionPattern::from_tokens(&tokens, i, j);
    }

    // Longest run of capitalized tokens; earliest wins ties.
    let mut run: Option<(usize, usize)> = None;
    let mut k = 0;
    while k < tokens.len() {
        if tokens[k].chars().next().is_some_and(char::is_uppercase) {
            let start = k;
            while k < tokens.len() && tokens[k].chars().next().is_some_and(char::is_uppercase) {
                k += 1;
            }
            if run.is_none_or(|(s, e)| k - start > e - s) {
                run = Some((start, k));
            }
        } else {
            k += 1;
        }
    }
    match run {
        Some((s, e)) => MentionPattern::from_tokens(&tokens, s, e),
        None => MentionPattern::from_tokens(&tokens, 0, tokens.len()),
    }
}

/// Normalized entity surface forms for heuristic mention detection.
pub fn surface_set<'a>(names: impl IntoIterator<Item = &'a str>) -> HashSet<String> {
    names.into_iter().map(normalize_text).collect()
}
