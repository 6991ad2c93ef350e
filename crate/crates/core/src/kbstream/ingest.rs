use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{Named, Question, Span, Triple};
use crate::util::collapse_ws;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusFormat {
    Tsv,
    JsonLines,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::JsonLines,
            _ => CorpusFormat::Tsv,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRow {
    subject: String,
    relation: String,
    object: String,
    question: String,
    #[serde(default)]
    mention_span: Option<(usize, usize)>,
    #[serde(default)]
    subject_text: Option<String>,
    #[serde(default)]
    relation_text: Option<String>,
    #[serde(default)]
    object_text: Option<String>,
}

/// Readable text for a relation id such as `www.freebase.com/people/person/place_of_birth`.
pub fn relation_surface(id: &str) -> String {
    let trimmed = id
        .trim_start_matches("www.freebase.com/")
        .trim_start_matches("fb:");
    let text = trimmed
        .chars()
        .map(|c| if matches!(c, '/' | '_' | '.') { ' ' } else { c })
        .collect::<String>();
    let text = collapse_ws(&text);
    if text.is_empty() {
        id.to_string()
    } else {
        text
    }
}

pub fn ingest_corpus(path: &Path, format: CorpusFormat) -> Result<(Vec<Triple>, Vec<Question>)> {
    let content = std::fs::read_to_string(path)?;
    parse_corpus(&content, format)
}

/// Parses corpus rows. One question per row; triples are deduplicated by
/// their `(subject, relation, object)` id tuple, keeping the first surface texts.
pub fn parse_corpus(content: &str, format: CorpusFormat) -> Result<(Vec<Triple>, Vec<Question>)> {
    let mut triples = Vec::new();
    let mut index: HashMap<(String, String, String), usize> = HashMap::new();
    let mut questions = Vec::new();

    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (triple, text, span) = match format {
            CorpusFormat::Tsv => parse_tsv_row(raw, line)?,
            CorpusFormat::JsonLines => parse_json_row(raw, line)?,
        };
        let key = (
            triple.subject.id.clone(),
            triple.relation.id.clone(),
            triple.object.id.clone(),
        );
        // Later rows reuse the surface texts of the first occurrence.
        let slot = *index.entry(key).or_insert_with(|| {
            triples.push(triple);
            triples.len() - 1
        });
        let gold = triples[slot].clone();
        questions.push(Question {
            id: questions.len() as u32,
            text,
            gold,
            mention_span: span,
        });
    }
    if questions.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok((triples, questions))
}

fn nonempty(field: &str, name: &str, line: usize) -> Result<String> {
    let t = field.trim();
    if t.is_empty() {
        return Err(Error::Parse {
            line,
            msg: format!("empty {name} field"),
        });
    }
    Ok(t.to_string())
}

fn parse_tsv_row(raw: &str, line: usize) -> Result<(Triple, String, Option<Span>)> {
    let fields: Vec<&str> = raw.trim_end_matches('\r').split('\t').collect();
    if fields.len() != 4 {
        return Err(Error::Parse {
            line,
            msg: format!("expected 4 tab-separated fields, found {}", fields.len()),
        });
    }
    let subject = nonempty(fields[0], "subject", line)?;
    let relation = nonempty(fields[1], "relation", line)?;
    let object = nonempty(fields[2], "object", line)?;
    let question = collapse_ws(&nonempty(fields[3], "question", line)?);
    let triple = Triple {
        subject: Named::new(subject.clone(), subject),
        relation: Named::new(relation.clone(), relation_surface(&relation)),
        object: Named::new(object.clone(), object),
    };
    Ok((triple, question, None))
}

fn parse_json_row(raw: &str, line: usize) -> Result<(Triple, String, Option<Span>)> {
    let row: JsonRow = serde_json::from_str(raw).map_err(|e| Error::Parse {
        line,
        msg: e.to_string(),
    })?;
    let subject = nonempty(&row.subject, "subject", line)?;
    let relation = nonempty(&row.relation, "relation", line)?;
    let object = nonempty(&row.object, "object", line)?;
    let question = nonempty(&row.question, "question", line)?;
    let span = match row.mention_span {
        Some((start, end)) => {
            if start >= end || end > question.chars().count() {
                return Err(Error::Parse {
                    line,
                    msg: format!("mention_span [{start}, {end}) out of range"),
                });
            }
            Some(Span { start, end })
        }
        None => None,
    };
    // Spans index the text as given, so whitespace is only collapsed when no span is attached.
    let question = if span.is_some() {
        question
    } else {
        collapse_ws(&question)
    };
    let text_or = |t: Option<String>, fallback: &str| {
        t.map(|s| collapse_ws(&s))
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| fallback.to_string())
    };
    let triple = Triple {
        subject: Named::new(subject.clone(), text_or(row.subject_text, &subject)),
        relation: Named::new(
            relation.clone(),
            text_or(row.relation_text, &relation_surface(&relation)),
        ),
        object: Named::new(object.clone(), text_or(row.object_text, &object)),
    };
    Ok((triple, question, span))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_maps_fields() {
        let (t, q) = parse_corpus(
            "m.01\tpeople/person/place_of_birth\tm.02\twhere was X born\n",
            CorpusFormat::Tsv,
        )
        .unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].gold, t[0]);
        assert_eq!(t[0].relation.text, "people person place of birth");
        assert_eq!(q[0].text, "where was X born");
    }

    #[test]
    fn duplicate_rows_dedup_triples() {
        let row = "m.01\tr/a\tm.02\twhere was X born\n";
        let (t, q) = parse_corpus(&format!("{row}{row}"), CorpusFormat::Tsv).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(q.len(), 2);
        assert_ne!(q[0].id, q[1].id);
    }

    #[test]
    fn wrong_arity_names_line() {
        let err = parse_corpus("a\tb\tc\td\na\tb\tc\n", CorpusFormat::Tsv).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(
            parse_corpus("\n\n", CorpusFormat::Tsv),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn json_rows_with_span() {
        let row = r#"{"subject":"m.1","relation":"r/born","object":"m.2","question":"where was Obama born","mention_span":[10,15],"subject_text":"Obama"}"#;
        let (t, q) = parse_corpus(row, CorpusFormat::JsonLines).unwrap();
        assert_eq!(t[0].subject.text, "Obama");
        assert_eq!(q[0].mention_text().as_deref(), Some("Obama"));
    }

    #[test]
    fn json_span_out_of_range() {
        let row = r#"{"subject":"m.1","relation":"r","object":"m.2","question":"abc","mention_span":[1,9]}"#;
        assert!(matches!(
            parse_corpus(row, CorpusFormat::JsonLines),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
