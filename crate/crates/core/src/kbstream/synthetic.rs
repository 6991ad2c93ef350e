use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Named, Question, Span, Triple};
use crate::util::rng_for;
use crate::{Error, Result};

const SLOT: &str = "<e>";
const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr", "st", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const WH_WORDS: &[&str] = &["what", "which", "who", "where", "when", "how"];

/// Desk-scale corpus with relations grouped into clusters that share part of
/// their question vocabulary, so that near-duplicate relations exist.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_relations: usize,
    pub n_entities: usize,
    pub questions_per_relation: usize,
    /// Question templates per relation.
    pub templates: usize,
    /// Relations per semantic cluster.
    pub cluster_size: usize,
    /// Size of each relation's template vocabulary.
    pub words_per_relation: usize,
    /// Fraction of a relation's template vocabulary shared with its cluster.
    pub shared_fraction: f64,
    /// Content words per template, excluding the subject slot.
    pub template_len: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_relations: 50,
            n_entities: 250,
            questions_per_relation: 50,
            templates: 3,
            cluster_size: 5,
            words_per_relation: 6,
            shared_fraction: 0.5,
            template_len: 3,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn shared_words(&self) -> usize {
        (self.shared_fraction * self.words_per_relation as f64).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.questions_per_relation < 2 {
            return Err(Error::Config(
                "questions_per_relation must be at least 2 for a train/test split".into(),
            ));
        }
        if self.n_relations == 0 || self.n_entities == 0 || self.templates == 0 {
            return Err(Error::Config("n_relations, n_entities and templates must be positive".into()));
        }
        if self.cluster_size == 0 || self.words_per_relation == 0 || self.template_len == 0 {
            return Err(Error::Config("cluster_size, words_per_relation and template_len must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.shared_fraction) {
            return Err(Error::Config("shared_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

struct WordMint<'r, R: Rng> {
    rng: &'r mut R,
    used: HashSet<String>,
}

impl<R: Rng> WordMint<'_, R> {
    fn fresh(&mut self, syllables: usize) -> String {
        loop {
            let w: String = (0..syllables)
                .map(|_| {
                    format!(
                        "{}{}",
                        ONSETS.choose(self.rng).unwrap(),
                        VOWELS.choose(self.rng).unwrap()
                    )
                })
                .collect();
            if !WH_WORDS.contains(&w.as_str()) && self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

struct RelationSpec {
    named: Named,
    templates: Vec<Vec<String>>,
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(Vec<Triple>, Vec<Question>)> {
    config.validate()?;
    let mut rng = rng_for(config.seed, &[0x5717]);
    let mut mint = WordMint {
        rng: &mut rng,
        used: HashSet::new(),
    };

    let entities: Vec<Named> = (0..config.n_entities)
        .map(|k| {
            let name = format!("{} {}", capitalize(&mint.fresh(2)), capitalize(&mint.fresh(2)));
            Named::new(format!("e{k:05}"), name)
        })
        .collect();

    let n_shared = config.shared_words().min(config.words_per_relation);
    let n_clusters = config.n_relations.div_ceil(config.cluster_size);
    let mut relations = Vec::with_capacity(config.n_relations);
    for c in 0..n_clusters {
        let domain = mint.fresh(2);
        let shared: Vec<String> = (0..n_shared).map(|_| mint.fresh(2)).collect();
        let members = config.cluster_size.min(config.n_relations - c * config.cluster_size);
        for _ in 0..members {
            let prop = mint.fresh(3);
            let mut vocab = shared.clone();
            vocab.extend((n_shared..config.words_per_relation).map(|_| mint.fresh(2)));
            let templates = (0..config.templates)
                .map(|_| {
                    let mut words: Vec<String> = (0..config.template_len)
                        .map(|_| vocab.choose(mint.rng).unwrap().clone())
                        .collect();
                    let slot = mint.rng.gen_range(0..=words.len());
                    words.insert(slot, SLOT.to_string());
                    words.insert(0, WH_WORDS.choose(mint.rng).unwrap().to_string());
                    words
                })
                .collect();
            relations.push(RelationSpec {
                named: Named::new(format!("{domain}/{prop}"), format!("{domain} {prop}")),
                templates,
            });
        }
    }

    let mut triples = Vec::new();
    let mut seen = HashSet::new();
    let mut questions = Vec::new();
    for rel in &relations {
        for _ in 0..config.questions_per_relation {
            let subject = entities.choose(&mut rng).unwrap().clone();
            let object = entities.choose(&mut rng).unwrap().clone();
            let template = rel.templates.choose(&mut rng).unwrap();
            let triple = Triple {
                subject,
                relation: rel.named.clone(),
                object,
            };
            let key = (triple.subject.id.clone(), triple.object.id.clone(), rel.named.id.clone());
            if seen.insert(key) {
                triples.push(triple.clone());
            }
            let (text, span) = fill(template, &triple.subject.text);
            questions.push(Question {
                id: questions.len() as u32,
                text,
                gold: triple,
                mention_span: Some(span),
            });
        }
    }
    Ok((triples, questions))
}

fn fill(template: &[String], mention: &str) -> (String, Span) {
    let mut text = String::new();
    let mut span = Span { start: 0, end: 0 };
    for (k, w) in template.iter().enumerate() {
        if k > 0 {
            text.push(' ');
        }
        if w == SLOT {
            let start = text.chars().count();
            text.push_str(mention);
            span = Span {
                start,
                end: start + mention.chars().count(),
            };
        } else {
            text.push_str(w);
        }
    }
    (text, span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, HashMap};

    #[test]
    fn counts_and_spans() {
        let cfg = SyntheticConfig {
            n_relations: 10,
            questions_per_relation: 5,
            ..SyntheticConfig::default()
        };
        let (triples, qs) = generate_synthetic(&cfg).unwrap();
        assert_eq!(qs.len(), 50);
        for q in &qs {
            assert_eq!(q.mention_text().unwrap(), q.gold.subject.text);
            assert!(triples.iter().any(|t| t.key() == q.gold.key()));
        }
    }

    #[test]
    fn cluster_vocabularies_overlap() {
        let cfg = SyntheticConfig {
            n_relations: 10,
            questions_per_relation: 40,
            templates: 40,
            ..SyntheticConfig::default()
        };
        let (_, qs) = generate_synthetic(&cfg).unwrap();
        let mut vocab: HashMap<String, BTreeSet<String>> = HashMap::new();
        for q in &qs {
            let mention = q.mention_text().unwrap();
            let rest = q.text.replace(&mention, " ");
            vocab
                .entry(q.gold.relation.id.clone())
                .or_default()
                .extend(rest.split_whitespace().skip(1).map(String::from));
        }
        let ids: Vec<&String> = {
            let mut v: Vec<_> = vocab.keys().collect();
            v.sort();
            v
        };
        let domain = |id: &str| id.split('/').next().unwrap().to_string();
        let mut same = 0;
        for a in &ids {
            for b in &ids {
                if a >= b {
                    continue;
                }
                let inter = vocab[*a].intersection(&vocab[*b]).count();
                if domain(a) == domain(b) {
                    same += 1;
                    assert_eq!(inter, cfg.shared_words(), "{a} {b}");
                } else {
                    assert_eq!(inter, 0, "{a} {b}");
                }
            }
        }
        assert!(same > 0);
    }

    #[test]
    fn seed_changes_content_not_counts() {
        let a = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let b = generate_synthetic(&SyntheticConfig {
            seed: 1,
            ..SyntheticConfig::default()
        })
        .unwrap();
        assert_eq!(a.1.len(), b.1.len());
        assert_ne!(a.1[0].text, b.1[0].text);
        assert_eq!(a, generate_synthetic(&SyntheticConfig::default()).unwrap());
    }

    #[test]
    fn too_few_questions() {
        let cfg = SyntheticConfig {
            questions_per_relation: 1,
            ..SyntheticConfig::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }
}
