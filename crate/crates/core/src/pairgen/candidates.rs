use std::collections::{BTreeMap, HashSet};

use rand::seq::{IteratorRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{Candidate, CandidateSet, MentionPattern, Polarity, TrainingPair};
use crate::kbstream::{Named, Question, Triple};
use crate::util::{normalize_text, rng_for};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfig {
    /// Entities kept from the string-similarity linker.
    pub k_entities: usize,
    /// Synthetic `(entity, other relation)` pairs per linked entity.
    pub n_other_relations: usize,
    /// Facts sampled uniformly from the whole KB.
    pub n_random: usize,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self {
            k_entities: 20,
            n_other_relations: 5,
            n_random: 5,
        }
    }
}

struct EntityEntry {
    named: Named,
    normalized: String,
    relations: Vec<Named>,
}

/// Lookup structures over one phase's fact set `F_i`.
pub struct KbIndex {
    entities: Vec<EntityEntry>,
    relations: Vec<Named>,
    facts: Vec<(Named, Named)>,
}

impl KbIndex {
    pub fn new(facts: &[Triple]) -> Self {
        let mut by_subject: BTreeMap<&str, (Named, Vec<Named>, HashSet<&str>)> = BTreeMap::new();
        let mut relations: BTreeMap<&str, Named> = BTreeMap::new();
        for t in facts {
            let entry = by_subject
                .entry(&t.subject.id)
                .or_insert_with(|| (t.subject.clone(), Vec::new(), HashSet::new()));
            if entry.2.insert(&t.relation.id) {
                entry.1.push(t.relation.clone());
            }
            relations.entry(&t.relation.id).or_insert_with(|| t.relation.clone());
        }
        Self {
            entities: by_subject
                .into_values()
                .map(|(named, relations, _)| EntityEntry {
                    normalized: normalize_text(&named.text),
                    named,
                    relations,
                })
                .collect(),
            relations: relations.into_values().collect(),
            facts: facts
                .iter()
                .map(|t| (t.subject.clone(), t.relation.clone()))
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn relations(&self) -> &[Named] {
        &self.relations
    }

    pub fn entity_surfaces(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(|e| e.named.text.as_str())
    }

    /// Subjects ranked by normalized edit-distance similarity to `mention`,
    /// ties broken by entity id.
    pub fn link(&self, mention: &str, k: usize) -> Vec<usize> {
        let m = normalize_text(mention);
        let mut scored: Vec<(f64, usize)> = self
            .entities
            .iter()
            .enumerate()
            .map(|(i, e)| (strsim::normalized_levenshtein(&m, &e.normalized), i))
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        scored.into_iter().take(k).map(|(_, i)| i).collect()
    }
}

/// Builds the candidate `(subject, relation)` set of one question against
/// the fact set indexed by `kb`. With `insert_gold` the gold pair is added if
/// the linker missed it (training); evaluation leaves it out.
pub fn generate_candidates(
    question: &Question,
    mention: &str,
    kb: &KbIndex,
    config: &CandidateConfig,
    seed: u64,
    insert_gold: bool,
) -> Result<CandidateSet> {
    if kb.is_empty() {
        return Err(Error::EmptyKb);
    }
    let mut rng = rng_for(seed, &[u64::from(question.id)]);
    let mut out: Vec<Candidate> = Vec::new();

    for idx in kb.link(mention, config.k_entities) {
        let entity = &kb.entities[idx];
        for r in &entity.relations {
            out.push(Candidate {
                subject: entity.named.clone(),
                relation: r.clone(),
            });
        }
        if config.n_other_relations > 0 {
            let own: HashSet<&str> = entity.relations.iter().map(|r| r.id.as_str()).collect();
            let others = kb
                .relations
                .iter()
                .filter(|r| !own.contains(r.id.as_str()))
                .choose_multiple(&mut rng, config.n_other_relations);
            for r in others {
                out.push(Candidate {
                    subject: entity.named.clone(),
                    relation: r.clone(),
                });
            }
        }
    }
    for (s, r) in kb.facts.choose_multiple(&mut rng, config.n_random) {
        out.push(Candidate {
            subject: s.clone(),
            relation: r.clone(),
        });
    }
    let gold_key = (question.gold.subject.id.as_str(), question.gold.relation.id.as_str());
    if insert_gold && !out.iter().any(|c| c.key() == gold_key) {
        out.push(Candidate {
            subject: question.gold.subject.clone(),
            relation: question.gold.relation.clone(),
        });
    }

    let mut seen = HashSet::new();
    let mut candidates: Vec<Candidate> = out
        .into_iter()
        .filter(|c| seen.insert((c.subject.id.clone(), c.relation.id.clone())))
        .collect();
    candidates.shuffle(&mut rng);
    let gold_index = candidates.iter().position(|c| c.key() == gold_key);
    Ok(CandidateSet {
        question_id: question.id,
        candidates,
        gold_index,
    })
}

/// One positive pair (the gold candidate) and one negative per other candidate.
pub fn make_pairs(mp: &MentionPattern, set: &CandidateSet) -> Result<(TrainingPair, Vec<TrainingPair>)> {
    let gold = set.gold_index.ok_or(Error::NoGold(set.question_id))?;
    let positive = TrainingPair::new(mp, &set.candidates[gold], Polarity::Positive);
    let negatives = set
        .candidates
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != gold)
        .map(|(_, c)| TrainingPair::new(mp, c, Polarity::Negative))
        .collect();
    Ok((positive, negatives))
}
