use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::io::corpus_digest;
use super::{PhaseDataset, PhaseFiles, Question, StreamManifest, Triple};
use crate::util::rng_for;
use crate::{Error, Result};

const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) || self.train <= 0.0 {
            return Err(Error::Config(format!("bad split ratios {self:?}")));
        }
        if ((self.train + self.valid + self.test) - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split ratios must sum to 1".into()));
        }
        Ok(())
    }
}

/// Splits relation types into `phases` groups and builds the cumulative
/// fact sets and per-phase question splits.
pub fn build_stream(
    triples: &[Triple],
    questions: &[Question],
    phases: usize,
    seed: u64,
    ratios: SplitRatios,
) -> Result<(Vec<PhaseDataset>, StreamManifest)> {
    ratios.validate()?;
    if phases < 2 {
        return Err(Error::InvalidSplit(format!("need at least 2 phases, got {phases}")));
    }
    let mut relations: Vec<&str> = triples
        .iter()
        .map(|t| t.relation.id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if phases > relations.len() {
        return Err(Error::InvalidSplit(format!(
            "{phases} phases but only {} relation types",
            relations.len()
        )));
    }
    let known: HashSet<&str> = relations.iter().copied().collect();
    if let Some(q) = questions.iter().find(|q| !known.contains(q.relation_id())) {
        return Err(Error::InvalidSplit(format!(
            "question {} uses relation {} that has no triple",
            q.id,
            q.relation_id()
        )));
    }

    relations.shuffle(&mut rng_for(seed, &[0x5eed]));

    // Near-equal chunks; the remainder goes to the earliest phases.
    let base = relations.len() / phases;
    let extra = relations.len() % phases;
    let mut phase_of: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<&str>> = Vec::with_capacity(phases);
    let mut cursor = 0;
    for i in 0..phases {
        let size = base + usize::from(i < extra);
        let chunk = relations[cursor..cursor + size].to_vec();
        for r in &chunk {
            phase_of.insert(r, i);
        }
        groups.push(chunk);
        cursor += size;
    }

    let mut datasets = Vec::with_capacity(phases);
    for (i, group) in groups.iter().enumerate() {
        let facts: Vec<Triple> = triples
            .iter()
            .filter(|t| phase_of[t.relation.id.as_str()] <= i)
            .cloned()
            .collect();
        let phase_questions: Vec<&Question> = questions
            .iter()
            .filter(|q| phase_of[q.relation_id()] == i)
            .collect();
        let (train, valid, test) =
            stratified_split(&phase_questions, group, ratios, &mut rng_for(seed, &[0x5917, i as u64]));
        datasets.push(PhaseDataset {
            phase: i,
            facts,
            relations_new: group.iter().map(|r| r.to_string()).collect(),
            train,
            valid,
            test,
        });
    }

    let manifest = StreamManifest {
        version: MANIFEST_VERSION,
        phases,
        seed,
        ratios,
        corpus_sha256: corpus_digest(triples, questions),
        files: datasets
            .iter()
            .map(|d| PhaseFiles {
                phase: d.phase,
                questions: format!("phase_{}.jsonl", d.phase),
                facts: format!("facts_{}.jsonl", d.phase),
                relations_new: d.relations_new.iter().cloned().collect(),
            })
            .collect(),
    };
    Ok((datasets, manifest))
}

/// Rounds `total * share` for each share so the parts sum to `total`
/// (largest remainder, ties to the earlier part).
fn apportion(total: usize, shares: [f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut out = [0usize; 3];
    for k in 0..3 {
        out[k] = raw[k].floor() as usize;
    }
    let mut left = total - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[k] += 1;
        left -= 1;
    }
    out
}

struct Bucket<'a> {
    questions: Vec<&'a Question>,
    valid: usize,
    test: usize,
    /// Buckets for a single relation keep at least one training question.
    min_train: usize,
}

impl Bucket<'_> {
    fn train(&self) -> usize {
        self.questions.len() - self.valid - self.test
    }
}

/// Per-relation split for relations with at least 3 questions; relations with
/// fewer are pooled and split together. Phase totals are exact to rounding.
fn stratified_split(
    questions: &[&Question],
    relation_order: &[&str],
    ratios: SplitRatios,
    rng: &mut impl rand::Rng,
) -> (Vec<Question>, Vec<Question>, Vec<Question>) {
    let mut by_relation: HashMap<&str, Vec<&Question>> = HashMap::new();
    for q in questions {
        by_relation.entry(q.relation_id()).or_default().push(q);
    }
    let mut buckets: Vec<Bucket> = Vec::new();
    let mut pool: Vec<&Question> = Vec::new();
    for r in relation_order {
        let Some(mut qs) = by_relation.remove(r) else {
            continue;
        };
        qs.shuffle(rng);
        if qs.len() >= 3 {
            buckets.push(Bucket {
                questions: qs,
                valid: 0,
                test: 0,
                min_train: 1,
            });
        } else {
            pool.extend(qs);
        }
    }
    if !pool.is_empty() {
        pool.shuffle(rng);
        buckets.push(Bucket {
            questions: pool,
            valid: 0,
            test: 0,
            min_train: 0,
        });
    }

    let total: usize = buckets.iter().map(|b| b.questions.len()).sum();
    let [_, target_valid, target_test] = apportion(total, [ratios.train, ratios.valid, ratios.test]);

    for b in &mut buckets {
        let n = b.questions.len() as f64;
        b.valid = (n * ratios.valid).floor() as usize;
        b.test = (n * ratios.test).floor() as usize;
        while b.train() < b.min_train && (b.valid > 0 || b.test > 0) {
            if b.test >= b.valid { b.test -= 1 } else { b.valid -= 1 }
        }
    }

    // Hand out the remaining valid/test slots by largest fractional remainder.
    let frac = |b: &Bucket, share: f64| {
        let x = b.questions.len() as f64 * share;
        x - x.floor()
    };
    for (share, is_valid) in [(ratios.valid, true), (ratios.test, false)] {
        let target = if is_valid { target_valid } else { target_test };
        let mut order: Vec<usize> = (0..buckets.len()).collect();
        order.sort_by(|&a, &b| {
            frac(&buckets[b], share)
                .partial_cmp(&frac(&buckets[a], share))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut assigned: usize = buckets
            .iter()
            .map(|b| if is_valid { b.valid } else { b.test })
            .sum();
        while assigned < target {
            let mut progressed = false;
            for &k in &order {
                if assigned >= target {
                    break;
                }
                let b = &mut buckets[k];
                if b.train() > b.min_train {
                    if is_valid { b.valid += 1 } else { b.test += 1 }
                    assigned += 1;
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
    }

    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for b in &buckets {
        let n_train = b.train();
        for (k, q) in b.questions.iter().enumerate() {
            let q = (*q).clone();
            if k < n_train {
                train.push(q);
            } else if k < n_train + b.valid {
                valid.push(q);
            } else {
                test.push(q);
            }
        }
    }
    (train, valid, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kbstream::{Named, Question};

    fn triple(s: &str, r: &str) -> Triple {
        Triple {
            subject: Named::new(s, s),
            relation: Named::new(r, r),
            object: Named::new("o", "o"),
        }
    }

    fn corpus(relations: &[&str], per_relation: usize) -> (Vec<Triple>, Vec<Question>) {
        let mut triples = Vec::new();
        let mut questions = Vec::new();
        for r in relations {
            for k in 0..per_relation {
                let t = triple(&format!("e{k}"), r);
                questions.push(Question {
                    id: questions.len() as u32,
                    text: format!("what is {r} of e{k}"),
                    gold: t.clone(),
                    mention_span: None,
                });
                triples.push(t);
            }
        }
        (triples, questions)
    }

    #[test]
    fn two_phases_four_relations() {
        let (t, q) = corpus(&["a", "b", "c", "d"], 5);
        let (ds, _) = build_stream(&t, &q, 2, 11, SplitRatios::default()).unwrap();
        assert_eq!(ds[0].fact_relations().len(), 2);
        assert_eq!(ds[1].fact_relations().len(), 4);
        for f in &ds[0].facts {
            assert!(ds[1].facts.contains(f));
        }
        assert!(ds[0].relations_new.is_disjoint(&ds[1].relations_new));
    }

    #[test]
    fn too_many_phases() {
        let (t, q) = corpus(&["a", "b"], 3);
        assert!(matches!(
            build_stream(&t, &q, 3, 0, SplitRatios::default()),
            Err(Error::InvalidSplit(_))
        ));
        assert!(matches!(
            build_stream(&t, &q, 1, 0, SplitRatios::default()),
            Err(Error::InvalidSplit(_))
        ));
    }

    #[test]
    fn deterministic_under_seed() {
        let (t, q) = corpus(&["a", "b", "c", "d", "e"], 7);
        let a = build_stream(&t, &q, 2, 3, SplitRatios::default()).unwrap();
        let b = build_stream(&t, &q, 2, 3, SplitRatios::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_vec(&a.1).unwrap(),
            serde_json::to_vec(&b.1).unwrap()
        );
    }

    #[test]
    fn relation_without_questions_still_enters_facts() {
        let (mut t, q) = corpus(&["a", "b", "c"], 4);
        t.push(triple("e0", "silent"));
        let (ds, _) = build_stream(&t, &q, 2, 5, SplitRatios::default()).unwrap();
        assert!(ds[1].fact_relations().contains("silent"));
        let holder = ds.iter().find(|d| d.relations_new.contains("silent")).unwrap();
        assert!(!holder.question_relations().contains("silent"));
    }

    #[test]
    fn remainder_goes_to_earliest_phases() {
        let (t, q) = corpus(&["a", "b", "c", "d", "e", "f", "g"], 1);
        let (ds, _) = build_stream(&t, &q, 3, 1, SplitRatios::default()).unwrap();
        let sizes: Vec<usize> = ds.iter().map(|d| d.relations_new.len()).collect();
        assert_eq!(sizes, vec![3, 2, 2]);
    }

    #[test]
    fn apportion_sums() {
        assert_eq!(apportion(10, [0.8, 0.1, 0.1]), [8, 1, 1]);
        assert_eq!(apportion(7, [0.8, 0.1, 0.1]).iter().sum::<usize>(), 7);
    }

    #[test]
    fn small_relations_pool_and_large_keep_train() {
        let (mut t, mut q) = corpus(&["a", "b", "c", "d"], 3);
        let (t2, q2) = corpus(&["x", "y"], 2);
        let offset = q.len() as u32;
        t.extend(t2);
        q.extend(q2.into_iter().map(|mut x| {
            x.id += offset;
            x
        }));
        let (ds, _) = build_stream(&t, &q, 2, 9, SplitRatios::default()).unwrap();
        for d in &ds {
            let n = d.question_count();
            let v = d.valid.len() as f64;
            assert!((v - 0.1 * n as f64).abs() <= 1.0, "{v} vs {n}");
            let train_rel: BTreeSet<&str> = d.train.iter().map(Question::relation_id).collect();
            for r in d.question_relations() {
                let count = d
                    .train
                    .iter()
                    .chain(&d.valid)
                    .chain(&d.test)
                    .filter(|x| x.relation_id() == r)
                    .count();
                if count >= 3 {
                    assert!(train_rel.contains(r));
                }
            }
        }
    }
}
