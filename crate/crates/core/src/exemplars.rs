//! Exemplar selection: collaborative (boundary samples between similar
//! relations), herding (nearest to the relation mean) and random.

use std::collections::BTreeMap;

use rand::seq::IteratorRandom;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderParams, Session};
use crate::kbstream::Named;
use crate::training::{Exemplar, TrainingExample};
use crate::util::{cosine, rng_for, str_tag};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Collaborative,
    Herding,
    Random,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Collaborative => "collaborative",
            Strategy::Herding => "herding",
            Strategy::Random => "random",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collaborative" => Ok(Strategy::Collaborative),
            "herding" => Ok(Strategy::Herding),
            "random" => Ok(Strategy::Random),
            other => Err(Error::Config(format!("unknown strategy {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    /// Similar relations considered per relation.
    pub m: usize,
    /// Patterns taken per considered relation.
    pub n: usize,
    /// Per-relation count for herding and random. `None` matches the total
    /// count of the collaborative selection on the same data.
    pub budget: Option<usize>,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Collaborative,
            m: 5,
            n: 2,
            budget: None,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config("selection m and n must be at least 1".into()));
        }
        if self.budget == Some(0) {
            return Err(Error::Config("selection budget must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub r1: String,
    pub r3: String,
    pub question_id: u32,
    pub similarity: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub strategy: Option<Strategy>,
    pub phase: usize,
    /// Chosen question ids per relation, in pick order.
    pub per_relation: BTreeMap<String, Vec<u32>>,
    pub choices: Vec<Choice>,
    /// Picks dropped because the question was already chosen for its relation.
    pub duplicates: usize,
    pub budget: Option<usize>,
    /// Set when herding or random was matched to a collaborative total.
    pub matched_total: Option<usize>,
}

impl SelectionReport {
    pub fn total(&self) -> usize {
        self.per_relation.values().map(Vec::len).sum()
    }

    /// Per-relation average of the realized selection, rounded, at least 1.
    pub fn realized_budget(&self) -> usize {
        if self.per_relation.is_empty() {
            return 1;
        }
        ((self.total() as f64 / self.per_relation.len() as f64).round() as usize).max(1)
    }

    /// Spreads this selection's total over the same relations: every
    /// relation gets the floor of the average, the remainder goes one each
    /// to the first relations in id order.
    pub fn matched_quota(&self) -> BTreeMap<String, usize> {
        let n = self.per_relation.len().max(1);
        let (base, extra) = (self.total() / n, self.total() % n);
        self.per_relation
            .keys()
            .enumerate()
            .map(|(k, r)| (r.clone(), base + usize::from(k < extra)))
            .collect()
    }
}

/// Training examples grouped by gold relation id, each group sorted by question id.
fn by_relation(examples: &[TrainingExample]) -> BTreeMap<&str, Vec<&TrainingExample>> {
    let mut groups: BTreeMap<&str, Vec<&TrainingExample>> = BTreeMap::new();
    for ex in examples {
        groups.entry(ex.positive().relation.id.as_str()).or_default().push(ex);
    }
    for g in groups.values_mut() {
        g.sort_by_key(|e| e.question.id);
    }
    groups
}

fn to_exemplar(ex: &TrainingExample, phase: usize) -> Exemplar {
    Exemplar {
        question: ex.question.clone(),
        mention_pattern: ex.mention_pattern.clone(),
        positive: ex.positive().clone(),
        negatives: ex.negatives().cloned().collect(),
        source_phase: phase,
        labels: None,
    }
}

fn isolated(session: &mut Session, text: &str) -> Vec<f64> {
    let v = session.word_vector_isolated(text);
    session.value(v).to_vec()
}

/// Collaborative selection. For each relation `r1` of the phase, the `m`
/// relations most similar to it (among the phase's and the store's, `r1`
/// excluded; `r1` itself if there are none) each contribute the `n`
/// training patterns of `r1` most similar to them. Picks are deduplicated.
pub fn select_collaborative(
    examples: &[TrainingExample],
    store: &[Exemplar],
    params: &EncoderParams,
    config: &SelectionConfig,
    phase: usize,
) -> Result<(Vec<Exemplar>, SelectionReport)> {
    config.validate()?;
    let groups = by_relation(examples);
    let mut universe: BTreeMap<&str, &Named> = BTreeMap::new();
    for ex in examples {
        universe.insert(&ex.positive().relation.id, &ex.positive().relation);
    }
    for e in store {
        universe.insert(&e.positive.relation.id, &e.positive.relation);
    }

    let mut session = Session::new(params);
    let rel_vecs: BTreeMap<&str, Vec<f64>> = universe
        .iter()
        .map(|(id, named)| (*id, isolated(&mut session, &named.text)))
        .collect();

    let mut report = SelectionReport {
        strategy: Some(Strategy::Collaborative),
        phase,
        ..Default::default()
    };
    let mut out = Vec::new();
    for (r1, group) in &groups {
        let v1 = &rel_vecs[r1];
        let mut ranked: Vec<(f64, &str)> = rel_vecs
            .iter()
            .filter(|(id, _)| *id != r1)
            .map(|(id, v)| (cosine(v1, v), *id))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        let mut considered: Vec<&str> = ranked.iter().take(config.m).map(|x| x.1).collect();
        if considered.is_empty() {
            considered.push(r1);
        }

        let pattern_vecs: Vec<Vec<f64>> = group
            .iter()
            .map(|ex| isolated(&mut session, &ex.mention_pattern.pattern))
            .collect();
        let picked = report.per_relation.entry(r1.to_string()).or_default();
        for r3 in considered {
            let v3 = &rel_vecs[r3];
            let mut order: Vec<(f64, usize)> = pattern_vecs
                .iter()
                .enumerate()
                .map(|(k, v)| (cosine(v3, v), k))
                .collect();
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then(group[a.1].question.id.cmp(&group[b.1].question.id)));
            for &(sim, k) in order.iter().take(config.n) {
                let qid = group[k].question.id;
                report.choices.push(Choice {
                    r1: r1.to_string(),
                    r3: r3.to_string(),
                    question_id: qid,
                    similarity: sim,
                });
                if picked.contains(&qid) {
                    report.duplicates += 1;
                } else {
                    picked.push(qid);
                    out.push(to_exemplar(group[k], phase));
                }
            }
        }
    }
    Ok((out, report))
}

/// Herding: per relation, the `budget` patterns closest (cosine) to the
/// mean pattern vector, ties by question id.
pub fn select_herding(
    examples: &[TrainingExample],
    params: &EncoderParams,
    budget: usize,
    phase: usize,
) -> Result<(Vec<Exemplar>, SelectionReport)> {
    if budget == 0 {
        return Err(Error::Config("selection budget must be at least 1".into()));
    }
    Ok(herding_with(examples, params, |_| budget, Some(budget), phase))
}

fn herding_with(
    examples: &[TrainingExample],
    params: &EncoderParams,
    quota: impl Fn(&str) -> usize,
    budget: Option<usize>,
    phase: usize,
) -> (Vec<Exemplar>, SelectionReport) {
    let mut session = Session::new(params);
    let mut report = SelectionReport {
        strategy: Some(Strategy::Herding),
        phase,
        budget,
        ..Default::default()
    };
    let mut out = Vec::new();
    for (rel, group) in by_relation(examples) {
        let vecs: Vec<Vec<f64>> = group
            .iter()
            .map(|ex| isolated(&mut session, &ex.mention_pattern.pattern))
            .collect();
        let d = vecs[0].len();
        let mut mean = vec![0.0; d];
        for v in &vecs {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= vecs.len() as f64;
        }
        let mut order: Vec<(f64, usize)> = vecs.iter().enumerate().map(|(k, v)| (cosine(v, &mean), k)).collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let picked = report.per_relation.entry(rel.to_string()).or_default();
        for &(_, k) in order.iter().take(quota(rel)) {
            picked.push(group[k].question.id);
            out.push(to_exemplar(group[k], phase));
        }
    }
    (out, report)
}

/// Uniform sample without replacement of `budget` questions per relation.
/// The returned picks of each relation are in question id order.
pub fn select_random(
    examples: &[TrainingExample],
    budget: usize,
    seed: u64,
    phase: usize,
) -> Result<(Vec<Exemplar>, SelectionReport)> {
    if budget == 0 {
        return Err(Error::Config("selection budget must be at least 1".into()));
    }
    Ok(random_with(examples, |_| budget, Some(budget), seed, phase))
}

fn random_with(
    examples: &[TrainingExample],
    quota: impl Fn(&str) -> usize,
    budget: Option<usize>,
    seed: u64,
    phase: usize,
) -> (Vec<Exemplar>, SelectionReport) {
    let mut report = SelectionReport {
        strategy: Some(Strategy::Random),
        phase,
        budget,
        ..Default::default()
    };
    let mut out = Vec::new();
    for (rel, group) in by_relation(examples) {
        let mut rng = rng_for(seed, &[0x7a4d, phase as u64, str_tag(rel)]);
        let mut chosen = (0..group.len()).choose_multiple(&mut rng, quota(rel));
        chosen.sort_unstable();
        let picked = report.per_relation.entry(rel.to_string()).or_default();
        for k in chosen {
            picked.push(group[k].question.id);
            out.push(to_exemplar(group[k], phase));
        }
    }
    (out, report)
}

/// Runs the configured strategy. Herding and random without an explicit
/// budget first run collaborative selection and take the same total count.
pub fn select_exemplars(
    examples: &[TrainingExample],
    store: &[Exemplar],
    params: &EncoderParams,
    config: &SelectionConfig,
    phase: usize,
) -> Result<(Vec<Exemplar>, SelectionReport)> {
    config.validate()?;
    if config.strategy == Strategy::Collaborative {
        return select_collaborative(examples, store, params, config, phase);
    }
    if let Some(b) = config.budget {
        return match config.strategy {
            Strategy::Herding => select_herding(examples, params, b, phase),
            _ => select_random(examples, b, config.seed, phase),
        };
    }
    let reference = select_collaborative(examples, store, params, config, phase)?.1;
    let quota = reference.matched_quota();
    let lookup = |r: &str| quota.get(r).copied().unwrap_or(0);
    let (picked, mut report) = match config.strategy {
        Strategy::Herding => herding_with(examples, params, lookup, None, phase),
        _ => random_with(examples, lookup, None, config.seed, phase),
    };
    report.matched_total = Some(reference.total());
    Ok((picked, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode_word_attentive, EncoderConfig, Vocab};
    use crate::kbstream::{Question, Triple};
    use crate::pairgen::{Candidate, CandidateSet, MentionPattern};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example(qid: u32, rel: &str, pattern: &str) -> TrainingExample {
        let gold = Triple {
            subject: Named::new("e", "ent"),
            relation: Named::new(rel, rel.replace('/', " ")),
            object: Named::new("o", "o"),
        };
        let positive = Candidate {
            subject: gold.subject.clone(),
            relation: gold.relation.clone(),
        };
        let negative = Candidate {
            subject: Named::new("x", "other"),
            relation: gold.relation.clone(),
        };
        TrainingExample::new(
            Question {
                id: qid,
                text: pattern.replace("<e>", "ent"),
                gold,
                mention_span: None,
            },
            MentionPattern {
                mention: "ent".into(),
                pattern: pattern.into(),
            },
            CandidateSet {
                question_id: qid,
                candidates: vec![negative, positive],
                gold_index: Some(1),
            },
        )
        .unwrap()
    }

    const WORDS: [&str; 12] = [
        "what", "who", "is", "the", "born", "city", "wrote", "film", "river", "song", "team", "play",
    ];

    fn instance(rng: &mut ChaCha8Rng, n_rel: usize, per_rel: usize) -> Vec<TrainingExample> {
        let mut out = Vec::new();
        let mut qid = 0;
        for r in 0..n_rel {
            let rel = format!("dom{}/{}", r % 3, WORDS[rng.gen_range(0..WORDS.len())]);
            let rel = format!("{rel}{r}");
            for _ in 0..per_rel {
                let len = rng.gen_range(1..5);
                let mut toks: Vec<&str> = (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
                toks.insert(rng.gen_range(0..=toks.len()), "<e>");
                out.push(example(qid, &rel, &toks.join(" ")));
                qid += 1;
            }
        }
        out
    }

    fn params_for(examples: &[TrainingExample], seed: u64) -> EncoderParams {
        let mut vocab = Vocab::default();
        for ex in examples {
            vocab.extend_with(&ex.mention_pattern.pattern);
            vocab.extend_with(&ex.positive().relation.text);
        }
        let cfg = EncoderConfig {
            char_dim: 4,
            word_dim: 6,
            filters: 4,
            windows: vec![2, 3],
            init_range: 0.5,
        };
        EncoderParams::init(cfg, vocab, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    // Brute force: every cosine computed from scratch, selection rules applied literally.
    fn collaborative_oracle(examples: &[TrainingExample], params: &EncoderParams, m: usize, n: usize) -> Vec<u32> {
        let mut rels: Vec<(String, String)> = examples
            .iter()
            .map(|e| (e.positive().relation.id.clone(), e.positive().relation.text.clone()))
            .collect();
        rels.sort();
        rels.dedup();
        let vec = |t: &str| encode_word_attentive(t, None, params);
        let mut picks = Vec::new();
        for (r1, t1) in &rels {
            let v1 = vec(t1);
            let mut sims: Vec<(f64, &String)> = rels
                .iter()
                .filter(|(r, _)| r != r1)
                .map(|(r, t)| (cosine(&v1, &vec(t)), r))
                .collect();
            sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
            let mut top: Vec<&String> = sims.iter().take(m).map(|x| x.1).collect();
            if top.is_empty() {
                top.push(r1);
            }
            let mut mine: Vec<&TrainingExample> =
                examples.iter().filter(|e| &e.positive().relation.id == r1).collect();
            mine.sort_by_key(|e| e.question.id);
            let mut chosen: Vec<u32> = Vec::new();
            for r3 in top {
                let t3 = &rels.iter().find(|(r, _)| r == r3).unwrap().1;
                let v3 = vec(t3);
                let mut s: Vec<(f64, u32)> = mine
                    .iter()
                    .map(|e| (cosine(&v3, &vec(&e.mention_pattern.pattern)), e.question.id))
                    .collect();
                s.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                for (_, q) in s.into_iter().take(n) {
                    if !chosen.contains(&q) {
                        chosen.push(q);
                    }
                }
            }
            picks.extend(chosen);
        }
        picks
    }

    fn herding_oracle(examples: &[TrainingExample], params: &EncoderParams, budget: usize) -> Vec<u32> {
        let mut rels: Vec<&str> = examples.iter().map(|e| e.positive().relation.id.as_str()).collect();
        rels.sort();
        rels.dedup();
        let mut picks = Vec::new();
        for r in rels {
            let mut mine: Vec<&TrainingExample> = examples.iter().filter(|e| e.positive().relation.id == r).collect();
            mine.sort_by_key(|e| e.question.id);
            let vs: Vec<Vec<f64>> = mine
                .iter()
                .map(|e| encode_word_attentive(&e.mention_pattern.pattern, None, params))
                .collect();
            let mean: Vec<f64> = (0..vs[0].len())
                .map(|k| vs.iter().map(|v| v[k]).sum::<f64>() / vs.len() as f64)
                .collect();
            let mut s: Vec<(f64, u32)> = vs.iter().zip(&mine).map(|(v, e)| (cosine(v, &mean), e.question.id)).collect();
            s.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            picks.extend(s.into_iter().take(budget).map(|x| x.1));
        }
        picks
    }

    fn ids(ex: &[Exemplar]) -> Vec<u32> {
        ex.iter().map(|e| e.question.id).collect()
    }

    #[test]
    fn collaborative_matches_oracle_six_relations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let examples = instance(&mut rng, 6, 4);
        let params = params_for(&examples, 11);
        let cfg = SelectionConfig {
            m: 2,
            n: 1,
            ..Default::default()
        };
        let (sel, report) = select_collaborative(&examples, &[], &params, &cfg, 0).unwrap();
        assert_eq!(ids(&sel), collaborative_oracle(&examples, &params, 2, 1));
        assert!(sel.len() <= 6 * 2);
        for e in &sel {
            assert!(report.per_relation[e.relation_id()].contains(&e.question.id));
        }
    }

    #[test]
    fn collaborative_single_relation_falls_back_to_itself() {
        let examples = vec![
            example(0, "a/b", "who <e> born"),
            example(1, "a/b", "what city <e>"),
            example(2, "a/b", "<e> wrote song"),
        ];
        let params = params_for(&examples, 1);
        let cfg = SelectionConfig {
            m: 1,
            n: 2,
            ..Default::default()
        };
        let (sel, report) = select_collaborative(&examples, &[], &params, &cfg, 0).unwrap();
        assert_eq!(sel.len(), 2);
        assert!(report.choices.iter().all(|c| c.r3 == "a/b"));
        assert_eq!(ids(&sel), collaborative_oracle(&examples, &params, 1, 2));
    }

    #[test]
    fn store_relations_are_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let old = instance(&mut rng, 3, 2);
        let params = params_for(&old, 2);
        let store: Vec<Exemplar> = old.iter().map(|e| to_exemplar(e, 0)).collect();
        let new = vec![example(100, "z/y", "what <e> is"), example(101, "z/y", "who <e>")];
        let cfg = SelectionConfig {
            m: 5,
            n: 1,
            ..Default::default()
        };
        let (_, report) = select_collaborative(&new, &store, &params, &cfg, 1).unwrap();
        let r3s: Vec<&str> = report.choices.iter().map(|c| c.r3.as_str()).collect();
        assert_eq!(r3s.len(), 3);
        assert!(!r3s.contains(&"z/y"));
    }

    #[test]
    fn randomized_oracle_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..20 {
            let n_rel = rng.gen_range(1..8);
            let per = rng.gen_range(1..7);
            let examples = instance(&mut rng, n_rel, per);
            let params = params_for(&examples, case);
            let (m, n) = (rng.gen_range(1..4), rng.gen_range(1..4));
            let cfg = SelectionConfig {
                m,
                n,
                ..Default::default()
            };
            let (sel, _) = select_collaborative(&examples, &[], &params, &cfg, 0).unwrap();
            assert_eq!(ids(&sel), collaborative_oracle(&examples, &params, m, n));
            let budget = rng.gen_range(1..5);
            let (h, _) = select_herding(&examples, &params, budget, 0).unwrap();
            assert_eq!(ids(&h), herding_oracle(&examples, &params, budget));
        }
    }

    #[test]
    fn herding_edge_cases() {
        let single = vec![example(5, "a/b", "who <e>")];
        let params = params_for(&single, 0);
        let (h, _) = select_herding(&single, &params, 3, 0).unwrap();
        assert_eq!(ids(&h), vec![5]);

        let same: Vec<TrainingExample> = (0..5).map(|q| example(10 - q, "a/b", "who <e> is")).collect();
        let params = params_for(&same, 0);
        let (h, _) = select_herding(&same, &params, 2, 0).unwrap();
        assert_eq!(ids(&h), vec![6, 7]);
    }

    #[test]
    fn random_selection_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let examples = instance(&mut rng, 10, 10);
        let (a, _) = select_random(&examples, 2, 5, 0).unwrap();
        let (b, _) = select_random(&examples, 2, 5, 0).unwrap();
        assert_eq!(ids(&a), ids(&b));
        assert_eq!(a.len(), 20);
        let (all, _) = select_random(&examples, 50, 5, 0).unwrap();
        assert_eq!(all.len(), 100);

        // Each relation's pick is a uniform 2-subset of 10: collision chance
        // 1/45 per relation, so two seeds agree everywhere with (1/45)^10.
        let p_identical = (1.0f64 / 45.0).powi(10);
        assert!(1.0 - p_identical > 0.99);
        let mut counts: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        let trials = 9000;
        for s in 0..trials {
            let (sel, report) = select_random(&examples[..10], 2, s, 0).unwrap();
            assert_eq!(sel.len(), 2);
            *counts.entry(report.per_relation.values().next().unwrap().clone()).or_default() += 1;
        }
        assert_eq!(counts.len(), 45);
        let expected = trials as f64 / 45.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 44 degrees of freedom, 0.999 quantile is about 78.7.
        assert!(chi2 < 78.7, "chi2 {chi2}");
        let collisions = (0..200)
            .filter(|&s| ids(&select_random(&examples, 2, s, 0).unwrap().0) == ids(&select_random(&examples, 2, s + 1000, 0).unwrap().0))
            .count();
        assert_eq!(collisions, 0);
    }

    #[test]
    fn budget_matching() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let examples = instance(&mut rng, 5, 8);
        let params = params_for(&examples, 4);
        let cfg = SelectionConfig::default();
        let (c, rep) = select_exemplars(&examples, &[], &params, &cfg, 0).unwrap();
        assert_eq!(rep.realized_budget(), ((c.len() as f64) / 5.0).round() as usize);
        let quota = rep.matched_quota();
        assert_eq!(quota.values().sum::<usize>(), c.len());
        let (lo, hi) = (quota.values().min().unwrap(), quota.values().max().unwrap());
        assert!(hi - lo <= 1);
        for strategy in [Strategy::Herding, Strategy::Random] {
            let cfg = SelectionConfig {
                strategy,
                ..Default::default()
            };
            let (s, rep) = select_exemplars(&examples, &[], &params, &cfg, 0).unwrap();
            assert_eq!(rep.matched_total, Some(c.len()));
            assert_eq!(s.len(), c.len());
            for (r, ids) in &rep.per_relation {
                assert_eq!(ids.len(), quota[r]);
            }
        }
        let fixed = SelectionConfig {
            strategy: Strategy::Random,
            budget: Some(3),
            ..Default::default()
        };
        assert_eq!(select_exemplars(&examples, &[], &params, &fixed, 0).unwrap().0.len(), 15);
    }
}
