//! Accuracy, the forgetting matrix, resource counters and paired
//! significance testing.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderParams;
use crate::pairgen::{Candidate, CandidateSet, MentionPattern};
use crate::training::{Mode, Scorer};
use crate::util::rng_for;
use crate::{Error, Result};

/// A question ready to be ranked: its mention/pattern and candidate set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub mention_pattern: MentionPattern,
    pub candidates: CandidateSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub phase: usize,
    pub question_id: u32,
    /// Index of the test set the question belongs to.
    pub test_set: usize,
    /// Candidate indices ordered by descending score, ties by index.
    pub ranking: Vec<usize>,
    pub scores: Vec<f64>,
    pub predicted: Option<Candidate>,
    pub gold_index: Option<usize>,
    pub correct: bool,
}

const CHUNK: usize = 32;

/// Scores and ranks every item. A question whose candidate set lacks the
/// gold pair, or has no candidates, counts as wrong.
pub fn predict(params: &EncoderParams, items: &[EvalItem], phase: usize, test_set: usize) -> Vec<PredictionRecord> {
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(CHUNK) {
        let mut scorer = Scorer::new(params);
        for item in chunk {
            let mp = &item.mention_pattern;
            let scores: Vec<f64> = item
                .candidates
                .candidates
                .iter()
                .map(|c| {
                    let n = scorer.score_texts(&mp.mention, &mp.pattern, &c.subject.text, &c.relation.text);
                    scorer.scalar(n)
                })
                .collect();
            let mut ranking: Vec<usize> = (0..scores.len()).collect();
            ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let top = ranking.first().copied();
            out.push(PredictionRecord {
                phase,
                question_id: item.candidates.question_id,
                test_set,
                predicted: top.map(|i| item.candidates.candidates[i].clone()),
                correct: top.is_some() && top == item.candidates.gold_index,
                gold_index: item.candidates.gold_index,
                ranking,
                scores,
            });
        }
    }
    out
}

/// Fraction of correctly ranked items; 0 for an empty slice.
pub fn accuracy(params: &EncoderParams, items: &[EvalItem]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let correct = predict(params, items, 0, 0).iter().filter(|p| p.correct).count();
    correct as f64 / items.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseEval {
    /// Accuracy over the union of all test sets passed in.
    pub accuracy: f64,
    /// Accuracy per test set, one forgetting-matrix row.
    pub row: Vec<f64>,
    pub sizes: Vec<usize>,
    pub predictions: Vec<PredictionRecord>,
}

/// Evaluates `params` on `Test_0..Test_i`, each item list already built
/// against the knowledge base of the current phase.
pub fn evaluate_phase(params: &EncoderParams, phase: usize, test_sets: &[Vec<EvalItem>]) -> Result<PhaseEval> {
    let total: usize = test_sets.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::Empty("test sets"));
    }
    let mut row = Vec::with_capacity(test_sets.len());
    let mut sizes = Vec::with_capacity(test_sets.len());
    let mut predictions = Vec::with_capacity(total);
    let mut correct = 0usize;
    for (j, items) in test_sets.iter().enumerate() {
        let preds = predict(params, items, phase, j);
        let c = preds.iter().filter(|p| p.correct).count();
        correct += c;
        row.push(if items.is_empty() { 0.0 } else { c as f64 / items.len() as f64 });
        sizes.push(items.len());
        predictions.extend(preds);
    }
    Ok(PhaseEval {
        accuracy: correct as f64 / total as f64,
        row,
        sizes,
        predictions,
    })
}

/// Arithmetic mean of per-phase accuracies.
pub fn accuracy_average(accuracies: &[f64]) -> Result<f64> {
    if accuracies.is_empty() {
        return Err(Error::Empty("accuracy list"));
    }
    Ok(accuracies.iter().sum::<f64>() / accuracies.len() as f64)
}

const EXACT_LIMIT: usize = 12;

/// Two-sided paired permutation (sign-flip) test on the mean difference.
/// Enumerates all sign assignments for up to 12 pairs, otherwise draws
/// `n_permutations` random ones.
pub fn significance_test(a: &[f64], b: &[f64], n_permutations: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Config(format!("unpaired results: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Config("significance test needs at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let observed = diffs.iter().sum::<f64>().abs();
    let tol = 1e-12 * (1.0 + observed);
    let stat = |signs: &dyn Fn(usize) -> bool| {
        diffs
            .iter()
            .enumerate()
            .map(|(k, d)| if signs(k) { -d } else { *d })
            .sum::<f64>()
            .abs()
    };
    if n <= EXACT_LIMIT {
        let total = 1u64 << n;
        let hits = (0..total)
            .filter(|&mask| stat(&|k| mask >> k & 1 == 1) >= observed - tol)
            .count();
        return Ok(hits as f64 / total as f64);
    }
    if n_permutations == 0 {
        return Err(Error::Config("n_permutations must be positive".into()));
    }
    let mut rng = rng_for(seed, &[0x9e41]);
    let mut hits = 0usize;
    for _ in 0..n_permutations {
        let flips: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        if stat(&|k| flips[k]) >= observed - tol {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (n_permutations + 1) as f64)
}

/// Process peak resident set size in bytes, 0 where unavailable.
pub fn peak_memory_bytes() -> u64 {
    let Ok(status) = std::fs::read_to_string("/proc/self/status") else {
        return 0;
    };
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse::<u64>().ok())
        .map_or(0, |kb| kb * 1024)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseResources {
    pub phase: usize,
    pub wall_time_s: f64,
    pub peak_mem_bytes: u64,
    /// Training samples presented in this phase (questions plus exemplars).
    pub samples_seen: usize,
    pub exemplar_store: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub strategy: Option<String>,
    pub seed: u64,
    pub accuracy_per_phase: Vec<f64>,
    pub accuracy_avg: f64,
    /// Row `i` holds accuracies on `Test_0..Test_i` after phase `i`.
    pub forgetting_matrix: Vec<Vec<f64>>,
    pub test_sizes: Vec<usize>,
    pub resources: Vec<PhaseResources>,
}

impl EvalReport {
    pub fn new(
        mode: Mode,
        strategy: Option<String>,
        seed: u64,
        phases: Vec<PhaseEval>,
        resources: Vec<PhaseResources>,
    ) -> Result<Self> {
        let accuracy_per_phase: Vec<f64> = phases.iter().map(|p| p.accuracy).collect();
        let accuracy_avg = accuracy_average(&accuracy_per_phase)?;
        let test_sizes = phases.last().map(|p| p.sizes.clone()).unwrap_or_default();
        Ok(Self {
            mode,
            strategy,
            seed,
            accuracy_per_phase,
            accuracy_avg,
            forgetting_matrix: phases.into_iter().map(|p| p.row).collect(),
            test_sizes,
            resources,
        })
    }

    /// Copy with wall time and memory zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for res in &mut r.resources {
            res.wall_time_s = 0.0;
            res.peak_mem_bytes = 0;
        }
        r
    }

    /// One row per phase plus the average.
    pub fn accuracy_csv(&self) -> String {
        let mut s = String::from("phase,accuracy\n");
        for (i, a) in self.accuracy_per_phase.iter().enumerate() {
            let _ = writeln!(s, "{i},{a:.6}");
        }
        let _ = writeln!(s, "avg,{:.6}", self.accuracy_avg);
        s
    }

    /// Rows are phases, columns test sets, blanks above the diagonal.
    pub fn forgetting_csv(&self) -> String {
        let n = self.forgetting_matrix.len();
        let mut s = String::from("phase");
        for j in 0..n {
            let _ = write!(s, ",test_{j}");
        }
        s.push('\n');
        for (i, row) in self.forgetting_matrix.iter().enumerate() {
            let _ = write!(s, "{i}");
            for j in 0..n {
                match row.get(j) {
                    Some(v) => {
                        let _ = write!(s, ",{v:.6}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, dir: &Path, predictions: &[PredictionRecord]) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        std::fs::write(dir.join("accuracy.csv"), self.accuracy_csv())?;
        std::fs::write(dir.join("forgetting.csv"), self.forgetting_csv())?;
        crate::kbstream::write_jsonl_rows(&dir.join("predictions.jsonl"), predictions)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averages_of_reported_rows() {
        let ours = accuracy_average(&[0.8956, 0.8648, 0.8396, 0.8317, 0.8312]).unwrap();
        assert!((ours - 0.8526).abs() <= 5e-5);
        let yin = accuracy_average(&[0.8956, 0.8225, 0.7711, 0.7144, 0.6635]).unwrap();
        assert!((yin - 0.7734).abs() <= 5e-5);
        assert_eq!(accuracy_average(&[0.42]).unwrap(), 0.42);
        assert!(accuracy_average(&[]).is_err());
    }

    // Brute-force oracle: evaluates the statistic on every sign vector.
    fn oracle_p(d: &[f64]) -> f64 {
        let n = d.len();
        let obs: f64 = d.iter().sum::<f64>().abs();
        let mut hits = 0;
        for mask in 0..(1u32 << n) {
            let mut s = 0.0;
            for (k, x) in d.iter().enumerate() {
                s += if mask & (1 << k) != 0 { -x } else { *x };
            }
            if s.abs() >= obs - 1e-12 {
                hits += 1;
            }
        }
        hits as f64 / (1u32 << n) as f64
    }

    #[test]
    fn permutation_test_exact_cases() {
        let a = [0.9, 0.8, 0.85, 0.7, 0.95];
        let b = [0.1, 0.2, 0.05, 0.15, 0.3];
        let p = significance_test(&a, &b, 0, 0).unwrap();
        assert!((p - 2.0 / 32.0).abs() < 1e-15);
        assert_eq!(significance_test(&b, &a, 0, 0).unwrap(), p);
        assert_eq!(significance_test(&a, &a, 0, 0).unwrap(), 1.0);
        assert!(significance_test(&[1.0], &[0.0], 0, 0).is_err());

        let c = [0.3, -0.1, 0.25, 0.05, -0.2, 0.4, 0.1];
        let zero = [0.0; 7];
        assert!((significance_test(&c, &zero, 0, 0).unwrap() - oracle_p(&c)).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_close() {
        let a: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = vec![0.0; 15];
        let p1 = significance_test(&a, &b, 4000, 7).unwrap();
        let p2 = significance_test(&a, &b, 4000, 7).unwrap();
        assert_eq!(p1, p2);
        let exact = oracle_p(&a);
        assert!((p1 - exact).abs() < 0.03, "{p1} vs {exact}");
    }

    #[test]
    fn forgetting_csv_cells() {
        let phases: Vec<PhaseEval> = (0..5)
            .map(|i| PhaseEval {
                accuracy: 0.5,
                row: vec![0.5; i + 1],
                sizes: vec![10; i + 1],
                predictions: vec![],
            })
            .collect();
        let r = EvalReport::new(Mode::Finetune, None, 0, phases, vec![]).unwrap();
        let csv = r.forgetting_csv();
        let filled = csv
            .lines()
            .skip(1)
            .flat_map(|l| l.split(',').skip(1))
            .filter(|c| !c.is_empty())
            .count();
        assert_eq!(filled, 15);
    }

    #[test]
    fn peak_memory_is_reported_on_linux() {
        if cfg!(target_os = "linux") {
            assert!(peak_memory_bytes() > 0);
        }
    }
}
