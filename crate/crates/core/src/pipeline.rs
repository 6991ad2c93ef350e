//! Run configuration, the phase-by-phase experiment runner and run
//! evaluation. The CLI is a thin layer over this module.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::encoder::{AdamConfig, Checkpoint, EncoderConfig, EncoderParams, CHECKPOINT_VERSION};
use crate::evaluation::{evaluate_phase, peak_memory_bytes, EvalItem, EvalReport, PhaseResources, PredictionRecord};
use crate::exemplars::{select_exemplars, SelectionConfig, SelectionReport, Strategy};
use crate::kbstream::{
    build_stream, generate_synthetic, read_jsonl_rows, write_jsonl_rows, PhaseDataset, Question, SplitRatios,
    StreamManifest, SyntheticConfig,
};
use crate::pairgen::{generate_candidates, surface_set, to_mention_pattern, CandidateConfig, KbIndex, MentionMode};
use crate::training::{snapshot_labels, train_phase, EpochRecord, Exemplar, Mode, PhaseInputs, TrainConfig, TrainingExample};
use crate::util::derive_seed;
use crate::{Error, Result};

const TAG_TRAIN_CANDIDATES: u64 = 0xca0d;
const TAG_EVAL_CANDIDATES: u64 = 0xe7a1;
const TAG_TRAIN: u64 = 0x7a1e;
const TAG_SELECT: u64 = 0x5e1e;

/// Every tunable of a run, as one flat key-value document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub phases: usize,
    pub train_ratio: f64,
    pub valid_ratio: f64,
    pub test_ratio: f64,

    pub synthetic_relations: usize,
    pub synthetic_entities: usize,
    pub synthetic_questions_per_relation: usize,
    pub synthetic_templates: usize,
    pub synthetic_cluster_size: usize,
    pub synthetic_words_per_relation: usize,
    pub synthetic_shared_fraction: f64,
    pub synthetic_template_len: usize,

    pub mention_mode: MentionMode,
    pub k_entities: usize,
    pub n_other_relations: usize,
    pub n_random: usize,

    pub char_dim: usize,
    pub word_dim: usize,
    pub filters: usize,
    pub windows: Vec<usize>,
    pub init_range: f64,

    pub mode: Mode,
    pub margin: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub negatives_per_question: Option<usize>,

    pub strategy: Strategy,
    pub select_m: usize,
    pub select_n: usize,
    pub select_budget: Option<usize>,

    pub n_permutations: usize,

    pub manifest: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let syn = SyntheticConfig::default();
        let cand = CandidateConfig::default();
        let enc = EncoderConfig::default();
        let train = TrainConfig::default();
        let sel = SelectionConfig::default();
        let ratios = SplitRatios::default();
        Self {
            seed: 0,
            phases: 5,
            train_ratio: ratios.train,
            valid_ratio: ratios.valid,
            test_ratio: ratios.test,
            synthetic_relations: syn.n_relations,
            synthetic_entities: syn.n_entities,
            synthetic_questions_per_relation: syn.questions_per_relation,
            synthetic_templates: syn.templates,
            synthetic_cluster_size: syn.cluster_size,
            synthetic_words_per_relation: syn.words_per_relation,
            synthetic_shared_fraction: syn.shared_fraction,
            synthetic_template_len: syn.template_len,
            mention_mode: MentionMode::Gold,
            k_entities: cand.k_entities,
            n_other_relations: cand.n_other_relations,
            n_random: cand.n_random,
            char_dim: enc.char_dim,
            word_dim: enc.word_dim,
            filters: enc.filters,
            windows: enc.windows,
            init_range: enc.init_range,
            mode: train.mode,
            margin: train.margin,
            lr: train.adam.lr,
            beta1: train.adam.beta1,
            beta2: train.adam.beta2,
            eps: train.adam.eps,
            batch_size: train.batch_size,
            epochs: train.epochs,
            patience: train.patience,
            negatives_per_question: train.negatives_per_question,
            strategy: sel.strategy,
            select_m: sel.m,
            select_n: sel.n,
            select_budget: sel.budget,
            n_permutations: 10_000,
            manifest: None,
            output_dir: None,
        }
    }
}

impl RunConfig {
    /// Parses a config document. Missing keys take their defaults; unknown keys are errors.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Layers `key=value` overrides over an optional file over the defaults.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = match file {
            Some(p) => {
                let text = fs::read_to_string(p)?;
                text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for (key, raw) in overrides {
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.clone()));
            table.insert(key.clone(), value);
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.ratios().validate()?;
        self.encoder_config().validate()?;
        self.train_config().validate()?;
        self.selection_config().validate()?;
        if self.phases < 2 {
            return Err(Error::Config("phases must be at least 2".into()));
        }
        Ok(())
    }

    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train_ratio,
            valid: self.valid_ratio,
            test: self.test_ratio,
        }
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            n_relations: self.synthetic_relations,
            n_entities: self.synthetic_entities,
            questions_per_relation: self.synthetic_questions_per_relation,
            templates: self.synthetic_templates,
            cluster_size: self.synthetic_cluster_size,
            words_per_relation: self.synthetic_words_per_relation,
            shared_fraction: self.synthetic_shared_fraction,
            template_len: self.synthetic_template_len,
            seed: self.seed,
        }
    }

    pub fn candidate_config(&self) -> CandidateConfig {
        CandidateConfig {
            k_entities: self.k_entities,
            n_other_relations: self.n_other_relations,
            n_random: self.n_random,
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            char_dim: self.char_dim,
            word_dim: self.word_dim,
            filters: self.filters,
            windows: self.windows.clone(),
            init_range: self.init_range,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            margin: self.margin,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
            batch_size: self.batch_size,
            epochs: self.epochs,
            patience: self.patience,
            negatives_per_question: self.negatives_per_question,
            seed: derive_seed(self.seed, &[TAG_TRAIN]),
            mode: self.mode,
        }
    }

    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig {
            strategy: self.strategy,
            m: self.select_m,
            n: self.select_n,
            budget: self.select_budget,
            seed: derive_seed(self.seed, &[TAG_SELECT]),
        }
    }

    /// Short run label, e.g. `incremental-collaborative-s3`.
    pub fn run_name(&self) -> String {
        match self.mode {
            Mode::Incremental => format!("{}-{}-s{}", self.mode, self.strategy, self.seed),
            _ => format!("{}-s{}", self.mode, self.seed),
        }
    }
}

/// Generates the synthetic corpus of `config` and splits it into phases.
pub fn synthetic_stream(config: &RunConfig) -> Result<(Vec<PhaseDataset>, StreamManifest)> {
    let (triples, questions) = generate_synthetic(&config.synthetic_config())?;
    build_stream(&triples, &questions, config.phases, config.seed, config.ratios())
}

struct PhaseKb {
    index: KbIndex,
    surfaces: HashSet<String>,
}

impl PhaseKb {
    fn new(phase: &PhaseDataset, mode: MentionMode) -> Self {
        let index = KbIndex::new(&phase.facts);
        let surfaces = match mode {
            MentionMode::Heuristic => surface_set(index.entity_surfaces()),
            MentionMode::Gold => HashSet::new(),
        };
        Self { index, surfaces }
    }
}

fn training_examples(
    questions: &[Question],
    kb: &PhaseKb,
    config: &RunConfig,
    phase: usize,
) -> Result<Vec<TrainingExample>> {
    let cand = config.candidate_config();
    let seed = derive_seed(config.seed, &[TAG_TRAIN_CANDIDATES, phase as u64]);
    questions
        .iter()
        .map(|q| {
            let mp = to_mention_pattern(q, config.mention_mode, &kb.surfaces)?;
            let set = generate_candidates(q, &mp.mention, &kb.index, &cand, seed, true)?;
            TrainingExample::new(q.clone(), mp, set)
        })
        .collect()
}

fn eval_items(questions: &[Question], kb: &PhaseKb, config: &RunConfig, phase: usize) -> Result<Vec<EvalItem>> {
    let cand = config.candidate_config();
    let seed = derive_seed(config.seed, &[TAG_EVAL_CANDIDATES, phase as u64]);
    questions
        .iter()
        .map(|q| {
            let mp = to_mention_pattern(q, config.mention_mode, &kb.surfaces)?;
            let candidates = generate_candidates(q, &mp.mention, &kb.index, &cand, seed, false)?;
            Ok(EvalItem {
                mention_pattern: mp,
                candidates,
            })
        })
        .collect()
}

/// Test items of `Test_0..Test_i`, candidates drawn from the phase-`i` KB.
pub fn test_sets(phases: &[PhaseDataset], config: &RunConfig, phase: usize) -> Result<Vec<Vec<EvalItem>>> {
    let kb = PhaseKb::new(&phases[phase], config.mention_mode);
    phases[..=phase]
        .iter()
        .map(|p| eval_items(&p.test, &kb, config, phase))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Progress {
    completed: usize,
    resources: Vec<PhaseResources>,
}

/// Exclusive claim on a run directory, released on drop.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "run directory {} is locked by another process",
                dir.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn checkpoint_path(dir: &Path, phase: usize) -> PathBuf {
    dir.join(format!("theta_{phase}.ckpt"))
}

/// Loads the checkpoint of `phase` from a run directory.
pub fn load_checkpoint(dir: &Path, phase: usize) -> Result<EncoderParams> {
    let path = checkpoint_path(dir, phase);
    if !path.exists() {
        return Err(Error::MissingCheckpoint(phase));
    }
    Ok(Checkpoint::load(&path)?.params)
}

/// Trains the phases of a stream one after another. With a directory, every
/// completed phase is persisted and a new runner over the same directory
/// resumes after the last completed phase.
pub struct Runner<'a> {
    pub config: RunConfig,
    phases: &'a [PhaseDataset],
    dir: Option<PathBuf>,
    pub params: Option<EncoderParams>,
    pub store: Vec<Exemplar>,
    pub resources: Vec<PhaseResources>,
    pub log: Vec<EpochRecord>,
    pub selections: Vec<SelectionReport>,
    checkpoints: Vec<EncoderParams>,
    completed: usize,
}

impl<'a> Runner<'a> {
    pub fn new(config: RunConfig, phases: &'a [PhaseDataset], dir: Option<PathBuf>) -> Result<Self> {
        config.validate()?;
        if phases.is_empty() {
            return Err(Error::Empty("phase list"));
        }
        let mut runner = Self {
            config,
            phases,
            dir,
            params: None,
            store: Vec::new(),
            resources: Vec::new(),
            log: Vec::new(),
            selections: Vec::new(),
            checkpoints: Vec::new(),
            completed: 0,
        };
        if let Some(dir) = runner.dir.clone() {
            fs::create_dir_all(&dir)?;
            let progress_path = dir.join("progress.json");
            if progress_path.exists() {
                let progress: Progress = serde_json::from_str(&fs::read_to_string(&progress_path)?)?;
                runner.completed = progress.completed;
                runner.resources = progress.resources;
                if progress.completed > 0 {
                    runner.params = Some(load_checkpoint(&dir, progress.completed - 1)?);
                }
                if dir.join("exemplars.jsonl").exists() {
                    runner.store = read_jsonl_rows(&dir.join("exemplars.jsonl"))?;
                }
                if dir.join("train_log.jsonl").exists() {
                    runner.log = read_jsonl_rows(&dir.join("train_log.jsonl"))?;
                }
            }
            fs::write(dir.join("config.toml"), runner.config.to_toml()?)?;
        }
        Ok(runner)
    }

    pub fn completed(&self) -> usize {
        self.completed
    }

    pub fn is_done(&self) -> bool {
        self.completed >= self.phases.len()
    }

    /// Trains the next phase and, in incremental mode, selects and labels
    /// its exemplars.
    pub fn run_phase(&mut self) -> Result<()> {
        let i = self.completed;
        if i >= self.phases.len() {
            return Ok(());
        }
        let started = Instant::now();
        let config = &self.config;
        let kb = PhaseKb::new(&self.phases[i], config.mention_mode);
        let (examples, valid) = match config.mode {
            Mode::UpperBound => {
                let mut ex = Vec::new();
                let mut va = Vec::new();
                for p in &self.phases[..=i] {
                    ex.extend(training_examples(&p.train, &kb, config, i)?);
                    va.extend(eval_items(&p.valid, &kb, config, i)?);
                }
                (ex, va)
            }
            _ => (
                training_examples(&self.phases[i].train, &kb, config, i)?,
                eval_items(&self.phases[i].valid, &kb, config, i)?,
            ),
        };
        let rehearsal: &[Exemplar] = match config.mode {
            Mode::Incremental => &self.store,
            _ => &[],
        };
        let inputs = PhaseInputs {
            phase: i,
            examples: &examples,
            valid: &valid,
            exemplars: rehearsal,
        };
        let samples_seen = examples.len() + rehearsal.len();
        let store_before = rehearsal.len();
        let (params, log) = train_phase(&inputs, &config.train_config(), &config.encoder_config(), self.params.take())?;

        let mut selection = None;
        if config.mode == Mode::Incremental {
            let (mut picked, report) =
                select_exemplars(&examples, &self.store, &params, &config.selection_config(), i)?;
            snapshot_labels(&mut picked, &params)?;
            self.store.extend(picked);
            selection = Some(report);
        }
        let resources = PhaseResources {
            phase: i,
            wall_time_s: started.elapsed().as_secs_f64(),
            peak_mem_bytes: peak_memory_bytes(),
            samples_seen,
            exemplar_store: store_before,
        };

        if let Some(dir) = &self.dir {
            Checkpoint {
                version: CHECKPOINT_VERSION,
                phase: i,
                params: params.clone(),
                adam: None,
            }
            .save(&checkpoint_path(dir, i))?;
            if let Some(report) = &selection {
                fs::write(dir.join(format!("selection_{i}.json")), serde_json::to_string_pretty(report)?)?;
                write_jsonl_rows(&dir.join("exemplars.jsonl"), &self.store)?;
            }
            let mut all_log = self.log.clone();
            all_log.extend(log.iter().cloned());
            write_jsonl_rows(&dir.join("train_log.jsonl"), &all_log)?;
        } else {
            self.checkpoints.push(params.clone());
        }

        self.log.extend(log);
        self.resources.push(resources);
        if let Some(r) = selection {
            self.selections.push(r);
        }
        self.params = Some(params);
        self.completed = i + 1;
        if let Some(dir) = &self.dir {
            let progress = Progress {
                completed: self.completed,
                resources: self.resources.clone(),
            };
            fs::write(dir.join("progress.json"), serde_json::to_string_pretty(&progress)?)?;
        }
        Ok(())
    }

    pub fn run_all(&mut self) -> Result<()> {
        while !self.is_done() {
            self.run_phase()?;
        }
        Ok(())
    }

    /// Parameters after `phase`, from memory or the run directory.
    pub fn checkpoint(&self, phase: usize) -> Result<EncoderParams> {
        match &self.dir {
            Some(dir) => load_checkpoint(dir, phase),
            None => self.checkpoints.get(phase).cloned().ok_or(Error::MissingCheckpoint(phase)),
        }
    }

    /// Evaluates every completed phase.
    pub fn evaluate(&self) -> Result<(EvalReport, Vec<PredictionRecord>)> {
        evaluate_run(self.phases, &self.config, |i| self.checkpoint(i), self.resources.clone())
    }
}

/// Builds the full report: row `i` of the forgetting matrix uses the
/// checkpoint of phase `i` on `Test_0..Test_i`.
pub fn evaluate_run(
    phases: &[PhaseDataset],
    config: &RunConfig,
    checkpoint: impl Fn(usize) -> Result<EncoderParams>,
    resources: Vec<PhaseResources>,
) -> Result<(EvalReport, Vec<PredictionRecord>)> {
    let mut evals = Vec::with_capacity(phases.len());
    let mut predictions = Vec::new();
    for i in 0..phases.len() {
        let params = checkpoint(i)?;
        let mut eval = evaluate_phase(&params, i, &test_sets(phases, config, i)?)?;
        predictions.append(&mut eval.predictions);
        evals.push(eval);
    }
    let strategy = (config.mode == Mode::Incremental).then(|| config.strategy.to_string());
    let report = EvalReport::new(config.mode, strategy, config.seed, evals, resources)?;
    Ok((report, predictions))
}

/// Reads back the resources recorded by a training run.
pub fn load_resources(dir: &Path) -> Result<Vec<PhaseResources>> {
    let path = dir.join("progress.json");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let progress: Progress = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(progress.resources)
}

/// In-memory end-to-end run: synthetic stream, all phases, evaluation.
pub fn run_synthetic(config: &RunConfig) -> Result<EvalReport> {
    let (phases, _) = synthetic_stream(config)?;
    let mut runner = Runner::new(config.clone(), &phases, None)?;
    runner.run_all()?;
    Ok(runner.evaluate()?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedDelta {
    pub label: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `seed` when several runs per side are paired by position, `phase` for a single pair of runs.
    pub paired_by: String,
    pub deltas: Vec<PairedDelta>,
    pub mean_delta: f64,
    pub p_value: f64,
}

/// Paired comparison of two methods. Several runs per side are paired by
/// position on their averaged accuracy; one run per side is paired phase by phase.
pub fn compare_reports(a: &[EvalReport], b: &[EvalReport], n_permutations: usize, seed: u64) -> Result<Comparison> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Config(format!("cannot pair {} runs with {} runs", a.len(), b.len())));
    }
    let (paired_by, deltas): (&str, Vec<PairedDelta>) = if a.len() == 1 {
        if a[0].accuracy_per_phase.len() != b[0].accuracy_per_phase.len() {
            return Err(Error::Config("runs have different phase counts".into()));
        }
        let d = a[0]
            .accuracy_per_phase
            .iter()
            .zip(&b[0].accuracy_per_phase)
            .enumerate()
            .map(|(i, (x, y))| PairedDelta {
                label: format!("phase {i}"),
                a: *x,
                b: *y,
                delta: x - y,
            })
            .collect();
        ("phase", d)
    } else {
        let d = a
            .iter()
            .zip(b)
            .map(|(x, y)| PairedDelta {
                label: format!("seed {} / {}", x.seed, y.seed),
                a: x.accuracy_avg,
                b: y.accuracy_avg,
                delta: x.accuracy_avg - y.accuracy_avg,
            })
            .collect();
        ("seed", d)
    };
    let xs: Vec<f64> = deltas.iter().map(|d| d.a).collect();
    let ys: Vec<f64> = deltas.iter().map(|d| d.b).collect();
    let p_value = crate::evaluation::significance_test(&xs, &ys, n_permutations, seed)?;
    let mean_delta = deltas.iter().map(|d| d.delta).sum::<f64>() / deltas.len() as f64;
    Ok(Comparison {
        paired_by: paired_by.into(),
        deltas,
        mean_delta,
        p_value,
    })
}

/// Long-format CSV of per-phase series, one series per labeled report.
pub fn plot_data(reports: &[(String, EvalReport)]) -> String {
    let mut s = String::from("series,phase,accuracy,test0_accuracy,samples_seen,wall_time_s,peak_mem_bytes\n");
    for (label, r) in reports {
        for (i, acc) in r.accuracy_per_phase.iter().enumerate() {
            let res = r.resources.get(i);
            s.push_str(&format!(
                "{label},{i},{acc:.6},{:.6},{},{:.3},{}\n",
                r.forgetting_matrix[i][0],
                res.map_or(0, |x| x.samples_seen),
                res.map_or(0.0, |x| x.wall_time_s),
                res.map_or(0, |x| x.peak_mem_bytes),
            ));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> RunConfig {
        RunConfig {
            phases: 3,
            synthetic_relations: 6,
            synthetic_entities: 30,
            synthetic_questions_per_relation: 10,
            synthetic_cluster_size: 3,
            k_entities: 2,
            n_other_relations: 2,
            n_random: 2,
            char_dim: 6,
            word_dim: 6,
            filters: 4,
            init_range: 0.1,
            lr: 0.01,
            batch_size: 16,
            epochs: 2,
            ..Default::default()
        }
    }

    #[test]
    fn config_round_trip_and_precedence() {
        let c = tiny();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.toml");
        fs::write(&file, "seed = 4\nepochs = 7\nmode = \"finetune\"\n").unwrap();
        let r = RunConfig::resolve(Some(&file), &[("epochs".into(), "9".into()), ("strategy".into(), "herding".into())])
            .unwrap();
        assert_eq!((r.seed, r.epochs, r.mode, r.strategy), (4, 9, Mode::Finetune, Strategy::Herding));
        assert_eq!(r.lr, RunConfig::default().lr);
        assert!(RunConfig::resolve(None, &[("no_such_key".into(), "1".into())]).is_err());
        assert!(RunConfig::resolve(None, &[("margin".into(), "-1".into())]).is_err());
    }

    #[test]
    fn resource_counters_follow_mode() {
        let (phases, _) = synthetic_stream(&tiny()).unwrap();
        let train: Vec<usize> = phases.iter().map(|p| p.train.len()).collect();
        for mode in [Mode::UpperBound, Mode::Incremental, Mode::Finetune] {
            let cfg = RunConfig { mode, ..tiny() };
            let mut r = Runner::new(cfg, &phases, None).unwrap();
            r.run_all().unwrap();
            let seen: Vec<usize> = r.resources.iter().map(|x| x.samples_seen).collect();
            match mode {
                Mode::UpperBound => {
                    let cum: Vec<usize> = train.iter().scan(0, |s, x| { *s += x; Some(*s) }).collect();
                    assert_eq!(seen, cum);
                }
                Mode::Incremental => {
                    for (i, res) in r.resources.iter().enumerate() {
                        assert_eq!(res.samples_seen, train[i] + res.exemplar_store);
                    }
                    assert!(r.resources[1].exemplar_store > 0);
                }
                Mode::Finetune => assert_eq!(seen, train),
            }
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (phases, _) = synthetic_stream(&tiny()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        {
            let mut r = Runner::new(cfg.clone(), &phases, Some(dir.path().join("a"))).unwrap();
            r.run_phase().unwrap();
        }
        let mut resumed = Runner::new(cfg.clone(), &phases, Some(dir.path().join("a"))).unwrap();
        assert_eq!(resumed.completed(), 1);
        resumed.run_all().unwrap();
        let mut whole = Runner::new(cfg, &phases, None).unwrap();
        whole.run_all().unwrap();
        let (a, _) = resumed.evaluate().unwrap();
        let (b, _) = whole.evaluate().unwrap();
        assert_eq!(a.without_timing(), b.without_timing());
        assert_eq!(resumed.store, whole.store);
        assert!(matches!(load_checkpoint(dir.path(), 0), Err(Error::MissingCheckpoint(0))));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = RunLock::acquire(dir.path()).unwrap();
        assert!(RunLock::acquire(dir.path()).is_err());
        drop(lock);
        assert!(RunLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn self_comparison() {
        let report = run_synthetic(&RunConfig { epochs: 1, ..tiny() }).unwrap();
        let c = compare_reports(std::slice::from_ref(&report), std::slice::from_ref(&report), 100, 0).unwrap();
        assert!(c.deltas.iter().all(|d| d.delta == 0.0));
        assert_eq!(c.p_value, 1.0);
        let csv = plot_data(&[("a".into(), report.clone()), ("b".into(), report)]);
        let series: HashSet<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(series.len(), 2);
    }
}
