use std::time::Instant;

use rand::seq::{IteratorRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::exemplar::Exemplar;
use super::loss::{combined_loss, DistillItem, RankingItem};
use crate::encoder::{adam_step, AdamConfig, AdamState, EncoderConfig, EncoderParams, Vocab};
use crate::evaluation::{accuracy, peak_memory_bytes, EvalItem};
use crate::kbstream::Question;
use crate::pairgen::{Candidate, CandidateSet, MentionPattern};
use crate::util::rng_for;
use crate::{Error, Result};

const TAG_INIT: u64 = 0x1417;
const TAG_GROW: u64 = 0x6404;
const TAG_SHUFFLE: u64 = 0x5f0f;
const TAG_EXEMPLARS: u64 = 0xe8e8;
const TAG_NEGATIVES: u64 = 0x4e65;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Previous parameters plus exemplar rehearsal with the distillation term.
    Incremental,
    /// Previous parameters, current phase only, ranking loss only.
    Finetune,
    /// Fresh parameters trained on every phase so far.
    UpperBound,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Incremental => "incremental",
            Mode::Finetune => "finetune",
            Mode::UpperBound => "upper_bound",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "incremental" => Ok(Mode::Incremental),
            "finetune" => Ok(Mode::Finetune),
            "upper_bound" => Ok(Mode::UpperBound),
            other => Err(Error::Config(format!("unknown mode {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub margin: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Negatives per question per step; `None` uses every cached negative.
    pub negatives_per_question: Option<usize>,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.5,
            adam: AdamConfig::default(),
            batch_size: 256,
            epochs: 30,
            patience: 5,
            negatives_per_question: None,
            seed: 0,
            mode: Mode::Incremental,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return Err(Error::Config("margin must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.adam.lr.is_finite() && self.adam.lr >= 0.0) {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// A training question with its (gold-containing) candidate set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub question: Question,
    pub mention_pattern: MentionPattern,
    pub candidates: CandidateSet,
}

impl TrainingExample {
    pub fn new(question: Question, mention_pattern: MentionPattern, candidates: CandidateSet) -> Result<Self> {
        if candidates.gold_index.is_none() {
            return Err(Error::NoGold(question.id));
        }
        Ok(Self {
            question,
            mention_pattern,
            candidates,
        })
    }

    pub fn positive(&self) -> &Candidate {
        &self.candidates.candidates[self.candidates.gold_index.expect("checked at construction")]
    }

    pub fn negatives(&self) -> impl Iterator<Item = &Candidate> {
        let gold = self.candidates.gold_index;
        self.candidates
            .candidates
            .iter()
            .enumerate()
            .filter(move |(i, _)| Some(*i) != gold)
            .map(|(_, c)| c)
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        [self.mention_pattern.mention.as_str(), self.mention_pattern.pattern.as_str()]
            .into_iter()
            .chain(
                self.candidates
                    .candidates
                    .iter()
                    .flat_map(|c| [c.subject.text.as_str(), c.relation.text.as_str()]),
            )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: usize,
    pub epoch: usize,
    #[serde(rename = "L")]
    pub loss: f64,
    #[serde(rename = "L_M")]
    pub margin_loss: f64,
    #[serde(rename = "L_S")]
    pub mse_loss: f64,
    pub valid_acc: f64,
    pub wall_time_s: f64,
    pub peak_mem_bytes: u64,
}

pub struct PhaseInputs<'a> {
    pub phase: usize,
    /// `D_i` train split, or every train split so far in upper-bound mode.
    pub examples: &'a [TrainingExample],
    pub valid: &'a [EvalItem],
    pub exemplars: &'a [Exemplar],
}

/// Trains one phase. Returns the parameters (best validation epoch when a
/// validation set exists) and one log record per epoch.
pub fn train_phase(
    inputs: &PhaseInputs,
    config: &TrainConfig,
    encoder: &EncoderConfig,
    params_prev: Option<EncoderParams>,
) -> Result<(EncoderParams, Vec<EpochRecord>)> {
    config.validate()?;
    let phase = inputs.phase as u64;
    let exemplars: &[Exemplar] = match config.mode {
        Mode::Incremental => inputs.exemplars,
        Mode::Finetune | Mode::UpperBound => &[],
    };
    let prev = match config.mode {
        Mode::UpperBound => None,
        _ => params_prev,
    };
    let mut params = match prev {
        Some(p) => p,
        None => EncoderParams::init(encoder.clone(), Vocab::default(), &mut rng_for(config.seed, &[TAG_INIT, phase]))?,
    };
    let texts = inputs
        .examples
        .iter()
        .flat_map(TrainingExample::texts)
        .chain(exemplars.iter().flat_map(|e| {
            [e.mention_pattern.mention.as_str(), e.mention_pattern.pattern.as_str()]
                .into_iter()
                .chain(
                    std::iter::once(&e.positive)
                        .chain(&e.negatives)
                        .flat_map(|c| [c.subject.text.as_str(), c.relation.text.as_str()]),
                )
        }));
    params.grow_vocab(texts, &mut rng_for(config.seed, &[TAG_GROW, phase]));

    let mut adam = AdamState::new(&params);
    let mut log = Vec::new();
    let mut best: Option<(f64, EncoderParams)> = None;
    let mut since_best = 0;
    let mut uses = vec![0usize; exemplars.len()];
    let n = inputs.examples.len();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(config.seed, &[TAG_SHUFFLE, phase, epoch as u64]));
        let mut ex_order: Vec<usize> = (0..exemplars.len()).collect();
        if !exemplars.is_empty() {
            ex_order.shuffle(&mut rng_for(config.seed, &[TAG_EXEMPLARS, phase, epoch as u64]));
        }

        let (mut sum_l, mut sum_m, mut sum_s, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let ranking: Vec<RankingItem> = batch
                .iter()
                .map(|&k| {
                    let ex = &inputs.examples[k];
                    let negatives: Vec<&Candidate> = match config.negatives_per_question {
                        None => ex.negatives().collect(),
                        Some(count) => {
                            let mut rng = rng_for(
                                config.seed,
                                &[TAG_NEGATIVES, phase, epoch as u64, u64::from(ex.question.id)],
                            );
                            ex.negatives().choose_multiple(&mut rng, count)
                        }
                    };
                    RankingItem {
                        mp: &ex.mention_pattern,
                        positive: ex.positive(),
                        negatives,
                    }
                })
                .collect();

            let mut distill = Vec::new();
            if !exemplars.is_empty() {
                let take = config.batch_size.min(exemplars.len());
                for j in 0..take {
                    let e = ex_order[(step * config.batch_size + j) % exemplars.len()];
                    let n_neg = exemplars[e].negatives.len();
                    let negative = (n_neg > 0).then(|| uses[e] % n_neg);
                    uses[e] += 1;
                    distill.push(DistillItem {
                        exemplar: &exemplars[e],
                        negative,
                    });
                }
            }

            let (value, grads) = combined_loss(&params, &ranking, &distill, config.margin)?;
            if !value.total.is_finite() {
                return Err(Error::NonFinite(format!("loss at phase {phase} epoch {epoch} step {step}")));
            }
            adam_step(&mut params, &grads, &mut adam, &config.adam)?;
            sum_l += value.total;
            sum_m += value.margin;
            sum_s += value.mse;
            steps += 1;
        }

        let valid_acc = if inputs.valid.is_empty() {
            0.0
        } else {
            accuracy(&params, inputs.valid)
        };
        let denom = steps.max(1) as f64;
        log.push(EpochRecord {
            phase: inputs.phase,
            epoch,
            loss: sum_l / denom,
            margin_loss: sum_m / denom,
            mse_loss: sum_s / denom,
            valid_acc,
            wall_time_s: started.elapsed().as_secs_f64(),
            peak_mem_bytes: peak_memory_bytes(),
        });

        if inputs.valid.is_empty() {
            continue;
        }
        match &best {
            Some((acc, _)) if valid_acc <= *acc => {
                since_best += 1;
                if since_best >= config.patience {
                    break;
                }
            }
            _ => {
                best = Some((valid_acc, params.clone()));
                since_best = 0;
            }
        }
    }

    if let Some((_, p)) = best {
        params = p;
    }
    Ok((params, log))
}
