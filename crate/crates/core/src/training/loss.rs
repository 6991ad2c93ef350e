use crate::encoder::{EncoderParams, Gradients, NodeId};
use crate::pairgen::{Candidate, MentionPattern};
use crate::Result;

use super::exemplar::Exemplar;
use super::score::Scorer;

/// Hinge ranking loss `max(0, margin + s_neg - s_pos)`.
pub fn margin_loss(s_pos: f64, s_neg: f64, margin: f64) -> f64 {
    (margin + s_neg - s_pos).max(0.0)
}

/// Squared distance of both scores to their snapshot labels.
pub fn mse_loss(s_pos: f64, l_pos: f64, s_neg: f64, l_neg: f64) -> f64 {
    (s_pos - l_pos).powi(2) + (s_neg - l_neg).powi(2)
}

/// One question of the current phase: its gold pair and the negatives used this step.
pub struct RankingItem<'a> {
    pub mp: &'a MentionPattern,
    pub positive: &'a Candidate,
    pub negatives: Vec<&'a Candidate>,
}

/// One exemplar with the frozen negative used this step (`None` when it has none).
pub struct DistillItem<'a> {
    pub exemplar: &'a Exemplar,
    pub negative: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub margin: f64,
    pub mse: f64,
}

pub struct LossGraph {
    pub total: NodeId,
    pub margin: NodeId,
    pub mse: NodeId,
}

/// Records the combined loss: the mean hinge over all (positive, negative)
/// pairs of `ranking` plus the mean squared label error over `distill`.
/// Empty parts contribute 0.
pub fn build_combined_loss(
    scorer: &mut Scorer,
    ranking: &[RankingItem],
    distill: &[DistillItem],
    margin: f64,
) -> Result<LossGraph> {
    let mut hinges = Vec::new();
    for item in ranking {
        let pos = score_candidate(scorer, item.mp, item.positive);
        for neg in &item.negatives {
            let s_neg = score_candidate(scorer, item.mp, neg);
            let diff = scorer.session.tape.sub(s_neg, pos);
            let m = scorer.session.tape.constant(margin);
            let shifted = scorer.session.tape.add(diff, m);
            hinges.push(scorer.session.tape.relu(shifted));
        }
    }
    let n_pairs = hinges.len();
    let hinge_sum = scorer.session.tape.sum(hinges);
    let margin_node = scorer.session.tape.scale(hinge_sum, if n_pairs > 0 { 1.0 / n_pairs as f64 } else { 0.0 });

    let mut squares = Vec::new();
    for item in distill {
        let e = item.exemplar;
        let labels = e.labels.as_ref().ok_or(crate::Error::Config(format!(
            "exemplar for question {} has no snapshot labels",
            e.question.id
        )))?;
        let pos = score_candidate(scorer, &e.mention_pattern, &e.positive);
        let lp = scorer.session.tape.constant(labels.positive);
        let d = scorer.session.tape.sub(pos, lp);
        squares.push(scorer.session.tape.square(d));
        if let Some(k) = item.negative {
            let neg = score_candidate(scorer, &e.mention_pattern, &e.negatives[k]);
            let ln = scorer.session.tape.constant(labels.negatives[k]);
            let d = scorer.session.tape.sub(neg, ln);
            squares.push(scorer.session.tape.square(d));
        }
    }
    let sq_sum = scorer.session.tape.sum(squares);
    let mse_node = scorer
        .session
        .tape
        .scale(sq_sum, if distill.is_empty() { 0.0 } else { 1.0 / distill.len() as f64 });
    let total = scorer.session.tape.add(margin_node, mse_node);
    Ok(LossGraph {
        total,
        margin: margin_node,
        mse: mse_node,
    })
}

fn score_candidate(scorer: &mut Scorer, mp: &MentionPattern, c: &Candidate) -> NodeId {
    scorer.score_texts(&mp.mention, &mp.pattern, &c.subject.text, &c.relation.text)
}

/// Combined loss value and its parameter gradients.
pub fn combined_loss(
    params: &EncoderParams,
    ranking: &[RankingItem],
    distill: &[DistillItem],
    margin: f64,
) -> Result<(LossValue, Gradients)> {
    let mut scorer = Scorer::new(params);
    let g = build_combined_loss(&mut scorer, ranking, distill, margin)?;
    let value = LossValue {
        total: scorer.scalar(g.total),
        margin: scorer.scalar(g.margin),
        mse: scorer.scalar(g.mse),
    };
    let grads = scorer.session.tape.backward(params, g.total)?;
    Ok((value, grads))
}

/// Loss value only, without the backward sweep.
pub fn combined_loss_value(
    params: &EncoderParams,
    ranking: &[RankingItem],
    distill: &[DistillItem],
    margin: f64,
) -> Result<LossValue> {
    let mut scorer = Scorer::new(params);
    let g = build_combined_loss(&mut scorer, ranking, distill, margin)?;
    Ok(LossValue {
        total: scorer.scalar(g.total),
        margin: scorer.scalar(g.margin),
        mse: scorer.scalar(g.mse),
    })
}
