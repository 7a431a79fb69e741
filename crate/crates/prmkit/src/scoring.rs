//! Step scores, aggregation strategies, solution selection, and the
//! self-consistency baseline.
//!
//! A step's score is the normalized probability mass of the `Correct`
//! judgment token at that step's verdict position. Candidates whose critique
//! found no error are preferred at selection time; among all-flawed pools the
//! argmax runs over the scores of the evaluated steps only (a critique stops
//! at the first error, so later steps carry no score).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Judgment, StepwiseCritique};
use crate::domain::AnswerKind;
use crate::evalkit::answers::canonical_answer;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error(
        "degenerate judgment-token probabilities: p_correct={p_correct}, p_incorrect={p_incorrect}"
    )]
    DegenerateProbabilities { p_correct: f64, p_incorrect: f64 },
    #[error("cannot aggregate an empty score list")]
    EmptyScores,
    #[error("cannot select from an empty candidate pool")]
    EmptyPool,
}

/// How per-step scores combine into a solution score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationStrategy {
    #[default]
    Average,
    Min,
    Max,
}

impl AggregationStrategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "avg" | "average" => Some(Self::Average),
            "min" => Some(Self::Min),
            "max" => Some(Self::Max),
            _ => None,
        }
    }
}

/// Normalized score of one step from the probabilities of its `Correct` and
/// `Incorrect` judgment tokens: `p_correct / (p_correct + p_incorrect)`.
///
/// The two raw probabilities need not sum to one, so the ratio makes scores
/// comparable across positions. Scale-invariant: `step_score(kp, kq) ==
/// step_score(p, q)` for any `k > 0`.
pub fn step_score(p_correct: f64, p_incorrect: f64) -> Result<f64, ScoringError> {
    let degenerate = !p_correct.is_finite()
        || !p_incorrect.is_finite()
        || p_correct < 0.0
        || p_incorrect < 0.0
        || (p_correct == 0.0 && p_incorrect == 0.0);
    if degenerate {
        return Err(ScoringError::DegenerateProbabilities {
            p_correct,
            p_incorrect,
        });
    }
    Ok(p_correct / (p_correct + p_incorrect))
}

/// Combine step scores with the given strategy.
pub fn aggregate(scores: &[f64], strategy: AggregationStrategy) -> Result<f64, ScoringError> {
    if scores.is_empty() {
        return Err(ScoringError::EmptyScores);
    }
    Ok(match strategy {
        AggregationStrategy::Average => scores.iter().sum::<f64>() / scores.len() as f64,
        AggregationStrategy::Min => scores.iter().copied().fold(f64::INFINITY, f64::min),
        AggregationStrategy::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Per-step scores for a critique: the normalized judgment-token score where
/// token probabilities were captured, otherwise 1.0/0.0 from the textual
/// verdict alone.
pub fn critique_step_scores(critique: &StepwiseCritique) -> Vec<f64> {
    critique
        .steps
        .iter()
        .map(|s| match (s.p_correct_token, s.p_incorrect_token) {
            (Some(pc), Some(pi)) => step_score(pc, pi).unwrap_or(match s.final_judgment {
                Judgment::Correct => 1.0,
                Judgment::Incorrect => 0.0,
            }),
            _ => match s.final_judgment {
                Judgment::Correct => 1.0,
                Judgment::Incorrect => 0.0,
            },
        })
        .collect()
}

/// A pool entry that [`select_best`] can rank.
pub trait ScoredCandidate {
    /// True when the critique judged every step correct (and the candidate is
    /// not a failed or degenerate sentinel).
    fn all_correct(&self) -> bool;
    /// Scores of the evaluated steps, each in `[0, 1]`.
    fn step_scores(&self) -> &[f64];
}

fn overall<C: ScoredCandidate>(c: &C, strategy: AggregationStrategy) -> f64 {
    aggregate(c.step_scores(), strategy).unwrap_or(f64::NEG_INFINITY)
}

/// Select the best candidate index.
///
/// Candidates split into an all-correct class and a flawed class. When the
/// all-correct class is non-empty the argmax of the aggregated score runs
/// inside it; otherwise over the whole pool. Flawed candidates aggregate only
/// their evaluated steps. Ties break toward the lowest index. Candidates with
/// no scored steps rank at negative infinity and are excluded from the
/// all-correct class.
pub fn select_best<C: ScoredCandidate>(
    pool: &[C],
    strategy: AggregationStrategy,
) -> Result<usize, ScoringError> {
    if pool.is_empty() {
        return Err(ScoringError::EmptyPool);
    }
    let scores: Vec<f64> = pool.iter().map(|c| overall(c, strategy)).collect();
    let eligible: Vec<usize> = (0..pool.len())
        .filter(|&i| pool[i].all_correct() && scores[i].is_finite())
        .collect();
    let candidates: Box<dyn Iterator<Item = usize>> = if eligible.is_empty() {
        Box::new(0..pool.len())
    } else {
        Box::new(eligible.into_iter())
    };
    let mut best = None;
    for i in candidates {
        match best {
            None => best = Some(i),
            Some(b) if scores[i] > scores[b] => best = Some(i),
            _ => {}
        }
    }
    Ok(best.expect("non-empty pool"))
}

/// Majority vote over canonicalized answers. Absent answers are ignored; ties
/// break toward the answer whose first occurrence is earliest; an all-absent
/// list yields `None`.
pub fn self_consistency(answers: &[Option<String>], kind: AnswerKind) -> Option<String> {
    let mut order: Vec<String> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for a in answers.iter().flatten() {
        let Some(canon) = canonical_answer(a, kind) else {
            continue;
        };
        match order.iter().position(|x| *x == canon) {
            Some(i) => counts[i] += 1,
            None => {
                order.push(canon);
                counts.push(1);
            }
        }
    }
    let mut best: Option<usize> = None;
    for i in 0..order.len() {
        match best {
            None => best = Some(i),
            Some(b) if counts[i] > counts[b] => best = Some(i),
            _ => {}
        }
    }
    best.map(|i| order[i].clone())
}
