//! Two-phase refined best-of-N orchestration.
//!
//! Phase 1 samples `N/2` solutions and has the reward model critique each
//! one. Phase 2 derives one new solution per phase-1 candidate: when the
//! critique found an erroneous step, the validated prefix plus the reward
//! model's corrected step goes back to the policy model, which continues the
//! solution from there; when every step was judged correct, a fresh sample is
//! drawn with the same prompt and a new seed. The phase-2 solutions are
//! critiqued in turn (refined candidates are not re-refined), all `N`
//! candidates are scored, and the best is selected.
//!
//! Failed or degenerate samples stay in the pool as sentinels with a score of
//! negative infinity, so the pool always holds exactly `N` candidates and a
//! sentinel is never selected.

use std::sync::Arc;

use futures::future::try_join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    continue_solution, critique_solution, generate_solutions, BackendError, ChatRequest,
    CritiqueOptions, ModelClient, PrmOutputParser, SamplingParams, StepwiseCritique,
};
use crate::domain::{
    parse_solution_text, render_prefix, render_prompt, AnswerKind, DomainError, Problem,
    PromptTemplate, Solution, SolutionStatus,
};
use crate::evalkit::answers::extract_final_answer;
use crate::scoring::{
    aggregate, critique_step_scores, select_best, AggregationStrategy, ScoredCandidate,
    ScoringError,
};

#[derive(Debug, Error)]
pub enum BonError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("invalid best-of-N configuration: {0}")]
    Config(String),
}

/// Settings of one best-of-N run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinedBonConfig {
    /// Total pool size N; must be even and at least 2.
    pub n_total: usize,
    pub sampling: SamplingParams,
    #[serde(default)]
    pub aggregation: AggregationStrategy,
    /// Only the first erroneous step is corrected, once per parent.
    #[serde(default = "default_refine_depth")]
    pub max_refine_depth: u32,
}

fn default_refine_depth() -> u32 {
    1
}

impl Default for RefinedBonConfig {
    fn default() -> Self {
        Self {
            n_total: 8,
            sampling: SamplingParams::default(),
            aggregation: AggregationStrategy::Average,
            max_refine_depth: 1,
        }
    }
}

impl RefinedBonConfig {
    pub fn validate(&self) -> Result<(), BonError> {
        if self.n_total < 2 || !self.n_total.is_multiple_of(2) {
            return Err(BonError::Config(format!(
                "n_total must be even and >= 2, got {}",
                self.n_total
            )));
        }
        if self.max_refine_depth != 1 {
            return Err(BonError::Config("only refine depth 1 is supported".into()));
        }
        Ok(())
    }
}

/// Where a candidate came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Phase1Sample,
    RefinedContinuation { parent: usize },
    Resample { parent: usize },
}

/// A solution joined with its critique, per-step scores, and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub solution: Solution,
    pub critique: StepwiseCritique,
    pub scores: Vec<f64>,
    pub provenance: Provenance,
    pub overall_score: f64,
    /// Canonical extracted final answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Set when the candidate fell back from refinement to resampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ScoredCandidate for Candidate {
    fn all_correct(&self) -> bool {
        self.solution.status == SolutionStatus::Ok
            && self.critique.is_all_correct()
            && self.overall_score.is_finite()
    }

    fn step_scores(&self) -> &[f64] {
        &self.scores
    }
}

/// Append-only, order-stamped run log; one entry per sample, critique, and
/// selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Sample {
        seq: u64,
        index: usize,
        provenance: Provenance,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        status: SolutionStatus,
        step_count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        answer: Option<String>,
        raw_text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Critique {
        seq: u64,
        index: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        first_error: Option<usize>,
        judgments: Vec<String>,
        scores: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        refined_text: Option<String>,
        reasks: u32,
    },
    Select {
        seq: u64,
        index: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        answer: Option<String>,
        overall_scores: Vec<f64>,
    },
}

/// The outcome of one best-of-N run: exactly `N` candidates, the selected
/// index, and the full event trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinedBonResult {
    pub candidates: Vec<Candidate>,
    pub selected: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_answer: Option<String>,
    pub trace: Vec<TraceEvent>,
}

/// The model clients and prompt templates a best-of-N run needs.
#[derive(Clone)]
pub struct BonWorld {
    pub policy: Arc<ModelClient>,
    pub prm: Arc<ModelClient>,
    pub multichoice_template: PromptTemplate,
    pub freeform_template: PromptTemplate,
    pub critique_template: PromptTemplate,
    pub prm_params: SamplingParams,
    pub parser: Arc<PrmOutputParser>,
    pub critique_opts: CritiqueOptions,
}

impl BonWorld {
    pub fn new(policy: Arc<ModelClient>, prm: Arc<ModelClient>) -> Self {
        Self {
            policy,
            prm,
            multichoice_template: PromptTemplate::default_multichoice(),
            freeform_template: PromptTemplate::default_freeform(),
            critique_template: PromptTemplate::default_critique(),
            prm_params: SamplingParams::greedy(),
            parser: Arc::new(PrmOutputParser::default()),
            critique_opts: CritiqueOptions::default(),
        }
    }

    pub fn policy_template(&self, kind: AnswerKind) -> &PromptTemplate {
        match kind {
            AnswerKind::MultiChoice => &self.multichoice_template,
            AnswerKind::FreeForm => &self.freeform_template,
        }
    }
}

async fn critique_if_usable(
    problem: &Problem,
    solution: &Solution,
    world: &BonWorld,
) -> Result<Option<StepwiseCritique>, BonError> {
    if solution.status != SolutionStatus::Ok || solution.steps.is_empty() {
        return Ok(None);
    }
    let critique = critique_solution(
        problem,
        solution,
        &world.prm,
        &world.critique_template,
        &world.prm_params,
        &world.parser,
        &world.critique_opts,
    )
    .await?;
    Ok(Some(critique))
}

/// A single fresh sample with the from-scratch prompt. Transport failures
/// become a failed sentinel so the pool size stays exact; missing auth still
/// aborts.
async fn resample(
    problem: &Problem,
    template: &PromptTemplate,
    params: &SamplingParams,
    policy: &Arc<ModelClient>,
) -> Result<Solution, BonError> {
    let prompt = render_prompt(problem, template)?;
    let req = ChatRequest::new(prompt, params.clone()).with_images(&problem.images);
    match policy.complete(req).await {
        Ok(resp) => Ok(parse_solution_text(&resp.text, &template.answer_marker)
            .unwrap_or_else(|_| Solution::failed())),
        Err(BackendError::AuthMissing { env }) => Err(BackendError::AuthMissing { env }.into()),
        Err(_) => Ok(Solution::failed()),
    }
}

/// Provenance, seed, and flag note of a candidate being assembled.
struct Origin {
    provenance: Provenance,
    seed: Option<u64>,
    note: Option<String>,
}

fn finish_candidate(
    problem: &Problem,
    world: &BonWorld,
    solution: Solution,
    critique: Option<StepwiseCritique>,
    origin: Origin,
    aggregation: AggregationStrategy,
) -> Candidate {
    let critique = critique.unwrap_or_default();
    let scores = critique_step_scores(&critique);
    let overall = if solution.status != SolutionStatus::Ok || scores.is_empty() {
        f64::NEG_INFINITY
    } else {
        aggregate(&scores, aggregation).unwrap_or(f64::NEG_INFINITY)
    };
    let marker = &world.policy_template(problem.answer_kind).answer_marker;
    let answer = extract_final_answer(&solution.raw_text, problem.answer_kind, marker);
    Candidate {
        solution,
        critique,
        scores,
        provenance: origin.provenance,
        overall_score: overall,
        answer,
        seed: origin.seed,
        note: origin.note,
    }
}

fn assemble_result(
    candidates: Vec<Candidate>,
    aggregation: AggregationStrategy,
) -> Result<RefinedBonResult, BonError> {
    let selected = select_best(&candidates, aggregation)?;
    let selected_answer = candidates[selected].answer.clone();

    let mut trace = Vec::with_capacity(candidates.len() * 2 + 1);
    let mut seq = 0u64;
    for (index, c) in candidates.iter().enumerate() {
        trace.push(TraceEvent::Sample {
            seq,
            index,
            provenance: c.provenance.clone(),
            seed: c.seed,
            status: c.solution.status,
            step_count: c.solution.steps.len(),
            answer: c.answer.clone(),
            raw_text: c.solution.raw_text.clone(),
            note: c.note.clone(),
        });
        seq += 1;
        trace.push(TraceEvent::Critique {
            seq,
            index,
            first_error: c.critique.first_error,
            judgments: c
                .critique
                .steps
                .iter()
                .map(|s| s.final_judgment.word().to_lowercase())
                .collect(),
            scores: c.scores.clone(),
            refined_text: c.critique.refined_step.as_ref().map(|r| r.text.clone()),
            reasks: c.critique.reasks,
        });
        seq += 1;
    }
    trace.push(TraceEvent::Select {
        seq,
        index: selected,
        answer: selected_answer.clone(),
        overall_scores: candidates.iter().map(|c| c.overall_score).collect(),
    });

    Ok(RefinedBonResult {
        candidates,
        selected,
        selected_answer,
        trace,
    })
}

/// Run the two-phase refined best-of-N loop for one problem.
pub async fn run_refined_bon(
    problem: &Problem,
    cfg: &RefinedBonConfig,
    world: &BonWorld,
) -> Result<RefinedBonResult, BonError> {
    cfg.validate()?;
    let half = cfg.n_total / 2;
    let template = world.policy_template(problem.answer_kind);
    let base_seed = cfg.sampling.seed;

    let phase1 = generate_solutions(problem, template, half, &cfg.sampling, &world.policy).await?;

    // Per-pair pipeline: phase 2 for candidate j depends only on phase-1
    // candidate j, so pairs proceed concurrently under the client limits.
    let pair_futures = phase1.into_iter().enumerate().map(|(j, parent)| {
        let mut phase2_params = cfg.sampling.clone();
        phase2_params.seed = base_seed.map(|s| s.wrapping_add((half + j) as u64));
        async move {
            let parent_critique = critique_if_usable(problem, &parent, world).await?;

            let (child, provenance, note) = match &parent_critique {
                Some(crit) if crit.first_error.is_some() => {
                    let t = crit.first_error.expect("checked");
                    match &crit.refined_step {
                        Some(refined) => {
                            let validated = &parent.steps[..t - 1];
                            let prefix =
                                render_prefix(problem, validated, Some(refined), template)?;
                            let child = match continue_solution(
                                problem,
                                &prefix,
                                &phase2_params,
                                &world.policy,
                                &template.answer_marker,
                            )
                            .await
                            {
                                Ok(c) => c,
                                Err(BackendError::AuthMissing { env }) => {
                                    return Err(BackendError::AuthMissing { env }.into())
                                }
                                Err(_) => Solution::failed(),
                            };
                            (child, Provenance::RefinedContinuation { parent: j }, None)
                        }
                        None => {
                            // Parse anomaly: error found but no corrected step.
                            let child =
                                resample(problem, template, &phase2_params, &world.policy).await?;
                            (
                                child,
                                Provenance::Resample { parent: j },
                                Some("refined step unavailable; fell back to resample".into()),
                            )
                        }
                    }
                }
                _ => {
                    // All steps correct (or the parent failed outright): fresh
                    // sample, same prompt, new seed.
                    let child = resample(problem, template, &phase2_params, &world.policy).await?;
                    (child, Provenance::Resample { parent: j }, None)
                }
            };

            let child_critique = critique_if_usable(problem, &child, world).await?;
            Ok::<_, BonError>((
                j,
                parent,
                parent_critique,
                child,
                child_critique,
                provenance,
                note,
                phase2_params.seed,
            ))
        }
    });
    let pairs = try_join_all(pair_futures).await?;

    let mut parents = Vec::with_capacity(half);
    let mut children = Vec::with_capacity(half);
    for (j, parent, parent_critique, child, child_critique, provenance, note, child_seed) in pairs {
        parents.push(finish_candidate(
            problem,
            world,
            parent,
            parent_critique,
            Origin {
                provenance: Provenance::Phase1Sample,
                seed: base_seed.map(|s| s.wrapping_add(j as u64)),
                note: None,
            },
            cfg.aggregation,
        ));
        children.push(finish_candidate(
            problem,
            world,
            child,
            child_critique,
            Origin {
                provenance,
                seed: child_seed,
                note,
            },
            cfg.aggregation,
        ));
    }
    let mut candidates = parents;
    candidates.extend(children);
    assemble_result(candidates, cfg.aggregation)
}

/// The single-phase baseline: sample all `N`, critique, score, select.
pub async fn run_vanilla_bon(
    problem: &Problem,
    cfg: &RefinedBonConfig,
    world: &BonWorld,
) -> Result<RefinedBonResult, BonError> {
    cfg.validate()?;
    let template = world.policy_template(problem.answer_kind);
    let base_seed = cfg.sampling.seed;

    let solutions =
        generate_solutions(problem, template, cfg.n_total, &cfg.sampling, &world.policy).await?;

    let critique_futures = solutions
        .iter()
        .map(|s| critique_if_usable(problem, s, world));
    let critiques = try_join_all(critique_futures).await?;

    let candidates = solutions
        .into_iter()
        .zip(critiques)
        .enumerate()
        .map(|(i, (solution, critique))| {
            finish_candidate(
                problem,
                world,
                solution,
                critique,
                Origin {
                    provenance: Provenance::Phase1Sample,
                    seed: base_seed.map(|s| s.wrapping_add(i as u64)),
                    note: None,
                },
                cfg.aggregation,
            )
        })
        .collect();
    assemble_result(candidates, cfg.aggregation)
}
