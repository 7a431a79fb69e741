//! Test-time scaling toolkit for step-by-step math reasoning with multimodal
//! language models.
//!
//! The crate provides four cooperating pieces:
//!
//! - [`domain`]: problems, step-segmented solutions, prompt templates, and the
//!   step grammar shared by everything else.
//! - [`backends`]: a uniform chat-completions abstraction over policy, reward,
//!   completer, and judge models, with an HTTP gateway, a deterministic
//!   scripted backend for offline runs, and the critique output parser.
//! - [`refined_bon`] + [`scoring`]: the two-phase refined best-of-N loop in
//!   which a generative step-level reward model critiques candidate solutions,
//!   corrects the first erroneous step, and feeds the corrected prefix back to
//!   the policy; plus score aggregation and solution selection.
//! - [`mc_label`] + [`evalkit`]: Monte Carlo rollout labeling with
//!   judge-agreement filtering for building step-supervision training data,
//!   and benchmark ingestion, answer matching, metrics, and run persistence.
//!
//! All orchestration is async and bounded: every model client enforces a
//! configured in-flight request limit, and batch results are returned in
//! request order regardless of completion order.

pub mod backends;
pub mod domain;
pub mod evalkit;
pub mod mc_label;
pub mod refined_bon;
pub mod scoring;
pub mod seed;

pub use backends::{
    BackendConfig, BackendError, ChatBackend, ChatRequest, ChatResponse, HttpBackend, Judgment,
    ModelClient, Rollout, SamplingParams, ScriptRecord, ScriptedBackend, StepCritique,
    StepwiseCritique, TokenLogprob,
};
pub use domain::{
    parse_solution_text, render_prefix, render_prompt, AnswerKind, Choice, DomainError, Problem,
    PromptTemplate, RenderedPrefix, Solution, SolutionStatus, Step,
};
pub use refined_bon::{
    run_refined_bon, run_vanilla_bon, BonError, BonWorld, Candidate, Provenance, RefinedBonConfig,
    RefinedBonResult, TraceEvent,
};
pub use scoring::{
    aggregate, select_best, self_consistency, step_score, AggregationStrategy, ScoredCandidate,
    ScoringError,
};
