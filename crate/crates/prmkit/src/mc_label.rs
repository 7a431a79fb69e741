//! Monte Carlo hard-estimation labeling, judge-agreement filtering, and
//! training-dataset emission.
//!
//! Every step of a solution gets a hard label: 1 when at least one of `m`
//! completer rollouts from the prefix ending at that step reaches the gold
//! answer, 0 otherwise. Labels are computed for all steps independently (no
//! early stop) so they can be compared against the judge's critique, which
//! stops at the first error. A sample is kept only when the two agree: the
//! judge found no error and every label is 1, or the judge's first error at
//! step `t` coincides with labels that are 1 before `t` and 0 at `t`.
//!
//! Input is a JSONL solutions file with a `solutions/1` header; output is a
//! JSONL dataset with an `sft-dataset/1` header line. Runs are resumable
//! through a checkpoint file of completed sample ids.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    judge_annotate, rollout_completions, BackendError, ModelClient, PrmOutputParser,
    SamplingParams, StepCritique, StepwiseCritique,
};
use crate::domain::{
    parse_solution_text, AnswerKind, DomainError, Problem, PromptTemplate, Solution, Step,
};
use crate::evalkit::answers::answers_match;
use crate::seed::derive_seed;

pub const SOLUTIONS_SCHEMA: &str = "solutions/1";
pub const DATASET_SCHEMA: &str = "sft-dataset/1";

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("mc labels cover {mc} steps but the judge critique covers {judge}")]
    CoverageMismatch { mc: usize, judge: usize },
    #[error("schema mismatch: expected `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Monte Carlo hard label of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardLabel {
    pub step_index: usize,
    /// 1 when some rollout from this step's prefix reached the gold answer.
    pub value: u8,
    pub rollout_answers: Vec<Option<String>>,
    /// Rollouts that actually completed (failed calls are answerless).
    pub m_effective: usize,
    /// Set when no rollout completed and the 0 label is a default.
    #[serde(default)]
    pub flagged: bool,
}

/// Hard estimation: 1 iff some rollout answer matches the gold answer.
/// Absent answers never match.
pub fn hard_estimate(rollout_answers: &[Option<String>], gold: &str, kind: AnswerKind) -> u8 {
    let hit = rollout_answers
        .iter()
        .any(|a| answers_match(a.as_deref(), gold, kind));
    u8::from(hit)
}

/// The judge/completer clients and prompts the labeling pipeline needs.
#[derive(Clone)]
pub struct LabelWorld {
    pub judge: Arc<ModelClient>,
    pub completer: Arc<ModelClient>,
    pub judge_template: PromptTemplate,
    pub multichoice_template: PromptTemplate,
    pub freeform_template: PromptTemplate,
    pub judge_params: SamplingParams,
    pub completer_params: SamplingParams,
    pub parser: Arc<PrmOutputParser>,
}

impl LabelWorld {
    pub fn new(judge: Arc<ModelClient>, completer: Arc<ModelClient>) -> Self {
        Self {
            judge,
            completer,
            judge_template: PromptTemplate::default_critique(),
            multichoice_template: PromptTemplate::default_multichoice(),
            freeform_template: PromptTemplate::default_freeform(),
            judge_params: SamplingParams::greedy(),
            completer_params: SamplingParams::default(),
            parser: Arc::new(PrmOutputParser::default()),
        }
    }

    fn completer_template(&self, kind: AnswerKind) -> &PromptTemplate {
        match kind {
            AnswerKind::MultiChoice => &self.multichoice_template,
            AnswerKind::FreeForm => &self.freeform_template,
        }
    }
}

/// Label every step of a solution with `m` rollouts per step. Labels are
/// per-step independent; a step whose rollouts all fail gets value 0 with
/// `m_effective` 0, flagged.
pub async fn label_solution(
    problem: &Problem,
    solution: &Solution,
    world: &LabelWorld,
    m: usize,
    params: &SamplingParams,
) -> Result<Vec<HardLabel>, LabelError> {
    assert!(m >= 1, "m must be at least 1");
    let template = world.completer_template(problem.answer_kind);
    let mut labels = Vec::with_capacity(solution.steps.len());
    for i in 1..=solution.steps.len() {
        let mut step_params = params.clone();
        step_params.seed = params.seed.map(|s| s.wrapping_add(((i - 1) * m) as u64));
        let rollouts = rollout_completions(
            problem,
            &solution.steps[..i],
            m,
            &step_params,
            &world.completer,
            template,
        )
        .await?;
        let m_effective = rollouts.iter().filter(|r| !r.failed).count();
        let rollout_answers: Vec<Option<String>> =
            rollouts.into_iter().map(|r| r.final_answer).collect();
        let value = hard_estimate(&rollout_answers, &problem.gold_answer, problem.answer_kind);
        labels.push(HardLabel {
            step_index: i,
            value,
            rollout_answers,
            m_effective,
            flagged: m_effective == 0,
        });
    }
    Ok(labels)
}

/// Whether a judged sample survives agreement filtering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum FilterVerdict {
    Kept,
    Dropped { step: usize, reason: String },
}

/// Compare judge critique and Monte Carlo labels. Kept when the judge found
/// no error and every label is 1, or when the judge's first error position
/// carries label 0 with 1s before it; otherwise dropped at the first
/// disagreeing step.
pub fn agreement_filter(
    judge: &StepwiseCritique,
    mc: &[HardLabel],
) -> Result<FilterVerdict, LabelError> {
    if mc.len() < judge.steps.len() {
        return Err(LabelError::CoverageMismatch {
            mc: mc.len(),
            judge: judge.steps.len(),
        });
    }
    match judge.first_error {
        None => {
            for label in mc {
                if label.value != 1 {
                    return Ok(FilterVerdict::Dropped {
                        step: label.step_index,
                        reason: format!(
                            "judge saw no error but rollouts fail from step {}",
                            label.step_index
                        ),
                    });
                }
            }
            Ok(FilterVerdict::Kept)
        }
        Some(t) => {
            for label in &mc[..t - 1] {
                if label.value != 1 {
                    return Ok(FilterVerdict::Dropped {
                        step: label.step_index,
                        reason: format!(
                            "judge places the first error at step {t} but rollouts already fail from step {}",
                            label.step_index
                        ),
                    });
                }
            }
            if mc[t - 1].value != 0 {
                return Ok(FilterVerdict::Dropped {
                    step: t,
                    reason: format!(
                        "judge places the first error at step {t} but rollouts still succeed from it"
                    ),
                });
            }
            Ok(FilterVerdict::Kept)
        }
    }
}

/// One element of the emitted training dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub problem: Problem,
    pub solution: Solution,
    /// Judge annotations for steps `1..=t`.
    pub annotations: Vec<StepCritique>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined_step: Option<Step>,
    pub mc_labels: Vec<HardLabel>,
    pub filter_verdict: FilterVerdict,
}

/// Counters of one dataset build.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub kept: usize,
    pub dropped_by_reason: BTreeMap<String, usize>,
    /// Kept samples whose judge critique found an erroneous step.
    pub flawed_count: usize,
    /// Kept samples judged fully correct.
    pub all_correct_count: usize,
    /// Input records outside the category filter (not part of the run).
    pub category_skipped: usize,
    /// Input records already present in the checkpoint.
    pub resumed_skipped: usize,
}

impl DatasetStats {
    pub fn dropped(&self) -> usize {
        self.dropped_by_reason.values().sum()
    }

    fn drop_one(&mut self, reason: &str) {
        *self
            .dropped_by_reason
            .entry(reason.to_string())
            .or_insert(0) += 1;
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total processed: {}", self.total)?;
        writeln!(
            f,
            "kept: {} (flawed {}, all-correct {})",
            self.kept, self.flawed_count, self.all_correct_count
        )?;
        writeln!(f, "dropped: {}", self.dropped())?;
        for (reason, count) in &self.dropped_by_reason {
            writeln!(f, "  {reason}: {count}")?;
        }
        if self.category_skipped > 0 {
            writeln!(f, "outside category filter: {}", self.category_skipped)?;
        }
        if self.resumed_skipped > 0 {
            writeln!(
                f,
                "already completed (checkpoint): {}",
                self.resumed_skipped
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct SolutionsHeader {
    schema: String,
    #[serde(default = "default_marker")]
    answer_marker: String,
}

fn default_marker() -> String {
    "Final Answer:".into()
}

#[derive(Debug, Deserialize)]
struct SolutionRecord {
    id: String,
    question: String,
    #[serde(default)]
    images: Vec<String>,
    answer_kind: AnswerKind,
    #[serde(default)]
    choices: Vec<crate::domain::Choice>,
    gold_answer: String,
    #[serde(default)]
    category: Option<String>,
    solution_raw_text: String,
}

/// Read a solutions input file: `{"schema":"solutions/1",...}` header, then
/// one record per line with a `solution_raw_text` field parsed through the
/// step grammar.
pub fn read_solutions(path: impl AsRef<Path>) -> Result<Vec<(Problem, Solution)>, LabelError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: SolutionsHeader =
        serde_json::from_str(lines.next().unwrap_or("{}")).map_err(|e| {
            LabelError::SchemaMismatch {
                expected: SOLUTIONS_SCHEMA.into(),
                found: format!("unparseable header: {e}"),
            }
        })?;
    if header.schema != SOLUTIONS_SCHEMA {
        return Err(LabelError::SchemaMismatch {
            expected: SOLUTIONS_SCHEMA.into(),
            found: header.schema,
        });
    }
    let mut out = Vec::new();
    for line in lines {
        let record: SolutionRecord = serde_json::from_str(line)?;
        let solution = parse_solution_text(&record.solution_raw_text, &header.answer_marker)?;
        let problem = Problem {
            id: record.id,
            question: record.question,
            images: record.images,
            answer_kind: record.answer_kind,
            choices: record.choices,
            gold_answer: record.gold_answer,
            source: None,
            category: record.category,
        };
        out.push((problem, solution));
    }
    Ok(out)
}

/// Write samples as a JSONL dataset with a schema header line.
pub fn emit_dataset(samples: &[TrainingSample], path: impl AsRef<Path>) -> Result<(), LabelError> {
    let mut out = format!("{{\"schema\":\"{DATASET_SCHEMA}\"}}\n");
    for s in samples {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a dataset back, validating the schema header.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<TrainingSample>, LabelError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap_or("{}"))?;
    if header["schema"].as_str() != Some(DATASET_SCHEMA) {
        return Err(LabelError::SchemaMismatch {
            expected: DATASET_SCHEMA.into(),
            found: header["schema"].to_string(),
        });
    }
    lines
        .map(|l| serde_json::from_str(l).map_err(LabelError::from))
        .collect()
}

fn read_checkpoint(path: &Path) -> Result<BTreeSet<String>, LabelError> {
    if !path.exists() {
        return Ok(BTreeSet::new());
    }
    let text = fs::read_to_string(path)?;
    let mut done = BTreeSet::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let value: serde_json::Value = serde_json::from_str(line)?;
        if let Some(id) = value["id"].as_str() {
            done.insert(id.to_string());
        }
    }
    Ok(done)
}

/// Settings of one dataset build.
#[derive(Debug, Clone)]
pub struct DatasetBuildConfig {
    /// Rollouts per step.
    pub m: usize,
    /// Keep only samples whose problem category is in this set.
    pub categories: Option<BTreeSet<String>>,
    /// Samples processed concurrently.
    pub parallelism: usize,
    /// Root seed for completer rollouts; per-sample seeds derive from it.
    pub seed: Option<u64>,
}

impl Default for DatasetBuildConfig {
    fn default() -> Self {
        Self {
            m: 8,
            categories: None,
            parallelism: 4,
            seed: None,
        }
    }
}

enum Processed {
    Sample(Box<TrainingSample>),
    Failed { id: String, reason: &'static str },
}

async fn process_sample(
    problem: Problem,
    solution: Solution,
    world: &LabelWorld,
    cfg: &DatasetBuildConfig,
) -> Processed {
    let judge = match judge_annotate(
        &problem,
        &solution,
        &world.judge,
        &world.judge_template,
        &world.judge_params,
        &world.parser,
    )
    .await
    {
        Ok(j) => j,
        Err(_) => {
            return Processed::Failed {
                id: problem.id,
                reason: "judge_error",
            }
        }
    };
    let mut completer_params = world.completer_params.clone();
    completer_params.seed = cfg.seed.map(|s| derive_seed(s, &problem.id));
    let mc = match label_solution(&problem, &solution, world, cfg.m, &completer_params).await {
        Ok(l) => l,
        Err(_) => {
            return Processed::Failed {
                id: problem.id,
                reason: "labeling_error",
            }
        }
    };
    match agreement_filter(&judge, &mc) {
        Ok(verdict) => Processed::Sample(Box::new(TrainingSample {
            problem,
            solution,
            annotations: judge.steps,
            refined_step: judge.refined_step,
            mc_labels: mc,
            filter_verdict: verdict,
        })),
        Err(_) => Processed::Failed {
            id: problem.id,
            reason: "coverage_mismatch",
        },
    }
}

/// Run the full labeling pipeline over a solutions file: judge annotation,
/// per-step Monte Carlo labels, agreement filtering. Kept samples append to
/// the output dataset; every processed id appends to the checkpoint, so an
/// interrupted build resumes where it stopped. Per-sample failures are
/// recorded in the stats and never abort the stream.
pub async fn build_dataset(
    input_path: impl AsRef<Path>,
    output_path: impl AsRef<Path>,
    checkpoint_path: impl AsRef<Path>,
    world: &LabelWorld,
    cfg: &DatasetBuildConfig,
) -> Result<DatasetStats, LabelError> {
    let output_path = output_path.as_ref();
    let checkpoint_path = checkpoint_path.as_ref();
    let items = read_solutions(input_path)?;
    let done = read_checkpoint(checkpoint_path)?;

    let mut stats = DatasetStats::default();
    let mut pending = Vec::new();
    for (problem, solution) in items {
        if let Some(categories) = &cfg.categories {
            let keep = problem
                .category
                .as_ref()
                .is_some_and(|c| categories.contains(c));
            if !keep {
                stats.category_skipped += 1;
                continue;
            }
        }
        if done.contains(&problem.id) {
            stats.resumed_skipped += 1;
            continue;
        }
        pending.push((problem, solution));
    }

    let fresh_output = !output_path.exists() || done.is_empty();
    let mut out = if fresh_output {
        let mut f = fs::File::create(output_path)?;
        writeln!(f, "{{\"schema\":\"{DATASET_SCHEMA}\"}}")?;
        f
    } else {
        OpenOptions::new().append(true).open(output_path)?
    };
    let mut checkpoint = OpenOptions::new()
        .create(true)
        .append(true)
        .open(checkpoint_path)?;

    let mut processed = stream::iter(
        pending
            .into_iter()
            .map(|(p, s)| process_sample(p, s, world, cfg)),
    )
    .buffered(cfg.parallelism.max(1));

    while let Some(result) = processed.next().await {
        stats.total += 1;
        match result {
            Processed::Sample(sample) => {
                let id = sample.problem.id.clone();
                match &sample.filter_verdict {
                    FilterVerdict::Kept => {
                        stats.kept += 1;
                        if sample.refined_step.is_some()
                            || sample
                                .annotations
                                .iter()
                                .any(|a| a.final_judgment == crate::backends::Judgment::Incorrect)
                        {
                            stats.flawed_count += 1;
                        } else {
                            stats.all_correct_count += 1;
                        }
                        writeln!(out, "{}", serde_json::to_string(sample.as_ref())?)?;
                    }
                    FilterVerdict::Dropped { .. } => {
                        stats.drop_one("mc_disagreement");
                    }
                }
                writeln!(checkpoint, "{}", serde_json::json!({ "id": id }))?;
            }
            Processed::Failed { id, reason } => {
                stats.drop_one(reason);
                writeln!(checkpoint, "{}", serde_json::json!({ "id": id }))?;
            }
        }
    }
    Ok(stats)
}
