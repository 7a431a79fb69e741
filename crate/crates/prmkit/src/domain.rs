//! Domain value objects and the step-segmentation grammar.
//!
//! Everything here is an immutable value after construction and safe to share
//! across tasks. Images are opaque payloads (a data URL, remote URL, or file
//! path) that are forwarded to backends verbatim and never decoded.
//!
//! Model output is segmented into steps by the heading grammar `Step <k>:`,
//! matched case-insensitively at the start of a line. Step indices are
//! assigned positionally (1..T) so that misnumbered or restarted headings in
//! model output cannot break contiguity. Text after the template's answer
//! marker (default `Final Answer:`) becomes the extracted final answer.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("model output is empty")]
    EmptyOutput,
    #[error("step indices must be contiguous from 1: expected {expected}, got {got}")]
    IndexGap { expected: usize, got: usize },
    #[error("template `{name}` is invalid: {reason}")]
    InvalidTemplate { name: String, reason: String },
    #[error("problem `{id}` is invalid: {reason}")]
    InvalidProblem { id: String, reason: String },
}

/// How a problem's answer is expressed and matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    MultiChoice,
    FreeForm,
}

/// One labeled option of a multi-choice problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

/// Benchmark provenance of a problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub benchmark: String,
    pub split: String,
}

/// One benchmark item: question text, opaque image payloads, and the gold
/// answer it is graded against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub question: String,
    /// Opaque image payloads, forwarded to backends exactly as stored.
    #[serde(default)]
    pub images: Vec<String>,
    pub answer_kind: AnswerKind,
    #[serde(default)]
    pub choices: Vec<Choice>,
    pub gold_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl Problem {
    /// Structural checks: multi-choice problems need options and a gold answer
    /// that is one of the option labels.
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.answer_kind == AnswerKind::MultiChoice {
            if self.choices.is_empty() {
                return Err(DomainError::InvalidProblem {
                    id: self.id.clone(),
                    reason: "multi-choice problem has no choices".into(),
                });
            }
            if !self.choices.iter().any(|c| c.label == self.gold_answer) {
                return Err(DomainError::InvalidProblem {
                    id: self.id.clone(),
                    reason: format!(
                        "gold answer `{}` is not among the choice labels",
                        self.gold_answer
                    ),
                });
            }
        }
        if self.id.trim().is_empty() {
            return Err(DomainError::InvalidProblem {
                id: self.id.clone(),
                reason: "empty id".into(),
            });
        }
        Ok(())
    }
}

/// One reasoning step. Indices are 1-based and contiguous within a solution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub text: String,
}

impl Step {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        Self {
            index,
            text: text.into(),
        }
    }
}

/// Lifecycle flags for a sampled solution.
///
/// `Failed` marks the sentinel produced when a backend call exhausts its
/// retries; `Degenerate` marks a continuation that added no new step. Both
/// stay in candidate pools so pool-size accounting remains exact, but they are
/// never selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionStatus {
    #[default]
    Ok,
    Failed,
    Degenerate,
}

/// An ordered sequence of reasoning steps plus the extracted final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    pub raw_text: String,
    #[serde(default)]
    pub status: SolutionStatus,
}

impl Solution {
    /// Sentinel for a sample whose backend call failed after all retries.
    pub fn failed() -> Self {
        Self {
            steps: Vec::new(),
            final_answer: None,
            raw_text: String::new(),
            status: SolutionStatus::Failed,
        }
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// True when the solution carries at least one step and did not fail.
    pub fn is_usable(&self) -> bool {
        self.status != SolutionStatus::Failed && !self.steps.is_empty()
    }

    /// Canonical text form: `Step i: ...` lines plus the answer line when an
    /// answer was extracted. Re-parsing this text yields the same steps.
    pub fn canonical_text(&self, marker: &str) -> String {
        let mut out = render_steps_block(&self.steps);
        if let Some(answer) = &self.final_answer {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(marker);
            out.push(' ');
            out.push_str(answer);
        }
        out
    }
}

static STEP_HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[ \t]*step[ \t]+(\d+)[ \t]*:").expect("static regex"));

/// Split raw model output into steps on `Step <k>:` headings and extract the
/// text after `marker` as the final answer.
///
/// Headings are matched case-insensitively at line starts; step indices are
/// positional, so the literal numbers in the headings are not trusted. Text
/// before the first heading becomes the first step. When no heading is found
/// the whole body is a single step. A trailing heading with an empty body
/// (a continuation cue the model never filled) is dropped.
pub fn parse_solution_text(raw: &str, marker: &str) -> Result<Solution, DomainError> {
    if raw.trim().is_empty() {
        return Err(DomainError::EmptyOutput);
    }

    let (body, final_answer) = split_on_marker(raw, marker);

    let mut segments: Vec<String> = Vec::new();
    let mut last_end = 0usize;
    for m in STEP_HEADING.find_iter(body) {
        let before = body[last_end..m.start()].trim();
        if !before.is_empty() {
            segments.push(before.to_string());
        }
        last_end = m.end();
    }
    let tail = body[last_end..].trim();
    if !tail.is_empty() {
        segments.push(tail.to_string());
    }
    if segments.is_empty() {
        // No headings and an empty body before the marker: keep the whole
        // output as a single step so T >= 1 holds.
        let whole = raw.trim();
        segments.push(whole.to_string());
    }

    let steps = segments
        .into_iter()
        .enumerate()
        .map(|(i, text)| Step::new(i + 1, text))
        .collect();

    Ok(Solution {
        steps,
        final_answer,
        raw_text: raw.to_string(),
        status: SolutionStatus::Ok,
    })
}

/// Split `raw` at the last case-insensitive occurrence of `marker`; the text
/// after it (first non-empty line) is the answer.
fn split_on_marker<'a>(raw: &'a str, marker: &str) -> (&'a str, Option<String>) {
    if marker.is_empty() {
        return (raw, None);
    }
    let lower_raw = raw.to_lowercase();
    let lower_marker = marker.to_lowercase();
    match lower_raw.rfind(&lower_marker) {
        Some(pos) => {
            // `to_lowercase` preserves offsets for ASCII; for non-ASCII text
            // fall back to a char-boundary-safe scan.
            let (body, after) = if raw.is_char_boundary(pos) && pos + marker.len() <= raw.len() {
                (&raw[..pos], &raw[pos + marker.len()..])
            } else {
                return (raw, None);
            };
            let answer = after
                .lines()
                .map(str::trim)
                .find(|l| !l.is_empty())
                .map(str::to_string);
            (body, answer)
        }
        None => (raw, None),
    }
}

/// A prompt template with `{question}`, `{choices}`, and `{steps}`
/// placeholders plus the literal marker the model must emit before its final
/// answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub answer_marker: String,
}

pub const QUESTION_PLACEHOLDER: &str = "{question}";
pub const CHOICES_PLACEHOLDER: &str = "{choices}";
pub const STEPS_PLACEHOLDER: &str = "{steps}";

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !self.body.contains(QUESTION_PLACEHOLDER) {
            return Err(DomainError::InvalidTemplate {
                name: self.name.clone(),
                reason: format!("body lacks the {QUESTION_PLACEHOLDER} placeholder"),
            });
        }
        if self.answer_marker.trim().is_empty() {
            return Err(DomainError::InvalidTemplate {
                name: self.name.clone(),
                reason: "answer marker is empty".into(),
            });
        }
        Ok(())
    }

    /// Built-in template for multi-choice problems.
    pub fn default_multichoice() -> Self {
        Self {
            name: "multichoice".into(),
            body: "Answer the following multiple choice question about the given image. \
                   Reason step by step, writing each step on its own line as `Step <k>: ...`, \
                   then give the letter of the correct option on a final line starting with \
                   `Final Answer:`.\n\nQuestion: {question}\nOptions:\n{choices}\n\n{steps}"
                .into(),
            answer_marker: "Final Answer:".into(),
        }
    }

    /// Built-in template for free-form numeric or symbolic answers.
    pub fn default_freeform() -> Self {
        Self {
            name: "freeform".into(),
            body: "Solve the following problem about the given image. Reason step by step, \
                   writing each step on its own line as `Step <k>: ...`, then give the final \
                   answer on a final line starting with `Final Answer:`.\n\n\
                   Question: {question}\n\n{steps}"
                .into(),
            answer_marker: "Final Answer:".into(),
        }
    }

    /// Built-in critique template for step-level review: asks for the four
    /// labeled sections per step and a corrected first erroneous step.
    pub fn default_critique() -> Self {
        Self {
            name: "critique".into(),
            body: "Review the candidate solution to the problem below step by step, using the \
                   image. For each step, write exactly these sections:\n\
                   Step Intent: <what the step is trying to do>\n\
                   Image Alignment: <Correct|Incorrect>. <critique>\n\
                   Reasoning Logic: <Correct|Incorrect>. <critique>\n\
                   Final Judgment: <Correct|Incorrect>\n\
                   Stop at the first step whose Final Judgment is Incorrect and add:\n\
                   Refined Step: <a corrected version of that step>\n\n\
                   Question: {question}\n{choices}\n\nCandidate solution:\n{steps}"
                .into(),
            answer_marker: "Final Judgment:".into(),
        }
    }

    fn fill_common(&self, problem: &Problem) -> String {
        let choices = render_choices(problem);
        self.body
            .replace(QUESTION_PLACEHOLDER, &problem.question)
            .replace(CHOICES_PLACEHOLDER, &choices)
    }
}

fn render_choices(problem: &Problem) -> String {
    problem
        .choices
        .iter()
        .map(|c| format!("{}. {}", c.label, c.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Join steps as canonical `Step i: ...` lines.
pub fn render_steps_block(steps: &[Step]) -> String {
    steps
        .iter()
        .map(|s| format!("Step {}: {}", s.index, s.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Render the from-scratch generation prompt for a problem.
pub fn render_prompt(problem: &Problem, template: &PromptTemplate) -> Result<String, DomainError> {
    template.validate()?;
    Ok(template
        .fill_common(problem)
        .replace(STEPS_PLACEHOLDER, "")
        .trim_end()
        .to_string())
}

/// Render the full critique prompt embedding the whole candidate solution.
pub fn render_critique_prompt(
    problem: &Problem,
    solution: &Solution,
    template: &PromptTemplate,
) -> Result<String, DomainError> {
    template.validate()?;
    let body = render_steps_block(&solution.steps)
        + &solution
            .final_answer
            .as_ref()
            .map(|a| format!("\nFinal Answer: {a}"))
            .unwrap_or_default();
    Ok(template
        .fill_common(problem)
        .replace(STEPS_PLACEHOLDER, &body)
        .trim_end()
        .to_string())
}

/// A rendered continuation prompt plus the steps it already embeds.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrefix {
    /// Prompt text ending at the cue for the next step.
    pub prompt: String,
    /// Validated steps plus the refined step, in order.
    pub steps: Vec<Step>,
    /// Index the policy model must emit next.
    pub next_index: usize,
}

/// Render the continuation prompt embedding the question, all validated
/// steps, and the refined step, ending at the cue `Step <next>:`.
pub fn render_prefix(
    problem: &Problem,
    validated: &[Step],
    refined: Option<&Step>,
    template: &PromptTemplate,
) -> Result<RenderedPrefix, DomainError> {
    template.validate()?;
    for (i, step) in validated.iter().enumerate() {
        if step.index != i + 1 {
            return Err(DomainError::IndexGap {
                expected: i + 1,
                got: step.index,
            });
        }
    }
    let mut steps: Vec<Step> = validated.to_vec();
    if let Some(r) = refined {
        if r.index != validated.len() + 1 {
            return Err(DomainError::IndexGap {
                expected: validated.len() + 1,
                got: r.index,
            });
        }
        steps.push(r.clone());
    }
    let next_index = steps.len() + 1;
    let mut block = render_steps_block(&steps);
    if !block.is_empty() {
        block.push('\n');
    }
    block.push_str(&format!("Step {next_index}:"));
    let prompt = template
        .fill_common(problem)
        .replace(STEPS_PLACEHOLDER, &block)
        .trim_end()
        .to_string();
    Ok(RenderedPrefix {
        prompt,
        steps,
        next_index,
    })
}
