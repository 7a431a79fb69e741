//! Benchmark ingestion, answer matching, metrics, run persistence, and
//! report rendering.
//!
//! Benchmark files are JSONL: a header line
//! `{"schema":"benchmark/1","name":...,"split":...}` followed by one problem
//! record per line. Invalid records are collected into a rejects report
//! instead of failing the load.

pub mod answers;
pub mod metrics;
pub mod report;
pub mod run_store;

pub use answers::{answers_match, canonical_answer, extract_final_answer};
pub use metrics::{accuracy, pass_at_k};
pub use report::{render_csv, render_markdown, ReportFormat};
pub use run_store::{
    compute_summary, load_run, store_run_shell, MetricsSummary, ProblemOutcome, RunRecord,
    TraceWriter,
};

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AnswerKind, Choice, Problem, SourceInfo};

pub const BENCHMARK_SCHEMA: &str = "benchmark/1";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("schema mismatch: expected `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error("benchmark contains no valid problems")]
    EmptyBenchmark,
    #[error("empty result list")]
    EmptyResults,
    #[error("{0}")]
    Domain(String),
    #[error("run record is inconsistent: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One loaded benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkFile {
    pub name: String,
    pub split: String,
    pub problems: Vec<Problem>,
}

/// A record that failed validation, with the 1-based line it came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct BenchmarkLoad {
    pub benchmark: BenchmarkFile,
    pub rejects: Vec<RejectedRecord>,
}

#[derive(Debug, Deserialize)]
struct BenchmarkHeader {
    schema: String,
    name: String,
    split: String,
}

#[derive(Debug, Deserialize)]
struct ProblemRecord {
    id: String,
    question: String,
    #[serde(default)]
    images: Vec<String>,
    answer_kind: AnswerKind,
    #[serde(default)]
    choices: Vec<Choice>,
    gold_answer: Option<String>,
    #[serde(default)]
    category: Option<String>,
}

/// Load a benchmark file: header first, then one problem per line. Valid
/// records load; invalid ones land in the rejects report.
pub fn load_benchmark(path: impl AsRef<Path>) -> Result<BenchmarkLoad, EvalError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());

    let (_, header_line) = lines.next().ok_or(EvalError::EmptyBenchmark)?;
    let header: BenchmarkHeader =
        serde_json::from_str(header_line).map_err(|e| EvalError::SchemaMismatch {
            expected: BENCHMARK_SCHEMA.into(),
            found: format!("unparseable header: {e}"),
        })?;
    if header.schema != BENCHMARK_SCHEMA {
        return Err(EvalError::SchemaMismatch {
            expected: BENCHMARK_SCHEMA.into(),
            found: header.schema,
        });
    }

    let mut problems = Vec::new();
    let mut rejects = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let record: ProblemRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                rejects.push(RejectedRecord {
                    line: line_no,
                    reason: format!("invalid json: {e}"),
                });
                continue;
            }
        };
        let Some(gold_answer) = record.gold_answer else {
            rejects.push(RejectedRecord {
                line: line_no,
                reason: format!("record `{}` missing gold_answer", record.id),
            });
            continue;
        };
        let problem = Problem {
            id: record.id,
            question: record.question,
            images: record.images,
            answer_kind: record.answer_kind,
            choices: record.choices,
            gold_answer,
            source: Some(SourceInfo {
                benchmark: header.name.clone(),
                split: header.split.clone(),
            }),
            category: record.category,
        };
        if let Err(e) = problem.validate() {
            rejects.push(RejectedRecord {
                line: line_no,
                reason: e.to_string(),
            });
            continue;
        }
        if !seen_ids.insert(problem.id.clone()) {
            rejects.push(RejectedRecord {
                line: line_no,
                reason: format!("duplicate id `{}`", problem.id),
            });
            continue;
        }
        problems.push(problem);
    }

    if problems.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }
    Ok(BenchmarkLoad {
        benchmark: BenchmarkFile {
            name: header.name,
            split: header.split,
            problems,
        },
        rejects,
    })
}
