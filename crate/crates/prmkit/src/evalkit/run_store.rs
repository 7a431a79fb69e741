//! Run persistence.
//!
//! A run directory holds `config.json`, one JSONL trace per problem under
//! `traces/`, and `summary.{json,csv,md}`. Each trace file carries the
//! ordered event log of that problem's run followed by a final
//! `{"event":"outcome","data":{...}}` line; the outcome line is what makes a
//! problem count as completed when a run resumes. Metrics are stored
//! redundantly in `summary.json` and recomputed and verified on load.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{accuracy, pass_at_k, EvalError};
use crate::refined_bon::TraceEvent;

/// Per-problem result: the selected answer plus the correctness of every
/// candidate in the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemOutcome {
    pub problem_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_answer: Option<String>,
    pub selected_correct: bool,
    pub pool_answers: Vec<Option<String>>,
    pub pool_bits: Vec<bool>,
}

/// Aggregate metrics over a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub problems: usize,
    /// Pool size per problem (0 when the run held no problems).
    pub n: usize,
    /// Mean accuracy over all pooled samples (the N-sets-of-answers baseline).
    pub baseline_pct: f64,
    /// Selected-answer accuracy of the evaluated mode.
    pub mode_pct: f64,
    pub delta_pct: f64,
    /// Mean pass@n over problems, n being the pool size.
    pub pass_at_n_pct: f64,
}

/// Compute run metrics from per-problem outcomes. For the `baseline` mode the
/// mode accuracy is the baseline itself (no selection happens there).
pub fn compute_summary(
    outcomes: &[ProblemOutcome],
    mode: &str,
) -> Result<MetricsSummary, EvalError> {
    if outcomes.is_empty() {
        return Ok(MetricsSummary {
            problems: 0,
            n: 0,
            baseline_pct: 0.0,
            mode_pct: 0.0,
            delta_pct: 0.0,
            pass_at_n_pct: 0.0,
        });
    }
    let all_bits: Vec<bool> = outcomes.iter().flat_map(|o| o.pool_bits.clone()).collect();
    let baseline_pct = accuracy(&all_bits)?;
    let selected_bits: Vec<bool> = outcomes.iter().map(|o| o.selected_correct).collect();
    let mode_pct = if mode == "baseline" {
        baseline_pct
    } else {
        accuracy(&selected_bits)?
    };
    let mut pass_sum = 0.0;
    for o in outcomes {
        let n = o.pool_bits.len() as u64;
        let c = o.pool_bits.iter().filter(|b| **b).count() as u64;
        pass_sum += if n == 0 { 0.0 } else { pass_at_k(n, c, n)? };
    }
    let pass_at_n_pct = 100.0 * pass_sum / outcomes.len() as f64;
    Ok(MetricsSummary {
        problems: outcomes.len(),
        n: outcomes.first().map(|o| o.pool_bits.len()).unwrap_or(0),
        baseline_pct,
        mode_pct,
        delta_pct: mode_pct - baseline_pct,
        pass_at_n_pct,
    })
}

/// A whole persisted run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub mode: String,
    pub benchmark_name: String,
    pub benchmark_split: String,
    /// Full configuration snapshot for reproduction.
    pub config: serde_json::Value,
    #[serde(skip)]
    pub outcomes: Vec<ProblemOutcome>,
    #[serde(skip)]
    pub summary: Option<MetricsSummary>,
}

pub fn traces_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("traces")
}

fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn trace_path(run_dir: &Path, problem_id: &str) -> PathBuf {
    traces_dir(run_dir).join(format!("{}.jsonl", sanitize_id(problem_id)))
}

/// Create the run directory and write `config.json`.
pub fn store_run_shell(run_dir: &Path, record: &RunRecord) -> Result<(), EvalError> {
    fs::create_dir_all(traces_dir(run_dir))?;
    let config = json!({
        "schema": "run-config/1",
        "run_id": record.run_id,
        "mode": record.mode,
        "benchmark_name": record.benchmark_name,
        "benchmark_split": record.benchmark_split,
        "config": record.config,
    });
    fs::write(
        run_dir.join("config.json"),
        serde_json::to_string_pretty(&config)?,
    )?;
    Ok(())
}

/// Serialized writer for one problem's trace file.
pub struct TraceWriter;

impl TraceWriter {
    /// Write a complete per-problem trace: every event, then the outcome.
    pub fn write(
        run_dir: &Path,
        problem_id: &str,
        events: &[TraceEvent],
        outcome: &ProblemOutcome,
    ) -> Result<(), EvalError> {
        let mut out = String::new();
        for e in events {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&json!({
            "event": "outcome",
            "data": outcome,
        }))?);
        out.push('\n');
        fs::write(trace_path(run_dir, problem_id), out)?;
        Ok(())
    }

    /// The outcome stored in a trace file, if the file exists and is
    /// complete. Incomplete traces (no outcome line) read as `None` so an
    /// interrupted problem reruns.
    pub fn read_outcome(
        run_dir: &Path,
        problem_id: &str,
    ) -> Result<Option<ProblemOutcome>, EvalError> {
        let path = trace_path(run_dir, problem_id);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(path)?;
        for line in text.lines().rev() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line)?;
            if value.get("event").and_then(|v| v.as_str()) == Some("outcome") {
                let outcome: ProblemOutcome = serde_json::from_value(value["data"].clone())?;
                return Ok(Some(outcome));
            }
            return Ok(None);
        }
        Ok(None)
    }
}

/// Write `summary.json` (the redundant metrics copy verified on load).
pub fn store_summary(run_dir: &Path, summary: &MetricsSummary) -> Result<(), EvalError> {
    fs::write(
        run_dir.join("summary.json"),
        serde_json::to_string_pretty(summary)?,
    )?;
    Ok(())
}

/// Load a run directory: config, all trace outcomes (sorted by file name),
/// and the stored summary, which is recomputed and verified.
pub fn load_run(run_dir: &Path) -> Result<RunRecord, EvalError> {
    let config_text = fs::read_to_string(run_dir.join("config.json"))?;
    let config: serde_json::Value = serde_json::from_str(&config_text)?;
    if config["schema"].as_str() != Some("run-config/1") {
        return Err(EvalError::SchemaMismatch {
            expected: "run-config/1".into(),
            found: config["schema"].to_string(),
        });
    }
    let mut record = RunRecord {
        run_id: config["run_id"].as_str().unwrap_or_default().to_string(),
        mode: config["mode"].as_str().unwrap_or_default().to_string(),
        benchmark_name: config["benchmark_name"]
            .as_str()
            .unwrap_or_default()
            .to_string(),
        benchmark_split: config["benchmark_split"]
            .as_str()
            .unwrap_or_default()
            .to_string(),
        config: config["config"].clone(),
        outcomes: Vec::new(),
        summary: None,
    };

    let mut trace_files: Vec<PathBuf> = Vec::new();
    let dir = traces_dir(run_dir);
    if dir.exists() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                trace_files.push(path);
            }
        }
    }
    trace_files.sort();
    for path in trace_files {
        let text = fs::read_to_string(&path)?;
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line)?;
            if value.get("event").and_then(|v| v.as_str()) == Some("outcome") {
                record
                    .outcomes
                    .push(serde_json::from_value(value["data"].clone())?);
            }
        }
    }

    let recomputed = compute_summary(&record.outcomes, &record.mode)?;
    let summary_path = run_dir.join("summary.json");
    if summary_path.exists() {
        let stored: MetricsSummary = serde_json::from_str(&fs::read_to_string(summary_path)?)?;
        if stored != recomputed {
            return Err(EvalError::Corrupt(format!(
                "stored summary {stored:?} disagrees with recomputed {recomputed:?}"
            )));
        }
    }
    record.summary = Some(recomputed);
    Ok(record)
}
