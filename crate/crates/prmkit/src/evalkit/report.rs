//! Report rendering.
//!
//! A summary has two blocks: the per-benchmark aggregate (baseline accuracy,
//! mode accuracy, delta, pass@n) and one row per problem. CSV and markdown
//! carry identical numbers; columns are in a fixed order; percentages are
//! rounded half-to-even to one decimal. Per-problem rows are sorted by
//! problem id so re-rendering from persisted traces reproduces the file
//! byte for byte.

use super::run_store::{ProblemOutcome, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// Round half-to-even at one decimal.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round_ties_even() / 10.0
}

fn fmt1(x: f64) -> String {
    format!("{:.1}", round1(x))
}

fn aggregate_header(record: &RunRecord) -> [String; 8] {
    let n = record
        .summary
        .as_ref()
        .map(|s| s.n.to_string())
        .unwrap_or_else(|| "n".into());
    [
        "benchmark".into(),
        "split".into(),
        "problems".into(),
        "n".into(),
        "baseline_pct".into(),
        format!("{}_pct", record.mode),
        "delta_pct".into(),
        format!("pass_at_{n}_pct"),
    ]
}

fn aggregate_row(record: &RunRecord) -> Option<[String; 8]> {
    let s = record.summary.as_ref()?;
    if s.problems == 0 {
        return None;
    }
    Some([
        record.benchmark_name.clone(),
        record.benchmark_split.clone(),
        s.problems.to_string(),
        s.n.to_string(),
        fmt1(s.baseline_pct),
        fmt1(s.mode_pct),
        fmt1(s.delta_pct),
        fmt1(s.pass_at_n_pct),
    ])
}

const PROBLEM_HEADER: [&str; 6] = [
    "problem_id",
    "selected_answer",
    "selected_correct",
    "pool_correct",
    "pool_size",
    "pass_at_n",
];

fn sorted_outcomes(record: &RunRecord) -> Vec<&ProblemOutcome> {
    let mut rows: Vec<&ProblemOutcome> = record.outcomes.iter().collect();
    rows.sort_by(|a, b| a.problem_id.cmp(&b.problem_id));
    rows
}

fn problem_row(o: &ProblemOutcome) -> [String; 6] {
    let c = o.pool_bits.iter().filter(|b| **b).count();
    [
        o.problem_id.clone(),
        o.selected_answer.clone().unwrap_or_default(),
        o.selected_correct.to_string(),
        c.to_string(),
        o.pool_bits.len().to_string(),
        if c > 0 { "1" } else { "0" }.to_string(),
    ]
}

pub fn render_csv(record: &RunRecord) -> String {
    let mut out = aggregate_header(record).join(",");
    out.push('\n');
    if let Some(row) = aggregate_row(record) {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.push('\n');
    out.push_str(&PROBLEM_HEADER.join(","));
    out.push('\n');
    for o in sorted_outcomes(record) {
        out.push_str(&problem_row(o).join(","));
        out.push('\n');
    }
    out
}

pub fn render_markdown(record: &RunRecord) -> String {
    let head = aggregate_header(record);
    let mut out = format!("| {} |\n", head.join(" | "));
    out.push_str(&format!("|{}\n", "---|".repeat(head.len())));
    if let Some(row) = aggregate_row(record) {
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    out.push('\n');
    out.push_str(&format!("| {} |\n", PROBLEM_HEADER.join(" | ")));
    out.push_str(&format!("|{}\n", "---|".repeat(PROBLEM_HEADER.len())));
    for o in sorted_outcomes(record) {
        out.push_str(&format!("| {} |\n", problem_row(o).join(" | ")));
    }
    out
}
