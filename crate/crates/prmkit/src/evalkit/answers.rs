//! Answer extraction, canonicalization, and matching.
//!
//! Multi-choice answers reduce to a single uppercase option label. Free-form
//! answers are trimmed, stripped of a trailing period, unicode minus signs
//! are normalized, and numerals (including `a/b` fractions and comma-grouped
//! digits) are parsed so that `12.50`, `12.5`, and `25/2` share one canonical
//! form. Matching is numeric within a relative tolerance of 1e-6 when both
//! sides parse as numbers, canonical string equality otherwise.

use std::sync::LazyLock;

use regex::Regex;

use crate::domain::AnswerKind;

pub const FREEFORM_REL_TOL: f64 = 1e-6;

// Labels cover A-H: wide enough for every benchmark in scope, narrow enough
// that prose like "I think B" extracts B rather than the pronoun.
static UPPER_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b([A-H])\b").expect("static regex"));
static LOWER_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b([a-h])\b").expect("static regex"));

/// Reduce raw answer text to canonical form; `None` when nothing usable
/// remains.
pub fn canonical_answer(raw: &str, kind: AnswerKind) -> Option<String> {
    let text = raw.trim();
    if text.is_empty() {
        return None;
    }
    match kind {
        AnswerKind::MultiChoice => {
            if let Some(c) = UPPER_LABEL.captures(text) {
                return Some(c[1].to_string());
            }
            LOWER_LABEL
                .captures(text)
                .map(|c| c[1].to_ascii_uppercase())
        }
        AnswerKind::FreeForm => {
            let mut t = text.replace('\u{2212}', "-");
            t = t.trim().trim_end_matches('.').trim().to_string();
            if t.is_empty() {
                return None;
            }
            if let Some(v) = parse_numeral(&t) {
                return Some(format_number(v));
            }
            // canonical string form: collapse internal whitespace
            Some(t.split_whitespace().collect::<Vec<_>>().join(" "))
        }
    }
}

/// Parse a numeral: plain decimal (commas allowed as digit grouping, a
/// leading `$` tolerated) or an `a/b` fraction.
pub fn parse_numeral(text: &str) -> Option<f64> {
    let t = text.trim().trim_start_matches('$').replace(',', "");
    if let Some((num, den)) = t.split_once('/') {
        let n: f64 = num.trim().parse().ok()?;
        let d: f64 = den.trim().parse().ok()?;
        if d == 0.0 {
            return None;
        }
        return Some(n / d);
    }
    t.parse().ok()
}

/// Shortest round-trip decimal form, so `12.50` and `12.5` render alike.
fn format_number(v: f64) -> String {
    format!("{v}")
}

/// Extract the canonical final answer from raw model output: the first
/// non-empty line after the last occurrence of `marker`, canonicalized per
/// answer kind. `None` when the marker never appears or nothing usable
/// follows it.
pub fn extract_final_answer(raw: &str, kind: AnswerKind, marker: &str) -> Option<String> {
    if marker.is_empty() {
        return None;
    }
    let lower = raw.to_lowercase();
    let pos = lower.rfind(&marker.to_lowercase())?;
    if !raw.is_char_boundary(pos) || pos + marker.len() > raw.len() {
        return None;
    }
    let after = &raw[pos + marker.len()..];
    let line = after.lines().map(str::trim).find(|l| !l.is_empty())?;
    canonical_answer(line, kind)
}

/// Whether a predicted answer matches the gold answer. Absent predictions
/// never match.
pub fn answers_match(pred: Option<&str>, gold: &str, kind: AnswerKind) -> bool {
    let Some(pred) = pred else {
        return false;
    };
    let (Some(p), Some(g)) = (canonical_answer(pred, kind), canonical_answer(gold, kind)) else {
        return false;
    };
    match kind {
        AnswerKind::MultiChoice => p == g,
        AnswerKind::FreeForm => match (parse_numeral(&p), parse_numeral(&g)) {
            (Some(a), Some(b)) => {
                let scale = a.abs().max(b.abs());
                a == b || (a - b).abs() <= FREEFORM_REL_TOL * scale
            }
            _ => p == g,
        },
    }
}
