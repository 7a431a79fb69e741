//! Parser for generative step-level critiques.
//!
//! The reviewer model writes one labeled block per step:
//!
//! ```text
//! Step Intent: <what the step is trying to do>
//! Image Alignment: <Correct|Incorrect>. <critique>
//! Reasoning Logic: <Correct|Incorrect>. <critique>
//! Final Judgment: <Correct|Incorrect>
//! ```
//!
//! followed, when the final judgment of a step is `Incorrect`, by
//!
//! ```text
//! Refined Step: <a corrected version of that step>
//! ```
//!
//! Parsing stops at the first step judged incorrect; anything after its
//! refined step is ignored. An incorrect aspect judgment forces the step's
//! final judgment to incorrect. Section labels are configurable through
//! [`CritiqueLabels`]; matching is case-insensitive at line starts, and
//! unlabeled lines continue the current section.
//!
//! When the backend returned token log-probabilities, the parser locates the
//! judgment token at each final-judgment position and records
//! `exp(logprob)` for the emitted token and for its alternative when the
//! alternative appears among the returned top candidates; a missing
//! alternative is pinned to probability zero and the step is flagged
//! `prob_incomplete`.

use std::sync::LazyLock;

use regex::Regex;

use crate::domain::Step;

use super::{AspectVerdict, BackendError, Judgment, StepCritique, StepwiseCritique, TokenLogprob};

/// Section labels of the critique grammar.
#[derive(Debug, Clone)]
pub struct CritiqueLabels {
    pub step_intent: String,
    pub image_alignment: String,
    pub reasoning_logic: String,
    pub final_judgment: String,
    pub refined_step: String,
}

impl Default for CritiqueLabels {
    fn default() -> Self {
        Self {
            step_intent: "Step Intent:".into(),
            image_alignment: "Image Alignment:".into(),
            reasoning_logic: "Reasoning Logic:".into(),
            final_judgment: "Final Judgment:".into(),
            refined_step: "Refined Step:".into(),
        }
    }
}

/// Reusable parser with a fixed label set.
#[derive(Debug, Clone, Default)]
pub struct PrmOutputParser {
    pub labels: CritiqueLabels,
}

/// Parse a critique with the default labels.
pub fn parse_prm_output(
    raw: &str,
    token_logprobs: Option<&[TokenLogprob]>,
) -> Result<StepwiseCritique, BackendError> {
    PrmOutputParser::default().parse(raw, token_logprobs)
}

static STEP_HEADING_ONLY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*step\s+\d+\s*:\s*$").expect("static regex"));
static VERDICT_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(correct|incorrect)\b").expect("static regex"));

#[derive(Debug, Default)]
struct PartialBlock {
    intent: Option<String>,
    image: Option<AspectVerdict>,
    logic: Option<AspectVerdict>,
    written_judgment: Option<Judgment>,
    verdict_offset: usize,
}

struct ParsedBlock {
    intent: String,
    image: AspectVerdict,
    logic: AspectVerdict,
    written_judgment: Judgment,
    effective_judgment: Judgment,
    verdict_offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    None,
    Intent,
    ImageCritique,
    LogicCritique,
    Refined,
}

impl PrmOutputParser {
    pub fn new(labels: CritiqueLabels) -> Self {
        Self { labels }
    }

    pub fn parse(
        &self,
        raw: &str,
        token_logprobs: Option<&[TokenLogprob]>,
    ) -> Result<StepwiseCritique, BackendError> {
        let mut blocks: Vec<ParsedBlock> = Vec::new();
        let mut current: Option<PartialBlock> = None;
        let mut section = Section::None;
        let mut refined: Option<String> = None;
        let mut stopped = false;

        let mut offset = 0usize;
        for segment in raw.split_inclusive('\n') {
            let line_offset = offset;
            offset += segment.len();
            let line = segment.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                continue;
            }
            if STEP_HEADING_ONLY.is_match(line) {
                continue;
            }

            if let Some((rest, rest_off)) = match_label(line, &self.labels.step_intent) {
                if stopped {
                    break;
                }
                let _ = rest_off;
                if let Some(block) = current.take() {
                    return Err(incomplete_block_error(line, raw, block));
                }
                current = Some(PartialBlock {
                    intent: Some(rest.trim().to_string()),
                    ..Default::default()
                });
                section = Section::Intent;
                continue;
            }

            if let Some((rest, _)) = match_label(line, &self.labels.image_alignment) {
                if stopped {
                    continue;
                }
                let block = current
                    .as_mut()
                    .ok_or_else(|| BackendError::CritiqueParse {
                        line: line.trim().to_string(),
                        raw: raw.to_string(),
                    })?;
                block.image = Some(parse_aspect(rest, line)?);
                section = Section::ImageCritique;
                continue;
            }

            if let Some((rest, _)) = match_label(line, &self.labels.reasoning_logic) {
                if stopped {
                    continue;
                }
                let block = current
                    .as_mut()
                    .ok_or_else(|| BackendError::CritiqueParse {
                        line: line.trim().to_string(),
                        raw: raw.to_string(),
                    })?;
                block.logic = Some(parse_aspect(rest, line)?);
                section = Section::LogicCritique;
                continue;
            }

            if let Some((rest, rest_off)) = match_label(line, &self.labels.final_judgment) {
                if stopped {
                    continue;
                }
                let mut block = current.take().ok_or_else(|| BackendError::CritiqueParse {
                    line: line.trim().to_string(),
                    raw: raw.to_string(),
                })?;
                let ws = rest.len() - rest.trim_start().len();
                let verdict = parse_verdict(rest.trim_start(), line)?;
                block.written_judgment = Some(verdict);
                block.verdict_offset = line_offset + rest_off + ws;
                let parsed = finalize_block(block, line, raw)?;
                let erred = parsed.effective_judgment == Judgment::Incorrect;
                blocks.push(parsed);
                section = Section::None;
                if erred {
                    stopped = true;
                }
                continue;
            }

            if let Some((rest, _)) = match_label(line, &self.labels.refined_step) {
                let last_is_error = blocks
                    .last()
                    .is_some_and(|b| b.effective_judgment == Judgment::Incorrect);
                if !last_is_error || refined.is_some() {
                    return Err(BackendError::CritiqueParse {
                        line: line.trim().to_string(),
                        raw: raw.to_string(),
                    });
                }
                refined = Some(rest.trim().to_string());
                section = Section::Refined;
                continue;
            }

            // Unlabeled line: continuation of the open section, noise otherwise.
            match section {
                Section::Intent => {
                    if let Some(b) = current.as_mut() {
                        append_line(b.intent.get_or_insert_with(String::new), line.trim());
                    }
                }
                Section::ImageCritique => {
                    if let Some(b) = current.as_mut() {
                        if let Some(a) = b.image.as_mut() {
                            append_line(&mut a.critique, line.trim());
                        }
                    }
                }
                Section::LogicCritique => {
                    if let Some(b) = current.as_mut() {
                        if let Some(a) = b.logic.as_mut() {
                            append_line(&mut a.critique, line.trim());
                        }
                    }
                }
                Section::Refined => {
                    if let Some(r) = refined.as_mut() {
                        append_line(r, line.trim());
                    }
                }
                Section::None => {}
            }
        }

        if let Some(block) = current {
            let line = raw.lines().last().unwrap_or("").trim().to_string();
            return Err(incomplete_block_error(&line, raw, block));
        }
        if blocks.is_empty() {
            return Err(BackendError::CritiqueParse {
                line: raw.lines().next().unwrap_or("").trim().to_string(),
                raw: raw.to_string(),
            });
        }

        let first_error = blocks
            .iter()
            .position(|b| b.effective_judgment == Judgment::Incorrect)
            .map(|i| i + 1);

        let mut steps: Vec<StepCritique> = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| StepCritique {
                step_index: i + 1,
                step_intent: b.intent.clone(),
                image_alignment: b.image.clone(),
                reasoning_logic: b.logic.clone(),
                final_judgment: b.effective_judgment,
                p_correct_token: None,
                p_incorrect_token: None,
                prob_incomplete: false,
            })
            .collect();

        if let Some(tokens) = token_logprobs {
            attach_probabilities(&mut steps, &blocks, raw, tokens);
        }

        let refined_step = refined.and_then(|text| {
            let text = text.trim().to_string();
            first_error.map(|t| Step::new(t, text))
        });

        Ok(StepwiseCritique {
            steps,
            first_error,
            refined_step,
            reasks: 0,
        })
    }
}

fn append_line(buf: &mut String, line: &str) {
    if !buf.is_empty() {
        buf.push(' ');
    }
    buf.push_str(line);
}

fn match_label<'a>(line: &'a str, label: &str) -> Option<(&'a str, usize)> {
    let ws = line.len() - line.trim_start().len();
    let t = &line[ws..];
    if t.len() >= label.len() && t[..label.len()].eq_ignore_ascii_case(label) {
        Some((&t[label.len()..], ws + label.len()))
    } else {
        None
    }
}

fn parse_verdict(text: &str, line: &str) -> Result<Judgment, BackendError> {
    let m = VERDICT_WORD
        .find(text)
        .ok_or_else(|| BackendError::MissingVerdict {
            line: line.trim().to_string(),
        })?;
    if m.as_str().eq_ignore_ascii_case("correct") {
        Ok(Judgment::Correct)
    } else {
        Ok(Judgment::Incorrect)
    }
}

fn parse_aspect(rest: &str, line: &str) -> Result<AspectVerdict, BackendError> {
    let text = rest.trim_start();
    let verdict = parse_verdict(text, line)?;
    let word_len = verdict.word().len();
    let critique = text[word_len..]
        .trim_start_matches(['.', ',', ':', ';', '-', '—', ' '])
        .trim()
        .to_string();
    Ok(AspectVerdict {
        critique,
        judgment: verdict,
    })
}

fn finalize_block(block: PartialBlock, line: &str, raw: &str) -> Result<ParsedBlock, BackendError> {
    let (Some(intent), Some(image), Some(logic), Some(written)) = (
        block.intent,
        block.image,
        block.logic,
        block.written_judgment,
    ) else {
        return Err(BackendError::CritiqueParse {
            line: line.trim().to_string(),
            raw: raw.to_string(),
        });
    };
    // An incorrect aspect forces the final judgment.
    let effective =
        if image.judgment == Judgment::Incorrect || logic.judgment == Judgment::Incorrect {
            Judgment::Incorrect
        } else {
            written
        };
    Ok(ParsedBlock {
        intent,
        image,
        logic,
        written_judgment: written,
        effective_judgment: effective,
        verdict_offset: block.verdict_offset,
    })
}

fn incomplete_block_error(line: &str, raw: &str, _block: PartialBlock) -> BackendError {
    BackendError::CritiqueParse {
        line: line.trim().to_string(),
        raw: raw.to_string(),
    }
}

/// True when a token plausibly spells (the beginning of) a judgment word.
fn token_matches(token: &str, word: &str) -> bool {
    let t = token.trim();
    if t.is_empty() {
        return false;
    }
    t.eq_ignore_ascii_case(word)
        || (t.len() >= 2 && word.len() >= t.len() && word[..t.len()].eq_ignore_ascii_case(t))
}

fn attach_probabilities(
    steps: &mut [StepCritique],
    blocks: &[ParsedBlock],
    raw: &str,
    tokens: &[TokenLogprob],
) {
    // Exact mode: token strings reconstruct the reply text, so each verdict
    // offset maps to the token covering it.
    let mut spans: Vec<(usize, usize)> = Vec::with_capacity(tokens.len());
    let mut cursor = 0usize;
    let mut aligned = true;
    for t in tokens {
        if raw[cursor..].starts_with(&t.token) {
            spans.push((cursor, cursor + t.token.len()));
            cursor += t.token.len();
        } else {
            aligned = false;
            break;
        }
    }
    let aligned = aligned
        && blocks
            .iter()
            .all(|b| spans.last().is_some_and(|(_, end)| b.verdict_offset < *end));

    let slot_token_for = |i: usize| -> Option<usize> {
        if aligned {
            let w = blocks[i].verdict_offset;
            spans.iter().position(|(s, e)| *s <= w && w < *e)
        } else {
            // Sparse mode: the k-th judgment-looking token belongs to the
            // k-th final-judgment slot.
            tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| {
                    token_matches(&t.token, "Correct") || token_matches(&t.token, "Incorrect")
                })
                .map(|(j, _)| j)
                .nth(i)
        }
    };

    for (i, step) in steps.iter_mut().enumerate() {
        let written = blocks[i].written_judgment;
        let Some(mut idx) = slot_token_for(i) else {
            step.prob_incomplete = true;
            continue;
        };
        // In exact mode the verdict may start at the next token boundary
        // when the covering token is pure whitespace or punctuation.
        if aligned && !token_matches(&tokens[idx].token, written.word()) {
            if idx + 1 < tokens.len() && token_matches(&tokens[idx + 1].token, written.word()) {
                idx += 1;
            } else {
                step.prob_incomplete = true;
                continue;
            }
        }
        let emitted = &tokens[idx];
        let p_emitted = emitted.logprob.exp();
        let alt_word = match written {
            Judgment::Correct => "Incorrect",
            Judgment::Incorrect => "Correct",
        };
        let p_alt = emitted
            .top
            .iter()
            .find(|t| token_matches(&t.token, alt_word) && !token_matches(&t.token, written.word()))
            .map(|t| t.logprob.exp());
        let (p_correct, p_incorrect) = match written {
            Judgment::Correct => (p_emitted, p_alt.unwrap_or(0.0)),
            Judgment::Incorrect => (p_alt.unwrap_or(0.0), p_emitted),
        };
        step.p_correct_token = Some(p_correct);
        step.p_incorrect_token = Some(p_incorrect);
        step.prob_incomplete = p_alt.is_none();
    }
}
