//! Shared helpers for integration tests: fixture problems, critique-reply
//! construction, and golden-file comparison.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use prmkit::backends::{TokenLogprob, TopToken};
use prmkit::domain::{AnswerKind, Choice, Problem};

pub fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    fs::read_to_string(fixture_path(name)).expect("fixture exists")
}

/// Compare against a stored golden file; regenerate it when `PRMKIT_BLESS`
/// is set.
pub fn golden_check(name: &str, actual: &str) {
    let path = fixture_path(name);
    if std::env::var_os("PRMKIT_BLESS").is_some() {
        fs::write(&path, actual).expect("write golden");
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("golden {name} missing; rerun with PRMKIT_BLESS=1"));
    assert_eq!(expected, actual, "golden mismatch for {name}");
}

pub fn freeform_problem(id: &str, question: &str, gold: &str) -> Problem {
    Problem {
        id: id.into(),
        question: question.into(),
        images: vec![format!("data:image/png;base64,{id}")],
        answer_kind: AnswerKind::FreeForm,
        choices: vec![],
        gold_answer: gold.into(),
        source: None,
        category: Some("plane_geometry".into()),
    }
}

pub fn multichoice_problem(id: &str, question: &str, gold: &str) -> Problem {
    Problem {
        id: id.into(),
        question: question.into(),
        images: vec![format!("data:image/png;base64,{id}")],
        answer_kind: AnswerKind::MultiChoice,
        choices: vec![
            Choice {
                label: "A".into(),
                text: "30".into(),
            },
            Choice {
                label: "B".into(),
                text: "60".into(),
            },
            Choice {
                label: "C".into(),
                text: "90".into(),
            },
        ],
        gold_answer: gold.into(),
        source: None,
        category: Some("plane_geometry".into()),
    }
}

/// Build a well-formed critique reply. One entry per step: `true` for a
/// correct final judgment. When the last entry is `false`, `refined` adds a
/// `Refined Step:` section.
pub fn critique_reply(judgments: &[bool], refined: Option<&str>) -> String {
    let mut out = String::new();
    for (i, ok) in judgments.iter().enumerate() {
        let verdict = if *ok { "Correct" } else { "Incorrect" };
        out.push_str(&format!(
            "Step Intent: carry out step {n} of the candidate solution\n\
             Image Alignment: Correct. Consistent with the figure.\n\
             Reasoning Logic: {verdict}. {detail}\n\
             Final Judgment: {verdict}\n",
            n = i + 1,
            detail = if *ok {
                "The computation checks out."
            } else {
                "The computation is wrong."
            },
        ));
        if !*ok {
            break;
        }
    }
    if let Some(r) = refined {
        out.push_str(&format!("Refined Step: {r}\n"));
    }
    out
}

/// Sparse judgment-token log-probabilities: one token per final-judgment
/// slot, with both alternatives in the top list.
pub fn judgment_logprobs(judgments: &[bool]) -> Vec<TokenLogprob> {
    judgments
        .iter()
        .map(|ok| {
            let (word, lp) = if *ok {
                ("Correct", -0.105f64)
            } else {
                ("Incorrect", -0.105f64)
            };
            let (alt, alt_lp) = if *ok {
                ("Incorrect", -2.303f64)
            } else {
                ("Correct", -2.303f64)
            };
            TokenLogprob {
                token: word.into(),
                logprob: lp,
                top: vec![
                    TopToken {
                        token: word.into(),
                        logprob: lp,
                    },
                    TopToken {
                        token: alt.into(),
                        logprob: alt_lp,
                    },
                ],
            }
        })
        .collect()
}
