//! Scripted-world construction for CLI end-to-end tests: a small benchmark,
//! policy/reward scripts covering every mode, and a config pointing at them.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prmkit::backends::{ScriptRecord, ScriptedBackend, TokenLogprob, TopToken};
use prmkit::seed::derive_seed;

pub const ROOT_SEED: u64 = 42;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prmkit"))
}

pub fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn judgment_logprobs(judgments: &[bool]) -> Vec<TokenLogprob> {
    judgments
        .iter()
        .map(|ok| {
            let (word, alt) = if *ok {
                ("Correct", "Incorrect")
            } else {
                ("Incorrect", "Correct")
            };
            TokenLogprob {
                token: word.into(),
                logprob: -0.105,
                top: vec![
                    TopToken {
                        token: word.into(),
                        logprob: -0.105,
                    },
                    TopToken {
                        token: alt.into(),
                        logprob: -2.303,
                    },
                ],
            }
        })
        .collect()
}

pub fn critique_reply(judgments: &[bool], refined: Option<&str>) -> String {
    let mut out = String::new();
    for (i, ok) in judgments.iter().enumerate() {
        let verdict = if *ok { "Correct" } else { "Incorrect" };
        out.push_str(&format!(
            "Step Intent: review step {n}\n\
             Image Alignment: Correct. Matches the figure.\n\
             Reasoning Logic: {verdict}. Checked the arithmetic.\n\
             Final Judgment: {verdict}\n",
            n = i + 1,
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

/// Per-problem scripts for one problem of the eval world. Phase-1 sample 0
/// errs at step 2 and refines to the gold answer; sample 1 is fully correct;
/// the resample is correct too.
fn problem_scripts(
    id: &str,
    base: u64,
    policy: &mut Vec<ScriptRecord>,
    prm: &mut Vec<ScriptRecord>,
) {
    let s = |o: u64| format!("seed={}", base.wrapping_add(o));
    policy.push(ScriptRecord::new(
        s(0),
        format!("Step 1: outline for {id}.\nStep 2: value-{id}-a is 5.\nFinal Answer: 5"),
    ));
    policy.push(ScriptRecord::new(
        s(1),
        format!("Step 1: outline for {id}.\nStep 2: value-{id}-b is 4.\nFinal Answer: 4"),
    ));
    // refined-bon phase 2: continuation for parent 0, resample for parent 1;
    // under baseline/self-consistency these same records serve as samples 2
    // and 3.
    policy.push(ScriptRecord::new(
        s(2),
        format!(" so {id} totals 4.\nFinal Answer: 4"),
    ));
    policy.push(ScriptRecord::new(
        s(3),
        format!("Step 1: redo for {id}.\nStep 2: value-{id}-c is 4.\nFinal Answer: 4"),
    ));

    prm.push(
        ScriptRecord::new(
            format!("value-{id}-a is 5"),
            critique_reply(
                &[true, false],
                Some(&format!("corrected value-{id}-r is 4.")),
            ),
        )
        .with_logprobs(judgment_logprobs(&[true, false])),
    );
    prm.push(
        ScriptRecord::new(
            format!("value-{id}-b is 4"),
            critique_reply(&[true, true], None),
        )
        .with_logprobs(judgment_logprobs(&[true, true])),
    );
    prm.push(
        ScriptRecord::new(
            format!("{id} totals 4"),
            critique_reply(&[true, true, true], None),
        )
        .with_logprobs(judgment_logprobs(&[true, true, true])),
    );
    prm.push(
        ScriptRecord::new(
            format!("value-{id}-c is 4"),
            critique_reply(&[true, true], None),
        )
        .with_logprobs(judgment_logprobs(&[true, true])),
    );
}

pub struct EvalWorld {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
    pub benchmark: PathBuf,
}

impl EvalWorld {
    pub fn path(&self) -> &Path {
        self.dir.path()
    }
}

/// Build a complete scripted eval world: benchmark, scripts, and config.
/// `problems` ids are `qp0..qpN`; every problem's gold answer is `4`.
pub fn build_eval_world(problems: usize) -> EvalWorld {
    let dir = tempfile::tempdir().unwrap();
    let mut policy = Vec::new();
    let mut prm = Vec::new();
    let mut bench =
        String::from("{\"schema\":\"benchmark/1\",\"name\":\"Synthetic\",\"split\":\"dev\"}\n");
    for i in 0..problems {
        let id = format!("qp{i}");
        let base = derive_seed(ROOT_SEED, &id);
        problem_scripts(&id, base, &mut policy, &mut prm);
        bench.push_str(&format!(
            "{{\"id\":\"{id}\",\"question\":\"scripted problem {id} asks for the shaded area\",\"answer_kind\":\"free_form\",\"gold_answer\":\"4\"}}\n"
        ));
    }
    ScriptedBackend::write_script(dir.path().join("policy.jsonl"), &policy).unwrap();
    ScriptedBackend::write_script(dir.path().join("prm.jsonl"), &prm).unwrap();
    let benchmark = dir.path().join("bench.jsonl");
    fs::write(&benchmark, bench).unwrap();

    let config = dir.path().join("config.toml");
    fs::write(
        &config,
        "[run]\n\
         n = 4\n\
         concurrency = 2\n\
         aggregation = \"avg\"\n\
         \n\
         [backends.policy]\n\
         script = \"policy.jsonl\"\n\
         max_in_flight = 2\n\
         retry_budget = 1\n\
         \n\
         [backends.prm]\n\
         script = \"prm.jsonl\"\n\
         max_in_flight = 2\n\
         retry_budget = 1\n",
    )
    .unwrap();
    EvalWorld {
        dir,
        config,
        benchmark,
    }
}

/// Build a scripted labeling world: a solutions file of single-step
/// solutions plus judge/completer scripts with a known agreement pattern.
/// Samples 0..kept_ok are judged correct with matching rollouts; the last
/// `dropped` samples disagree.
pub fn build_label_world(kept_ok: usize, kept_flawed: usize, dropped: usize) -> EvalWorld {
    let dir = tempfile::tempdir().unwrap();
    let total = kept_ok + kept_flawed + dropped;
    let mut solutions =
        String::from("{\"schema\":\"solutions/1\",\"answer_marker\":\"Final Answer:\"}\n");
    let mut judge = Vec::new();
    let mut completer = Vec::new();
    for i in 0..total {
        let judged_ok = i < kept_ok;
        let rollout_ok = i < kept_ok || i >= kept_ok + kept_flawed;
        solutions.push_str(&format!(
            "{{\"id\":\"s{i}\",\"question\":\"labelq{i}\",\"answer_kind\":\"free_form\",\"gold_answer\":\"7\",\"category\":\"plane_geometry\",\"solution_raw_text\":\"Step 1: work for labelq{i}.\\nFinal Answer: 7\"}}\n"
        ));
        judge.push(ScriptRecord::new(
            format!("labelq{i}"),
            if judged_ok {
                critique_reply(&[true], None)
            } else {
                critique_reply(&[false], Some("a corrected first step"))
            },
        ));
        completer.push(ScriptRecord::new(
            format!("labelq{i}"),
            if rollout_ok {
                " done.\nFinal Answer: 7".to_string()
            } else {
                " done.\nFinal Answer: 5".to_string()
            },
        ));
    }
    let solutions_path = dir.path().join("solutions.jsonl");
    fs::write(&solutions_path, solutions).unwrap();
    ScriptedBackend::write_script(dir.path().join("judge.jsonl"), &judge).unwrap();
    ScriptedBackend::write_script(dir.path().join("completer.jsonl"), &completer).unwrap();

    let config = dir.path().join("config.toml");
    fs::write(
        &config,
        "[run]\n\
         m = 1\n\
         concurrency = 2\n\
         \n\
         [backends.judge]\n\
         script = \"judge.jsonl\"\n\
         max_in_flight = 2\n\
         \n\
         [backends.completer]\n\
         script = \"completer.jsonl\"\n\
         max_in_flight = 2\n",
    )
    .unwrap();
    EvalWorld {
        dir,
        config,
        benchmark: solutions_path,
    }
}
