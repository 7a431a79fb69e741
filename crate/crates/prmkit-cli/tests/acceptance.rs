//! Acceptance suite. One test per criterion; each prints a PASS line with
//! its number and name once its assertions hold.
//!
//! Everything here runs offline: scripted JSONL worlds for the wire-level
//! checks and in-memory synthetic policy/reward backends for the larger
//! statistical worlds.

mod common;

use std::fs;
use std::sync::Arc;
use std::time::Instant;

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prmkit::backends::{
    critique_solution, parse_prm_output, BackendError, ChatBackend, ChatRequest, ChatResponse,
    CritiqueOptions, Judgment, ModelClient, PrmOutputParser, SamplingParams, ScriptRecord,
    ScriptedBackend, StepCritique, StepwiseCritique,
};
use prmkit::domain::{parse_solution_text, AnswerKind, Problem, PromptTemplate, Solution, Step};
use prmkit::evalkit::answers::answers_match;
use prmkit::evalkit::{accuracy, pass_at_k};
use prmkit::mc_label::{
    agreement_filter, emit_dataset, hard_estimate, read_dataset, FilterVerdict, HardLabel,
    TrainingSample,
};
use prmkit::refined_bon::{
    run_refined_bon, run_vanilla_bon, BonWorld, Provenance, RefinedBonConfig,
};
use prmkit::scoring::{aggregate, select_best, step_score, AggregationStrategy, ScoredCandidate};
use prmkit::seed::{derive_seed, splitmix64};

use common::{bin, build_eval_world, critique_reply, run_ok, ROOT_SEED};

fn pass(criterion: u32, name: &str) {
    println!("acceptance {criterion:02} ({name}): PASS");
}

// --------------------------------------------------------------------------
// 1. hard estimation equals a brute-force exists-scan
// --------------------------------------------------------------------------

#[test]
fn criterion_01_hard_estimate_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..1000 {
        let kind = if rng.gen_bool(0.5) {
            AnswerKind::MultiChoice
        } else {
            AnswerKind::FreeForm
        };
        let gold = match kind {
            AnswerKind::MultiChoice => ["A", "B", "C", "D"][rng.gen_range(0..4)].to_string(),
            AnswerKind::FreeForm => rng.gen_range(-50i64..50).to_string(),
        };
        let len = rng.gen_range(1..=10);
        let answers: Vec<Option<String>> = (0..len)
            .map(|_| match rng.gen_range(0..4) {
                0 => None,
                1 => Some(gold.clone()),
                2 => Some(match kind {
                    AnswerKind::MultiChoice => ["A", "B", "C", "D"][rng.gen_range(0..4)].into(),
                    AnswerKind::FreeForm => rng.gen_range(-50i64..50).to_string(),
                }),
                _ => Some("unparseable mumbling".into()),
            })
            .collect();

        // independent oracle: a plain linear scan
        let mut expected = 0u8;
        for a in &answers {
            if answers_match(a.as_deref(), &gold, kind) {
                expected = 1;
                break;
            }
        }
        let got = hard_estimate(&answers, &gold, kind);
        assert_eq!(
            got, expected,
            "trial {trial}: answers {answers:?} gold {gold}"
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    pass(1, "hard estimation oracle equivalence");
}

// --------------------------------------------------------------------------
// 2. pass@k equals exhaustive subset enumeration
// --------------------------------------------------------------------------

fn enumerate_pass_at_k(n: u64, c: u64, k: u64) -> f64 {
    let mut subsets = 0u64;
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        if mask.count_ones() as u64 != k {
            continue;
        }
        subsets += 1;
        // the first c samples are the correct ones
        if mask & ((1 << c) - 1) != 0 {
            hits += 1;
        }
    }
    hits as f64 / subsets as f64
}

#[test]
fn criterion_02_pass_at_k_oracle_equivalence() {
    for n in 1..=10u64 {
        for c in 0..=n {
            for k in 1..=n {
                let estimated = pass_at_k(n, c, k).unwrap();
                let enumerated = enumerate_pass_at_k(n, c, k);
                assert!(
                    (estimated - enumerated).abs() <= 1e-12,
                    "n={n} c={c} k={k}: {estimated} vs {enumerated}"
                );
            }
            let indicator = if c >= 1 { 1.0 } else { 0.0 };
            assert_eq!(pass_at_k(n, c, n).unwrap(), indicator);
        }
    }
    pass(2, "pass@k oracle equivalence and k=n indicator");
}

// --------------------------------------------------------------------------
// 3. aggregation strategies agree with direct recomputation
// --------------------------------------------------------------------------

#[test]
fn criterion_03_aggregation_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..1000 {
        let len = rng.gen_range(1..=16);
        let scores: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..=1.0)).collect();

        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &s in &scores {
            sum += s;
            if s < min {
                min = s;
            }
            if s > max {
                max = s;
            }
        }
        let mean = sum / len as f64;

        let avg = aggregate(&scores, AggregationStrategy::Average).unwrap();
        let got_min = aggregate(&scores, AggregationStrategy::Min).unwrap();
        let got_max = aggregate(&scores, AggregationStrategy::Max).unwrap();
        assert!((avg - mean).abs() <= 1e-12);
        assert!((got_min - min).abs() <= 1e-12);
        assert!((got_max - max).abs() <= 1e-12);
        assert!(got_min <= avg + 1e-12 && avg <= got_max + 1e-12);
    }
    pass(3, "aggregation exactness and min <= avg <= max");
}

// --------------------------------------------------------------------------
// synthetic offline world for criteria 4 and 5
// --------------------------------------------------------------------------

const TOTAL_STEPS: usize = 4;

fn prompt_steps(haystack: &str) -> Vec<String> {
    let re = regex_lite_steps();
    re.captures_iter(haystack)
        .map(|c| c[2].trim().to_string())
        .collect()
}

fn regex_lite_steps() -> regex::Regex {
    regex::Regex::new(r"(?m)^Step (\d+): (.+)$").expect("static regex")
}

fn extract_gold(haystack: &str) -> String {
    let re = regex::Regex::new(r"hidden token is (g\d+)").expect("static regex");
    re.captures(haystack)
        .map(|c| c[1].to_string())
        .unwrap_or_else(|| "g0".into())
}

/// Deterministic policy: continues a solution to four steps, each new step
/// wrong with probability `error_prob` drawn from the request seed.
struct SyntheticPolicy {
    error_prob: f64,
}

#[async_trait]
impl ChatBackend for SyntheticPolicy {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let haystack = req.match_haystack();
        let gold = extract_gold(&haystack);
        let prefix = prompt_steps(&haystack);
        let h = prefix.len();
        let seed = req.params.seed.expect("synthetic world always seeds");
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5eed_cafe));

        let mut any_wrong = prefix.iter().any(|s| s.contains("wrong"));
        let mut lines: Vec<(usize, String)> = Vec::new();
        for i in (h + 1)..=TOTAL_STEPS {
            let wrong = rng.gen_bool(self.error_prob);
            any_wrong |= wrong;
            let body = if wrong {
                format!("wrong move {i}")
            } else {
                format!("ok move {i}")
            };
            lines.push((i, body));
        }
        let answer = if any_wrong { "x".to_string() } else { gold };
        let mut reply = String::new();
        for (pos, (i, body)) in lines.iter().enumerate() {
            if pos == 0 && h > 0 {
                reply.push_str(&format!(" {body}\n"));
            } else {
                reply.push_str(&format!("Step {i}: {body}\n"));
            }
        }
        reply.push_str(&format!("Final Answer: {answer}"));
        Ok(ChatResponse {
            text: reply,
            logprobs: None,
        })
    }
}

/// Oracle reviewer: flags the first step containing "wrong" and supplies a
/// repaired step; judges everything else correct.
struct OraclePrm;

#[async_trait]
impl ChatBackend for OraclePrm {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let haystack = req.match_haystack();
        let steps = prompt_steps(&haystack);
        let first_wrong = steps.iter().position(|s| s.contains("wrong"));
        let reply = match first_wrong {
            Some(idx) => {
                let judgments: Vec<bool> = (0..=idx).map(|i| i != idx).collect();
                critique_reply(&judgments, Some(&format!("repaired move {}", idx + 1)))
            }
            None => critique_reply(&vec![true; steps.len()], None),
        };
        Ok(ChatResponse {
            text: reply,
            logprobs: None,
        })
    }
}

fn synthetic_world(error_prob: f64) -> BonWorld {
    BonWorld::new(
        Arc::new(ModelClient::new(
            Arc::new(SyntheticPolicy { error_prob }),
            8,
            0,
        )),
        Arc::new(ModelClient::new(Arc::new(OraclePrm), 8, 0)),
    )
}

fn synthetic_problem(k: usize) -> Problem {
    Problem {
        id: format!("syn{k}"),
        question: format!("synthetic problem {k}; the hidden token is g{k}"),
        images: vec![],
        answer_kind: AnswerKind::FreeForm,
        choices: vec![],
        gold_answer: format!("g{k}"),
        source: None,
        category: None,
    }
}

fn synthetic_config(k: usize) -> RefinedBonConfig {
    RefinedBonConfig {
        n_total: 8,
        sampling: SamplingParams::default().with_seed(derive_seed(777, &format!("syn{k}"))),
        aggregation: AggregationStrategy::Average,
        max_refine_depth: 1,
    }
}

// --------------------------------------------------------------------------
// 4. structural suite over 200 synthetic problems
// --------------------------------------------------------------------------

#[tokio::test]
async fn criterion_04_refined_bon_structural_suite() {
    let started = Instant::now();
    let world = synthetic_world(0.3);
    for k in 0..200 {
        let problem = synthetic_problem(k);
        let cfg = synthetic_config(k);
        let result = run_refined_bon(&problem, &cfg, &world).await.unwrap();

        assert_eq!(result.candidates.len(), 8, "pool size");
        let phase1 = result
            .candidates
            .iter()
            .filter(|c| c.provenance == Provenance::Phase1Sample)
            .count();
        assert_eq!(phase1, 4, "phase-1 provenance count");

        for (i, child) in result.candidates.iter().enumerate().skip(4) {
            let parent_index = match child.provenance {
                Provenance::RefinedContinuation { parent } => {
                    let parent = &result.candidates[parent];
                    let t = parent.critique.first_error.expect("refined implies error");
                    // validated prefix is byte-identical
                    for s in 0..t - 1 {
                        assert_eq!(
                            child.solution.steps[s].text,
                            parent.solution.steps[s].text,
                            "prefix diverged at step {} of child {i}",
                            s + 1
                        );
                    }
                    // and the refined step itself leads the continuation
                    assert_eq!(
                        child.solution.steps[t - 1].text,
                        parent.critique.refined_step.as_ref().unwrap().text
                    );
                    parent
                }
                Provenance::Resample { parent } => &result.candidates[parent],
                Provenance::Phase1Sample => panic!("phase-2 slot holds a phase-1 candidate"),
            };
            // refinement triggers exactly on a detected first error
            let refined = matches!(child.provenance, Provenance::RefinedContinuation { .. });
            assert_eq!(
                parent_index.critique.first_error.is_some()
                    && parent_index.critique.refined_step.is_some(),
                refined,
                "refinement trigger mismatch for child {i}"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    pass(4, "refined best-of-N structural suite (200 problems)");
}

// --------------------------------------------------------------------------
// 5. dominance of refined over vanilla in the oracle world
// --------------------------------------------------------------------------

#[tokio::test]
async fn criterion_05_refined_dominates_vanilla_on_oracle_world() {
    let world = synthetic_world(0.3);
    let mut refined_bits = Vec::new();
    let mut vanilla_bits = Vec::new();
    let mut refined_pass = Vec::new();
    let mut vanilla_pass = Vec::new();

    for k in 0..200 {
        let problem = synthetic_problem(k);
        let cfg = synthetic_config(k);

        let refined = run_refined_bon(&problem, &cfg, &world).await.unwrap();
        let vanilla = run_vanilla_bon(&problem, &cfg, &world).await.unwrap();

        for (result, bits, passes) in [
            (&refined, &mut refined_bits, &mut refined_pass),
            (&vanilla, &mut vanilla_bits, &mut vanilla_pass),
        ] {
            bits.push(answers_match(
                result.selected_answer.as_deref(),
                &problem.gold_answer,
                problem.answer_kind,
            ));
            let c = result
                .candidates
                .iter()
                .filter(|cand| {
                    answers_match(
                        cand.answer.as_deref(),
                        &problem.gold_answer,
                        problem.answer_kind,
                    )
                })
                .count() as u64;
            passes.push(pass_at_k(8, c, 8).unwrap());
        }
    }

    let refined_acc = accuracy(&refined_bits).unwrap();
    let vanilla_acc = accuracy(&vanilla_bits).unwrap();
    let refined_p8 = 100.0 * refined_pass.iter().sum::<f64>() / refined_pass.len() as f64;
    let vanilla_p8 = 100.0 * vanilla_pass.iter().sum::<f64>() / vanilla_pass.len() as f64;

    println!(
        "  refined accuracy {refined_acc:.1} vs vanilla {vanilla_acc:.1}; \
         refined pass@8 {refined_p8:.1} vs vanilla {vanilla_p8:.1}"
    );
    assert!(
        refined_acc >= vanilla_acc,
        "refined {refined_acc} < vanilla {vanilla_acc}"
    );
    assert!(
        refined_p8 >= vanilla_p8,
        "refined pass@8 {refined_p8} < vanilla {vanilla_p8}"
    );
    pass(5, "refined >= vanilla accuracy and pass@8 (oracle world)");
}

// --------------------------------------------------------------------------
// 6. selection rule against a reference implementation
// --------------------------------------------------------------------------

struct PoolEntry {
    all_correct: bool,
    scores: Vec<f64>,
}

impl ScoredCandidate for PoolEntry {
    fn all_correct(&self) -> bool {
        self.all_correct
    }
    fn step_scores(&self) -> &[f64] {
        &self.scores
    }
}

fn reference_select(pool: &[PoolEntry], strategy: AggregationStrategy) -> usize {
    let overall: Vec<f64> = pool
        .iter()
        .map(|c| {
            if c.scores.is_empty() {
                f64::NEG_INFINITY
            } else {
                match strategy {
                    AggregationStrategy::Average => {
                        c.scores.iter().sum::<f64>() / c.scores.len() as f64
                    }
                    AggregationStrategy::Min => {
                        c.scores.iter().cloned().fold(f64::INFINITY, f64::min)
                    }
                    AggregationStrategy::Max => {
                        c.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    }
                }
            }
        })
        .collect();
    let eligible: Vec<usize> = (0..pool.len())
        .filter(|&i| pool[i].all_correct && overall[i].is_finite())
        .collect();
    let scan: Vec<usize> = if eligible.is_empty() {
        (0..pool.len()).collect()
    } else {
        eligible
    };
    let mut best = scan[0];
    for &i in &scan[1..] {
        if overall[i] > overall[best] {
            best = i;
        }
    }
    best
}

#[test]
fn criterion_06_selection_rule_randomized() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let strategies = [
        AggregationStrategy::Average,
        AggregationStrategy::Min,
        AggregationStrategy::Max,
    ];
    for trial in 0..10_000 {
        let len = rng.gen_range(1..=10);
        let pool: Vec<PoolEntry> = (0..len)
            .map(|_| {
                let steps = rng.gen_range(0..=4);
                PoolEntry {
                    all_correct: rng.gen_bool(0.4),
                    // discrete grid to force ties
                    scores: (0..steps)
                        .map(|_| rng.gen_range(0..=4) as f64 / 4.0)
                        .collect(),
                }
            })
            .collect();
        let strategy = strategies[trial % 3];
        let chosen = select_best(&pool, strategy).unwrap();
        let expected = reference_select(&pool, strategy);
        assert_eq!(chosen, expected, "trial {trial}");

        let exists_all_correct = pool.iter().any(|c| c.all_correct && !c.scores.is_empty());
        if exists_all_correct {
            assert!(
                pool[chosen].all_correct,
                "trial {trial}: flawed candidate chosen over an all-correct one"
            );
        }
    }
    pass(6, "selection rule, argmax and tie handling (10k pools)");
}

// --------------------------------------------------------------------------
// 7. step-score scale invariance and symmetry
// --------------------------------------------------------------------------

#[test]
fn criterion_07_step_score_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let factors = [1e-6, 1e-3, 1.0, 1e3, 1e6];
    for _ in 0..2000 {
        let p = rng.gen_range(0.001..=1.0);
        let q = rng.gen_range(0.001..=1.0);
        let base = step_score(p, q).unwrap();
        for k in factors {
            let scaled = step_score(k * p, k * q).unwrap();
            assert!(
                (scaled - base).abs() <= 1e-12,
                "scale invariance broke: k={k} p={p} q={q}: {scaled} vs {base}"
            );
        }
        let sym = step_score(p, p).unwrap();
        assert_eq!(sym, 0.5, "symmetric inputs must give exactly 0.5");
    }
    pass(7, "step-score scale invariance and exact symmetry");
}

// --------------------------------------------------------------------------
// 8. parser round trips and critique grammar fixtures
// --------------------------------------------------------------------------

fn workspace_fixture(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../prmkit/tests/fixtures")
        .join(name);
    fs::read_to_string(path).expect("shared fixture exists")
}

#[tokio::test]
async fn criterion_08_parser_round_trips() {
    // solution parse/render round trip on the stored fixture
    let raw = workspace_fixture("policy_out_01.txt");
    let solution = parse_solution_text(&raw, "Final Answer:").unwrap();
    assert_eq!(solution.steps.len(), 5);
    assert_eq!(solution.final_answer.as_deref(), Some("B"));
    let rendered = solution.canonical_text("Final Answer:");
    let reparsed = parse_solution_text(&rendered, "Final Answer:").unwrap();
    assert_eq!(reparsed.steps, solution.steps);
    assert_eq!(reparsed.final_answer, solution.final_answer);

    // and on randomized synthetic solutions
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for _ in 0..100 {
        let t = rng.gen_range(1..=6);
        let steps: Vec<Step> = (1..=t)
            .map(|i| {
                Step::new(
                    i,
                    format!("synthetic body {i} token {}", rng.gen_range(0..999)),
                )
            })
            .collect();
        let sol = Solution {
            steps: steps.clone(),
            final_answer: Some(rng.gen_range(0..99).to_string()),
            raw_text: String::new(),
            status: Default::default(),
        };
        let text = sol.canonical_text("Final Answer:");
        let re = parse_solution_text(&text, "Final Answer:").unwrap();
        assert_eq!(re.steps, steps);
    }

    // dataset emit/read round trip
    let dir = tempfile::tempdir().unwrap();
    let sample = TrainingSample {
        problem: synthetic_problem(1),
        solution: solution.clone(),
        annotations: parse_prm_output(&critique_reply(&[true, false], Some("fixed")), None)
            .unwrap()
            .steps,
        refined_step: Some(Step::new(2, "fixed")),
        mc_labels: vec![HardLabel {
            step_index: 1,
            value: 1,
            rollout_answers: vec![Some("B".into())],
            m_effective: 1,
            flagged: false,
        }],
        filter_verdict: FilterVerdict::Kept,
    };
    let path = dir.path().join("ds.jsonl");
    emit_dataset(std::slice::from_ref(&sample), &path).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back, vec![sample]);

    // critique grammar fixtures: well-formed, refined-step, malformed+retry
    let ok = parse_prm_output(&critique_reply(&[true, true], None), None).unwrap();
    assert_eq!(ok.steps.len(), 2);
    assert!(ok.first_error.is_none());

    let refined = parse_prm_output(
        &critique_reply(&[true, false], Some("a corrected step")),
        None,
    )
    .unwrap();
    assert_eq!(refined.first_error, Some(2));
    assert_eq!(
        refined.refined_step.as_ref().unwrap().text,
        "a corrected step"
    );

    assert!(parse_prm_output("nothing structured here", None).is_err());

    // malformed first reply, valid on the re-ask
    let problem = synthetic_problem(2);
    let sol = parse_solution_text("Step 1: fine.\nFinal Answer: g2", "Final Answer:").unwrap();
    let records = vec![
        ScriptRecord::new("fine", "garbled"),
        ScriptRecord::new("fine", critique_reply(&[true], None)),
    ];
    let prm = Arc::new(ModelClient::new(
        Arc::new(ScriptedBackend::from_records(records)),
        1,
        0,
    ));
    let critique = critique_solution(
        &problem,
        &sol,
        &prm,
        &PromptTemplate::default_critique(),
        &SamplingParams::greedy(),
        &PrmOutputParser::default(),
        &CritiqueOptions::default(),
    )
    .await
    .unwrap();
    assert_eq!(critique.reasks, 1);

    pass(
        8,
        "solution/dataset round trips and critique grammar fixtures",
    );
}

// --------------------------------------------------------------------------
// 9. scripted CLI determinism
// --------------------------------------------------------------------------

#[test]
fn criterion_09_cli_runs_are_byte_identical() {
    let world = build_eval_world(5);
    let out_a = world.path().join("run-a");
    let out_b = world.path().join("run-b");
    for out in [&out_a, &out_b] {
        run_ok(bin().args([
            "eval",
            "--config",
            &world.config.display().to_string(),
            "--benchmark",
            &world.benchmark.display().to_string(),
            "--mode",
            "refined-bon",
            "--seed",
            &ROOT_SEED.to_string(),
            "--out",
            &out.display().to_string(),
        ]));
    }

    let mut names: Vec<String> = fs::read_dir(out_a.join("traces"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().to_string())
        .collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for name in &names {
        let a = fs::read(out_a.join("traces").join(name)).unwrap();
        let b = fs::read(out_b.join("traces").join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "trace {name} differs between runs");
    }
    for summary in ["summary.csv", "summary.md"] {
        let a = fs::read(out_a.join(summary)).unwrap();
        let b = fs::read(out_b.join(summary)).unwrap();
        assert_eq!(a, b, "{summary} differs between runs");
    }
    pass(9, "byte-identical scripted CLI runs");
}

// --------------------------------------------------------------------------
// 10. agreement filter on the exhaustive grid
// --------------------------------------------------------------------------

fn grid_judge(first_error: Option<usize>, coverage: usize) -> StepwiseCritique {
    let steps: Vec<StepCritique> = (1..=coverage)
        .map(|i| {
            let ok = first_error != Some(i);
            let verdict = if ok {
                Judgment::Correct
            } else {
                Judgment::Incorrect
            };
            StepCritique {
                step_index: i,
                step_intent: String::new(),
                image_alignment: prmkit::backends::AspectVerdict {
                    critique: String::new(),
                    judgment: Judgment::Correct,
                },
                reasoning_logic: prmkit::backends::AspectVerdict {
                    critique: String::new(),
                    judgment: verdict,
                },
                final_judgment: verdict,
                p_correct_token: None,
                p_incorrect_token: None,
                prob_incomplete: false,
            }
        })
        .collect();
    StepwiseCritique {
        steps,
        first_error,
        refined_step: first_error.map(|t| Step::new(t, "repaired")),
        reasks: 0,
    }
}

/// The hand-written truth table: kept iff the judge saw no error and every
/// label is 1, or the first error at `t` has 1s before it and 0 at it.
fn truth_table(first_error: Option<usize>, labels: &[u8]) -> bool {
    match first_error {
        None => labels.iter().all(|&v| v == 1),
        Some(t) => labels[..t - 1].iter().all(|&v| v == 1) && labels[t - 1] == 0,
    }
}

#[test]
fn criterion_10_agreement_filter_exhaustive_grid() {
    const T: usize = 5;
    let judge_cases: Vec<Option<usize>> = std::iter::once(None).chain((1..=T).map(Some)).collect();
    let mut cases = 0;
    for first_error in judge_cases {
        let coverage = first_error.unwrap_or(T);
        let judge = grid_judge(first_error, coverage);
        for bits in 0..(1u32 << T) {
            let labels_u8: Vec<u8> = (0..T).map(|i| ((bits >> i) & 1) as u8).collect();
            let labels: Vec<HardLabel> = labels_u8
                .iter()
                .enumerate()
                .map(|(i, &v)| HardLabel {
                    step_index: i + 1,
                    value: v,
                    rollout_answers: vec![],
                    m_effective: 1,
                    flagged: false,
                })
                .collect();
            let verdict = agreement_filter(&judge, &labels).unwrap();
            let expected = truth_table(first_error, &labels_u8);
            match (expected, &verdict) {
                (true, FilterVerdict::Kept) => {}
                (false, FilterVerdict::Dropped { .. }) => {}
                _ => panic!(
                    "grid mismatch: first_error={first_error:?} labels={labels_u8:?} verdict={verdict:?}"
                ),
            }
            cases += 1;
        }
    }
    assert_eq!(cases, 6 * 32);
    pass(10, "agreement filter exhaustive grid (192 cases)");
}
