//! `prmkit eval`: run a benchmark under one of the four modes and persist
//! traces, outcomes, and summaries.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use prmkit::backends::generate_solutions;
use prmkit::domain::Problem;
use prmkit::evalkit::answers::{answers_match, extract_final_answer};
use prmkit::evalkit::run_store::{
    compute_summary, store_run_shell, store_summary, ProblemOutcome, RunRecord, TraceWriter,
};
use prmkit::evalkit::{load_benchmark, render_csv, render_markdown};
use prmkit::refined_bon::{
    run_refined_bon, run_vanilla_bon, BonWorld, Provenance, RefinedBonConfig, TraceEvent,
};
use prmkit::scoring::self_consistency;
use prmkit::seed::derive_seed;
use tokio::sync::Semaphore;

use crate::config::LoadedConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalMode {
    Baseline,
    Bon,
    #[value(name = "refined-bon")]
    RefinedBon,
    #[value(name = "self-consistency")]
    SelfConsistency,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Baseline => "baseline",
            EvalMode::Bon => "bon",
            EvalMode::RefinedBon => "refined-bon",
            EvalMode::SelfConsistency => "self-consistency",
        }
    }
}

pub struct EvalArgs {
    pub benchmark: PathBuf,
    pub mode: EvalMode,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub aggregation: Option<String>,
    pub out: Option<PathBuf>,
    pub dry_run: bool,
}

pub async fn cmd_eval(loaded: &LoadedConfig, args: &EvalArgs) -> Result<String> {
    let mut cfg = loaded.config.clone();
    if let Some(n) = args.n {
        cfg.run.n = n;
    }
    if let Some(a) = &args.aggregation {
        cfg.run.aggregation = a.clone();
    }
    let seed = args.seed.or(cfg.run.seed).unwrap_or(0);
    let n = cfg.run.n;
    if n < 2 || !n.is_multiple_of(2) {
        bail!("n must be even and >= 2, got {n}");
    }
    let aggregation = prmkit::scoring::AggregationStrategy::parse(&cfg.run.aggregation)
        .with_context(|| format!("unknown aggregation `{}`", cfg.run.aggregation))?;

    let world = {
        // rebuild through the loaded config so flag overrides apply
        let mut patched = LoadedConfig {
            config: cfg.clone(),
            dir: loaded.dir.clone(),
            snapshot: loaded.snapshot.clone(),
        };
        patched.config.run.aggregation = cfg.run.aggregation.clone();
        patched.bon_world()?
    };

    if args.dry_run {
        world.policy.health().await.context("policy health probe")?;
        world
            .prm
            .health()
            .await
            .context("reward model health probe")?;
        let load = load_benchmark(&args.benchmark)?;
        println!(
            "dry run ok: config valid, backends healthy, benchmark `{}` ({} problems, {} rejects)",
            load.benchmark.name,
            load.benchmark.problems.len(),
            load.rejects.len()
        );
        return Ok(String::new());
    }

    let load = load_benchmark(&args.benchmark)
        .with_context(|| format!("loading benchmark {:?}", args.benchmark))?;
    if !load.rejects.is_empty() {
        eprintln!(
            "warning: {} invalid benchmark records rejected",
            load.rejects.len()
        );
    }
    let benchmark = load.benchmark;

    let run_dir = match &args.out {
        Some(p) => p.clone(),
        None => Path::new(&cfg.run.run_dir).join(format!(
            "{}-{}-n{}-seed{}",
            benchmark.name.to_lowercase(),
            args.mode.as_str(),
            n,
            seed
        )),
    };
    let run_id = run_dir
        .file_name()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "run".into());

    let record = RunRecord {
        run_id: run_id.clone(),
        mode: args.mode.as_str().into(),
        benchmark_name: benchmark.name.clone(),
        benchmark_split: benchmark.split.clone(),
        config: serde_json::json!({
            "n": n,
            "seed": seed,
            "aggregation": cfg.run.aggregation,
            "benchmark_path": args.benchmark.to_string_lossy(),
            "config_snapshot": snapshot_json(&loaded.snapshot),
        }),
        outcomes: Vec::new(),
        summary: None,
    };
    store_run_shell(&run_dir, &record)?;

    let limiter = Arc::new(Semaphore::new(cfg.run.concurrency.max(1)));
    let world = Arc::new(world);
    let mut handles = Vec::new();
    for problem in benchmark.problems {
        let permit = limiter.clone().acquire_owned().await.expect("semaphore");
        let world = Arc::clone(&world);
        let run_dir = run_dir.clone();
        let mode = args.mode;
        let sampling = loaded.sampling(Some(derive_seed(seed, &problem.id)));
        let bon_cfg = RefinedBonConfig {
            n_total: n,
            sampling,
            aggregation,
            max_refine_depth: 1,
        };
        handles.push(tokio::spawn(async move {
            let result = run_one_problem(&problem, mode, &bon_cfg, &world, &run_dir).await;
            drop(permit);
            result.map_err(|e| (problem.id.clone(), e))
        }));
    }

    let mut outcomes = Vec::with_capacity(handles.len());
    for h in handles {
        match h.await.expect("problem task never panics") {
            Ok(outcome) => outcomes.push(outcome),
            Err((id, e)) => bail!("problem `{id}` failed: {e:#}"),
        }
    }

    let summary = compute_summary(&outcomes, args.mode.as_str())?;
    store_summary(&run_dir, &summary)?;
    let mut final_record = record;
    final_record.outcomes = outcomes;
    final_record.summary = Some(summary);
    std::fs::write(run_dir.join("summary.csv"), render_csv(&final_record))?;
    std::fs::write(run_dir.join("summary.md"), render_markdown(&final_record))?;

    println!("run `{run_id}` complete");
    println!("  traces:  {}", run_dir.join("traces").display());
    println!("  summary: {}", run_dir.join("summary.md").display());
    Ok(run_id)
}

fn snapshot_json(snapshot: &toml::Value) -> serde_json::Value {
    serde_json::to_value(snapshot).unwrap_or(serde_json::Value::Null)
}

async fn run_one_problem(
    problem: &Problem,
    mode: EvalMode,
    bon_cfg: &RefinedBonConfig,
    world: &BonWorld,
    run_dir: &Path,
) -> Result<ProblemOutcome> {
    // idempotence: a completed trace short-circuits the problem
    if let Some(existing) = TraceWriter::read_outcome(run_dir, &problem.id)? {
        return Ok(existing);
    }

    let (events, outcome) = match mode {
        EvalMode::RefinedBon => {
            let result = run_refined_bon(problem, bon_cfg, world).await?;
            let outcome = outcome_from_candidates(problem, &result);
            (result.trace, outcome)
        }
        EvalMode::Bon => {
            let result = run_vanilla_bon(problem, bon_cfg, world).await?;
            let outcome = outcome_from_candidates(problem, &result);
            (result.trace, outcome)
        }
        EvalMode::Baseline | EvalMode::SelfConsistency => {
            sample_only_run(problem, mode, bon_cfg, world).await?
        }
    };
    TraceWriter::write(run_dir, &problem.id, &events, &outcome)?;
    Ok(outcome)
}

fn outcome_from_candidates(
    problem: &Problem,
    result: &prmkit::refined_bon::RefinedBonResult,
) -> ProblemOutcome {
    let pool_answers: Vec<Option<String>> =
        result.candidates.iter().map(|c| c.answer.clone()).collect();
    let pool_bits: Vec<bool> = pool_answers
        .iter()
        .map(|a| answers_match(a.as_deref(), &problem.gold_answer, problem.answer_kind))
        .collect();
    let selected_correct = answers_match(
        result.selected_answer.as_deref(),
        &problem.gold_answer,
        problem.answer_kind,
    );
    ProblemOutcome {
        problem_id: problem.id.clone(),
        selected_answer: result.selected_answer.clone(),
        selected_correct,
        pool_answers,
        pool_bits,
    }
}

/// Baseline and self-consistency draw the same N samples but never touch the
/// reward model.
async fn sample_only_run(
    problem: &Problem,
    mode: EvalMode,
    bon_cfg: &RefinedBonConfig,
    world: &BonWorld,
) -> Result<(Vec<TraceEvent>, ProblemOutcome)> {
    let template = world.policy_template(problem.answer_kind);
    let solutions = generate_solutions(
        problem,
        template,
        bon_cfg.n_total,
        &bon_cfg.sampling,
        &world.policy,
    )
    .await?;

    let answers: Vec<Option<String>> = solutions
        .iter()
        .map(|s| extract_final_answer(&s.raw_text, problem.answer_kind, &template.answer_marker))
        .collect();
    let pool_bits: Vec<bool> = answers
        .iter()
        .map(|a| answers_match(a.as_deref(), &problem.gold_answer, problem.answer_kind))
        .collect();

    let mut events = Vec::new();
    let mut seq = 0u64;
    for (index, s) in solutions.iter().enumerate() {
        events.push(TraceEvent::Sample {
            seq,
            index,
            provenance: Provenance::Phase1Sample,
            seed: bon_cfg.sampling.seed.map(|b| b.wrapping_add(index as u64)),
            status: s.status,
            step_count: s.steps.len(),
            answer: answers[index].clone(),
            raw_text: s.raw_text.clone(),
            note: None,
        });
        seq += 1;
    }

    let (selected_answer, selected_correct) = match mode {
        EvalMode::SelfConsistency => {
            let vote = self_consistency(&answers, problem.answer_kind);
            let correct = answers_match(vote.as_deref(), &problem.gold_answer, problem.answer_kind);
            let index = vote
                .as_ref()
                .and_then(|v| {
                    answers
                        .iter()
                        .position(|a| a.as_deref() == Some(v.as_str()))
                })
                .unwrap_or(0);
            events.push(TraceEvent::Select {
                seq,
                index,
                answer: vote.clone(),
                overall_scores: Vec::new(),
            });
            (vote, correct)
        }
        // baseline has no selection; the summary reports the pool mean
        _ => (None, false),
    };

    let outcome = ProblemOutcome {
        problem_id: problem.id.clone(),
        selected_answer,
        selected_correct,
        pool_answers: answers,
        pool_bits,
    };
    Ok((events, outcome))
}
