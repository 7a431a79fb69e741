//! The model-facing operations: sampling solutions, continuing from a
//! corrected prefix, step-level critique, and Monte Carlo rollouts.

use std::sync::Arc;

use crate::domain::{
    parse_solution_text, render_critique_prompt, render_prefix, render_prompt, Problem,
    PromptTemplate, RenderedPrefix, Solution, SolutionStatus, Step,
};

use super::{
    BackendError, ChatRequest, ModelClient, PrmOutputParser, Rollout, SamplingParams,
    StepwiseCritique,
};

/// How critiques are requested.
#[derive(Debug, Clone, Default)]
pub struct CritiqueOptions {
    /// Ask for one step per request instead of the whole solution at once.
    pub per_step: bool,
}

fn seeded(params: &SamplingParams, offset: u64) -> SamplingParams {
    let mut p = params.clone();
    p.seed = params.seed.map(|s| s.wrapping_add(offset));
    p
}

fn request(prompt: String, problem: &Problem, params: SamplingParams) -> ChatRequest {
    ChatRequest::new(prompt, params).with_images(&problem.images)
}

/// Sample `n` solutions for a problem. Results keep ascending sample order;
/// a sample whose call fails after all retries becomes a sentinel solution
/// flagged failed rather than aborting the batch. When every sample fails on
/// a transport error the whole batch reports the backend unreachable.
pub async fn generate_solutions(
    problem: &Problem,
    template: &PromptTemplate,
    n: usize,
    params: &SamplingParams,
    policy: &Arc<ModelClient>,
) -> Result<Vec<Solution>, BackendError> {
    assert!(n >= 1, "n must be at least 1");
    params.validate()?;
    let prompt =
        render_prompt(problem, template).map_err(|e| BackendError::Config(e.to_string()))?;
    let reqs: Vec<ChatRequest> = (0..n)
        .map(|i| request(prompt.clone(), problem, seeded(params, i as u64)))
        .collect();
    let results = policy.complete_many(reqs).await;

    let mut solutions = Vec::with_capacity(n);
    let mut hard_failures = 0usize;
    let mut last_error: Option<String> = None;
    for r in results {
        match r {
            Ok(resp) => match parse_solution_text(&resp.text, &template.answer_marker) {
                Ok(sol) => solutions.push(sol),
                Err(_) => solutions.push(Solution::failed()),
            },
            Err(e) => {
                if let BackendError::AuthMissing { .. } = e {
                    return Err(e);
                }
                hard_failures += 1;
                last_error = Some(e.to_string());
                solutions.push(Solution::failed());
            }
        }
    }
    if hard_failures == n {
        return Err(BackendError::Unreachable {
            attempts: 0,
            last: last_error.unwrap_or_default(),
        });
    }
    Ok(solutions)
}

/// Continue generation from a rendered prefix. The returned solution contains
/// the prefix steps plus the newly generated steps, re-parsed as one
/// solution; a continuation that adds no step comes back flagged degenerate.
pub async fn continue_solution(
    problem: &Problem,
    prefix: &RenderedPrefix,
    params: &SamplingParams,
    policy: &Arc<ModelClient>,
    marker: &str,
) -> Result<Solution, BackendError> {
    params.validate()?;
    let req = request(prefix.prompt.clone(), problem, params.clone());
    let resp = policy.complete(req).await?;

    let mut combined = crate::domain::render_steps_block(&prefix.steps);
    if !combined.is_empty() {
        combined.push('\n');
    }
    let reply = resp.text.trim_start_matches(['\n', '\r']);
    let repeats_cue = reply
        .trim_start()
        .to_lowercase()
        .starts_with(&format!("step {}", prefix.next_index));
    if repeats_cue {
        combined.push_str(reply);
    } else {
        combined.push_str(&format!("Step {}:", prefix.next_index));
        if !reply.starts_with(' ') {
            combined.push(' ');
        }
        combined.push_str(reply);
    }

    let mut solution =
        parse_solution_text(&combined, marker).unwrap_or_else(|_| Solution::failed());
    // No new step and no final answer: the policy added nothing.
    if solution.status != SolutionStatus::Failed
        && solution.steps.len() <= prefix.steps.len()
        && solution.final_answer.is_none()
    {
        solution.status = SolutionStatus::Degenerate;
    }
    Ok(solution)
}

/// Step-level review of a whole solution by the reward model: requests a
/// generative critique, parses it, and stops at the first incorrect final
/// judgment. One re-ask on a parse failure, then the error surfaces with the
/// raw text attached.
pub async fn critique_solution(
    problem: &Problem,
    solution: &Solution,
    prm: &Arc<ModelClient>,
    template: &PromptTemplate,
    params: &SamplingParams,
    parser: &PrmOutputParser,
    opts: &CritiqueOptions,
) -> Result<StepwiseCritique, BackendError> {
    assert!(
        !solution.steps.is_empty(),
        "cannot critique a solution with no steps"
    );
    if opts.per_step {
        return critique_per_step(problem, solution, prm, template, params, parser).await;
    }
    let prompt = render_critique_prompt(problem, solution, template)
        .map_err(|e| BackendError::Config(e.to_string()))?;

    let mut reasks = 0u32;
    loop {
        let req = request(prompt.clone(), problem, params.clone()).with_logprobs(true);
        let resp = prm.complete(req).await?;
        match parser.parse(&resp.text, resp.logprobs.as_deref()) {
            Ok(mut critique) => {
                let full_cover =
                    critique.first_error.is_some() || critique.steps.len() == solution.steps.len();
                if full_cover {
                    critique.reasks = reasks;
                    return Ok(critique);
                }
                if reasks >= 1 {
                    return Err(BackendError::CritiqueParse {
                        line: format!(
                            "critique covers {} of {} steps without finding an error",
                            critique.steps.len(),
                            solution.steps.len()
                        ),
                        raw: resp.text,
                    });
                }
                reasks += 1;
            }
            Err(e @ (BackendError::CritiqueParse { .. } | BackendError::MissingVerdict { .. })) => {
                if reasks >= 1 {
                    return Err(e);
                }
                reasks += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// One request per step; stops at the first step judged incorrect.
async fn critique_per_step(
    problem: &Problem,
    solution: &Solution,
    prm: &Arc<ModelClient>,
    template: &PromptTemplate,
    params: &SamplingParams,
    parser: &PrmOutputParser,
) -> Result<StepwiseCritique, BackendError> {
    let mut out = StepwiseCritique::default();
    for i in 1..=solution.steps.len() {
        let partial = Solution {
            steps: solution.steps[..i].to_vec(),
            final_answer: if i == solution.steps.len() {
                solution.final_answer.clone()
            } else {
                None
            },
            raw_text: String::new(),
            status: SolutionStatus::Ok,
        };
        let mut prompt = render_critique_prompt(problem, &partial, template)
            .map_err(|e| BackendError::Config(e.to_string()))?;
        prompt.push_str(&format!("\n\nCritique only Step {i}."));

        let mut reasks = 0u32;
        let critique = loop {
            let req = request(prompt.clone(), problem, params.clone()).with_logprobs(true);
            let resp = prm.complete(req).await?;
            match parser.parse(&resp.text, resp.logprobs.as_deref()) {
                Ok(c) if c.steps.len() == 1 => break c,
                Ok(_)
                | Err(BackendError::CritiqueParse { .. })
                | Err(BackendError::MissingVerdict { .. })
                    if reasks == 0 =>
                {
                    reasks += 1;
                }
                Ok(_) => {
                    return Err(BackendError::CritiqueParse {
                        line: format!("per-step critique of step {i} returned multiple blocks"),
                        raw: resp.text,
                    })
                }
                Err(e) => return Err(e),
            }
        };
        out.reasks += critique.reasks + reasks;
        let mut step = critique.steps.into_iter().next().expect("one block");
        step.step_index = i;
        let erred = step.final_judgment == super::Judgment::Incorrect;
        out.steps.push(step);
        if erred {
            out.first_error = Some(i);
            out.refined_step = critique.refined_step.map(|r| Step::new(i, r.text));
            break;
        }
    }
    Ok(out)
}

/// Review driven by the data-construction prompt; identical contract to
/// [`critique_solution`] against the judge backend.
pub async fn judge_annotate(
    problem: &Problem,
    solution: &Solution,
    judge: &Arc<ModelClient>,
    template: &PromptTemplate,
    params: &SamplingParams,
    parser: &PrmOutputParser,
) -> Result<StepwiseCritique, BackendError> {
    critique_solution(
        problem,
        solution,
        judge,
        template,
        params,
        parser,
        &CritiqueOptions::default(),
    )
    .await
}

/// Draw `m` completions from the prefix `r_1..r_i` (an empty prefix samples
/// from scratch). Always returns exactly `m` rollouts; failed calls yield
/// answerless rollouts flagged failed.
pub async fn rollout_completions(
    problem: &Problem,
    prefix_steps: &[Step],
    m: usize,
    params: &SamplingParams,
    completer: &Arc<ModelClient>,
    template: &PromptTemplate,
) -> Result<Vec<Rollout>, BackendError> {
    assert!(m >= 1, "m must be at least 1");
    params.validate()?;
    let prefix_len = prefix_steps.len();
    let (prompt, next_index) = if prefix_len == 0 {
        (
            render_prompt(problem, template).map_err(|e| BackendError::Config(e.to_string()))?,
            1,
        )
    } else {
        let rendered = render_prefix(problem, prefix_steps, None, template)
            .map_err(|e| BackendError::Config(e.to_string()))?;
        (rendered.prompt, rendered.next_index)
    };

    let reqs: Vec<ChatRequest> = (0..m)
        .map(|j| request(prompt.clone(), problem, seeded(params, j as u64)))
        .collect();
    let results = completer.complete_many(reqs).await;

    let marker = &template.answer_marker;
    let mut rollouts = Vec::with_capacity(m);
    for r in results {
        match r {
            Ok(resp) => {
                let reply = resp.text.trim();
                let repeats_cue = reply
                    .to_lowercase()
                    .starts_with(&format!("step {next_index}"));
                let text = if prefix_len == 0 || repeats_cue {
                    reply.to_string()
                } else {
                    format!("Step {next_index}: {reply}")
                };
                match parse_solution_text(&text, marker) {
                    Ok(sol) => {
                        let continuation_steps = sol
                            .steps
                            .iter()
                            .map(|s| Step::new(s.index + prefix_len, s.text.clone()))
                            .collect();
                        rollouts.push(Rollout {
                            continuation_steps,
                            final_answer: sol.final_answer,
                            failed: false,
                        });
                    }
                    Err(_) => rollouts.push(Rollout {
                        continuation_steps: Vec::new(),
                        final_answer: None,
                        failed: true,
                    }),
                }
            }
            Err(_) => rollouts.push(Rollout {
                continuation_steps: Vec::new(),
                final_answer: None,
                failed: true,
            }),
        }
    }
    Ok(rollouts)
}
