//! Paired Monte Carlo comparison of guardrail and prompt-only loops.
//!
//! Each trial runs the real loop engine against a fresh mock world of
//! `tests` constraint tests. Trial `i` uses the mock seed
//! `derive_seed(seed, i)` in both modes, so the two reports are paired.
//! Under prompt-only guidance the agent sees neither plan nor outcomes;
//! tests still run after every generate call so the loop can stop once
//! everything passes.

use serde::Serialize;
use thiserror::Error;

use crate::adapters::{derive_seed, IssueContext, MockAgent, MockAgentParams, MockRunner, MockWorld, ParamError};
use crate::artifact::{AcceptanceTest, C4Model, Clause, ClauseKind};
use crate::engine::{Driver, Guidance, LoopConfig, LoopRun, LoopState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Guardrail,
    PromptOnly,
}

impl SimMode {
    fn guidance(self) -> Guidance {
        match self {
            SimMode::Guardrail => Guidance::Guardrail,
            SimMode::PromptOnly => Guidance::PromptOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationReport {
    pub mode: SimMode,
    pub trials: u64,
    /// Mean number of generate calls.
    pub mean_iterations: f64,
    /// Mean count of constraint tests still failing when the loop ended.
    pub mean_residual_failures: f64,
    pub stalled_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationSpec {
    pub params: MockAgentParams,
    pub tests: usize,
    pub trials: u64,
    pub seed: u64,
    pub max_iterations: u32,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            params: MockAgentParams::default(),
            tests: 12,
            trials: 1000,
            seed: 7,
            max_iterations: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("an issue needs at least one test")]
    NoTests,
    #[error("max_iterations must be at least 1")]
    NoIterations,
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// How trials are scheduled. Results are identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub generate_calls: u32,
    pub residual_failures: usize,
    pub stalled: bool,
}

fn synthetic_issue(tests: usize) -> IssueContext {
    IssueContext {
        id: "ISS-1".into(),
        title: "Simulated issue".into(),
        description: String::new(),
        constraint_tests: (1..=tests)
            .map(|i| AcceptanceTest {
                id: format!("TC-{i}"),
                story_ref: "US-1".into(),
                name: format!("behaviour {i}"),
                clauses: vec![
                    Clause::new(ClauseKind::Given, "a state"),
                    Clause::new(ClauseKind::When, "an action"),
                    Clause::new(ClauseKind::Then, "an outcome"),
                ],
            })
            .collect(),
        c4: C4Model::default(),
        adrs: Vec::new(),
    }
}

/// One loop from open to closed or stalled.
pub fn run_trial(params: MockAgentParams, tests: usize, max_iterations: u32, mode: SimMode) -> TrialOutcome {
    let issue = synthetic_issue(tests);
    let world = MockWorld::new(issue.constraint_ids()).shared();
    let constraints: Vec<String> = issue.constraint_ids().map(str::to_owned).collect();
    let config = LoopConfig {
        max_iterations,
        require_plan_approval: false,
    };
    let mut run = LoopRun::begin(&issue.id, "PH-1", constraints, config, 0);
    let mut driver = Driver {
        agent: Box::new(MockAgent::new(params, world.clone())),
        runner: Box::new(MockRunner::new(world)),
        issue,
        plans_dir: None,
        guidance: mode.guidance(),
    };
    run.run_to_completion(&mut driver)
        .expect("mock adapters cannot fail");
    TrialOutcome {
        generate_calls: run.iteration,
        residual_failures: if run.state == LoopState::IssueClosed {
            0
        } else {
            run.failing().len()
        },
        stalled: run.state == LoopState::Stalled,
    }
}

fn report(mode: SimMode, outcomes: &[TrialOutcome]) -> SimulationReport {
    let n = outcomes.len() as f64;
    let (mut iters, mut residual, mut stalled) = (0u64, 0u64, 0u64);
    for o in outcomes {
        iters += u64::from(o.generate_calls);
        residual += o.residual_failures as u64;
        stalled += u64::from(o.stalled);
    }
    SimulationReport {
        mode,
        trials: outcomes.len() as u64,
        mean_iterations: iters as f64 / n,
        mean_residual_failures: residual as f64 / n,
        stalled_fraction: stalled as f64 / n,
    }
}

/// Per-trial outcomes for one mode, in trial order.
pub fn trial_outcomes(spec: &SimulationSpec, mode: SimMode, execution: Execution) -> Vec<TrialOutcome> {
    let trial = |i: u64| {
        let params = spec.params.with_seed(derive_seed(spec.seed, i));
        run_trial(params, spec.tests, spec.max_iterations, mode)
    };
    match execution {
        Execution::Parallel => crate::par::map_range(spec.trials, trial),
        Execution::Sequential => (0..spec.trials).map(trial).collect(),
    }
}

pub fn simulate_paradigms(spec: &SimulationSpec) -> Result<(SimulationReport, SimulationReport), SimError> {
    simulate_paradigms_with(spec, Execution::default())
}

/// Returns (guardrail, prompt_only).
pub fn simulate_paradigms_with(
    spec: &SimulationSpec,
    execution: Execution,
) -> Result<(SimulationReport, SimulationReport), SimError> {
    if spec.trials == 0 {
        return Err(SimError::NoTrials);
    }
    if spec.tests == 0 {
        return Err(SimError::NoTests);
    }
    if spec.max_iterations == 0 {
        return Err(SimError::NoIterations);
    }
    spec.params.validate()?;
    let guard = trial_outcomes(spec, SimMode::Guardrail, execution);
    let prompt = trial_outcomes(spec, SimMode::PromptOnly, execution);
    Ok((report(SimMode::Guardrail, &guard), report(SimMode::PromptOnly, &prompt)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_agent_closes_in_one_call() {
        let params = MockAgentParams {
            seed: 1,
            targeted_success_p: 1.0,
            untargeted_success_p: 0.0,
            regression_rate: 0.0,
        };
        let o = run_trial(params, 3, 25, SimMode::Guardrail);
        assert_eq!(o, TrialOutcome { generate_calls: 1, residual_failures: 0, stalled: false });
    }

    #[test]
    fn prompt_only_without_luck_never_passes() {
        let params = MockAgentParams {
            seed: 1,
            targeted_success_p: 0.5,
            untargeted_success_p: 0.0,
            regression_rate: 0.0,
        };
        let spec = SimulationSpec {
            params,
            tests: 4,
            trials: 20,
            seed: 3,
            max_iterations: 5,
        };
        let (_, p) = simulate_paradigms(&spec).unwrap();
        assert_eq!(p.mean_residual_failures, 4.0);
        assert_eq!(p.stalled_fraction, 1.0);
        assert_eq!(p.mean_iterations, 5.0);
    }

    #[test]
    fn rejects_degenerate_specs() {
        let spec = SimulationSpec {
            trials: 0,
            ..Default::default()
        };
        assert_eq!(simulate_paradigms(&spec), Err(SimError::NoTrials));
    }

    #[test]
    fn schedules_agree() {
        let spec = SimulationSpec {
            trials: 64,
            ..Default::default()
        };
        assert_eq!(
            simulate_paradigms_with(&spec, Execution::Parallel),
            simulate_paradigms_with(&spec, Execution::Sequential)
        );
    }
}
