//! Seeded mock agent.
//!
//! The agent and its runner share a hidden map from test id to "the current
//! code makes this test pass". Every generate call draws from its own
//! ChaCha8 stream: the generator is seeded with `seed` and switched to
//! stream `call_index` (0-based). One uniform `f64` in `[0, 1)` is drawn per
//! test, in natural id order, and applied as follows:
//!
//! - passing test: regresses when `u < regression_rate`
//! - failing test named in feedback: flips when `u < targeted_success_p`
//! - any other failing test: flips when `u < untargeted_success_p`
//!
//! With no feedback but a plan, every constraint test counts as named; with
//! neither, nothing is named. Every test starts out failing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Agent, AgentError, ChangeSet, GenerateRequest, IssueContext, RunnerError, TestOutcome, TestRunner,
    TestStatus,
};
use crate::ids::NaturalKey;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockAgentParams {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_targeted")]
    pub targeted_success_p: f64,
    #[serde(default = "default_untargeted")]
    pub untargeted_success_p: f64,
    /// Per passing test, per generate call.
    #[serde(default = "default_regression")]
    pub regression_rate: f64,
}

fn default_targeted() -> f64 {
    0.5
}
fn default_untargeted() -> f64 {
    0.1
}
fn default_regression() -> f64 {
    0.05
}

impl Default for MockAgentParams {
    fn default() -> Self {
        MockAgentParams {
            seed: 0,
            targeted_success_p: default_targeted(),
            untargeted_success_p: default_untargeted(),
            regression_rate: default_regression(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("untargeted_success_p ({untargeted}) exceeds targeted_success_p ({targeted})")]
    UntargetedAboveTargeted { targeted: f64, untargeted: f64 },
}

impl MockAgentParams {
    pub fn with_seed(self, seed: u64) -> Self {
        MockAgentParams { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, value) in [
            ("targeted_success_p", self.targeted_success_p),
            ("untargeted_success_p", self.untargeted_success_p),
            ("regression_rate", self.regression_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ParamError::OutOfRange { name, value });
            }
        }
        if self.untargeted_success_p > self.targeted_success_p {
            return Err(ParamError::UntargetedAboveTargeted {
                targeted: self.targeted_success_p,
                untargeted: self.untargeted_success_p,
            });
        }
        Ok(())
    }
}

/// Child seed number `index` of `seed`: the first word of stream `index`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// Hidden correctness state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MockWorld {
    correct: BTreeMap<NaturalKey, bool>,
    calls: u64,
}

pub type SharedWorld = Arc<Mutex<MockWorld>>;

impl MockWorld {
    /// All given tests failing.
    pub fn new<'a>(test_ids: impl IntoIterator<Item = &'a str>) -> Self {
        MockWorld {
            correct: test_ids.into_iter().map(|id| (id.into(), false)).collect(),
            calls: 0,
        }
    }

    pub fn shared(self) -> SharedWorld {
        Arc::new(Mutex::new(self))
    }

    pub fn is_correct(&self, id: &str) -> Option<bool> {
        self.correct.get(&NaturalKey::from(id)).copied()
    }

    pub fn passing(&self) -> Vec<String> {
        self.correct
            .iter()
            .filter(|(_, ok)| **ok)
            .map(|(k, _)| k.0.clone())
            .collect()
    }

    pub fn failing_count(&self) -> usize {
        self.correct.values().filter(|ok| !**ok).count()
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn set_all(&mut self, value: bool) {
        self.correct.values_mut().for_each(|v| *v = value);
    }

    /// Apply one generate call; returns (fixed, regressed) ids.
    pub fn advance(&mut self, params: &MockAgentParams, targets: &BTreeSet<&str>) -> (Vec<String>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(self.calls);
        self.calls += 1;
        let (mut fixed, mut regressed) = (Vec::new(), Vec::new());
        for (id, ok) in self.correct.iter_mut() {
            let u: f64 = rng.random();
            if *ok {
                if u < params.regression_rate {
                    *ok = false;
                    regressed.push(id.0.clone());
                }
            } else {
                let p = if targets.contains(id.0.as_str()) {
                    params.targeted_success_p
                } else {
                    params.untargeted_success_p
                };
                if u < p {
                    *ok = true;
                    fixed.push(id.0.clone());
                }
            }
        }
        (fixed, regressed)
    }
}

pub struct MockAgent {
    params: MockAgentParams,
    world: SharedWorld,
}

impl MockAgent {
    pub fn new(params: MockAgentParams, world: SharedWorld) -> Self {
        MockAgent { params, world }
    }

    pub fn params(&self) -> &MockAgentParams {
        &self.params
    }
}

impl Agent for MockAgent {
    fn draft_plan(&mut self, issue: &IssueContext) -> Result<String, AgentError> {
        let mut plan = format!("# Plan for {}: {}\n\n", issue.id, issue.title);
        for (i, t) in issue.constraint_tests.iter().enumerate() {
            let _ = writeln!(plan, "{}. Make {} pass: {}", i + 1, t.id, t.name);
        }
        Ok(plan)
    }

    fn generate(&mut self, request: &GenerateRequest<'_>) -> Result<ChangeSet, AgentError> {
        let targets: BTreeSet<&str> = match (request.feedback, request.plan) {
            (Some(fb), _) => fb.iter().filter(|o| !o.passed()).map(|o| o.test_id.as_str()).collect(),
            (None, Some(_)) => request.issue.constraint_ids().collect(),
            (None, None) => BTreeSet::new(),
        };
        let mut world = self.world.lock().map_err(|_| AgentError::Failed("mock state poisoned".into()))?;
        let call = world.calls();
        let (fixed, regressed) = world.advance(&self.params, &targets);
        let files = fixed
            .iter()
            .chain(&regressed)
            .map(|id| format!("src/{}.rs", id.to_lowercase()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(ChangeSet {
            summary: format!(
                "mock change {}: fixed [{}], regressed [{}]",
                call + 1,
                fixed.join(", "),
                regressed.join(", ")
            ),
            files,
        })
    }
}

pub struct MockRunner {
    world: SharedWorld,
}

impl MockRunner {
    pub fn new(world: SharedWorld) -> Self {
        MockRunner { world }
    }
}

impl TestRunner for MockRunner {
    fn run(&mut self, test_ids: &[String]) -> Result<Vec<TestOutcome>, RunnerError> {
        let world = self.world.lock().map_err(|_| RunnerError::Io("mock state poisoned".into()))?;
        test_ids
            .iter()
            .map(|id| {
                let ok = world
                    .is_correct(id)
                    .ok_or_else(|| RunnerError::UnknownId(id.clone()))?;
                Ok(TestOutcome {
                    test_id: id.clone(),
                    status: if ok { TestStatus::Pass } else { TestStatus::Fail },
                    message: if ok { String::new() } else { "mock failure".into() },
                    duration_ms: 0,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("TC-{i}")).collect()
    }

    #[test]
    fn params_validation() {
        assert!(MockAgentParams::default().validate().is_ok());
        let p = MockAgentParams {
            targeted_success_p: 1.5,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(ParamError::OutOfRange { .. })));
        let p = MockAgentParams {
            targeted_success_p: 0.1,
            untargeted_success_p: 0.2,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(ParamError::UntargetedAboveTargeted { .. })));
    }

    #[test]
    fn certain_success_fixes_all_targets() {
        let ids = ids(5);
        let mut w = MockWorld::new(ids.iter().map(String::as_str));
        let params = MockAgentParams {
            targeted_success_p: 1.0,
            untargeted_success_p: 0.0,
            regression_rate: 0.0,
            seed: 3,
        };
        let targets = ids.iter().map(String::as_str).collect();
        w.advance(&params, &targets);
        assert_eq!(w.failing_count(), 0);
    }

    #[test]
    fn runner_reports_hidden_state() {
        let world = MockWorld::new(["TC-1", "TC-2"]).shared();
        world.lock().unwrap().correct.insert("TC-2".into(), true);
        let mut r = MockRunner::new(world);
        let out = r.run(&["TC-1".into(), "TC-2".into()]).unwrap();
        assert_eq!(out[0].status, TestStatus::Fail);
        assert_eq!(out[0].message, "mock failure");
        assert!(out[1].passed() && out[1].message.is_empty());
        assert_eq!(r.run(&[]).unwrap(), vec![]);
        assert_eq!(r.run(&["TC-9".into()]), Err(RunnerError::UnknownId("TC-9".into())));
    }

    #[test]
    fn streams_are_per_call() {
        let ids = ids(12);
        let params = MockAgentParams::default().with_seed(42);
        let targets = BTreeSet::new();
        let mut a = MockWorld::new(ids.iter().map(String::as_str));
        let mut b = a.clone();
        for _ in 0..5 {
            a.advance(&params, &targets);
            b.advance(&params, &targets);
        }
        assert_eq!(a, b);
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
    }
}
