//! Prompt-log reports and the paradigm simulation.

pub mod prompts;
pub mod simulate;

pub use prompts::{
    categorize, distribution_report, parse_prompt_log, read_prompt_log, record_prompt, rounded_percent, Categorized,
    DistributionReport, DistributionRow, Paradigm, PromptCategory, PromptError, PromptRecord, Rule, RuleTable,
    UncategorizedPrompts,
};
pub use simulate::{
    run_trial, simulate_paradigms, simulate_paradigms_with, trial_outcomes, Execution, SimError, SimMode,
    SimulationReport, SimulationSpec, TrialOutcome,
};
