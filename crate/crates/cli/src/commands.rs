use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;
use shiftup_core::adapters::MockAgentParams;
use shiftup_core::engine::LoopState;
use shiftup_core::graph::{build_graph, coverage_report, impact_of, phase_order, CoverageReport};
use shiftup_core::gwt::lint_tests;
use shiftup_core::metrics::{
    simulate_paradigms_with, Execution, Paradigm, PromptError, SimulationReport, SimulationSpec,
};
use shiftup_core::workspace::PROMPTS_LOG;
use shiftup_core::ArtifactBundle;

use crate::cli::{Cli, Command, Format, GraphFormat, LoopCommand, ModeChoice, ParadigmChoice, PromptsCommand};
use crate::ops::{load_project, open_session, DomainFailure, LoopOverrides, OpError, ReportError};
use crate::view::{BundleSummary, RunSummary};

fn domain(message: impl Into<String>) -> anyhow::Error {
    DomainFailure(message.into()).into()
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn bundle(root: &Path) -> Result<ArtifactBundle> {
    load_project(root).map_err(OpError::into_anyhow)
}

pub fn dispatch(cli: Cli) -> Result<u8> {
    let root = cli.root.as_path();
    match cli.command {
        Command::Lint { format } => lint(root, format),
        Command::Order { format } => order(root, format),
        Command::Coverage { format } => coverage(root, format),
        Command::Graph { format } => graph(root, format),
        Command::Impact { id, format } => impact(root, &id, format),
        Command::Loop(LoopCommand::Run {
            issue,
            overrides,
            format,
        }) => loop_run(root, &issue, &overrides, format),
        Command::Simulate(args) => simulate(args),
        Command::Prompts(PromptsCommand::Report { log, paradigm, format }) => {
            let log = log.unwrap_or_else(|| root.join(PROMPTS_LOG));
            prompts_report(&log, paradigm, format)
        }
        Command::Serve(args) => crate::service::serve_blocking(root, args),
    }
}

fn lint(root: &Path, format: Format) -> Result<u8> {
    let (errors, warnings, summary) = match shiftup_core::load_bundle(root) {
        Ok(b) => (Vec::new(), lint_tests(&b.tests), Some(BundleSummary::from(&b))),
        Err(errors) => {
            if errors.iter().any(|e| e.is_environment()) {
                return Err(OpError::Bundle(errors).into_anyhow());
            }
            (errors, Vec::new(), None)
        }
    };
    match format {
        Format::Json => print_json(&json!({
            "valid": errors.is_empty(),
            "errors": errors.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "warnings": warnings,
            "summary": summary,
        }))?,
        Format::Text => {
            for e in &errors {
                println!("{e}");
            }
            if let Some(s) = &summary {
                let c = &s.counts;
                println!(
                    "{}: {} requirements, {} stories, {} tests, {} ADRs, {} phases, {} issues; 0 violations",
                    s.name, c.requirements, c.stories, c.tests, c.adrs, c.phases, c.issues
                );
            } else {
                println!("{} violation(s)", errors.len());
            }
            for w in &warnings {
                println!("warning: {w}");
            }
        }
    }
    Ok(if errors.is_empty() { 0 } else { 1 })
}

fn order(root: &Path, format: Format) -> Result<u8> {
    let b = bundle(root)?;
    let order = phase_order(&build_graph(&b)).map_err(|e| domain(e.to_string()))?;
    match format {
        Format::Json => print_json(&json!({ "order": order }))?,
        Format::Text => {
            for id in &order {
                println!("{id}");
            }
        }
    }
    Ok(0)
}

fn print_coverage(c: &CoverageReport) {
    let rows = [
        ("stories covered by tests", c.story_coverage, &c.uncovered_stories),
        ("requirements covered by stories", c.requirement_coverage, &c.uncovered_requirements),
        ("tests constrained by issues", c.test_constraint_coverage, &c.unconstrained_tests),
        ("tests placed in phases", c.test_phase_coverage, &c.unphased_tests),
    ];
    for (label, ratio, gaps) in rows {
        println!("{label:<32} {:>6.1}%", ratio * 100.0);
        if !gaps.is_empty() {
            println!("  missing: {}", gaps.join(", "));
        }
    }
}

fn coverage(root: &Path, format: Format) -> Result<u8> {
    let report = coverage_report(&build_graph(&bundle(root)?));
    match format {
        Format::Json => print_json(&report)?,
        Format::Text => print_coverage(&report),
    }
    Ok(0)
}

fn graph(root: &Path, format: GraphFormat) -> Result<u8> {
    let g = build_graph(&bundle(root)?);
    match format {
        GraphFormat::Json => print_json(&g.to_json())?,
        GraphFormat::Dot => print!("{}", g.to_dot()),
    }
    Ok(0)
}

fn impact(root: &Path, id: &str, format: Format) -> Result<u8> {
    let g = build_graph(&bundle(root)?);
    let impacted = impact_of(&g, id).map_err(|e| domain(e.to_string()))?;
    match format {
        Format::Json => print_json(&json!({ "id": id, "impacted": impacted }))?,
        Format::Text => {
            for i in &impacted {
                println!("{i}");
            }
        }
    }
    Ok(0)
}

fn loop_run(root: &Path, issue: &str, overrides: &LoopOverrides, format: Format) -> Result<u8> {
    let mut session = open_session(root, issue, overrides).map_err(OpError::into_anyhow)?;
    let result = session.run_to_completion();
    let summary = RunSummary::from(&session.run);
    match format {
        Format::Json => print_json(&summary)?,
        Format::Text => println!(
            "{}: {} after {} iteration(s); {}/{} constraint tests passing",
            summary.issue,
            summary.state,
            summary.iteration,
            summary.passing.len(),
            summary.constraints.len()
        ),
    }
    result.map_err(|e| OpError::from(e).into_anyhow())?;
    Ok(if session.run.state == LoopState::IssueClosed { 0 } else { 1 })
}

fn simulate(args: crate::cli::SimulateArgs) -> Result<u8> {
    let spec = SimulationSpec {
        params: MockAgentParams {
            seed: 0,
            targeted_success_p: args.targeted_success_p,
            untargeted_success_p: args.untargeted_success_p,
            regression_rate: args.regression_rate,
        },
        tests: args.tests,
        trials: args.trials,
        seed: args.seed,
        max_iterations: args.max_iterations,
    };
    let execution = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let (g, p) = simulate_paradigms_with(&spec, execution).map_err(|e| domain(e.to_string()))?;
    let reports: Vec<SimulationReport> = match args.mode {
        ModeChoice::Guardrail => vec![g],
        ModeChoice::PromptOnly => vec![p],
        ModeChoice::Both => vec![g, p],
    };
    match args.format {
        Format::Json => print_json(&json!({ "spec": spec, "reports": reports }))?,
        Format::Text => {
            println!(
                "{:<12} {:>7} {:>16} {:>23} {:>17}",
                "mode", "trials", "mean_iterations", "mean_residual_failures", "stalled_fraction"
            );
            for r in &reports {
                let mode = serde_json::to_value(r.mode)?;
                println!(
                    "{:<12} {:>7} {:>16.4} {:>23.4} {:>17.4}",
                    mode.as_str().unwrap_or_default(),
                    r.trials,
                    r.mean_iterations,
                    r.mean_residual_failures,
                    r.stalled_fraction
                );
            }
        }
    }
    Ok(0)
}

fn prompts_report(log: &Path, paradigm: Option<ParadigmChoice>, format: Format) -> Result<u8> {
    let only = paradigm.map(|p| match p {
        ParadigmChoice::ShiftUp => Paradigm::ShiftUp,
        ParadigmChoice::StructuredVibe => Paradigm::StructuredVibe,
    });
    let reports = match crate::ops::prompt_reports(log, only) {
        Ok(r) => r,
        Err(e @ (ReportError::MissingLog(_) | ReportError::Log(PromptError::Io { .. }))) => {
            return Err(anyhow::Error::new(e)).context("prompt report")
        }
        Err(e) => return Err(domain(e.to_string())),
    };
    match format {
        Format::Json => print_json(&json!({ "reports": reports }))?,
        Format::Text => {
            let tables: Vec<String> = reports.iter().map(|r| r.to_table()).collect();
            print!("{}", tables.join("\n"));
        }
    }
    Ok(0)
}
