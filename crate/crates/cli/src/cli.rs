use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::ops::LoopOverrides;

#[derive(Debug, Parser)]
#[command(name = "shiftup", version, about = "Artifact-guarded agent development loop")]
pub struct Cli {
    /// Project directory containing shiftup.json.
    #[arg(long, env = "SHIFTUP_ROOT", default_value = ".", global = true)]
    pub root: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum GraphFormat {
    #[default]
    Json,
    Dot,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the bundle and lint the acceptance tests.
    Lint {
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Print phases in dependency order, one per line.
    Order {
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Traceability coverage ratios and gaps.
    Coverage {
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Dump the trace graph.
    Graph {
        #[arg(long, value_enum, default_value_t)]
        format: GraphFormat,
    },
    /// Artifacts that transitively depend on ID.
    Impact {
        id: String,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Drive the implementation loop.
    #[command(subcommand)]
    Loop(LoopCommand),
    /// Paired Monte Carlo comparison of guardrail and prompt-only loops.
    Simulate(SimulateArgs),
    /// Prompt-log reports.
    #[command(subcommand)]
    Prompts(PromptsCommand),
    /// Serve the JSON API and the cockpit assets.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum LoopCommand {
    /// Run one issue until it closes or stalls.
    Run {
        issue: String,
        #[command(flatten)]
        overrides: LoopOverrides,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    Guardrail,
    PromptOnly,
    #[default]
    Both,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Constraint tests per simulated issue.
    #[arg(long, default_value_t = 12)]
    pub tests: usize,
    #[arg(long = "max-iter", default_value_t = 25)]
    pub max_iterations: u32,
    #[arg(long, value_enum, default_value_t)]
    pub mode: ModeChoice,
    #[arg(long = "p-target", default_value_t = 0.5)]
    pub targeted_success_p: f64,
    #[arg(long = "p-untargeted", default_value_t = 0.1)]
    pub untargeted_success_p: f64,
    #[arg(long = "regression-rate", default_value_t = 0.05)]
    pub regression_rate: f64,
    /// Run trials on one thread.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParadigmChoice {
    ShiftUp,
    StructuredVibe,
}

#[derive(Debug, Subcommand)]
pub enum PromptsCommand {
    /// Category distribution per paradigm.
    Report {
        /// Prompt log; defaults to logs/prompts.jsonl under the root.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, value_enum)]
        paradigm: Option<ParadigmChoice>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Defaults to the port in shiftup.json.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    /// Directory of built cockpit assets.
    #[arg(long, env = "SHIFTUP_ASSETS")]
    pub assets: Option<PathBuf>,
}
