//! Project manifest (`shiftup.json`).

use serde::{Deserialize, Serialize};

use crate::adapters::MockAgentParams;
use crate::engine::LoopConfig;

pub const MANIFEST_FILE: &str = "shiftup.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub name: String,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runner: Option<RunnerConfig>,
    #[serde(default, rename = "loop")]
    pub loop_defaults: LoopConfig,
    #[serde(default)]
    pub service: ServiceConfig,
}

impl ProjectConfig {
    pub fn named(name: impl Into<String>) -> Self {
        ProjectConfig {
            name: name.into(),
            agent: AgentConfig::default(),
            runner: None,
            loop_defaults: LoopConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    #[default]
    Mock,
    Command,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default)]
    pub adapter: AdapterKind,
    #[serde(default)]
    pub mock: MockAgentParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandConfig>,
}

/// An external program. `command` is split on whitespace into argv; no shell
/// is involved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandConfig {
    pub command: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

/// Test-runner command template. Must contain `{ids}` and `{output}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunnerConfig {
    pub command: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    300
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_port")]
    pub port: u16,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            port: default_port(),
        }
    }
}

fn default_port() -> u16 {
    7878
}
