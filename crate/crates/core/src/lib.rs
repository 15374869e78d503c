//! Guardrail artifacts for agent-driven development: requirements, stories,
//! given-when-then acceptance tests, architecture records, roadmap phases and
//! work issues, the traceability graph over them, and the implement/verify
//! loop that drives an agent until an issue's tests pass.

pub mod adapters;
pub mod artifact;
pub mod config;
pub mod engine;
pub mod graph;
pub mod gwt;
pub mod ids;
pub mod metrics;
mod par;
pub mod workspace;

pub use artifact::{load_bundle, save_bundle, ArtifactBundle};
pub use config::ProjectConfig;
