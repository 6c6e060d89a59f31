//! Configuration and scenario orchestration behind the `tdspectra` binary.

pub mod config;
pub mod scenario;

pub use config::{parse_config, parse_config_str, Method, Scenario, ScenarioConfig};
pub use scenario::{run_scenario, Alignment, Route, RouteOutcome, RunReport, TraceResult};
