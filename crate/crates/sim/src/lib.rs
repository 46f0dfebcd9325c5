//! Simulator, scenario files and experiments around [`aliasplan_core`].
//!
//! - [`scenario`]: the versioned JSON scenario format and the bundled
//!   two-mode scenario.
//! - [`belief_io`]: mixture beliefs as JSON.
//! - [`world_sim`]: the ground-truth robot.
//! - [`episode`]: the plan, act, update loop and its CSV trace.
//! - [`experiments`]: the budget and runtime experiments.
//! - [`checks`]: randomized bound checks.

pub mod belief_io;
pub mod checks;
pub mod episode;
pub mod experiments;
pub mod scenario;
pub mod world_sim;

pub use episode::{run_disambiguation, EpisodeReport, Method, Termination};
pub use scenario::{load_scenario, Scenario, ScenarioError};
