//! Config-driven scenarios on top of `metaopt-core`.

pub mod config;
pub mod error;
pub mod records;
pub mod scenario;

pub use config::{ScenarioConfig, Scale, Suite};
pub use error::HarnessError;
pub use records::{read_csv, write_csv, ResultRecord};
pub use scenario::{beampattern_dump, run_outcomes, run_point, run_scenario, tradeoff_sweep, RunOptions};
