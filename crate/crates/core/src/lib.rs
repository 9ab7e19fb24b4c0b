//! Full-duplex popular-content distribution over a two-lane mmWave vehicular
//! network, with coalition-formation scheduling.

pub mod checks;
pub mod config;
pub mod engine;
pub mod experiment;
pub mod game;
pub mod ledger;
pub mod mobility;
pub mod radio;
pub mod rng;
pub mod selection;

pub use config::{load_config, ConfigError, SimConfig};
pub use engine::{run_simulation, EpochMetrics, RunSummary, Scheme, Simulation};
