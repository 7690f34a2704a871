//! Round loop, clustering trigger, per-cluster aggregation and test-time
//! routing.

mod config;
mod sim;
mod trigger;

pub use config::{ExperimentConfig, Mode};
pub use sim::{
    evaluate_known_association, infer_test_clients, majority_clusters, mean_accuracy, DescriptorSpace,
    FederationState, RoundLog, Simulation, TestOutcome,
};
pub use trigger::{should_trigger, DEFAULT_TRIGGER_THRESHOLD, TRIGGER_CEILING, TRIGGER_FLOOR};
