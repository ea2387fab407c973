//! Application harnesses: distributed sensing, federated learning with
//! over-the-air gradient aggregation, and AirComp-based average consensus.

mod consensus;
mod dataset;
mod federated;
mod sensing;

pub use consensus::{consensus_round, run_consensus, ConsensusState};
pub use dataset::{FederatedTask, GaussianMixtureSpec, GaussianMixtureTask};
pub use federated::{train_federated, AggregationMode, FederatedChannel, FederatedRun};
pub use sensing::{run_sensing, PolicyConfig, SensingScenario};
