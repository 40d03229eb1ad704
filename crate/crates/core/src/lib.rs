//! Reward-shaped off-policy REINFORCE recommender with a jointly trained
//! satisfaction-imputation head, a synthetic user simulator that decouples
//! engagement from satisfaction, and an evaluation harness.

pub mod checkpoint;
pub mod error;
pub mod harness;
pub mod imputation;
pub mod logio;
pub mod metrics;
pub mod nn;
pub mod policy;
pub mod reward;
pub mod simulator;
pub mod tabular;
pub mod trainer;

pub use error::{Error, Result};
pub use policy::{InteractionEvent, Model, ModelConfig};
pub use reward::RewardConfig;
pub use simulator::{SimConfig, SimWorld};
pub use trainer::TrainConfig;
