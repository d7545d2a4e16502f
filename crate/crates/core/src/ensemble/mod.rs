//! Independently initialized members trained on the same data, averaged
//! during an autoregressive rollout.

mod rollout;
mod store;
mod train;

pub use rollout::{ensemble_average, rollout_members, OneStepPredictor, RolloutMode, RolloutOptions, RolloutResult};
pub use store::{load_ensemble, save_ensemble, Ensemble, ENSEMBLE_VERSION};
pub use train::{train_ensemble, train_member, Optimizer, TrainConfig, TrainedMember};
