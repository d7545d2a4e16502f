//! The one-step surrogate: a conditioned UNet with hand-written backprop.

mod attention;
mod checkpoint;
mod config;
mod embedding;
mod net;
pub mod ops;
mod params;

pub use attention::{temporal_attention, AttentionOutput, AttentionWeights};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use embedding::sinusoidal_embedding;
pub use net::{mse_loss, Surrogate, Tape};
pub use ops::Real;
pub use params::{init_params, ParamEntry, ParamLayout, PredictorParams};
