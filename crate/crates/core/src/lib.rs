//! Ensembles of randomly initialized autoregressive surrogates for
//! time-dependent PDE fields.

pub mod datagen;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
pub use field::{
    compute_standardization, extract_training_windows, read_dataset, write_dataset, DatasetBundle, ForcingKind,
    ForcingSeries, GridField, Split, StandardizationStats, TemporalInput, TrainingWindow, Trajectory,
};
