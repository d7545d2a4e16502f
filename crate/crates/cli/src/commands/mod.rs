//! Subcommand implementations. Each loads and checks its inputs before it
//! takes the output lock or writes anything.

mod evaluate;
mod gen_data;
mod report;
mod rollout;
mod sweep;
mod train;

use std::path::Path;

use anyhow::{Context, Result};
use ensroll::ensemble::{load_ensemble, Ensemble};
use ensroll::{read_dataset, DatasetBundle};

pub use evaluate::evaluate;
pub use gen_data::gen_data;
pub use report::report;
pub use rollout::rollout;
pub use sweep::sweep;
pub use train::train;

/// Flags shared by every subcommand.
#[derive(Clone, Copy, Debug, Default)]
pub struct Globals {
    pub seed: Option<u64>,
    pub deterministic: bool,
}

fn open_dataset(dir: &Path) -> Result<DatasetBundle> {
    read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))
}

fn open_ensemble(dir: &Path) -> Result<Ensemble> {
    load_ensemble(dir).with_context(|| format!("loading ensemble {}", dir.display()))
}
