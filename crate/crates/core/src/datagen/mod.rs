//! Trajectory generators: Gray-Scott simulations and monotone load paths.

pub mod gray_scott;
pub mod interp;
pub mod load_path;

pub use gray_scott::{
    gaussian_cluster_ic, gray_scott_step, sample_gaussian_cluster_ic, simulate_gray_scott, spectral_laplacian,
    ClusterSpec, GrayScottParams, GrayScottSolver, GrayScottState,
};
pub use interp::{monotone_cubic_interpolate, MonotoneCubic};
pub use load_path::{generate_load_path, sample_load_path, LoadPath, LoadPathConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{DatasetBundle, Split, Trajectory};

/// Resampling attempts per trajectory before a divergence becomes fatal.
const MAX_IC_ATTEMPTS: u64 = 16;

/// Per-trajectory RNG: stream `index` of the dataset seed, offset by attempt.
fn trajectory_rng(seed: u64, index: u64, attempt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + (attempt << 32));
    rng
}

/// `n_ic_per_combo` clustered initial conditions simulated under every
/// parameter combination, combo-major. Identical arguments give identical
/// bundles regardless of how many worker threads run the simulations.
pub fn build_gray_scott_dataset(
    n_ic_per_combo: usize,
    combos: &[GrayScottParams],
    nx: usize,
    ny: usize,
    n_steps: usize,
    seed: u64,
    split: Split,
) -> Result<DatasetBundle> {
    if combos.is_empty() {
        return Err(Error::Config("at least one parameter combination is required".into()));
    }
    if n_ic_per_combo == 0 {
        return Err(Error::Config("n_ic must be positive".into()));
    }
    for c in combos {
        c.validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..combos.len())
        .flat_map(|c| (0..n_ic_per_combo).map(move |i| (c, i)))
        .collect();

    let trajectories = jobs
        .par_iter()
        .enumerate()
        .map(|(index, &(c, i))| {
            let params = &combos[c];
            let id = format!("gs_f{:.3}_k{:.3}_ic{i:04}", params.f, params.k);
            let mut last_err = None;
            for attempt in 0..MAX_IC_ATTEMPTS {
                let mut rng = trajectory_rng(seed, index as u64, attempt);
                let ic = sample_gaussian_cluster_ic(nx, ny, &mut rng)?;
                match simulate_gray_scott(&ic, params, n_steps, &id) {
                    Ok(t) => return Ok(t),
                    Err(e) if e.is_numeric() => {
                        log::warn!("combo {c} (f = {}, k = {}), seed {seed}, trajectory {index}: {e}; resampling IC", params.f, params.k);
                        last_err = Some(e);
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(last_err.expect("at least one attempt"))
        })
        .collect::<Result<Vec<Trajectory>>>()?;

    DatasetBundle::new(trajectories, split)
}
