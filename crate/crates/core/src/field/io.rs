//! Native dataset directory format.
//!
//! ```text
//! <dir>/manifest.json            trajectory ids, shapes, forcing kind, optional stats
//! <dir>/traj_NNNNN.frames         float32-le, C-contiguous [N_T][ny][nx]
//! <dir>/traj_NNNNN.forcing        int64-le time ids [N_T], then float64-le forcing values
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetBundle, ForcingKind, ForcingSeries, GridField, Split, StandardizationStats, Trajectory};
use crate::error::{Error, Result};

pub const DATASET_VERSION: &str = "1";
const FRAME_DTYPE: &str = "float32-le";
const FORCING_LAYOUT: &str = "time_ids:int64-le[N_T] ++ values:float64-le[forcing_len]";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: String,
    pub field_name: String,
    pub nx: usize,
    pub ny: usize,
    #[serde(rename = "N_T")]
    pub n_steps: usize,
    #[serde(rename = "N_s")]
    pub n_trajectories: usize,
    pub split: Split,
    pub forcing_kind: ForcingKind,
    /// Raw forcing values stored per trajectory.
    pub forcing_len: usize,
    pub forcing_layout: String,
    pub dtype: String,
    pub trajectories: Vec<TrajectoryEntry>,
    #[serde(default)]
    pub stats: Option<StandardizationStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryEntry {
    pub id: String,
    pub frames: String,
    pub forcing: String,
}

fn file_stem(index: usize) -> String {
    format!("traj_{index:05}")
}

pub fn write_dataset(bundle: &DatasetBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let first = bundle.trajectories().first().ok_or(Error::EmptyDataset)?;
    let (nx, ny) = first.grid_shape();
    fs::create_dir_all(dir)?;

    let mut entries = Vec::with_capacity(bundle.len());
    for (i, traj) in bundle.trajectories().iter().enumerate() {
        let stem = file_stem(i);
        let entry = TrajectoryEntry {
            id: traj.id().to_string(),
            frames: format!("{stem}.frames"),
            forcing: format!("{stem}.forcing"),
        };

        let mut frame_bytes = Vec::with_capacity(traj.n_steps() * nx * ny * 4);
        for v in traj.frames().iter().flat_map(GridField::values) {
            frame_bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        fs::write(dir.join(&entry.frames), frame_bytes)?;

        let forcing = traj.forcing();
        let mut forcing_bytes = Vec::with_capacity(8 * (forcing.n_steps() + forcing.values().len()));
        for t in forcing.time_ids() {
            forcing_bytes.extend_from_slice(&t.to_le_bytes());
        }
        for v in forcing.values() {
            forcing_bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join(&entry.forcing), forcing_bytes)?;
        entries.push(entry);
    }

    let manifest = Manifest {
        schema_version: DATASET_VERSION.to_string(),
        field_name: first.field_name().to_string(),
        nx,
        ny,
        n_steps: first.n_steps(),
        n_trajectories: bundle.len(),
        split: bundle.split(),
        forcing_kind: first.forcing().kind(),
        forcing_len: first.forcing().values().len(),
        forcing_layout: FORCING_LAYOUT.to_string(),
        dtype: FRAME_DTYPE.to_string(),
        trajectories: entries,
        stats: bundle.stats().cloned(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<DatasetBundle> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let raw = fs::read(&manifest_path)?;
    let manifest: Manifest =
        serde_json::from_slice(&raw).map_err(|e| Error::format(&manifest_path, e.to_string()))?;

    if manifest.schema_version != DATASET_VERSION {
        return Err(Error::Version {
            found: manifest.schema_version,
            expected: DATASET_VERSION.into(),
        });
    }
    if manifest.dtype != FRAME_DTYPE {
        return Err(Error::format(&manifest_path, format!("unsupported dtype `{}`", manifest.dtype)));
    }
    if manifest.trajectories.len() != manifest.n_trajectories {
        return Err(Error::format(
            &manifest_path,
            format!(
                "N_s = {} but {} trajectory entries listed",
                manifest.n_trajectories,
                manifest.trajectories.len()
            ),
        ));
    }
    if manifest.nx == 0 || manifest.ny == 0 || manifest.n_steps == 0 {
        return Err(Error::format(&manifest_path, "grid and step counts must be positive"));
    }

    let frame_len = manifest.nx * manifest.ny;
    let frame_bytes = (frame_len * 4) as u64;
    let mut trajectories = Vec::with_capacity(manifest.n_trajectories);
    for entry in &manifest.trajectories {
        let path = dir.join(&entry.frames);
        let bytes = fs::read(&path)?;
        let expected = frame_bytes * manifest.n_steps as u64;
        if bytes.len() as u64 != expected {
            if bytes.len() as u64 % frame_bytes == 0 {
                return Err(Error::FrameCount {
                    path,
                    expected: manifest.n_steps,
                    found: (bytes.len() as u64 / frame_bytes) as usize,
                });
            }
            return Err(Error::ByteLength {
                path,
                expected,
                found: bytes.len() as u64,
            });
        }
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let frames = values
            .chunks_exact(frame_len)
            .map(|c| GridField::new(manifest.nx, manifest.ny, c.to_vec()))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::format(&path, e.to_string()))?;

        let fpath = dir.join(&entry.forcing);
        let fbytes = fs::read(&fpath)?;
        let expected = 8 * (manifest.n_steps + manifest.forcing_len) as u64;
        if fbytes.len() as u64 != expected {
            return Err(Error::ByteLength {
                path: fpath,
                expected,
                found: fbytes.len() as u64,
            });
        }
        let words: Vec<[u8; 8]> = fbytes
            .chunks_exact(8)
            .map(|c| c.try_into().expect("chunk of 8"))
            .collect();
        let time_ids = words[..manifest.n_steps].iter().map(|w| i64::from_le_bytes(*w)).collect();
        let fvalues = words[manifest.n_steps..].iter().map(|w| f64::from_le_bytes(*w)).collect();
        let forcing = ForcingSeries::new(time_ids, fvalues, manifest.forcing_kind)
            .map_err(|e| Error::format(&fpath, e.to_string()))?;

        trajectories.push(
            Trajectory::new(entry.id.clone(), manifest.field_name.clone(), frames, forcing)
                .map_err(|e| Error::format(&path, e.to_string()))?,
        );
    }

    let bundle = DatasetBundle::new(trajectories, manifest.split)
        .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    Ok(match manifest.stats {
        Some(stats) => {
            stats.validate()?;
            bundle.with_stats(stats)
        }
        None => bundle,
    })
}
