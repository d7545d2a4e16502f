//! Field snapshots, trajectories, datasets and the supervised windowing that
//! turns trajectories into one-step training tuples.

mod io;
mod stats;
mod window;

pub use io::{read_dataset, write_dataset, Manifest, TrajectoryEntry, DATASET_VERSION};
pub use stats::{compute_standardization, StandardizationStats, STD_FLOOR};
pub use window::{extract_training_windows, temporal_input_at, TemporalInput, TrainingWindow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One scalar field snapshot on a regular `nx` x `ny` grid, stored row-major
/// as `[ny][nx]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Shape(format!("grid dimensions must be positive, got {nx}x{ny}")));
        }
        if values.len() != nx * ny {
            return Err(Error::Shape(format!(
                "{nx}x{ny} grid needs {} values, got {}",
                nx * ny,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "grid value at flat index {pos} is {}",
                values[pos]
            )));
        }
        Ok(Self { nx, ny, values })
    }

    pub fn filled(nx: usize, ny: usize, value: f64) -> Self {
        assert!(nx > 0 && ny > 0 && value.is_finite());
        Self {
            nx,
            ny,
            values: vec![value; nx * ny],
        }
    }

    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self::filled(nx, ny, 0.0)
    }

    /// Builds a field from `f(ix, iy)`.
    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                values.push(f(ix, iy));
            }
        }
        Self::new(nx, ny, values)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    /// Applies `f` elementwise; the result is re-validated for finiteness.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.nx, self.ny, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Rounds every value to the nearest `f32`, the on-disk precision.
    pub fn quantized_f32(&self) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().map(|&v| v as f32 as f64).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingKind {
    /// One external value per time step (e.g. an applied strain).
    TimeVarying,
    /// A fixed parameter vector for the whole trajectory (e.g. feed/kill rates).
    ConstantParams,
    None,
}

impl ForcingKind {
    /// Number of forcing components that get their own standardization
    /// statistics.
    pub fn stat_components(self, forcing_len: usize) -> usize {
        match self {
            ForcingKind::TimeVarying => 1,
            ForcingKind::ConstantParams => forcing_len,
            ForcingKind::None => 0,
        }
    }

    /// Width of the raw forcing part of a temporal input for history `l`.
    pub fn input_width(self, history: usize, param_dim: usize) -> usize {
        match self {
            ForcingKind::TimeVarying => history + 1,
            ForcingKind::ConstantParams => param_dim,
            ForcingKind::None => 0,
        }
    }
}

/// Temporal conditioning data for one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ForcingSeries {
    time_ids: Vec<i64>,
    values: Vec<f64>,
    kind: ForcingKind,
}

impl ForcingSeries {
    pub fn new(time_ids: Vec<i64>, values: Vec<f64>, kind: ForcingKind) -> Result<Self> {
        if time_ids.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Shape("time ids must be strictly increasing".into()));
        }
        match kind {
            ForcingKind::TimeVarying if values.len() != time_ids.len() => {
                return Err(Error::Shape(format!(
                    "time-varying forcing needs {} values, got {}",
                    time_ids.len(),
                    values.len()
                )))
            }
            ForcingKind::ConstantParams if values.is_empty() => {
                return Err(Error::Shape("constant forcing needs at least one parameter".into()))
            }
            ForcingKind::None if !values.is_empty() => {
                return Err(Error::Shape("forcing kind `none` carries no values".into()))
            }
            _ => {}
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forcing value".into()));
        }
        Ok(Self {
            time_ids,
            values,
            kind,
        })
    }

    /// Time ids `0..n_steps` with no external forcing.
    pub fn unforced(n_steps: usize) -> Self {
        Self {
            time_ids: (0..n_steps as i64).collect(),
            values: Vec::new(),
            kind: ForcingKind::None,
        }
    }

    /// Time ids `0..n_steps` with a constant parameter vector.
    pub fn constant(n_steps: usize, params: Vec<f64>) -> Result<Self> {
        Self::new((0..n_steps as i64).collect(), params, ForcingKind::ConstantParams)
    }

    pub fn time_ids(&self) -> &[i64] {
        &self.time_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> ForcingKind {
        self.kind
    }

    pub fn n_steps(&self) -> usize {
        self.time_ids.len()
    }

    /// Parameter count P for constant forcing, 1 for time-varying, 0 for none.
    pub fn param_dim(&self) -> usize {
        match self.kind {
            ForcingKind::TimeVarying => 1,
            ForcingKind::ConstantParams => self.values.len(),
            ForcingKind::None => 0,
        }
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            time_ids: self.time_ids.clone(),
            values,
            kind: self.kind,
        }
    }
}

/// Ordered field snapshots plus the forcing that drove them.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    id: String,
    field_name: String,
    frames: Vec<GridField>,
    forcing: ForcingSeries,
}

impl Trajectory {
    pub fn new(
        id: impl Into<String>,
        field_name: impl Into<String>,
        frames: Vec<GridField>,
        forcing: ForcingSeries,
    ) -> Result<Self> {
        let id = id.into();
        let first = frames
            .first()
            .ok_or_else(|| Error::Shape(format!("trajectory {id} has no frames")))?
            .shape();
        if let Some(bad) = frames.iter().position(|f| f.shape() != first) {
            return Err(Error::Shape(format!(
                "trajectory {id}: frame {bad} has shape {:?}, expected {first:?}",
                frames[bad].shape()
            )));
        }
        if frames.len() != forcing.n_steps() {
            return Err(Error::Shape(format!(
                "trajectory {id}: {} frames but {} time ids",
                frames.len(),
                forcing.n_steps()
            )));
        }
        Ok(Self {
            id,
            field_name: field_name.into(),
            frames,
            forcing,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn field_name(&self) -> &str {
        &self.field_name
    }

    pub fn frames(&self) -> &[GridField] {
        &self.frames
    }

    pub fn forcing(&self) -> &ForcingSeries {
        &self.forcing
    }

    pub fn n_steps(&self) -> usize {
        self.frames.len()
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        self.frames[0].shape()
    }

    pub(crate) fn with_parts(&self, frames: Vec<GridField>, forcing: ForcingSeries) -> Self {
        Self {
            id: self.id.clone(),
            field_name: self.field_name.clone(),
            frames,
            forcing,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// A collection of trajectories sharing grid, length and forcing layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    trajectories: Vec<Trajectory>,
    split: Split,
    stats: Option<StandardizationStats>,
}

impl DatasetBundle {
    pub fn new(trajectories: Vec<Trajectory>, split: Split) -> Result<Self> {
        if let Some(first) = trajectories.first() {
            let shape = first.grid_shape();
            let steps = first.n_steps();
            let kind = first.forcing().kind();
            let dim = first.forcing().values().len();
            for t in &trajectories[1..] {
                if t.grid_shape() != shape {
                    return Err(Error::Shape(format!(
                        "trajectory {} grid {:?} differs from {shape:?}",
                        t.id(),
                        t.grid_shape()
                    )));
                }
                if t.n_steps() != steps {
                    return Err(Error::Shape(format!(
                        "trajectory {} has {} steps, expected {steps}",
                        t.id(),
                        t.n_steps()
                    )));
                }
                if t.forcing().kind() != kind || t.forcing().values().len() != dim {
                    return Err(Error::Shape(format!(
                        "trajectory {} forcing layout differs from the first trajectory",
                        t.id()
                    )));
                }
                if t.field_name() != first.field_name() {
                    return Err(Error::Shape(format!(
                        "trajectory {} holds field `{}`, expected `{}`",
                        t.id(),
                        t.field_name(),
                        first.field_name()
                    )));
                }
            }
        }
        Ok(Self {
            trajectories,
            split,
            stats: None,
        })
    }

    pub fn with_stats(mut self, stats: StandardizationStats) -> Self {
        self.stats = Some(stats);
        self
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn stats(&self) -> Option<&StandardizationStats> {
        self.stats.as_ref()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn grid_shape(&self) -> Option<(usize, usize)> {
        self.trajectories.first().map(Trajectory::grid_shape)
    }

    pub fn n_steps(&self) -> Option<usize> {
        self.trajectories.first().map(Trajectory::n_steps)
    }

    pub fn forcing_kind(&self) -> Option<ForcingKind> {
        self.trajectories.first().map(|t| t.forcing().kind())
    }

    pub fn field_name(&self) -> Option<&str> {
        self.trajectories.first().map(Trajectory::field_name)
    }

    /// Raw forcing value count per trajectory.
    pub fn forcing_len(&self) -> usize {
        self.trajectories
            .first()
            .map_or(0, |t| t.forcing().values().len())
    }

    /// Forcing parameter dimension P (see [`ForcingSeries::param_dim`]).
    pub fn param_dim(&self) -> usize {
        self.trajectories
            .first()
            .map_or(0, |t| t.forcing().param_dim())
    }

    /// Copy of this bundle with every frame and forcing series standardized.
    pub fn standardized(&self, stats: &StandardizationStats) -> Result<DatasetBundle> {
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| {
                let frames = t
                    .frames()
                    .iter()
                    .map(|f| stats.standardize_field(f))
                    .collect::<Result<Vec<_>>>()?;
                let forcing = stats.standardize_forcing(t.forcing())?;
                Ok(t.with_parts(frames, forcing))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DatasetBundle {
            trajectories,
            split: self.split,
            stats: Some(stats.clone()),
        })
    }

    /// Splits off the trajectories at `indices` (in order) into a new bundle.
    pub fn select(&self, indices: &[usize], split: Split) -> Result<DatasetBundle> {
        let trajectories = indices
            .iter()
            .map(|&i| {
                self.trajectories.get(i).cloned().ok_or_else(|| {
                    Error::Shape(format!("trajectory index {i} out of range ({})", self.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = DatasetBundle::new(trajectories, split)?;
        out.stats = self.stats.clone();
        Ok(out)
    }
}
