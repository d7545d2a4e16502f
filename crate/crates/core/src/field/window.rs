use super::{DatasetBundle, ForcingKind, ForcingSeries, GridField};
use crate::error::{Error, Result};

/// Time ids for steps `k-L+1 ..= k+1` plus the matching forcing slice.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalInput {
    pub time_ids: Vec<i64>,
    pub forcing: Vec<f64>,
}

impl TemporalInput {
    /// Flat layout: time ids first, then forcing values. Its length is
    /// `2(L+1)` for time-varying forcing, `(L+1)+P` for `P` constant
    /// parameters and `L+1` without forcing.
    pub fn to_vector(&self) -> Vec<f64> {
        self.time_ids
            .iter()
            .map(|&t| t as f64)
            .chain(self.forcing.iter().copied())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.time_ids.len() + self.forcing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Builds the temporal input for predicting step `k + 1` (0-based) from the
/// `history` frames ending at step `k`.
pub fn temporal_input_at(forcing: &ForcingSeries, k: usize, history: usize) -> Result<TemporalInput> {
    if history == 0 || k + 1 < history || k + 1 >= forcing.n_steps() {
        return Err(Error::Shape(format!(
            "step {k} with history {history} is outside a series of {} steps",
            forcing.n_steps()
        )));
    }
    let lo = k + 1 - history;
    let time_ids = forcing.time_ids()[lo..=k + 1].to_vec();
    let forcing = match forcing.kind() {
        ForcingKind::TimeVarying => forcing.values()[lo..=k + 1].to_vec(),
        ForcingKind::ConstantParams => forcing.values().to_vec(),
        ForcingKind::None => Vec::new(),
    };
    Ok(TemporalInput { time_ids, forcing })
}

/// One supervised tuple: `L` history frames, temporal input and the next frame.
/// Frames borrow from the source trajectory.
#[derive(Clone, Debug)]
pub struct TrainingWindow<'a> {
    pub history: &'a [GridField],
    pub temporal: TemporalInput,
    pub target: &'a GridField,
    pub source_trajectory: &'a str,
    /// 0-based index of the last history frame.
    pub k: usize,
}

/// All `N_s * (N_T - L)` one-step windows of `bundle`, trajectory-major.
pub fn extract_training_windows(bundle: &DatasetBundle, history: usize) -> Result<Vec<TrainingWindow<'_>>> {
    if bundle.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if history == 0 {
        return Err(Error::Config("history length must be positive".into()));
    }
    let steps = bundle.n_steps().unwrap_or(0);
    if history >= steps {
        return Err(Error::InvalidWindowLength { history, steps });
    }
    let shape = bundle.grid_shape();
    let mut out = Vec::with_capacity(bundle.len() * (steps - history));
    for traj in bundle.trajectories() {
        if Some(traj.grid_shape()) != shape || traj.n_steps() != steps {
            return Err(Error::Shape(format!("trajectory {} is inconsistent with the bundle", traj.id())));
        }
        let frames = traj.frames();
        for k in history - 1..steps - 1 {
            out.push(TrainingWindow {
                history: &frames[k + 1 - history..=k],
                temporal: temporal_input_at(traj.forcing(), k, history)?,
                target: &frames[k + 1],
                source_trajectory: traj.id(),
                k,
            });
        }
    }
    Ok(out)
}
