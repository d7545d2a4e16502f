//! Autoregressive ensemble inference.
//!
//! In the default shared-history mode every member sees the same history:
//! the ground-truth prompt first, then the ensemble mean of its own previous
//! predictions. The private mode (each member rolls out alone and only the
//! outputs are averaged) exists for comparison only.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{temporal_input_at, ForcingSeries, GridField, StandardizationStats, TemporalInput};
use crate::model::{Real, Surrogate};

/// Anything that maps `L` standardized frames plus a temporal input to the
/// next standardized frame.
pub trait OneStepPredictor: Sync {
    fn history_len(&self) -> usize;
    fn predict(&self, history: &[GridField], ti: &TemporalInput) -> Result<GridField>;
}

impl<T: Real> OneStepPredictor for Surrogate<T> {
    fn history_len(&self) -> usize {
        self.config().history
    }

    fn predict(&self, history: &[GridField], ti: &TemporalInput) -> Result<GridField> {
        self.predict_next(history, ti)
    }
}

/// Elementwise mean, accumulated as a running mean in member order.
pub fn ensemble_average(member_preds: &[GridField]) -> Result<GridField> {
    let first = member_preds
        .first()
        .ok_or_else(|| Error::Config("cannot average an empty set of predictions".into()))?;
    let mut mean = first.values().to_vec();
    for (i, p) in member_preds.iter().enumerate().skip(1) {
        if p.shape() != first.shape() {
            return Err(Error::Shape(format!(
                "member {i} prediction is {:?}, member 0 is {:?}",
                p.shape(),
                first.shape()
            )));
        }
        let k = (i + 1) as f64;
        for (m, &x) in mean.iter_mut().zip(p.values()) {
            *m += (x - *m) / k;
        }
    }
    GridField::new(first.nx(), first.ny(), mean)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    #[default]
    SharedHistory,
    /// Experimental: members never see each other's predictions.
    Private,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RolloutOptions {
    pub mode: RolloutMode,
    /// Keep every member's prediction at every step.
    pub keep_members: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    /// Ensemble predictions for steps `L..N_T` (0-based), destandardized.
    pub predicted: Vec<GridField>,
    /// `per_member[s][i]`: member `i` at predicted step `s`, destandardized.
    pub per_member: Option<Vec<Vec<GridField>>>,
    pub prompt_steps: usize,
}

fn predict_all<P: OneStepPredictor>(
    members: &[P],
    histories: &[&[GridField]],
    ti: &TemporalInput,
    step: usize,
) -> Result<Vec<GridField>> {
    members
        .par_iter()
        .zip(histories.par_iter())
        .enumerate()
        .map(|(i, (m, h))| {
            m.predict(h, ti).map_err(|e| match e {
                Error::NonFinite(what) => Error::Divergence {
                    step,
                    context: format!("member {i}: {what}"),
                },
                e => Error::Member {
                    member: i,
                    source: Box::new(e),
                },
            })
        })
        .collect()
}

fn check_finite(field: &GridField, step: usize, what: &str) -> Result<()> {
    if field.values().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence {
            step,
            context: format!("{what} prediction is not finite"),
        })
    }
}

/// Rolls `members` forward from a ground-truth `prompt` of `L` frames
/// (physical units) to `n_t` total steps. `forcing` is in physical units and
/// must cover all `n_t` steps.
pub fn rollout_members<P: OneStepPredictor>(
    members: &[P],
    stats: &StandardizationStats,
    prompt: &[GridField],
    forcing: &ForcingSeries,
    n_t: usize,
    opts: RolloutOptions,
) -> Result<RolloutResult> {
    let l = members
        .first()
        .ok_or_else(|| Error::Config("ensemble has no members".into()))?
        .history_len();
    if let Some(i) = members.iter().position(|m| m.history_len() != l) {
        return Err(Error::Config(format!("member {i} has a different history length")));
    }
    if prompt.len() != l {
        return Err(Error::Shape(format!("prompt has {} frames, members expect {l}", prompt.len())));
    }
    if n_t <= l {
        return Err(Error::InvalidWindowLength { history: l, steps: n_t });
    }
    if forcing.n_steps() < n_t {
        return Err(Error::Shape(format!(
            "forcing covers {} steps, rollout needs {n_t}",
            forcing.n_steps()
        )));
    }
    let forcing = stats.standardize_forcing(forcing)?;
    let prompt: Vec<GridField> = prompt.iter().map(|f| stats.standardize_field(f)).collect::<Result<_>>()?;

    let n = members.len();
    let steps = n_t - l;
    let mut shared = prompt.clone();
    let mut private: Vec<Vec<GridField>> = match opts.mode {
        RolloutMode::Private => vec![prompt; n],
        RolloutMode::SharedHistory => Vec::new(),
    };
    let mut predicted = Vec::with_capacity(steps);
    let mut per_member = opts.keep_members.then(|| Vec::with_capacity(steps));

    for k in l - 1..n_t - 1 {
        let ti = temporal_input_at(&forcing, k, l)?;
        let preds = match opts.mode {
            RolloutMode::SharedHistory => {
                let h = &shared[shared.len() - l..];
                predict_all(members, &vec![h; n], &ti, k + 1)?
            }
            RolloutMode::Private => {
                let hs: Vec<&[GridField]> = private.iter().map(|h| &h[h.len() - l..]).collect();
                predict_all(members, &hs, &ti, k + 1)?
            }
        };
        for (i, p) in preds.iter().enumerate() {
            check_finite(p, k + 1, &format!("member {i}"))?;
        }
        let mean = ensemble_average(&preds)?;
        check_finite(&mean, k + 1, "ensemble")?;

        predicted.push(stats.destandardize_field(&mean)?);
        if let Some(pm) = per_member.as_mut() {
            pm.push(preds.iter().map(|p| stats.destandardize_field(p)).collect::<Result<Vec<_>>>()?);
        }
        match opts.mode {
            RolloutMode::SharedHistory => shared.push(mean),
            RolloutMode::Private => {
                for (h, p) in private.iter_mut().zip(preds) {
                    h.push(p);
                }
            }
        }
    }
    Ok(RolloutResult {
        predicted,
        per_member,
        prompt_steps: l,
    })
}
