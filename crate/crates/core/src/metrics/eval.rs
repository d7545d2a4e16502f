//! Test-set evaluation of an ensemble: ensemble and solo-member curves, the
//! error decomposition, ensemble-size sweeps and best/worst summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curves::{mae_per_step, rle_per_step, Metric, MetricCurve};
use super::decomposition::{mse_decomposition, MseDecomposition};
use crate::ensemble::{rollout_members, Ensemble, RolloutOptions, RolloutResult};
use crate::error::{Error, Result};
use crate::field::{DatasetBundle, GridField};

/// MAE and RLE curves for one predictor (member or ensemble).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePair {
    pub mae: MetricCurve,
    pub rle: MetricCurve,
}

impl CurvePair {
    pub fn get(&self, metric: Metric) -> &MetricCurve {
        match metric {
            Metric::Mae => &self.mae,
            Metric::Rle => &self.rle,
        }
    }

    fn compute(preds: &[Vec<GridField>], truths: &[Vec<GridField>], first_step: usize) -> Result<Self> {
        Ok(Self {
            mae: mae_per_step(preds, truths, first_step)?,
            rle: rle_per_step(preds, truths, first_step)?,
        })
    }
}

/// Ground-truth frames after the prompt, one entry per test trajectory.
pub fn prediction_targets(test: &DatasetBundle, history: usize) -> Result<Vec<Vec<GridField>>> {
    let n_t = test.n_steps().ok_or(Error::EmptyDataset)?;
    if history >= n_t {
        return Err(Error::InvalidWindowLength { history, steps: n_t });
    }
    Ok(test.trajectories().iter().map(|t| t.frames()[history..].to_vec()).collect())
}

fn check_compatible(ens: &Ensemble, test: &DatasetBundle) -> Result<usize> {
    let cfg = ens.config();
    let shape = test.grid_shape().ok_or(Error::EmptyDataset)?;
    if shape != (cfg.nx, cfg.ny) {
        return Err(Error::Shape(format!(
            "test grid {shape:?} does not match the ensemble's {}x{}",
            cfg.nx, cfg.ny
        )));
    }
    if test.forcing_kind() != Some(cfg.forcing_kind) {
        return Err(Error::Shape(format!(
            "test forcing {:?} does not match the ensemble's {:?}",
            test.forcing_kind(),
            cfg.forcing_kind
        )));
    }
    test.n_steps().ok_or(Error::EmptyDataset)
}

/// Rolls every test trajectory out from its first `L` frames using the first
/// `first_n` members.
pub fn rollout_test_set(
    ens: &Ensemble,
    test: &DatasetBundle,
    first_n: usize,
    opts: RolloutOptions,
) -> Result<Vec<RolloutResult>> {
    let n_t = check_compatible(ens, test)?;
    let l = ens.config().history;
    test.trajectories()
        .par_iter()
        .map(|t| ens.rollout(&t.frames()[..l], t.forcing(), n_t, Some(first_n), opts))
        .collect()
}

/// Full evaluation of one ensemble on a test bundle.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub ensemble: CurvePair,
    /// Each member rolled out on its own.
    pub members: Vec<CurvePair>,
    /// Over every test point and predicted step, from the members'
    /// predictions inside the shared-history rollout.
    pub decomposition: MseDecomposition,
    pub rollouts: Vec<RolloutResult>,
    pub truths: Vec<Vec<GridField>>,
}

pub fn evaluate_ensemble(ens: &Ensemble, test: &DatasetBundle) -> Result<Evaluation> {
    let l = ens.config().history;
    let n_t = check_compatible(ens, test)?;
    let truths = prediction_targets(test, l)?;
    let opts = RolloutOptions {
        keep_members: true,
        ..Default::default()
    };
    let rollouts = rollout_test_set(ens, test, ens.len(), opts)?;
    let preds: Vec<Vec<GridField>> = rollouts.iter().map(|r| r.predicted.clone()).collect();
    let ensemble = CurvePair::compute(&preds, &truths, l)?;

    let flat_truth: Vec<f64> = truths.iter().flatten().flat_map(|f| f.values().iter().copied()).collect();
    let flat_members: Vec<Vec<f64>> = (0..ens.len())
        .map(|i| {
            rollouts
                .iter()
                .flat_map(|r| r.per_member.as_ref().expect("kept").iter())
                .flat_map(|step| step[i].values().iter().copied())
                .collect()
        })
        .collect();
    let decomposition = mse_decomposition(&flat_members, &flat_truth)?;

    let members = ens
        .members()
        .iter()
        .map(|m| {
            let solo: Vec<Vec<GridField>> = test
                .trajectories()
                .par_iter()
                .map(|t| {
                    rollout_members(
                        std::slice::from_ref(m),
                        ens.stats(),
                        &t.frames()[..l],
                        t.forcing(),
                        n_t,
                        RolloutOptions::default(),
                    )
                    .map(|r| r.predicted)
                })
                .collect::<Result<_>>()?;
            CurvePair::compute(&solo, &truths, l)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Evaluation {
        ensemble,
        members,
        decomposition,
        rollouts,
        truths,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_members: usize,
    pub curves: CurvePair,
}

/// Shared-history rollouts with the first `n` members for each `n` in
/// `sizes` (strictly increasing).
pub fn ensemble_size_sweep(ens: &Ensemble, test: &DatasetBundle, sizes: &[usize]) -> Result<Vec<SweepPoint>> {
    if sizes.is_empty() {
        return Err(Error::Config("no ensemble sizes given".into()));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("sizes must be strictly increasing, got {sizes:?}")));
    }
    if let Some(&bad) = sizes.iter().find(|&&n| n == 0 || n > ens.len()) {
        return Err(Error::Config(format!(
            "ensemble size {bad} requested, {} members available",
            ens.len()
        )));
    }
    let l = ens.config().history;
    let truths = prediction_targets(test, l)?;
    sizes
        .iter()
        .map(|&n| {
            let preds: Vec<Vec<GridField>> = rollout_test_set(ens, test, n, RolloutOptions::default())?
                .into_iter()
                .map(|r| r.predicted)
                .collect();
            Ok(SweepPoint {
                n_members: n,
                curves: CurvePair::compute(&preds, &truths, l)?,
            })
        })
        .collect()
}

/// Final-step comparison of the ensemble against its best and worst member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestWorst {
    pub metric: Metric,
    pub best_member: usize,
    pub best_value: f64,
    pub worst_member: usize,
    pub worst_value: f64,
    pub member_mean: f64,
    pub ensemble_value: f64,
    /// `(member - ensemble) / member`; positive means the ensemble is better.
    pub improvement_vs_best: f64,
    pub improvement_vs_worst: f64,
    pub improvement_vs_mean: f64,
}

pub fn best_worst_report(member_curves: &[MetricCurve], ensemble_curve: &MetricCurve) -> Result<BestWorst> {
    if member_curves.len() < 2 {
        return Err(Error::Config("best/worst comparison needs at least two members".into()));
    }
    let metric = ensemble_curve.metric;
    if let Some(i) = member_curves.iter().position(|c| c.metric != metric) {
        return Err(Error::Config(format!("member {i} curve is not {}", metric.name())));
    }
    let finals: Vec<f64> = member_curves.iter().map(MetricCurve::final_value).collect();
    let (mut best, mut worst) = (0, 0);
    for (i, &v) in finals.iter().enumerate() {
        if v < finals[best] {
            best = i;
        }
        if v > finals[worst] {
            worst = i;
        }
    }
    let ens = ensemble_curve.final_value();
    let member_mean = finals.iter().sum::<f64>() / finals.len() as f64;
    let rel = |m: f64| if m == 0.0 { 0.0 } else { (m - ens) / m };
    Ok(BestWorst {
        metric,
        best_member: best,
        best_value: finals[best],
        worst_member: worst,
        worst_value: finals[worst],
        member_mean,
        ensemble_value: ens,
        improvement_vs_best: rel(finals[best]),
        improvement_vs_worst: rel(finals[worst]),
        improvement_vs_mean: rel(member_mean),
    })
}
