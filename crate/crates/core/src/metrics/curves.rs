//! Per-step error curves over a set of test trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GridField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Relative L2 error `||p - p_hat|| / ||p||`.
    Rle,
    /// Mean absolute error over the grid.
    Mae,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Rle => "rle",
            Metric::Mae => "mae",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rle" => Ok(Metric::Rle),
            "mae" => Ok(Metric::Mae),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

/// Test-set mean of one metric at every predicted step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricCurve {
    pub metric: Metric,
    /// 0-based step index of `values[0]` (the first predicted step, `L`).
    pub first_step: usize,
    pub values: Vec<f64>,
    pub n_test: usize,
}

impl MetricCurve {
    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("curves are never empty")
    }

    /// `(step index, value)` pairs.
    pub fn points(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (self.first_step + i, v))
    }
}

fn check_sets(preds: &[Vec<GridField>], truths: &[Vec<GridField>]) -> Result<usize> {
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!("{} predicted vs {} true trajectories", preds.len(), truths.len())));
    }
    let steps = preds[0].len();
    if steps == 0 {
        return Err(Error::Shape("predicted trajectories are empty".into()));
    }
    for (i, (p, t)) in preds.iter().zip(truths).enumerate() {
        if p.len() != steps || t.len() != steps {
            return Err(Error::Shape(format!(
                "sample {i}: {} predicted and {} true steps, expected {steps}",
                p.len(),
                t.len()
            )));
        }
        for (s, (a, b)) in p.iter().zip(t).enumerate() {
            if a.shape() != b.shape() {
                return Err(Error::Shape(format!("sample {i}, step {s}: {:?} vs {:?}", a.shape(), b.shape())));
            }
        }
    }
    Ok(steps)
}

fn per_step(
    metric: Metric,
    first_step: usize,
    preds: &[Vec<GridField>],
    truths: &[Vec<GridField>],
    f: impl Fn(usize, usize, &GridField, &GridField) -> Result<f64>,
) -> Result<MetricCurve> {
    let steps = check_sets(preds, truths)?;
    let n = preds.len();
    let mut values = vec![0.0; steps];
    for (s, v) in values.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..n {
            acc += f(i, s, &preds[i][s], &truths[i][s])?;
        }
        *v = acc / n as f64;
    }
    Ok(MetricCurve {
        metric,
        first_step,
        values,
        n_test: n,
    })
}

/// `preds[i][s]` and `truths[i][s]` are sample `i` at predicted step `s`;
/// `first_step` is the 0-based index of predicted step 0.
pub fn rle_per_step(preds: &[Vec<GridField>], truths: &[Vec<GridField>], first_step: usize) -> Result<MetricCurve> {
    per_step(Metric::Rle, first_step, preds, truths, |i, s, p, t| {
        let norm = t.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Domain(format!(
                "true field of sample {i} at step {} has zero norm",
                first_step + s
            )));
        }
        let diff = p
            .values()
            .iter()
            .zip(t.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        Ok(diff / norm)
    })
}

pub fn mae_per_step(preds: &[Vec<GridField>], truths: &[Vec<GridField>], first_step: usize) -> Result<MetricCurve> {
    per_step(Metric::Mae, first_step, preds, truths, |_, _, p, t| {
        let s: f64 = p.values().iter().zip(t.values()).map(|(a, b)| (a - b).abs()).sum();
        Ok(s / p.len() as f64)
    })
}
