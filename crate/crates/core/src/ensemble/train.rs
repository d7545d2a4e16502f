//! Mini-batch Adam training of one member, and of N members in parallel.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::TrainingWindow;
use crate::model::{ModelConfig, Surrogate};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Coupled L2 penalty on weight tensors (biases are not decayed).
    pub weight_decay: f64,
    /// Member `i` is initialized from `seed + i`.
    pub seed: u64,
    pub shuffle_seed: u64,
    /// Sum per-sample gradients in a fixed order. When off, a batch's
    /// samples are processed on the rayon pool and reduced in whatever
    /// order the pool produces.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 8,
            learning_rate: 1e-4,
            optimizer: Optimizer::Adam,
            weight_decay: 1e-5,
            seed: 0,
            shuffle_seed: 0,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        Ok(())
    }

    /// Optimizer steps for one epoch over `n_windows`.
    pub fn steps_per_epoch(&self, n_windows: usize) -> usize {
        n_windows.div_ceil(self.batch_size)
    }
}

const BETA1: f32 = 0.9;
const BETA2: f32 = 0.999;
const EPS: f32 = 1e-8;

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f32) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
        }
    }
}

/// Result of training one member.
#[derive(Clone, Debug)]
pub struct TrainedMember {
    pub model: Surrogate<f32>,
    pub seed: u64,
    /// Mean training MSE of each epoch.
    pub epoch_losses: Vec<f64>,
    pub optimizer_steps: usize,
}

struct Sample {
    input: Vec<f32>,
    target: Vec<f32>,
}

fn to_samples(model: &Surrogate<f32>, windows: &[TrainingWindow<'_>]) -> Result<Vec<Sample>> {
    windows
        .iter()
        .map(|w| {
            model.config().check_temporal(&w.temporal)?;
            Ok(Sample {
                input: model.stack_history(w.history)?,
                target: w.target.values().iter().map(|&v| v as f32).collect(),
            })
        })
        .collect()
}

/// Gradient of the mean batch loss, and that loss.
fn batch_gradient(
    model: &Surrogate<f32>,
    windows: &[TrainingWindow<'_>],
    samples: &[Sample],
    batch: &[usize],
    deterministic: bool,
) -> Result<(Vec<f32>, f64)> {
    let n = model.param_count();
    let weight = 1.0 / batch.len() as f32;
    let one = |i: usize, grads: &mut Vec<f32>| -> Result<f64> {
        let s = &samples[i];
        model
            .loss_and_grad(&s.input, &windows[i].temporal, &s.target, weight, grads)
            .map(f64::from)
    };
    let (grads, loss) = if deterministic {
        let mut grads = vec![0.0f32; n];
        let mut loss = 0.0;
        for &i in batch {
            loss += one(i, &mut grads)?;
        }
        (grads, loss)
    } else {
        batch
            .par_iter()
            .map(|&i| {
                let mut g = vec![0.0f32; n];
                one(i, &mut g).map(|l| (g, l))
            })
            .try_reduce(
                || (vec![0.0f32; n], 0.0),
                |(mut ga, la), (gb, lb)| {
                    for (a, b) in ga.iter_mut().zip(&gb) {
                        *a += *b;
                    }
                    Ok((ga, la + lb))
                },
            )?
    };
    Ok((grads, loss / batch.len() as f64))
}

/// Trains `init` on `windows` (already standardized) with mini-batch Adam.
pub fn train_member(init: Surrogate<f32>, windows: &[TrainingWindow<'_>], tc: &TrainConfig) -> Result<TrainedMember> {
    tc.validate()?;
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = init;
    let samples = to_samples(&model, windows)?;
    let decay_mask: Vec<bool> = {
        let mut mask = vec![false; model.param_count()];
        for e in model.params().layout().entries() {
            if e.decay {
                mask[e.range()].fill(true);
            }
        }
        mask
    };
    let wd = tc.weight_decay as f32;
    let lr = tc.learning_rate as f32;
    let mut adam = Adam::new(model.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(tc.shuffle_seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut epoch_losses = Vec::with_capacity(tc.epochs);
    let mut steps = 0;

    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(tc.batch_size).enumerate() {
            let (mut grads, loss) = batch_gradient(&model, windows, &samples, batch, tc.deterministic)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch, batch: b, loss });
            }
            if wd > 0.0 {
                let p = model.params().values();
                for ((g, &w), &d) in grads.iter_mut().zip(p).zip(&decay_mask) {
                    if d {
                        *g += wd * w;
                    }
                }
            }
            adam.step(model.params_mut().values_mut(), &grads, lr);
            steps += 1;
            total += loss * batch.len() as f64;
        }
        let mean = total / windows.len() as f64;
        log::info!("epoch {}/{}: loss {mean:.6e}", epoch + 1, tc.epochs);
        epoch_losses.push(mean);
    }
    Ok(TrainedMember {
        model,
        seed: 0,
        epoch_losses,
        optimizer_steps: steps,
    })
}

/// Trains members `0..n`, member `i` initialized from `tc.seed + i`, on the
/// current rayon pool. Results are ordered by member index.
pub fn train_ensemble(
    n: usize,
    windows: &[TrainingWindow<'_>],
    mc: &ModelConfig,
    tc: &TrainConfig,
) -> Result<Vec<TrainedMember>> {
    if n == 0 {
        return Err(Error::Config("ensemble size must be at least 1".into()));
    }
    mc.validate()?;
    tc.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = tc.seed.wrapping_add(i as u64);
            let run = || -> Result<TrainedMember> {
                let init = Surrogate::init(mc.clone(), seed)?;
                let mut m = train_member(init, windows, tc)?;
                m.seed = seed;
                log::info!("member {i} done: final loss {:.6e}", m.epoch_losses.last().copied().unwrap_or(f64::NAN));
                Ok(m)
            };
            run().map_err(|e| Error::Member {
                member: i,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{DatasetBundle, ForcingKind, ForcingSeries, GridField, Split, Trajectory};
    use crate::field::extract_training_windows;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            base_channels: 4,
            depth: 2,
            d_t: 8,
            emb_out: 8,
            attn_grid: 2,
            ..ModelConfig::new(2, 8, 8, ForcingKind::ConstantParams, 1)
        }
    }

    fn tiny_bundle(n_traj: usize, n_t: usize) -> DatasetBundle {
        let trajs = (0..n_traj)
            .map(|j| {
                let frames = (0..n_t)
                    .map(|t| {
                        GridField::from_fn(8, 8, |x, y| {
                            ((x as f64 + t as f64 * 0.7 + j as f64) * 0.8).sin() * 0.5 + (y as f64 * 0.4).cos() * 0.3
                        })
                        .unwrap()
                    })
                    .collect();
                let forcing = ForcingSeries::constant(n_t, vec![j as f64 * 0.1]).unwrap();
                Trajectory::new(format!("t{j}"), "A", frames, forcing).unwrap()
            })
            .collect();
        DatasetBundle::new(trajs, Split::Train).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn one_epoch_takes_ceil_n_over_batch_steps() {
        let b = tiny_bundle(2, 6);
        let w = extract_training_windows(&b, 2).unwrap();
        assert_eq!(w.len(), 8);
        let tc = TrainConfig { epochs: 1, batch_size: 3, ..Default::default() };
        let m = train_member(Surrogate::init(tiny_config(), 0).unwrap(), &w, &tc).unwrap();
        assert_eq!(m.optimizer_steps, 3);
        assert_eq!(m.epoch_losses.len(), 1);
    }

    #[test]
    fn overfits_a_single_window() {
        let b = tiny_bundle(1, 3);
        let w = extract_training_windows(&b, 2).unwrap();
        assert_eq!(w.len(), 1);
        let tc = TrainConfig {
            epochs: 200,
            learning_rate: 3e-3,
            ..Default::default()
        };
        let m = train_member(Surrogate::init(tiny_config(), 3).unwrap(), &w, &tc).unwrap();
        let (first, last) = (m.epoch_losses[0], *m.epoch_losses.last().unwrap());
        assert!(last < 0.01 * first, "{first} -> {last}");
    }

    #[test]
    fn training_is_reproducible() {
        let b = tiny_bundle(2, 5);
        let w = extract_training_windows(&b, 2).unwrap();
        let tc = TrainConfig { epochs: 2, batch_size: 2, learning_rate: 1e-3, ..Default::default() };
        let a = train_member(Surrogate::init(tiny_config(), 1).unwrap(), &w, &tc).unwrap();
        let b2 = train_member(Surrogate::init(tiny_config(), 1).unwrap(), &w, &tc).unwrap();
        assert_eq!(a.model.params(), b2.model.params());
        assert_eq!(a.epoch_losses, b2.epoch_losses);
    }

    #[test]
    fn ensemble_members_differ_and_single_member_matches() {
        let b = tiny_bundle(2, 5);
        let w = extract_training_windows(&b, 2).unwrap();
        let tc = TrainConfig { epochs: 2, batch_size: 4, learning_rate: 1e-3, seed: 10, ..Default::default() };
        let ens = train_ensemble(4, &w, &tiny_config(), &tc).unwrap();
        for i in 0..4 {
            assert_eq!(ens[i].seed, 10 + i as u64);
            for j in i + 1..4 {
                assert_ne!(ens[i].model.params(), ens[j].model.params());
            }
        }
        let solo = train_member(Surrogate::init(tiny_config(), 10).unwrap(), &w, &tc).unwrap();
        assert_eq!(solo.model.params(), ens[0].model.params());
    }

    #[test]
    fn member_failure_names_index() {
        let b = tiny_bundle(1, 4);
        let w = extract_training_windows(&b, 2).unwrap();
        let bad = ModelConfig { forcing_kind: ForcingKind::None, forcing_dim: 0, ..tiny_config() };
        let tc = TrainConfig { epochs: 1, ..Default::default() };
        let err = train_ensemble(2, &w, &bad, &tc).unwrap_err();
        assert!(matches!(err, Error::Member { member: 0, .. }));
    }
}
