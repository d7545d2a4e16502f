//! The trained ensemble and its on-disk directory:
//! `ensemble.json` (size, seeds, model config, stats) plus `member_<i>.ckpt`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rollout::{rollout_members, RolloutOptions, RolloutResult};
use super::train::TrainedMember;
use crate::error::{Error, Result};
use crate::field::{ForcingSeries, GridField, StandardizationStats};
use crate::model::{load_checkpoint, save_checkpoint, Checkpoint, ModelConfig, PredictorParams, Surrogate};

pub const ENSEMBLE_VERSION: &str = "1";

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    config: ModelConfig,
    stats: StandardizationStats,
    members: Vec<Surrogate<f32>>,
    member_seeds: Vec<u64>,
    loss_histories: Vec<Vec<f64>>,
}

impl Ensemble {
    pub fn new(
        config: ModelConfig,
        stats: StandardizationStats,
        members: Vec<PredictorParams<f32>>,
        member_seeds: Vec<u64>,
        loss_histories: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("an ensemble needs at least one member".into()));
        }
        if member_seeds.len() != members.len() || loss_histories.len() != members.len() {
            return Err(Error::Shape(format!(
                "{} members, {} seeds, {} loss histories",
                members.len(),
                member_seeds.len(),
                loss_histories.len()
            )));
        }
        let mut sorted = member_seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("member seeds must be pairwise distinct".into()));
        }
        stats.validate()?;
        let members = members
            .into_iter()
            .map(|p| Surrogate::new(config.clone(), p))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            stats,
            members,
            member_seeds,
            loss_histories,
        })
    }

    pub fn from_trained(config: ModelConfig, stats: StandardizationStats, trained: Vec<TrainedMember>) -> Result<Self> {
        let seeds = trained.iter().map(|m| m.seed).collect();
        let losses = trained.iter().map(|m| m.epoch_losses.clone()).collect();
        let params = trained.into_iter().map(|m| m.model.into_params()).collect();
        Self::new(config, stats, params, seeds, losses)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn stats(&self) -> &StandardizationStats {
        &self.stats
    }

    pub fn members(&self) -> &[Surrogate<f32>] {
        &self.members
    }

    pub fn member_seeds(&self) -> &[u64] {
        &self.member_seeds
    }

    pub fn loss_histories(&self) -> &[Vec<f64>] {
        &self.loss_histories
    }

    /// Shared-history rollout with the first `n` members (all when `None`).
    pub fn rollout(
        &self,
        prompt: &[GridField],
        forcing: &ForcingSeries,
        n_t: usize,
        first_n: Option<usize>,
        opts: RolloutOptions,
    ) -> Result<RolloutResult> {
        let n = first_n.unwrap_or(self.len());
        if n == 0 || n > self.len() {
            return Err(Error::Config(format!("ensemble size {n} requested, {} available", self.len())));
        }
        rollout_members(&self.members[..n], &self.stats, prompt, forcing, n_t, opts)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    schema_version: String,
    n_members: usize,
    member_seeds: Vec<u64>,
    config: ModelConfig,
    stats: StandardizationStats,
}

fn member_path(dir: &Path, i: usize) -> std::path::PathBuf {
    dir.join(format!("member_{i}.ckpt"))
}

pub fn save_ensemble(ens: &Ensemble, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, m) in ens.members.iter().enumerate() {
        let ckpt = Checkpoint {
            config: ens.config.clone(),
            seed: ens.member_seeds[i],
            epoch: ens.loss_histories[i].len(),
            loss_history: ens.loss_histories[i].clone(),
            params: m.params().clone(),
        };
        save_checkpoint(&member_path(dir, i), &ckpt)?;
    }
    let manifest = Manifest {
        schema_version: ENSEMBLE_VERSION.into(),
        n_members: ens.len(),
        member_seeds: ens.member_seeds.clone(),
        config: ens.config.clone(),
        stats: ens.stats.clone(),
    };
    fs::write(dir.join("ensemble.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_ensemble(dir: &Path) -> Result<Ensemble> {
    let path = dir.join("ensemble.json");
    let raw = fs::read(&path)?;
    let manifest: Manifest = serde_json::from_slice(&raw).map_err(|e| Error::format(&path, e.to_string()))?;
    if manifest.schema_version != ENSEMBLE_VERSION {
        return Err(Error::Version {
            found: manifest.schema_version,
            expected: ENSEMBLE_VERSION.into(),
        });
    }
    if manifest.member_seeds.len() != manifest.n_members {
        return Err(Error::format(&path, "member_seeds length differs from n_members"));
    }
    let mut params = Vec::with_capacity(manifest.n_members);
    let mut losses = Vec::with_capacity(manifest.n_members);
    for i in 0..manifest.n_members {
        let p = member_path(dir, i);
        let ckpt = load_checkpoint(&p).map_err(|e| Error::Member {
            member: i,
            source: Box::new(e),
        })?;
        if ckpt.config != manifest.config {
            return Err(Error::format(p, "member config differs from ensemble.json"));
        }
        if ckpt.seed != manifest.member_seeds[i] {
            return Err(Error::format(p, "member seed differs from ensemble.json"));
        }
        params.push(ckpt.params);
        losses.push(ckpt.loss_history);
    }
    Ensemble::new(manifest.config, manifest.stats, params, manifest.member_seeds, losses)
}
