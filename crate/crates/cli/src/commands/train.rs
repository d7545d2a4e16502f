use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use ensroll::ensemble::{save_ensemble, train_ensemble, Ensemble};
use ensroll::model::ModelConfig;
use ensroll::{compute_standardization, extract_training_windows};

use super::{open_dataset, Globals};
use crate::config::{config_error, load, resolve_out_dir, Schema, TrainRunConfig};
use crate::lock::OutputLock;

pub const LOSS_DIR: &str = "losses";

pub fn train(config: &Path, g: Globals) -> Result<()> {
    let mut cfg: TrainRunConfig = load(Schema::Train, config)?;
    if let Some(s) = g.seed {
        cfg.train.seed = s;
        cfg.train.shuffle_seed = s;
    }
    if g.deterministic {
        cfg.train.deterministic = true;
    }
    cfg.train.validate().map_err(|e| config_error(e.to_string()))?;
    let out = resolve_out_dir(cfg.out_dir.clone());

    let bundle = open_dataset(&cfg.dataset_dir)?;
    let mut mc = ModelConfig::for_dataset(&bundle, cfg.history)?;
    let o = &cfg.model;
    mc.base_channels = o.base_channels.unwrap_or(mc.base_channels);
    mc.depth = o.depth.unwrap_or(mc.depth);
    mc.d_t = o.d_t.unwrap_or(mc.d_t);
    mc.emb_out = o.emb_out.unwrap_or(mc.emb_out);
    mc.attn_grid = o.attn_grid.unwrap_or(mc.attn_grid);
    mc.weight_decay = cfg.train.weight_decay;
    mc.validate().map_err(|e| config_error(e.to_string()))?;

    let stats = compute_standardization(&bundle)?;
    let standardized = bundle.standardized(&stats)?;
    let windows = extract_training_windows(&standardized, cfg.history)?;
    log::info!(
        "training {} members on {} windows from {} trajectories ({} epochs, batch {}, lr {})",
        cfg.n_members,
        windows.len(),
        bundle.len(),
        cfg.train.epochs,
        cfg.train.batch_size,
        cfg.train.learning_rate
    );

    let _lock = OutputLock::acquire(&out)?;
    let trained = train_ensemble(cfg.n_members, &windows, &mc, &cfg.train)?;

    let loss_dir = out.join(LOSS_DIR);
    fs::create_dir_all(&loss_dir)?;
    for (i, m) in trained.iter().enumerate() {
        let mut w = csv::Writer::from_path(loss_dir.join(format!("member_{i}.csv")))?;
        w.write_record(["epoch", "loss"])?;
        for (e, l) in m.epoch_losses.iter().enumerate() {
            w.write_record([(e + 1).to_string(), format!("{l:e}")])?;
        }
        w.flush()?;
    }
    let finals: Vec<String> = trained
        .iter()
        .map(|m| format!("{:.4e}", m.epoch_losses.last().copied().unwrap_or(f64::NAN)))
        .collect();
    let ens = Ensemble::from_trained(mc, stats, trained)?;
    save_ensemble(&ens, &out).with_context(|| format!("writing ensemble to {}", out.display()))?;
    println!("trained {} members; final epoch losses [{}]; wrote {}", ens.len(), finals.join(", "), out.display());
    Ok(())
}
