use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use ensroll::datagen::{build_gray_scott_dataset, sample_load_path, GrayScottParams, LoadPathConfig};
use ensroll::write_dataset;
use serde::Serialize;

use super::Globals;
use crate::config::{config_error, load, resolve_out_dir, GenDataConfig, Schema, System};
use crate::lock::OutputLock;

pub const LOAD_PATHS_FILE: &str = "load_paths.json";

#[derive(Serialize)]
struct PathRecord {
    id: String,
    seed: u64,
    control_x: Vec<f64>,
    control_y: Vec<f64>,
    strain: Vec<f64>,
}

#[derive(Serialize)]
struct LoadPathFile {
    schema_version: &'static str,
    steps: usize,
    n_ctrl: usize,
    final_strain_low: f64,
    final_strain_high: f64,
    paths: Vec<PathRecord>,
}

pub fn gen_data(config: &Path, g: Globals) -> Result<()> {
    let mut cfg: GenDataConfig = load(Schema::GenData, config)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    let out = resolve_out_dir(cfg.out_dir.clone());
    match cfg.system {
        System::GrayScott => gray_scott(&cfg, &out),
        System::LoadPaths => load_paths(&cfg, &out),
    }
}

fn gray_scott(cfg: &GenDataConfig, out: &Path) -> Result<()> {
    let (nx, ny) = cfg.grid.expect("schema requires grid").shape();
    let combos: Vec<GrayScottParams> = cfg.combos.iter().map(|c| GrayScottParams::with_rates(c.f, c.k)).collect();
    for c in &combos {
        c.validate().map_err(|e| config_error(e.to_string()))?;
    }
    let bundle = build_gray_scott_dataset(cfg.n_ic, &combos, nx, ny, cfg.n_t, cfg.seed, cfg.split)?;

    let _lock = OutputLock::acquire(out)?;
    write_dataset(&bundle, out).with_context(|| format!("writing dataset to {}", out.display()))?;
    println!(
        "wrote {} trajectories (N_s = {}, N_T = {}, grid {nx}x{ny}, {} combos x {} ICs, seed {}) to {}",
        bundle.len(),
        bundle.len(),
        cfg.n_t,
        combos.len(),
        cfg.n_ic,
        cfg.seed,
        out.display()
    );
    Ok(())
}

fn load_paths(cfg: &GenDataConfig, out: &Path) -> Result<()> {
    let defaults = LoadPathConfig::default();
    let base = LoadPathConfig {
        steps: cfg.n_t,
        n_ctrl: cfg.load_path.n_ctrl.unwrap_or(defaults.n_ctrl),
        final_strain_low: cfg.load_path.final_strain_low.unwrap_or(defaults.final_strain_low),
        final_strain_high: cfg.load_path.final_strain_high.unwrap_or(defaults.final_strain_high),
        seed: cfg.seed,
    };
    base.validate().map_err(|e| config_error(e.to_string()))?;
    let paths = (0..cfg.n_ic as u64)
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i);
            let p = sample_load_path(&LoadPathConfig { seed, ..base.clone() })?;
            Ok(PathRecord {
                id: format!("path_{i:05}"),
                seed,
                control_x: p.control_x,
                control_y: p.control_y,
                strain: p.values,
            })
        })
        .collect::<ensroll::Result<Vec<_>>>()?;
    let file = LoadPathFile {
        schema_version: crate::config::SCHEMA_VERSION,
        steps: base.steps,
        n_ctrl: base.n_ctrl,
        final_strain_low: base.final_strain_low,
        final_strain_high: base.final_strain_high,
        paths,
    };

    let _lock = OutputLock::acquire(out)?;
    let target = out.join(LOAD_PATHS_FILE);
    fs::write(&target, serde_json::to_vec_pretty(&file)?).with_context(|| format!("writing {}", target.display()))?;
    println!(
        "wrote {} load paths ({} steps, {} control points, final strain in [{}, {}], seed {}) to {}",
        cfg.n_ic,
        base.steps,
        base.n_ctrl,
        base.final_strain_low,
        base.final_strain_high,
        cfg.seed,
        target.display()
    );
    Ok(())
}
