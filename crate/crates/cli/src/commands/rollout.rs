use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use ensroll::ensemble::RolloutOptions;
use ensroll::metrics::{
    curve_rows, mae_per_step, prediction_targets, rle_per_step, rollout_test_set, write_metrics_csv, ENSEMBLE_LABEL,
};
use ensroll::{write_dataset, DatasetBundle, ForcingKind, ForcingSeries, GridField, Split, Trajectory};

use super::{open_dataset, open_ensemble, Globals};
use crate::config::{config_error, load, resolve_out_dir, RolloutConfig, Schema};
use crate::lock::OutputLock;
use crate::plot::{snapshot_panel, snapshot_steps};

pub const PREDICTIONS_DIR: &str = "predictions";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const METRICS_FILE: &str = "metrics.csv";

/// Forcing restricted to the predicted steps `from..`.
fn tail_forcing(f: &ForcingSeries, from: usize) -> ensroll::Result<ForcingSeries> {
    let values = match f.kind() {
        ForcingKind::TimeVarying => f.values()[from..].to_vec(),
        _ => f.values().to_vec(),
    };
    ForcingSeries::new(f.time_ids()[from..].to_vec(), values, f.kind())
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

pub fn rollout(config: &Path, _g: Globals) -> Result<()> {
    let cfg: RolloutConfig = load(Schema::Rollout, config)?;
    let out = resolve_out_dir(cfg.out_dir.clone());
    let ens = open_ensemble(&cfg.ensemble_dir)?;
    let test = open_dataset(&cfg.dataset_dir)?;
    let n = cfg.n_members.unwrap_or(ens.len());
    if n > ens.len() {
        return Err(config_error(format!(
            "n_members = {n} requested, the ensemble has {} members",
            ens.len()
        )));
    }
    let l = ens.config().history;
    let opts = RolloutOptions {
        mode: cfg.mode,
        keep_members: false,
    };
    let results = rollout_test_set(&ens, &test, n, opts)?;
    let truths = prediction_targets(&test, l)?;
    let preds: Vec<Vec<GridField>> = results.into_iter().map(|r| r.predicted).collect();
    let mae = mae_per_step(&preds, &truths, l)?;
    let rle = rle_per_step(&preds, &truths, l)?;

    let trajectories = test
        .trajectories()
        .iter()
        .zip(&preds)
        .map(|(t, p)| Trajectory::new(t.id(), t.field_name(), p.clone(), tail_forcing(t.forcing(), l)?))
        .collect::<ensroll::Result<Vec<_>>>()?;
    let predicted = DatasetBundle::new(trajectories, Split::Test)?;

    let _lock = OutputLock::acquire(&out)?;
    let pred_dir = out.join(PREDICTIONS_DIR);
    write_dataset(&predicted, &pred_dir).with_context(|| format!("writing {}", pred_dir.display()))?;
    let mut rows = curve_rows(&mae, ENSEMBLE_LABEL, n);
    rows.extend(curve_rows(&rle, ENSEMBLE_LABEL, n));
    write_metrics_csv(&out.join(METRICS_FILE), &rows)?;

    let n_t = test.n_steps().expect("non-empty");
    let steps = snapshot_steps(l, n_t);
    let snap_dir = out.join(SNAPSHOT_DIR);
    if cfg.max_plots > 0 {
        fs::create_dir_all(&snap_dir)?;
    }
    for (traj, pred) in test.trajectories().iter().zip(&preds).take(cfg.max_plots) {
        let cols: Vec<(&GridField, &GridField)> =
            steps.iter().map(|&s| (&pred[s - l], &traj.frames()[s])).collect();
        let name = format!(
            "{}_steps_{}.png",
            file_safe(traj.id()),
            steps.map(|s| (s + 1).to_string()).join("-")
        );
        snapshot_panel(&snap_dir.join(name), &cols)?;
    }

    println!(
        "rolled out {} trajectories with {n} members ({} predicted steps each); final MAE {:.4e}, final RLE {:.4e}; wrote {}",
        preds.len(),
        n_t - l,
        mae.final_value(),
        rle.final_value(),
        out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_forcing_keeps_constant_params() {
        let c = ForcingSeries::constant(5, vec![0.1, 0.2]).unwrap();
        let t = tail_forcing(&c, 2).unwrap();
        assert_eq!(t.time_ids(), &[2, 3, 4]);
        assert_eq!(t.values(), &[0.1, 0.2]);

        let v = ForcingSeries::new(vec![0, 1, 2, 3], vec![0.0, 0.1, 0.2, 0.3], ForcingKind::TimeVarying).unwrap();
        let t = tail_forcing(&v, 1).unwrap();
        assert_eq!(t.values(), &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn ids_become_file_names() {
        assert_eq!(file_safe("gs_f0.029_k0.057_ic0001"), "gs_f0.029_k0.057_ic0001");
        assert_eq!(file_safe("a/b c"), "a_b_c");
    }
}
