use std::path::Path;

use anyhow::Result;
use ensroll::metrics::{ensemble_size_sweep, sweep_rows, write_metrics_csv, Metric, SweepPoint};

use super::{open_dataset, open_ensemble, Globals};
use crate::config::{config_error, load, resolve_out_dir, Schema, SweepConfig};
use crate::lock::OutputLock;
use crate::plot::{line_chart, Series};

pub const SWEEP_CURVES_FILE: &str = "sweep.csv";
pub const SWEEP_TABLE_FILE: &str = "sweep_summary.csv";

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn write_table(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n_members", "final_mae", "final_rle", "mean_mae", "mean_rle"])?;
    for p in points {
        w.write_record([
            p.n_members.to_string(),
            format!("{:e}", p.curves.mae.final_value()),
            format!("{:e}", p.curves.rle.final_value()),
            format!("{:e}", mean(&p.curves.mae.values)),
            format!("{:e}", mean(&p.curves.rle.values)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn sweep(config: &Path, _g: Globals) -> Result<()> {
    let cfg: SweepConfig = load(Schema::Sweep, config)?;
    let out = resolve_out_dir(cfg.out_dir.clone());
    let ens = open_ensemble(&cfg.ensemble_dir)?;
    if let Some(&bad) = cfg.sizes.iter().find(|&&n| n > ens.len()) {
        return Err(config_error(format!(
            "sweep size {bad} exceeds the {} members in {}",
            ens.len(),
            cfg.ensemble_dir.display()
        )));
    }
    let test = open_dataset(&cfg.dataset_dir)?;
    let points = ensemble_size_sweep(&ens, &test, &cfg.sizes).map_err(|e| match e {
        ensroll::Error::Config(m) => config_error(m),
        other => other.into(),
    })?;

    let _lock = OutputLock::acquire(&out)?;
    write_metrics_csv(&out.join(SWEEP_CURVES_FILE), &sweep_rows(&points))?;
    write_table(&out.join(SWEEP_TABLE_FILE), &points)?;
    for m in [Metric::Mae, Metric::Rle] {
        let name = m.name().to_uppercase();
        let finals: Vec<(f64, f64)> = points.iter().map(|p| (p.n_members as f64, p.curves.get(m).final_value())).collect();
        line_chart(
            &out.join(format!("{}_vs_n.svg", m.name())),
            &format!("final-step {name} vs ensemble size"),
            "ensemble size N",
            &name,
            &[Series::new(format!("final {name}"), finals)],
        )?;
        let curves: Vec<Series> = points
            .iter()
            .map(|p| {
                Series::new(
                    format!("N = {}", p.n_members),
                    p.curves.get(m).points().map(|(s, v)| (s as f64, v)).collect(),
                )
            })
            .collect();
        line_chart(
            &out.join(format!("sweep_{}_per_step.svg", m.name())),
            &format!("{name} per step by ensemble size"),
            "step",
            &name,
            &curves,
        )?;
    }

    println!("{:>10} {:>12} {:>12}", "N", "final MAE", "final RLE");
    for p in &points {
        println!(
            "{:>10} {:>12.4e} {:>12.4e}",
            p.n_members,
            p.curves.mae.final_value(),
            p.curves.rle.final_value()
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
