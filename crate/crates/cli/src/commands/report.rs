use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ensroll::metrics::{
    curves_from_rows, read_decomposition, read_metrics_csv, render_report, Metric, MetricRow, ENSEMBLE_LABEL,
};

use super::evaluate::DECOMPOSITION_FILE;
use super::rollout::METRICS_FILE;
use super::sweep::SWEEP_CURVES_FILE;
use super::Globals;
use crate::config::{config_error, load, ReportConfig, Schema};
use crate::lock::OutputLock;
use crate::plot::{line_chart, Series};

pub const REPORT_FILE: &str = "report.md";
pub const FIGURE_DIR: &str = "figures";

fn sweep_section(rows: &[MetricRow]) -> Result<String> {
    let curves = curves_from_rows(rows)?;
    let mut finals: BTreeMap<usize, [Option<f64>; 2]> = BTreeMap::new();
    for ((metric, label, n), c) in &curves {
        if label == ENSEMBLE_LABEL {
            let slot = if *metric == Metric::Mae { 0 } else { 1 };
            finals.entry(*n).or_default()[slot] = Some(c.final_value());
        }
    }
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6e}"));
    let mut out = String::from("\n## Ensemble size sweep\n\n| N | final MAE | final RLE |\n|---|---|---|\n");
    for (n, [mae, rle]) in finals {
        let _ = writeln!(out, "| {n} | {} | {} |", fmt(mae), fmt(rle));
    }
    Ok(out)
}

fn figures(dir: &Path, rows: &[MetricRow]) -> Result<Vec<PathBuf>> {
    let curves = curves_from_rows(rows)?;
    let fig_dir = dir.join(FIGURE_DIR);
    fs::create_dir_all(&fig_dir)?;
    let mut written = Vec::new();
    for m in [Metric::Mae, Metric::Rle] {
        let series: Vec<Series> = curves
            .iter()
            .filter(|(k, _)| k.0 == m)
            .map(|((_, label, n), c)| {
                let name = if label == ENSEMBLE_LABEL {
                    format!("ensemble (N = {n})")
                } else {
                    format!("member {label}")
                };
                Series::new(name, c.points().map(|(s, v)| (s as f64, v)).collect())
            })
            .collect();
        if series.is_empty() {
            continue;
        }
        let rel = PathBuf::from(FIGURE_DIR).join(format!("{}.svg", m.name()));
        let name = m.name().to_uppercase();
        line_chart(&dir.join(&rel), &format!("{name} per step"), "step", &name, &series)?;
        written.push(rel);
    }
    Ok(written)
}

pub fn report(config: Option<&Path>, run_dir: Option<&Path>, _g: Globals) -> Result<()> {
    let dir = match (config, run_dir) {
        (_, Some(d)) => d.to_path_buf(),
        (Some(c), None) => load::<ReportConfig>(Schema::Report, c)?.run_dir,
        (None, None) => return Err(config_error("report needs a run directory or --config")),
    };
    let metrics_path = dir.join(METRICS_FILE);
    if !metrics_path.is_file() {
        return Err(io::Error::new(
            io::ErrorKind::NotFound,
            format!("{} has no {METRICS_FILE}; run rollout or evaluate first", dir.display()),
        )
        .into());
    }
    let rows = read_metrics_csv(&metrics_path)?;
    let dec_path = dir.join(DECOMPOSITION_FILE);
    let decomposition = if dec_path.is_file() {
        Some(read_decomposition(&dec_path)?)
    } else {
        None
    };
    let sweep_path = dir.join(SWEEP_CURVES_FILE);
    let sweep = if sweep_path.is_file() {
        Some(read_metrics_csv(&sweep_path)?)
    } else {
        None
    };
    let mut text = render_report(&rows, decomposition.as_ref()).with_context(|| format!("{}", metrics_path.display()))?;
    if decomposition.is_none() {
        text.push_str(&format!("\nNo {DECOMPOSITION_FILE} in this run; run evaluate for the MSE decomposition.\n"));
    }
    if let Some(s) = &sweep {
        text.push_str(&sweep_section(s)?);
    }

    let _lock = OutputLock::acquire(&dir)?;
    let figs = figures(&dir, &rows)?;
    if !figs.is_empty() {
        text.push_str("\n## Figures\n\n");
        for f in &figs {
            let _ = writeln!(text, "![{}]({})", f.display(), f.display());
        }
    }
    let target = dir.join(REPORT_FILE);
    fs::write(&target, &text)?;
    println!("wrote {}", target.display());
    Ok(())
}
