//! `metrics.csv`, `decomposition.json` and the markdown summary built from
//! them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::curves::{Metric, MetricCurve};
use super::decomposition::MseDecomposition;
use super::eval::{best_worst_report, Evaluation, SweepPoint};
use crate::error::{Error, Result};

pub const ENSEMBLE_LABEL: &str = "ensemble";

/// One line of `metrics.csv`. `member` is a member index or `"ensemble"`;
/// `step` is the 0-based step index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub metric: Metric,
    pub value: f64,
    pub member: String,
    pub n_members: usize,
}

pub fn curve_rows(curve: &MetricCurve, member: &str, n_members: usize) -> Vec<MetricRow> {
    curve
        .points()
        .map(|(step, value)| MetricRow {
            step,
            metric: curve.metric,
            value,
            member: member.to_string(),
            n_members,
        })
        .collect()
}

/// Ensemble curves (labelled `ensemble`, `n_members = N`) followed by solo
/// member curves (labelled by index, `n_members = 1`).
pub fn evaluation_rows(eval: &Evaluation) -> Vec<MetricRow> {
    let n = eval.members.len();
    let mut rows = Vec::new();
    for m in [Metric::Mae, Metric::Rle] {
        rows.extend(curve_rows(eval.ensemble.get(m), ENSEMBLE_LABEL, n));
        for (i, c) in eval.members.iter().enumerate() {
            rows.extend(curve_rows(c.get(m), &i.to_string(), 1));
        }
    }
    rows
}

pub fn sweep_rows(points: &[SweepPoint]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for p in points {
        for m in [Metric::Mae, Metric::Rle] {
            rows.extend(curve_rows(p.curves.get(m), ENSEMBLE_LABEL, p.n_members));
        }
    }
    rows
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format(path, format!("{other:?}")),
    })?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

/// Key: `(metric, member label, n_members)`.
pub type CurveKey = (Metric, String, usize);

/// Regroups rows into curves, sorted by step.
pub fn curves_from_rows(rows: &[MetricRow]) -> Result<BTreeMap<CurveKey, MetricCurve>> {
    let mut grouped: BTreeMap<CurveKey, Vec<(usize, f64)>> = BTreeMap::new();
    for r in rows {
        grouped
            .entry((r.metric, r.member.clone(), r.n_members))
            .or_default()
            .push((r.step, r.value));
    }
    grouped
        .into_iter()
        .map(|(key, mut pts)| {
            pts.sort_by_key(|p| p.0);
            let first = pts[0].0;
            if pts.iter().enumerate().any(|(i, p)| p.0 != first + i) {
                return Err(Error::Shape(format!("curve {key:?} has missing or repeated steps")));
            }
            let curve = MetricCurve {
                metric: key.0,
                first_step: first,
                values: pts.into_iter().map(|p| p.1).collect(),
                n_test: 0,
            };
            Ok((key, curve))
        })
        .collect()
}

pub fn write_decomposition(path: &Path, d: &MseDecomposition) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(d)?)?;
    Ok(())
}

pub fn read_decomposition(path: &Path) -> Result<MseDecomposition> {
    let raw = fs::read(path)?;
    serde_json::from_slice(&raw).map_err(|e| Error::format(path, e.to_string()))
}

fn pct(x: f64) -> String {
    format!("{:+.1}%", 100.0 * x)
}

/// Markdown summary of the curves in `rows` plus an optional decomposition.
/// The output depends only on its inputs.
pub fn render_report(rows: &[MetricRow], decomposition: Option<&MseDecomposition>) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let curves = curves_from_rows(rows)?;
    let mut out = String::from("# Ensemble rollout report\n");

    for metric in [Metric::Mae, Metric::Rle] {
        let ens: Vec<(&CurveKey, &MetricCurve)> = curves
            .iter()
            .filter(|(k, _)| k.0 == metric && k.1 == ENSEMBLE_LABEL)
            .collect();
        let mut members: Vec<(usize, &MetricCurve)> = curves
            .iter()
            .filter(|(k, _)| k.0 == metric && k.1 != ENSEMBLE_LABEL)
            .filter_map(|(k, c)| k.1.parse::<usize>().ok().map(|i| (i, c)))
            .collect();
        members.sort_by_key(|m| m.0);
        if ens.is_empty() && members.is_empty() {
            continue;
        }
        let _ = writeln!(out, "\n## {}\n", metric.name().to_uppercase());

        if let Some((key, full)) = ens.iter().max_by_key(|(k, _)| k.2) {
            let _ = writeln!(
                out,
                "Ensemble of {} members, final step {}: {:.6e}\n",
                key.2,
                full.first_step + full.values.len() - 1,
                full.final_value()
            );
            if members.len() >= 2 {
                let mc: Vec<MetricCurve> = members.iter().map(|m| m.1.clone()).collect();
                let bw = best_worst_report(&mc, full)?;
                let _ = writeln!(out, "| | member | final value | ensemble improvement |");
                let _ = writeln!(out, "|---|---|---|---|");
                let _ = writeln!(
                    out,
                    "| best | {} | {:.6e} | {} |",
                    members[bw.best_member].0,
                    bw.best_value,
                    pct(bw.improvement_vs_best)
                );
                let _ = writeln!(
                    out,
                    "| worst | {} | {:.6e} | {} |",
                    members[bw.worst_member].0,
                    bw.worst_value,
                    pct(bw.improvement_vs_worst)
                );
                let _ = writeln!(
                    out,
                    "| mean | | {:.6e} | {} |\n",
                    bw.member_mean,
                    pct(bw.improvement_vs_mean)
                );
            }
        }
        if ens.len() > 1 {
            let _ = writeln!(out, "| ensemble size | final value |");
            let _ = writeln!(out, "|---|---|");
            for (k, c) in &ens {
                let _ = writeln!(out, "| {} | {:.6e} |", k.2, c.final_value());
            }
            out.push('\n');
        }
    }

    if let Some(d) = decomposition {
        let _ = writeln!(out, "\n## MSE decomposition\n");
        let _ = writeln!(out, "| term | value |");
        let _ = writeln!(out, "|---|---|");
        for (name, v) in [
            ("ensemble MSE", d.total),
            ("uncorrelated (diagonal)", d.diag_term),
            ("correlated (cross)", d.cross_term),
            ("lower bound mean(MSE_i)/N", d.lower_bound),
            ("upper bound mean(MSE_i)", d.upper_bound),
        ] {
            let _ = writeln!(out, "| {name} | {v:.6e} |");
        }
        let _ = writeln!(out, "\nMembers: {}, points: {}.", d.n_members, d.n_points);
    }
    Ok(out)
}
