use std::fs;
use std::path::Path;

use anyhow::Result;
use ensroll::metrics::{
    best_worst_report, evaluate_ensemble, evaluation_rows, write_decomposition, write_metrics_csv, BestWorst, Metric,
};

use super::{open_dataset, open_ensemble, Globals};
use crate::config::{load, resolve_out_dir, EvaluateConfig, Schema};
use crate::lock::OutputLock;
use crate::plot::{line_chart, Series};

pub const DECOMPOSITION_FILE: &str = "decomposition.json";
pub const BEST_WORST_FILE: &str = "best_worst.json";

pub fn evaluate(config: &Path, _g: Globals) -> Result<()> {
    let cfg: EvaluateConfig = load(Schema::Evaluate, config)?;
    let out = resolve_out_dir(cfg.out_dir.clone());
    let ens = open_ensemble(&cfg.ensemble_dir)?;
    let test = open_dataset(&cfg.dataset_dir)?;
    let eval = evaluate_ensemble(&ens, &test)?;
    let best_worst: Vec<BestWorst> = if ens.len() >= 2 {
        [Metric::Mae, Metric::Rle]
            .into_iter()
            .map(|m| {
                let members: Vec<_> = eval.members.iter().map(|c| c.get(m).clone()).collect();
                best_worst_report(&members, eval.ensemble.get(m))
            })
            .collect::<ensroll::Result<_>>()?
    } else {
        Vec::new()
    };

    let _lock = OutputLock::acquire(&out)?;
    write_metrics_csv(&out.join(super::rollout::METRICS_FILE), &evaluation_rows(&eval))?;
    write_decomposition(&out.join(DECOMPOSITION_FILE), &eval.decomposition)?;
    if !best_worst.is_empty() {
        fs::write(out.join(BEST_WORST_FILE), serde_json::to_vec_pretty(&best_worst)?)?;
    }
    for m in [Metric::Mae, Metric::Rle] {
        let mut series = vec![Series::new(
            format!("ensemble (N = {})", ens.len()),
            eval.ensemble.get(m).points().map(|(s, v)| (s as f64, v)).collect(),
        )];
        for (i, c) in eval.members.iter().enumerate() {
            series.push(Series::new(
                format!("member {i}"),
                c.get(m).points().map(|(s, v)| (s as f64, v)).collect(),
            ));
        }
        let name = m.name().to_uppercase();
        line_chart(
            &out.join(format!("{}_per_step.svg", m.name())),
            &format!("{name} per step"),
            "step",
            &name,
            &series,
        )?;
    }

    let d = &eval.decomposition;
    println!(
        "ensemble of {}: final MAE {:.4e}, final RLE {:.4e}",
        ens.len(),
        eval.ensemble.mae.final_value(),
        eval.ensemble.rle.final_value()
    );
    for bw in &best_worst {
        println!(
            "  {}: best member {} ({:+.1}%), worst member {} ({:+.1}%), member mean ({:+.1}%)",
            bw.metric.name(),
            bw.best_member,
            100.0 * bw.improvement_vs_best,
            bw.worst_member,
            100.0 * bw.improvement_vs_worst,
            100.0 * bw.improvement_vs_mean
        );
    }
    println!(
        "  MSE {:.4e} = diagonal {:.4e} + cross {:.4e}; bounds [{:.4e}, {:.4e}]",
        d.total, d.diag_term, d.cross_term, d.lower_bound, d.upper_bound
    );
    println!("wrote {}", out.display());
    Ok(())
}
