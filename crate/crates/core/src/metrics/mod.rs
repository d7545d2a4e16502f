//! Per-step error curves, the ensemble MSE decomposition and the reports
//! built on them.

mod curves;
mod decomposition;
mod eval;
mod output;

pub use curves::{mae_per_step, rle_per_step, Metric, MetricCurve};
pub use decomposition::{mse_decomposition, MseDecomposition};
pub use eval::{
    best_worst_report, ensemble_size_sweep, evaluate_ensemble, prediction_targets, rollout_test_set, BestWorst,
    CurvePair, Evaluation, SweepPoint,
};
pub use output::{
    curve_rows, curves_from_rows, evaluation_rows, read_decomposition, read_metrics_csv, render_report, sweep_rows,
    write_decomposition, write_metrics_csv, CurveKey, MetricRow, ENSEMBLE_LABEL,
};
