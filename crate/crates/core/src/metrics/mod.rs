//! Pixel-level evaluation: confusion counts, ratio metrics, MAE/MSE, ROC/AUC
//! and per-class reports.

pub mod confusion;
pub mod evaluate;
pub mod ratios;
pub mod report;
pub mod roc;

pub use confusion::{confusion, confusion_from_slices, ConfusionCounts};
pub use evaluate::{
    evaluate_checkpoint, evaluate_class, Aggregation, AntiOracleSegmenter, EvalOptions, EvalSample, Evaluation,
    OracleSegmenter, Segmenter,
};
pub use ratios::{error_metrics, ratio_metrics, DegenerateFlags, ErrorMetrics, RatioMetrics};
pub use report::{markdown_table, MetricReport, SummaryReport, DEFINITIONS_VERSION};
pub use roc::{roc_auc, RocCurve};
