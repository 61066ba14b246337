//! Metrics, cross-validated model selection and validation reports.

pub mod cv;
pub mod grid;
pub mod metrics;
pub mod report;

pub use cv::{cross_validate, fit_final, fold_pipelines, model_seed, CvEntry, CvResult, FoldData};
pub use grid::{default_axes, expand_grid, Axis};
pub use metrics::{
    confusion_metrics, descending_order, f1_score, pr_auc, pr_curve, roc_auc, roc_curve, Confusion, CurveKind,
    CurvePoints,
};
pub use report::{
    curve_tsv, curves_svg, evaluate_models, metrics_row, parse_table, MetricsRow, ModelEvaluation, Report,
    TABLE1_HEADER, TABLE2_HEADER,
};
