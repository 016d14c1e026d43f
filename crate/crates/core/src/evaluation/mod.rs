//! Subject-disjoint k-fold evaluation: metrics, cross-validation driver,
//! JSON/CSV reports and the comparison bar chart.

mod cv;
mod metrics;
mod plot;
mod report;

pub use cv::{
    run_cross_validation, run_cross_validation_with, Classifier, FoldMetrics, FoldTrainer, MetricsReport,
    NetworkTrainer, TrainedNetwork, AGGREGATION,
};
pub use metrics::{compute_metrics, per_class_scores, ClassScores, Metrics};
pub use plot::{bar_label, emit_comparison_plot, render_comparison_svg, METRICS};
pub use report::{
    emit_report, load_reports, report_to_json, reports_from_csv, reports_to_csv, ReportFormat, AGGREGATE_ROW,
    CSV_HEADER,
};
