//! End-to-end pipelines, training, evaluation and reports.

mod config;
mod experiment;
mod forward;
mod gradsuite;
mod model;
mod report;
mod train;

pub use config::{ExperimentConfig, LrSchedule, Variant, EVAL_OFFSET};
pub use experiment::{
    run_ablation, run_experiment, write_ablation, write_run, AblationPlan, AblationReport, MeanRow,
    OrderingCheck, ABLATION_CSV, ABLATION_JSON, ABLATION_MEAN_CSV, MODEL_JSON, RUN_CSV, RUN_JSON,
};
pub use forward::{
    estimate_homography, forward, positional_encoding, predict, LossVars, Prediction, StageOutputs, STRIDE,
};
pub use gradsuite::{run_gradient_suite, GradCheckSummary, GradSuiteReport, GRAD_TOLERANCE};
pub use model::{Backbone, Model};
pub use report::{emit_report, read_rows_csv, write_rows_csv, ReportFormat, ResultRow, RunReport, CSV_HEADER};
pub use train::{
    evaluate, sample_gradients, train, train_step, Datasets, EpochLog, EvalMetrics, LossParts, Sgd,
    TrainLog, AUC_THRESHOLDS,
};
