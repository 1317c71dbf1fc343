//! End-to-end audit: holdout split, column separation, classifier under
//! test, joint fits, synthetic data, fidelity and fairness reports.
//!
//! Stage seeds come from the master seed via `seed::derive`:
//! `"holdout"`, `"em"`, `"sample"` and `"discriminator"` (indexed by method
//! ordinal) and `"bootstrap"`.

mod config;
mod report;
mod run;

pub use config::{ExperimentConfig, Method};
pub use report::{read_report, render_text, write_report_csv, write_report_files};
pub use run::{
    classifier_features, fit_method, prepare, run_experiment, AuditReport, ClassifierSummary, FairnessDiff,
    MethodOutcome, MethodReport, Prepared,
};
