//! Config files, commands and CSV reporting behind the binary.

mod commands;
mod config;
mod report;

pub use commands::{
    cmd_derive, cmd_random, cmd_report, cmd_search, cmd_train, param_count_for, DeriveSummary, SearchSummary, TrainSummary,
    CONTROLLER_CKPT, DERIVE, EXPLORATION_LOG, REPORT, SEARCH_LOG, STORE_CKPT, SUMMARY, TOPK, TRAIN,
};
pub use config::{DatasetKind, Overrides, Precision, RunConfig, RunSettings};
pub use report::{curve_path, mean_std, seconds_per_epoch, write_curve, write_rows, ReportRow};
