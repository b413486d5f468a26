//! Error measure, stopping rule, learning strategies and the learning loop.

mod config;
mod error_measure;
mod learning;
mod run;

pub use config::{AlConfig, LearningMode, MIN_POOL_SIZE};
pub use error_measure::{
    global_error, localized_error, select_threshold, stopping_check, w_star, w_star_values, ErrorProfile, Integrand,
    Kernel, PoolBandwidth, WStar, GRID_NODES,
};
pub use learning::{
    learning_score, learning_score_value, select_candidate, select_candidate_mov, select_candidate_unconstrained,
    Selection, ZERO_STD_GUARD,
};
pub use run::{
    conventional_thresholds, run_active_loop, run_active_loop_observed, run_conventional_baseline, DesignRecord,
    IterationRecord, IterationView, RunReport, Termination,
};

pub use crate::distribution::TailMode;
