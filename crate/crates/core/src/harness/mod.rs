//! Experiment configuration, the query/label/train loop and its artifacts.

mod config;
mod run;

pub use config::{
    DatasetConfig, ExperimentConfig, TeacherMode, TeacherSection, CONFIG_SCHEMA_VERSION,
};
pub use run::{
    read_round_logs, run_experiment, setup, write_report, FinalMetrics, LabelCounts, RoundLog,
    RunOptions, Setup, CHECKPOINT_FILE, CONFIG_COPY, EMBEDDING_FILE, FINAL_FILE, METRICS_FILE,
    PREFERENCES_FILE,
};
