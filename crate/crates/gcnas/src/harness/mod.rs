//! Experiment orchestration: configuration, pipelines, protocols, and
//! report persistence. The thin `gcnas` binary and the runnable examples
//! both drive these entry points.

mod config;
mod experiments;
mod pipeline;
mod report;

pub use config::{
    ExperimentConfig, PartitionConfig, PartitionMethod, ProtocolConfig, SearchConfig,
    SearchStrategy,
};
pub use experiments::{
    rank_correlation_experiment, solver_comparison_experiment, stage_consistency_experiment,
    MethodRankStats, RankCorrelationResult, SolverComparisonResult, SolverRow,
    StageConsistencyResult,
};
pub use pipeline::{
    mask_family_counts, partition_and_derive, sample_unique_masks, scheme_for_method,
    search_darts_pipeline, search_ga_pipeline, train_and_partition, DartsOutcome, DartsSubResult,
    PartitionOutcome,
};
pub use report::{
    aggregate_reports, config_hash, summary_path, write_summary, write_toml, ResultsRecord,
};
