//! Block-covariance simulation scenarios with ground truth, method
//! comparison across replications, and the two-arm replicability experiment.

mod generate;
mod metrics;
mod run;
mod timing;

pub use generate::{
    allocate_signals, generate_block_sigma, generate_block_sigma_detailed, generate_dataset, BlockSigmaSpec,
    GeneratedSigma, GroundTruth, InterBlock, ScenarioFixture, ScenarioSpec, SimDataset, MAX_SIGMA_DISTORTION,
};
pub use metrics::{evaluate, mean_roc, MetricsSummary};
pub use run::{
    run_methods, run_replicability, run_scenario, MethodOutcome, MethodReport, MetricStat, OverlapRow, OverlapSummary,
    ReplicabilityReport, ReplicationRow, ScenarioReport, ScenarioRun, TimingRow,
};
pub use timing::{loglog_slope, timing_grid, timing_sigma_spec, TimingAxis, TimingCell};
