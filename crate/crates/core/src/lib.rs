//! CoReg: multivariate regression of many correlated outcomes with
//! dependence modelled by co-expression network modules.
//!
//! The pipeline is `run_coreg`: OLS residuals → residual correlation graph →
//! greedy module extraction and λ selection → block factor scores →
//! factor-augmented t-tests with BH adjustment.

// `!(x > 0.0)` is used on purpose: NaN must take the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cfa;
pub mod coexnet;
pub mod error;
pub mod infer;
pub mod mvreg;
pub mod numerics;
pub mod sim;

pub use baselines::{ols_univariate, svd_factor_baseline};
pub use cfa::{
    default_lambda_grid, select_lambda, FactorModel, FactorModelReport, LoadingKind, LoadingMatrix, ReconstructionNorm,
    Selection, SelectionConfig,
};
pub use coexnet::{build_graph, extract_modules, ModulePartition, WeightedGraph};
pub use error::{CoregError, Result};
pub use infer::{
    bh_adjust, fit_coreg, run_coreg, storey_pi0, test_coefficients, CoRegFit, CoefficientTest, CoregAnalysis,
    CoregConfig, InferenceResult, InferenceSummary, Method, DEFAULT_ALPHA,
};
pub use mvreg::{fit_ols, Design, RegressionFit};
pub use numerics::{sample_covariance, to_correlation, DataMatrix, Orientation, RngStream, SymmetricMatrix};
pub use sim::{
    evaluate, run_replicability, run_scenario, GroundTruth, MetricsSummary, ReplicabilityReport, ScenarioReport,
    ScenarioSpec,
};
