//! Factor-augmented regression `Y = BX + ΓF + ε`, coefficient t-tests with
//! `n − (q + K)` degrees of freedom, and multiple-testing adjustment.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cfa::{select_lambda_on_graph, Selection, SelectionConfig};
use crate::coexnet::build_graph;
use crate::error::{CoregError, Result};
use crate::mvreg::{fit_ols, Design, RegressionFit, MAX_CONDITION};
use crate::numerics::{sample_covariance, to_correlation_isolating, DataMatrix, Orientation, SymmetricMatrix};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Threshold used by the π̂₀ estimate.
pub const STOREY_LAMBDA: f64 = 0.5;

/// Minimum number of tests for [`storey_pi0`].
pub const STOREY_MIN_TESTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CoReg")]
    CoReg,
    #[serde(rename = "OLS")]
    Ols,
    #[serde(rename = "SvdFactor")]
    SvdFactor,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::CoReg, Method::Ols, Method::SvdFactor];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::CoReg => "CoReg",
            Method::Ols => "OLS",
            Method::SvdFactor => "SvdFactor",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = CoregError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coreg" => Ok(Method::CoReg),
            "ols" => Ok(Method::Ols),
            "svdfactor" | "svd_factor" | "svd-factor" => Ok(Method::SvdFactor),
            other => Err(CoregError::Parameter(format!(
                "unknown method '{other}'; valid methods: CoReg, OLS, SvdFactor"
            ))),
        }
    }
}

/// A residual sum of squares below this fraction of `‖y_l‖²` is round-off:
/// the outcome lies in the span of the regressors and its residual variance
/// is taken as exactly zero (the test is then flagged degenerate).
pub const ROUNDOFF_RSS_RATIO: f64 = 1e-26;

/// Joint least-squares fit of the factor-augmented model.
#[derive(Debug, Clone)]
pub struct CoRegFit {
    /// `p × q`.
    pub b_hat: DMatrix<f64>,
    /// `p × K`.
    pub gamma_hat: DMatrix<f64>,
    /// `p × n` residuals `ε`.
    pub residuals: DataMatrix,
    /// `n − (q + K)`.
    pub dof: usize,
    /// `‖ε_l‖² / dof` per outcome.
    pub sigma_eps_diag: Vec<f64>,
}

impl CoRegFit {
    pub fn k(&self) -> usize {
        self.gamma_hat.ncols()
    }
}

/// Solves `(B̂, Γ̂) = argmin ‖Y − BX − ΓF‖²_F` jointly through the Cholesky
/// factor of the stacked Gram matrix.
pub fn fit_coreg(y: &DataMatrix, design: &Design, factors: &DataMatrix) -> Result<CoRegFit> {
    fit_augmented(y, design, &factors.vs_values())
}

/// Same as [`fit_coreg`] but accepts an empty (`0 × n`) factor matrix.
pub fn fit_augmented(y: &DataMatrix, design: &Design, factors: &DMatrix<f64>) -> Result<CoRegFit> {
    let y = y.vs_values();
    let (n, q, k) = (design.n(), design.q(), factors.nrows());
    if y.ncols() != n || factors.ncols() != n {
        return Err(CoregError::Dimension(format!(
            "sample counts disagree: Y has {}, X has {n}, F has {}",
            y.ncols(),
            factors.ncols()
        )));
    }
    if n <= q + k {
        return Err(CoregError::InsufficientDof { n, used: q + k });
    }
    let mut z = DMatrix::zeros(q + k, n);
    z.rows_mut(0, q).copy_from(design.x());
    if k > 0 {
        z.rows_mut(q, k).copy_from(factors);
    }
    let gram = &z * z.transpose();
    let names = || {
        design
            .predictor_names()
            .iter()
            .cloned()
            .chain((1..=k).map(|i| format!("F{i}")))
            .collect::<Vec<_>>()
    };
    let condition = gram_condition(&gram);
    if condition > MAX_CONDITION {
        return Err(CoregError::RankDeficient {
            condition,
            predictors: names(),
        });
    }
    let chol = Cholesky::new(gram).ok_or_else(|| CoregError::RankDeficient {
        condition: f64::INFINITY,
        predictors: names(),
    })?;
    let coef = chol.solve(&(&z * y.transpose())).transpose();
    let residuals = y.as_ref() - &coef * &z;
    let dof = n - q - k;
    let sigma_eps_diag = residuals
        .row_iter()
        .zip(y.row_iter())
        .map(|(r, yl)| {
            let rss = r.norm_squared();
            if rss <= ROUNDOFF_RSS_RATIO * yl.norm_squared() {
                0.0
            } else {
                rss / dof as f64
            }
        })
        .collect();
    Ok(CoRegFit {
        b_hat: coef.columns(0, q).into_owned(),
        gamma_hat: coef.columns(q, k).into_owned(),
        residuals: DataMatrix::from_trusted(residuals, Orientation::VariablesBySamples),
        dof,
        sigma_eps_diag,
    })
}

fn gram_condition(gram: &DMatrix<f64>) -> f64 {
    let ev = gram.clone().symmetric_eigenvalues();
    let lo = ev.min();
    let hi = ev.max();
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// One `(outcome, predictor)` hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTest {
    pub outcome: usize,
    pub outcome_label: String,
    pub predictor: usize,
    pub predictor_name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub adjusted_p: f64,
    pub rejected: bool,
    /// Zero residual variance: `se = 0` and `p = 0` by convention.
    pub degenerate: bool,
}

/// Per-coefficient inference for one method. Records are ordered by
/// outcome, then predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub method: Method,
    pub alpha: f64,
    pub dof: usize,
    pub n_outcomes: usize,
    pub predictors: Vec<usize>,
    pub records: Vec<CoefficientTest>,
}

impl InferenceResult {
    /// Records for one predictor in outcome order.
    pub fn for_predictor(&self, predictor: usize) -> impl Iterator<Item = &CoefficientTest> {
        self.records.iter().filter(move |r| r.predictor == predictor)
    }

    pub fn p_values(&self, predictor: usize) -> Vec<f64> {
        self.for_predictor(predictor).map(|r| r.p_value).collect()
    }

    pub fn rejected(&self, predictor: usize) -> Vec<bool> {
        self.for_predictor(predictor).map(|r| r.rejected).collect()
    }

    pub fn estimates(&self, predictor: usize) -> Vec<f64> {
        self.for_predictor(predictor).map(|r| r.estimate).collect()
    }

    pub fn any_degenerate(&self) -> bool {
        self.records.iter().any(|r| r.degenerate)
    }

    pub fn summary(&self) -> InferenceSummary {
        let mut rejections = BTreeMap::new();
        let mut pi0 = BTreeMap::new();
        for &m in &self.predictors {
            let name = self
                .for_predictor(m)
                .next()
                .map(|r| r.predictor_name.clone())
                .unwrap_or_else(|| format!("x{m}"));
            rejections.insert(name.clone(), self.for_predictor(m).filter(|r| r.rejected).count());
            pi0.insert(name, storey_pi0(&self.p_values(m)).ok());
        }
        InferenceSummary {
            method: self.method,
            alpha: self.alpha,
            dof: self.dof,
            n_outcomes: self.n_outcomes,
            n_tests: self.records.len(),
            rejections_per_predictor: rejections,
            pi0_per_predictor: pi0,
            degenerate_outcomes: self
                .records
                .iter()
                .filter(|r| r.degenerate)
                .map(|r| r.outcome)
                .collect(),
        }
    }
}

/// JSON summary emitted alongside the per-test CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceSummary {
    pub method: Method,
    pub alpha: f64,
    pub dof: usize,
    pub n_outcomes: usize,
    pub n_tests: usize,
    pub rejections_per_predictor: BTreeMap<String, usize>,
    /// `None` when fewer than 20 outcomes were tested.
    pub pi0_per_predictor: BTreeMap<String, Option<f64>>,
    pub degenerate_outcomes: Vec<usize>,
}

/// Two-sided p-value of a t statistic with `dof` degrees of freedom.
pub fn two_sided_p(t: f64, dof: usize) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    let dist = StudentsT::new(0.0, 1.0, dof as f64).expect("dof >= 1");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// t-tests for every non-intercept predictor with
/// `se(B̂_lm) = √(Σ̂_ε,ll [(XXᵀ)⁻¹]_mm)`, followed by BH adjustment within each
/// predictor across outcomes.
pub fn test_coefficients(
    fit: &CoRegFit,
    design: &Design,
    method: Method,
    alpha: f64,
    outcome_labels: Option<&[String]>,
) -> Result<InferenceResult> {
    check_alpha(alpha)?;
    if fit.dof < 1 {
        return Err(CoregError::InsufficientDof {
            n: design.n(),
            used: design.q() + fit.k(),
        });
    }
    let p = fit.b_hat.nrows();
    if let Some(l) = outcome_labels {
        if l.len() != p {
            return Err(CoregError::Input(format!(
                "{} outcome labels for {p} outcomes",
                l.len()
            )));
        }
    }
    let inv_diag = design.gram_inverse_diagonal();
    let predictors: Vec<usize> = design.tested_predictors().collect();
    let mut records = Vec::with_capacity(p * predictors.len());
    for l in 0..p {
        for &m in &predictors {
            let estimate = fit.b_hat[(l, m)];
            let var = fit.sigma_eps_diag[l];
            let se = (var * inv_diag[m]).sqrt();
            let degenerate = !(se > 0.0);
            let (t, pv) = if degenerate {
                let t = if estimate == 0.0 {
                    0.0
                } else {
                    estimate.signum() * f64::INFINITY
                };
                (t, 0.0)
            } else {
                let t = estimate / se;
                (t, two_sided_p(t, fit.dof))
            };
            records.push(CoefficientTest {
                outcome: l,
                outcome_label: outcome_labels.map_or_else(|| format!("y{}", l + 1), |ls| ls[l].clone()),
                predictor: m,
                predictor_name: design.predictor_names()[m].clone(),
                estimate,
                std_error: if degenerate { 0.0 } else { se },
                t_stat: t,
                p_value: pv,
                adjusted_p: pv,
                rejected: false,
                degenerate,
            });
        }
    }
    let mut result = InferenceResult {
        method,
        alpha,
        dof: fit.dof,
        n_outcomes: p,
        predictors: predictors.clone(),
        records,
    };
    let stride = predictors.len();
    for (slot, _) in predictors.iter().enumerate() {
        let pv: Vec<f64> = (0..p).map(|l| result.records[l * stride + slot].p_value).collect();
        let (adj, rej) = bh_adjust(&pv, alpha)?;
        for l in 0..p {
            let r = &mut result.records[l * stride + slot];
            r.adjusted_p = adj[l];
            r.rejected = rej[l];
        }
    }
    Ok(result)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CoregError::Parameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Benjamini–Hochberg step-up. Returns monotone adjusted p-values and the
/// rejection flags (`rejected ⇔ adjusted ≤ alpha`).
pub fn bh_adjust(p_values: &[f64], alpha: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    check_alpha(alpha)?;
    let m = p_values.len();
    if let Some(bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CoregError::Input(format!("p-value {bad} outside [0, 1]")));
    }
    if m == 0 {
        return Ok((vec![], vec![]));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    // Step-up cut: largest k with p_(k) ≤ kα/m.
    let cut = (1..=m)
        .rev()
        .find(|&k| p_values[order[k - 1]] <= k as f64 * alpha / m as f64)
        .unwrap_or(0);
    let mut rejected = vec![false; m];
    for &idx in &order[..cut] {
        rejected[idx] = true;
    }

    // Adjusted p: reverse cumulative minimum of p_(k) m / k, capped at 1.
    let mut adjusted = vec![0.0; m];
    let mut running = f64::INFINITY;
    for i in (0..m).rev() {
        let idx = order[i];
        let ratio = (p_values[idx] * m as f64 / (i + 1) as f64).max(p_values[idx]);
        running = running.min(ratio);
        adjusted[idx] = running.min(1.0);
    }
    // The two comparisons can round differently exactly at the boundary;
    // nudge by one ulp so that `rejected ⇔ adjusted ≤ alpha` holds.
    for (a, &r) in adjusted.iter_mut().zip(&rejected) {
        if r && *a > alpha {
            *a = alpha;
        } else if !r && *a <= alpha {
            *a = alpha.next_up();
        }
    }
    Ok((adjusted, rejected))
}

/// `π̂₀ = #{p > 0.5} / (0.5 m)`, clamped to `[0, 1]`.
pub fn storey_pi0(p_values: &[f64]) -> Result<f64> {
    let m = p_values.len();
    if m < STOREY_MIN_TESTS {
        return Err(CoregError::InsufficientTests {
            m,
            required: STOREY_MIN_TESTS,
        });
    }
    let above = p_values.iter().filter(|&&p| p > STOREY_LAMBDA).count();
    Ok((above as f64 / ((1.0 - STOREY_LAMBDA) * m as f64)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoregConfig {
    pub selection: SelectionConfig,
    pub alpha: f64,
}

impl Default for CoregConfig {
    fn default() -> Self {
        Self {
            selection: SelectionConfig::default(),
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// Everything produced by one end-to-end CoReg run.
#[derive(Debug, Clone)]
pub struct CoregAnalysis {
    pub step1: RegressionFit,
    pub residual_cov: SymmetricMatrix,
    pub residual_corr: SymmetricMatrix,
    /// `None` when no λ produced a module; the fit then reduces to OLS.
    pub selection: Option<Selection>,
    pub fit: CoRegFit,
    pub inference: InferenceResult,
}

impl CoregAnalysis {
    pub fn k(&self) -> usize {
        self.fit.k()
    }

    pub fn fell_back_to_ols(&self) -> bool {
        self.selection.is_none()
    }
}

/// Step 1 OLS, Step 2 network modules and λ*-selected factor model, Step 3
/// factor-augmented inference.
pub fn run_coreg(
    y: &DataMatrix,
    design: &Design,
    config: &CoregConfig,
    outcome_labels: Option<&[String]>,
) -> Result<CoregAnalysis> {
    let step1 = fit_ols(y, design)?;
    let residual_cov = sample_covariance(&step1.residuals)?;
    let (residual_corr, _) = to_correlation_isolating(&residual_cov);
    let graph = build_graph(&residual_corr)?;
    let mut selection_config = config.selection.clone();
    let room = design.n().saturating_sub(design.q() + 1);
    selection_config.max_factors = Some(selection_config.max_factors.map_or(room, |m| m.min(room)));
    let selection = match select_lambda_on_graph(&graph, &selection_config, &residual_cov, &step1.residuals) {
        Ok(sel) => Some(sel),
        Err(CoregError::NoStructure) => None,
        Err(e) => return Err(e),
    };
    let factors = match &selection {
        Some(sel) => sel.model.scores.values().clone(),
        None => DMatrix::zeros(0, design.n()),
    };
    let fit = fit_augmented(y, design, &factors)?;
    let inference = test_coefficients(&fit, design, Method::CoReg, config.alpha, outcome_labels)?;
    Ok(CoregAnalysis {
        step1,
        residual_cov,
        residual_corr,
        selection,
        fit,
        inference,
    })
}
