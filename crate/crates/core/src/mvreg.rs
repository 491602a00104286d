//! Closed-form multivariate least squares `Y = B X + E` over all outcomes at
//! once, and the residual dependence matrices that feed the network step.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{CoregError, Result};
use crate::numerics::{sample_covariance, to_correlation, DataMatrix, Orientation, SymmetricMatrix};

/// Designs whose Gram matrix exceeds this condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

pub const INTERCEPT_NAME: &str = "(Intercept)";

/// Predictor matrix `X` (`q × n`) with labels.
#[derive(Debug, Clone)]
pub struct Design {
    x: DMatrix<f64>,
    predictor_names: Vec<String>,
    has_intercept: bool,
    gram_chol: Cholesky<f64, Dyn>,
}

impl Design {
    /// Validates labels, the intercept row and the conditioning of `XXᵀ`.
    pub fn new(x: DataMatrix, predictor_names: Vec<String>, has_intercept: bool) -> Result<Self> {
        let x = x.vs_values().into_owned();
        let q = x.nrows();
        if predictor_names.len() != q {
            return Err(CoregError::Input(format!(
                "{} predictor names for {q} predictor rows",
                predictor_names.len()
            )));
        }
        if has_intercept && x.row(0).iter().any(|&v| v != 1.0) {
            return Err(CoregError::Input("intercept row must be all ones".into()));
        }
        let gram = &x * x.transpose();
        check_conditioning(&gram, &predictor_names)?;
        let gram_chol = Cholesky::new(gram).ok_or_else(|| CoregError::RankDeficient {
            condition: f64::INFINITY,
            predictors: predictor_names.clone(),
        })?;
        Ok(Self {
            x,
            predictor_names,
            has_intercept,
            gram_chol,
        })
    }

    /// Prepends an all-ones intercept row to `predictors` (`q₀ × n`).
    pub fn with_intercept(predictors: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let n = predictors.ncols();
        let q0 = predictors.nrows();
        let mut x = DMatrix::zeros(q0 + 1, n);
        x.row_mut(0).fill(1.0);
        x.rows_mut(1, q0).copy_from(&predictors);
        let mut all_names = Vec::with_capacity(q0 + 1);
        all_names.push(INTERCEPT_NAME.to_string());
        all_names.extend(names);
        Self::new(DataMatrix::variables_by_samples(x)?, all_names, true)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn q(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn predictor_names(&self) -> &[String] {
        &self.predictor_names
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    /// Indices of the predictors that receive hypothesis tests (all but the
    /// intercept).
    pub fn tested_predictors(&self) -> std::ops::Range<usize> {
        let start = usize::from(self.has_intercept);
        start..self.q()
    }

    /// Diagonal of `(XXᵀ)⁻¹`.
    pub fn gram_inverse_diagonal(&self) -> Vec<f64> {
        let inv = self.gram_chol.inverse();
        (0..self.q()).map(|m| inv[(m, m)]).collect()
    }

    /// Solves `(XXᵀ) Z = rhs`.
    pub(crate) fn solve_gram(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.gram_chol.solve(rhs)
    }
}

fn check_conditioning(gram: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let eig = SymmetricEigen::new(gram.clone());
    let (mut imin, mut imax) = (0, 0);
    for i in 0..eig.eigenvalues.len() {
        if eig.eigenvalues[i] < eig.eigenvalues[imin] {
            imin = i;
        }
        if eig.eigenvalues[i] > eig.eigenvalues[imax] {
            imax = i;
        }
    }
    let (lo, hi) = (eig.eigenvalues[imin], eig.eigenvalues[imax]);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition <= MAX_CONDITION {
        return Ok(());
    }
    let v = eig.eigenvectors.column(imin);
    let vmax = v.amax();
    let predictors = names
        .iter()
        .enumerate()
        .filter(|(i, _)| v[*i].abs() >= 0.1 * vmax)
        .map(|(_, s)| s.clone())
        .collect();
    Err(CoregError::RankDeficient { condition, predictors })
}

/// Least-squares fit of every outcome on the design.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    /// `p × q` coefficients.
    pub b_hat: DMatrix<f64>,
    /// `p × n` residuals `Y − B̂X`.
    pub residuals: DataMatrix,
    /// `n − q`.
    pub dof: usize,
}

/// `B̂ = Y Xᵀ (XXᵀ)⁻¹`, solved through the Cholesky factor of `XXᵀ`.
pub fn fit_ols(y: &DataMatrix, design: &Design) -> Result<RegressionFit> {
    let y = y.vs_values();
    let (n, q) = (design.n(), design.q());
    if y.ncols() != n {
        return Err(CoregError::Dimension(format!(
            "outcomes have {} samples but design has {n}",
            y.ncols()
        )));
    }
    if n <= q {
        return Err(CoregError::InsufficientSamples { n, required: q + 1 });
    }
    let xyt = design.x() * y.transpose();
    let b_hat = design.solve_gram(&xyt).transpose();
    let residuals = y.as_ref() - &b_hat * design.x();
    Ok(RegressionFit {
        b_hat,
        residuals: DataMatrix::from_trusted(residuals, Orientation::VariablesBySamples),
        dof: n - q,
    })
}

/// Residual covariance and correlation of a fit.
pub fn residual_dependence(fit: &RegressionFit) -> Result<(SymmetricMatrix, SymmetricMatrix)> {
    let cov = sample_covariance(&fit.residuals)?;
    let corr = to_correlation(&cov)?;
    Ok((cov, corr))
}
