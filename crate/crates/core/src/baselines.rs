//! Comparator methods sharing the [`InferenceResult`] schema: mass-univariate
//! OLS and an orthogonal SVD-factor surrogate.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{CoregError, Result};
use crate::infer::{fit_augmented, test_coefficients, InferenceResult, Method};
use crate::mvreg::{fit_ols, Design};
use crate::numerics::DataMatrix;

/// Per-outcome OLS t-tests with `n − q` degrees of freedom and BH adjustment.
pub fn ols_univariate(y: &DataMatrix, design: &Design, alpha: f64) -> Result<InferenceResult> {
    ols_univariate_labelled(y, design, alpha, None)
}

pub fn ols_univariate_labelled(
    y: &DataMatrix,
    design: &Design,
    alpha: f64,
    outcome_labels: Option<&[String]>,
) -> Result<InferenceResult> {
    let fit = fit_augmented(y, design, &DMatrix::zeros(0, design.n()))?;
    test_coefficients(&fit, design, Method::Ols, alpha, outcome_labels)
}

/// Top `n_factors` right-singular directions of the Step-1 residuals, as a
/// `n_factors × n` matrix with `F Fᵀ = n I`.
pub fn svd_factors(residuals: &DataMatrix, n_factors: usize) -> Result<DMatrix<f64>> {
    let e = residuals.to_variables_by_samples().into_values();
    let (p, n) = e.shape();
    if n_factors > p.min(n) {
        return Err(CoregError::Parameter(format!(
            "{n_factors} factors requested from a {p}x{n} residual matrix"
        )));
    }
    if n_factors == 0 {
        return Ok(DMatrix::zeros(0, n));
    }
    let scale = (n as f64).sqrt();
    let mut f = DMatrix::zeros(n_factors, n);
    if n <= p {
        let eig = SymmetricEigen::new(e.transpose() * &e);
        for (row, k) in descending(eig.eigenvalues.as_slice())
            .into_iter()
            .take(n_factors)
            .enumerate()
        {
            let v = eig.eigenvectors.column(k);
            f.row_mut(row).copy_from(&(v.transpose() * scale));
        }
    } else {
        let eig = SymmetricEigen::new(&e * e.transpose());
        for (row, k) in descending(eig.eigenvalues.as_slice())
            .into_iter()
            .take(n_factors)
            .enumerate()
        {
            let s = eig.eigenvalues[k];
            if s <= 0.0 {
                return Err(CoregError::Decomposition(format!(
                    "residuals have rank below the {n_factors} requested factors"
                )));
            }
            let v = e.transpose() * eig.eigenvectors.column(k) / s.sqrt();
            f.row_mut(row).copy_from(&(v.transpose() * scale));
        }
    }
    // Fix each sign so the largest-magnitude entry is positive; keeps output
    // independent of the eigensolver's sign convention.
    for mut row in f.row_iter_mut() {
        let pivot = row
            .iter()
            .copied()
            .fold(0.0_f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if pivot < 0.0 {
            row.neg_mut();
        }
    }
    Ok(f)
}

fn descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Factor-augmented inference with orthogonal SVD factors in place of the
/// co-expression block factors. Labelled `SvdFactor` in every output.
pub fn svd_factor_baseline(y: &DataMatrix, design: &Design, n_factors: usize, alpha: f64) -> Result<InferenceResult> {
    svd_factor_baseline_labelled(y, design, n_factors, alpha, None)
}

pub fn svd_factor_baseline_labelled(
    y: &DataMatrix,
    design: &Design,
    n_factors: usize,
    alpha: f64,
    outcome_labels: Option<&[String]>,
) -> Result<InferenceResult> {
    let (p, n, q) = (y.n_variables(), design.n(), design.q());
    if n_factors + q >= p.min(n) {
        return Err(CoregError::InsufficientDof {
            n: p.min(n),
            used: q + n_factors,
        });
    }
    let step1 = fit_ols(y, design)?;
    let f = svd_factors(&step1.residuals, n_factors)?;
    let fit = fit_augmented(y, design, &f)?;
    test_coefficients(&fit, design, Method::SvdFactor, alpha, outcome_labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::fit_coreg;
    use crate::numerics::{sample_covariance, RngStream};
    use rand_distr::{Distribution, StandardNormal};

    fn normal_matrix(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = RngStream::new(seed, 0).rng();
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng))
    }

    fn vs(m: DMatrix<f64>) -> DataMatrix {
        DataMatrix::variables_by_samples(m).unwrap()
    }

    fn design(n: usize, seed: u64) -> Design {
        Design::with_intercept(normal_matrix(1, n, seed), vec!["x".into()]).unwrap()
    }

    fn off_diag_abs_sum(m: &DMatrix<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if i != j {
                    s += m[(i, j)].abs();
                }
            }
        }
        s
    }

    #[test]
    fn strong_signal_is_detected() {
        let n = 60;
        let d = design(n, 1);
        let noise = normal_matrix(1, n, 2) * 1e-3;
        let y = d.x().rows(1, 1) * 2.0 + noise;
        let res = ols_univariate(&vs(y), &d, 0.05).unwrap();
        assert!(res.records[0].p_value < 1e-6);
        assert!(res.records[0].rejected);
        assert!((res.records[0].estimate - 2.0).abs() < 1e-2);
    }

    #[test]
    fn null_false_positive_rate_is_controlled() {
        // 100 null replications of 50 outcomes: mean fraction rejected ≤ α + 0.02.
        let (p, n) = (50, 40);
        let mut total = 0.0;
        for rep in 0..100 {
            let d = design(n, 1000 + rep);
            let y = normal_matrix(p, n, 5000 + rep);
            let res = ols_univariate(&vs(y), &d, 0.05).unwrap();
            total += res.records.iter().filter(|r| r.rejected).count() as f64 / p as f64;
        }
        assert!(total / 100.0 <= 0.07, "mean FPR {}", total / 100.0);
    }

    #[test]
    fn estimates_match_factor_augmented_fit() {
        let (p, n) = (20, 50);
        let d = design(n, 3);
        let y = vs(normal_matrix(p, n, 4));
        let ols = ols_univariate(&y, &d, 0.05).unwrap();
        let step1 = fit_ols(&y, &d).unwrap();
        let f = vs(svd_factors(&step1.residuals, 3).unwrap());
        let fit = fit_coreg(&y, &d, &f).unwrap();
        for (l, est) in ols.estimates(1).iter().enumerate() {
            assert!((est - fit.b_hat[(l, 1)]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_factors_reduce_to_ols() {
        let d = design(30, 5);
        let y = vs(normal_matrix(12, 30, 6));
        let ols = ols_univariate(&y, &d, 0.05).unwrap();
        let svd = svd_factor_baseline(&y, &d, 0, 0.05).unwrap();
        assert_eq!(svd.method, Method::SvdFactor);
        assert_eq!(svd.records, ols.records);
        assert_eq!(svd.dof, ols.dof);
    }

    #[test]
    fn factors_are_orthogonal_and_orthogonal_to_design() {
        for &(p, n) in &[(40, 25), (15, 60)] {
            let d = design(n, 7);
            let y = vs(normal_matrix(p, n, 8));
            let step1 = fit_ols(&y, &d).unwrap();
            let f = svd_factors(&step1.residuals, 4).unwrap();
            let gram = &f * f.transpose();
            assert!((gram - DMatrix::identity(4, 4) * n as f64).amax() < 1e-10 * n as f64);
            assert!((d.x() * f.transpose()).amax() < 1e-8);
        }
    }

    #[test]
    fn rank_one_structure_is_removed() {
        // E = a zᵀ + small noise: one factor should remove ≥ 90% of off-diagonal covariance.
        let (p, n) = (30, 80);
        let d = design(n, 9);
        let a = normal_matrix(p, 1, 10);
        let z = normal_matrix(1, n, 11);
        let y = &a * &z + normal_matrix(p, n, 12) * 0.1;
        let y = vs(y);
        let step1 = fit_ols(&y, &d).unwrap();
        let before = off_diag_abs_sum(sample_covariance(&step1.residuals).unwrap().values());
        let f = svd_factors(&step1.residuals, 1).unwrap();
        let fit = fit_augmented(&y, &d, &f).unwrap();
        let after = off_diag_abs_sum(sample_covariance(&fit.residuals).unwrap().values());
        assert!(after <= 0.1 * before, "before {before}, after {after}");
    }

    #[test]
    fn repeated_calls_are_bit_identical() {
        let d = design(40, 13);
        let y = vs(normal_matrix(25, 40, 14));
        let a = svd_factor_baseline(&y, &d, 2, 0.05).unwrap();
        let b = svd_factor_baseline(&y, &d, 2, 0.05).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_factors_is_a_dof_error() {
        let d = design(20, 15);
        let y = vs(normal_matrix(10, 20, 16));
        assert!(matches!(
            svd_factor_baseline(&y, &d, 8, 0.05),
            Err(CoregError::InsufficientDof { .. })
        ));
        assert!(svd_factor_baseline(&y, &d, 7, 0.05).is_ok());
    }
}
