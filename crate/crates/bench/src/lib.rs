//! Shared fixtures for the criterion benches.

use coreg_core::sim::{timing_sigma_spec, ScenarioFixture, SimDataset};
use coreg_core::{default_lambda_grid, Method, ScenarioSpec, DEFAULT_ALPHA};

/// One dataset from the scaled block design at the given size.
pub fn dataset(p: usize, n: usize, seed: u64) -> SimDataset {
    let spec = ScenarioSpec {
        name: format!("bench_p{p}_n{n}"),
        sigma: timing_sigma_spec(p, 0.5),
        n,
        q: 2,
        n_true_signals: p / 5,
        effect_size: 0.3,
        n_replications: 1,
        alpha: DEFAULT_ALPHA,
        master_seed: seed,
        truth_seed: None,
        methods: Method::ALL.to_vec(),
        svd_factors: None,
        lambda_grid: default_lambda_grid(),
    };
    ScenarioFixture::new(&spec)
        .and_then(|f| f.dataset(0))
        .expect("bench fixture")
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_shape() {
        let ds = super::dataset(50, 40, 1);
        assert_eq!(ds.y.n_variables(), 50);
        assert_eq!(ds.design.n(), 40);
    }
}
