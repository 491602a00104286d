use coreg_core::numerics::mvn_sample;
use coreg_core::sim::{run_scenario, BlockSigmaSpec, InterBlock, ScenarioFixture};
use coreg_core::{
    ols_univariate, run_coreg, CoregConfig, CoregError, DataMatrix, Design, Method, RngStream, ScenarioSpec,
    SymmetricMatrix,
};
use nalgebra::{DMatrix, DVector};

fn block_sigma(sizes: &[usize], rho: &[f64], singletons: usize) -> SymmetricMatrix {
    let p: usize = sizes.iter().sum::<usize>() + singletons;
    let mut block = vec![usize::MAX; p];
    let mut start = 0;
    for (b, &s) in sizes.iter().enumerate() {
        block[start..start + s].fill(b);
        start += s;
    }
    SymmetricMatrix::new(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if block[i] != usize::MAX && block[i] == block[j] {
            rho[block[i]]
        } else {
            0.0
        }
    }))
    .unwrap()
}

fn design(n: usize, seed: u64) -> Design {
    let x = mvn_sample(
        &DVector::zeros(1),
        &SymmetricMatrix::identity(1),
        n,
        RngStream::new(seed, 9),
    )
    .unwrap();
    Design::with_intercept(x.into_values(), vec!["x".into()]).unwrap()
}

#[test]
fn recovers_planted_blocks() {
    let (n, sizes) = (150, [20, 15, 10]);
    let sigma = block_sigma(&sizes, &[0.8, 0.6, 0.5], 15);
    let e = mvn_sample(&DVector::zeros(60), &sigma, n, RngStream::new(4, 0)).unwrap();
    let design = design(n, 4);
    let analysis = run_coreg(&e, &design, &CoregConfig::default(), None).unwrap();
    let sel = analysis.selection.as_ref().expect("structure present");
    // Each planted block is returned exactly; noise variables may gather
    // into extra modules but never join a planted one.
    let modules = &sel.model.partition().modules;
    let mut start = 0;
    for &size in &sizes {
        let block: Vec<usize> = (start..start + size).collect();
        assert!(modules.contains(&block), "block {block:?} missing from {modules:?}");
        start += size;
    }
    for m in modules.iter().filter(|m| m[0] >= start) {
        assert!(m.iter().all(|&i| i >= start));
    }
    assert_eq!(analysis.inference.dof, n - 2 - sel.model.k());
}

#[test]
fn independent_outcomes_fall_back_to_ols() {
    let n = 80;
    let e = mvn_sample(
        &DVector::zeros(25),
        &SymmetricMatrix::identity(25),
        n,
        RngStream::new(8, 0),
    )
    .unwrap();
    let design = design(n, 8);
    let analysis = run_coreg(&e, &design, &CoregConfig::default(), None).unwrap();
    if analysis.fell_back_to_ols() {
        let ols = ols_univariate(&e, &design, 0.05).unwrap();
        assert_eq!(analysis.k(), 0);
        assert_eq!(analysis.inference.p_values(1), ols.p_values(1));
    } else {
        // Chance modules in white noise must stay small.
        assert!(analysis.k() <= 3, "K = {}", analysis.k());
    }
}

#[test]
fn exactly_explained_outcomes_are_degenerate() {
    // Every outcome is an exact linear function of x: zero residual variance.
    let y = DataMatrix::variables_by_samples(DMatrix::from_fn(5, 4, |i, j| (i * 3 + j) as f64)).unwrap();
    let x = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 2.0, 3.0]);
    let design = Design::with_intercept(x, vec!["x".into()]).unwrap();
    let analysis = run_coreg(&y, &design, &CoregConfig::default(), None).unwrap();
    assert!(analysis
        .inference
        .records
        .iter()
        .all(|r| r.degenerate && r.std_error == 0.0));
}

#[test]
fn too_few_samples_is_an_error_not_a_panic() {
    let y = DataMatrix::variables_by_samples(DMatrix::from_fn(5, 2, |i, j| (i + j * j) as f64)).unwrap();
    let design = Design::with_intercept(DMatrix::from_row_slice(1, 2, &[0.1, 0.9]), vec!["x".into()]).unwrap();
    let err = run_coreg(&y, &design, &CoregConfig::default(), None).unwrap_err();
    assert!(
        matches!(
            err,
            CoregError::InsufficientSamples { .. } | CoregError::InsufficientDof { .. }
        ),
        "{err:?}"
    );
}

fn small_spec(seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        name: "small".into(),
        sigma: BlockSigmaSpec {
            block_sizes: vec![12, 12, 12],
            block_mean_corr: vec![0.8, 0.6, 0.4],
            within_block_sd: 0.05,
            inter_block: vec![InterBlock { a: 0, b: 1, corr: -0.4 }],
            n_singleton_vars: 14,
            noise_scale: 0.5,
        },
        n: 100,
        q: 2,
        n_true_signals: 10,
        effect_size: 0.4,
        n_replications: 4,
        alpha: 0.05,
        master_seed: seed,
        truth_seed: None,
        methods: Method::ALL.to_vec(),
        svd_factors: None,
        lambda_grid: coreg_core::default_lambda_grid(),
    }
}

#[test]
fn scenario_report_independent_of_thread_count() {
    let spec = small_spec(21);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| run_scenario(&spec)).unwrap().report;
    let b = three.install(|| run_scenario(&spec)).unwrap().report;
    assert_eq!(a, b);
    assert_eq!(a.methods.len(), 3);
    assert!(a.methods.iter().all(|m| m.n_succeeded == 4));
}

#[test]
fn replication_streams_are_independent_of_count() {
    // Replication r is the same dataset whether 2 or 4 replications run.
    let f2 = ScenarioFixture::new(&ScenarioSpec {
        n_replications: 2,
        ..small_spec(5)
    })
    .unwrap();
    let f4 = ScenarioFixture::new(&small_spec(5)).unwrap();
    assert_eq!(f2.dataset(1).unwrap().y.values(), f4.dataset(1).unwrap().y.values());
    assert_ne!(f4.dataset(1).unwrap().y.values(), f4.dataset(2).unwrap().y.values());
}

#[test]
fn scenario_spec_json_round_trip() {
    let spec = small_spec(3);
    let text = serde_json::to_string(&spec).unwrap();
    assert_eq!(serde_json::from_str::<ScenarioSpec>(&text).unwrap(), spec);
    let typo = text.replacen("\"n\":", "\"samples\":", 1);
    assert!(serde_json::from_str::<ScenarioSpec>(&typo).is_err());
}
