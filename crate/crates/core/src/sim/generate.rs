use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cfa::default_lambda_grid;
use crate::error::{CoregError, Result};
use crate::infer::{Method, DEFAULT_ALPHA};
use crate::mvreg::Design;
use crate::numerics::{nearest_psd_correlation, DataMatrix, MvnSampler, Orientation, RngStream, SymmetricMatrix};

/// Largest tolerated shift of a block-average correlation caused by the PSD
/// repair.
pub const MAX_SIGMA_DISTORTION: f64 = 0.15;

const WITHIN_CLAMP: f64 = 0.99;

const LABEL_SIGMA: u64 = 1;
const LABEL_TRUTH: u64 = 2;
const LABEL_PREDICTOR: u64 = 3;
const LABEL_NOISE: u64 = 4;

/// Constant correlation between every pair of variables in blocks `a` and
/// `b` (0-based block indices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterBlock {
    pub a: usize,
    pub b: usize,
    pub corr: f64,
}

/// Correlation blocks followed by uncorrelated singleton variables, scaled by
/// `noise_scale` (σ²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSigmaSpec {
    pub block_sizes: Vec<usize>,
    pub block_mean_corr: Vec<f64>,
    pub within_block_sd: f64,
    #[serde(default)]
    pub inter_block: Vec<InterBlock>,
    pub n_singleton_vars: usize,
    pub noise_scale: f64,
}

impl BlockSigmaSpec {
    /// Three blocks of 100 (mean correlations 0.8, 0.6, 0.4), −0.4 between
    /// the first two blocks, 200 singletons.
    pub fn paper(noise_scale: f64) -> Self {
        Self {
            block_sizes: vec![100, 100, 100],
            block_mean_corr: vec![0.8, 0.6, 0.4],
            within_block_sd: 0.05,
            inter_block: vec![InterBlock { a: 0, b: 1, corr: -0.4 }],
            n_singleton_vars: 200,
            noise_scale,
        }
    }

    pub fn p(&self) -> usize {
        self.block_sizes.iter().sum::<usize>() + self.n_singleton_vars
    }

    /// Index ranges of the blocks; singletons occupy `[Σ sizes, p)`.
    pub fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.block_sizes
            .iter()
            .map(|&s| {
                let r = start..start + s;
                start += s;
                r
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoregError::Spec(m));
        if self.p() == 0 {
            return bad("covariance spec has no variables".into());
        }
        if self.block_sizes.len() != self.block_mean_corr.len() {
            return bad(format!(
                "{} block sizes but {} block mean correlations",
                self.block_sizes.len(),
                self.block_mean_corr.len()
            ));
        }
        if self.block_sizes.contains(&0) {
            return bad("block sizes must be positive".into());
        }
        if let Some(c) = self.block_mean_corr.iter().find(|c| !(c.abs() < 1.0)) {
            return bad(format!("block mean correlation {c} outside (-1, 1)"));
        }
        if !(self.within_block_sd >= 0.0 && self.within_block_sd.is_finite()) {
            return bad(format!(
                "within_block_sd must be finite and >= 0, got {}",
                self.within_block_sd
            ));
        }
        for ib in &self.inter_block {
            let k = self.block_sizes.len();
            if ib.a >= k || ib.b >= k || ib.a == ib.b {
                return bad(format!("inter-block pair ({}, {}) invalid for {k} blocks", ib.a, ib.b));
            }
            if !(ib.corr.abs() < 1.0) {
                return bad(format!("inter-block correlation {} outside (-1, 1)", ib.corr));
            }
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise_scale must be positive, got {}", self.noise_scale));
        }
        Ok(())
    }
}

fn default_name() -> String {
    "scenario".into()
}
fn default_q() -> usize {
    2
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

/// One simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub sigma: BlockSigmaSpec,
    pub n: usize,
    /// Design rows: intercept plus one standard-normal predictor. Only 2 is
    /// supported.
    #[serde(default = "default_q")]
    pub q: usize,
    pub n_true_signals: usize,
    pub effect_size: f64,
    pub n_replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub master_seed: u64,
    /// Seed for the correlation draw and signal locations; defaults to
    /// `master_seed`. Two scenarios sharing it share covariance structure and
    /// truth.
    #[serde(default)]
    pub truth_seed: Option<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// SvdFactor factor count; `None` uses CoReg's selected K.
    #[serde(default)]
    pub svd_factors: Option<usize>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
}

impl ScenarioSpec {
    /// Block design with 100 signals of effect 0.3 and 100 replications.
    pub fn paper(n: usize, noise_scale: f64, master_seed: u64) -> Self {
        Self {
            name: format!("n{n}_sigma2_{noise_scale}"),
            sigma: BlockSigmaSpec::paper(noise_scale),
            n,
            q: 2,
            n_true_signals: 100,
            effect_size: 0.3,
            n_replications: 100,
            alpha: DEFAULT_ALPHA,
            master_seed,
            truth_seed: None,
            methods: default_methods(),
            svd_factors: None,
            lambda_grid: default_lambda_grid(),
        }
    }

    pub fn p(&self) -> usize {
        self.sigma.p()
    }

    pub fn structure_seed(&self) -> u64 {
        self.truth_seed.unwrap_or(self.master_seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.sigma.validate()?;
        let bad = |m: String| Err(CoregError::Spec(m));
        if self.q != 2 {
            return bad(format!("q must be 2 (intercept + one predictor), got {}", self.q));
        }
        if self.n < self.q + 2 {
            return bad(format!("n = {} too small", self.n));
        }
        if self.n_true_signals > self.p() {
            return bad(format!("{} true signals exceed p = {}", self.n_true_signals, self.p()));
        }
        if self.n_replications == 0 {
            return bad("n_replications must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !self.effect_size.is_finite() {
            return bad("effect_size must be finite".into());
        }
        if self.methods.is_empty() {
            return bad("no methods requested".into());
        }
        if self.lambda_grid.is_empty() {
            return bad("lambda grid is empty".into());
        }
        for &l in &self.lambda_grid {
            crate::coexnet::check_lambda(l).map_err(|e| CoregError::Spec(e.to_string()))?;
        }
        Ok(())
    }
}

/// Outcomes with a nonzero coefficient on the predictor of interest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Sorted, 0-based.
    pub signal_indices: Vec<usize>,
}

impl GroundTruth {
    pub fn new(mut signal_indices: Vec<usize>) -> Self {
        signal_indices.sort_unstable();
        signal_indices.dedup();
        Self { signal_indices }
    }

    pub fn len(&self) -> usize {
        self.signal_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal_indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.signal_indices.binary_search(&i).is_ok()
    }

    pub fn mask(&self, p: usize) -> Vec<bool> {
        let mut m = vec![false; p];
        for &i in &self.signal_indices {
            if i < p {
                m[i] = true;
            }
        }
        m
    }
}

/// Covariance draw with its pre-repair target.
#[derive(Debug, Clone)]
pub struct GeneratedSigma {
    /// `σ² R` after repair.
    pub sigma: SymmetricMatrix,
    /// Drawn correlation before repair.
    pub target: SymmetricMatrix,
    /// Largest shift of a block-average correlation (within-block or
    /// inter-block) away from its target value in the spec.
    pub distortion: f64,
    /// `max |R_repaired − drawn|` over all entries.
    pub max_entry_change: f64,
}

pub fn generate_block_sigma(spec: &BlockSigmaSpec, rng: RngStream) -> Result<SymmetricMatrix> {
    Ok(generate_block_sigma_detailed(spec, rng)?.sigma)
}

/// Within-block correlations `~ N(mean, sd)` clamped to ±0.99, constant
/// inter-block correlations, zero elsewhere; repaired to the nearest PSD
/// correlation matrix and scaled by σ².
pub fn generate_block_sigma_detailed(spec: &BlockSigmaSpec, rng: RngStream) -> Result<GeneratedSigma> {
    spec.validate()?;
    let p = spec.p();
    let ranges = spec.block_ranges();
    let mut r = DMatrix::<f64>::identity(p, p);
    let mut g = rng.rng();
    for (range, &mean) in ranges.iter().zip(&spec.block_mean_corr) {
        for i in range.clone() {
            for j in i + 1..range.end {
                let z: f64 = StandardNormal.sample(&mut g);
                let v = (mean + spec.within_block_sd * z).clamp(-WITHIN_CLAMP, WITHIN_CLAMP);
                r[(i, j)] = v;
                r[(j, i)] = v;
            }
        }
    }
    for ib in &spec.inter_block {
        for i in ranges[ib.a].clone() {
            for j in ranges[ib.b].clone() {
                r[(i, j)] = ib.corr;
                r[(j, i)] = ib.corr;
            }
        }
    }
    let target = SymmetricMatrix::from_trusted(r);
    let repaired = nearest_psd_correlation(&target);
    let max_entry_change = repaired.max_abs_diff(&target);
    let distortion = block_mean_distortion(spec, &ranges, &repaired);
    if distortion > MAX_SIGMA_DISTORTION {
        return Err(CoregError::Spec(format!(
            "positive-semidefinite repair moved a block-average correlation by {distortion:.3} (limit {MAX_SIGMA_DISTORTION})"
        )));
    }
    Ok(GeneratedSigma {
        sigma: repaired.scaled(spec.noise_scale),
        target,
        distortion,
        max_entry_change,
    })
}

fn block_mean_distortion(spec: &BlockSigmaSpec, ranges: &[std::ops::Range<usize>], r: &SymmetricMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for (range, &mean) in ranges.iter().zip(&spec.block_mean_corr) {
        let m = range.len();
        if m < 2 {
            continue;
        }
        let mut s = 0.0;
        for i in range.clone() {
            for j in i + 1..range.end {
                s += r.get(i, j);
            }
        }
        worst = worst.max((s / (m * (m - 1) / 2) as f64 - mean).abs());
    }
    for ib in &spec.inter_block {
        let mut s = 0.0;
        for i in ranges[ib.a].clone() {
            for j in ranges[ib.b].clone() {
                s += r.get(i, j);
            }
        }
        let count = (ranges[ib.a].len() * ranges[ib.b].len()) as f64;
        worst = worst.max((s / count - ib.corr).abs());
    }
    worst
}

/// Splits `total` across groups proportionally to their sizes by the
/// largest-remainder rule (ties to the earlier group).
pub fn allocate_signals(group_sizes: &[usize], total: usize) -> Vec<usize> {
    let p: usize = group_sizes.iter().sum();
    if p == 0 {
        return vec![0; group_sizes.len()];
    }
    let quotas: Vec<f64> = group_sizes
        .iter()
        .map(|&s| total as f64 * s as f64 / p as f64)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..group_sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = total - counts.iter().sum::<usize>();
    for &g in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if counts[g] < group_sizes[g] {
            counts[g] += 1;
            left -= 1;
        }
    }
    counts
}

fn draw_truth(spec: &ScenarioSpec) -> GroundTruth {
    let mut groups: Vec<std::ops::Range<usize>> = spec.sigma.block_ranges();
    let covered = spec.sigma.block_sizes.iter().sum::<usize>();
    groups.push(covered..spec.p());
    let sizes: Vec<usize> = groups.iter().map(|r| r.len()).collect();
    let counts = allocate_signals(&sizes, spec.n_true_signals);
    let mut rng = RngStream::new(spec.structure_seed(), 0).derive(LABEL_TRUTH).rng();
    let mut idx = Vec::with_capacity(spec.n_true_signals);
    for (range, &c) in groups.iter().zip(&counts) {
        if c > 0 {
            idx.extend(
                index::sample(&mut rng, range.len(), c)
                    .into_iter()
                    .map(|i| range.start + i),
            );
        }
    }
    GroundTruth::new(idx)
}

/// One simulated dataset.
#[derive(Debug, Clone)]
pub struct SimDataset {
    /// `p × n`.
    pub y: DataMatrix,
    pub design: Design,
    pub truth: GroundTruth,
}

/// Scenario-level quantities shared by every replication: the covariance
/// (drawn once), its sampler, and the signal locations.
#[derive(Debug, Clone)]
pub struct ScenarioFixture {
    pub spec: ScenarioSpec,
    pub sigma: GeneratedSigma,
    pub truth: GroundTruth,
    sampler: MvnSampler,
    coefficients: DVector<f64>,
}

impl ScenarioFixture {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let truth = draw_truth(spec);
        Self::with_truth(spec, truth)
    }

    /// Uses the given signal locations instead of drawing them.
    pub fn with_truth(spec: &ScenarioSpec, truth: GroundTruth) -> Result<Self> {
        spec.validate()?;
        let p = spec.p();
        if truth.signal_indices.last().is_some_and(|&i| i >= p) {
            return Err(CoregError::Spec(format!("signal index outside 0..{p}")));
        }
        let sigma = generate_block_sigma_detailed(
            &spec.sigma,
            RngStream::new(spec.structure_seed(), 0).derive(LABEL_SIGMA),
        )?;
        let sampler = MvnSampler::new(DVector::zeros(p), &sigma.sigma)?;
        let mut coefficients = DVector::zeros(p);
        for &i in &truth.signal_indices {
            coefficients[i] = spec.effect_size;
        }
        let truth = if spec.effect_size == 0.0 {
            GroundTruth::new(vec![])
        } else {
            truth
        };
        Ok(Self {
            spec: spec.clone(),
            sigma,
            truth,
            sampler,
            coefficients,
        })
    }

    pub fn p(&self) -> usize {
        self.spec.p()
    }

    /// Replication `r`: `Y = b xᵀ + noise`, deterministic in
    /// `(master_seed, r)`.
    pub fn dataset(&self, replication: usize) -> Result<SimDataset> {
        let n = self.spec.n;
        let stream = RngStream::new(self.spec.master_seed, replication as u64);
        let mut xr = stream.derive(LABEL_PREDICTOR).rng();
        let x = DMatrix::from_fn(1, n, |_, _| StandardNormal.sample(&mut xr));
        let mut nr = stream.derive(LABEL_NOISE).rng();
        let mut y = self.sampler.sample(n, &mut nr);
        y += &self.coefficients * &x;
        let design = Design::with_intercept(x, vec!["x".into()])?;
        Ok(SimDataset {
            y: DataMatrix::from_trusted(y, Orientation::VariablesBySamples),
            design,
            truth: self.truth.clone(),
        })
    }
}

/// Builds the scenario fixture and draws one replication.
pub fn generate_dataset(scenario: &ScenarioSpec, replication: usize) -> Result<SimDataset> {
    ScenarioFixture::new(scenario)?.dataset(replication)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> BlockSigmaSpec {
        BlockSigmaSpec {
            block_sizes: vec![8, 6],
            block_mean_corr: vec![0.7, 0.5],
            within_block_sd: 0.0,
            inter_block: vec![InterBlock { a: 0, b: 1, corr: -0.2 }],
            n_singleton_vars: 6,
            noise_scale: 0.5,
        }
    }

    fn small_scenario() -> ScenarioSpec {
        ScenarioSpec {
            name: "small".into(),
            sigma: small_spec(),
            n: 40,
            q: 2,
            n_true_signals: 5,
            effect_size: 0.4,
            n_replications: 2,
            alpha: 0.05,
            master_seed: 17,
            truth_seed: None,
            methods: Method::ALL.to_vec(),
            svd_factors: None,
            lambda_grid: default_lambda_grid(),
        }
    }

    #[test]
    fn single_unit_block_is_noise_scale() {
        let spec = BlockSigmaSpec {
            block_sizes: vec![1],
            block_mean_corr: vec![0.5],
            within_block_sd: 0.05,
            inter_block: vec![],
            n_singleton_vars: 0,
            noise_scale: 0.7,
        };
        let s = generate_block_sigma(&spec, RngStream::new(1, 0)).unwrap();
        assert_eq!(s.dim(), 1);
        assert!((s.get(0, 0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_spread_gives_exact_block_constants() {
        let g = generate_block_sigma_detailed(&small_spec(), RngStream::new(3, 0)).unwrap();
        assert!(g.distortion < 1e-12);
        assert_eq!(g.max_entry_change, 0.0);
        let s = &g.sigma;
        assert!((s.get(0, 7) - 0.35).abs() < 1e-15);
        assert!((s.get(8, 13) - 0.25).abs() < 1e-15);
        assert!((s.get(2, 10) + 0.1).abs() < 1e-15);
        assert_eq!(s.get(3, 15), 0.0);
        assert_eq!(s.get(15, 16), 0.0);
        assert!((s.get(19, 19) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn paper_design_is_repairable() {
        let spec = BlockSigmaSpec::paper(0.5);
        assert_eq!(spec.p(), 500);
        let g = generate_block_sigma_detailed(&spec, RngStream::new(11, 0)).unwrap();
        assert!(g.distortion <= MAX_SIGMA_DISTORTION);
        assert!(g.sigma.min_eigenvalue() > -1e-10);
        for i in 0..500 {
            assert!((g.sigma.get(i, i) - 0.5).abs() < 1e-12);
        }
        // Block means survive the repair approximately.
        let mean = |r: std::ops::Range<usize>| {
            let mut s = 0.0;
            let mut c = 0.0;
            for i in r.clone() {
                for j in r.clone() {
                    if i < j {
                        s += g.sigma.get(i, j) / 0.5;
                        c += 1.0;
                    }
                }
            }
            s / c
        };
        assert!((mean(0..100) - 0.8).abs() < 0.12);
        assert!((mean(100..200) - 0.6).abs() < 0.12);
        assert!((mean(200..300) - 0.4).abs() < 0.12);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small_spec();
        s.block_mean_corr[0] = 1.0;
        assert!(matches!(s.validate(), Err(CoregError::Spec(_))));
        let mut s = small_spec();
        s.inter_block[0].b = 5;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.noise_scale = 0.0;
        assert!(s.validate().is_err());
        let mut sc = small_scenario();
        sc.n_true_signals = 100;
        assert!(sc.validate().is_err());
    }

    #[test]
    fn unrepairable_spec_is_a_spec_error() {
        // Strong opposing inter-block correlations cannot be made PSD cheaply.
        let spec = BlockSigmaSpec {
            block_sizes: vec![20, 20, 20],
            block_mean_corr: vec![0.1, 0.1, 0.1],
            within_block_sd: 0.0,
            inter_block: vec![
                InterBlock { a: 0, b: 1, corr: -0.9 },
                InterBlock { a: 1, b: 2, corr: -0.9 },
                InterBlock { a: 0, b: 2, corr: -0.9 },
            ],
            n_singleton_vars: 0,
            noise_scale: 1.0,
        };
        assert!(matches!(
            generate_block_sigma(&spec, RngStream::new(1, 0)),
            Err(CoregError::Spec(_))
        ));
    }

    #[test]
    fn allocation_is_proportional() {
        assert_eq!(allocate_signals(&[100, 100, 100, 200], 100), vec![20, 20, 20, 40]);
        assert_eq!(allocate_signals(&[1, 1, 1], 2), vec![1, 1, 0]);
        assert_eq!(allocate_signals(&[3, 7], 10), vec![3, 7]);
        assert_eq!(allocate_signals(&[5, 5], 0), vec![0, 0]);
        let c = allocate_signals(&[8, 6, 6], 5);
        assert_eq!(c.iter().sum::<usize>(), 5);
    }

    #[test]
    fn datasets_are_deterministic() {
        let sc = small_scenario();
        let a = generate_dataset(&sc, 1).unwrap();
        let b = generate_dataset(&sc, 1).unwrap();
        let c = generate_dataset(&sc, 2).unwrap();
        assert_eq!(a.y.values(), b.y.values());
        assert_eq!(a.truth, b.truth);
        assert_ne!(a.y.values(), c.y.values());
        assert_eq!(a.truth, c.truth);
        assert_eq!(a.truth.len(), 5);
        assert_eq!(a.y.n_variables(), 20);
        assert_eq!(a.y.n_samples(), 40);
        assert_eq!(a.design.q(), 2);
    }

    #[test]
    fn zero_effect_has_empty_truth() {
        let mut sc = small_scenario();
        sc.effect_size = 0.0;
        assert!(generate_dataset(&sc, 0).unwrap().truth.is_empty());
    }

    #[test]
    fn shared_truth_seed_shares_locations() {
        let mut a = small_scenario();
        let mut b = small_scenario();
        a.master_seed = 1;
        b.master_seed = 2;
        b.sigma.noise_scale = 1.0;
        a.truth_seed = Some(99);
        b.truth_seed = Some(99);
        let fa = ScenarioFixture::new(&a).unwrap();
        let fb = ScenarioFixture::new(&b).unwrap();
        assert_eq!(fa.truth, fb.truth);
        assert!(fa.sigma.target.max_abs_diff(&fb.sigma.target) == 0.0);
    }
}
