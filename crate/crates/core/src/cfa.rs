//! Confirmatory block factor model built from a module partition.
//!
//! Each module maps to exactly one factor and each variable loads on at most
//! one factor, so `LᵀL` is diagonal. Factor scores are
//! `F = (LᵀL)⁻¹ Lᵀ E`, the factor covariance is the sample covariance of `F`,
//! and λ* minimises `‖Σ̂ − L Σ_F Lᵀ‖₂² + ‖L‖_*` over the λ grid.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coexnet::{check_lambda, extract_modules_up_to, ExtractionConfig, ModulePartition, WeightedGraph};
use crate::error::{CoregError, Result};
use crate::numerics::{center_rows, mirror_upper, sample_covariance, DataMatrix, Orientation, SymmetricMatrix};

/// Floor applied to the diagnostic idiosyncratic variances.
pub const SIGMA_U_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingKind {
    /// 0/1 membership indicators.
    #[default]
    Binary,
    /// Unit-norm leading eigenvector of each module's covariance block.
    Eigenvector,
}

/// Matrix norm used for the reconstruction term of the λ criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionNorm {
    #[default]
    Spectral,
    Frobenius,
}

/// `p × K` loadings with non-overlapping column supports.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingMatrix {
    l: DMatrix<f64>,
    partition: ModulePartition,
    kind: LoadingKind,
}

impl LoadingMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn partition(&self) -> &ModulePartition {
        &self.partition
    }

    pub fn kind(&self) -> LoadingKind {
        self.kind
    }

    pub fn p(&self) -> usize {
        self.l.nrows()
    }

    pub fn k(&self) -> usize {
        self.l.ncols()
    }

    /// Diagonal of `LᵀL` (squared column norms).
    pub fn gram_diagonal(&self) -> Vec<f64> {
        self.partition
            .modules
            .iter()
            .enumerate()
            .map(|(k, m)| m.iter().map(|&j| self.l[(j, k)].powi(2)).sum())
            .collect()
    }

    /// Nuclear norm. Disjoint column supports make the singular values equal
    /// to the column norms, so for binary loadings this is `Σ_k √p_k`.
    pub fn nuclear_norm(&self) -> f64 {
        self.gram_diagonal().iter().map(|g| g.sqrt()).sum()
    }
}

/// Binary membership loadings: `L_{jk} = 1` iff `j ∈ G_k`.
pub fn build_loadings(partition: &ModulePartition, p: usize) -> Result<LoadingMatrix> {
    if partition.k() == 0 {
        return Err(CoregError::NoModules);
    }
    if partition.p() != p {
        return Err(CoregError::Dimension(format!(
            "partition covers {} variables but p = {p}",
            partition.p()
        )));
    }
    let mut l = DMatrix::zeros(p, partition.k());
    for (k, m) in partition.modules.iter().enumerate() {
        for &j in m {
            l[(j, k)] = 1.0;
        }
    }
    Ok(LoadingMatrix {
        l,
        partition: partition.clone(),
        kind: LoadingKind::Binary,
    })
}

/// Per-module leading-eigenvector loadings, sign-fixed to a non-negative sum.
pub fn build_eigenvector_loadings(partition: &ModulePartition, sigma_hat: &SymmetricMatrix) -> Result<LoadingMatrix> {
    let p = sigma_hat.dim();
    let mut out = build_loadings(partition, p)?;
    for (k, m) in partition.modules.iter().enumerate() {
        let block = DMatrix::from_fn(m.len(), m.len(), |a, b| sigma_hat.get(m[a], m[b]));
        let eig = SymmetricEigen::new(block);
        let top = eig.eigenvalues.imax();
        let mut v = eig.eigenvectors.column(top).into_owned();
        if v.sum() < 0.0 {
            v = -v;
        }
        for (a, &j) in m.iter().enumerate() {
            out.l[(j, k)] = v[a];
        }
    }
    out.kind = LoadingKind::Eigenvector;
    Ok(out)
}

/// `F = (LᵀL)⁻¹ Lᵀ E`; with binary loadings row `k` is the within-module
/// mean of the residual rows.
pub fn factor_scores(loadings: &LoadingMatrix, e: &DataMatrix) -> Result<DataMatrix> {
    let e = e.vs_values();
    if e.nrows() != loadings.p() {
        return Err(CoregError::Dimension(format!(
            "residuals have {} rows but loadings have {}",
            e.nrows(),
            loadings.p()
        )));
    }
    let gram = loadings.gram_diagonal();
    let n = e.ncols();
    let mut f = DMatrix::zeros(loadings.k(), n);
    for (k, m) in loadings.partition.modules.iter().enumerate() {
        if m.is_empty() || !(gram[k] > 0.0) {
            return Err(CoregError::Singular(format!("module {k} has no loading mass")));
        }
        for &j in m {
            let w = loadings.l[(j, k)] / gram[k];
            if w != 0.0 {
                for s in 0..n {
                    f[(k, s)] += w * e[(j, s)];
                }
            }
        }
    }
    Ok(DataMatrix::from_trusted(f, Orientation::VariablesBySamples))
}

/// `L Σ_F Lᵀ`.
pub fn reconstruct_covariance(loadings: &LoadingMatrix, sigma_f: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    if sigma_f.dim() != loadings.k() {
        return Err(CoregError::Dimension(format!(
            "factor covariance is {}x{} but there are {} factors",
            sigma_f.dim(),
            sigma_f.dim(),
            loadings.k()
        )));
    }
    let l = &loadings.l;
    let m = l * sigma_f.values() * l.transpose();
    Ok(SymmetricMatrix::from_trusted(mirror_upper(m)))
}

/// Population-level factor covariance for binary loadings: entry `(k, k′)`
/// is the mean of the off-diagonal entries of block `(G_k, G_k′)` of `sigma`.
/// For a block-constant matrix and its true partition, `L Σ_F Lᵀ` then
/// matches every off-diagonal entry inside the modules.
pub fn block_mean_factor_covariance(sigma: &SymmetricMatrix, partition: &ModulePartition) -> Result<SymmetricMatrix> {
    let k = partition.k();
    if k == 0 {
        return Err(CoregError::NoModules);
    }
    let mut sf = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let (ma, mb) = (&partition.modules[a], &partition.modules[b]);
            let mut sum = 0.0;
            let mut count = 0usize;
            for &i in ma {
                for &j in mb {
                    if i != j {
                        sum += sigma.get(i, j);
                        count += 1;
                    }
                }
            }
            let v = sum / count as f64;
            sf[(a, b)] = v;
            sf[(b, a)] = v;
        }
    }
    Ok(SymmetricMatrix::from_trusted(sf))
}

/// Fitted block factor model for one partition.
#[derive(Debug, Clone)]
pub struct FactorModel {
    pub loadings: LoadingMatrix,
    /// `K × n` factor scores.
    pub scores: DataMatrix,
    /// Sample covariance of the scores.
    pub sigma_f: SymmetricMatrix,
    /// `diag(Σ̂ − L Σ_F Lᵀ)` floored at [`SIGMA_U_FLOOR`].
    pub sigma_u_diag: Vec<f64>,
}

impl FactorModel {
    pub fn k(&self) -> usize {
        self.loadings.k()
    }

    pub fn partition(&self) -> &ModulePartition {
        self.loadings.partition()
    }
}

/// Builds loadings, scores and `Σ_F` for a fixed partition.
pub fn fit_factor_model(
    partition: &ModulePartition,
    sigma_hat: &SymmetricMatrix,
    e: &DataMatrix,
    kind: LoadingKind,
) -> Result<FactorModel> {
    let p = sigma_hat.dim();
    let loadings = match kind {
        LoadingKind::Binary => build_loadings(partition, p)?,
        LoadingKind::Eigenvector => build_eigenvector_loadings(partition, sigma_hat)?,
    };
    let scores = factor_scores(&loadings, e)?;
    let sigma_f = sample_covariance(&scores)?;
    let l = loadings.values();
    let sigma_u_diag = (0..p)
        .map(|j| {
            let row = l.row(j);
            let fitted = (row * sigma_f.values() * row.transpose())[(0, 0)];
            (sigma_hat.get(j, j) - fitted).max(SIGMA_U_FLOOR)
        })
        .collect();
    Ok(FactorModel {
        loadings,
        scores,
        sigma_f,
        sigma_u_diag,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub grid: Vec<f64>,
    pub extraction: ExtractionConfig,
    pub norm: ReconstructionNorm,
    pub loadings: LoadingKind,
    /// Partitions with more modules than this are not scored (the
    /// augmented regression would run out of degrees of freedom).
    #[serde(default)]
    pub max_factors: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            grid: default_lambda_grid(),
            extraction: ExtractionConfig::default(),
            norm: ReconstructionNorm::Spectral,
            loadings: LoadingKind::Binary,
            max_factors: None,
        }
    }
}

/// `{1.1, 1.2, …, 2.0}`.
pub fn default_lambda_grid() -> Vec<f64> {
    (11..=20).map(|i| i as f64 / 10.0).collect()
}

/// Criterion breakdown for one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    /// Modules found; extraction stops at `max_factors + 1`.
    #[serde(rename = "K")]
    pub k: usize,
    pub module_sizes: Vec<usize>,
    /// Squared norm of `Σ̂ − L Σ_F Lᵀ`; `None` when no module was found.
    pub reconstruction: Option<f64>,
    pub nuclear: Option<f64>,
    pub score: Option<f64>,
}

/// Outcome of the λ search.
#[derive(Debug, Clone)]
pub struct Selection {
    pub model: FactorModel,
    pub lambda_star: f64,
    pub scores: Vec<LambdaScore>,
}

/// JSON shape of a selected factor model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModelReport {
    pub lambda_star: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub module_sizes: Vec<usize>,
    #[serde(rename = "sigma_F")]
    pub sigma_f: Vec<Vec<f64>>,
    pub score_breakdown: Vec<LambdaScore>,
}

impl Selection {
    pub fn report(&self) -> FactorModelReport {
        let sf = self.model.sigma_f.values();
        FactorModelReport {
            lambda_star: self.lambda_star,
            k: self.model.k(),
            module_sizes: self.model.partition().module_sizes(),
            sigma_f: (0..sf.nrows()).map(|i| sf.row(i).iter().copied().collect()).collect(),
            score_breakdown: self.scores.clone(),
        }
    }
}

/// λ* search with the default configuration apart from the grid.
pub fn select_lambda(grid: &[f64], sigma_hat: &SymmetricMatrix, e: &DataMatrix) -> Result<Selection> {
    let config = SelectionConfig {
        grid: grid.to_vec(),
        ..SelectionConfig::default()
    };
    let corr = crate::numerics::to_correlation(sigma_hat)?;
    let graph = crate::coexnet::build_graph(&corr)?;
    select_lambda_on_graph(&graph, &config, sigma_hat, e)
}

/// For each λ: extract modules, fit the factor model and score it; return
/// the minimiser (ties go to the larger λ).
///
/// `sigma_hat` must be the sample covariance of `e`; the spectral term
/// uses that to work in the `(n + K)`-dimensional span when `p` is large.
pub fn select_lambda_on_graph(
    graph: &WeightedGraph,
    config: &SelectionConfig,
    sigma_hat: &SymmetricMatrix,
    e: &DataMatrix,
) -> Result<Selection> {
    if config.grid.is_empty() {
        return Err(CoregError::Parameter("lambda grid is empty".into()));
    }
    for &l in &config.grid {
        check_lambda(l)?;
    }
    if graph.n_nodes() != sigma_hat.dim() {
        return Err(CoregError::Dimension("graph and covariance disagree on p".into()));
    }
    let centered = center_rows(&e.vs_values());
    let low_rank = low_rank_route_applies(sigma_hat, &centered);

    let evaluated: Vec<Result<(LambdaScore, Option<FactorModel>)>> = config
        .grid
        .par_iter()
        .map(|&lambda| {
            let partition = extract_modules_up_to(graph, lambda, &config.extraction, config.max_factors)?;
            let too_many = config.max_factors.is_some_and(|m| partition.k() > m);
            if partition.k() == 0 || too_many {
                return Ok((
                    LambdaScore {
                        lambda,
                        k: partition.k(),
                        module_sizes: partition.module_sizes(),
                        reconstruction: None,
                        nuclear: None,
                        score: None,
                    },
                    None,
                ));
            }
            let model = fit_factor_model(&partition, sigma_hat, e, config.loadings)?;
            let reconstruction = reconstruction_error(&model, sigma_hat, &centered, config.norm, low_rank)?;
            let nuclear = model.loadings.nuclear_norm();
            Ok((
                LambdaScore {
                    lambda,
                    k: model.k(),
                    module_sizes: partition.module_sizes(),
                    reconstruction: Some(reconstruction),
                    nuclear: Some(nuclear),
                    score: Some(reconstruction + nuclear),
                },
                Some(model),
            ))
        })
        .collect();

    let mut scores = Vec::with_capacity(evaluated.len());
    let mut best: Option<(f64, f64, FactorModel)> = None;
    for item in evaluated {
        let (score, model) = item?;
        if let (Some(s), Some(model)) = (score.score, model) {
            let better = match &best {
                None => true,
                Some((bs, bl, _)) => {
                    let tol = 1e-12 * bs.abs().max(1.0);
                    s < bs - tol || ((s - bs).abs() <= tol && score.lambda > *bl)
                }
            };
            if better {
                best = Some((s, score.lambda, model));
            }
        }
        scores.push(score);
    }
    let (_, lambda_star, model) = best.ok_or(CoregError::NoStructure)?;
    Ok(Selection {
        model,
        lambda_star,
        scores,
    })
}

fn low_rank_route_applies(sigma_hat: &SymmetricMatrix, centered: &DMatrix<f64>) -> bool {
    let (p, n) = centered.shape();
    if p != sigma_hat.dim() || n < 2 || p <= n + 8 {
        return false;
    }
    // Cheap consistency check that sigma_hat really is Cov(E).
    let denom = (n - 1) as f64;
    (0..p).all(|j| {
        let v = centered.row(j).norm_squared() / denom;
        (v - sigma_hat.get(j, j)).abs() <= 1e-9 * v.abs().max(1e-300) + 1e-300
    })
}

/// Squared spectral (or Frobenius) norm of `Σ̂ − L Σ_F Lᵀ`.
fn reconstruction_error(
    model: &FactorModel,
    sigma_hat: &SymmetricMatrix,
    centered: &DMatrix<f64>,
    norm: ReconstructionNorm,
    low_rank: bool,
) -> Result<f64> {
    match norm {
        ReconstructionNorm::Frobenius => {
            let recon = reconstruct_covariance(&model.loadings, &model.sigma_f)?;
            Ok((sigma_hat.values() - recon.values()).norm_squared())
        }
        ReconstructionNorm::Spectral if low_rank => Ok(low_rank_spectral_norm(model, centered).powi(2)),
        ReconstructionNorm::Spectral => {
            let recon = reconstruct_covariance(&model.loadings, &model.sigma_f)?;
            let resid = mirror_upper(sigma_hat.values() - recon.values());
            Ok(spectral_norm_symmetric(resid).powi(2))
        }
    }
}

pub(crate) fn spectral_norm_symmetric(m: DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues().iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// `Σ̂ − LΣ_F Lᵀ = W D Wᵀ` with `W = [C/√(n−1), L]`, `D = diag(I, −Σ_F)`.
/// With `W = QR` the nonzero spectrum is that of `R D Rᵀ`.
fn low_rank_spectral_norm(model: &FactorModel, centered: &DMatrix<f64>) -> f64 {
    let (p, n) = centered.shape();
    let k = model.k();
    let scale = 1.0 / ((n - 1) as f64).sqrt();
    let mut w = DMatrix::zeros(p, n + k);
    w.columns_mut(0, n).copy_from(&(centered * scale));
    w.columns_mut(n, k).copy_from(model.loadings.values());
    let r = w.qr().r();
    let mut d = DMatrix::zeros(n + k, n + k);
    d.view_mut((0, 0), (n, n)).fill_diagonal(1.0);
    d.view_mut((n, n), (k, k)).copy_from(&(-model.sigma_f.values()));
    let core = mirror_upper(&r * d * r.transpose());
    spectral_norm_symmetric(core)
}
