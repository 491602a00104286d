//! Dense matrix containers, covariance and correlation estimation, PSD repair
//! and seeded multivariate-normal sampling.
//!
//! Everything downstream works in the variables-by-samples layout (`p × n`);
//! [`DataMatrix`] carries an explicit orientation tag so that data read in the
//! usual samples-by-variables export layout is never silently misread.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CoregError, Result};

/// Eigenvalues above this (negative) bound are treated as round-off when
/// factoring a covariance for sampling.
pub const PSD_SAMPLING_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    VariablesBySamples,
    SamplesByVariables,
}

/// Dense finite real matrix with an explicit row/column meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    orientation: Orientation,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, orientation: Orientation) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(CoregError::Dimension(format!(
                "data matrix must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        check_finite(&values)?;
        Ok(Self { values, orientation })
    }

    /// Shorthand for the `p × n` layout used throughout the library.
    pub fn variables_by_samples(values: DMatrix<f64>) -> Result<Self> {
        Self::new(values, Orientation::VariablesBySamples)
    }

    pub fn samples_by_variables(values: DMatrix<f64>) -> Result<Self> {
        Self::new(values, Orientation::SamplesByVariables)
    }

    /// Skips the finiteness scan; callers guarantee the invariants.
    pub(crate) fn from_trusted(values: DMatrix<f64>, orientation: Orientation) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values, orientation }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_variables(&self) -> usize {
        match self.orientation {
            Orientation::VariablesBySamples => self.values.nrows(),
            Orientation::SamplesByVariables => self.values.ncols(),
        }
    }

    pub fn n_samples(&self) -> usize {
        match self.orientation {
            Orientation::VariablesBySamples => self.values.ncols(),
            Orientation::SamplesByVariables => self.values.nrows(),
        }
    }

    /// Returns the same data in the `p × n` layout, transposing if needed.
    pub fn to_variables_by_samples(&self) -> DataMatrix {
        match self.orientation {
            Orientation::VariablesBySamples => self.clone(),
            Orientation::SamplesByVariables => DataMatrix {
                values: self.values.transpose(),
                orientation: Orientation::VariablesBySamples,
            },
        }
    }

    pub fn to_samples_by_variables(&self) -> DataMatrix {
        match self.orientation {
            Orientation::SamplesByVariables => self.clone(),
            Orientation::VariablesBySamples => DataMatrix {
                values: self.values.transpose(),
                orientation: Orientation::SamplesByVariables,
            },
        }
    }

    /// `p × n` view of the values, borrowing when no transpose is needed.
    pub(crate) fn vs_values(&self) -> std::borrow::Cow<'_, DMatrix<f64>> {
        match self.orientation {
            Orientation::VariablesBySamples => std::borrow::Cow::Borrowed(&self.values),
            Orientation::SamplesByVariables => std::borrow::Cow::Owned(self.values.transpose()),
        }
    }
}

/// Real symmetric matrix; symmetry holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    values: DMatrix<f64>,
}

impl SymmetricMatrix {
    /// Validates squareness, finiteness and exact symmetry.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() || values.nrows() == 0 {
            return Err(CoregError::Dimension(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        check_finite(&values)?;
        let n = values.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                if values[(i, j)] != values[(j, i)] {
                    return Err(CoregError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { values })
    }

    /// Builds a symmetric matrix from `(M + Mᵀ) / 2`.
    pub fn from_symmetrized(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() || values.nrows() == 0 {
            return Err(CoregError::Dimension(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        check_finite(&values)?;
        Ok(Self {
            values: symmetrize(values),
        })
    }

    pub(crate) fn from_trusted(values: DMatrix<f64>) -> Self {
        debug_assert!(values.is_square());
        Self { values }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            values: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.values.diagonal()
    }

    pub fn scaled(&self, factor: f64) -> SymmetricMatrix {
        SymmetricMatrix {
            values: &self.values * factor,
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.values.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Re-indexes rows and columns: entry `(a, b)` of the result is entry
    /// `(perm[a], perm[b])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<SymmetricMatrix> {
        let n = self.dim();
        check_permutation(perm, n)?;
        Ok(SymmetricMatrix {
            values: DMatrix::from_fn(n, n, |a, b| self.values[(perm[a], perm[b])]),
        })
    }

    /// Largest absolute difference between two matrices of equal dimension.
    pub fn max_abs_diff(&self, other: &SymmetricMatrix) -> f64 {
        (&self.values - &other.values).amax()
    }
}

/// Seed plus stream index for a ChaCha20 generator.
///
/// Replication `r` of an experiment uses `RngStream::new(master_seed, r)`, so
/// each replication draws the same numbers regardless of scheduling order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// Independent child stream for a named purpose (e.g. covariance draw vs
    /// data draw) within the same replication.
    pub fn derive(&self, label: u64) -> RngStream {
        RngStream {
            master_seed: splitmix64(self.master_seed ^ splitmix64(label.wrapping_add(0x5851_f42d_4c95_7f2d))),
            stream_index: self.stream_index,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Row-centred sample covariance of a variables-by-samples matrix, divisor `n − 1`.
pub fn sample_covariance(data: &DataMatrix) -> Result<SymmetricMatrix> {
    let e = data.vs_values();
    let n = e.ncols();
    if n < 2 {
        return Err(CoregError::Dimension(format!(
            "sample covariance needs at least 2 samples, got {n}"
        )));
    }
    let centered = center_rows(&e);
    let mut cov = &centered * centered.transpose();
    cov /= (n - 1) as f64;
    Ok(SymmetricMatrix::from_trusted(mirror_upper(cov)))
}

/// Rescales a covariance to unit diagonal. Off-diagonal entries are clamped
/// to `[-1, 1]` to absorb round-off.
pub fn to_correlation(cov: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let p = cov.dim();
    let mut scale = Vec::with_capacity(p);
    for i in 0..p {
        let d = cov.get(i, i);
        if !(d > 0.0) {
            return Err(CoregError::DegenerateVariance { index: i, value: d });
        }
        scale.push(d.sqrt());
    }
    let mut r = DMatrix::zeros(p, p);
    for j in 0..p {
        r[(j, j)] = 1.0;
        for i in (j + 1)..p {
            let v = (cov.get(i, j) / (scale[i] * scale[j])).clamp(-1.0, 1.0);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    Ok(SymmetricMatrix::from_trusted(r))
}

/// Like [`to_correlation`], but variables with zero variance are isolated
/// (unit diagonal, zero correlations) instead of failing. Returns the
/// indices that were isolated.
pub fn to_correlation_isolating(cov: &SymmetricMatrix) -> (SymmetricMatrix, Vec<usize>) {
    let p = cov.dim();
    let degenerate: Vec<usize> = (0..p).filter(|&i| !(cov.get(i, i) > 0.0)).collect();
    if degenerate.is_empty() {
        return (to_correlation(cov).expect("positive diagonal"), degenerate);
    }
    let mut m = cov.values().clone();
    for &i in &degenerate {
        m.row_mut(i).fill(0.0);
        m.column_mut(i).fill(0.0);
        m[(i, i)] = 1.0;
    }
    let r = to_correlation(&SymmetricMatrix::from_trusted(m)).expect("diagonal repaired");
    (r, degenerate)
}

/// Nearest-PSD repair of a unit-diagonal symmetric matrix: clip negative
/// eigenvalues, reconstruct and rescale back to unit diagonal. PSD inputs are
/// returned unchanged.
pub fn nearest_psd_correlation(r: &SymmetricMatrix) -> SymmetricMatrix {
    let p = r.dim();
    // A successful Cholesky factorisation certifies positive definiteness.
    if Cholesky::new(r.values().clone()).is_some() {
        return r.clone();
    }
    let eig = SymmetricEigen::new(r.values().clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= -1e-12 {
        return r.clone();
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let vecs = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(p, p, |i, k| vecs[(i, k)] * clipped[k]);
    let recon = mirror_upper(&scaled * vecs.transpose());

    let mut out = DMatrix::zeros(p, p);
    let d: Vec<f64> = (0..p).map(|i| recon[(i, i)]).collect();
    for j in 0..p {
        out[(j, j)] = 1.0;
        for i in (j + 1)..p {
            let v = if d[i] > 0.0 && d[j] > 0.0 {
                (recon[(i, j)] / (d[i] * d[j]).sqrt()).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    SymmetricMatrix::from_trusted(out)
}

/// Cached square-root factor `A` with `A Aᵀ = Σ` for repeated MVN draws.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl MvnSampler {
    /// Factors `sigma` by Cholesky, falling back to a symmetric
    /// eigendecomposition so that singular PSD covariances are accepted.
    pub fn new(mean: DVector<f64>, sigma: &SymmetricMatrix) -> Result<Self> {
        let p = sigma.dim();
        if mean.len() != p {
            return Err(CoregError::Dimension(format!(
                "mean has length {} but covariance is {p}x{p}",
                mean.len()
            )));
        }
        if let Some(chol) = Cholesky::new(sigma.values().clone()) {
            return Ok(Self {
                mean,
                factor: chol.unpack(),
            });
        }
        let eig = SymmetricEigen::new(sigma.values().clone());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -PSD_SAMPLING_TOLERANCE {
            return Err(CoregError::Decomposition(format!(
                "covariance is not positive semidefinite (min eigenvalue {min:.3e})"
            )));
        }
        let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let vecs = eig.eigenvectors;
        let factor = DMatrix::from_fn(p, p, |i, k| vecs[(i, k)] * roots[k]);
        Ok(Self { mean, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draws `n` samples as a `p × n` matrix. Standard normals are consumed
    /// sample by sample, variable by variable.
    pub fn sample<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let p = self.dim();
        let mut z = DMatrix::zeros(p, n);
        for s in 0..n {
            for v in 0..p {
                z[(v, s)] = StandardNormal.sample(rng);
            }
        }
        let mut y = &self.factor * z;
        for mut col in y.column_iter_mut() {
            col += &self.mean;
        }
        y
    }
}

/// Draws `n` samples from `MVN(mean, sigma)` as a variables-by-samples matrix.
pub fn mvn_sample(mean: &DVector<f64>, sigma: &SymmetricMatrix, n: usize, rng: RngStream) -> Result<DataMatrix> {
    if n == 0 {
        return Err(CoregError::Dimension("cannot draw zero samples".into()));
    }
    let sampler = MvnSampler::new(mean.clone(), sigma)?;
    let mut r = rng.rng();
    Ok(DataMatrix::from_trusted(
        sampler.sample(n, &mut r),
        Orientation::VariablesBySamples,
    ))
}

pub(crate) fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(CoregError::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(CoregError::Dimension(format!(
            "permutation has length {} but matrix dimension is {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in perm {
        if i >= n || seen[i] {
            return Err(CoregError::Input(format!("invalid permutation entry {i}")));
        }
        seen[i] = true;
    }
    Ok(())
}

pub(crate) fn center_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols() as f64;
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let mean = row.sum() / n;
        row.add_scalar_mut(-mean);
    }
    out
}

/// Copies the upper triangle onto the lower one.
pub(crate) fn mirror_upper(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            m[(i, j)] = m[(j, i)];
        }
    }
    m
}

pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}
