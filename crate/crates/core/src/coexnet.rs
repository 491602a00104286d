//! Co-expression network over outcome variables and extraction of dense
//! modules by greedy peeling of the size-penalised density objective
//! `Σ_k |W(G_k)| / |V_k|^λ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CoregError, Result};
use crate::numerics::SymmetricMatrix;

/// Minimum density ratio a peeled candidate needs to become a module.
pub const DEFAULT_ACCEPTANCE_THRESHOLD: f64 = 0.05;

/// Undirected graph with weights `|corr(j, j′)|` and a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    weights: DMatrix<f64>,
    node_labels: Vec<String>,
}

impl WeightedGraph {
    pub fn from_weights(weights: DMatrix<f64>, node_labels: Option<Vec<String>>) -> Result<Self> {
        let p = weights.nrows();
        if !weights.is_square() || p == 0 {
            return Err(CoregError::Dimension(
                "weight matrix must be square and non-empty".into(),
            ));
        }
        for j in 0..p {
            if weights[(j, j)] != 0.0 {
                return Err(CoregError::Input(format!("weight diagonal at {j} must be zero")));
            }
            for i in 0..p {
                let w = weights[(i, j)];
                if !(0.0..=1.0).contains(&w) || w != weights[(j, i)] {
                    return Err(CoregError::Input(format!(
                        "weight ({i}, {j}) = {w} must be symmetric and in [0, 1]"
                    )));
                }
            }
        }
        let node_labels = match node_labels {
            Some(l) if l.len() != p => return Err(CoregError::Input(format!("{} labels for {p} nodes", l.len()))),
            Some(l) => l,
            None => default_labels(p),
        };
        Ok(Self { weights, node_labels })
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn node_labels(&self) -> &[String] {
        &self.node_labels
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_nodes() {
            return Err(CoregError::Input(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n_nodes()
            )));
        }
        self.node_labels = labels;
        Ok(self)
    }

    /// `|W(S)| = Σ_{j<j′ ∈ S} ω_{jj′}`.
    pub fn internal_weight(&self, nodes: &[usize]) -> f64 {
        let mut total = 0.0;
        for (a, &i) in nodes.iter().enumerate() {
            for &j in &nodes[a + 1..] {
                total += self.weights[(i, j)];
            }
        }
        total
    }

    /// `|W(S)| / |S|^λ`.
    pub fn density_ratio(&self, nodes: &[usize], lambda: f64) -> f64 {
        if nodes.is_empty() {
            return 0.0;
        }
        self.internal_weight(nodes) / (nodes.len() as f64).powf(lambda)
    }
}

fn default_labels(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("v{}", i + 1)).collect()
}

/// Disjoint modules `G₁…G_K` plus the leftover singletons `G₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulePartition {
    pub lambda: f64,
    #[serde(rename = "objective")]
    pub objective_value: f64,
    /// Modules in extraction order; node indices ascending within a module.
    pub modules: Vec<Vec<usize>>,
    pub singletons: Vec<usize>,
}

impl ModulePartition {
    /// Validates disjointness and minimum module size; singletons are every
    /// node of `0..p` not covered by a module. The objective is left at 0.
    pub fn new(modules: Vec<Vec<usize>>, p: usize, lambda: f64) -> Result<Self> {
        let mut seen = vec![false; p];
        let mut sorted = Vec::with_capacity(modules.len());
        for (k, m) in modules.into_iter().enumerate() {
            if m.len() < 2 {
                return Err(CoregError::Input(format!("module {k} has fewer than 2 nodes")));
            }
            for &i in &m {
                if i >= p {
                    return Err(CoregError::Input(format!("module {k} node {i} out of range (p = {p})")));
                }
                if seen[i] {
                    return Err(CoregError::Input(format!("node {i} appears in more than one module")));
                }
                seen[i] = true;
            }
            let mut m = m;
            m.sort_unstable();
            sorted.push(m);
        }
        let singletons = (0..p).filter(|&i| !seen[i]).collect();
        Ok(Self {
            lambda,
            objective_value: 0.0,
            modules: sorted,
            singletons,
        })
    }

    pub fn k(&self) -> usize {
        self.modules.len()
    }

    pub fn p(&self) -> usize {
        self.modules.iter().map(Vec::len).sum::<usize>() + self.singletons.len()
    }

    pub fn module_sizes(&self) -> Vec<usize> {
        self.modules.iter().map(Vec::len).collect()
    }

    pub fn covered(&self) -> usize {
        self.modules.iter().map(Vec::len).sum()
    }

    /// Cluster label per node: module index for module members, a distinct
    /// label per singleton.
    pub fn labels(&self) -> Vec<usize> {
        let p = self.p();
        let mut labels = vec![usize::MAX; p];
        for (k, m) in self.modules.iter().enumerate() {
            for &i in m {
                labels[i] = k;
            }
        }
        for (s, &i) in self.singletons.iter().enumerate() {
            labels[i] = self.k() + s;
        }
        labels
    }
}

/// `ω_{jj′} = |R_{jj′}|` off the diagonal.
pub fn build_graph(r: &SymmetricMatrix) -> Result<WeightedGraph> {
    let p = r.dim();
    for i in 0..p {
        if (r.get(i, i) - 1.0).abs() > 1e-9 {
            return Err(CoregError::Input(format!(
                "correlation diagonal at {i} is {} (expected 1)",
                r.get(i, i)
            )));
        }
    }
    let weights = DMatrix::from_fn(p, p, |i, j| if i == j { 0.0 } else { r.get(i, j).abs().min(1.0) });
    Ok(WeightedGraph {
        weights,
        node_labels: default_labels(p),
    })
}

/// `Σ_k |W(G_k)| / |V_k|^λ` for the partition's own λ.
pub fn module_objective(g: &WeightedGraph, partition: &ModulePartition) -> f64 {
    partition
        .modules
        .iter()
        .map(|m| g.density_ratio(m, partition.lambda))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// A candidate is accepted when its density ratio exceeds this value.
    pub acceptance_threshold: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            acceptance_threshold: DEFAULT_ACCEPTANCE_THRESHOLD,
        }
    }
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 1.0 && lambda <= 2.0 {
        Ok(())
    } else {
        Err(CoregError::Parameter(format!(
            "lambda must lie in (1, 2], got {lambda}"
        )))
    }
}

/// Sequential module extraction with the default acceptance threshold.
pub fn extract_modules(g: &WeightedGraph, lambda: f64) -> Result<ModulePartition> {
    extract_modules_with(g, lambda, &ExtractionConfig::default())
}

/// Repeatedly peels the remaining graph, keeps the densest prefix, and
/// removes it as a module until no candidate passes the threshold.
pub fn extract_modules_with(g: &WeightedGraph, lambda: f64, config: &ExtractionConfig) -> Result<ModulePartition> {
    extract_modules_up_to(g, lambda, config, None)
}

/// As [`extract_modules_with`], but stops once `limit + 1` modules have been
/// found; callers that discard partitions with more than `limit` modules
/// skip the remaining peels.
pub(crate) fn extract_modules_up_to(
    g: &WeightedGraph,
    lambda: f64,
    config: &ExtractionConfig,
    limit: Option<usize>,
) -> Result<ModulePartition> {
    check_lambda(lambda)?;
    let p = g.n_nodes();
    let mut alive = vec![true; p];
    let mut modules = Vec::new();
    while limit.is_none_or(|l| modules.len() <= l) {
        let Some((candidate, ratio)) = peel_densest(g, &alive, lambda) else {
            break;
        };
        if candidate.len() < 2 || !(ratio > config.acceptance_threshold) {
            break;
        }
        for &i in &candidate {
            alive[i] = false;
        }
        modules.push(candidate);
    }
    let mut partition = ModulePartition::new(modules, p, lambda)?;
    partition.objective_value = module_objective(g, &partition);
    Ok(partition)
}

/// One greedy peeling pass over the live nodes.
///
/// Nodes are removed in order of minimum weighted degree within the live
/// subgraph (ties to the lowest index); the prefix subgraph with the largest
/// `|W|/|V|^λ` over all prefixes with at least two nodes is returned, sorted,
/// with its exact ratio. Returns `None` when fewer than two nodes are live.
pub fn peel_densest(g: &WeightedGraph, alive: &[bool], lambda: f64) -> Option<(Vec<usize>, f64)> {
    let w = g.weights();
    let nodes: Vec<usize> = (0..g.n_nodes()).filter(|&i| alive[i]).collect();
    let m = nodes.len();
    if m < 2 {
        return None;
    }
    // Work on local indices; column `j` of `w` is the contiguous slice
    // `data[j * p..(j + 1) * p]`.
    let p = g.n_nodes();
    let data = w.as_slice();
    let mut degree: Vec<f64> = nodes
        .iter()
        .map(|&i| {
            let col = &data[i * p..(i + 1) * p];
            nodes.iter().map(|&j| col[j]).sum()
        })
        .collect();
    let mut total: f64 = degree.iter().sum::<f64>() / 2.0;
    let mut present = vec![true; m];
    let mut removed = Vec::with_capacity(m);

    let mut size = m;
    let mut best_ratio = total / (size as f64).powf(lambda);
    let mut best_removed = 0;

    // Minimum degree among present nodes, ties to the lowest index; kept
    // current by the update pass below.
    let mut v = argmin_present(&degree, &present);
    while size > 2 {
        present[v] = false;
        removed.push(v);
        total -= degree[v];
        let col = &data[nodes[v] * p..(nodes[v] + 1) * p];
        let mut next = usize::MAX;
        let mut dmin = f64::INFINITY;
        for a in 0..m {
            if present[a] {
                let d = degree[a] - col[nodes[a]];
                degree[a] = d;
                if d < dmin {
                    dmin = d;
                    next = a;
                }
            }
        }
        size -= 1;
        let ratio = total / (size as f64).powf(lambda);
        if ratio > best_ratio {
            best_ratio = ratio;
            best_removed = removed.len();
        }
        v = next;
    }

    let mut keep = vec![true; m];
    for &a in &removed[..best_removed] {
        keep[a] = false;
    }
    let candidate: Vec<usize> = (0..m).filter(|&a| keep[a]).map(|a| nodes[a]).collect();
    let ratio = g.density_ratio(&candidate, lambda);
    Some((candidate, ratio))
}

fn argmin_present(degree: &[f64], present: &[bool]) -> usize {
    let mut v = usize::MAX;
    let mut dmin = f64::INFINITY;
    for (a, (&d, &here)) in degree.iter().zip(present).enumerate() {
        if here && d < dmin {
            dmin = d;
            v = a;
        }
    }
    v
}

/// Order that lists module 1's nodes, then module 2's, …, then singletons,
/// each group ascending. Entry `a` is the original index placed at `a`.
pub fn reorder_permutation(partition: &ModulePartition) -> Vec<usize> {
    partition
        .modules
        .iter()
        .flat_map(|m| {
            let mut m = m.clone();
            m.sort_unstable();
            m
        })
        .chain(partition.singletons.iter().copied())
        .collect()
}

/// Adjusted Rand index between two labelings of the same nodes.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same nodes");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let compress = |l: &[usize]| {
        let mut map = std::collections::HashMap::new();
        l.iter()
            .map(|x| {
                let next = map.len();
                *map.entry(*x).or_insert(next)
            })
            .collect::<Vec<usize>>()
    };
    let (ca, cb) = (compress(a), compress(b));
    let ka = ca.iter().max().map_or(0, |m| m + 1);
    let kb = cb.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (x, y) in ca.iter().zip(&cb) {
        table[*x][*y] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&x| c2(x)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(n as u64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if (max - expected).abs() < 1e-15 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
