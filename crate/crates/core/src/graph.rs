//! Undirected graphs in compressed adjacency form, the symmetric propagation
//! operator, synthetic stochastic-block datasets and label perturbations.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Immutable undirected graph with node features and class labels.
///
/// Neighbor lists are sorted, deduplicated and symmetric. Self-loops are never
/// stored; the propagation operator adds them.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    features: DenseMatrix,
    labels: Vec<usize>,
    classes: usize,
}

impl Graph {
    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    /// Every undirected edge once, as `(u, v)` with `u < v`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| v > u)
                .map(move |&v| (u, v))
        })
    }

    /// Same structure and labels with replaced features.
    pub fn with_features(&self, features: DenseMatrix) -> Result<Graph> {
        if features.rows() != self.num_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows for {} nodes",
                features.rows(),
                self.num_nodes()
            )));
        }
        Ok(Graph {
            features,
            ..self.clone()
        })
    }

    /// Same structure and features with replaced labels.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Graph> {
        if labels.len() != self.num_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.classes) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.classes,
            });
        }
        Ok(Graph {
            labels,
            ..self.clone()
        })
    }

    /// Checks every structural invariant; used by tests and after file loads.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.offsets[0] != 0 || self.offsets[n] != self.targets.len() {
            return Err(Error::ShapeMismatch("offsets do not span targets".into()));
        }
        if self.offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::ShapeMismatch("offsets decrease".into()));
        }
        for u in 0..n {
            let nb = self.neighbors(u);
            if nb.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::ShapeMismatch(format!("neighbors of {u} not sorted/unique")));
            }
            for &v in nb {
                if v >= n {
                    return Err(Error::IndexOutOfRange { index: v, len: n });
                }
                if v == u || self.neighbors(v).binary_search(&u).is_err() {
                    return Err(Error::ShapeMismatch(format!("edge ({u},{v}) not symmetric")));
                }
            }
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.classes) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.classes,
            });
        }
        if self.labels.len() != n || self.features.rows() != n {
            return Err(Error::ShapeMismatch("labels/features vs node count".into()));
        }
        Ok(())
    }
}

/// Builds a graph from an undirected edge list. Duplicates and reversed copies
/// collapse to one edge; self-loops are dropped.
pub fn build_graph(
    n: usize,
    edges: &[(usize, usize)],
    features: DenseMatrix,
    labels: Vec<usize>,
    classes: usize,
) -> Result<Graph> {
    if features.rows() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows for {n} nodes",
            features.rows()
        )));
    }
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{} labels for {n} nodes", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: classes,
        });
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in edges {
        for x in [u, v] {
            if x >= n {
                return Err(Error::IndexOutOfRange { index: x, len: n });
            }
        }
        if u == v {
            continue;
        }
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut offsets = Vec::with_capacity(n + 1);
    let mut targets = Vec::new();
    offsets.push(0);
    for mut nb in adj {
        nb.sort_unstable();
        nb.dedup();
        targets.extend(nb);
        offsets.push(targets.len());
    }
    Ok(Graph {
        offsets,
        targets,
        features,
        labels,
        classes,
    })
}

/// Sparse symmetric matrix in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.cols[self.offsets[i]..self.offsets[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.vals[self.offsets[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// `self · m`
    pub fn spmm(&self, m: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!(m.rows(), self.n);
        let mut out = DenseMatrix::zeros(self.n, m.cols());
        for i in 0..self.n {
            let orow = out.row_mut(i);
            for (j, a) in self.row(i) {
                for (o, &b) in orow.iter_mut().zip(m.row(j)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, a)| a * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                d.set(i, j, a);
            }
        }
        d
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn normalized_adjacency(g: &Graph) -> SparseMatrix {
    let n = g.num_nodes();
    let deg: Vec<f64> = (0..n).map(|v| (g.degree(v) + 1) as f64).collect();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(g.targets.len() + n);
    let mut vals = Vec::with_capacity(g.targets.len() + n);
    offsets.push(0);
    for u in 0..n {
        let nb = g.neighbors(u);
        let split = nb.partition_point(|&v| v < u);
        let ordered = nb[..split].iter().chain(std::iter::once(&u)).chain(&nb[split..]);
        for &v in ordered {
            cols.push(v);
            // one rounding of a commutative product keeps the matrix exactly symmetric
            vals.push(1.0 / (deg[u] * deg[v]).sqrt());
        }
        offsets.push(cols.len());
    }
    SparseMatrix {
        n,
        offsets,
        cols,
        vals,
    }
}

/// Disjoint train/validation/test node sets, each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &v in self.train.iter().chain(&self.val).chain(&self.test) {
            if v >= n {
                return Err(Error::IndexOutOfRange { index: v, len: n });
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::ShapeMismatch(format!("node {v} in two splits")));
            }
        }
        Ok(())
    }
}

/// Stochastic block model with Gaussian class-conditional features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    pub class_mean_separation: f64,
    pub feat_noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_train_per_class")]
    pub train_per_class: usize,
    #[serde(default = "default_val_per_class")]
    pub val_per_class: usize,
}

fn default_train_per_class() -> usize {
    20
}

fn default_val_per_class() -> usize {
    20
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.blocks < 2 {
            return bad("blocks must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.p_out) || !(0.0..=1.0).contains(&self.p_in) {
            return bad("edge probabilities must lie in [0, 1]");
        }
        if self.p_out > self.p_in {
            return bad("p_out must not exceed p_in");
        }
        if self.feat_dim < self.blocks {
            return bad("feat_dim must be at least the block count");
        }
        if !(self.feat_noise_sigma >= 0.0) || !self.class_mean_separation.is_finite() {
            return bad("feature noise and separation must be finite and nonnegative");
        }
        Ok(())
    }
}

/// Class means at the vertices of a regular simplex, each of norm `radius`.
///
/// Vertex `k` is `e_k - (1/c)·1` rescaled; all pairwise distances are equal.
pub fn simplex_means(classes: usize, dim: usize, radius: f64) -> Vec<Vec<f64>> {
    let c = classes as f64;
    let norm = (1.0 - 1.0 / c).sqrt();
    (0..classes)
        .map(|k| {
            let mut m = vec![0.0; dim];
            for (j, x) in m.iter_mut().enumerate().take(classes) {
                let e = if j == k { 1.0 } else { 0.0 };
                *x = radius * (e - 1.0 / c) / norm;
            }
            m
        })
        .collect()
}

pub fn sbm_generate(cfg: &SbmConfig) -> Result<(Graph, Splits)> {
    cfg.validate()?;
    let per = cfg.nodes_per_block;
    if cfg.train_per_class + cfg.val_per_class > per {
        return Err(Error::InfeasibleSplit {
            class: 0,
            available: per,
            requested: cfg.train_per_class + cfg.val_per_class,
        });
    }
    let n = cfg.blocks * per;
    let labels: Vec<usize> = (0..n).map(|v| v / per).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let means = simplex_means(cfg.blocks, cfg.feat_dim, cfg.class_mean_separation);
    let noise = Normal::new(0.0, cfg.feat_noise_sigma)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let features = DenseMatrix::from_fn(n, cfg.feat_dim, |v, j| {
        means[labels[v]][j] + noise.sample(&mut rng)
    });

    let mut splits = Splits {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for k in 0..cfg.blocks {
        let mut members: Vec<usize> = (k * per..(k + 1) * per).collect();
        members.shuffle(&mut rng);
        let (tr, rest) = members.split_at(cfg.train_per_class);
        let (va, te) = rest.split_at(cfg.val_per_class);
        splits.train.extend_from_slice(tr);
        splits.val.extend_from_slice(va);
        splits.test.extend_from_slice(te);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();

    let g = build_graph(n, &edges, features, labels, cfg.blocks)?;
    Ok((g, splits))
}

/// Replaces exactly `round(ratio·|train|)` training labels with a uniformly
/// drawn different class.
pub fn flip_labels(g: &Graph, train: &[usize], ratio: f64, seed: u64) -> Result<Graph> {
    check_ratio(ratio)?;
    let c = g.num_classes();
    let count = (ratio * train.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<usize> = train.choose_multiple(&mut rng, count).copied().collect();
    let mut labels = g.labels().to_vec();
    for v in chosen {
        let shift = rng.random_range(1..c);
        labels[v] = (labels[v] + shift) % c;
    }
    g.with_labels(labels)
}

/// Moves `round(ratio·|class|)` nodes of every non-majority class into the
/// majority class. The majority is the largest class, lowest index on ties.
pub fn imbalance_flip(g: &Graph, ratio: f64, seed: u64) -> Result<Graph> {
    check_ratio(ratio)?;
    let c = g.num_classes();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (v, &l) in g.labels().iter().enumerate() {
        members[l].push(v);
    }
    let mut majority = 0;
    for k in 1..c {
        if members[k].len() > members[majority].len() {
            majority = k;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = g.labels().to_vec();
    for (k, nodes) in members.iter().enumerate() {
        if k == majority {
            continue;
        }
        let count = (ratio * nodes.len() as f64).round() as usize;
        for &v in nodes.choose_multiple(&mut rng, count) {
            labels[v] = majority;
        }
    }
    g.with_labels(labels)
}

fn check_ratio(ratio: f64) -> Result<()> {
    if (0.0..=1.0).contains(&ratio) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("ratio {ratio} outside [0, 1]")))
    }
}
