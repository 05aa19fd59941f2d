//! Model-extraction attack simulation: query selection, surrogate training at
//! both output levels, independent models, removal attacks and pools.
//!
//! Attack routines only ever see the graph structure, the node features and
//! the target's responses on the queried nodes. They never read labels.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, Graph, Splits};
use crate::matrix::{softmax, DenseMatrix};
use crate::nn::train::{fit, Objective, ALL_TRAINABLE, HEAD_ONLY};
use crate::nn::{finetune_on, forward, prune_weights, train, ModelParams, Provenance, TrainConfig};
use crate::seed;
use crate::verify::Level;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryConfig {
    pub total: usize,
    #[serde(default = "default_boundary_fraction")]
    pub boundary_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_boundary_fraction() -> f64 {
    0.20
}

/// Top-1 minus top-2 softmax probability.
pub fn probability_gap(z: &[f64]) -> f64 {
    let p = softmax(z);
    let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for x in p {
        if x > a {
            b = a;
            a = x;
        } else if x > b {
            b = x;
        }
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    a - b
}

/// `round(boundary_fraction·total)` most ambiguous nodes of `universe` plus a
/// uniform sample of the rest. Returned sorted.
pub fn build_query_set(z_target: &DenseMatrix, universe: &[usize], cfg: &QueryConfig) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&cfg.boundary_fraction) {
        return Err(Error::InvalidConfig("boundary_fraction must lie in [0, 1]".into()));
    }
    if cfg.total > universe.len() {
        return Err(Error::InvalidConfig(format!(
            "query total {} exceeds the {} queryable nodes",
            cfg.total,
            universe.len()
        )));
    }
    let n_amb = ((cfg.boundary_fraction * cfg.total as f64).round() as usize).min(cfg.total);
    let mut by_gap: Vec<(f64, usize)> = universe
        .iter()
        .map(|&v| (probability_gap(z_target.row(v)), v))
        .collect();
    by_gap.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut picked: Vec<usize> = by_gap[..n_amb].iter().map(|&(_, v)| v).collect();
    let mut rest: Vec<usize> = by_gap[n_amb..].iter().map(|&(_, v)| v).collect();
    rest.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    picked.extend(rest.choose_multiple(&mut rng, cfg.total - n_amb));
    picked.sort_unstable();
    Ok(picked)
}

/// The target's answers on the queried nodes; row `i` belongs to `nodes[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResponses {
    pub nodes: Vec<usize>,
    pub embeddings: DenseMatrix,
    pub logits: DenseMatrix,
}

impl QueryResponses {
    /// Queries `target` on `g` (whose features may already be shifted).
    pub fn collect(target: &ModelParams, g: &Graph, nodes: Vec<usize>) -> Result<Self> {
        let out = forward(target, &normalized_adjacency(g), g.features(), None)?;
        Ok(Self {
            embeddings: out.embeddings.select_rows(&nodes),
            logits: out.logits.select_rows(&nodes),
            nodes,
        })
    }

    /// Hard labels, scattered to node positions (unqueried nodes get 0 and
    /// are never read).
    fn scattered_labels(&self, n: usize) -> Vec<usize> {
        let mut labels = vec![0; n];
        for (i, &v) in self.nodes.iter().enumerate() {
            labels[v] = self.logits.row_argmax(i);
        }
        labels
    }
}

/// Attacker training budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub train: TrainConfig,
    #[serde(default = "default_head_epochs")]
    pub head_epochs: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_head_epochs() -> usize {
    50
}

fn default_temperature() -> f64 {
    1.0
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            head_epochs: default_head_epochs(),
            temperature: default_temperature(),
        }
    }
}

/// Regresses the surrogate's embeddings onto the responses, then fits the
/// classifier head on the responses' argmax labels with propagation frozen.
pub fn extract_embedding_level(
    responses: &QueryResponses,
    g: &Graph,
    h_s: usize,
    cfg: &AttackConfig,
) -> Result<ModelParams> {
    if responses.embeddings.cols() != h_s {
        return Err(Error::DimMismatch {
            suspect: h_s,
            reference: responses.embeddings.cols(),
        });
    }
    let adj = normalized_adjacency(g);
    let c = responses.logits.cols();
    let p = crate::nn::init_params(g.feature_dim(), h_s, c, cfg.train.seed).with_provenance(Provenance::Surrogate);
    let objective = Objective::EmbeddingMse {
        nodes: &responses.nodes,
        targets: &responses.embeddings,
    };
    let (p, _) = fit(p, &adj, g.features(), objective, &cfg.train, &ALL_TRAINABLE, None)?;
    let labels = responses.scattered_labels(g.num_nodes());
    let head_cfg = TrainConfig {
        epochs: cfg.head_epochs,
        seed: seed::derive(cfg.train.seed, "head"),
        ..cfg.train
    };
    let objective = Objective::CrossEntropy {
        nodes: &responses.nodes,
        labels: &labels,
    };
    let (mut p, _) = fit(p, &adj, g.features(), objective, &head_cfg, &HEAD_ONLY, None)?;
    p.training = Some(cfg.train);
    Ok(p)
}

/// Knowledge distillation on the responses' logits at temperature `T`.
pub fn extract_label_level(
    responses: &QueryResponses,
    g: &Graph,
    h_s: usize,
    cfg: &AttackConfig,
) -> Result<ModelParams> {
    if !(cfg.temperature > 0.0) {
        return Err(Error::InvalidConfig("temperature must be positive".into()));
    }
    let adj = normalized_adjacency(g);
    let c = responses.logits.cols();
    let p = crate::nn::init_params(g.feature_dim(), h_s, c, cfg.train.seed).with_provenance(Provenance::Surrogate);
    let objective = Objective::Distillation {
        nodes: &responses.nodes,
        teacher: &responses.logits,
        temperature: cfg.temperature,
    };
    let (mut p, _) = fit(p, &adj, g.features(), objective, &cfg.train, &ALL_TRAINABLE, None)?;
    p.training = Some(cfg.train);
    Ok(p)
}

/// Ordinary supervised training, tagged independent.
pub fn train_independent(g: &Graph, splits: &Splits, h: usize, cfg: &TrainConfig) -> Result<ModelParams> {
    let (p, _) = train(g, splits, h, cfg)?;
    Ok(p.with_provenance(Provenance::Independent))
}

/// Adds `N(0, σ²)` noise to the listed feature rows only.
pub fn shift_queries(x: &DenseMatrix, rows: &[usize], sigma: f64, seed: u64) -> Result<DenseMatrix> {
    let mut out = x.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &v in rows {
        for x in out.row_mut(v) {
            *x += noise.sample(&mut rng);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovalKind {
    #[default]
    None,
    Prune30,
    Finetune,
}

impl RemovalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RemovalKind::None => "none",
            RemovalKind::Prune30 => "prune30",
            RemovalKind::Finetune => "finetune",
        }
    }
}

/// Post-extraction removal attack. Fine-tuning trains on `unseen` nodes with
/// the surrogate's own predictions as labels, since the attacker holds no
/// ground truth.
pub fn apply_removal(p: &ModelParams, kind: RemovalKind, g: &Graph, unseen: &[usize], seed: u64) -> Result<ModelParams> {
    match kind {
        RemovalKind::None => Ok(p.clone()),
        RemovalKind::Prune30 => prune_weights(p, 0.30),
        RemovalKind::Finetune => {
            if unseen.is_empty() {
                return Ok(p.clone());
            }
            let out = forward(p, &normalized_adjacency(g), g.features(), None)?;
            let pseudo = out.predictions();
            finetune_on(p, g, unseen, &pseudo, &crate::nn::finetune_config(seed))
        }
    }
}

/// Pool composition and attacker settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub surrogates: usize,
    pub independents: usize,
    pub query: QueryConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    /// Hidden widths cycled through by independents at label level. The
    /// embedding level always uses the target width.
    #[serde(default)]
    pub independent_dims: Vec<usize>,
    #[serde(default)]
    pub removal: RemovalKind,
    #[serde(default)]
    pub shift_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

/// One trained pool model plus what is needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolMember {
    pub id: String,
    pub params: ModelParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPool {
    pub level: Level,
    pub query: Vec<usize>,
    pub surrogates: Vec<PoolMember>,
    pub independents: Vec<PoolMember>,
}

impl ModelPool {
    pub fn members(&self) -> impl Iterator<Item = &PoolMember> {
        self.surrogates.iter().chain(&self.independents)
    }
}

/// Surrogates extracted from `target` at `level`, plus independents trained
/// on the task. Pool members train in parallel on the current rayon pool;
/// results are ordered by member index so the output is thread-count
/// independent.
pub fn build_pool(g: &Graph, splits: &Splits, target: &ModelParams, cfg: &PoolConfig, level: Level) -> Result<ModelPool> {
    let h = target.hidden_dim();
    let adj = normalized_adjacency(g);
    let clean = forward(target, &adj, g.features(), None)?;

    let mut in_train = vec![false; g.num_nodes()];
    for &v in &splits.train {
        in_train[v] = true;
    }
    let universe: Vec<usize> = (0..g.num_nodes()).filter(|&v| !in_train[v]).collect();
    let qcfg = QueryConfig {
        seed: seed::derive(cfg.seed, "query"),
        ..cfg.query
    };
    let query = build_query_set(&clean.logits, &universe, &qcfg)?;

    // the attacker sees shifted features when distribution shift is on
    let attacker_graph = if cfg.shift_sigma > 0.0 {
        let x = shift_queries(g.features(), &query, cfg.shift_sigma, seed::derive(cfg.seed, "shift"))?;
        g.with_features(x)?
    } else {
        g.clone()
    };
    let responses = QueryResponses::collect(target, &attacker_graph, query.clone())?;
    let mut queried = vec![false; g.num_nodes()];
    for &v in &query {
        queried[v] = true;
    }
    let unseen: Vec<usize> = universe.iter().copied().filter(|&v| !queried[v]).collect();

    let surrogates = (0..cfg.surrogates)
        .into_par_iter()
        .map(|i| {
            let s = seed::derive(cfg.seed, &format!("surrogate/{i}"));
            let acfg = AttackConfig {
                train: TrainConfig { seed: s, ..cfg.attack.train },
                ..cfg.attack
            };
            let p = match level {
                Level::Emb => extract_embedding_level(&responses, &attacker_graph, h, &acfg)?,
                Level::Label => extract_label_level(&responses, &attacker_graph, h, &acfg)?,
            };
            let p = apply_removal(&p, cfg.removal, g, &unseen, seed::derive(s, "removal"))?;
            Ok(PoolMember {
                id: format!("surrogate_{i}"),
                params: p.with_provenance(Provenance::Surrogate),
                seed: s,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let independents = (0..cfg.independents)
        .into_par_iter()
        .map(|j| {
            let s = seed::derive(cfg.seed, &format!("independent/{j}"));
            let width = match level {
                Level::Emb => h,
                Level::Label if cfg.independent_dims.is_empty() => h,
                Level::Label => cfg.independent_dims[j % cfg.independent_dims.len()],
            };
            let tcfg = TrainConfig { seed: s, ..cfg.attack.train };
            let p = train_independent(g, splits, width, &tcfg)?;
            Ok(PoolMember {
                id: format!("independent_{j}"),
                params: p,
                seed: s,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ModelPool {
        level,
        query,
        surrogates,
        independents,
    })
}
