//! Full-batch training loops. Every routine owns its optimizer state and RNG.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::backprop::{backward, cross_entropy, distillation, embedding_mse};
use super::model::{
    forward, forward_cached, init_params, sample_dropout_mask, Gradients, ModelParams, Provenance, TrainConfig,
};
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, Graph, SparseMatrix, Splits};
use crate::matrix::DenseMatrix;
use crate::seed;

/// Per-epoch training loss and (when evaluated) validation accuracy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
}

/// What a training run minimizes. Row `i` of any target matrix belongs to
/// `nodes[i]`.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    CrossEntropy {
        nodes: &'a [usize],
        labels: &'a [usize],
    },
    EmbeddingMse {
        nodes: &'a [usize],
        targets: &'a DenseMatrix,
    },
    Distillation {
        nodes: &'a [usize],
        teacher: &'a DenseMatrix,
        temperature: f64,
    },
}

impl Objective<'_> {
    fn nodes(&self) -> &[usize] {
        match self {
            Objective::CrossEntropy { nodes, .. }
            | Objective::EmbeddingMse { nodes, .. }
            | Objective::Distillation { nodes, .. } => nodes,
        }
    }
}

/// Tensors updated by a run, in canonical order.
pub const ALL_TRAINABLE: [bool; 6] = [true; 6];
pub const HEAD_ONLY: [bool; 6] = [false, false, false, false, true, true];

/// Validation nodes and their labels, for the accuracy trace.
pub type EvalSet<'a> = (&'a [usize], &'a [usize]);

/// Loss of `objective` and its exact gradient under a fixed dropout mask.
pub fn objective_grads(
    p: &ModelParams,
    adj: &SparseMatrix,
    x: &DenseMatrix,
    objective: Objective<'_>,
    dropout_mask: Option<&DenseMatrix>,
) -> Result<(f64, Gradients)> {
    if objective.nodes().is_empty() {
        return Err(Error::EmptyMask);
    }
    let cache = forward_cached(p, adj, x, dropout_mask)?;
    let (loss, gz, gh) = match objective {
        Objective::CrossEntropy { nodes, labels } => {
            let (l, g) = cross_entropy(&cache.logits, nodes, labels);
            (l, Some(g), None)
        }
        Objective::EmbeddingMse { nodes, targets } => {
            let (l, g) = embedding_mse(&cache.embeddings, nodes, targets);
            (l, None, Some(g))
        }
        Objective::Distillation {
            nodes,
            teacher,
            temperature,
        } => {
            let (l, g) = distillation(&cache.logits, nodes, teacher, temperature);
            (l, Some(g), None)
        }
    };
    let grads = backward(p, adj, &cache, gz.as_ref(), gh.as_ref(), dropout_mask)?;
    Ok((loss, grads))
}

/// Runs `cfg.epochs` Adam steps on `objective`, starting from `p`.
pub fn fit(
    mut p: ModelParams,
    adj: &SparseMatrix,
    x: &DenseMatrix,
    objective: Objective<'_>,
    cfg: &TrainConfig,
    trainable: &[bool; 6],
    eval: Option<EvalSet<'_>>,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    if objective.nodes().is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, "dropout"));
    let mut adam = AdamState::new(&p);
    let mut hist = TrainHistory::default();
    let n = x.rows();
    // frozen propagation layers see no dropout
    let use_dropout = cfg.dropout > 0.0 && trainable[0];
    for _ in 0..cfg.epochs {
        let mask = use_dropout.then(|| sample_dropout_mask(n, p.hidden_dim(), cfg.dropout, &mut rng));
        let (loss, grads) = objective_grads(&p, adj, x, objective, mask.as_ref())?;
        adam.step(&mut p, &grads, cfg.lr, cfg.weight_decay, trainable);
        hist.loss.push(loss);
        if let Some((nodes, labels)) = eval {
            let out = forward(&p, adj, x, None)?;
            hist.val_accuracy.push(accuracy(&out.predictions(), labels, nodes));
        }
    }
    Ok((p, hist))
}

/// Fraction of `nodes` whose prediction equals the label.
pub fn accuracy(pred: &[usize], labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let hits = nodes.iter().filter(|&&v| pred[v] == labels[v]).count();
    hits as f64 / nodes.len() as f64
}

/// Supervised training from a fresh initialization seeded by `cfg.seed`.
/// Returns the final-epoch parameters.
pub fn train(g: &Graph, splits: &Splits, h: usize, cfg: &TrainConfig) -> Result<(ModelParams, TrainHistory)> {
    let adj = normalized_adjacency(g);
    let p = init_params(g.feature_dim(), h, g.num_classes(), cfg.seed);
    let objective = Objective::CrossEntropy {
        nodes: &splits.train,
        labels: g.labels(),
    };
    let eval = (!splits.val.is_empty()).then_some((splits.val.as_slice(), g.labels()));
    let (mut p, hist) = fit(p, &adj, g.features(), objective, cfg, &ALL_TRAINABLE, eval)?;
    p.training = Some(*cfg);
    Ok((p, hist))
}

/// Warm-started supervised training on `splits.train` with a fresh Adam state.
pub fn finetune(p: &ModelParams, g: &Graph, splits: &Splits, cfg: &TrainConfig) -> Result<ModelParams> {
    finetune_on(p, g, &splits.train, g.labels(), cfg)
}

/// Warm-started cross-entropy training on arbitrary `(nodes, labels)`.
pub fn finetune_on(
    p: &ModelParams,
    g: &Graph,
    nodes: &[usize],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    if cfg.epochs == 0 {
        return Ok(p.clone());
    }
    let adj = normalized_adjacency(g);
    let objective = Objective::CrossEntropy { nodes, labels };
    let (out, _) = fit(p.clone(), &adj, g.features(), objective, cfg, &ALL_TRAINABLE, None)?;
    Ok(out)
}

/// Default fine-tuning budget: 50 epochs at the training learning rate.
pub fn finetune_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 50,
        seed,
        ..TrainConfig::default()
    }
}

/// Evaluates accuracy of `p` on `nodes` against the graph's labels.
pub fn evaluate(p: &ModelParams, g: &Graph, nodes: &[usize]) -> Result<f64> {
    let adj = normalized_adjacency(g);
    let out = forward(p, &adj, g.features(), None)?;
    Ok(accuracy(&out.predictions(), g.labels(), nodes))
}

pub fn fresh_model(g: &Graph, h: usize, seed: u64, provenance: Provenance) -> ModelParams {
    init_params(g.feature_dim(), h, g.num_classes(), seed).with_provenance(provenance)
}
