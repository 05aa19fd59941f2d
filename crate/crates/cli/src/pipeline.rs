//! Experiment stages, in memory. The `commands` module wraps these with
//! artifact reading and writing.
//!
//! Every stage seed is `seed::derive(master_seed, tag)` with the tags listed
//! in [`STAGE_TAGS`]; seeds inside a stage derive from the stage seed.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use cited_core::bounds::{agreement_check, empirical_perturbation_check, BoundReport};
use cited_core::extraction::{build_pool, AttackConfig, ModelPool, PoolConfig};
use cited_core::io::{read_json, Dataset};
use cited_core::nn::{evaluate, finetune, train};
use cited_core::signature::select_signature;
use cited_core::verify::{score_model, summarize, w2_sinkhorn, MatchScore};
use cited_core::{
    forward, normalized_adjacency, sbm_generate, seed, Graph, Level, ModelParams, Provenance, SignatureSet, Splits,
    TrainConfig, VerificationReport,
};

use crate::config::{DatasetSource, ExperimentConfig};
use crate::error::CliError;

pub const STAGE_TAGS: [&str; 7] = [
    "dataset",
    "target",
    "finetune",
    "control",
    "pool",
    "bounds/perturbation",
    "bounds/agreement",
];

/// All stage seeds of a run, keyed by tag.
pub fn stage_seeds(master: u64) -> BTreeMap<String, u64> {
    STAGE_TAGS.iter().map(|t| (t.to_string(), seed::derive(master, t))).collect()
}

/// Runs `f` on a rayon pool sized by `cfg.workers`.
pub fn with_workers<T: Send>(cfg: &ExperimentConfig, f: impl FnOnce() -> T + Send) -> T {
    match cfg.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

/// Generates the SBM instance or loads the configured dataset file.
pub fn load_or_generate(cfg: &ExperimentConfig) -> Result<(Graph, Splits), CliError> {
    match &cfg.dataset {
        DatasetSource::Sbm(s) => {
            let s = cited_core::SbmConfig {
                seed: seed::derive(cfg.master_seed, "dataset"),
                ..s.clone()
            };
            Ok(sbm_generate(&s)?)
        }
        DatasetSource::File { path } => read_dataset(path),
    }
}

pub fn read_dataset(path: &Path) -> Result<(Graph, Splits), CliError> {
    if !path.exists() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    let d: Dataset = read_json(path)?;
    Ok(d.into_graph()?)
}

/// The deployed model and its ownership credentials.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRun {
    pub model: ModelParams,
    pub val_before: f64,
    pub val_after: f64,
    pub test_after: f64,
    pub boundary: Vec<usize>,
    pub threshold: Option<f64>,
    pub signature: SignatureSet,
    /// Uniformly drawn node set of the signature's size, frozen the same way.
    pub control: SignatureSet,
}

/// Train, select the signature, fine-tune on the task labels, then freeze
/// the fine-tuned model's outputs on the signature.
pub fn train_target(cfg: &ExperimentConfig, g: &Graph, splits: &Splits) -> Result<TargetRun, CliError> {
    let tcfg = TrainConfig {
        seed: seed::derive(cfg.master_seed, "target"),
        ..cfg.model.train
    };
    let (pre, _) = train(g, splits, cfg.model.hidden, &tcfg)?;
    let pre = pre.with_provenance(Provenance::Target);
    let val_before = evaluate(&pre, g, &splits.val)?;
    let adj = normalized_adjacency(g);
    let sel = select_signature(&forward(&pre, &adj, g.features(), None)?, g, &cfg.signature)?;

    let fcfg = TrainConfig {
        epochs: cfg.model.finetune_epochs,
        seed: seed::derive(cfg.master_seed, "finetune"),
        ..cfg.model.train
    };
    let model = finetune(&pre, g, splits, &fcfg)?;
    let val_after = evaluate(&model, g, &splits.val)?;
    let test_after = evaluate(&model, g, &splits.test)?;
    let out = forward(&model, &adj, g.features(), None)?;
    let signature = SignatureSet::freeze(sel.indices, &out)?;

    let all: Vec<usize> = (0..g.num_nodes()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.master_seed, "control"));
    let mut picked: Vec<usize> = all.choose_multiple(&mut rng, signature.len()).copied().collect();
    picked.sort_unstable();
    let control = SignatureSet::freeze(picked, &out)?;

    Ok(TargetRun {
        model,
        val_before,
        val_after,
        test_after,
        boundary: sel.boundary,
        threshold: sel.threshold,
        signature,
        control,
    })
}

pub fn pool_config(cfg: &ExperimentConfig) -> PoolConfig {
    let a = &cfg.attack;
    PoolConfig {
        surrogates: a.surrogates,
        independents: a.independents,
        query: a.query,
        attack: AttackConfig {
            train: a.train,
            head_epochs: a.head_epochs,
            temperature: a.temperature,
        },
        independent_dims: a.independent_dims.clone(),
        removal: a.removal,
        shift_sigma: a.shift_sigma,
        seed: seed::derive(cfg.master_seed, "pool"),
    }
}

/// One pool per configured level.
pub fn build_pools(cfg: &ExperimentConfig, g: &Graph, splits: &Splits, target: &ModelParams) -> Result<Vec<ModelPool>, CliError> {
    let pcfg = pool_config(cfg);
    let mut pools = Vec::new();
    for &level in &cfg.attack.levels {
        let level_cfg = PoolConfig {
            seed: seed::derive(pcfg.seed, level.as_str()),
            ..pcfg.clone()
        };
        pools.push(with_workers(cfg, || build_pool(g, splits, target, &level_cfg, level))?);
    }
    Ok(pools)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignatureKind {
    Boundary,
    RandomControl,
}

impl SignatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SignatureKind::Boundary => "boundary",
            SignatureKind::RandomControl => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelOutcome {
    pub level: Level,
    pub kind: SignatureKind,
    pub signature_size: usize,
    pub report: VerificationReport,
    /// Sinkhorn estimates aligned with `report.scores`, embedding level only.
    pub sinkhorn: Option<Vec<f64>>,
}

/// Scores every pool member against the boundary signature (and the random
/// control when enabled).
pub fn verify_pools(
    cfg: &ExperimentConfig,
    g: &Graph,
    signature: &SignatureSet,
    control: &SignatureSet,
    pools: &[ModelPool],
) -> Result<Vec<LevelOutcome>, CliError> {
    let adj = normalized_adjacency(g);
    let mut kinds = vec![(SignatureKind::Boundary, signature)];
    if cfg.verify.random_control {
        kinds.push((SignatureKind::RandomControl, control));
    }
    let mut outcomes = Vec::new();
    for pool in pools {
        for &(kind, sig) in &kinds {
            let members: Vec<_> = pool.members().collect();
            let scored = with_workers(cfg, || {
                members
                    .par_iter()
                    .map(|m| {
                        let v = score_model(&m.params, &adj, g.features(), sig, pool.level)?;
                        let sk = if cfg.verify.use_sinkhorn && pool.level == Level::Emb {
                            let emb = forward(&m.params, &adj, g.features(), None)?.embeddings.select_rows(&sig.indices);
                            let r = w2_sinkhorn(&emb, &sig.ref_embeddings, cfg.verify.sinkhorn_eps, cfg.verify.sinkhorn_iters)?;
                            Some(r.value)
                        } else {
                            None
                        };
                        Ok((MatchScore::new(m.id.clone(), m.params.provenance, pool.level, v), sk))
                    })
                    .collect::<cited_core::Result<Vec<_>>>()
            })?;
            let (scores, sk): (Vec<MatchScore>, Vec<Option<f64>>) = scored.into_iter().unzip();
            let sinkhorn = sk.into_iter().collect::<Option<Vec<f64>>>();
            outcomes.push(LevelOutcome {
                level: pool.level,
                kind,
                signature_size: sig.len(),
                report: summarize(scores, pool.level, cfg.verify.thresholds),
                sinkhorn,
            });
        }
    }
    Ok(outcomes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsOutcome {
    /// Embedding deviation against Δ_G (two propagation layers).
    pub perturbation: BoundReport,
    /// Prediction agreement (all three weight matrices) per named node set.
    pub agreement: Vec<(String, BoundReport)>,
}

impl BoundsOutcome {
    /// Agreement may fall short of the bound by at most one trial's worth.
    pub fn agreement_holds(&self) -> bool {
        self.agreement.iter().all(|(_, r)| {
            let slack = if r.trials > 0 { 1.0 / r.trials as f64 } else { 0.0 };
            match (r.empirical_agreement, r.theoretical_agreement_lb) {
                (Some(e), Some(lb)) => e + slack >= lb,
                _ => true,
            }
        })
    }
}

pub fn check_bounds(
    cfg: &ExperimentConfig,
    g: &Graph,
    splits: &Splits,
    p: &ModelParams,
    signature: &SignatureSet,
) -> Result<BoundsOutcome, CliError> {
    let trials = cfg.bounds.trials;
    let eta_emb = cfg.bounds.eta.unwrap_or(1.0 / (2.0 * 2.0));
    let eta_logit = cfg.bounds.eta.unwrap_or(1.0 / (2.0 * 3.0));
    with_workers(cfg, || {
        let perturbation = empirical_perturbation_check(
            p,
            g,
            eta_emb,
            trials,
            seed::derive(cfg.master_seed, "bounds/perturbation"),
        )?;
        let all: Vec<usize> = (0..g.num_nodes()).collect();
        let sets: [(&str, &[usize]); 3] = [
            ("all", &all),
            ("signature", &signature.indices),
            ("test", &splits.test),
        ];
        let agreement_seed = seed::derive(cfg.master_seed, "bounds/agreement");
        let mut agreement = Vec::new();
        for (name, nodes) in sets {
            if nodes.is_empty() {
                continue;
            }
            agreement.push((name.to_string(), agreement_check(p, g, nodes, eta_logit, trials, agreement_seed)?));
        }
        Ok(BoundsOutcome {
            perturbation,
            agreement,
        })
    })
}
