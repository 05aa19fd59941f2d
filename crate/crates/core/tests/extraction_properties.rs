//! Attack simulation: what surrogates may see, how closely they mimic the
//! target, and reproducibility of the pool.

mod common;

use cited_core::extraction::{
    apply_removal, build_pool, extract_embedding_level, extract_label_level, train_independent, AttackConfig,
    PoolConfig, QueryConfig, QueryResponses, RemovalKind,
};
use cited_core::nn::{evaluate, train};
use cited_core::{forward, normalized_adjacency, sbm_generate, Error, Graph, Level, ModelParams, Provenance, Splits, TrainConfig};

fn target(seed: u64) -> (Graph, Splits, ModelParams) {
    let (g, splits) = sbm_generate(&common::acceptance_sbm(seed)).unwrap();
    let (p, _) = train(&g, &splits, 16, &TrainConfig { seed, ..TrainConfig::default() }).unwrap();
    (g, splits, p)
}

fn pool_cfg(seed: u64) -> PoolConfig {
    PoolConfig {
        surrogates: 2,
        independents: 2,
        query: QueryConfig {
            total: 60,
            boundary_fraction: 0.2,
            seed: 0,
        },
        attack: AttackConfig {
            train: TrainConfig { epochs: 60, ..TrainConfig::default() },
            ..AttackConfig::default()
        },
        independent_dims: vec![8, 16],
        removal: RemovalKind::None,
        shift_sigma: 0.0,
        seed,
    }
}

#[test]
fn surrogates_ignore_ground_truth_labels() {
    let (g, splits, p) = target(42);
    let cfg = pool_cfg(1);
    let poisoned: Vec<usize> = g.labels().iter().map(|&y| (y + 1) % g.num_classes()).collect();
    let gp = g.with_labels(poisoned).unwrap();
    for level in [Level::Emb, Level::Label] {
        let clean = build_pool(&g, &splits, &p, &cfg, level).unwrap();
        let dirty = build_pool(&gp, &splits, &p, &cfg, level).unwrap();
        assert_eq!(clean.query, dirty.query);
        for (a, b) in clean.surrogates.iter().zip(&dirty.surrogates) {
            assert_eq!(a.params, b.params, "{level} {}", a.id);
        }
    }
}

#[test]
fn pool_is_independent_of_thread_count() {
    let (g, splits, p) = target(42);
    let cfg = pool_cfg(3);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| build_pool(&g, &splits, &p, &cfg, Level::Label).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
    assert!(one.surrogates.iter().all(|m| m.params.provenance == Provenance::Surrogate));
    assert!(one.independents.iter().all(|m| m.params.provenance == Provenance::Independent));
    assert_eq!(one.independents[0].params.hidden_dim(), 8);
    assert_eq!(one.independents[1].params.hidden_dim(), 16);
}

#[test]
fn embedding_width_must_match() {
    let (g, _, p) = target(42);
    let r = QueryResponses::collect(&p, &g, vec![0, 5, 9]).unwrap();
    let err = extract_embedding_level(&r, &g, 8, &AttackConfig::default()).unwrap_err();
    assert!(matches!(err, Error::DimMismatch { suspect: 8, reference: 16 }));
}

fn mse(p: &ModelParams, g: &Graph, r: &QueryResponses) -> f64 {
    let out = forward(p, &normalized_adjacency(g), g.features(), None).unwrap();
    let got = out.embeddings.select_rows(&r.nodes);
    let mut diff = got.clone();
    diff.add_scaled(&r.embeddings, -1.0);
    diff.frobenius_norm().powi(2) / got.as_slice().len() as f64
}

#[test]
fn embedding_regression_converges_on_full_queries() {
    let (g, _, p) = target(42);
    let r = QueryResponses::collect(&p, &g, (0..g.num_nodes()).collect()).unwrap();
    let short = AttackConfig {
        train: TrainConfig { epochs: 0, seed: 4, ..TrainConfig::default() },
        head_epochs: 0,
        ..AttackConfig::default()
    };
    let init = extract_embedding_level(&r, &g, 16, &short).unwrap();
    let long = AttackConfig {
        train: TrainConfig { epochs: 1000, seed: 4, ..TrainConfig::default() },
        ..AttackConfig::default()
    };
    let fitted = extract_embedding_level(&r, &g, 16, &long).unwrap();
    let (a, b) = (mse(&init, &g, &r), mse(&fitted, &g, &r));
    assert!(b < 0.1 * a, "mse {a} -> {b}");
}

#[test]
fn distillation_matches_teacher_labels() {
    let (g, splits, p) = target(42);
    let query: Vec<usize> = (0..g.num_nodes()).filter(|v| !splits.train.contains(v)).take(60).collect();
    let r = QueryResponses::collect(&p, &g, query.clone()).unwrap();
    let s = extract_label_level(&r, &g, 16, &AttackConfig::default()).unwrap();
    let out = forward(&s, &normalized_adjacency(&g), g.features(), None).unwrap();
    let agree = query
        .iter()
        .enumerate()
        .filter(|&(i, &v)| out.logits.row_argmax(v) == r.logits.row_argmax(i))
        .count() as f64
        / query.len() as f64;
    assert!(agree >= 0.9, "agreement {agree}");
}

#[test]
fn independents_reach_target_accuracy() {
    let (g, splits, p) = target(42);
    let target_acc = evaluate(&p, &g, &splits.val).unwrap();
    for seed in [11, 12] {
        let q = train_independent(&g, &splits, 16, &TrainConfig { seed, ..TrainConfig::default() }).unwrap();
        assert_eq!(q.provenance, Provenance::Independent);
        let acc = evaluate(&q, &g, &splits.val).unwrap();
        assert!((acc - target_acc).abs() <= 0.1, "{acc} vs {target_acc}");
    }
}

#[test]
fn removal_kinds() {
    let (g, splits, p) = target(42);
    let unseen = &splits.test;
    assert_eq!(apply_removal(&p, RemovalKind::None, &g, unseen, 0).unwrap(), p);
    let pruned = apply_removal(&p, RemovalKind::Prune30, &g, unseen, 0).unwrap();
    let zeros = |m: &ModelParams| m.weight_matrices().iter().map(|w| w.as_slice().iter().filter(|&&x| x == 0.0).count()).sum::<usize>();
    let total: usize = p.weight_matrices().iter().map(|w| w.as_slice().len()).sum();
    assert_eq!(zeros(&pruned) - zeros(&p), (0.3 * total as f64).round() as usize);
    let a = apply_removal(&p, RemovalKind::Finetune, &g, unseen, 5).unwrap();
    let b = apply_removal(&p, RemovalKind::Finetune, &g, unseen, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, p);
}
