//! Subcommands: each reads its inputs from the output directory, runs one
//! stage and writes its artifacts atomically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cited_core::extraction::{ModelPool, PoolMember};
use cited_core::io::{format_real, read_json, write_atomic, write_json, Dataset};
use cited_core::{Graph, Level, ModelParams, Provenance, SignatureSet, Splits};

use crate::config::{DatasetSource, ExperimentConfig};
use crate::error::CliError;
use crate::pipeline::{self, BoundsOutcome, LevelOutcome};

/// Artifact locations under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn model(level: Level, id: &str) -> String {
        format!("models/{level}/{id}.json")
    }

    pub fn report(level: Level, kind: &str) -> String {
        format!("report_{level}_{kind}.csv")
    }

    pub fn curve(level: Level, kind: &str) -> String {
        format!("curve_{level}_{kind}.csv")
    }
}

pub const DATASET: &str = "dataset.json";
pub const TARGET: &str = "target.json";
pub const SIGNATURE: &str = "signature.json";
pub const CONTROL: &str = "control_signature.json";
pub const TARGET_REPORT: &str = "target_report.json";
pub const POOL_MANIFEST: &str = "pool_manifest.json";
pub const SUMMARY: &str = "summary.csv";
pub const BOUNDS_CSV: &str = "bounds.csv";
pub const BOUNDS_SUMMARY: &str = "bounds_summary.json";
pub const MANIFEST: &str = "manifest.json";

/// Links every artifact written so far with the run's seeds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    /// Artifact paths relative to the output directory, keyed by stage.
    pub artifacts: BTreeMap<String, Vec<String>>,
}

fn record(layout: &Layout, cfg: &ExperimentConfig, stage: &str, files: Vec<String>) -> Result<(), CliError> {
    let path = layout.path(MANIFEST);
    let mut m: Manifest = if path.exists() { read_json(&path)? } else { Manifest::default() };
    if m.master_seed != cfg.master_seed {
        m = Manifest::default();
    }
    m.master_seed = cfg.master_seed;
    m.seeds = pipeline::stage_seeds(cfg.master_seed);
    m.artifacts.insert(stage.to_string(), files);
    write_json(&path, &m)?;
    Ok(())
}

fn require<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    if !path.exists() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    Ok(read_json(path)?)
}

fn dataset_for(cfg: &ExperimentConfig, layout: &Layout) -> Result<(Graph, Splits), CliError> {
    match &cfg.dataset {
        DatasetSource::File { path } => pipeline::read_dataset(path),
        DatasetSource::Sbm(_) => pipeline::read_dataset(&layout.path(DATASET)),
    }
}

pub fn cmd_gen_data(cfg: &ExperimentConfig, layout: &Layout) -> Result<(), CliError> {
    let (g, splits) = pipeline::load_or_generate(cfg)?;
    write_json(&layout.path(DATASET), &Dataset::from_graph(&g, &splits))?;
    record(layout, cfg, "gen-data", vec![DATASET.into()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub val_accuracy_before_finetune: f64,
    pub val_accuracy_after_finetune: f64,
    pub test_accuracy: f64,
    pub boundary_size: usize,
    pub signature_size: usize,
    pub score_threshold: Option<f64>,
    pub commitment: String,
}

pub fn cmd_train(cfg: &ExperimentConfig, layout: &Layout) -> Result<(), CliError> {
    let (g, splits) = dataset_for(cfg, layout)?;
    let run = pipeline::train_target(cfg, &g, &splits)?;
    write_json(&layout.path(TARGET), &run.model)?;
    write_json(&layout.path(SIGNATURE), &run.signature)?;
    write_json(&layout.path(CONTROL), &run.control)?;
    let report = TargetReport {
        val_accuracy_before_finetune: run.val_before,
        val_accuracy_after_finetune: run.val_after,
        test_accuracy: run.test_after,
        boundary_size: run.boundary.len(),
        signature_size: run.signature.len(),
        score_threshold: run.threshold,
        commitment: format!("{:016x}", run.signature.commitment),
    };
    write_json(&layout.path(TARGET_REPORT), &report)?;
    record(
        layout,
        cfg,
        "train",
        vec![TARGET.into(), SIGNATURE.into(), CONTROL.into(), TARGET_REPORT.into()],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub id: String,
    pub provenance: Provenance,
    pub seed: u64,
    pub hidden: usize,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub level: Level,
    pub query: Vec<usize>,
    pub members: Vec<MemberEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolManifest {
    pub pools: Vec<PoolEntry>,
}

pub fn cmd_attack(cfg: &ExperimentConfig, layout: &Layout) -> Result<(), CliError> {
    let (g, splits) = dataset_for(cfg, layout)?;
    let target: ModelParams = require(&layout.path(TARGET))?;
    let pools = pipeline::build_pools(cfg, &g, &splits, &target)?;
    let mut files = vec![POOL_MANIFEST.to_string()];
    let mut entries = Vec::new();
    for pool in &pools {
        let mut members = Vec::new();
        for m in pool.members() {
            let rel = Layout::model(pool.level, &m.id);
            write_json(&layout.path(&rel), &m.params)?;
            members.push(MemberEntry {
                id: m.id.clone(),
                provenance: m.params.provenance,
                seed: m.seed,
                hidden: m.params.hidden_dim(),
                path: rel.clone(),
            });
            files.push(rel);
        }
        entries.push(PoolEntry {
            level: pool.level,
            query: pool.query.clone(),
            members,
        });
    }
    write_json(&layout.path(POOL_MANIFEST), &PoolManifest { pools: entries })?;
    record(layout, cfg, "attack", files)
}

fn load_pools(layout: &Layout) -> Result<Vec<ModelPool>, CliError> {
    let manifest: PoolManifest = require(&layout.path(POOL_MANIFEST))?;
    let mut pools = Vec::new();
    for entry in manifest.pools {
        let mut surrogates = Vec::new();
        let mut independents = Vec::new();
        for m in entry.members {
            let params: ModelParams = require(&layout.path(&m.path))?;
            let member = PoolMember {
                id: m.id,
                params,
                seed: m.seed,
            };
            match m.provenance {
                Provenance::Independent => independents.push(member),
                _ => surrogates.push(member),
            }
        }
        pools.push(ModelPool {
            level: entry.level,
            query: entry.query,
            surrogates,
            independents,
        });
    }
    Ok(pools)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))
}

pub fn report_csv(o: &LevelOutcome) -> Result<Vec<u8>, CliError> {
    let mut header = vec!["model_id", "provenance", "level", "raw_score", "normalized_score"];
    if o.sinkhorn.is_some() {
        header.push("sinkhorn_score");
    }
    let rows = o.report.scores.iter().enumerate().map(|(i, s)| {
        let mut r = vec![
            s.model_id.clone(),
            s.provenance.as_str().to_string(),
            s.level.to_string(),
            format_real(s.value),
            format_real(s.normalized),
        ];
        if let Some(sk) = &o.sinkhorn {
            r.push(format_real(sk[i]));
        }
        r
    });
    csv_bytes(&header, rows)
}

pub fn curve_csv(o: &LevelOutcome) -> Result<Vec<u8>, CliError> {
    let c = &o.report.curve;
    let rows = (0..c.thresholds.len()).map(|i| {
        vec![
            format_real(c.thresholds[i]),
            format_real(c.robustness[i]),
            format_real(c.uniqueness[i]),
            format_real(c.robustness[i].min(c.uniqueness[i])),
        ]
    });
    csv_bytes(&["tau", "robustness", "uniqueness", "min"], rows)
}

pub fn summary_csv(outcomes: &[LevelOutcome], master_seed: u64) -> Result<Vec<u8>, CliError> {
    let rows = outcomes.iter().map(|o| {
        vec![
            o.level.to_string(),
            o.kind.as_str().to_string(),
            o.signature_size.to_string(),
            format_real(o.report.aruc),
            format_real(o.report.auc),
            o.report.count(Provenance::Surrogate).to_string(),
            o.report.count(Provenance::Independent).to_string(),
            master_seed.to_string(),
        ]
    });
    csv_bytes(
        &["level", "signature", "size", "aruc", "auc", "surrogates", "independents", "master_seed"],
        rows,
    )
}

pub fn cmd_verify(cfg: &ExperimentConfig, layout: &Layout) -> Result<Vec<LevelOutcome>, CliError> {
    let (g, _) = dataset_for(cfg, layout)?;
    let signature: SignatureSet = require(&layout.path(SIGNATURE))?;
    let control: SignatureSet = require(&layout.path(CONTROL))?;
    signature.validate()?;
    control.validate()?;
    let pools = load_pools(layout)?;
    let outcomes = pipeline::verify_pools(cfg, &g, &signature, &control, &pools)?;
    let mut files = Vec::new();
    for o in &outcomes {
        let kind = o.kind.as_str();
        let report = Layout::report(o.level, kind);
        write_atomic(&layout.path(&report), &report_csv(o)?)?;
        let curve = Layout::curve(o.level, kind);
        write_atomic(&layout.path(&curve), &curve_csv(o)?)?;
        files.push(report);
        files.push(curve);
    }
    write_atomic(&layout.path(SUMMARY), &summary_csv(&outcomes, cfg.master_seed)?)?;
    files.push(SUMMARY.into());
    record(layout, cfg, "verify", files)?;
    Ok(outcomes)
}

pub fn bounds_csv(b: &BoundsOutcome) -> Result<Vec<u8>, CliError> {
    let p = &b.perturbation;
    let all = b.agreement.first().map(|(_, r)| &r.agreements);
    let rows = (0..p.trials).map(|t| {
        vec![
            t.to_string(),
            format_real(p.deviations[t]),
            format_real(p.delta_g),
            format_real(p.sigma2),
            all.and_then(|a| a.get(t)).map_or_else(String::new, |&a| format_real(a)),
        ]
    });
    csv_bytes(&["trial", "deviation", "delta_g", "sigma2", "agreement"], rows)
}

#[derive(Debug, Clone, Serialize)]
struct BoundsSummary<'a> {
    perturbation: &'a cited_core::bounds::BoundReport,
    agreement: BTreeMap<&'a str, &'a cited_core::bounds::BoundReport>,
    deviation_ratio: f64,
    agreement_holds: bool,
}

/// Writes the bound artifacts, then fails with an invariant error when the
/// deviation bound or the agreement bound is violated.
pub fn cmd_bounds(cfg: &ExperimentConfig, layout: &Layout) -> Result<BoundsOutcome, CliError> {
    let (g, splits) = dataset_for(cfg, layout)?;
    let target: ModelParams = require(&layout.path(TARGET))?;
    let signature: SignatureSet = require(&layout.path(SIGNATURE))?;
    let outcome = pipeline::check_bounds(cfg, &g, &splits, &target, &signature)?;
    write_atomic(&layout.path(BOUNDS_CSV), &bounds_csv(&outcome)?)?;
    let p = &outcome.perturbation;
    let summary = BoundsSummary {
        perturbation: p,
        agreement: outcome.agreement.iter().map(|(k, r)| (k.as_str(), r)).collect(),
        deviation_ratio: if p.delta_g > 0.0 { p.max_observed_deviation / p.delta_g } else { 0.0 },
        agreement_holds: outcome.agreement_holds(),
    };
    write_json(&layout.path(BOUNDS_SUMMARY), &summary)?;
    record(layout, cfg, "bounds", vec![BOUNDS_CSV.into(), BOUNDS_SUMMARY.into()])?;
    if p.violations > 0 {
        return Err(CliError::Invariant(format!(
            "{} of {} perturbations exceeded the deviation bound {}",
            p.violations, p.trials, p.delta_g
        )));
    }
    if !outcome.agreement_holds() {
        return Err(CliError::Invariant("prediction agreement fell below its lower bound".into()));
    }
    Ok(outcome)
}

/// All stages in order. Bound artifacts are written even when the bound
/// check then fails.
pub fn cmd_pipeline(cfg: &ExperimentConfig, layout: &Layout) -> Result<(), CliError> {
    cmd_gen_data(cfg, layout)?;
    cmd_train(cfg, layout)?;
    cmd_attack(cfg, layout)?;
    cmd_verify(cfg, layout)?;
    cmd_bounds(cfg, layout)?;
    Ok(())
}
