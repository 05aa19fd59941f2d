//! End-to-end runs of the `cited` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance.json")
}

fn cited(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cited"));
    cmd.args(args).env_remove("CITED_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn run_stage(stage: &str, config: &Path, out: &Path) -> Output {
    cited(&[stage, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()], &[])
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(config_path()).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |v| v["attack"]["temperature"] = 0.0.into());
    let o = run_stage("train", &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("attack.temperature"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), |v| v["bogus"] = 1.into());
    let o = run_stage("train", &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));

    let o = cited(&["pipeline"], &[]);
    assert_eq!(o.status.code(), Some(2));

    let o = cited(&["train", "--config", config_path().to_str().unwrap()], &[("CITED_SEED", "seven")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("CITED_SEED"));
}

#[test]
fn missing_artifacts_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let absent = dir.path().join("nowhere.json");
    let o = run_stage("train", &absent, dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("nowhere.json"));

    let out = dir.path().join("empty");
    let o = run_stage("verify", &config_path(), &out);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("dataset.json"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), |v| v["dataset"] = serde_json::json!({"path": "/no/such/graph.json"}));
    let o = run_stage("gen-data", &cfg, &out);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("/no/such/graph.json"));
}

#[test]
fn pipeline_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run_stage("pipeline", &config_path(), out);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert!(fa.len() >= 10);
    assert_eq!(fa, fb);

    let summary = fs::read_to_string(a.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert!(header.contains(&"aruc") && header.contains(&"auc"));
    let levels: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert!(levels.contains(&"emb") && levels.contains(&"label"));

    let manifest: Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    for stage in ["gen-data", "train", "attack", "verify", "bounds"] {
        assert!(manifest["artifacts"][stage].is_array(), "{stage} missing from manifest");
    }
}

#[test]
fn stages_match_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (whole, staged) = (dir.path().join("whole"), dir.path().join("staged"));
    assert!(run_stage("pipeline", &config_path(), &whole).status.success());
    for stage in ["gen-data", "train", "attack", "verify", "bounds"] {
        let o = run_stage(stage, &config_path(), &staged);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    assert_eq!(csv_files(&whole), csv_files(&staged));
}

#[test]
fn environment_seed_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = config_path();
    let args = ["gen-data", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "9"];
    assert!(cited(&args, &[("CITED_SEED", "7")]).status.success());
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["master_seed"], 7);
    assert!(cited(&args, &[]).status.success());
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["master_seed"], 9);
}

#[test]
fn poisoned_labels_leave_surrogates_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let (clean, dirty) = (dir.path().join("clean"), dir.path().join("dirty"));
    for out in [&clean, &dirty] {
        for stage in ["gen-data", "train"] {
            assert!(run_stage(stage, &config_path(), out).status.success());
        }
    }
    let path = dirty.join("dataset.json");
    let mut d: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let classes = d["num_classes"].as_u64().unwrap();
    for y in d["labels"].as_array_mut().unwrap() {
        *y = ((y.as_u64().unwrap() + 1) % classes).into();
    }
    fs::write(&path, serde_json::to_string(&d).unwrap()).unwrap();
    for out in [&clean, &dirty] {
        assert!(run_stage("attack", &config_path(), out).status.success());
    }
    let mut compared = 0;
    for level in ["emb", "label"] {
        for i in 0..5 {
            let rel = format!("models/{level}/surrogate_{i}.json");
            assert_eq!(fs::read(clean.join(&rel)).unwrap(), fs::read(dirty.join(&rel)).unwrap(), "{rel}");
            compared += 1;
        }
    }
    assert_eq!(compared, 10);
    // independents do learn from the labels
    assert_ne!(
        fs::read(clean.join("models/label/independent_0.json")).unwrap(),
        fs::read(dirty.join("models/label/independent_0.json")).unwrap()
    );
}
