//! End-to-end pipeline and subcommand-surface tests on a small corpus.

use std::fs;
use std::path::PathBuf;

use dpr::cli::{run_cli, run_pipeline, validate_config_str, Artifacts, RunManifest};

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dpr_it_{tag}_{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(out_dir: &std::path::Path) -> String {
    format!(
        "version = 1\nseed = 11\n\n[paths]\nout_dir = {}\n\n[corpus]\nn_patients = 120\nn_drugs = 40\nnote_len = 12\nn_conditions = 3\navg_package_size = 8\n\n[pretrain]\nepochs = 2\nnegative_ratio = 3\nbatch_size = 64\n\n[package_model]\nvariant = dpr-wg\nepochs = 2\nnegative_ratio = 2\nbatch_size = 16\n\n[model]\ndims = compact\n\n[evaluate]\nneighbors = 5\n",
        out_dir.display()
    )
}

#[test]
fn full_pipeline_produces_all_artifacts_and_manifest() {
    let dir = temp_dir("full");
    let cfg = validate_config_str(&small_config(&dir)).unwrap();
    let manifest = run_pipeline(&cfg).unwrap();

    let arts = Artifacts::new(&dir);
    for path in [
        arts.corpus(),
        arts.labels(),
        arts.pretrain_ckpt(),
        arts.model_ckpt(dpr::cli::ModelKind::Weighted),
        arts.metrics(),
        arts.per_patient_metrics(),
        arts.summary(),
        arts.candidates(),
        arts.audit_log(),
        arts.manifest(),
    ] {
        assert!(path.exists(), "missing artifact {}", path.display());
    }
    // Stage timings and metric rows are recorded.
    for stage in ["gen-data", "pretrain", "train", "evaluate", "generate"] {
        assert!(manifest.timings.contains_key(stage), "no timing for {stage}");
    }
    assert!(manifest.metrics.contains_key("ncf-topk"));
    assert!(manifest.metrics.contains_key("dpr-wg"));
    assert!(!manifest.corpus_fingerprint.is_empty());
    // Every listed file hash matches the bytes on disk.
    for (rel, hash) in &manifest.files {
        let bytes = fs::read(dir.join(rel)).unwrap();
        assert_eq!(&dpr::cli::fingerprint(&bytes), hash, "hash mismatch for {rel}");
    }
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn rerunning_with_identical_config_reproduces_metrics() {
    let dir = temp_dir("repro");
    let cfg = validate_config_str(&small_config(&dir)).unwrap();
    let first = run_pipeline(&cfg).unwrap();
    let second = run_pipeline(&cfg).unwrap();
    assert_eq!(first.corpus_fingerprint, second.corpus_fingerprint);
    assert_eq!(first.checkpoints, second.checkpoints);
    for (name, m) in &first.metrics {
        let m2 = second.metrics[name];
        assert_eq!(m.precision, m2.precision, "{name} precision");
        assert_eq!(m.recall, m2.recall, "{name} recall");
        assert_eq!(m.f1, m2.f1, "{name} f1");
    }
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn evaluate_before_train_refuses_with_actionable_error() {
    let dir = temp_dir("order");
    let cfg = validate_config_str(&small_config(&dir)).unwrap();
    dpr::cli::pipeline::stage_gen_data(&cfg).unwrap();
    let err = dpr::cli::pipeline::stage_evaluate(&cfg).unwrap_err().to_string();
    assert!(err.contains("pretrain"), "error should name the missing stage: {err}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn cli_exit_codes_follow_the_contract() {
    let dir = temp_dir("cli");
    // Unknown command -> validation failure (1).
    assert_eq!(run_cli(vec!["frobnicate".into()]), 1);
    // Config validation error -> 1.
    let bad = dir.join("bad.conf");
    fs::write(&bad, "version = 1\n[package_model]\ntreshold = 0.5\n").unwrap();
    assert_eq!(
        run_cli(vec![
            "gen-data".into(),
            "--config".into(),
            bad.display().to_string()
        ]),
        1
    );
    // Missing upstream artifact -> runtime failure (2).
    let conf = dir.join("ok.conf");
    fs::write(&conf, small_config(&dir.join("run"))).unwrap();
    assert_eq!(
        run_cli(vec![
            "evaluate".into(),
            "--config".into(),
            conf.display().to_string()
        ]),
        2
    );
    // Happy path subcommands -> 0.
    assert_eq!(
        run_cli(vec![
            "gen-data".into(),
            "--config".into(),
            conf.display().to_string()
        ]),
        0
    );
    assert_eq!(
        run_cli(vec![
            "pretrain".into(),
            "--config".into(),
            conf.display().to_string()
        ]),
        0
    );
    assert_eq!(
        run_cli(vec![
            "train-wg".into(),
            "--config".into(),
            conf.display().to_string(),
            "--epochs".into(),
            "1".into(),
        ]),
        0
    );
    assert_eq!(
        run_cli(vec![
            "evaluate".into(),
            "--config".into(),
            conf.display().to_string()
        ]),
        0
    );
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn export_edges_requires_the_attributed_variant() {
    let dir = temp_dir("edges");
    let cfg = validate_config_str(&small_config(&dir)).unwrap();
    let err = dpr::cli::pipeline::stage_export_edges(&cfg)
        .unwrap_err()
        .to_string();
    assert!(err.contains("dpr-ag"), "{err}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn checkpoints_reload_into_working_models() {
    let dir = temp_dir("reload");
    let cfg = validate_config_str(&small_config(&dir)).unwrap();
    dpr::cli::pipeline::stage_gen_data(&cfg).unwrap();
    dpr::cli::pipeline::stage_pretrain(&cfg).unwrap();
    dpr::cli::pipeline::stage_train(&cfg).unwrap();

    let arts = Artifacts::new(&dir);
    let corpus = dpr::corpus::load_corpus(&arts.corpus(), &arts.labels()).unwrap();
    let pre = dpr::cli::Checkpoint::load(&arts.pretrain_ckpt())
        .unwrap()
        .into_pretrain()
        .unwrap();
    let wg = dpr::cli::Checkpoint::load(&arts.model_ckpt(dpr::cli::ModelKind::Weighted))
        .unwrap()
        .into_weighted()
        .unwrap();
    let u = pre.encode_patient(&corpus.patients[0]);
    let bank = dpr::dpr_wg::GraphBank::build(&corpus, 0.01).unwrap();
    let (graph, weights) = bank.get(0).expect("graph for patient 0");
    let score = wg.score_package(&u, graph, weights);
    assert!(score.is_finite());
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn manifest_loads_back_from_disk() {
    let dir = temp_dir("manifest");
    let cfg = validate_config_str(&small_config(&dir)).unwrap();
    run_pipeline(&cfg).unwrap();
    let manifest = RunManifest::load(&Artifacts::new(&dir).manifest()).unwrap();
    assert_eq!(manifest.seed, 11);
    assert!(manifest.config_echo.contains("version = 1"));
    fs::remove_dir_all(&dir).ok();
}
