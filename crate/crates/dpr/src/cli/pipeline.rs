//! Stage orchestration: gen-data, pretrain, train, evaluate, generate, and
//! the export stages, each reading only prior-stage artifacts from the run
//! directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::corpus::{generate_synthetic_corpus, load_corpus, save_corpus, Corpus};
use crate::dpr_ag::{train_ag, AgTrainOptions};
use crate::dpr_wg::{train_wg, GraphBank, WgTrainOptions};
use crate::embedding::pretrain::encode_all;
use crate::embedding::{pretrain, EncoderDims, PretrainModel};
use crate::error::{Error, Result};
use crate::genpkg::{
    frequency_rank, generate_for_patient, personalized_rank, GeneratedCandidate, RankLists,
    RuleFiring,
};
use crate::recommend::{
    candidate_set, evaluate, evaluate_ncf_baseline, evaluate_nn_baseline, evaluate_scorer,
    mean_metrics, rank_candidates, CandidateSource, EvalReport, Metrics, PackageScorer,
};

use super::checkpoint::Checkpoint;
use super::config::{DimPreset, ModelKind, PipelineConfig};
use super::manifest::{fingerprint_file, RunManifest};

/// Artifact locations inside one run directory.
pub struct Artifacts {
    pub root: PathBuf,
}

impl Artifacts {
    pub fn new(root: &Path) -> Self {
        Artifacts {
            root: root.to_path_buf(),
        }
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus.txt")
    }
    pub fn labels(&self) -> PathBuf {
        self.root.join("labels.tsv")
    }
    pub fn pretrain_ckpt(&self) -> PathBuf {
        self.root.join("pretrain.ckpt")
    }
    pub fn model_ckpt(&self, kind: ModelKind) -> PathBuf {
        self.root.join(format!("{}.ckpt", kind.name()))
    }
    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.tsv")
    }
    pub fn per_patient_metrics(&self) -> PathBuf {
        self.root.join("metrics_per_patient.tsv")
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }
    pub fn candidates(&self) -> PathBuf {
        self.root.join("candidates.tsv")
    }
    pub fn audit_log(&self) -> PathBuf {
        self.root.join("generation_audit.tsv")
    }
    pub fn masks(&self) -> PathBuf {
        self.root.join("mask_vectors.tsv")
    }
    pub fn edge_report(&self) -> PathBuf {
        self.root.join("edge_classification.tsv")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    fn require(&self, path: &Path, stage: &str, produced_by: &str) -> Result<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(Error::Stage {
                stage: stage.to_string(),
                reason: format!(
                    "missing {} — run `{produced_by}` first",
                    path.display()
                ),
            })
        }
    }
}

fn load_corpus_artifacts(arts: &Artifacts, stage: &str) -> Result<Corpus> {
    arts.require(&arts.corpus(), stage, "gen-data")?;
    arts.require(&arts.labels(), stage, "gen-data")?;
    load_corpus(&arts.corpus(), &arts.labels())
}

fn encoder_dims(cfg: &PipelineConfig, corpus: &Corpus) -> EncoderDims {
    let vocab = corpus.token_vocab.len() + 2;
    match cfg.dims {
        DimPreset::Reference => EncoderDims::reference(corpus.meta.disease_dim, vocab, corpus.n_drugs()),
        DimPreset::Compact => EncoderDims::compact(corpus.meta.disease_dim, vocab, corpus.n_drugs()),
    }
}

fn package_hidden(cfg: &PipelineConfig) -> usize {
    match cfg.dims {
        DimPreset::Reference => 128,
        DimPreset::Compact => 32,
    }
}

/// Generate the synthetic corpus and write the corpus + label files.
pub fn stage_gen_data(cfg: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    let arts = Artifacts::new(&cfg.out_dir);
    let mut corpus_cfg = cfg.corpus.clone();
    corpus_cfg.seed = cfg.seed;
    let corpus = generate_synthetic_corpus(&corpus_cfg)?;
    save_corpus(&corpus, &arts.corpus(), &arts.labels())?;
    Ok(())
}

/// Pre-train encoder/drug/matching parameters and write the checkpoint.
pub fn stage_pretrain(cfg: &PipelineConfig) -> Result<()> {
    let arts = Artifacts::new(&cfg.out_dir);
    let corpus = load_corpus_artifacts(&arts, "pretrain")?;
    let dims = encoder_dims(cfg, &corpus);
    let mut train_cfg = cfg.pretrain.clone();
    train_cfg.seed = cfg.seed;
    let outcome = pretrain(&corpus, dims, &train_cfg)?;
    let fp = fingerprint_file(&arts.corpus())?;
    Checkpoint::for_pretrain(&outcome.model, &fp, &train_cfg).save(&arts.pretrain_ckpt())?;
    Ok(())
}

fn load_pretrained(arts: &Artifacts, stage: &str) -> Result<PretrainModel> {
    arts.require(&arts.pretrain_ckpt(), stage, "pretrain")?;
    Checkpoint::load(&arts.pretrain_ckpt())?.into_pretrain()
}

/// Train the configured package model and write its checkpoint.
pub fn stage_train(cfg: &PipelineConfig) -> Result<()> {
    let arts = Artifacts::new(&cfg.out_dir);
    let corpus = load_corpus_artifacts(&arts, "train")?;
    let pretrained = load_pretrained(&arts, "train")?;
    let embeddings = encode_all(&pretrained, &corpus);
    let mut train_cfg = cfg.package_train.clone();
    train_cfg.seed = cfg.seed;
    let fp = fingerprint_file(&arts.corpus())?;
    match cfg.model {
        ModelKind::Weighted => {
            let opts = WgTrainOptions {
                train: train_cfg.clone(),
                threshold: cfg.threshold,
                layers: cfg.layers,
                freeze_embeddings: cfg.freeze_embeddings,
                variant: crate::dpr_wg::WgVariant::full(),
                mlp_hidden: package_hidden(cfg),
                factor_dim: None,
            };
            let outcome = train_wg(&corpus, &pretrained, &embeddings, &opts)?;
            Checkpoint::for_weighted(&outcome.model, &fp, &train_cfg)
                .save(&arts.model_ckpt(ModelKind::Weighted))?;
        }
        ModelKind::Attributed => {
            let opts = AgTrainOptions {
                train: train_cfg.clone(),
                threshold: cfg.threshold,
                layers: cfg.layers,
                edge_dim: cfg.edge_dim,
                ce_weight: cfg.ce_weight,
                freeze_embeddings: cfg.freeze_embeddings,
                variant: crate::dpr_ag::AgVariant::full(),
                mlp_hidden: package_hidden(cfg),
            };
            let outcome = train_ag(&corpus, &pretrained, &embeddings, &opts)?;
            Checkpoint::for_attributed(&outcome.model, &fp, &train_cfg)
                .save(&arts.model_ckpt(ModelKind::Attributed))?;
        }
    }
    Ok(())
}

fn metrics_table(rows: &[(String, Metrics)]) -> String {
    let mut out = String::from("model\tprecision\trecall\tf1\n");
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{name}\t{:.6}\t{:.6}\t{:.6}",
            m.precision, m.recall, m.f1
        );
    }
    out
}

/// Evaluate baselines plus the trained model; write the metric table, the
/// per-patient table, and the machine-readable summary.
pub fn stage_evaluate(cfg: &PipelineConfig) -> Result<Vec<(String, Metrics)>> {
    let arts = Artifacts::new(&cfg.out_dir);
    let corpus = load_corpus_artifacts(&arts, "evaluate")?;
    let pretrained = load_pretrained(&arts, "evaluate")?;
    arts.require(&arts.model_ckpt(cfg.model), "evaluate", "train")?;
    let embeddings = encode_all(&pretrained, &corpus);

    let mut rows: Vec<(String, Metrics)> = Vec::new();
    let mut per_patient: Vec<(String, EvalReport)> = Vec::new();

    let ncf = evaluate_ncf_baseline(&corpus, &embeddings, &pretrained)?;
    rows.push(("ncf-topk".into(), ncf.mean));
    per_patient.push(("ncf-topk".into(), ncf));

    let nn = evaluate_nn_baseline(&corpus, &embeddings)?;
    rows.push(("nn".into(), nn.mean));
    per_patient.push(("nn".into(), nn));

    let bank = GraphBank::build(&corpus, cfg.threshold)?;
    let report = match cfg.model {
        ModelKind::Weighted => {
            let model = Checkpoint::load(&arts.model_ckpt(cfg.model))?.into_weighted()?;
            let scorer = PackageScorer::weighted(&model, &bank, &corpus.relation);
            evaluate_scorer(&corpus, &embeddings, &scorer, cfg.neighbors)?
        }
        ModelKind::Attributed => {
            let model = Checkpoint::load(&arts.model_ckpt(cfg.model))?.into_attributed()?;
            let scorer = PackageScorer::attributed(&model, &bank, &corpus.relation);
            evaluate_scorer(&corpus, &embeddings, &scorer, cfg.neighbors)?
        }
    };
    rows.push((cfg.model.name().into(), report.mean));
    per_patient.push((cfg.model.name().into(), report));

    fs::write(arts.metrics(), metrics_table(&rows))?;
    let mut detail = String::from("model\tpatient\tprecision\trecall\tf1\n");
    for (name, report) in &per_patient {
        for (p, m) in &report.per_patient {
            let _ = writeln!(
                detail,
                "{name}\t{p}\t{:.6}\t{:.6}\t{:.6}",
                m.precision, m.recall, m.f1
            );
        }
    }
    fs::write(arts.per_patient_metrics(), detail)?;
    let summary: std::collections::BTreeMap<String, Metrics> = rows.iter().cloned().collect();
    fs::write(arts.summary(), serde_json::to_string_pretty(&summary)?)?;
    Ok(rows)
}

fn write_candidates_file(
    path: &Path,
    rows: &[(usize, Vec<GeneratedCandidate>)],
) -> Result<()> {
    let mut out = String::from("patient\tsources\tscore_rank\tdrugs\n");
    for (patient, candidates) in rows {
        for (rank, c) in candidates.iter().enumerate() {
            let tags: Vec<&str> = c
                .sources
                .iter()
                .map(|s| match s {
                    crate::genpkg::Provenance::S1 => "S1",
                    crate::genpkg::Provenance::S2 => "S2",
                    crate::genpkg::Provenance::S3 => "S3",
                })
                .collect();
            let drugs: Vec<String> = c.package.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(
                out,
                "{patient}\t{}\t{rank}\t{}",
                tags.join("+"),
                drugs.join(" ")
            );
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_audit_file(path: &Path, rows: &[(usize, Vec<RuleFiring>)]) -> Result<()> {
    let mut out = String::from("patient\tpackage_idx\trule\tdrug\tpartner\n");
    for (patient, firings) in rows {
        for f in firings {
            let partner = f
                .partner
                .map(|p| p.to_string())
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{patient}\t{}\t{:?}\t{}\t{partner}",
                f.package_idx, f.rule, f.drug
            );
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Outcome of the generation stage: best-candidate metrics with and without
/// the heuristic sets.
pub struct GenerateOutcome {
    pub retrieved_only: Metrics,
    pub with_generated: Metrics,
}

/// Heuristic candidate generation over the test split, scored by the trained
/// model; emits the candidate sets with provenance plus the audit log.
pub fn stage_generate(cfg: &PipelineConfig) -> Result<GenerateOutcome> {
    let arts = Artifacts::new(&cfg.out_dir);
    let corpus = load_corpus_artifacts(&arts, "generate")?;
    let pretrained = load_pretrained(&arts, "generate")?;
    arts.require(&arts.model_ckpt(cfg.model), "generate", "train")?;
    let embeddings = encode_all(&pretrained, &corpus);
    let bank = GraphBank::build(&corpus, cfg.threshold)?;

    enum AnyModel {
        Weighted(crate::dpr_wg::WgModel),
        Attributed(crate::dpr_ag::AgModel),
    }
    let model = match cfg.model {
        ModelKind::Weighted => {
            AnyModel::Weighted(Checkpoint::load(&arts.model_ckpt(cfg.model))?.into_weighted()?)
        }
        ModelKind::Attributed => {
            AnyModel::Attributed(Checkpoint::load(&arts.model_ckpt(cfg.model))?.into_attributed()?)
        }
    };
    let scorer = match &model {
        AnyModel::Weighted(m) => PackageScorer::weighted(m, &bank, &corpus.relation),
        AnyModel::Attributed(m) => PackageScorer::attributed(m, &bank, &corpus.relation),
    };

    let train_pkgs = corpus.train_packages();
    let frequency = frequency_rank(&train_pkgs, corpus.n_drugs());

    struct PatientRow {
        patient: usize,
        candidates: Vec<GeneratedCandidate>,
        log: Vec<RuleFiring>,
        retrieved: Metrics,
        combined: Metrics,
    }

    let rows: Vec<Result<PatientRow>> = corpus
        .split
        .test
        .par_iter()
        .map(|&p| {
            let u = &embeddings[p];
            let s1: Vec<_> = candidate_set(
                u,
                &corpus.split.train,
                &embeddings,
                &corpus.packages,
                cfg.neighbors,
            )
            .into_iter()
            .map(|(_, pkg)| pkg)
            .collect();
            let ranks = RankLists {
                frequency: frequency.clone(),
                personalized: personalized_rank(&pretrained, u),
            };
            let (candidates, log) =
                generate_for_patient(&s1, &ranks, &corpus.relation, &bank.stats, &cfg.heuristic)?;

            // Best candidate from the retrieved set alone.
            let retrieved_pool: Vec<_> = s1
                .iter()
                .cloned()
                .map(|pkg| (pkg, CandidateSource::SimilarPatient))
                .collect();
            let best_retrieved =
                rank_candidates(|pkg| scorer.score(u, pkg), retrieved_pool)?.remove(0);
            let retrieved = evaluate(&best_retrieved.package, &corpus.packages[p])?;

            // Best candidate from the full union.
            let union_pool: Vec<_> = candidates
                .iter()
                .map(|c| {
                    let source = if c.sources.contains(&crate::genpkg::Provenance::S1) {
                        CandidateSource::SimilarPatient
                    } else {
                        CandidateSource::Generated
                    };
                    (c.package.clone(), source)
                })
                .collect();
            let best_combined = rank_candidates(|pkg| scorer.score(u, pkg), union_pool)?.remove(0);
            let combined = evaluate(&best_combined.package, &corpus.packages[p])?;

            Ok(PatientRow {
                patient: p,
                candidates,
                log,
                retrieved,
                combined,
            })
        })
        .collect();
    let rows: Vec<PatientRow> = rows.into_iter().collect::<Result<_>>()?;

    write_candidates_file(
        &arts.candidates(),
        &rows
            .iter()
            .map(|r| (r.patient, r.candidates.clone()))
            .collect::<Vec<_>>(),
    )?;
    write_audit_file(
        &arts.audit_log(),
        &rows
            .iter()
            .map(|r| (r.patient, r.log.clone()))
            .collect::<Vec<_>>(),
    )?;

    let retrieved_only = mean_metrics(&rows.iter().map(|r| r.retrieved).collect::<Vec<_>>());
    let with_generated = mean_metrics(&rows.iter().map(|r| r.combined).collect::<Vec<_>>());
    Ok(GenerateOutcome {
        retrieved_only,
        with_generated,
    })
}

/// Write per-patient mask vectors for the test split.
pub fn stage_export_masks(cfg: &PipelineConfig) -> Result<()> {
    let arts = Artifacts::new(&cfg.out_dir);
    let corpus = load_corpus_artifacts(&arts, "export-masks")?;
    let pretrained = load_pretrained(&arts, "export-masks")?;
    arts.require(&arts.model_ckpt(cfg.model), "export-masks", "train")?;
    let embeddings = encode_all(&pretrained, &corpus);

    let mask_of: Box<dyn Fn(&[f64]) -> Option<Vec<f64>>> = match cfg.model {
        ModelKind::Weighted => {
            let model = Checkpoint::load(&arts.model_ckpt(cfg.model))?.into_weighted()?;
            Box::new(move |u: &[f64]| model.mask_vector(u))
        }
        ModelKind::Attributed => {
            let model = Checkpoint::load(&arts.model_ckpt(cfg.model))?.into_attributed()?;
            Box::new(move |u: &[f64]| model.mask_vector(u))
        }
    };
    let mut out = String::from("patient\tmask\n");
    for &p in &corpus.split.test {
        let mask = mask_of(&embeddings[p]).ok_or_else(|| Error::Stage {
            stage: "export-masks".into(),
            reason: "the trained variant has no mask layer".into(),
        })?;
        let cells: Vec<String> = mask.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(out, "{p}\t{}", cells.join(" "));
    }
    fs::write(arts.masks(), out)?;
    Ok(())
}

/// Write the labeled-edge classification report for the test split
/// (attributed model only).
pub fn stage_export_edges(cfg: &PipelineConfig) -> Result<()> {
    let arts = Artifacts::new(&cfg.out_dir);
    if cfg.model != ModelKind::Attributed {
        return Err(Error::Stage {
            stage: "export-edges".into(),
            reason: "edge classification needs `variant = dpr-ag` in [package_model]".into(),
        });
    }
    let corpus = load_corpus_artifacts(&arts, "export-edges")?;
    let pretrained = load_pretrained(&arts, "export-edges")?;
    arts.require(&arts.model_ckpt(cfg.model), "export-edges", "train")?;
    let embeddings = encode_all(&pretrained, &corpus);
    let model = Checkpoint::load(&arts.model_ckpt(cfg.model))?.into_attributed()?;
    let bank = GraphBank::build(&corpus, cfg.threshold)?;

    let mut out =
        String::from("patient\tdrug_from\tdrug_to\ttrue_class\traw_probs\tmasked_probs\n");
    for &p in &corpus.split.test {
        let Some((graph, _)) = bank.get(p) else {
            continue;
        };
        for row in model.edge_classification_report(&embeddings[p], graph, &corpus) {
            let fmt3 = |probs: &[f64; 3]| {
                format!("{:.4},{:.4},{:.4}", probs[0], probs[1], probs[2])
            };
            let _ = writeln!(
                out,
                "{p}\t{}\t{}\t{}\t{}\t{}",
                row.from,
                row.to,
                row.true_class.code(),
                fmt3(&row.raw_probs),
                fmt3(&row.masked_probs)
            );
        }
    }
    fs::write(arts.edge_report(), out)?;
    Ok(())
}

/// Execute every stage in order and write the manifest last.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    fs::create_dir_all(&cfg.out_dir)?;
    let arts = Artifacts::new(&cfg.out_dir);
    let mut manifest = RunManifest::new(cfg.seed, cfg.echo.clone());

    let mut timed = |name: &str,
                     manifest: &mut RunManifest,
                     f: &mut dyn FnMut() -> Result<()>|
     -> Result<()> {
        let start = Instant::now();
        f()?;
        manifest
            .timings
            .insert(name.to_string(), start.elapsed().as_secs_f64());
        Ok(())
    };

    timed("gen-data", &mut manifest, &mut || stage_gen_data(cfg))?;
    manifest.corpus_fingerprint = fingerprint_file(&arts.corpus())?;
    timed("pretrain", &mut manifest, &mut || stage_pretrain(cfg))?;
    timed("train", &mut manifest, &mut || stage_train(cfg))?;

    let metric_rows: Vec<(String, Metrics)>;
    {
        let start = Instant::now();
        metric_rows = stage_evaluate(cfg)?;
        manifest
            .timings
            .insert("evaluate".into(), start.elapsed().as_secs_f64());
    }
    for (name, m) in &metric_rows {
        manifest.metrics.insert(name.clone(), *m);
    }

    {
        let start = Instant::now();
        let gen = stage_generate(cfg)?;
        manifest
            .timings
            .insert("generate".into(), start.elapsed().as_secs_f64());
        manifest
            .metrics
            .insert("best-of-retrieved".into(), gen.retrieved_only);
        manifest
            .metrics
            .insert("best-of-generated".into(), gen.with_generated);
    }

    manifest
        .checkpoints
        .insert("pretrain".into(), fingerprint_file(&arts.pretrain_ckpt())?);
    manifest.checkpoints.insert(
        cfg.model.name().into(),
        fingerprint_file(&arts.model_ckpt(cfg.model))?,
    );
    for path in [
        arts.corpus(),
        arts.labels(),
        arts.pretrain_ckpt(),
        arts.model_ckpt(cfg.model),
        arts.metrics(),
        arts.per_patient_metrics(),
        arts.summary(),
        arts.candidates(),
        arts.audit_log(),
    ] {
        if path.exists() {
            manifest.record_file(&arts.root, &path)?;
        }
    }
    manifest.save(&arts.manifest())?;
    Ok(manifest)
}
