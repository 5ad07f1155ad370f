//! Train the package models on a synthetic corpus and compare them against
//! the per-drug and nearest-neighbor baselines.
//!
//! ```bash
//! cargo run --release -p dpr --example evaluate_baselines -- [n_patients] [seed]
//! ```

use std::time::Instant;

use dpr::corpus::{generate_synthetic_corpus, GeneratorConfig};
use dpr::dpr_ag::{train_ag, AgTrainOptions};
use dpr::dpr_wg::{train_wg, WgTrainOptions, WgVariant};
use dpr::embedding::pretrain::encode_all;
use dpr::embedding::{pretrain, EncoderDims, TrainConfig};
use dpr::recommend::{
    evaluate_ncf_baseline, evaluate_nn_baseline, evaluate_scorer, PackageScorer,
};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_patients: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(1200);
    let seed: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(7);
    let pre_epochs: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(4);
    let dpr_epochs: usize = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(3);

    let started = Instant::now();
    let corpus = generate_synthetic_corpus(&GeneratorConfig {
        seed,
        n_patients,
        ..GeneratorConfig::default()
    })?;
    let mean_pkg: f64 = corpus.packages.iter().map(|p| p.len() as f64).sum::<f64>()
        / corpus.packages.len() as f64;
    println!(
        "corpus: {} patients, {} drugs, mean package {:.1}, {} visible labels ({:.1}s)",
        corpus.n_patients(),
        corpus.n_drugs(),
        mean_pkg,
        corpus.labels.len(),
        started.elapsed().as_secs_f64()
    );

    let dims = EncoderDims::compact(
        corpus.meta.disease_dim,
        corpus.token_vocab.len() + 2,
        corpus.n_drugs(),
    );
    let pre_cfg = TrainConfig {
        seed,
        epochs: pre_epochs,
        negative_ratio: 4,
        patience: 3,
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let pre = pretrain(&corpus, dims, &pre_cfg)?;
    println!(
        "pretrain: {} epochs, best val {:.4} ({:.1}s)",
        pre.log.len(),
        pre.best_val_loss,
        t.elapsed().as_secs_f64()
    );
    let embeddings = encode_all(&pre.model, &corpus);

    let ncf = evaluate_ncf_baseline(&corpus, &embeddings, &pre.model)?;
    println!("ncf-topk   f1={:.4} (p={:.4} r={:.4})", ncf.mean.f1, ncf.mean.precision, ncf.mean.recall);
    let nn = evaluate_nn_baseline(&corpus, &embeddings)?;
    println!("nn         f1={:.4} (p={:.4} r={:.4})", nn.mean.f1, nn.mean.precision, nn.mean.recall);

    let dpr_subsample: usize = args.get(4).map(|s| s.parse()).transpose()?.unwrap_or(1500);
    let dpr_lr: f64 = args.get(5).map(|s| s.parse()).transpose()?.unwrap_or(0.001);
    let dpr_train = TrainConfig {
        seed,
        epochs: dpr_epochs,
        learning_rate: dpr_lr,
        negative_ratio: 4,
        batch_size: 32,
        patience: 4,
        train_subsample: Some(dpr_subsample),
        ..TrainConfig::default()
    };

    for (name, variant) in [
        ("gnn-plain", WgVariant::plain_gnn()),
        ("dpr-wg", WgVariant::full()),
    ] {
        let t = Instant::now();
        let opts = WgTrainOptions {
            train: dpr_train.clone(),
            mlp_hidden: 32,
            factor_dim: Some(16),
            variant,
            ..WgTrainOptions::new(dpr_train.clone())
        };
        let out = train_wg(&corpus, &pre.model, &embeddings, &opts)?;
        let scorer = PackageScorer::weighted(&out.model, &out.bank, &corpus.relation);
        let report = evaluate_scorer(&corpus, &embeddings, &scorer, 10)?;
        println!(
            "{name:10} f1={:.4} (p={:.4} r={:.4}) epochs={} ({:.1}s)",
            report.mean.f1,
            report.mean.precision,
            report.mean.recall,
            out.log.len(),
            t.elapsed().as_secs_f64()
        );
    }

    let t = Instant::now();
    let ag_opts = AgTrainOptions {
        train: dpr_train.clone(),
        mlp_hidden: 32,
        ..AgTrainOptions::new(dpr_train.clone())
    };
    let out = train_ag(&corpus, &pre.model, &embeddings, &ag_opts)?;
    let scorer = PackageScorer::attributed(&out.model, &out.bank, &corpus.relation);
    let report = evaluate_scorer(&corpus, &embeddings, &scorer, 10)?;
    println!(
        "dpr-ag     f1={:.4} (p={:.4} r={:.4}) epochs={} ({:.1}s)",
        report.mean.f1,
        report.mean.precision,
        report.mean.recall,
        out.log.len(),
        t.elapsed().as_secs_f64()
    );
    let acc = dpr::dpr_ag::heldout_classification_accuracy(&out.model, &corpus.heldout_labels);
    let train_acc = dpr::dpr_ag::heldout_classification_accuracy(&out.model, &corpus.labels);
    println!("dpr-ag label accuracy: held-out {acc:.3}, visible {train_acc:.3}");
    // Per-class held-out breakdown.
    use dpr::corpus::InteractionClass;
    for class in [
        InteractionClass::NoInteraction,
        InteractionClass::Synergism,
        InteractionClass::Antagonism,
    ] {
        let subset: Vec<_> = corpus
            .heldout_labels
            .iter()
            .filter(|l| l.class == class)
            .cloned()
            .collect();
        if subset.is_empty() {
            continue;
        }
        let a = dpr::dpr_ag::heldout_classification_accuracy(&out.model, &subset);
        println!("  {:?}: {:.3} over {} labels", class, a, subset.len());
    }
    println!("total {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
