//! Held-out interaction classification accuracy under a
//! classification-focused training budget.

use dpr::corpus::{generate_synthetic_corpus, GeneratorConfig, InteractionClass};
use dpr::dpr_ag::{heldout_classification_accuracy, train_ag, AgTrainOptions};
use dpr::embedding::pretrain::encode_all;
use dpr::embedding::{pretrain, EncoderDims, TrainConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_patients: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(2500);
    let seed: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(7);
    let pre_epochs: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let ag_epochs: usize = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(6);
    let ce_weight: f64 = args.get(4).map(|s| s.parse()).transpose()?.unwrap_or(1.0);
    let l2: f64 = args.get(5).map(|s| s.parse()).transpose()?.unwrap_or(1e-5);

    let corpus = generate_synthetic_corpus(&GeneratorConfig {
        seed,
        n_patients,
        ..GeneratorConfig::default()
    })?;
    let dims = EncoderDims::compact(
        corpus.meta.disease_dim,
        corpus.token_vocab.len() + 2,
        corpus.n_drugs(),
    );
    let pre = pretrain(
        &corpus,
        dims,
        &TrainConfig {
            seed,
            epochs: pre_epochs,
            negative_ratio: 4,
            patience: 3,
            ..TrainConfig::default()
        },
    )?;
    let embeddings = encode_all(&pre.model, &corpus);
    let out = train_ag(
        &corpus,
        &pre.model,
        &embeddings,
        &AgTrainOptions {
            train: TrainConfig {
                seed,
                epochs: ag_epochs,
                negative_ratio: 4,
                batch_size: 32,
                l2,
                patience: 4,
                train_subsample: Some(1800),
                ..TrainConfig::default()
            },
            mlp_hidden: 32,
            ce_weight,
            edge_dim: args.get(6).map(|s| s.parse().unwrap()),
            ..AgTrainOptions::new(TrainConfig::default())
        },
    )?;
    let acc = heldout_classification_accuracy(&out.model, &corpus.heldout_labels);
    let vis = heldout_classification_accuracy(&out.model, &corpus.labels);
    println!("held-out {acc:.3} visible {vis:.3}");
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
        if !subset.is_empty() {
            println!(
                "  {:?}: {:.3} over {}",
                class,
                heldout_classification_accuracy(&out.model, &subset),
                subset.len()
            );
        }
    }
    Ok(())
}
