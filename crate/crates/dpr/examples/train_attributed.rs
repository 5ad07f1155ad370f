//! Train the attributed-graph package model and print the edge-classification
//! case study: raw and mask-modulated probability triples per labeled edge.

use dpr::corpus::{generate_synthetic_corpus, GeneratorConfig, InteractionClass};
use dpr::dpr_ag::{heldout_classification_accuracy, train_ag, AgTrainOptions};
use dpr::embedding::pretrain::encode_all;
use dpr::embedding::{pretrain, EncoderDims, TrainConfig};

fn main() -> anyhow::Result<()> {
    let corpus = generate_synthetic_corpus(&GeneratorConfig {
        seed: 7,
        n_patients: 400,
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
            seed: 7,
            epochs: 5,
            negative_ratio: 4,
            ..TrainConfig::default()
        },
    )?;
    let embeddings = encode_all(&pre.model, &corpus);

    let opts = AgTrainOptions {
        train: TrainConfig {
            seed: 7,
            epochs: 5,
            negative_ratio: 4,
            batch_size: 32,
            ..TrainConfig::default()
        },
        mlp_hidden: 32,
        ..AgTrainOptions::new(TrainConfig::default())
    };
    let out = train_ag(&corpus, &pre.model, &embeddings, &opts)?;
    for (epoch, bpr, ce, valid) in &out.log {
        println!("epoch {epoch}: ranking {bpr:.4}, classification {ce:.4}, valid {valid:.4}");
    }
    println!(
        "held-out label accuracy: {:.3}",
        heldout_classification_accuracy(&out.model, &corpus.heldout_labels)
    );

    let patient = corpus.split.test[0];
    let (graph, _) = out.bank.get(patient).expect("graph exists");
    println!("labeled edges for patient {patient}:");
    for row in out
        .model
        .edge_classification_report(&embeddings[patient], graph, &corpus)
    {
        if row.true_class == InteractionClass::Unknown {
            continue;
        }
        println!(
            "  {:>3} -> {:>3}  {:?}  raw {:.2?}  masked {:.2?}",
            row.from, row.to, row.true_class, row.raw_probs, row.masked_probs
        );
    }
    Ok(())
}
