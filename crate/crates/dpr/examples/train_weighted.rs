//! Train the weighted-graph package model and inspect a case study: mask
//! vector and per-edge contextual impact factors for one patient.

use dpr::corpus::{generate_synthetic_corpus, GeneratorConfig, InteractionClass};
use dpr::dpr_wg::{init_edge_weights, train_wg, WgTrainOptions};
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

    let opts = WgTrainOptions {
        train: TrainConfig {
            seed: 7,
            epochs: 4,
            negative_ratio: 4,
            batch_size: 32,
            ..TrainConfig::default()
        },
        mlp_hidden: 32,
        ..WgTrainOptions::new(TrainConfig::default())
    };
    let out = train_wg(&corpus, &pre.model, &embeddings, &opts)?;
    for (epoch, train, valid) in &out.log {
        println!("epoch {epoch}: train {train:.4}, valid {valid:.4}");
    }

    // Case study: one test patient's own package graph.
    let patient = corpus.split.test[0];
    let (graph, _) = out.bank.get(patient).expect("graph exists");
    let u = &embeddings[patient];
    let mask = out.model.mask_vector(u).expect("full model has a mask");
    println!("mask vector (first 8 dims): {:.3?}", &mask[..mask.len().min(8)]);
    let weights = init_edge_weights(graph, &corpus.relation, &out.bank.stats);
    let factors = out.model.impact_factors(u, graph).unwrap();
    println!("labeled edges with their impact factors:");
    for ((edge, w), c) in graph.edges().iter().zip(&weights).zip(&factors) {
        let from = graph.drugs()[edge.from];
        let to = graph.drugs()[edge.to];
        let class = corpus.relation.get(from, to);
        if class != InteractionClass::Unknown {
            println!("  {from:>3} -> {to:>3}  {class:?}  initial {w:+.2}  factor {c:+.3}");
        }
    }
    Ok(())
}
