//! Pre-train patient/drug embeddings with the ranking loss and show how the
//! matching head separates in-package from out-of-package drugs.

use dpr::corpus::{generate_synthetic_corpus, GeneratorConfig};
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
    let cfg = TrainConfig {
        seed: 7,
        epochs: 6,
        negative_ratio: 4,
        ..TrainConfig::default()
    };
    let out = pretrain(&corpus, dims, &cfg)?;
    for row in &out.log {
        println!(
            "epoch {}: train {:.4}, valid {:.4}",
            row.epoch, row.train_loss, row.val_loss
        );
    }
    println!("skipped records: {}", out.skipped_records);

    // In-package drugs should now outscore the rest for a test patient.
    let embeddings = encode_all(&out.model, &corpus);
    let patient = corpus.split.test[0];
    let u = &embeddings[patient];
    let package = &corpus.packages[patient];
    let mut in_pkg = 0.0;
    let mut out_pkg = 0.0;
    for d in 0..corpus.n_drugs() {
        let score = out.model.score_patient_drug(u, d);
        if package.contains(&d) {
            in_pkg += score / package.len() as f64;
        } else {
            out_pkg += score / (corpus.n_drugs() - package.len()) as f64;
        }
    }
    println!("mean in-package score: {in_pkg:.3}");
    println!("mean out-of-package score: {out_pkg:.3}");
    Ok(())
}
