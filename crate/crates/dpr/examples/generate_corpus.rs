//! Generate a synthetic corpus, print its headline statistics, and write the
//! corpus + label files.
//!
//! ```bash
//! cargo run --release -p dpr --example generate_corpus -- out_dir [n_patients] [seed]
//! ```

use std::path::PathBuf;

use dpr::corpus::{generate_synthetic_corpus, save_corpus, GeneratorConfig, InteractionClass};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out: PathBuf = args
        .first()
        .map(PathBuf::from)
        .unwrap_or_else(|| "runs/corpus-demo".into());
    let n_patients: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let seed: u64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(7);

    let corpus = generate_synthetic_corpus(&GeneratorConfig {
        seed,
        n_patients,
        ..GeneratorConfig::default()
    })?;

    let sizes: Vec<usize> = corpus.packages.iter().map(|p| p.len()).collect();
    let mean = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;
    let count = |class: InteractionClass| {
        corpus.labels.iter().filter(|l| l.class == class).count()
    };
    println!("patients: {}", corpus.n_patients());
    println!("drugs: {}", corpus.n_drugs());
    println!("disease vocabulary: {}", corpus.disease_vocab.len());
    println!("note tokens: {} (length {})", corpus.token_vocab.len(), corpus.meta.note_len);
    println!("mean package size: {mean:.1}");
    println!(
        "labels: {} no-interaction, {} synergism, {} antagonism ({} held out)",
        count(InteractionClass::NoInteraction),
        count(InteractionClass::Synergism),
        count(InteractionClass::Antagonism),
        corpus.heldout_labels.len()
    );
    println!(
        "split: {}/{}/{} train/valid/test",
        corpus.split.train.len(),
        corpus.split.valid.len(),
        corpus.split.test.len()
    );

    std::fs::create_dir_all(&out)?;
    save_corpus(&corpus, &out.join("corpus.txt"), &out.join("labels.tsv"))?;
    println!("written to {}", out.display());
    Ok(())
}
