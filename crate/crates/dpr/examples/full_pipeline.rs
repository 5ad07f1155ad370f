//! Run the whole pipeline (gen-data -> pretrain -> train -> evaluate ->
//! generate) from a config string and print the manifest summary.

use dpr::cli::{run_pipeline, validate_config_str};

fn main() -> anyhow::Result<()> {
    let out_dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "runs/pipeline-demo".into());
    let config = format!(
        "version = 1\nseed = 7\n\n[paths]\nout_dir = {out_dir}\n\n[corpus]\nn_patients = 300\nn_drugs = 60\nnote_len = 16\nn_conditions = 4\n\n[pretrain]\nepochs = 4\nnegative_ratio = 3\n\n[package_model]\nvariant = dpr-wg\nepochs = 3\nnegative_ratio = 3\nbatch_size = 32\n\n[model]\ndims = compact\n\n[evaluate]\nneighbors = 10\n"
    );
    let cfg = validate_config_str(&config)?;
    let manifest = run_pipeline(&cfg)?;
    println!("corpus fingerprint: {}", manifest.corpus_fingerprint);
    for (stage, secs) in &manifest.timings {
        println!("{stage}: {secs:.1}s");
    }
    for (name, m) in &manifest.metrics {
        println!("{name}: precision {:.3} recall {:.3} f1 {:.3}", m.precision, m.recall, m.f1);
    }
    Ok(())
}
