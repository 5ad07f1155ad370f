//! Inspect retrieval quality on a synthetic corpus: how often neighbors share
//! the latent condition, and what the candidate-set F1 ceiling looks like.

use dpr::corpus::{generate_synthetic_corpus, GeneratorConfig};
use dpr::embedding::pretrain::encode_all;
use dpr::embedding::{pretrain, EncoderDims, TrainConfig};
use dpr::corpus::plan_layout;
use dpr::recommend::{candidate_set, evaluate};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_patients: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(800);
    let epochs: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(4);
    let seed = 7;

    let corpus = generate_synthetic_corpus(&GeneratorConfig {
        seed,
        n_patients,
        ..GeneratorConfig::default()
    })?;
    // Size distribution.
    let sizes: Vec<usize> = corpus.packages.iter().map(|p| p.len()).collect();
    let mut hist = std::collections::BTreeMap::new();
    for &s in &sizes {
        *hist.entry(s / 3 * 3).or_insert(0usize) += 1;
    }
    println!("package size histogram (bucket -> count): {hist:?}");

    let dims = EncoderDims::compact(
        corpus.meta.disease_dim,
        corpus.token_vocab.len() + 2,
        corpus.n_drugs(),
    );
    let cfg = TrainConfig {
        seed,
        epochs,
        negative_ratio: 4,
        patience: 3,
        ..TrainConfig::default()
    };
    let pre = pretrain(&corpus, dims, &cfg)?;
    println!("pretrain epochs run: {} best val {:.4}", pre.log.len(), pre.best_val_loss);
    for row in &pre.log {
        println!("  epoch {} train {:.4} val {:.4}", row.epoch, row.train_loss, row.val_loss);
    }
    let embeddings = encode_all(&pre.model, &corpus);

    let mut oracle_f1 = 0.0;
    let mut mean_f1 = 0.0;
    let mut first_f1 = 0.0;
    let mut n = 0.0;
    for &p in &corpus.split.test {
        let candidates = candidate_set(
            &embeddings[p],
            &corpus.split.train,
            &embeddings,
            &corpus.packages,
            10,
        );
        if candidates.is_empty() {
            continue;
        }
        let f1s: Vec<f64> = candidates
            .iter()
            .map(|(_, pkg)| evaluate(pkg, &corpus.packages[p]).unwrap().f1)
            .collect();
        oracle_f1 += f1s.iter().cloned().fold(f64::MIN, f64::max);
        mean_f1 += f1s.iter().sum::<f64>() / f1s.len() as f64;
        first_f1 += f1s[0];
        n += 1.0;
    }
    println!("candidate list (k=10) over {} test patients:", n as usize);
    println!("  nearest-neighbor f1 (rank 1): {:.4}", first_f1 / n);
    println!("  mean candidate f1:            {:.4}", mean_f1 / n);
    println!("  oracle best-candidate f1:     {:.4}", oracle_f1 / n);

    // Upper bound on size-aware selection: pick the candidate whose size is
    // closest to the truth (cheating on size only, content blind).
    let mut size_pick_f1 = 0.0;
    for &p in &corpus.split.test {
        let truth = &corpus.packages[p];
        let candidates = candidate_set(
            &embeddings[p],
            &corpus.split.train,
            &embeddings,
            &corpus.packages,
            10,
        );
        if candidates.is_empty() {
            continue;
        }
        let best = candidates
            .iter()
            .min_by_key(|(_, pkg)| (pkg.len() as i64 - truth.len() as i64).abs())
            .unwrap();
        size_pick_f1 += evaluate(&best.1, truth)?.f1;
    }
    println!("  size-matched pick f1:         {:.4}", size_pick_f1 / n);

    // How often do retrieved neighbors share the latent condition/kit?
    // Recover a proxy for the latent profile from package contents.
    let layout = plan_layout(corpus.n_drugs(), 6);
    let profile_of = |p: usize| -> (usize, usize) {
        let package = &corpus.packages[p];
        let mut best = (0usize, 0usize, 0usize); // cond, kit, count
        for (c, pool) in layout.conditions.iter().enumerate() {
            for kit in 0..2 {
                let count = pool
                    .regimen(kit)
                    .iter()
                    .filter(|d| package.contains(d))
                    .count();
                if count > best.2 {
                    best = (c, kit, count);
                }
            }
        }
        (best.0, best.1)
    };
    let mut cond_match = 0.0;
    let mut kit_match = 0.0;
    let mut pairs = 0.0;
    for &p in &corpus.split.test {
        let (pc, pk) = profile_of(p);
        for (j, _) in candidate_set(
            &embeddings[p],
            &corpus.split.train,
            &embeddings,
            &corpus.packages,
            10,
        ) {
            let (nc, nk) = profile_of(j);
            if nc == pc {
                cond_match += 1.0;
                if nk == pk {
                    kit_match += 1.0;
                }
            }
            pairs += 1.0;
        }
    }
    println!("  neighbor condition-match rate: {:.3}", cond_match / pairs);
    println!("  neighbor condition+kit match:  {:.3}", kit_match / pairs);
    Ok(())
}
