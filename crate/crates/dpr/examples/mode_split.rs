//! Compare the top-K baseline against candidate selection separately on
//! light and heavy admissions.

use dpr::corpus::{generate_synthetic_corpus, GeneratorConfig};
use dpr::dpr_wg::{train_wg, WgTrainOptions};
use dpr::embedding::pretrain::encode_all;
use dpr::embedding::{pretrain, EncoderDims, TrainConfig};
use dpr::recommend::{
    candidate_set, evaluate, ncf_k, ncf_topk_baseline, rank_candidates, CandidateSource,
    PackageScorer,
};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_patients: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(800);
    let pre_epochs: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(8);
    let seed = 7;
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
    let dpr_epochs: usize = args.get(2).map(|s| s.parse()).transpose().unwrap().unwrap_or(6);
    let lr: f64 = args.get(3).map(|s| s.parse()).transpose().unwrap().unwrap_or(0.001);
    let neg: usize = args.get(4).map(|s| s.parse()).transpose().unwrap().unwrap_or(4);
    let opts = WgTrainOptions {
        train: TrainConfig {
            seed,
            epochs: dpr_epochs,
            learning_rate: lr,
            negative_ratio: neg,
            batch_size: 32,
            patience: 4,
            train_subsample: Some(1500),
            ..TrainConfig::default()
        },
        mlp_hidden: 32,
        ..WgTrainOptions::new(TrainConfig::default())
    };
    let wg = train_wg(&corpus, &pre.model, &embeddings, &opts)?;
    let scorer = PackageScorer::weighted(&wg.model, &wg.bank, &corpus.relation);

    let k = ncf_k(&corpus);
    let mut rows = Vec::new();
    for &p in &corpus.split.test {
        let truth = &corpus.packages[p];
        let u = &embeddings[p];
        let ncf = evaluate(&ncf_topk_baseline(&pre.model, u, k), truth)?.f1;
        let candidates = candidate_set(u, &corpus.split.train, &embeddings, &corpus.packages, 10);
        let pool: Vec<_> = candidates
            .iter()
            .map(|(_, pkg)| (pkg.clone(), CandidateSource::SimilarPatient))
            .collect();
        let ranked = rank_candidates(|pkg| scorer.score(u, pkg), pool)?;
        let wg_f1 = evaluate(&ranked[0].package, truth)?.f1;
        let wg_size = ranked[0].package.len();
        let oracle = candidates
            .iter()
            .map(|(_, pkg)| evaluate(pkg, truth).unwrap().f1)
            .fold(f64::MIN, f64::max);
        rows.push((truth.len(), ncf, wg_f1, oracle, wg_size));
    }
    let report = |name: &str, filt: Box<dyn Fn(usize) -> bool>| {
        let sel: Vec<_> = rows.iter().filter(|r| filt(r.0)).collect();
        let n = sel.len() as f64;
        if n == 0.0 {
            return;
        }
        let ncf: f64 = sel.iter().map(|r| r.1).sum::<f64>() / n;
        let wg: f64 = sel.iter().map(|r| r.2).sum::<f64>() / n;
        let oracle: f64 = sel.iter().map(|r| r.3).sum::<f64>() / n;
        let truth_size: f64 = sel.iter().map(|r| r.0 as f64).sum::<f64>() / n;
        let wg_size: f64 = sel.iter().map(|r| r.4 as f64).sum::<f64>() / n;
        println!(
            "{name}: n={} truth_size={truth_size:.1} wg_pick_size={wg_size:.1} ncf={ncf:.4} wg={wg:.4} oracle={oracle:.4}",
            sel.len()
        );
    };
    report("light (<=15)", Box::new(|s| s <= 15));
    report("heavy (>=21)", Box::new(|s| s >= 21));
    report("all", Box::new(|_| true));
    Ok(())
}
