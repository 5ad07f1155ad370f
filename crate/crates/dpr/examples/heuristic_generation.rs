//! Generate new candidate packages with the rank- and interaction-based
//! heuristics and show the rule-firing audit trail for one patient.

use dpr::corpus::{generate_synthetic_corpus, GeneratorConfig};
use dpr::embedding::pretrain::encode_all;
use dpr::embedding::{pretrain, EncoderDims, TrainConfig};
use dpr::genpkg::{
    frequency_rank, generate_for_patient, personalized_rank, HeuristicConfig, RankLists,
};
use dpr::graph::CooccurrenceStats;
use dpr::recommend::candidate_set;

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
    let train_packages = corpus.train_packages();
    let stats = CooccurrenceStats::from_packages(&train_packages, corpus.n_drugs());
    let frequency = frequency_rank(&train_packages, corpus.n_drugs());

    let patient = corpus.split.test[0];
    let u = &embeddings[patient];
    let s1: Vec<_> = candidate_set(u, &corpus.split.train, &embeddings, &corpus.packages, 10)
        .into_iter()
        .map(|(_, pkg)| pkg)
        .collect();
    let ranks = RankLists {
        frequency,
        personalized: personalized_rank(&pre.model, u),
    };
    let (candidates, log) = generate_for_patient(
        &s1,
        &ranks,
        &corpus.relation,
        &stats,
        &HeuristicConfig::default(),
    )?;

    println!("patient {patient}: {} retrieved packages", s1.len());
    println!("{} candidates after refinement + union:", candidates.len());
    for c in candidates.iter().take(6) {
        let drugs: Vec<String> = c.package.iter().map(|d| d.to_string()).collect();
        println!("  {:?} [{}]", c.sources, drugs.join(" "));
    }
    println!("rule firings ({}):", log.len());
    for f in log.iter().take(12) {
        println!(
            "  package {} {:?} drug {}{}",
            f.package_idx,
            f.rule,
            f.drug,
            f.partner.map(|p| format!(" (partner {p})")).unwrap_or_default()
        );
    }
    Ok(())
}
