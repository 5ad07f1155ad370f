//! Build package graphs for a few patients and dump their topology,
//! provenance tags, and initial signed edge weights.

use dpr::corpus::{generate_synthetic_corpus, GeneratorConfig};
use dpr::dpr_wg::init_edge_weights;
use dpr::graph::{construct_package_graph, CooccurrenceStats};

fn main() -> anyhow::Result<()> {
    let corpus = generate_synthetic_corpus(&GeneratorConfig {
        seed: 7,
        n_patients: 300,
        ..GeneratorConfig::default()
    })?;
    let stats = CooccurrenceStats::from_packages(&corpus.train_packages(), corpus.n_drugs());

    for &patient in corpus.split.test.iter().take(2) {
        let package = &corpus.packages[patient];
        for threshold in [0.01, 0.5] {
            let graph = construct_package_graph(package, &corpus.relation, &stats, threshold)?;
            println!(
                "patient {patient}: threshold {threshold} -> {} nodes, {} edges",
                graph.n_nodes(),
                graph.n_edges()
            );
            if threshold == 0.5 {
                let weights = init_edge_weights(&graph, &corpus.relation, &stats);
                print!("{}", graph.dump());
                println!("initial weights: {weights:.2?}");
            }
        }
    }
    Ok(())
}
