//! Count classification-term exposure per interaction class across training
//! graphs (how often labeled pairs actually co-occur in packages).

use dpr::corpus::{generate_synthetic_corpus, GeneratorConfig, InteractionClass};
use dpr::dpr_wg::GraphBank;

fn main() -> anyhow::Result<()> {
    let corpus = generate_synthetic_corpus(&GeneratorConfig {
        seed: 7,
        n_patients: 800,
        ..GeneratorConfig::default()
    })?;
    let bank = GraphBank::build(&corpus, 0.01)?;
    let mut counts = [0usize; 3];
    for &p in &corpus.split.train {
        let Some((graph, _)) = bank.get(p) else { continue };
        for e in graph.edges() {
            let class = corpus
                .relation
                .get(graph.drugs()[e.from], graph.drugs()[e.to]);
            if let Some(idx) = class.class_index() {
                counts[idx] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    println!("classification samples per epoch over {} training graphs:", corpus.split.train.len());
    println!("  no-interaction: {} ({:.1}%)", counts[0], 100.0 * counts[0] as f64 / total as f64);
    println!("  synergism:      {} ({:.1}%)", counts[1], 100.0 * counts[1] as f64 / total as f64);
    println!("  antagonism:     {} ({:.1}%)", counts[2], 100.0 * counts[2] as f64 / total as f64);

    // Visible label list distribution for comparison.
    let mut label_counts = [0usize; 3];
    for l in corpus.labels.iter().chain(&corpus.heldout_labels) {
        if let Some(i) = l.class.class_index() {
            label_counts[i] += 1;
        }
    }
    println!("planted label mix (visible+heldout): {:?}", label_counts);
    Ok(())
}
