use dpr::corpus::{generate_synthetic_corpus, GeneratorConfig, InteractionClass, Package};

fn coprop(packages: &[Package], a: usize, b: usize) -> (f64, usize) {
    let num_a = packages.iter().filter(|p| p.contains(&a)).count();
    let num_ab = packages.iter().filter(|p| p.contains(&a) && p.contains(&b)).count();
    (if num_a == 0 { 0.0 } else { num_ab as f64 / num_a as f64 }, num_a)
}

fn main() {
    let corpus = generate_synthetic_corpus(&GeneratorConfig {
        seed: 7, n_patients: 300, n_drugs: 60, note_len: 16,
        ..GeneratorConfig::default()
    }).unwrap();
    let n = corpus.packages.len() as f64;
    for l in &corpus.labels {
        if l.class != InteractionClass::Antagonism { continue; }
        let (p_ab, num_a) = coprop(&corpus.packages, l.drug_a, l.drug_b);
        let num_b = corpus.packages.iter().filter(|p| p.contains(&l.drug_b)).count() as f64;
        let chance = num_b / n;
        let flag = if p_ab < chance { "ok " } else { "BAD" };
        println!("{flag} ({:>2},{:>2}) p_ab={p_ab:.3} chance={chance:.3} num_a={num_a}", l.drug_a, l.drug_b);
    }
}
