//! Package graphs: co-occurrence statistics, topology construction from
//! interaction labels plus thresholded co-occurrence, and the generic
//! message-passing contract.

use std::fmt::Write as _;

use crate::corpus::{DrugId, Package, RelationMatrix};
use crate::error::{Error, Result};

/// Drug co-occurrence counts over the training packages.
///
/// `proportion(i, j)` is `num_ij / num_i`: among packages containing drug
/// `i`, the fraction that also contain `j`. Defined as 0 when `num_i` is 0
/// and for `i == j` (self-pairs are excluded).
#[derive(Clone, Debug, PartialEq)]
pub struct CooccurrenceStats {
    n_drugs: usize,
    num: Vec<u32>,
    num_pair: Vec<u32>,
}

impl CooccurrenceStats {
    pub fn from_packages(packages: &[Package], n_drugs: usize) -> Self {
        let mut num = vec![0u32; n_drugs];
        let mut num_pair = vec![0u32; n_drugs * n_drugs];
        for package in packages {
            let drugs: Vec<DrugId> = package.iter().copied().collect();
            for &d in &drugs {
                num[d] += 1;
            }
            for &a in &drugs {
                for &b in &drugs {
                    if a != b {
                        num_pair[a * n_drugs + b] += 1;
                    }
                }
            }
        }
        CooccurrenceStats {
            n_drugs,
            num,
            num_pair,
        }
    }

    pub fn n_drugs(&self) -> usize {
        self.n_drugs
    }

    /// Packages containing drug `i`.
    pub fn num(&self, i: DrugId) -> usize {
        self.num[i] as usize
    }

    /// Packages containing both drugs.
    pub fn num_pair(&self, i: DrugId, j: DrugId) -> usize {
        self.num_pair[i * self.n_drugs + j] as usize
    }

    pub fn proportion(&self, i: DrugId, j: DrugId) -> f64 {
        if i == j || self.num[i] == 0 {
            return 0.0;
        }
        self.num_pair[i * self.n_drugs + j] as f64 / self.num[i] as f64
    }
}

/// Why an edge exists.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum EdgeProvenance {
    Labeled,
    Cooccur,
}

/// Directed edge `from -> to` between node indices of one package graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub provenance: EdgeProvenance,
    /// Raw co-occurrence proportion from the sender's drug to the receiver's
    /// drug, kept for edge-weight initialization and dumps.
    pub cooccurrence: f64,
}

/// Graph over one package: nodes are the package's drugs, directed edges
/// carry provenance and the raw co-occurrence proportion.
#[derive(Clone, Debug, PartialEq)]
pub struct PackageGraph {
    drugs: Vec<DrugId>,
    edges: Vec<Edge>,
    incoming: Vec<Vec<usize>>,
}

impl PackageGraph {
    pub fn n_nodes(&self) -> usize {
        self.drugs.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Node index -> drug id (ascending drug order).
    pub fn drugs(&self) -> &[DrugId] {
        &self.drugs
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Indices into `edges()` for edges arriving at `node`.
    pub fn incoming(&self, node: usize) -> &[usize] {
        &self.incoming[node]
    }

    /// Debug dump: node list then edge list with provenance and raw p.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#graph nodes={} edges={}", self.n_nodes(), self.n_edges());
        for (i, d) in self.drugs.iter().enumerate() {
            let _ = writeln!(out, "node {i} drug={d}");
        }
        for e in &self.edges {
            let tag = match e.provenance {
                EdgeProvenance::Labeled => "LABELED",
                EdgeProvenance::Cooccur => "COOCCUR",
            };
            let _ = writeln!(
                out,
                "edge {} {} provenance={tag} p={:.6}",
                e.from, e.to, e.cooccurrence
            );
        }
        out
    }
}

/// Build the package graph for one drug set.
///
/// A directed edge `(v, u)` exists iff the pair is labeled in the relation
/// matrix (`R[v][u]` is not unknown) or the co-occurrence proportion clears
/// `threshold` in either direction. There is never a complete-graph fallback
/// and never a self-loop. Packages below two drugs are rejected.
pub fn construct_package_graph(
    package: &Package,
    relation: &RelationMatrix,
    stats: &CooccurrenceStats,
    threshold: f64,
) -> Result<PackageGraph> {
    if package.len() < 2 {
        return Err(Error::Graph(format!(
            "package of size {} has no graph",
            package.len()
        )));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Graph(format!("threshold {threshold} outside [0,1]")));
    }
    let drugs: Vec<DrugId> = package.iter().copied().collect();
    let n = drugs.len();
    let mut edges = Vec::new();
    let mut incoming = vec![Vec::new(); n];
    for (vi, &v) in drugs.iter().enumerate() {
        for (ui, &u) in drugs.iter().enumerate() {
            if vi == ui {
                continue;
            }
            let labeled = relation.get(v, u).is_labeled();
            let p_forward = stats.proportion(v, u);
            let p_backward = stats.proportion(u, v);
            let cooccur = p_forward.max(p_backward) >= threshold;
            if labeled || cooccur {
                let provenance = if labeled {
                    EdgeProvenance::Labeled
                } else {
                    EdgeProvenance::Cooccur
                };
                incoming[ui].push(edges.len());
                edges.push(Edge {
                    from: vi,
                    to: ui,
                    provenance,
                    cooccurrence: p_forward,
                });
            }
        }
    }
    Ok(PackageGraph {
        drugs,
        edges,
        incoming,
    })
}

/// One message-passing layer: MESSAGE, AGGREGATION, UPDATE.
///
/// Aggregation defaults to a vector sum whose empty-case identity is the
/// zero vector; isolated nodes aggregate to zeros and still go through
/// UPDATE.
pub trait MpnnLayer {
    fn message_dim(&self) -> usize;

    /// Message along edge `v -> u` given receiver state, sender state, and
    /// the edge itself.
    fn message(&self, receiver: &[f64], sender: &[f64], edge: &Edge) -> Vec<f64>;

    fn aggregate(&self, messages: &[Vec<f64>]) -> Vec<f64> {
        let mut acc = vec![0.0; self.message_dim()];
        for m in messages {
            for (a, v) in acc.iter_mut().zip(m) {
                *a += v;
            }
        }
        acc
    }

    fn update(&self, aggregated: &[f64], state: &[f64]) -> Vec<f64>;
}

/// Run `layers` synchronous passes over the graph. `init` holds one state
/// vector per node (layer 0 is the drug embedding for the package models).
/// Messages flow along the stored edge direction: edge `(v, u)` delivers
/// from `v` to `u`.
pub fn run_message_passing(
    graph: &PackageGraph,
    init: Vec<Vec<f64>>,
    layer: &impl MpnnLayer,
    layers: usize,
) -> Vec<Vec<f64>> {
    assert_eq!(init.len(), graph.n_nodes(), "one state per node");
    assert!(layers >= 1, "at least one pass");
    let mut states = init;
    for _ in 0..layers {
        let mut next = Vec::with_capacity(states.len());
        for u in 0..graph.n_nodes() {
            let messages: Vec<Vec<f64>> = graph
                .incoming(u)
                .iter()
                .map(|&e| {
                    let edge = &graph.edges()[e];
                    layer.message(&states[u], &states[edge.from], edge)
                })
                .collect();
            let aggregated = layer.aggregate(&messages);
            next.push(layer.update(&aggregated, &states[u]));
        }
        states = next;
    }
    states
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_relation_matrix, Direction, InteractionClass, LabeledPair};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeSet;

    fn pkg(drugs: &[DrugId]) -> Package {
        drugs.iter().copied().collect()
    }

    #[test]
    fn cooccurrence_matches_hand_counts() {
        // packages [{0,1},{0,2},{0,1}] -> p_01 = 2/3, p_10 = 1
        let packages = vec![pkg(&[0, 1]), pkg(&[0, 2]), pkg(&[0, 1])];
        let stats = CooccurrenceStats::from_packages(&packages, 3);
        assert_eq!(stats.num(0), 3);
        assert_eq!(stats.num_pair(0, 1), 2);
        assert!((stats.proportion(0, 1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((stats.proportion(1, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn absent_drug_has_zero_proportion_everywhere() {
        let packages = vec![pkg(&[0, 1])];
        let stats = CooccurrenceStats::from_packages(&packages, 4);
        for j in 0..4 {
            assert_eq!(stats.proportion(3, j), 0.0);
        }
    }

    #[test]
    fn self_pairs_are_excluded() {
        let packages = vec![pkg(&[0, 1]), pkg(&[0, 2])];
        let stats = CooccurrenceStats::from_packages(&packages, 3);
        assert_eq!(stats.proportion(0, 0), 0.0);
        assert_eq!(stats.num_pair(0, 0), 0);
    }

    // Brute-force counting oracle over random packages.
    #[test]
    fn cooccurrence_matches_brute_force_on_random_packages() {
        let mut rng = StdRng::seed_from_u64(42);
        let n_drugs = 12;
        let packages: Vec<Package> = (0..50)
            .map(|_| {
                let size = rng.gen_range(2..6);
                let mut p = BTreeSet::new();
                while p.len() < size {
                    p.insert(rng.gen_range(0..n_drugs));
                }
                p
            })
            .collect();
        let stats = CooccurrenceStats::from_packages(&packages, n_drugs);
        for i in 0..n_drugs {
            for j in 0..n_drugs {
                if i == j {
                    continue;
                }
                let num_i = packages.iter().filter(|p| p.contains(&i)).count();
                let num_ij = packages
                    .iter()
                    .filter(|p| p.contains(&i) && p.contains(&j))
                    .count();
                let expected = if num_i == 0 {
                    0.0
                } else {
                    num_ij as f64 / num_i as f64
                };
                assert!((stats.proportion(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    fn relation_with(pairs: &[LabeledPair], m: usize) -> RelationMatrix {
        build_relation_matrix(pairs, m).unwrap()
    }

    #[test]
    fn labeled_pair_below_threshold_still_gets_edge() {
        let relation = relation_with(
            &[LabeledPair {
                drug_a: 0,
                drug_b: 1,
                class: InteractionClass::Antagonism,
                direction: Direction::AToB,
            }],
            3,
        );
        // 0 and 1 never co-occur in the stats.
        let stats = CooccurrenceStats::from_packages(&[pkg(&[0, 2]), pkg(&[1, 2])], 3);
        let g = construct_package_graph(&pkg(&[0, 1]), &relation, &stats, 0.5).unwrap();
        assert_eq!(g.n_edges(), 1);
        let e = &g.edges()[0];
        assert_eq!((e.from, e.to), (0, 1));
        assert_eq!(e.provenance, EdgeProvenance::Labeled);
    }

    #[test]
    fn cooccurring_unlabeled_pair_gets_edge_with_cooccur_provenance() {
        let relation = RelationMatrix::new(3);
        let stats = CooccurrenceStats::from_packages(&[pkg(&[0, 1]), pkg(&[0, 1])], 3);
        let g = construct_package_graph(&pkg(&[0, 1]), &relation, &stats, 0.01).unwrap();
        assert_eq!(g.n_edges(), 2); // both directions clear the threshold
        assert!(g
            .edges()
            .iter()
            .all(|e| e.provenance == EdgeProvenance::Cooccur));
    }

    #[test]
    fn never_cooccurring_unlabeled_pair_has_no_edge() {
        let relation = RelationMatrix::new(3);
        let stats = CooccurrenceStats::from_packages(&[pkg(&[0, 2])], 3);
        let g = construct_package_graph(&pkg(&[0, 1]), &relation, &stats, 0.01).unwrap();
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn package_below_two_drugs_is_rejected() {
        let relation = RelationMatrix::new(3);
        let stats = CooccurrenceStats::from_packages(&[], 3);
        assert!(construct_package_graph(&pkg(&[0]), &relation, &stats, 0.01).is_err());
        assert!(construct_package_graph(&pkg(&[]), &relation, &stats, 0.01).is_err());
    }

    #[test]
    fn node_set_equals_package_and_no_self_loops() {
        let relation = RelationMatrix::new(6);
        let packages = vec![pkg(&[0, 2, 4]), pkg(&[0, 2]), pkg(&[2, 4])];
        let stats = CooccurrenceStats::from_packages(&packages, 6);
        let g = construct_package_graph(&pkg(&[0, 2, 4]), &relation, &stats, 0.01).unwrap();
        assert_eq!(g.drugs(), &[0, 2, 4]);
        assert!(g.edges().iter().all(|e| e.from != e.to));
    }

    // Brute-force filter over ordered pairs: the oracle for graph topology.
    fn oracle_edges(
        package: &Package,
        relation: &RelationMatrix,
        stats: &CooccurrenceStats,
        threshold: f64,
    ) -> BTreeSet<(DrugId, DrugId)> {
        let drugs: Vec<DrugId> = package.iter().copied().collect();
        let mut out = BTreeSet::new();
        for &v in &drugs {
            for &u in &drugs {
                if v == u {
                    continue;
                }
                let labeled = relation.get(v, u) != InteractionClass::Unknown;
                let cooccur = stats.proportion(v, u).max(stats.proportion(u, v)) >= threshold;
                if labeled || cooccur {
                    out.insert((v, u));
                }
            }
        }
        out
    }

    #[test]
    fn topology_matches_brute_force_oracle_on_random_instances() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let n_drugs = rng.gen_range(5..15);
            let packages: Vec<Package> = (0..rng.gen_range(3..20))
                .map(|_| {
                    let size = rng.gen_range(2..=n_drugs.min(8));
                    let mut p = BTreeSet::new();
                    while p.len() < size {
                        p.insert(rng.gen_range(0..n_drugs));
                    }
                    p
                })
                .collect();
            let mut pairs: Vec<LabeledPair> = Vec::new();
            for _ in 0..rng.gen_range(0..6) {
                let a = rng.gen_range(0..n_drugs);
                let b = rng.gen_range(0..n_drugs);
                let dup = pairs
                    .iter()
                    .any(|p| (p.drug_a == a && p.drug_b == b) || (p.drug_a == b && p.drug_b == a));
                if a == b || dup {
                    continue;
                }
                pairs.push(LabeledPair {
                    drug_a: a,
                    drug_b: b,
                    class: [
                        InteractionClass::NoInteraction,
                        InteractionClass::Synergism,
                        InteractionClass::Antagonism,
                    ][rng.gen_range(0..3)],
                    direction: [Direction::AToB, Direction::BToA, Direction::Bidirection]
                        [rng.gen_range(0..3)],
                });
            }
            let relation = relation_with(&pairs, n_drugs);
            let stats = CooccurrenceStats::from_packages(&packages, n_drugs);
            let threshold = rng.gen_range(0.0..0.8);
            let package = &packages[0];
            let g = construct_package_graph(package, &relation, &stats, threshold).unwrap();
            let got: BTreeSet<(DrugId, DrugId)> = g
                .edges()
                .iter()
                .map(|e| (g.drugs()[e.from], g.drugs()[e.to]))
                .collect();
            assert_eq!(got, oracle_edges(package, &relation, &stats, threshold));
        }
    }

    #[test]
    fn lowering_threshold_never_removes_edges() {
        let mut rng = StdRng::seed_from_u64(3);
        let n_drugs = 10;
        let packages: Vec<Package> = (0..15)
            .map(|_| {
                let mut p = BTreeSet::new();
                while p.len() < 4 {
                    p.insert(rng.gen_range(0..n_drugs));
                }
                p
            })
            .collect();
        let relation = RelationMatrix::new(n_drugs);
        let stats = CooccurrenceStats::from_packages(&packages, n_drugs);
        let package = packages[0].clone();
        let mut prev: Option<usize> = None;
        for threshold in [0.9, 0.5, 0.2, 0.05, 0.0] {
            let g = construct_package_graph(&package, &relation, &stats, threshold).unwrap();
            if let Some(p) = prev {
                assert!(g.n_edges() >= p, "edges shrank as threshold dropped");
            }
            prev = Some(g.n_edges());
        }
    }

    // Identity MESSAGE with sum aggregation and additive UPDATE.
    struct SumLayer {
        dim: usize,
    }

    impl MpnnLayer for SumLayer {
        fn message_dim(&self) -> usize {
            self.dim
        }
        fn message(&self, _receiver: &[f64], sender: &[f64], _edge: &Edge) -> Vec<f64> {
            sender.to_vec()
        }
        fn update(&self, aggregated: &[f64], state: &[f64]) -> Vec<f64> {
            aggregated.iter().zip(state).map(|(a, s)| a + s).collect()
        }
    }

    fn two_node_one_edge_graph() -> PackageGraph {
        let relation = relation_with(
            &[LabeledPair {
                drug_a: 0,
                drug_b: 1,
                class: InteractionClass::Synergism,
                direction: Direction::AToB,
            }],
            2,
        );
        let stats = CooccurrenceStats::from_packages(&[], 2);
        construct_package_graph(&pkg(&[0, 1]), &relation, &stats, 0.5).unwrap()
    }

    #[test]
    fn two_node_hand_trace() {
        let g = two_node_one_edge_graph();
        assert_eq!(g.n_edges(), 1);
        let layer = SumLayer { dim: 2 };
        let init = vec![vec![1.0, 2.0], vec![10.0, 20.0]];
        let out = run_message_passing(&g, init, &layer, 1);
        // Node 0 has no in-edges: state + zeros. Node 1 receives node 0's state.
        assert_eq!(out[0], vec![1.0, 2.0]);
        assert_eq!(out[1], vec![11.0, 22.0]);
    }

    #[test]
    fn empty_graph_still_updates_every_node() {
        let relation = RelationMatrix::new(3);
        let stats = CooccurrenceStats::from_packages(&[], 3);
        let g = construct_package_graph(&pkg(&[0, 1, 2]), &relation, &stats, 0.5).unwrap();
        assert_eq!(g.n_edges(), 0);
        let layer = SumLayer { dim: 1 };
        let out = run_message_passing(&g, vec![vec![3.0], vec![4.0], vec![5.0]], &layer, 1);
        assert_eq!(out, vec![vec![3.0], vec![4.0], vec![5.0]]);
    }

    // Rebuild a graph under a node relabeling (test helper).
    fn permute_graph(g: &PackageGraph, perm: &[usize]) -> PackageGraph {
        // perm[new] = old
        let mut inv = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let drugs: Vec<DrugId> = perm.iter().map(|&old| g.drugs()[old]).collect();
        let mut edges: Vec<Edge> = g
            .edges()
            .iter()
            .map(|e| Edge {
                from: inv[e.from],
                to: inv[e.to],
                provenance: e.provenance,
                cooccurrence: e.cooccurrence,
            })
            .collect();
        edges.sort_by_key(|e| (e.to, e.from));
        let mut incoming = vec![Vec::new(); drugs.len()];
        for (i, e) in edges.iter().enumerate() {
            incoming[e.to].push(i);
        }
        PackageGraph {
            drugs,
            edges,
            incoming,
        }
    }

    #[test]
    fn message_passing_is_permutation_equivariant() {
        let mut rng = StdRng::seed_from_u64(11);
        let n_drugs = 8;
        let packages: Vec<Package> = (0..12)
            .map(|_| {
                let mut p = BTreeSet::new();
                while p.len() < 5 {
                    p.insert(rng.gen_range(0..n_drugs));
                }
                p
            })
            .collect();
        let stats = CooccurrenceStats::from_packages(&packages, n_drugs);
        let relation = RelationMatrix::new(n_drugs);
        let package = packages[0].clone();
        let g = construct_package_graph(&package, &relation, &stats, 0.1).unwrap();
        let layer = SumLayer { dim: 3 };
        let init: Vec<Vec<f64>> = (0..g.n_nodes())
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let out = run_message_passing(&g, init.clone(), &layer, 2);

        let perm: Vec<usize> = {
            let mut idx: Vec<usize> = (0..g.n_nodes()).collect();
            idx.reverse();
            idx
        };
        let permuted_init: Vec<Vec<f64>> = perm.iter().map(|&i| init[i].clone()).collect();
        let g_perm = permute_graph(&g, &perm);
        let out_perm = run_message_passing(&g_perm, permuted_init, &layer, 2);
        for (new_idx, &old_idx) in perm.iter().enumerate() {
            for (a, b) in out_perm[new_idx].iter().zip(&out[old_idx]) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sum_aggregation_is_order_independent_within_tolerance() {
        use rand::seq::SliceRandom;
        let mut rng = StdRng::seed_from_u64(23);
        let layer = SumLayer { dim: 4 };
        let messages: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..4).map(|_| rng.gen_range(-10.0..10.0)).collect())
            .collect();
        let base = layer.aggregate(&messages);
        for _ in 0..100 {
            let mut shuffled = messages.clone();
            shuffled.shuffle(&mut rng);
            let agg = layer.aggregate(&shuffled);
            for (a, b) in agg.iter().zip(&base) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn dump_contains_nodes_edges_and_provenance() {
        let g = two_node_one_edge_graph();
        let dump = g.dump();
        assert!(dump.contains("nodes=2 edges=1"));
        assert!(dump.contains("node 0 drug=0"));
        assert!(dump.contains("provenance=LABELED"));
    }
}
