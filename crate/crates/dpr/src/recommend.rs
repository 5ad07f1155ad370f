//! Candidate retrieval, package ranking, baselines, ablation variants, and
//! precision/recall/F1 evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DrugId, Package, RelationMatrix};
use crate::dpr_ag::{train_ag, AgModel, AgTrainOptions, AgVariant};
use crate::dpr_wg::{
    init_edge_weights, train_wg, GraphBank, WgModel, WgTrainOptions, WgVariant,
};
use crate::embedding::PretrainModel;
use crate::error::{Error, Result};
use crate::graph::{construct_package_graph, CooccurrenceStats};

/// Where a candidate package came from.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateSource {
    SimilarPatient,
    Generated,
}

/// A package with its model score; scores compare only within one patient's
/// candidate list.
#[derive(Clone, Debug)]
pub struct ScoredCandidate {
    pub package: Package,
    pub source: CandidateSource,
    pub score: f64,
}

/// Cosine similarity; zero vectors compare as 0.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Packages of the `k` training patients most similar to `u` by cosine
/// similarity. Ties break toward the lower patient index; identical packages
/// are deduplicated keeping the first occurrence. Asking for more neighbors
/// than exist returns them all.
pub fn candidate_set(
    u: &[f64],
    train_indices: &[usize],
    embeddings: &[Vec<f64>],
    packages: &[Package],
    k: usize,
) -> Vec<(usize, Package)> {
    let mut scored: Vec<(usize, f64)> = train_indices
        .iter()
        .map(|&p| (p, cosine_similarity(u, &embeddings[p])))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut out: Vec<(usize, Package)> = Vec::new();
    for (p, _) in scored.into_iter().take(k) {
        if !out.iter().any(|(_, existing)| *existing == packages[p]) {
            out.push((p, packages[p].clone()));
        }
    }
    out
}

/// Rank candidates best-first under a scoring function. The sort is stable:
/// equal scores keep candidate order.
pub fn rank_candidates<F>(
    score: F,
    candidates: Vec<(Package, CandidateSource)>,
) -> Result<Vec<ScoredCandidate>>
where
    F: Fn(&Package) -> Result<f64>,
{
    if candidates.is_empty() {
        return Err(Error::Eval("empty candidate list".into()));
    }
    let mut scored: Vec<ScoredCandidate> = candidates
        .into_iter()
        .map(|(package, source)| {
            Ok(ScoredCandidate {
                score: score(&package)?,
                package,
                source,
            })
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    Ok(scored)
}

/// Precision/recall/F1 for one recommendation.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set-overlap metrics; empty recommendations score zero precision, and F1
/// is the harmonic mean (zero when both sides are zero).
pub fn evaluate(recommended: &Package, truth: &Package) -> Result<Metrics> {
    if truth.is_empty() {
        return Err(Error::Eval("ground-truth package is empty".into()));
    }
    let hits = recommended.intersection(truth).count() as f64;
    let precision = if recommended.is_empty() {
        0.0
    } else {
        hits / recommended.len() as f64
    };
    let recall = hits / truth.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        precision,
        recall,
        f1,
    })
}

/// Mean of per-patient metrics (unweighted macro average).
pub fn mean_metrics(rows: &[Metrics]) -> Metrics {
    if rows.is_empty() {
        return Metrics::default();
    }
    let n = rows.len() as f64;
    Metrics {
        precision: rows.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: rows.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: rows.iter().map(|m| m.f1).sum::<f64>() / n,
    }
}

/// Per-patient and mean metrics for one model run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_patient: Vec<(usize, Metrics)>,
    pub mean: Metrics,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<(usize, Metrics)>) -> Self {
        let metrics: Vec<Metrics> = rows.iter().map(|(_, m)| *m).collect();
        EvalReport {
            mean: mean_metrics(&metrics),
            per_patient: rows,
        }
    }
}

/// The k highest-scoring drug indices, ties toward lower drug ids.
pub fn top_k_drugs(scores: &[f64], k: usize) -> Vec<DrugId> {
    let mut order: Vec<DrugId> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Rounded mean training-split package size: the K for the top-K baseline.
pub fn ncf_k(corpus: &Corpus) -> usize {
    let train = &corpus.split.train;
    if train.is_empty() {
        return 0;
    }
    let total: usize = train.iter().map(|&p| corpus.packages[p].len()).sum();
    ((total as f64 / train.len() as f64).round() as usize).max(1)
}

/// Top-K per-drug baseline from the pre-trained matching head.
pub fn ncf_topk_baseline(model: &PretrainModel, u: &[f64], k: usize) -> Package {
    let scores: Vec<f64> = (0..model.dims.n_drugs)
        .map(|d| model.score_patient_drug(u, d))
        .collect();
    top_k_drugs(&scores, k).into_iter().collect()
}

/// Nearest-neighbor baseline: the single most similar training patient's
/// package.
pub fn nn_baseline(
    u: &[f64],
    train_indices: &[usize],
    embeddings: &[Vec<f64>],
    packages: &[Package],
) -> Option<Package> {
    candidate_set(u, train_indices, embeddings, packages, 1)
        .into_iter()
        .next()
        .map(|(_, p)| p)
}

/// A trained package scorer behind one interface, constructing candidate
/// graphs on demand from frozen training statistics.
pub enum PackageScorer<'a> {
    Weighted {
        model: &'a WgModel,
        relation: &'a RelationMatrix,
        stats: &'a CooccurrenceStats,
        threshold: f64,
    },
    Attributed {
        model: &'a AgModel,
        relation: &'a RelationMatrix,
        stats: &'a CooccurrenceStats,
        threshold: f64,
    },
}

impl<'a> PackageScorer<'a> {
    pub fn weighted(model: &'a WgModel, bank: &'a GraphBank, relation: &'a RelationMatrix) -> Self {
        PackageScorer::Weighted {
            model,
            relation,
            stats: &bank.stats,
            threshold: bank.threshold,
        }
    }

    pub fn attributed(
        model: &'a AgModel,
        bank: &'a GraphBank,
        relation: &'a RelationMatrix,
    ) -> Self {
        PackageScorer::Attributed {
            model,
            relation,
            stats: &bank.stats,
            threshold: bank.threshold,
        }
    }

    pub fn score(&self, u: &[f64], package: &Package) -> Result<f64> {
        match self {
            PackageScorer::Weighted {
                model,
                relation,
                stats,
                threshold,
            } => {
                let graph = construct_package_graph(package, relation, stats, *threshold)?;
                let weights = init_edge_weights(&graph, relation, stats);
                Ok(model.score_package(u, &graph, &weights))
            }
            PackageScorer::Attributed {
                model,
                relation,
                stats,
                threshold,
            } => {
                let graph = construct_package_graph(package, relation, stats, *threshold)?;
                Ok(model.score_package(u, &graph))
            }
        }
    }
}

/// Evaluate a candidate-set scorer over the test split: retrieve, rank, pick
/// the best candidate, compare to ground truth.
pub fn evaluate_scorer(
    corpus: &Corpus,
    embeddings: &[Vec<f64>],
    scorer: &PackageScorer,
    neighbors: usize,
) -> Result<EvalReport> {
    let rows: Vec<Result<(usize, Metrics)>> = corpus
        .split
        .test
        .par_iter()
        .map(|&p| {
            let u = &embeddings[p];
            let candidates = candidate_set(
                u,
                &corpus.split.train,
                embeddings,
                &corpus.packages,
                neighbors,
            );
            let pool: Vec<(Package, CandidateSource)> = candidates
                .into_iter()
                .map(|(_, pkg)| (pkg, CandidateSource::SimilarPatient))
                .collect();
            let ranked = rank_candidates(|pkg| scorer.score(u, pkg), pool)?;
            let metrics = evaluate(&ranked[0].package, &corpus.packages[p])?;
            Ok((p, metrics))
        })
        .collect();
    let rows: Vec<(usize, Metrics)> = rows.into_iter().collect::<Result<_>>()?;
    Ok(EvalReport::from_rows(rows))
}

/// Evaluate the top-K baseline over the test split.
pub fn evaluate_ncf_baseline(
    corpus: &Corpus,
    embeddings: &[Vec<f64>],
    model: &PretrainModel,
) -> Result<EvalReport> {
    let k = ncf_k(corpus);
    let rows: Vec<Result<(usize, Metrics)>> = corpus
        .split
        .test
        .par_iter()
        .map(|&p| {
            let rec = ncf_topk_baseline(model, &embeddings[p], k);
            Ok((p, evaluate(&rec, &corpus.packages[p])?))
        })
        .collect();
    let rows: Vec<(usize, Metrics)> = rows.into_iter().collect::<Result<_>>()?;
    Ok(EvalReport::from_rows(rows))
}

/// Evaluate the nearest-neighbor baseline over the test split.
pub fn evaluate_nn_baseline(corpus: &Corpus, embeddings: &[Vec<f64>]) -> Result<EvalReport> {
    let rows: Vec<Result<(usize, Metrics)>> = corpus
        .split
        .test
        .par_iter()
        .map(|&p| {
            let rec = nn_baseline(
                &embeddings[p],
                &corpus.split.train,
                embeddings,
                &corpus.packages,
            )
            .ok_or_else(|| Error::Eval("no training neighbors".into()))?;
            Ok((p, evaluate(&rec, &corpus.packages[p])?))
        })
        .collect();
    let rows: Vec<(usize, Metrics)> = rows.into_iter().collect::<Result<_>>()?;
    Ok(EvalReport::from_rows(rows))
}

/// Recognized simplified variants.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationVariant {
    WgContext,
    WgType,
    AgMask,
    AgType,
    GnnPlain,
}

impl AblationVariant {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "wg-context" => AblationVariant::WgContext,
            "wg-type" => AblationVariant::WgType,
            "ag-mask" => AblationVariant::AgMask,
            "ag-type" => AblationVariant::AgType,
            "gnn-plain" => AblationVariant::GnnPlain,
            other => {
                return Err(Error::Config(format!(
                    "unknown ablation variant `{other}` (expected wg-context, wg-type, ag-mask, ag-type, gnn-plain)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AblationVariant::WgContext => "wg-context",
            AblationVariant::WgType => "wg-type",
            AblationVariant::AgMask => "ag-mask",
            AblationVariant::AgType => "ag-type",
            AblationVariant::GnnPlain => "gnn-plain",
        }
    }
}

/// Train the requested simplified variant and evaluate it on the test split.
pub fn run_ablation(
    variant: AblationVariant,
    corpus: &Corpus,
    pretrained: &PretrainModel,
    embeddings: &[Vec<f64>],
    wg_opts: &WgTrainOptions,
    ag_opts: &AgTrainOptions,
    neighbors: usize,
) -> Result<EvalReport> {
    match variant {
        AblationVariant::WgContext | AblationVariant::WgType | AblationVariant::GnnPlain => {
            let mut opts = wg_opts.clone();
            opts.variant = match variant {
                AblationVariant::WgContext => WgVariant::context_ablation(),
                AblationVariant::WgType => WgVariant::type_ablation(),
                _ => WgVariant::plain_gnn(),
            };
            let out = train_wg(corpus, pretrained, embeddings, &opts)?;
            let scorer = PackageScorer::weighted(&out.model, &out.bank, &corpus.relation);
            evaluate_scorer(corpus, embeddings, &scorer, neighbors)
        }
        AblationVariant::AgMask | AblationVariant::AgType => {
            let mut opts = ag_opts.clone();
            opts.variant = if variant == AblationVariant::AgMask {
                AgVariant::mask_ablation()
            } else {
                AgVariant::type_ablation()
            };
            let out = train_ag(corpus, pretrained, embeddings, &opts)?;
            let scorer = PackageScorer::attributed(&out.model, &out.bank, &corpus.relation);
            evaluate_scorer(corpus, embeddings, &scorer, neighbors)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn pkg(drugs: &[usize]) -> Package {
        drugs.iter().copied().collect()
    }

    #[test]
    fn exact_match_scores_ones() {
        let m = evaluate(&pkg(&[1, 2, 3]), &pkg(&[1, 2, 3])).unwrap();
        assert_eq!(
            m,
            Metrics {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
    }

    #[test]
    fn disjoint_sets_score_zeros() {
        let m = evaluate(&pkg(&[1, 2]), &pkg(&[3, 4])).unwrap();
        assert_eq!(m, Metrics::default());
    }

    #[test]
    fn partial_overlap_matches_hand_formula() {
        // rec {a,b,c,d}, truth {a,b,e}: P = 1/2, R = 2/3, F1 = 4/7
        let m = evaluate(&pkg(&[0, 1, 2, 3]), &pkg(&[0, 1, 4])).unwrap();
        assert!((m.precision - 0.5).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.f1 - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn empty_recommendation_has_zero_precision() {
        let m = evaluate(&pkg(&[]), &pkg(&[1])).unwrap();
        assert_eq!(m, Metrics::default());
    }

    #[test]
    fn empty_truth_is_an_error() {
        assert!(evaluate(&pkg(&[1]), &pkg(&[])).is_err());
    }

    #[test]
    fn metrics_are_bounded_and_f1_respects_min_side_bound() {
        let cases = [
            (pkg(&[0, 1, 2]), pkg(&[1, 2, 3, 4])),
            (pkg(&[5]), pkg(&[5])),
            (pkg(&[0, 9]), pkg(&[1, 2])),
            (pkg(&[0, 1, 2, 3, 4, 5]), pkg(&[0])),
        ];
        for (rec, truth) in cases {
            let m = evaluate(&rec, &truth).unwrap();
            for v in [m.precision, m.recall, m.f1] {
                assert!((0.0..=1.0).contains(&v));
            }
            let min_side = m.precision.min(m.recall);
            assert!(m.f1 <= 2.0 * min_side / (1.0 + min_side) + 1e-12);
        }
    }

    #[test]
    fn identical_patient_ranks_first() {
        let embeddings = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.7, 0.7],
            vec![1.0, 0.0], // query twin of patient 0
        ];
        let packages = vec![pkg(&[0, 1]), pkg(&[2, 3]), pkg(&[4, 5]), pkg(&[6, 7])];
        let got = candidate_set(&embeddings[3], &[0, 1, 2], &embeddings, &packages, 2);
        assert_eq!(got[0].0, 0, "twin should rank first with cosine 1");
    }

    #[test]
    fn k_of_one_returns_single_package() {
        let embeddings = vec![vec![1.0, 0.0], vec![0.5, 0.5]];
        let packages = vec![pkg(&[0]), pkg(&[1])];
        let got = candidate_set(&[1.0, 0.1], &[0, 1], &embeddings, &packages, 1);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0, 0);
    }

    #[test]
    fn hand_placed_angles_order_by_cosine() {
        // Query along x-axis; neighbors at 10, 45, and 80 degrees.
        let rad = |deg: f64| deg.to_radians();
        let embeddings = vec![
            vec![rad(45.0).cos(), rad(45.0).sin()],
            vec![rad(10.0).cos(), rad(10.0).sin()],
            vec![rad(80.0).cos(), rad(80.0).sin()],
        ];
        let packages = vec![pkg(&[0]), pkg(&[1]), pkg(&[2])];
        let got = candidate_set(&[1.0, 0.0], &[0, 1, 2], &embeddings, &packages, 3);
        let order: Vec<usize> = got.iter().map(|(p, _)| *p).collect();
        assert_eq!(order, vec![1, 0, 2]);
    }

    #[test]
    fn oversized_k_returns_everything() {
        let embeddings = vec![vec![1.0], vec![2.0]];
        let packages = vec![pkg(&[0]), pkg(&[1])];
        let got = candidate_set(&[1.0], &[0, 1], &embeddings, &packages, 10);
        assert_eq!(got.len(), 2);
    }

    #[test]
    fn candidate_order_is_scale_invariant() {
        let embeddings: Vec<Vec<f64>> = vec![
            vec![0.3, 0.9, -0.2],
            vec![-0.5, 0.1, 0.8],
            vec![0.9, 0.2, 0.1],
            vec![0.2, -0.7, 0.4],
        ];
        let packages: Vec<Package> = (0..4).map(|i| pkg(&[i])).collect();
        let u = vec![0.4, 0.4, 0.1];
        let base: Vec<usize> = candidate_set(&u, &[0, 1, 2, 3], &embeddings, &packages, 4)
            .into_iter()
            .map(|(p, _)| p)
            .collect();
        let scaled: Vec<Vec<f64>> = embeddings
            .iter()
            .map(|e| e.iter().map(|v| v * 7.5).collect())
            .collect();
        let after: Vec<usize> = candidate_set(&u, &[0, 1, 2, 3], &scaled, &packages, 4)
            .into_iter()
            .map(|(p, _)| p)
            .collect();
        assert_eq!(base, after);
    }

    #[test]
    fn duplicate_packages_are_deduplicated_keeping_first() {
        let embeddings = vec![vec![1.0, 0.0], vec![0.99, 0.1], vec![0.0, 1.0]];
        let packages = vec![pkg(&[7, 8]), pkg(&[7, 8]), pkg(&[1])];
        let got = candidate_set(&[1.0, 0.0], &[0, 1, 2], &embeddings, &packages, 3);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].0, 0);
    }

    #[test]
    fn single_candidate_is_returned_regardless_of_score() {
        let ranked = rank_candidates(
            |_| Ok(-123.0),
            vec![(pkg(&[1]), CandidateSource::SimilarPatient)],
        )
        .unwrap();
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].package, pkg(&[1]));
    }

    #[test]
    fn constant_scorer_preserves_input_order() {
        let input: Vec<(Package, CandidateSource)> = (0..5)
            .map(|i| (pkg(&[i]), CandidateSource::SimilarPatient))
            .collect();
        let ranked = rank_candidates(|_| Ok(0.0), input).unwrap();
        let order: Vec<Package> = ranked.into_iter().map(|c| c.package).collect();
        let expected: Vec<Package> = (0..5).map(|i| pkg(&[i])).collect();
        assert_eq!(order, expected);
    }

    #[test]
    fn duplicated_candidate_yields_adjacent_equal_scores() {
        let input = vec![
            (pkg(&[1, 2]), CandidateSource::SimilarPatient),
            (pkg(&[1, 2]), CandidateSource::Generated),
            (pkg(&[3]), CandidateSource::SimilarPatient),
        ];
        let ranked = rank_candidates(|p| Ok(p.len() as f64), input).unwrap();
        assert_eq!(ranked[0].score, ranked[1].score);
        assert_eq!(ranked[0].package, ranked[1].package);
    }

    #[test]
    fn ranking_is_a_permutation_of_the_input() {
        let input: Vec<(Package, CandidateSource)> = (0..6)
            .map(|i| (pkg(&[i, i + 1]), CandidateSource::SimilarPatient))
            .collect();
        let mut expected: Vec<Package> = input.iter().map(|(p, _)| p.clone()).collect();
        let ranked =
            rank_candidates(|p| Ok((p.iter().sum::<usize>() % 3) as f64), input).unwrap();
        let mut got: Vec<Package> = ranked.into_iter().map(|c| c.package).collect();
        expected.sort();
        got.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn empty_candidate_list_is_an_error() {
        assert!(rank_candidates(|_| Ok(0.0), vec![]).is_err());
    }

    #[test]
    fn top_k_with_k_equal_m_selects_every_drug() {
        let scores = vec![0.3, -0.1, 0.9, 0.0];
        let got: BTreeSet<usize> = top_k_drugs(&scores, 4).into_iter().collect();
        assert_eq!(got, (0..4).collect());
    }

    #[test]
    fn top_k_selection_is_invariant_under_monotone_transforms() {
        let scores = vec![0.3, -0.1, 0.9, 0.0, 0.45];
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s + 1.0f64).exp()).collect();
        for k in 1..=5 {
            let a: BTreeSet<usize> = top_k_drugs(&scores, k).into_iter().collect();
            let b: BTreeSet<usize> = top_k_drugs(&transformed, k).into_iter().collect();
            assert_eq!(a, b, "k={k}");
        }
    }

    #[test]
    fn top_two_of_five_matches_full_sort_oracle() {
        let scores = vec![0.2, 0.8, -0.5, 0.8, 0.1];
        // Full sort oracle: descending score, ties by id.
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        assert_eq!(top_k_drugs(&scores, 2), &order[..2]);
        assert_eq!(top_k_drugs(&scores, 2), vec![1, 3]);
    }

    #[test]
    fn nn_baseline_matches_candidate_set_k1() {
        let embeddings = vec![vec![1.0, 0.2], vec![0.1, 1.0], vec![0.9, 0.3]];
        let packages = vec![pkg(&[1, 2]), pkg(&[3, 4]), pkg(&[5, 6])];
        let u = vec![0.95, 0.25];
        let via_candidates = candidate_set(&u, &[0, 1, 2], &embeddings, &packages, 1)
            .into_iter()
            .next()
            .unwrap()
            .1;
        let via_nn = nn_baseline(&u, &[0, 1, 2], &embeddings, &packages).unwrap();
        assert_eq!(via_candidates, via_nn);
    }

    #[test]
    fn unknown_ablation_name_is_rejected_with_suggestions() {
        let err = AblationVariant::parse("wg-contxt").unwrap_err().to_string();
        assert!(err.contains("wg-contxt") && err.contains("wg-context"), "{err}");
        assert_eq!(
            AblationVariant::parse("gnn-plain").unwrap(),
            AblationVariant::GnnPlain
        );
    }

    #[test]
    fn mean_metrics_is_unweighted_macro_average() {
        let rows = vec![
            Metrics {
                precision: 1.0,
                recall: 0.5,
                f1: 2.0 / 3.0,
            },
            Metrics {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            },
        ];
        let mean = mean_metrics(&rows);
        assert!((mean.precision - 0.5).abs() < 1e-12);
        assert!((mean.recall - 0.25).abs() < 1e-12);
        assert!((mean.f1 - 1.0 / 3.0).abs() < 1e-12);
    }
}
