//! Heuristic generation of new candidate packages from retrieved ones,
//! personalized drug rankings, and the interaction matrix.
//!
//! Starting from the similar-patient candidate set S1, a rank-based pass
//! produces S2 (drop rare-and-unpromising drugs, add unpopular-but-promising
//! ones) and an interaction-based pass produces S3 (add synergistic or
//! strongly co-occurring drugs, resolve antagonistic pairs). The final
//! candidate set is the provenance-tagged union.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{DrugId, InteractionClass, Package, RelationMatrix};
use crate::embedding::PretrainModel;
use crate::error::{Error, Result};
use crate::graph::CooccurrenceStats;

/// Thresholds turning the qualitative rank rules into concrete predicates.
/// Percentile fields are percentages of the drug count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    /// "Ranks low in the personalized list": bottom share of l.
    pub low_personalized_percentile: f64,
    /// "Ranks high in the personalized list": top share of l.
    pub high_personalized_percentile: f64,
    /// "Ranks low in the frequency list": bottom share of L.
    pub low_frequency_percentile: f64,
    /// Drugs appearing in at most this many S1 packages count as rare.
    pub rare_in_s1_count: usize,
    /// Co-occurrence proportion counting as high affinity.
    pub p_high: f64,
    /// Co-occurrence proportion under which antagonists get resolved.
    pub p_low: f64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            low_personalized_percentile: 50.0,
            high_personalized_percentile: 20.0,
            low_frequency_percentile: 50.0,
            rare_in_s1_count: 1,
            p_high: 0.3,
            p_low: 0.01,
        }
    }
}

impl HeuristicConfig {
    pub fn validate(&self) -> Result<()> {
        let pct_ok = |p: f64| p > 0.0 && p < 100.0;
        if !pct_ok(self.low_personalized_percentile)
            || !pct_ok(self.high_personalized_percentile)
            || !pct_ok(self.low_frequency_percentile)
        {
            return Err(Error::Config(
                "heuristic percentiles must lie strictly inside (0, 100)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_high) || !(0.0..=1.0).contains(&self.p_low) {
            return Err(Error::Config(
                "co-occurrence thresholds must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Ranked drug lists: by corpus frequency and by personalized score.
#[derive(Clone, Debug, PartialEq)]
pub struct RankLists {
    /// All drugs in descending training-corpus frequency (ties by id).
    pub frequency: Vec<DrugId>,
    /// All drugs in descending personalized score (ties by id).
    pub personalized: Vec<DrugId>,
}

impl RankLists {
    fn position(list: &[DrugId], drug: DrugId) -> usize {
        list.iter().position(|&d| d == drug).expect("drug in rank list")
    }

    /// Is `drug` within the top `pct` percent of the list?
    pub fn in_top(list: &[DrugId], drug: DrugId, pct: f64) -> bool {
        let cutoff = (list.len() as f64 * pct / 100.0).ceil() as usize;
        Self::position(list, drug) < cutoff
    }

    /// Is `drug` within the bottom `pct` percent of the list?
    pub fn in_bottom(list: &[DrugId], drug: DrugId, pct: f64) -> bool {
        let cutoff = (list.len() as f64 * pct / 100.0).ceil() as usize;
        Self::position(list, drug) >= list.len() - cutoff.min(list.len())
    }
}

/// Drugs in descending order of occurrence count over `packages`; ties break
/// toward the lower drug id.
pub fn frequency_rank(packages: &[Package], n_drugs: usize) -> Vec<DrugId> {
    let mut counts = vec![0usize; n_drugs];
    for p in packages {
        for &d in p {
            counts[d] += 1;
        }
    }
    let mut order: Vec<DrugId> = (0..n_drugs).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order
}

/// All drugs in descending matching-head score for one patient; ties break
/// toward the lower drug id.
pub fn personalized_rank(model: &PretrainModel, u: &[f64]) -> Vec<DrugId> {
    let scores: Vec<f64> = (0..model.dims.n_drugs)
        .map(|d| model.score_patient_drug(u, d))
        .collect();
    let mut order: Vec<DrugId> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order
}

/// Which refinement rule fired.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleKind {
    /// S2: dropped a drug that is rare across S1 and ranks low personally.
    DropRareUnpromising,
    /// S2: added a drug that is unpopular corpus-wide but ranks high personally.
    AddUnpopularPromising,
    /// S2: the package emptied out and was dropped.
    DropEmptiedPackage,
    /// S3: added a personally high drug with a synergistic partner in the package.
    AddSynergistic,
    /// S3: added a personally high drug with high co-occurrence affinity.
    AddCooccurring,
    /// S3: removed the lower-ranked member of a low-affinity antagonistic pair.
    DropAntagonistic,
}

/// One audit-log entry: which rule fired on which package, for which drug.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RuleFiring {
    pub package_idx: usize,
    pub rule: RuleKind,
    pub drug: DrugId,
    /// Partner drug for interaction rules.
    pub partner: Option<DrugId>,
}

/// A refinement pass output: packages aligned with their source index plus
/// the audit log of every rule firing.
#[derive(Clone, Debug, Default)]
pub struct RefineOutcome {
    /// `(source package index, refined package)`.
    pub packages: Vec<(usize, Package)>,
    pub log: Vec<RuleFiring>,
}

/// Rank-based refinement producing S2 from S1.
pub fn refine_s2(
    s1: &[Package],
    ranks: &RankLists,
    cfg: &HeuristicConfig,
) -> Result<RefineOutcome> {
    cfg.validate()?;
    if s1.is_empty() {
        return Err(Error::Config("S1 must be non-empty".into()));
    }
    let n_drugs = ranks.frequency.len();
    let mut s1_counts = vec![0usize; n_drugs];
    for p in s1 {
        for &d in p {
            s1_counts[d] += 1;
        }
    }
    // Corpus-wide additions apply to every package.
    let additions: Vec<DrugId> = (0..n_drugs)
        .filter(|&d| {
            RankLists::in_bottom(&ranks.frequency, d, cfg.low_frequency_percentile)
                && RankLists::in_top(&ranks.personalized, d, cfg.high_personalized_percentile)
        })
        .collect();

    let mut out = RefineOutcome::default();
    for (idx, package) in s1.iter().enumerate() {
        let mut refined = package.clone();
        for &d in package {
            let rare = s1_counts[d] <= cfg.rare_in_s1_count;
            let unpromising =
                RankLists::in_bottom(&ranks.personalized, d, cfg.low_personalized_percentile);
            if rare && unpromising {
                refined.remove(&d);
                out.log.push(RuleFiring {
                    package_idx: idx,
                    rule: RuleKind::DropRareUnpromising,
                    drug: d,
                    partner: None,
                });
            }
        }
        for &d in &additions {
            if refined.insert(d) {
                out.log.push(RuleFiring {
                    package_idx: idx,
                    rule: RuleKind::AddUnpopularPromising,
                    drug: d,
                    partner: None,
                });
            }
        }
        if refined.is_empty() {
            eprintln!("warning: refinement emptied candidate package {idx}; dropped");
            out.log.push(RuleFiring {
                package_idx: idx,
                rule: RuleKind::DropEmptiedPackage,
                drug: n_drugs, // sentinel: no single drug
                partner: None,
            });
            continue;
        }
        out.packages.push((idx, refined));
    }
    Ok(out)
}

/// Interaction-based refinement producing S3 from S2. Rules run in order
/// (synergy add, co-occurrence add, antagonism delete), one pass each, with
/// every rule evaluated against the package state it receives.
pub fn refine_s3(
    s2: &[(usize, Package)],
    ranks: &RankLists,
    relation: &RelationMatrix,
    stats: &CooccurrenceStats,
    cfg: &HeuristicConfig,
) -> Result<RefineOutcome> {
    cfg.validate()?;
    let high: Vec<DrugId> = ranks
        .personalized
        .iter()
        .copied()
        .filter(|&d| RankLists::in_top(&ranks.personalized, d, cfg.high_personalized_percentile))
        .collect();

    let mut out = RefineOutcome::default();
    for &(idx, ref package) in s2 {
        let mut refined = package.clone();

        // Synergy additions, evaluated against the incoming package.
        let snapshot: Vec<DrugId> = refined.iter().copied().collect();
        for &d in &high {
            if refined.contains(&d) {
                continue;
            }
            let partner = snapshot.iter().copied().find(|&x| {
                relation.get(d, x) == InteractionClass::Synergism
                    || relation.get(x, d) == InteractionClass::Synergism
            });
            if let Some(x) = partner {
                refined.insert(d);
                out.log.push(RuleFiring {
                    package_idx: idx,
                    rule: RuleKind::AddSynergistic,
                    drug: d,
                    partner: Some(x),
                });
            }
        }

        // Co-occurrence additions against the post-synergy state.
        let snapshot: Vec<DrugId> = refined.iter().copied().collect();
        for &d in &high {
            if refined.contains(&d) {
                continue;
            }
            let partner = snapshot
                .iter()
                .copied()
                .find(|&x| stats.proportion(d, x) >= cfg.p_high);
            if let Some(x) = partner {
                refined.insert(d);
                out.log.push(RuleFiring {
                    package_idx: idx,
                    rule: RuleKind::AddCooccurring,
                    drug: d,
                    partner: Some(x),
                });
            }
        }

        // Antagonism resolution: for each in-package antagonistic pair with
        // co-occurrence below p_low in both directions, drop the member that
        // ranks lower personally. A pair is skipped when a member is already
        // gone, so both members are never removed by one pairing.
        let members: Vec<DrugId> = refined.iter().copied().collect();
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let (a, b) = (members[i], members[j]);
                if !refined.contains(&a) || !refined.contains(&b) {
                    continue;
                }
                let antagonistic = relation.get(a, b) == InteractionClass::Antagonism
                    || relation.get(b, a) == InteractionClass::Antagonism;
                if !antagonistic {
                    continue;
                }
                if stats.proportion(a, b) >= cfg.p_low || stats.proportion(b, a) >= cfg.p_low {
                    continue;
                }
                let pos_a = RankLists::position(&ranks.personalized, a);
                let pos_b = RankLists::position(&ranks.personalized, b);
                let (drop, keep) = if pos_a > pos_b { (a, b) } else { (b, a) };
                refined.remove(&drop);
                out.log.push(RuleFiring {
                    package_idx: idx,
                    rule: RuleKind::DropAntagonistic,
                    drug: drop,
                    partner: Some(keep),
                });
            }
        }

        out.packages.push((idx, refined));
    }
    Ok(out)
}

/// Provenance tag for one generated candidate.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    S1,
    S2,
    S3,
}

/// A deduplicated candidate with every set it appeared in.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedCandidate {
    pub package: Package,
    pub sources: BTreeSet<Provenance>,
}

/// Union of the three candidate sets with package-level dedup; every member
/// keeps the provenance tags of all sets that produced it.
pub fn generate_candidates(
    s1: &[Package],
    s2: &[(usize, Package)],
    s3: &[(usize, Package)],
) -> Vec<GeneratedCandidate> {
    let mut out: Vec<GeneratedCandidate> = Vec::new();
    let mut push = |package: &Package, tag: Provenance| {
        if package.is_empty() {
            return;
        }
        if let Some(existing) = out.iter_mut().find(|c| c.package == *package) {
            existing.sources.insert(tag);
        } else {
            out.push(GeneratedCandidate {
                package: package.clone(),
                sources: BTreeSet::from([tag]),
            });
        }
    };
    for p in s1 {
        push(p, Provenance::S1);
    }
    for (_, p) in s2 {
        push(p, Provenance::S2);
    }
    for (_, p) in s3 {
        push(p, Provenance::S3);
    }
    out
}

/// Full pipeline for one patient: S1 from similar patients, S2 and S3 by
/// refinement, union with provenance plus the combined audit log.
pub fn generate_for_patient(
    s1: &[Package],
    ranks: &RankLists,
    relation: &RelationMatrix,
    stats: &CooccurrenceStats,
    cfg: &HeuristicConfig,
) -> Result<(Vec<GeneratedCandidate>, Vec<RuleFiring>)> {
    let s2 = refine_s2(s1, ranks, cfg)?;
    let s3 = refine_s3(&s2.packages, ranks, relation, stats, cfg)?;
    let union = generate_candidates(s1, &s2.packages, &s3.packages);
    let mut log = s2.log;
    log.extend(s3.log);
    Ok((union, log))
}
