//! Synthetic EMR corpus with planted interaction structure.
//!
//! The generator follows a latent-profile scheme. Each patient draws a
//! primary condition, a hidden regimen kit within that condition, a severity
//! level, a hidden common-drug bundle, and possibly a secondary condition.
//! Drugs come from condition-conditioned pools plus the bundle and a
//! popularity-weighted fill pool; a repair pass suppresses planted
//! antagonistic pairs, boosts planted synergistic pairs, and removes
//! contraindicated commons, so interaction awareness is measurable
//! downstream. Disease bits and note tokens carry noisy condition, regimen,
//! and severity signal; bundles stay unobservable by design, which keeps
//! per-drug marginal prediction strictly weaker than retrieving a real
//! co-prescription.

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::preprocess::{
    build_disease_document, build_disease_vocab, build_token_vocab, normalize_admission_note,
};
use super::relation::build_relation_matrix;
use super::types::{
    Corpus, CorpusMeta, Direction, DrugId, InteractionClass, LabResult, LabeledPair, Package,
    RawRecord, Split,
};

/// Settings for [`generate_synthetic_corpus`].
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_patients: usize,
    pub n_drugs: usize,
    /// Normalized admission-note length (q).
    pub note_len: usize,
    /// Target mean package size.
    pub avg_package_size: f64,
    /// Latent condition count; clamped so every condition keeps a usable pool.
    pub n_conditions: usize,
    /// Interaction labels planted per condition.
    pub synergy_per_regimen: usize,
    pub antagonism_per_condition: usize,
    pub no_interaction_per_condition: usize,
    /// Fraction of planted labels withheld from the relation matrix and kept
    /// for held-out classification evaluation.
    pub label_holdout_fraction: f64,
    /// Probability that a patient carries a secondary condition.
    pub secondary_condition_prob: f64,
    /// Probability that the condition's rare specialist drug appears in a
    /// ground-truth package.
    pub specialist_truth_prob: f64,
    /// Probability that a condition lab reads abnormal for an affected patient.
    pub lab_signal_prob: f64,
    /// Background probability that any lab reads abnormal.
    pub lab_noise_prob: f64,
    /// Probability that the note mentions the regimen keywords.
    pub regimen_note_prob: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 7,
            n_patients: 5000,
            n_drugs: 100,
            note_len: 64,
            avg_package_size: 18.0,
            n_conditions: 6,
            synergy_per_regimen: 1,
            antagonism_per_condition: 5,
            no_interaction_per_condition: 3,
            label_holdout_fraction: 0.25,
            secondary_condition_prob: 0.5,
            specialist_truth_prob: 0.5,
            lab_signal_prob: 0.95,
            lab_noise_prob: 0.02,
            regimen_note_prob: 0.7,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_patients < 10 {
            problems.push("n_patients must be at least 10");
        }
        if self.n_drugs < 5 {
            problems.push("n_drugs must be at least 5");
        }
        if self.note_len == 0 {
            problems.push("note_len must be positive");
        }
        if self.avg_package_size < 2.0 {
            problems.push("avg_package_size must be at least 2");
        }
        if self.n_conditions == 0 {
            problems.push("n_conditions must be positive");
        }
        if !(0.0..=1.0).contains(&self.label_holdout_fraction) {
            problems.push("label_holdout_fraction must be within [0,1]");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// How the drug id space is carved up. Exposed so tests can reason about the
/// planted structure.
#[derive(Clone, Debug)]
pub struct DrugLayout {
    /// Common-drug bundles; a package mostly carries exactly one bundle.
    pub bundles: Vec<Vec<DrugId>>,
    /// Commons outside any bundle, used for popularity-weighted fill.
    pub singles: Vec<DrugId>,
    /// Per condition: two regimen kits plus one rare specialist drug.
    pub conditions: Vec<ConditionPool>,
    pub noise: Vec<DrugId>,
}

#[derive(Clone, Debug)]
pub struct ConditionPool {
    pub regimen_a: Vec<DrugId>,
    pub regimen_b: Vec<DrugId>,
    pub specialist: Option<DrugId>,
    /// A common drug this condition's patients must avoid.
    pub contraindicated: Option<DrugId>,
}

impl ConditionPool {
    pub fn regimen(&self, which: usize) -> &[DrugId] {
        if which == 0 {
            &self.regimen_a
        } else {
            &self.regimen_b
        }
    }

    pub fn all(&self) -> Vec<DrugId> {
        let mut v = self.regimen_a.clone();
        v.extend_from_slice(&self.regimen_b);
        v.extend(self.specialist);
        v
    }
}

/// Deterministic id-space layout for a given drug count and condition count.
pub fn plan_layout(n_drugs: usize, requested_conditions: usize) -> DrugLayout {
    let n_commons = (n_drugs / 5).max(2);
    let mut remaining = n_drugs - n_commons;
    let n_conditions = requested_conditions.clamp(1, (remaining / 4).max(1));
    let noise_budget = (remaining * 3) / 10;
    remaining -= noise_budget;
    let per_condition = remaining / n_conditions;

    // Bundles of ~4 commons; leftovers become fill singles. Keep at least a
    // couple of singles so the fill pool never collapses onto bundles.
    let bundle_size = 4usize;
    let n_bundles = if n_commons >= 2 * bundle_size {
        let mut n = (n_commons / bundle_size).min(4).max(1);
        while n > 0 && n_commons - n * bundle_size < 2 {
            n -= 1;
        }
        n
    } else {
        0
    };
    let mut bundles = Vec::new();
    let mut next = 0usize;
    for _ in 0..n_bundles {
        bundles.push((next..next + bundle_size).collect());
        next += bundle_size;
    }
    let singles: Vec<DrugId> = (next..n_commons).collect();

    let mut next = n_commons;
    let mut conditions = Vec::new();
    for c in 0..n_conditions {
        let pool: Vec<DrugId> = (next..next + per_condition).collect();
        next += per_condition;
        let (specialist, kits) = if pool.len() >= 5 {
            (Some(pool[pool.len() - 1]), &pool[..pool.len() - 1])
        } else {
            (None, &pool[..])
        };
        let half = kits.len().div_ceil(2);
        let contraindicated = if !singles.is_empty() {
            Some(singles[c % singles.len()])
        } else {
            None
        };
        conditions.push(ConditionPool {
            regimen_a: kits[..half].to_vec(),
            regimen_b: kits[half..].to_vec(),
            specialist,
            contraindicated,
        });
    }
    let noise: Vec<DrugId> = (next..n_drugs).collect();
    DrugLayout {
        bundles,
        singles,
        conditions,
        noise,
    }
}

fn plant_labels(layout: &DrugLayout, cfg: &GeneratorConfig, rng: &mut StdRng) -> Vec<LabeledPair> {
    let mut labels = Vec::new();
    let mut push = |a: DrugId, b: DrugId, class: InteractionClass, dir: Direction| {
        labels.push(LabeledPair {
            drug_a: a,
            drug_b: b,
            class,
            direction: dir,
        });
    };
    for pool in &layout.conditions {
        for kit in [&pool.regimen_a, &pool.regimen_b] {
            // Synergy along the kit: adjacent pairs, alternating direction.
            for i in 0..cfg.synergy_per_regimen.min(kit.len().saturating_sub(1)) {
                let dir = if i % 2 == 0 {
                    Direction::Bidirection
                } else {
                    Direction::AToB
                };
                push(kit[i], kit[i + 1], InteractionClass::Synergism, dir);
            }
        }
        if let Some(sp) = pool.specialist {
            // The specialist synergizes with the head drug of each kit.
            if let Some(&a) = pool.regimen_a.first() {
                push(sp, a, InteractionClass::Synergism, Direction::Bidirection);
            }
            if let Some(&b) = pool.regimen_b.first() {
                push(sp, b, InteractionClass::Synergism, Direction::Bidirection);
            }
        }
        // Cross-kit antagonism.
        let n_ant = cfg
            .antagonism_per_condition
            .min(pool.regimen_a.len() * pool.regimen_b.len());
        for k in 0..n_ant {
            let a = pool.regimen_a[k % pool.regimen_a.len()];
            let b = pool.regimen_b[(k / pool.regimen_a.len() + k) % pool.regimen_b.len()];
            let dir = if rng.gen_bool(0.5) {
                Direction::Bidirection
            } else {
                Direction::AToB
            };
            push(a, b, InteractionClass::Antagonism, dir);
        }
        // The contraindicated common antagonizes both kit heads.
        if let Some(contra) = pool.contraindicated {
            for kit in [&pool.regimen_a, &pool.regimen_b] {
                if let Some(&head) = kit.first() {
                    push(contra, head, InteractionClass::Antagonism, Direction::Bidirection);
                }
            }
        }
    }
    // Synergy along each bundle (they genuinely ride together); a few pairs
    // per bundle keep the planted classes balanced.
    for bundle in &layout.bundles {
        for pair in bundle.windows(2).take(2) {
            push(pair[0], pair[1], InteractionClass::Synergism, Direction::Bidirection);
        }
    }
    // Moderately co-occurring antagonists: noise drugs against commons. These
    // pairs appear together through the fill pool, so the classification
    // loss actually sees this class.
    for (k, &noise_drug) in layout.noise.iter().enumerate() {
        let commons: Vec<DrugId> = layout
            .bundles
            .iter()
            .flatten()
            .chain(layout.singles.iter())
            .copied()
            .collect();
        if commons.is_empty() {
            break;
        }
        for j in 0..2 {
            let common = commons[(k * 5 + j * 3) % commons.len()];
            let dir = if (k + j) % 2 == 0 {
                Direction::Bidirection
            } else {
                Direction::BToA
            };
            push(noise_drug, common, InteractionClass::Antagonism, dir);
        }
    }
    // Bundles rarely mix; label a couple of cross-bundle pairs as having no
    // interaction.
    for w in layout.bundles.windows(2) {
        for k in 0..2usize.min(w[0].len()).min(w[1].len()) {
            push(
                w[0][k],
                w[1][k],
                InteractionClass::NoInteraction,
                Direction::Bidirection,
            );
        }
    }
    // No-interaction labels between fill singles and condition drugs.
    for (c, pool) in layout.conditions.iter().enumerate() {
        for k in 0..cfg.no_interaction_per_condition {
            let commons: Vec<DrugId> = layout
                .singles
                .iter()
                .chain(layout.bundles.iter().flatten())
                .copied()
                .collect();
            if commons.is_empty() {
                break;
            }
            let common = commons[(c * 3 + k * 7) % commons.len()];
            let kit = pool.regimen(k % 2);
            if kit.is_empty() {
                continue;
            }
            let d = kit[(k / 2) % kit.len()];
            // Skip anything already labeled for this condition.
            if Some(common) == pool.contraindicated {
                continue;
            }
            push(common, d, InteractionClass::NoInteraction, Direction::Bidirection);
        }
    }
    // Keep the first label per unordered pair.
    let mut seen = BTreeSet::new();
    labels.retain(|l| {
        let key = (l.drug_a.min(l.drug_b), l.drug_a.max(l.drug_b));
        seen.insert(key)
    });
    labels
}

struct PatientProfile {
    primary: usize,
    regimen: usize,
    severity: bool,
    bundle: Option<usize>,
    /// `(condition, regimen)` per secondary condition; severe admissions
    /// carry more of them.
    secondaries: Vec<(usize, usize)>,
}

fn sample_package(
    layout: &DrugLayout,
    labels: &[LabeledPair],
    profile: &PatientProfile,
    cfg: &GeneratorConfig,
    fill_weights: &[f64],
    rng: &mut StdRng,
) -> Package {
    let mut package: BTreeSet<DrugId> = BTreeSet::new();
    let pool = &layout.conditions[profile.primary];

    for &d in pool.regimen(profile.regimen) {
        if rng.gen_bool(0.85) {
            package.insert(d);
        }
    }
    for &d in pool.regimen(1 - profile.regimen) {
        if rng.gen_bool(0.08) {
            package.insert(d);
        }
    }
    if let Some(sp) = pool.specialist {
        if rng.gen_bool(cfg.specialist_truth_prob) {
            package.insert(sp);
        }
    }
    for &(cond, reg) in &profile.secondaries {
        let pool2 = &layout.conditions[cond];
        for &d in pool2.regimen(reg) {
            if rng.gen_bool(0.6) {
                package.insert(d);
            }
        }
    }
    for &d in &layout.noise {
        if rng.gen_bool(0.02) {
            package.insert(d);
        }
    }
    // The hidden bundle rides along nearly whole.
    if let Some(b) = profile.bundle {
        for &d in &layout.bundles[b] {
            if rng.gen_bool(0.9) {
                package.insert(d);
            }
        }
    }

    // Synergy boost: a planted partner tends to ride along.
    for l in labels {
        if l.class != InteractionClass::Synergism {
            continue;
        }
        let (a, b) = (l.drug_a, l.drug_b);
        if package.contains(&a) != package.contains(&b) && rng.gen_bool(0.3) {
            package.insert(if package.contains(&a) { b } else { a });
        }
    }

    // Severity drives the target size; fill from the weighted common pool,
    // capped so the pool is never close to exhausted (exhaustive fill would
    // make heavy packages trivially predictable).
    let scale = if profile.severity { 1.4 } else { 0.7 };
    let spread = (cfg.avg_package_size / 9.0).max(0.75);
    let normal = Normal::new(cfg.avg_package_size * scale, spread).unwrap();
    let pool_size = fill_weights.iter().filter(|w| **w > 0.0).count();
    let fill_cap = package.len() + (pool_size * 2) / 3;
    let target = (normal
        .sample(rng)
        .round()
        .clamp(2.0, cfg.n_drugs as f64 - 1.0) as usize)
        .min(fill_cap.max(2));
    let contra = pool.contraindicated;
    while package.len() < target {
        let available: Vec<DrugId> = (0..cfg.n_drugs)
            .filter(|d| !package.contains(d) && Some(*d) != contra && fill_weights[*d] > 0.0)
            .collect();
        if available.is_empty() {
            break;
        }
        let total: f64 = available.iter().map(|&d| fill_weights[d]).sum();
        let mut pick = rng.gen_range(0.0..total);
        let mut chosen = available[0];
        for &d in &available {
            pick -= fill_weights[d];
            if pick <= 0.0 {
                chosen = d;
                break;
            }
        }
        package.insert(chosen);
    }
    // Interaction repair runs after the fill so filled-in drugs cannot dodge
    // it. Antagonism suppression: planted opposites rarely stay together.
    for l in labels {
        if l.class != InteractionClass::Antagonism {
            continue;
        }
        let suppress = if (l.drug_a + l.drug_b) % 2 == 0 { 0.6 } else { 0.35 };
        if package.contains(&l.drug_a) && package.contains(&l.drug_b) && rng.gen_bool(suppress) {
            let own_kit = pool.regimen(profile.regimen);
            let drop = if own_kit.contains(&l.drug_a) && !own_kit.contains(&l.drug_b) {
                l.drug_b
            } else if own_kit.contains(&l.drug_b) && !own_kit.contains(&l.drug_a) {
                l.drug_a
            } else if rng.gen_bool(0.5) {
                l.drug_a
            } else {
                l.drug_b
            };
            package.remove(&drop);
        }
    }
    // Contraindicated common: usually kept out.
    if let Some(contra) = pool.contraindicated {
        if package.contains(&contra) && rng.gen_bool(0.75) {
            package.remove(&contra);
        }
    }
    let mut next = 0;
    while package.len() < 2 {
        package.insert(next % cfg.n_drugs);
        next += 1;
    }
    package
}

fn condition_keywords(cond: usize) -> Vec<String> {
    (0..4).map(|k| format!("cond{cond}sym{k}")).collect()
}

fn regimen_keywords(cond: usize, reg: usize) -> Vec<String> {
    (0..2).map(|k| format!("cond{cond}reg{reg}note{k}")).collect()
}

const FILLERS: [&str; 14] = [
    "patient", "admitted", "with", "history", "of", "stable", "reports", "onset", "days",
    "observation", "started", "plan", "review", "followup",
];

fn compose_note(profile: &PatientProfile, cfg: &GeneratorConfig, rng: &mut StdRng) -> String {
    let mut words: Vec<String> = Vec::new();
    let kws = condition_keywords(profile.primary);
    for _ in 0..rng.gen_range(4..8) {
        words.push(kws[rng.gen_range(0..kws.len())].clone());
    }
    if rng.gen_bool(cfg.regimen_note_prob) {
        let rkw = regimen_keywords(profile.primary, profile.regimen);
        for _ in 0..rng.gen_range(1..3) {
            words.push(rkw[rng.gen_range(0..rkw.len())].clone());
        }
    }
    if rng.gen_bool(0.8) {
        words.push(if profile.severity { "acute" } else { "routine" }.to_string());
    }
    for &(cond, _) in &profile.secondaries {
        let kws2 = condition_keywords(cond);
        for _ in 0..rng.gen_range(1..3) {
            words.push(kws2[rng.gen_range(0..kws2.len())].clone());
        }
    }
    for _ in 0..rng.gen_range(4..9) {
        words.push(FILLERS[rng.gen_range(0..FILLERS.len())].to_string());
    }
    words.shuffle(rng);
    // Sprinkle punctuation so normalization has something to strip.
    let mut out = String::new();
    for (i, w) in words.iter().enumerate() {
        out.push_str(w);
        if i % 5 == 4 {
            out.push(',');
        }
        out.push(' ');
    }
    out.push('.');
    out
}

fn compose_labs(
    profile: &PatientProfile,
    n_conditions: usize,
    cfg: &GeneratorConfig,
    rng: &mut StdRng,
) -> Vec<LabResult> {
    // Three lab items per condition plus one severity item at the end.
    let mut labs = Vec::new();
    for item in 0..3 * n_conditions + 1 {
        let (low, high) = (60.0 + item as f64, 100.0 + item as f64);
        let p_abnormal = if item == 3 * n_conditions {
            if profile.severity {
                0.85
            } else {
                0.08
            }
        } else {
            let cond = item / 3;
            let affected = cond == profile.primary
                || profile.secondaries.iter().any(|&(c, _)| c == cond);
            if affected {
                cfg.lab_signal_prob
            } else {
                cfg.lab_noise_prob
            }
        };
        let value = if rng.gen_bool(p_abnormal) {
            if item % 2 == 0 {
                rng.gen_range(high + 1.0..high + 40.0)
            } else {
                rng.gen_range(low - 30.0..low - 1.0)
            }
        } else {
            rng.gen_range(low..high)
        };
        labs.push(LabResult {
            item: format!("lab{item}"),
            value: format!("{value:.1}"),
            normal_low: low,
            normal_high: high,
        });
    }
    labs
}

fn compose_demographics(profile: &PatientProfile, rng: &mut StdRng) -> Vec<(String, String)> {
    let sex = if rng.gen_bool(0.5) { "female" } else { "male" };
    let age_bands = ["child", "adult", "middle", "senior"];
    // Age correlates with the primary condition.
    let age = if rng.gen_bool(0.7) {
        age_bands[profile.primary % 4]
    } else {
        age_bands[rng.gen_range(0..4)]
    };
    let insurance = ["basic", "employee", "resident"][rng.gen_range(0..3)];
    let surgery = if (profile.regimen == 0) == rng.gen_bool(0.8) {
        "yes"
    } else {
        "no"
    };
    vec![
        ("sex".into(), sex.into()),
        ("age".into(), age.into()),
        ("insurance".into(), insurance.into()),
        ("surgery".into(), surgery.into()),
    ]
}

/// Raw generation product before preprocessing.
pub struct RawCorpus {
    pub records: Vec<RawRecord>,
    pub labels: Vec<LabeledPair>,
    pub heldout_labels: Vec<LabeledPair>,
    pub layout: DrugLayout,
}

/// Generate raw records plus planted labels. Deterministic in `cfg.seed`.
pub fn generate_raw(cfg: &GeneratorConfig) -> Result<RawCorpus> {
    cfg.validate()?;
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let layout = plan_layout(cfg.n_drugs, cfg.n_conditions);
    let all_labels = plant_labels(&layout, cfg, &mut rng);

    // Withhold a slice of the planted labels for held-out evaluation. The
    // package sampler still honors them, so co-occurrence structure is
    // consistent with the hidden labels too.
    let n_heldout = (all_labels.len() as f64 * cfg.label_holdout_fraction).round() as usize;
    let mut order: Vec<usize> = (0..all_labels.len()).collect();
    order.shuffle(&mut rng);
    let heldout_set: BTreeSet<usize> = order.into_iter().take(n_heldout).collect();
    let mut labels = Vec::new();
    let mut heldout_labels = Vec::new();
    for (i, l) in all_labels.iter().enumerate() {
        if heldout_set.contains(&i) {
            heldout_labels.push(l.clone());
        } else {
            labels.push(l.clone());
        }
    }

    // Fill weights: zipf over singles, a light tail over other commons and
    // noise. Condition drugs never enter the fill pool, so the interaction
    // repair above cannot be undone by the size top-up.
    let mut fill_weights = vec![0.0f64; cfg.n_drugs];
    for (i, &d) in layout.singles.iter().enumerate() {
        fill_weights[d] = 2.0 / (1.0 + i as f64).sqrt();
    }
    for bundle in &layout.bundles {
        for &d in bundle {
            fill_weights[d] = 0.08;
        }
    }
    for &d in &layout.noise {
        fill_weights[d] = 0.45;
    }

    let n_conditions = layout.conditions.len();
    let n_bundles = layout.bundles.len();
    let mut records = Vec::with_capacity(cfg.n_patients);
    for idx in 0..cfg.n_patients {
        let primary = rng.gen_range(0..n_conditions);
        let regimen = usize::from(rng.gen_bool(0.5));
        let severity = rng.gen_bool(0.5);
        let bundle = (n_bundles > 0).then(|| rng.gen_range(0..n_bundles));
        let mut secondaries = Vec::new();
        if n_conditions > 1 && rng.gen_bool(cfg.secondary_condition_prob) {
            let mut cond = rng.gen_range(0..n_conditions - 1);
            if cond >= primary {
                cond += 1;
            }
            secondaries.push((cond, usize::from(rng.gen_bool(0.5))));
        }
        let profile = PatientProfile {
            primary,
            regimen,
            severity,
            bundle,
            secondaries,
        };
        let drugs = sample_package(&layout, &all_labels, &profile, cfg, &fill_weights, &mut rng);
        records.push(RawRecord {
            record_id: format!("rec{idx:06}"),
            demographics: compose_demographics(&profile, &mut rng),
            lab_results: compose_labs(&profile, n_conditions, cfg, &mut rng),
            admission_note: compose_note(&profile, cfg, &mut rng),
            drugs,
        });
    }

    Ok(RawCorpus {
        records,
        labels,
        heldout_labels,
        layout,
    })
}

/// Generate and preprocess a complete corpus: raw records, an 80/10/10
/// split, train-only vocabularies, per-patient descriptions, and the
/// relation matrix from the visible labels.
pub fn generate_synthetic_corpus(cfg: &GeneratorConfig) -> Result<Corpus> {
    let raw = generate_raw(cfg)?;
    let mut rng = StdRng::seed_from_u64(cfg.seed ^ 0x5eed_0511);

    let n = raw.records.len();
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let n_train = (n * 8) / 10;
    let n_valid = n / 10;
    let split = Split {
        train: indices[..n_train].to_vec(),
        valid: indices[n_train..n_train + n_valid].to_vec(),
        test: indices[n_train + n_valid..].to_vec(),
    };

    let disease_vocab = build_disease_vocab(split.train.iter().map(|&i| &raw.records[i]))?;
    let token_vocab = build_token_vocab(split.train.iter().map(|&i| &raw.records[i]));

    let mut patients = Vec::with_capacity(n);
    let mut packages = Vec::with_capacity(n);
    for record in &raw.records {
        let disease = build_disease_document(
            &record.record_id,
            &record.demographics,
            &record.lab_results,
            &disease_vocab,
        )?;
        let note = normalize_admission_note(&record.admission_note, cfg.note_len, &token_vocab);
        patients.push(super::types::PatientDescription { disease, note });
        packages.push(record.drugs.clone());
    }

    let relation = build_relation_matrix(&raw.labels, cfg.n_drugs)?;
    let meta = CorpusMeta {
        n_patients: n,
        n_drugs: cfg.n_drugs,
        disease_dim: disease_vocab.len(),
        note_len: cfg.note_len,
        seed: cfg.seed,
    };
    Ok(Corpus {
        patients,
        packages,
        relation,
        disease_vocab,
        token_vocab,
        split,
        meta,
        labels: raw.labels,
        heldout_labels: raw.heldout_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> GeneratorConfig {
        GeneratorConfig {
            seed: 7,
            n_patients: 300,
            n_drugs: 60,
            note_len: 16,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = GeneratorConfig {
            n_patients: 3,
            ..GeneratorConfig::default()
        };
        assert!(generate_synthetic_corpus(&cfg).is_err());
        let cfg = GeneratorConfig {
            n_drugs: 2,
            ..GeneratorConfig::default()
        };
        assert!(generate_synthetic_corpus(&cfg).is_err());
    }

    #[test]
    fn same_seed_is_reproducible() {
        let cfg = small_cfg();
        let a = generate_synthetic_corpus(&cfg).unwrap();
        let b = generate_synthetic_corpus(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_corpus(&GeneratorConfig {
            seed: 8,
            ..small_cfg()
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn default_scale_package_size_near_target() {
        let cfg = GeneratorConfig {
            n_patients: 1000,
            ..GeneratorConfig::default()
        };
        let corpus = generate_synthetic_corpus(&cfg).unwrap();
        let mean: f64 = corpus.packages.iter().map(|p| p.len() as f64).sum::<f64>()
            / corpus.packages.len() as f64;
        assert!(
            (mean - 18.0).abs() <= 2.0,
            "mean package size {mean} not within 18 +/- 2"
        );
    }

    #[test]
    fn every_package_has_at_least_two_known_drugs() {
        let corpus = generate_synthetic_corpus(&small_cfg()).unwrap();
        for p in &corpus.packages {
            assert!(p.len() >= 2);
            assert!(p.iter().all(|&d| d < corpus.n_drugs()));
        }
    }

    #[test]
    fn split_is_a_disjoint_partition() {
        let corpus = generate_synthetic_corpus(&small_cfg()).unwrap();
        let mut all: Vec<usize> = corpus
            .split
            .train
            .iter()
            .chain(&corpus.split.valid)
            .chain(&corpus.split.test)
            .copied()
            .collect();
        all.sort_unstable();
        let expected: Vec<usize> = (0..corpus.n_patients()).collect();
        assert_eq!(all, expected);
        let n = corpus.n_patients();
        assert_eq!(corpus.split.train.len(), n * 8 / 10);
        assert_eq!(corpus.split.valid.len(), n / 10);
    }

    // Brute-force co-occurrence counting, independent of the graph module.
    fn cooccur_proportion(packages: &[Package], a: DrugId, b: DrugId) -> f64 {
        let num_a = packages.iter().filter(|p| p.contains(&a)).count();
        let num_ab = packages
            .iter()
            .filter(|p| p.contains(&a) && p.contains(&b))
            .count();
        if num_a == 0 {
            0.0
        } else {
            num_ab as f64 / num_a as f64
        }
    }

    #[test]
    fn planted_synergy_exceeds_median_cooccurrence_and_chance() {
        let corpus = generate_synthetic_corpus(&small_cfg()).unwrap();
        let m = corpus.n_drugs();
        let mut proportions: Vec<f64> = Vec::new();
        for a in 0..m {
            for b in 0..m {
                if a != b {
                    proportions.push(cooccur_proportion(&corpus.packages, a, b));
                }
            }
        }
        proportions.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let median = proportions[proportions.len() / 2];

        let n = corpus.packages.len() as f64;
        let mut above_median = 0;
        let mut above_chance = 0;
        let mut total = 0;
        for l in &corpus.labels {
            if l.class != InteractionClass::Synergism {
                continue;
            }
            let p_ab = cooccur_proportion(&corpus.packages, l.drug_a, l.drug_b);
            let num_b = corpus
                .packages
                .iter()
                .filter(|p| p.contains(&l.drug_b))
                .count() as f64;
            if p_ab > median {
                above_median += 1;
            }
            if p_ab > num_b / n {
                above_chance += 1;
            }
            total += 1;
        }
        assert!(total > 0, "no synergy labels planted");
        assert_eq!(above_median, total, "synergy pairs must beat the median");
        assert!(
            above_chance * 20 >= total * 19,
            "only {above_chance}/{total} synergy pairs co-occur above chance"
        );
    }

    #[test]
    fn planted_antagonism_cooccurs_below_chance() {
        let corpus = generate_synthetic_corpus(&small_cfg()).unwrap();
        let n = corpus.packages.len() as f64;
        let mut below = 0;
        let mut total = 0;
        for l in &corpus.labels {
            if l.class != InteractionClass::Antagonism {
                continue;
            }
            let p_ab = cooccur_proportion(&corpus.packages, l.drug_a, l.drug_b);
            let num_b = corpus
                .packages
                .iter()
                .filter(|p| p.contains(&l.drug_b))
                .count() as f64;
            if p_ab < num_b / n {
                below += 1;
            }
            total += 1;
        }
        assert!(total > 0, "no antagonism labels planted");
        // Suppression is stochastic; require the clear majority to sit below chance.
        assert!(
            below * 4 >= total * 3,
            "only {below}/{total} antagonistic pairs co-occur below chance"
        );
    }

    #[test]
    fn minimum_scale_config_generates() {
        let cfg = GeneratorConfig {
            seed: 1,
            n_patients: 10,
            n_drugs: 5,
            note_len: 4,
            avg_package_size: 3.0,
            n_conditions: 1,
            ..GeneratorConfig::default()
        };
        let corpus = generate_synthetic_corpus(&cfg).unwrap();
        assert_eq!(corpus.n_patients(), 10);
        assert!(corpus.packages.iter().all(|p| p.len() >= 2));
    }

    #[test]
    fn heldout_labels_are_disjoint_from_visible() {
        let corpus = generate_synthetic_corpus(&small_cfg()).unwrap();
        assert!(!corpus.heldout_labels.is_empty());
        for h in &corpus.heldout_labels {
            assert!(
                !corpus
                    .labels
                    .iter()
                    .any(|l| l.drug_a == h.drug_a && l.drug_b == h.drug_b),
                "held-out pair also visible"
            );
        }
    }

    #[test]
    fn package_sizes_are_severity_bimodal() {
        let cfg = GeneratorConfig {
            n_patients: 1000,
            ..GeneratorConfig::default()
        };
        let corpus = generate_synthetic_corpus(&cfg).unwrap();
        let sizes: Vec<usize> = corpus.packages.iter().map(|p| p.len()).collect();
        let small = sizes.iter().filter(|&&s| s <= 15).count();
        let large = sizes.iter().filter(|&&s| s >= 21).count();
        // Both modes must be well-populated.
        assert!(small * 10 >= sizes.len() * 3, "light mode too thin: {small}");
        assert!(large * 10 >= sizes.len() * 3, "heavy mode too thin: {large}");
    }
}
