//! BPR pre-training over (patient, drug) pairs with uniform negative
//! sampling.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DrugId, Package};
use crate::error::{Error, Result};
use crate::nn::{Adam, NodeId, Tape};
use crate::util::{derive_seed, EarlyStopper};

use super::model::{EncoderDims, PretrainModel};

/// Optimization settings shared by the pre-training and package-model
/// trainers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Ranking pairs per optimizer step.
    pub batch_size: usize,
    /// Negatives sampled per positive.
    pub negative_ratio: usize,
    /// L2 coefficient applied to the whole parameter set.
    pub l2: f64,
    pub epochs: usize,
    /// Early-stopping patience in epochs.
    pub patience: usize,
    pub seed: u64,
    /// Optional per-epoch cap on training patients (stochastic epochs for
    /// CPU-bound runs). `None` visits every training patient each epoch.
    pub train_subsample: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 256,
            negative_ratio: 10,
            l2: 1e-5,
            epochs: 30,
            patience: 5,
            seed: 42,
            train_subsample: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.learning_rate <= 0.0 {
            problems.push("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive");
        }
        if self.negative_ratio == 0 {
            problems.push("negative_ratio must be at least 1");
        }
        if self.l2 < 0.0 {
            problems.push("l2 must be non-negative");
        }
        if self.epochs == 0 {
            problems.push("epochs must be positive");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Draw `count` drugs uniformly from outside the package. Returns `None`
/// when the package covers the whole drug set.
pub fn sample_negatives(
    package: &Package,
    n_drugs: usize,
    count: usize,
    rng: &mut StdRng,
) -> Option<Vec<DrugId>> {
    if package.len() >= n_drugs {
        return None;
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let candidate = rng.gen_range(0..n_drugs);
        if !package.contains(&candidate) {
            out.push(candidate);
        }
    }
    Some(out)
}

/// Per-epoch training diagnostics.
#[derive(Clone, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

pub struct PretrainOutcome {
    pub model: PretrainModel,
    pub log: Vec<EpochStats>,
    pub best_val_loss: f64,
    /// Records skipped because their package covered every drug.
    pub skipped_records: usize,
}

// Ranking loss for one patient on one tape: encode once, score the package
// drugs and their sampled negatives, sum the pairwise terms.
fn patient_loss(
    model: &PretrainModel,
    t: &mut Tape,
    patient: usize,
    corpus: &Corpus,
    negatives: &[DrugId],
) -> (NodeId, usize) {
    let desc = &corpus.patients[patient];
    let package = &corpus.packages[patient];
    let ratio = negatives.len() / package.len();
    let u = model.encode_on_tape(t, desc);
    let mut terms = Vec::with_capacity(package.len() * ratio);
    for (pi, &pos) in package.iter().enumerate() {
        let pos_score = model.score_on_tape(t, u, pos);
        for k in 0..ratio {
            let neg = negatives[pi * ratio + k];
            let neg_score = model.score_on_tape(t, u, neg);
            let margin = t.sub(neg_score, pos_score);
            terms.push(t.softplus(margin));
        }
    }
    let n = terms.len();
    let total = t.add_many(&terms);
    (total, n)
}

fn mean_split_loss(
    model: &PretrainModel,
    corpus: &Corpus,
    indices: &[usize],
    negatives: &[Option<Vec<DrugId>>],
) -> f64 {
    let (sum, count): (f64, usize) = indices
        .par_iter()
        .enumerate()
        .map(|(slot, &patient)| {
            let negs = match &negatives[slot] {
                Some(n) => n,
                None => return (0.0, 0),
            };
            let mut t = Tape::new(&model.params);
            let (loss, n) = patient_loss(model, &mut t, patient, corpus, negs);
            (t.scalar_value(loss), n)
        })
        .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if count == 0 {
        f64::INFINITY
    } else {
        sum / count as f64
    }
}

/// Train encoder, drug table, and matching head with BPR + Adam; returns the
/// parameters that scored best on the validation split.
pub fn pretrain(corpus: &Corpus, dims: EncoderDims, cfg: &TrainConfig) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if corpus.split.train.is_empty() || corpus.split.valid.is_empty() {
        return Err(Error::Train("empty train or valid split".into()));
    }
    let mut model = PretrainModel::new(dims, cfg.seed)?;
    let n_drugs = corpus.n_drugs();
    let mut skipped = 0usize;

    // Fixed validation negatives so epoch losses are comparable.
    let val_negatives: Vec<Option<Vec<DrugId>>> = corpus
        .split
        .valid
        .iter()
        .map(|&patient| {
            let mut rng = StdRng::seed_from_u64(derive_seed(cfg.seed, 1, patient as u64));
            let package = &corpus.packages[patient];
            sample_negatives(package, n_drugs, package.len() * cfg.negative_ratio, &mut rng)
        })
        .collect();
    skipped += val_negatives.iter().filter(|n| n.is_none()).count();

    let mut optimizer = Adam::new(cfg.learning_rate, model.params.len());
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut log = Vec::new();

    for epoch in 0..cfg.epochs {
        let mut order = corpus.split.train.clone();
        let mut epoch_rng = StdRng::seed_from_u64(derive_seed(cfg.seed, 2, epoch as u64));
        order.shuffle(&mut epoch_rng);
        if let Some(cap) = cfg.train_subsample {
            order.truncate(cap.max(1));
        }

        // Per-patient negatives for this epoch, sampled up front so the
        // parallel gradient pass stays deterministic.
        let negatives: Vec<Option<Vec<DrugId>>> = order
            .iter()
            .map(|&patient| {
                let mut rng = StdRng::seed_from_u64(derive_seed(
                    cfg.seed,
                    3 + epoch as u64,
                    patient as u64,
                ));
                let package = &corpus.packages[patient];
                sample_negatives(package, n_drugs, package.len() * cfg.negative_ratio, &mut rng)
            })
            .collect();
        if epoch == 0 {
            skipped += negatives.iter().filter(|n| n.is_none()).count();
            for (slot, negs) in negatives.iter().enumerate() {
                if negs.is_none() {
                    eprintln!(
                        "warning: patient {} covers every drug; no negatives, record skipped",
                        order[slot]
                    );
                }
            }
        }

        let mut epoch_loss_sum = 0.0;
        let mut epoch_pairs = 0usize;
        let mut grad_acc = vec![0.0; model.params.len()];
        let mut batch_pairs = 0usize;

        let chunk = rayon::current_num_threads().max(1) * 2;
        for (chunk_start, slots) in order.chunks(chunk).enumerate().map(|(i, c)| (i * chunk, c)) {
            let results: Vec<Option<(Vec<f64>, f64, usize)>> = slots
                .par_iter()
                .enumerate()
                .map(|(off, &patient)| {
                    let negs = negatives[chunk_start + off].as_ref()?;
                    let mut t = Tape::new(&model.params);
                    let (loss, n) = patient_loss(&model, &mut t, patient, corpus, negs);
                    let value = t.scalar_value(loss);
                    Some((t.backward(loss), value, n))
                })
                .collect();
            for result in results.into_iter().flatten() {
                let (grads, loss_value, n_pairs) = result;
                for (a, g) in grad_acc.iter_mut().zip(&grads) {
                    *a += g;
                }
                epoch_loss_sum += loss_value;
                epoch_pairs += n_pairs;
                batch_pairs += n_pairs;
                if batch_pairs >= cfg.batch_size {
                    model.params.add_l2_grad(cfg.l2, &mut grad_acc);
                    optimizer.step(model.params.values_mut(), &grad_acc);
                    grad_acc.iter_mut().for_each(|g| *g = 0.0);
                    batch_pairs = 0;
                }
            }
        }
        if batch_pairs > 0 {
            model.params.add_l2_grad(cfg.l2, &mut grad_acc);
            optimizer.step(model.params.values_mut(), &grad_acc);
        }

        let train_loss = if epoch_pairs == 0 {
            f64::INFINITY
        } else {
            epoch_loss_sum / epoch_pairs as f64
        };
        let val_loss = mean_split_loss(&model, corpus, &corpus.split.valid, &val_negatives);
        log.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if stopper.observe(val_loss, model.params.values()) {
            break;
        }
    }

    stopper.restore(model.params.values_mut());
    let best_val_loss = stopper.best_loss();
    Ok(PretrainOutcome {
        model,
        log,
        best_val_loss,
        skipped_records: skipped,
    })
}

/// Encode every patient in the corpus with a trained model, in index order.
pub fn encode_all(model: &PretrainModel, corpus: &Corpus) -> Vec<Vec<f64>> {
    corpus
        .patients
        .par_iter()
        .map(|desc| model.encode_patient(desc))
        .collect()
}
