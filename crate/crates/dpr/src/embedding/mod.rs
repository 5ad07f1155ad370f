//! Patient/drug embedding pre-training: disease-document MLP, note LSTM,
//! drug embedding table, NCF-style matching head, and the BPR training loop.

pub mod model;
pub mod pretrain;

pub use model::{EncoderDims, PretrainModel};
pub use pretrain::{pretrain, sample_negatives, PretrainOutcome, TrainConfig};

use crate::nn::softplus;

/// One pairwise ranking term: `-ln sigmoid(pos - neg)`.
pub fn bpr_term(pos: f64, neg: f64) -> f64 {
    softplus(neg - pos)
}
