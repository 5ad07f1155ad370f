//! Interaction-aware drug package recommendation.
//!
//! The crate covers the full pipeline on synthetic EMR-style data:
//!
//! 1. [`corpus`] — synthetic record generation, preprocessing into disease
//!    documents and fixed-length note token sequences, and the directed
//!    drug-interaction relation matrix.
//! 2. [`embedding`] — patient encoder (disease MLP + note LSTM), drug
//!    embedding table, NCF-style matching head, and BPR pre-training.
//! 3. [`graph`] — per-package graph construction from interaction labels and
//!    co-occurrence statistics, plus the generic message-passing contract.
//! 4. [`dpr_wg`] / [`dpr_ag`] — the two package-scoring models: signed
//!    edge weights with patient-conditioned impact factors, and learned edge
//!    attribute vectors with an interaction-classification auxiliary loss.
//! 5. [`recommend`] — candidate retrieval, baselines, ablation variants, and
//!    precision/recall/F1 evaluation.
//! 6. [`genpkg`] — heuristic generation of new candidate packages.
//! 7. [`cli`] — config validation, pipeline orchestration, and report files.
//!
//! See the crate examples for runnable entry points per capability, or the
//! `dpr` binary for the subcommand interface.

pub mod cli;
pub mod corpus;
pub mod dpr_ag;
pub mod dpr_wg;
pub mod embedding;
pub mod error;
pub mod genpkg;
pub mod graph;
pub mod nn;
pub mod recommend;
pub(crate) mod util;

pub use error::{Error, Result};
