//! Small reverse-mode autodiff core used by every trainable model in this crate.
//!
//! Values are `f64` vectors, parameters live in a flat [`ParamSet`], and each
//! forward pass builds a fresh [`Tape`]. Gradients come back as one flat vector
//! aligned with the parameter store, which keeps batch accumulation and the
//! optimizer trivial and makes per-sample tapes cheap to parallelize.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;

pub use adam::Adam;
pub use layers::{GruCell, LstmCell, Mlp};
pub use params::{Init, ParamId, ParamSet};
pub use tape::{NodeId, Tape};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
