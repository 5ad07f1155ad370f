//! Small shared training utilities.

/// Mix a base seed with two stream coordinates into an independent seed.
pub fn derive_seed(base: u64, stream: u64, idx: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ idx.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Tracks the best validation loss and a snapshot of the parameters that
/// achieved it; stops after `patience` epochs without improvement.
pub struct EarlyStopper {
    patience: usize,
    stale: usize,
    best_loss: f64,
    best_values: Option<Vec<f64>>,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            stale: 0,
            best_loss: f64::INFINITY,
            best_values: None,
        }
    }

    /// Record an epoch's validation loss; returns true when training should
    /// stop.
    pub fn observe(&mut self, val_loss: f64, values: &[f64]) -> bool {
        if val_loss < self.best_loss {
            self.best_loss = val_loss;
            self.best_values = Some(values.to_vec());
            self.stale = 0;
            false
        } else {
            self.stale += 1;
            self.stale > self.patience
        }
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    /// Restore the best snapshot into `values` (no-op if nothing improved).
    pub fn restore(&self, values: &mut [f64]) {
        if let Some(best) = &self.best_values {
            values.copy_from_slice(best);
        }
    }
}
