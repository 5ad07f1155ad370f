//! Flat parameter storage with named entries.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Handle to one named tensor inside a [`ParamSet`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Initialization scheme for a new tensor.
#[derive(Copy, Clone, Debug)]
pub enum Init {
    /// Scaled fan-in normal: `N(0, sqrt(2 / fan_in))`, fan_in = number of columns.
    Kaiming,
    /// `N(0, std)`.
    Normal(f64),
    Zeros,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

/// All trainable scalars of one model, stored contiguously.
///
/// Matrices are row-major. Vectors are stored as `rows = 1`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamSet {
    values: Vec<f64>,
    entries: Vec<ParamEntry>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn matrix<R: Rng>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        assert!(rows > 0 && cols > 0, "empty parameter {name}");
        let offset = self.values.len();
        let n = rows * cols;
        match init {
            Init::Kaiming => {
                let std = (2.0 / cols as f64).sqrt();
                let dist = Normal::new(0.0, std).unwrap();
                self.values.extend((0..n).map(|_| dist.sample(rng)));
            }
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).unwrap();
                self.values.extend((0..n).map(|_| dist.sample(rng)));
            }
            Init::Zeros => self.values.extend(std::iter::repeat(0.0).take(n)),
        }
        self.entries.push(ParamEntry {
            name: name.to_string(),
            offset,
            rows,
            cols,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn vector<R: Rng>(&mut self, name: &str, len: usize, init: Init, rng: &mut R) -> ParamId {
        self.matrix(name, 1, len, init, rng)
    }

    /// Adopt an externally produced tensor (e.g. a pretrained embedding table).
    pub fn matrix_from(&mut self, name: &str, rows: usize, cols: usize, data: &[f64]) -> ParamId {
        assert_eq!(data.len(), rows * cols, "shape mismatch for {name}");
        let offset = self.values.len();
        self.values.extend_from_slice(data);
        self.entries.push(ParamEntry {
            name: name.to_string(),
            offset,
            rows,
            cols,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn shape(&self, id: ParamId) -> (usize, usize) {
        let e = &self.entries[id.0];
        (e.rows, e.cols)
    }

    pub fn slice(&self, id: ParamId) -> &[f64] {
        let e = &self.entries[id.0];
        &self.values[e.offset..e.offset + e.rows * e.cols]
    }

    pub fn slice_mut(&mut self, id: ParamId) -> &mut [f64] {
        let e = self.entries[id.0].clone();
        &mut self.values[e.offset..e.offset + e.rows * e.cols]
    }

    pub fn offset(&self, id: ParamId) -> usize {
        self.entries[id.0].offset
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Squared L2 norm of every stored scalar.
    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Add the gradient of `lambda * ||theta||^2` into `grads`.
    pub fn add_l2_grad(&self, lambda: f64, grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.values.len());
        for (g, v) in grads.iter_mut().zip(&self.values) {
            *g += 2.0 * lambda * v;
        }
    }
}
