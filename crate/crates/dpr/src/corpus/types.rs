//! Domain types for EMR-like records and drug-interaction labels.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into the drug set; always `< M` for the owning corpus.
pub type DrugId = usize;

/// A prescribed drug set for one hospital stay.
pub type Package = BTreeSet<DrugId>;

/// One unprocessed medical record.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub record_id: String,
    /// `(feature, categorical value)` pairs, e.g. `("sex", "female")`.
    pub demographics: Vec<(String, String)>,
    pub lab_results: Vec<LabResult>,
    pub admission_note: String,
    pub drugs: Package,
}

/// A lab panel line: the measured value arrives as text and is parsed during
/// preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub struct LabResult {
    pub item: String,
    pub value: String,
    pub normal_low: f64,
    pub normal_high: f64,
}

/// Outcome of comparing a lab value against its normal range.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum LabLevel {
    Normal,
    AbnormallyHigh,
    AbnormallyLow,
}

/// One-hot disease document over the demographic/lab vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiseaseDocument {
    bits: Vec<bool>,
}

impl DiseaseDocument {
    pub fn new(dim: usize) -> Self {
        DiseaseDocument {
            bits: vec![false; dim],
        }
    }

    pub fn from_indices(dim: usize, indices: &[usize]) -> Self {
        let mut doc = Self::new(dim);
        for &i in indices {
            assert!(i < dim, "disease bit {i} out of range {dim}");
            doc.bits[i] = true;
        }
        doc
    }

    pub fn set(&mut self, idx: usize) {
        self.bits[idx] = true;
    }

    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn dim(&self) -> usize {
        self.bits.len()
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    /// Dense 0/1 input vector for the encoder.
    pub fn to_input(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Fixed-length token id sequence for one admission note.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdmissionTokens {
    pub tokens: Vec<u32>,
}

impl AdmissionTokens {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Full model input for one patient.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientDescription {
    pub disease: DiseaseDocument,
    pub note: AdmissionTokens,
}

/// Directed drug–drug interaction label.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InteractionClass {
    NoInteraction,
    Synergism,
    Antagonism,
    Unknown,
}

impl InteractionClass {
    pub fn code(self) -> i8 {
        match self {
            InteractionClass::NoInteraction => 0,
            InteractionClass::Synergism => 1,
            InteractionClass::Antagonism => 2,
            InteractionClass::Unknown => -1,
        }
    }

    pub fn from_code(code: i8) -> Result<Self> {
        Ok(match code {
            0 => InteractionClass::NoInteraction,
            1 => InteractionClass::Synergism,
            2 => InteractionClass::Antagonism,
            -1 => InteractionClass::Unknown,
            other => {
                return Err(Error::CorpusFormat(format!(
                    "invalid interaction class code {other}"
                )))
            }
        })
    }

    /// True for the three labeled classes (everything except `Unknown`).
    pub fn is_labeled(self) -> bool {
        self != InteractionClass::Unknown
    }

    /// Position in the 3-way classification head: (no-interaction, synergism, antagonism).
    pub fn class_index(self) -> Option<usize> {
        match self {
            InteractionClass::NoInteraction => Some(0),
            InteractionClass::Synergism => Some(1),
            InteractionClass::Antagonism => Some(2),
            InteractionClass::Unknown => None,
        }
    }
}

/// Which directed entries a labeled pair populates.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    AToB,
    BToA,
    Bidirection,
}

/// One curated interaction label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub drug_a: DrugId,
    pub drug_b: DrugId,
    pub class: InteractionClass,
    pub direction: Direction,
}

/// Dense M×M directed interaction matrix. `get(i, j)` is the interaction
/// from drug `i` to drug `j`; the diagonal stays `Unknown`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationMatrix {
    m: usize,
    entries: Vec<i8>,
}

impl RelationMatrix {
    pub fn new(m: usize) -> Self {
        RelationMatrix {
            m,
            entries: vec![-1; m * m],
        }
    }

    pub fn n_drugs(&self) -> usize {
        self.m
    }

    pub fn get(&self, from: DrugId, to: DrugId) -> InteractionClass {
        InteractionClass::from_code(self.entries[from * self.m + to]).unwrap()
    }

    pub fn set(&mut self, from: DrugId, to: DrugId, class: InteractionClass) {
        assert!(from != to, "diagonal entries stay unknown");
        self.entries[from * self.m + to] = class.code();
    }

    /// All labeled directed entries, row-major order.
    pub fn labeled_entries(&self) -> impl Iterator<Item = (DrugId, DrugId, InteractionClass)> + '_ {
        self.entries.iter().enumerate().filter_map(move |(k, &c)| {
            if c == -1 {
                None
            } else {
                Some((
                    k / self.m,
                    k % self.m,
                    InteractionClass::from_code(c).unwrap(),
                ))
            }
        })
    }
}

/// Bijective string↔index vocabulary.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert if absent; returns the entry's index either way.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Reserved note-token ids.
pub const PAD_TOKEN: u32 = 0;
pub const UNK_TOKEN: u32 = 1;
/// Offset applied to vocabulary indices when mapping note tokens to ids.
pub const TOKEN_ID_BASE: u32 = 2;

/// Train/valid/test partition of patient indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Header-level corpus facts, echoed in the serialized file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub n_patients: usize,
    pub n_drugs: usize,
    pub disease_dim: usize,
    pub note_len: usize,
    pub seed: u64,
}

/// Everything downstream modules consume.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub patients: Vec<PatientDescription>,
    pub packages: Vec<Package>,
    pub relation: RelationMatrix,
    pub disease_vocab: Vocab,
    pub token_vocab: Vocab,
    pub split: Split,
    pub meta: CorpusMeta,
    /// Labels backing `relation` (the visible set).
    pub labels: Vec<LabeledPair>,
    /// Planted labels withheld from `relation`, kept for held-out evaluation
    /// of interaction classification.
    pub heldout_labels: Vec<LabeledPair>,
}

impl Corpus {
    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn n_drugs(&self) -> usize {
        self.meta.n_drugs
    }

    /// Packages of the training split, in split order.
    pub fn train_packages(&self) -> Vec<Package> {
        self.split
            .train
            .iter()
            .map(|&i| self.packages[i].clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disease_document_roundtrip_between_dense_and_sparse() {
        let doc = DiseaseDocument::from_indices(6, &[1, 4]);
        assert_eq!(doc.ones().collect::<Vec<_>>(), vec![1, 4]);
        assert_eq!(doc.to_input(), vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn relation_matrix_defaults_to_unknown() {
        let r = RelationMatrix::new(3);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(r.get(i, j), InteractionClass::Unknown);
            }
        }
    }

    #[test]
    fn interaction_class_codes_roundtrip() {
        for c in [
            InteractionClass::NoInteraction,
            InteractionClass::Synergism,
            InteractionClass::Antagonism,
            InteractionClass::Unknown,
        ] {
            assert_eq!(InteractionClass::from_code(c.code()).unwrap(), c);
        }
        assert!(InteractionClass::from_code(3).is_err());
    }

    #[test]
    fn vocab_is_bijective() {
        let mut v = Vocab::new();
        let a = v.intern("alpha");
        let b = v.intern("beta");
        assert_eq!(v.intern("alpha"), a);
        assert_ne!(a, b);
        assert_eq!(v.name(a), "alpha");
        assert_eq!(v.get("beta"), Some(b));
        assert_eq!(v.len(), 2);
    }
}
