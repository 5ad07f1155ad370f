//! EMR-like records, preprocessing, interaction labels, and the synthetic
//! corpus generator.

pub mod generator;
pub mod io;
pub mod preprocess;
pub mod relation;
pub mod types;

pub use generator::{generate_synthetic_corpus, plan_layout, GeneratorConfig};
pub use io::{load_corpus, save_corpus};
pub use preprocess::{build_disease_document, grade_lab, normalize_admission_note};
pub use relation::build_relation_matrix;
pub use types::{
    AdmissionTokens, Corpus, CorpusMeta, Direction, DiseaseDocument, DrugId, InteractionClass,
    LabResult, LabeledPair, Package, PatientDescription, RawRecord, RelationMatrix, Split, Vocab,
    PAD_TOKEN, TOKEN_ID_BASE, UNK_TOKEN,
};
