//! Corpus and label file formats.
//!
//! The corpus file is line-delimited text with a self-describing header:
//!
//! ```text
//! #dpr-corpus v1
//! #meta n=<N> m=<M> p=<disease dim> q=<note len> seed=<seed>
//! #disease_vocab <idx> <name>          (one line per entry)
//! #token_vocab <idx> <name>            (one line per entry)
//! #split train|valid|test <idx...>
//! <record id>|<disease bit indices>|<note token ids>|<drug ids>
//! ```
//!
//! Index lists are space-separated. The label file holds one
//! `a<TAB>b<TAB>class<TAB>direction` line per labeled pair.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::types::{
    AdmissionTokens, Corpus, CorpusMeta, Direction, DiseaseDocument, InteractionClass,
    LabeledPair, Package, PatientDescription, RelationMatrix, Split, Vocab,
};
use super::relation::build_relation_matrix;

const MAGIC: &str = "#dpr-corpus v1";

/// Serialize a corpus into the documented text format.
pub fn corpus_to_string(corpus: &Corpus) -> String {
    let mut out = String::new();
    let meta = &corpus.meta;
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(
        out,
        "#meta n={} m={} p={} q={} seed={}",
        meta.n_patients, meta.n_drugs, meta.disease_dim, meta.note_len, meta.seed
    );
    for (i, name) in corpus.disease_vocab.names().iter().enumerate() {
        let _ = writeln!(out, "#disease_vocab {i} {name}");
    }
    for (i, name) in corpus.token_vocab.names().iter().enumerate() {
        let _ = writeln!(out, "#token_vocab {i} {name}");
    }
    for (tag, list) in [
        ("train", &corpus.split.train),
        ("valid", &corpus.split.valid),
        ("test", &corpus.split.test),
    ] {
        let _ = write!(out, "#split {tag}");
        for i in list {
            let _ = write!(out, " {i}");
        }
        out.push('\n');
    }
    for (i, (patient, package)) in corpus.patients.iter().zip(&corpus.packages).enumerate() {
        let bits: Vec<String> = patient.disease.ones().map(|b| b.to_string()).collect();
        let tokens: Vec<String> = patient.note.tokens.iter().map(|t| t.to_string()).collect();
        let drugs: Vec<String> = package.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(
            out,
            "p{i:06}|{}|{}|{}",
            bits.join(" "),
            tokens.join(" "),
            drugs.join(" ")
        );
    }
    out
}

/// Serialize labeled pairs, one per line.
pub fn labels_to_string(labels: &[LabeledPair]) -> String {
    let mut out = String::new();
    for l in labels {
        let dir = match l.direction {
            Direction::AToB => "a_to_b",
            Direction::BToA => "b_to_a",
            Direction::Bidirection => "bidirection",
        };
        let _ = writeln!(out, "{}\t{}\t{}\t{}", l.drug_a, l.drug_b, l.class.code(), dir);
    }
    out
}

pub fn parse_labels(text: &str) -> Result<Vec<LabeledPair>> {
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::CorpusFormat(format!(
                "label line {}: expected 4 tab-separated fields",
                lineno + 1
            )));
        }
        let parse_id = |s: &str| {
            s.parse::<usize>().map_err(|_| {
                Error::CorpusFormat(format!("label line {}: bad drug id `{s}`", lineno + 1))
            })
        };
        let class_code: i8 = fields[2].parse().map_err(|_| {
            Error::CorpusFormat(format!("label line {}: bad class `{}`", lineno + 1, fields[2]))
        })?;
        let direction = match fields[3] {
            "a_to_b" => Direction::AToB,
            "b_to_a" => Direction::BToA,
            "bidirection" => Direction::Bidirection,
            other => {
                return Err(Error::CorpusFormat(format!(
                    "label line {}: bad direction `{other}`",
                    lineno + 1
                )))
            }
        };
        labels.push(LabeledPair {
            drug_a: parse_id(fields[0])?,
            drug_b: parse_id(fields[1])?,
            class: InteractionClass::from_code(class_code)?,
            direction,
        });
    }
    Ok(labels)
}

/// Parse the corpus text format back into a [`Corpus`].
///
/// The relation matrix is rebuilt from `labels`; pass the lines from the
/// label file written next to the corpus.
pub fn corpus_from_string(text: &str, labels: &[LabeledPair]) -> Result<Corpus> {
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default();
    if first != MAGIC {
        return Err(Error::CorpusFormat(format!(
            "missing `{MAGIC}` header, found `{first}`"
        )));
    }
    let mut meta: Option<CorpusMeta> = None;
    let mut disease_vocab = Vocab::new();
    let mut token_vocab = Vocab::new();
    let mut split = Split::default();
    let mut patients: Vec<PatientDescription> = Vec::new();
    let mut packages: Vec<Package> = Vec::new();

    for (lineno, line) in lines.enumerate() {
        let bad = |what: &str| {
            Error::CorpusFormat(format!("line {}: {what}", lineno + 2))
        };
        if let Some(rest) = line.strip_prefix("#meta ") {
            let mut m = CorpusMeta {
                n_patients: 0,
                n_drugs: 0,
                disease_dim: 0,
                note_len: 0,
                seed: 0,
            };
            for kv in rest.split_whitespace() {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| bad("meta entries need key=value"))?;
                let parse =
                    |v: &str| v.parse::<usize>().map_err(|_| bad("meta value not numeric"));
                match k {
                    "n" => m.n_patients = parse(v)?,
                    "m" => m.n_drugs = parse(v)?,
                    "p" => m.disease_dim = parse(v)?,
                    "q" => m.note_len = parse(v)?,
                    "seed" => {
                        m.seed = v.parse().map_err(|_| bad("meta seed not numeric"))?
                    }
                    _ => return Err(bad("unknown meta key")),
                }
            }
            meta = Some(m);
        } else if let Some(rest) = line.strip_prefix("#disease_vocab ") {
            let (_, name) = rest.split_once(' ').ok_or_else(|| bad("vocab line"))?;
            disease_vocab.intern(name);
        } else if let Some(rest) = line.strip_prefix("#token_vocab ") {
            let (_, name) = rest.split_once(' ').ok_or_else(|| bad("vocab line"))?;
            token_vocab.intern(name);
        } else if let Some(rest) = line.strip_prefix("#split ") {
            let mut parts = rest.split_whitespace();
            let tag = parts.next().ok_or_else(|| bad("split tag missing"))?;
            let ids: Vec<usize> = parts
                .map(|s| s.parse().map_err(|_| bad("split index not numeric")))
                .collect::<Result<_>>()?;
            match tag {
                "train" => split.train = ids,
                "valid" => split.valid = ids,
                "test" => split.test = ids,
                _ => return Err(bad("unknown split tag")),
            }
        } else if line.starts_with('#') || line.trim().is_empty() {
            continue;
        } else {
            let meta = meta
                .as_ref()
                .ok_or_else(|| bad("record before #meta header"))?;
            let fields: Vec<&str> = line.split('|').collect();
            if fields.len() != 4 {
                return Err(bad("record needs 4 pipe-separated fields"));
            }
            let ints = |s: &str| -> Result<Vec<usize>> {
                s.split_whitespace()
                    .map(|x| x.parse::<usize>().map_err(|_| bad("non-numeric id")))
                    .collect()
            };
            let bits = ints(fields[1])?;
            let tokens: Vec<u32> = ints(fields[2])?.into_iter().map(|t| t as u32).collect();
            let drugs = ints(fields[3])?;
            if tokens.len() != meta.note_len {
                return Err(bad("note token count differs from q"));
            }
            if drugs.iter().any(|&d| d >= meta.n_drugs) {
                return Err(bad("drug id out of range"));
            }
            patients.push(PatientDescription {
                disease: DiseaseDocument::from_indices(meta.disease_dim, &bits),
                note: AdmissionTokens { tokens },
            });
            packages.push(drugs.into_iter().collect());
        }
    }

    let meta = meta.ok_or_else(|| Error::CorpusFormat("missing #meta header".into()))?;
    if patients.len() != meta.n_patients {
        return Err(Error::CorpusFormat(format!(
            "header says {} patients, file has {}",
            meta.n_patients,
            patients.len()
        )));
    }
    let relation: RelationMatrix = build_relation_matrix(labels, meta.n_drugs)?;
    Ok(Corpus {
        patients,
        packages,
        relation,
        disease_vocab,
        token_vocab,
        split,
        meta,
        labels: labels.to_vec(),
        heldout_labels: Vec::new(),
    })
}

/// Write corpus + visible labels (+ held-out labels when present) to disk.
pub fn save_corpus(corpus: &Corpus, corpus_path: &Path, labels_path: &Path) -> Result<()> {
    fs::write(corpus_path, corpus_to_string(corpus))?;
    fs::write(labels_path, labels_to_string(&corpus.labels))?;
    if !corpus.heldout_labels.is_empty() {
        let heldout = labels_path.with_extension("heldout.tsv");
        fs::write(heldout, labels_to_string(&corpus.heldout_labels))?;
    }
    Ok(())
}

/// Load corpus + labels written by [`save_corpus`].
pub fn load_corpus(corpus_path: &Path, labels_path: &Path) -> Result<Corpus> {
    let labels = parse_labels(&fs::read_to_string(labels_path)?)?;
    let mut corpus = corpus_from_string(&fs::read_to_string(corpus_path)?, &labels)?;
    let heldout_path = labels_path.with_extension("heldout.tsv");
    if heldout_path.exists() {
        corpus.heldout_labels = parse_labels(&fs::read_to_string(heldout_path)?)?;
    }
    Ok(corpus)
}
