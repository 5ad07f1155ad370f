//! Raw-record preprocessing: disease documents and note normalization.

use crate::error::{Error, Result};

use super::types::{
    AdmissionTokens, DiseaseDocument, LabLevel, LabResult, Vocab, PAD_TOKEN, TOKEN_ID_BASE,
    UNK_TOKEN,
};

/// Vocabulary key for a demographic `(feature, value)` pair.
pub fn demographic_key(feature: &str, value: &str) -> String {
    format!("{feature}={value}")
}

/// Vocabulary key for an abnormal lab outcome.
pub fn lab_key(item: &str, level: LabLevel) -> String {
    match level {
        LabLevel::AbnormallyHigh => format!("{item}:abnormally_high"),
        LabLevel::AbnormallyLow => format!("{item}:abnormally_low"),
        LabLevel::Normal => unreachable!("normal results emit no vocabulary entry"),
    }
}

/// Compare a lab value against its normal range. The range is closed: values
/// exactly on either bound count as normal.
pub fn grade_lab(value: f64, normal_low: f64, normal_high: f64) -> LabLevel {
    if value > normal_high {
        LabLevel::AbnormallyHigh
    } else if value < normal_low {
        LabLevel::AbnormallyLow
    } else {
        LabLevel::Normal
    }
}

fn parse_lab_value(lab: &LabResult, record_id: &str) -> Result<f64> {
    lab.value.trim().parse::<f64>().map_err(|_| Error::Preprocess {
        record: record_id.to_string(),
        reason: format!("lab `{}` has non-numeric value `{}`", lab.item, lab.value),
    })
}

/// One-hot disease document for a record: one bit per demographic value plus
/// one bit per abnormal lab outcome. Normal lab results emit nothing.
/// Features absent from `vocab` are skipped (out-of-vocabulary at
/// valid/test time).
pub fn build_disease_document(
    record_id: &str,
    demographics: &[(String, String)],
    lab_results: &[LabResult],
    vocab: &Vocab,
) -> Result<DiseaseDocument> {
    let mut doc = DiseaseDocument::new(vocab.len());
    for (feature, value) in demographics {
        if let Some(idx) = vocab.get(&demographic_key(feature, value)) {
            doc.set(idx);
        }
    }
    for lab in lab_results {
        let value = parse_lab_value(lab, record_id)?;
        let level = grade_lab(value, lab.normal_low, lab.normal_high);
        if level == LabLevel::Normal {
            continue;
        }
        if let Some(idx) = vocab.get(&lab_key(&lab.item, level)) {
            doc.set(idx);
        }
    }
    Ok(doc)
}

/// Strip punctuation and split a note into lowercase word tokens.
pub fn tokenize_note(text: &str) -> Vec<String> {
    text.chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect()
}

/// Normalize a note into exactly `target_len` token ids: tokenize, map
/// through the vocabulary (unknown words to the UNK id), cut when too long,
/// pad when too short.
pub fn normalize_admission_note(
    text: &str,
    target_len: usize,
    token_vocab: &Vocab,
) -> AdmissionTokens {
    assert!(target_len > 0, "note length must be positive");
    let mut tokens: Vec<u32> = tokenize_note(text)
        .iter()
        .take(target_len)
        .map(|w| {
            token_vocab
                .get(w)
                .map(|i| i as u32 + TOKEN_ID_BASE)
                .unwrap_or(UNK_TOKEN)
        })
        .collect();
    tokens.resize(target_len, PAD_TOKEN);
    AdmissionTokens { tokens }
}

/// Build the disease vocabulary from training-split records only.
pub fn build_disease_vocab<'a>(
    records: impl Iterator<Item = &'a super::types::RawRecord>,
) -> Result<Vocab> {
    let mut vocab = Vocab::new();
    for record in records {
        for (feature, value) in &record.demographics {
            vocab.intern(&demographic_key(feature, value));
        }
        for lab in &record.lab_results {
            let value = parse_lab_value(lab, &record.record_id)?;
            let level = grade_lab(value, lab.normal_low, lab.normal_high);
            if level != LabLevel::Normal {
                vocab.intern(&lab_key(&lab.item, level));
            }
        }
    }
    Ok(vocab)
}

/// Build the note-token vocabulary from training-split records only.
pub fn build_token_vocab<'a>(
    records: impl Iterator<Item = &'a super::types::RawRecord>,
) -> Vocab {
    let mut vocab = Vocab::new();
    for record in records {
        for token in tokenize_note(&record.admission_note) {
            vocab.intern(&token);
        }
    }
    vocab
}
