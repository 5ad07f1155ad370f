//! Plain-text pipeline configuration with a versioned schema.
//!
//! Format: `key = value` lines grouped under `[section]` headers, `#`
//! comments allowed. Validation is aggregated: every problem in the file is
//! reported at once, and unknown keys come back with a nearest-match
//! suggestion.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::GeneratorConfig;
use crate::embedding::TrainConfig;
use crate::error::{Error, Result};
use crate::genpkg::HeuristicConfig;

pub const CONFIG_VERSION: u64 = 1;

/// Which package model the `train`/`evaluate` stages use.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Weighted,
    Attributed,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Weighted => "dpr-wg",
            ModelKind::Attributed => "dpr-ag",
        }
    }
}

/// Dimension preset for every network in the pipeline.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum DimPreset {
    /// 32-wide parts, 64-wide patient embeddings, 128-wide MLP hidden layers.
    Reference,
    /// Narrow widths for CPU-bound experiments.
    Compact,
}

/// Validated settings for the whole pipeline.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub corpus: GeneratorConfig,
    pub pretrain: TrainConfig,
    pub package_train: TrainConfig,
    pub model: ModelKind,
    pub dims: DimPreset,
    pub threshold: f64,
    pub layers: usize,
    pub ce_weight: f64,
    pub edge_dim: Option<usize>,
    pub freeze_embeddings: bool,
    pub neighbors: usize,
    pub heuristic: HeuristicConfig,
    /// Raw config text for manifests.
    pub echo: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            out_dir: PathBuf::from("runs/default"),
            corpus: GeneratorConfig::default(),
            pretrain: TrainConfig::default(),
            package_train: TrainConfig::default(),
            model: ModelKind::Weighted,
            dims: DimPreset::Reference,
            threshold: 0.01,
            layers: 1,
            ce_weight: 1.0,
            edge_dim: None,
            freeze_embeddings: false,
            neighbors: 10,
            heuristic: HeuristicConfig::default(),
            echo: String::new(),
        }
    }
}

const KNOWN_KEYS: &[(&str, &str)] = &[
    ("", "version"),
    ("", "seed"),
    ("paths", "out_dir"),
    ("corpus", "n_patients"),
    ("corpus", "n_drugs"),
    ("corpus", "note_len"),
    ("corpus", "avg_package_size"),
    ("corpus", "n_conditions"),
    ("corpus", "label_holdout_fraction"),
    ("pretrain", "learning_rate"),
    ("pretrain", "batch_size"),
    ("pretrain", "negative_ratio"),
    ("pretrain", "l2"),
    ("pretrain", "epochs"),
    ("pretrain", "patience"),
    ("pretrain", "train_subsample"),
    ("package_model", "variant"),
    ("package_model", "threshold"),
    ("package_model", "layers"),
    ("package_model", "learning_rate"),
    ("package_model", "batch_size"),
    ("package_model", "negative_ratio"),
    ("package_model", "l2"),
    ("package_model", "epochs"),
    ("package_model", "patience"),
    ("package_model", "train_subsample"),
    ("package_model", "ce_weight"),
    ("package_model", "edge_dim"),
    ("package_model", "freeze_embeddings"),
    ("model", "dims"),
    ("evaluate", "neighbors"),
    ("generate", "low_personalized_percentile"),
    ("generate", "high_personalized_percentile"),
    ("generate", "low_frequency_percentile"),
    ("generate", "rare_in_s1_count"),
    ("generate", "p_high"),
    ("generate", "p_low"),
];

fn edit_distance(a: &str, b: &str) -> usize {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            cur[j] = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn suggest(section: &str, key: &str) -> Option<String> {
    KNOWN_KEYS
        .iter()
        .filter(|(s, _)| *s == section)
        .map(|(_, k)| (k, edit_distance(key, k)))
        .min_by_key(|(_, d)| *d)
        .filter(|(_, d)| *d <= 3)
        .map(|(k, _)| k.to_string())
}

/// Parse and fully validate a config string. Problems are aggregated into a
/// single error listing each offending line/field.
pub fn validate_config_str(text: &str) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig {
        echo: text.to_string(),
        ..PipelineConfig::default()
    };
    let mut problems: Vec<String> = Vec::new();
    let mut section = String::new();
    let mut saw_version = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            if !KNOWN_KEYS.iter().any(|(s, _)| *s == section) {
                problems.push(format!("line {}: unknown section [{section}]", lineno + 1));
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            problems.push(format!("line {}: expected `key = value`", lineno + 1));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.iter().any(|(s, k)| *s == section && *k == key) {
            let hint = suggest(&section, key)
                .map(|s| format!(" (did you mean `{s}`?)"))
                .unwrap_or_default();
            problems.push(format!(
                "line {}: unknown key `{key}` in section [{section}]{hint}",
                lineno + 1
            ));
            continue;
        }

        let mut bad = |field: &str, what: &str| {
            problems.push(format!("line {}: {field} {what}", lineno + 1));
        };
        macro_rules! parse_into {
            ($target:expr, $ty:ty) => {
                match value.parse::<$ty>() {
                    Ok(v) => $target = v,
                    Err(_) => bad(key, "is not a valid number"),
                }
            };
        }
        match (section.as_str(), key) {
            ("", "version") => match value.parse::<u64>() {
                Ok(v) if v == CONFIG_VERSION => saw_version = true,
                Ok(v) => bad("version", &format!("{v} unsupported (expected {CONFIG_VERSION})")),
                Err(_) => bad("version", "is not a valid number"),
            },
            ("", "seed") => parse_into!(cfg.seed, u64),
            ("paths", "out_dir") => cfg.out_dir = PathBuf::from(value),
            ("corpus", "n_patients") => parse_into!(cfg.corpus.n_patients, usize),
            ("corpus", "n_drugs") => parse_into!(cfg.corpus.n_drugs, usize),
            ("corpus", "note_len") => parse_into!(cfg.corpus.note_len, usize),
            ("corpus", "avg_package_size") => parse_into!(cfg.corpus.avg_package_size, f64),
            ("corpus", "n_conditions") => parse_into!(cfg.corpus.n_conditions, usize),
            ("corpus", "label_holdout_fraction") => {
                parse_into!(cfg.corpus.label_holdout_fraction, f64)
            }
            ("pretrain", "learning_rate") => parse_into!(cfg.pretrain.learning_rate, f64),
            ("pretrain", "batch_size") => parse_into!(cfg.pretrain.batch_size, usize),
            ("pretrain", "negative_ratio") => parse_into!(cfg.pretrain.negative_ratio, usize),
            ("pretrain", "l2") => parse_into!(cfg.pretrain.l2, f64),
            ("pretrain", "epochs") => parse_into!(cfg.pretrain.epochs, usize),
            ("pretrain", "patience") => parse_into!(cfg.pretrain.patience, usize),
            ("pretrain", "train_subsample") => match value.parse::<usize>() {
                Ok(v) => cfg.pretrain.train_subsample = Some(v),
                Err(_) => bad(key, "is not a valid number"),
            },
            ("package_model", "variant") => match value {
                "dpr-wg" => cfg.model = ModelKind::Weighted,
                "dpr-ag" => cfg.model = ModelKind::Attributed,
                other => bad("variant", &format!("`{other}` is not dpr-wg or dpr-ag")),
            },
            ("package_model", "threshold") => parse_into!(cfg.threshold, f64),
            ("package_model", "layers") => parse_into!(cfg.layers, usize),
            ("package_model", "learning_rate") => parse_into!(cfg.package_train.learning_rate, f64),
            ("package_model", "batch_size") => parse_into!(cfg.package_train.batch_size, usize),
            ("package_model", "negative_ratio") => {
                parse_into!(cfg.package_train.negative_ratio, usize)
            }
            ("package_model", "l2") => parse_into!(cfg.package_train.l2, f64),
            ("package_model", "epochs") => parse_into!(cfg.package_train.epochs, usize),
            ("package_model", "patience") => parse_into!(cfg.package_train.patience, usize),
            ("package_model", "train_subsample") => match value.parse::<usize>() {
                Ok(v) => cfg.package_train.train_subsample = Some(v),
                Err(_) => bad(key, "is not a valid number"),
            },
            ("package_model", "ce_weight") => parse_into!(cfg.ce_weight, f64),
            ("package_model", "edge_dim") => match value.parse::<usize>() {
                Ok(v) => cfg.edge_dim = Some(v),
                Err(_) => bad(key, "is not a valid number"),
            },
            ("package_model", "freeze_embeddings") => match value {
                "true" => cfg.freeze_embeddings = true,
                "false" => cfg.freeze_embeddings = false,
                _ => bad("freeze_embeddings", "must be true or false"),
            },
            ("model", "dims") => match value {
                "reference" => cfg.dims = DimPreset::Reference,
                "compact" => cfg.dims = DimPreset::Compact,
                other => bad("dims", &format!("`{other}` is not reference or compact")),
            },
            ("evaluate", "neighbors") => parse_into!(cfg.neighbors, usize),
            ("generate", "low_personalized_percentile") => {
                parse_into!(cfg.heuristic.low_personalized_percentile, f64)
            }
            ("generate", "high_personalized_percentile") => {
                parse_into!(cfg.heuristic.high_personalized_percentile, f64)
            }
            ("generate", "low_frequency_percentile") => {
                parse_into!(cfg.heuristic.low_frequency_percentile, f64)
            }
            ("generate", "rare_in_s1_count") => parse_into!(cfg.heuristic.rare_in_s1_count, usize),
            ("generate", "p_high") => parse_into!(cfg.heuristic.p_high, f64),
            ("generate", "p_low") => parse_into!(cfg.heuristic.p_low, f64),
            _ => unreachable!("key table covers every match arm"),
        }
    }

    if !saw_version {
        problems.push("missing `version = 1` header".into());
    }
    // Range checks over the assembled config.
    if let Err(e) = cfg.corpus.validate() {
        problems.push(format!("[corpus] {e}"));
    }
    for (name, train) in [("pretrain", &cfg.pretrain), ("package_model", &cfg.package_train)] {
        if let Err(e) = train.validate() {
            problems.push(format!("[{name}] {e}"));
        }
    }
    if !(0.0..=1.0).contains(&cfg.threshold) {
        problems.push(format!(
            "[package_model] threshold {} outside [0,1]",
            cfg.threshold
        ));
    }
    if !(1..=2).contains(&cfg.layers) {
        problems.push(format!("[package_model] layers {} must be 1 or 2", cfg.layers));
    }
    if cfg.ce_weight < 0.0 {
        problems.push("[package_model] ce_weight must be non-negative".into());
    }
    if cfg.neighbors == 0 {
        problems.push("[evaluate] neighbors must be positive".into());
    }
    if let Err(e) = cfg.heuristic.validate() {
        problems.push(format!("[generate] {e}"));
    }

    if problems.is_empty() {
        Ok(cfg)
    } else {
        let mut msg = String::from("config validation failed:");
        for p in &problems {
            let _ = write!(msg, "\n  - {p}");
        }
        Err(Error::Config(msg))
    }
}

/// Read and validate a config file.
pub fn validate_config(path: &Path) -> Result<PipelineConfig> {
    validate_config_str(&fs::read_to_string(path)?)
}

/// A complete config document with the current defaults, for `init-config`.
pub fn default_config_text() -> String {
    let d = PipelineConfig::default();
    let g = &d.corpus;
    format!(
        "version = {CONFIG_VERSION}\nseed = {seed}\n\n[paths]\nout_dir = {out}\n\n[corpus]\nn_patients = {n}\nn_drugs = {m}\nnote_len = {q}\navg_package_size = {avg}\nn_conditions = {cond}\nlabel_holdout_fraction = {hold}\n\n[pretrain]\nlearning_rate = {lr}\nbatch_size = {batch}\nnegative_ratio = {neg}\nl2 = {l2}\nepochs = {epochs}\npatience = {patience}\n\n[package_model]\nvariant = dpr-wg\nthreshold = {thr}\nlayers = 1\nce_weight = 1.0\nfreeze_embeddings = false\n\n[model]\ndims = reference\n\n[evaluate]\nneighbors = {k}\n",
        seed = d.seed,
        out = d.out_dir.display(),
        n = g.n_patients,
        m = g.n_drugs,
        q = g.note_len,
        avg = g.avg_package_size,
        cond = g.n_conditions,
        hold = g.label_holdout_fraction,
        lr = d.pretrain.learning_rate,
        batch = d.pretrain.batch_size,
        neg = d.pretrain.negative_ratio,
        l2 = d.pretrain.l2,
        epochs = d.pretrain.epochs,
        patience = d.pretrain.patience,
        thr = d.threshold,
        k = d.neighbors,
    )
}
