//! Versioned checkpoint container shared by every trainable model.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dpr_ag::{AgDims, AgModel, AgVariant};
use crate::dpr_wg::{WgDims, WgModel, WgVariant};
use crate::embedding::{EncoderDims, PretrainModel, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::ParamSet;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
enum Payload {
    #[serde(rename = "pretrain")]
    Pretrain { dims: EncoderDims, params: ParamSet },
    #[serde(rename = "dpr-wg")]
    Weighted {
        dims: WgDims,
        variant: WgVariant,
        frozen_drugs: Option<Vec<Vec<f64>>>,
        params: ParamSet,
    },
    #[serde(rename = "dpr-ag")]
    Attributed {
        dims: AgDims,
        variant: AgVariant,
        frozen_drugs: Option<Vec<Vec<f64>>>,
        params: ParamSet,
    },
}

/// Named parameter tensors plus enough metadata to rebuild the model and
/// audit which corpus and settings produced it.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub corpus_fingerprint: String,
    pub train_config: TrainConfig,
    payload: Payload,
}

impl Checkpoint {
    pub fn for_pretrain(model: &PretrainModel, corpus_fp: &str, cfg: &TrainConfig) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            corpus_fingerprint: corpus_fp.to_string(),
            train_config: cfg.clone(),
            payload: Payload::Pretrain {
                dims: model.dims.clone(),
                params: model.params.clone(),
            },
        }
    }

    pub fn for_weighted(model: &WgModel, corpus_fp: &str, cfg: &TrainConfig) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            corpus_fingerprint: corpus_fp.to_string(),
            train_config: cfg.clone(),
            payload: Payload::Weighted {
                dims: model.dims.clone(),
                variant: model.variant,
                frozen_drugs: model.frozen_drug_rows().cloned(),
                params: model.params.clone(),
            },
        }
    }

    pub fn for_attributed(model: &AgModel, corpus_fp: &str, cfg: &TrainConfig) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            corpus_fingerprint: corpus_fp.to_string(),
            train_config: cfg.clone(),
            payload: Payload::Attributed {
                dims: model.dims.clone(),
                variant: model.variant,
                frozen_drugs: model.frozen_drug_rows().cloned(),
                params: model.params.clone(),
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.payload {
            Payload::Pretrain { .. } => "pretrain",
            Payload::Weighted { .. } => "dpr-wg",
            Payload::Attributed { .. } => "dpr-ag",
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path).map_err(|e| {
            Error::Stage {
                stage: "checkpoint".into(),
                reason: format!("cannot read {}: {e}", path.display()),
            }
        })?)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    pub fn into_pretrain(self) -> Result<PretrainModel> {
        match self.payload {
            Payload::Pretrain { dims, params } => PretrainModel::from_parts(dims, params),
            _ => Err(Error::Checkpoint("expected a pretrain checkpoint".into())),
        }
    }

    pub fn into_weighted(self) -> Result<WgModel> {
        match self.payload {
            Payload::Weighted {
                dims,
                variant,
                frozen_drugs,
                params,
            } => WgModel::from_parts(dims, variant, frozen_drugs, params),
            _ => Err(Error::Checkpoint("expected a dpr-wg checkpoint".into())),
        }
    }

    pub fn into_attributed(self) -> Result<AgModel> {
        match self.payload {
            Payload::Attributed {
                dims,
                variant,
                frozen_drugs,
                params,
            } => AgModel::from_parts(dims, variant, frozen_drugs, params),
            _ => Err(Error::Checkpoint("expected a dpr-ag checkpoint".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir() -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("dpr_ckpt_{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn pretrain_checkpoint_roundtrips_bit_exactly() {
        let dims = EncoderDims {
            disease_dim: 5,
            vocab_size: 7,
            n_drugs: 6,
            disease_feat: 3,
            token_dim: 2,
            lstm_hidden: 3,
            mlp_hidden: 4,
            drug_dim: 3,
        };
        let model = PretrainModel::new(dims, 9).unwrap();
        let cfg = TrainConfig::default();
        let path = dir().join("pre.ckpt");
        Checkpoint::for_pretrain(&model, "fp", &cfg).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.kind(), "pretrain");
        assert_eq!(back.corpus_fingerprint, "fp");
        let restored = back.into_pretrain().unwrap();
        assert_eq!(restored.params.values(), model.params.values());
    }

    #[test]
    fn weighted_checkpoint_restores_variant_and_values() {
        let rows: Vec<Vec<f64>> = (0..4).map(|r| vec![r as f64, 0.5, -0.5]).collect();
        let dims = WgDims::new(4, 3, 4);
        let model = WgModel::new(dims, WgVariant::type_ablation(), &rows, false, 3).unwrap();
        let path = dir().join("wg.ckpt");
        Checkpoint::for_weighted(&model, "fp2", &TrainConfig::default())
            .save(&path)
            .unwrap();
        let restored = Checkpoint::load(&path).unwrap().into_weighted().unwrap();
        assert_eq!(restored.variant, WgVariant::type_ablation());
        assert_eq!(restored.params.values(), model.params.values());
    }

    #[test]
    fn frozen_table_rides_outside_params() {
        let rows: Vec<Vec<f64>> = (0..4).map(|r| vec![r as f64, 1.0, 2.0]).collect();
        let dims = AgDims::new(4, 3, 4);
        let model = AgModel::new(dims, AgVariant::full(), &rows, true, 3).unwrap();
        let path = dir().join("ag.ckpt");
        Checkpoint::for_attributed(&model, "fp3", &TrainConfig::default())
            .save(&path)
            .unwrap();
        let restored = Checkpoint::load(&path).unwrap().into_attributed().unwrap();
        assert_eq!(restored.frozen_drug_rows(), model.frozen_drug_rows());
        assert_eq!(restored.params.values(), model.params.values());
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let dims = EncoderDims {
            disease_dim: 2,
            vocab_size: 3,
            n_drugs: 4,
            disease_feat: 2,
            token_dim: 2,
            lstm_hidden: 2,
            mlp_hidden: 2,
            drug_dim: 2,
        };
        let model = PretrainModel::new(dims, 1).unwrap();
        let path = dir().join("kind.ckpt");
        Checkpoint::for_pretrain(&model, "fp", &TrainConfig::default())
            .save(&path)
            .unwrap();
        assert!(Checkpoint::load(&path).unwrap().into_weighted().is_err());
    }
}
