//! The pre-training model: patient encoder, drug table, matching head.

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DrugId, PatientDescription};
use crate::error::{Error, Result};
use crate::nn::{Init, LstmCell, Mlp, NodeId, ParamId, ParamSet, Tape};

/// Dimension plan for the encoder and matching head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderDims {
    /// Disease-document input width (p); corpus-dependent.
    pub disease_dim: usize,
    /// Note token vocabulary size including pad/unk ids.
    pub vocab_size: usize,
    pub n_drugs: usize,
    /// Disease-feature width (the MLP output).
    pub disease_feat: usize,
    /// Note token embedding width.
    pub token_dim: usize,
    pub lstm_hidden: usize,
    /// Hidden width of every MLP.
    pub mlp_hidden: usize,
    pub drug_dim: usize,
}

impl EncoderDims {
    /// Reference dimensions: 32-wide parts, 64-wide patient embeddings,
    /// 128-wide MLP hidden layers.
    pub fn reference(disease_dim: usize, vocab_size: usize, n_drugs: usize) -> Self {
        EncoderDims {
            disease_dim,
            vocab_size,
            n_drugs,
            disease_feat: 32,
            token_dim: 32,
            lstm_hidden: 32,
            mlp_hidden: 128,
            drug_dim: 32,
        }
    }

    /// Compact dimensions for CPU-bound runs.
    pub fn compact(disease_dim: usize, vocab_size: usize, n_drugs: usize) -> Self {
        EncoderDims {
            disease_dim,
            vocab_size,
            n_drugs,
            disease_feat: 16,
            token_dim: 16,
            lstm_hidden: 16,
            mlp_hidden: 32,
            drug_dim: 16,
        }
    }

    pub fn patient_dim(&self) -> usize {
        self.disease_feat + self.lstm_hidden
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.disease_dim,
            self.vocab_size,
            self.n_drugs,
            self.disease_feat,
            self.token_dim,
            self.lstm_hidden,
            self.mlp_hidden,
            self.drug_dim,
        ];
        if all.iter().any(|&d| d == 0) {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Patient encoder + drug embedding table + matching MLP, all in one
/// parameter set so pre-training optimizes them jointly.
#[derive(Clone, Debug)]
pub struct PretrainModel {
    pub params: ParamSet,
    pub dims: EncoderDims,
    disease_mlp: Mlp,
    token_table: ParamId,
    lstm: LstmCell,
    matching_mlp: Mlp,
    drug_table: ParamId,
}

impl PretrainModel {
    pub fn new(dims: EncoderDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = StdRng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let disease_mlp = Mlp::new(
            &mut params,
            "disease_mlp",
            &[dims.disease_dim, dims.mlp_hidden, dims.disease_feat],
            &mut rng,
        );
        let token_table = params.matrix(
            "token_table",
            dims.vocab_size,
            dims.token_dim,
            Init::Normal(0.1),
            &mut rng,
        );
        let lstm = LstmCell::new(&mut params, "note_lstm", dims.token_dim, dims.lstm_hidden, &mut rng);
        let matching_mlp = Mlp::new(
            &mut params,
            "matching_mlp",
            &[dims.patient_dim() + dims.drug_dim, dims.mlp_hidden, 1],
            &mut rng,
        );
        let drug_table = params.matrix(
            "drug_table",
            dims.n_drugs,
            dims.drug_dim,
            Init::Normal(0.1),
            &mut rng,
        );
        Ok(PretrainModel {
            params,
            dims,
            disease_mlp,
            token_table,
            lstm,
            matching_mlp,
            drug_table,
        })
    }

    pub fn drug_table(&self) -> ParamId {
        self.drug_table
    }

    /// Copy of the drug embedding table as rows.
    pub fn drug_rows(&self) -> Vec<Vec<f64>> {
        let (rows, cols) = self.params.shape(self.drug_table);
        let s = self.params.slice(self.drug_table);
        (0..rows).map(|r| s[r * cols..(r + 1) * cols].to_vec()).collect()
    }

    /// Build the patient embedding on a tape: `[disease features || final
    /// LSTM state]`.
    pub fn encode_on_tape(&self, t: &mut Tape, desc: &PatientDescription) -> NodeId {
        assert_eq!(
            desc.disease.dim(),
            self.dims.disease_dim,
            "disease document width differs from model"
        );
        assert!(
            !desc.note.is_empty(),
            "admission note must have at least one token"
        );
        let disease_in = t.input(desc.disease.to_input());
        let disease_feat = self.disease_mlp.forward(t, disease_in);
        let mut h = t.zeros(self.dims.lstm_hidden);
        let mut c = t.zeros(self.dims.lstm_hidden);
        for &token in &desc.note.tokens {
            let x = t.param_row(self.token_table, token as usize);
            let (h1, c1) = self.lstm.step(t, x, h, c);
            h = h1;
            c = c1;
        }
        t.concat(disease_feat, h)
    }

    /// Patient embedding as a plain vector (no gradient tracking).
    pub fn encode_patient(&self, desc: &PatientDescription) -> Vec<f64> {
        let mut t = Tape::new(&self.params);
        let u = self.encode_on_tape(&mut t, desc);
        t.value(u).to_vec()
    }

    /// Matching score for `(u, drug)` on a tape.
    pub fn score_on_tape(&self, t: &mut Tape, u: NodeId, drug: DrugId) -> NodeId {
        let d = t.param_row(self.drug_table, drug);
        let pair = t.concat(u, d);
        self.matching_mlp.forward(t, pair)
    }

    /// Matching score for a precomputed patient embedding.
    pub fn score_patient_drug(&self, u: &[f64], drug: DrugId) -> f64 {
        assert_eq!(u.len(), self.dims.patient_dim(), "patient embedding width");
        let mut t = Tape::new(&self.params);
        let un = t.input(u.to_vec());
        let s = self.score_on_tape(&mut t, un, drug);
        t.scalar_value(s)
    }

    /// Rebuild a model from checkpointed dims and parameters.
    pub fn from_parts(dims: EncoderDims, params: ParamSet) -> Result<Self> {
        let model = Self::new(dims, 0)?;
        if model.params.entries().len() != params.entries().len()
            || model
                .params
                .entries()
                .iter()
                .zip(params.entries())
                .any(|(a, b)| a.name != b.name || a.rows != b.rows || a.cols != b.cols)
        {
            return Err(Error::Checkpoint(
                "parameter layout differs from the stored dims".into(),
            ));
        }
        Ok(PretrainModel { params, ..model })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AdmissionTokens, DiseaseDocument};
    use crate::nn::sigmoid;

    fn tiny_dims() -> EncoderDims {
        EncoderDims {
            disease_dim: 4,
            vocab_size: 6,
            n_drugs: 5,
            disease_feat: 3,
            token_dim: 2,
            lstm_hidden: 3,
            mlp_hidden: 4,
            drug_dim: 2,
        }
    }

    fn desc(bits: &[usize], tokens: &[u32]) -> PatientDescription {
        PatientDescription {
            disease: DiseaseDocument::from_indices(4, bits),
            note: AdmissionTokens {
                tokens: tokens.to_vec(),
            },
        }
    }

    #[test]
    fn zero_params_zero_input_gives_zero_embedding() {
        let mut model = PretrainModel::new(tiny_dims(), 0).unwrap();
        for v in model.params.values_mut() {
            *v = 0.0;
        }
        let u = model.encode_patient(&desc(&[], &[0, 0]));
        assert_eq!(u, vec![0.0; 6]);
        assert_eq!(u.len(), model.dims.patient_dim());
    }

    #[test]
    fn embedding_dim_is_disease_feat_plus_lstm_hidden() {
        let model = PretrainModel::new(tiny_dims(), 3).unwrap();
        for bits in [vec![], vec![0], vec![1, 3]] {
            let u = model.encode_patient(&desc(&bits, &[1, 2, 0]));
            assert_eq!(u.len(), 3 + 3);
            assert!(u.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn permuting_vocab_and_mlp_columns_leaves_embedding_unchanged() {
        let model = PretrainModel::new(tiny_dims(), 5).unwrap();
        let base = model.encode_patient(&desc(&[1], &[0]));

        // Swap disease vocabulary entries 1 and 2 along with the matching
        // input columns of the first MLP layer.
        let mut permuted = model.clone();
        let w0 = permuted.params.find("disease_mlp.w0").unwrap();
        let (rows, cols) = permuted.params.shape(w0);
        assert_eq!(cols, 4);
        let s = permuted.params.slice_mut(w0);
        for r in 0..rows {
            s.swap(r * cols + 1, r * cols + 2);
        }
        let moved = permuted.encode_patient(&desc(&[2], &[0]));
        for (a, b) in base.iter().zip(&moved) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_token_note_matches_one_lstm_step_oracle() {
        let model = PretrainModel::new(tiny_dims(), 9).unwrap();
        let d = desc(&[], &[3]);
        let u = model.encode_patient(&d);
        let got = &u[3..]; // LSTM half of the embedding

        // Independent single-step evaluation from zero state.
        let p = &model.params;
        let hid = 3usize;
        let x = {
            let t = p.find("token_table").unwrap();
            let s = p.slice(t);
            s[3 * 2..4 * 2].to_vec()
        };
        let get = |n: &str| p.slice(p.find(n).unwrap()).to_vec();
        let mv = |m: &[f64], v: &[f64]| -> Vec<f64> {
            (0..hid)
                .map(|i| {
                    m[i * v.len()..(i + 1) * v.len()]
                        .iter()
                        .zip(v)
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect()
        };
        // Zero h and c silence the recurrent and peephole paths.
        let i_gate: Vec<f64> = mv(&get("note_lstm.w_xi"), &x)
            .iter()
            .zip(&get("note_lstm.b_i"))
            .map(|(a, b)| sigmoid(a + b))
            .collect();
        let cand: Vec<f64> = mv(&get("note_lstm.w_xc"), &x)
            .iter()
            .zip(&get("note_lstm.b_c"))
            .map(|(a, b)| (a + b).tanh())
            .collect();
        let c1: Vec<f64> = (0..hid).map(|k| i_gate[k] * cand[k]).collect();
        let o_pre: Vec<f64> = mv(&get("note_lstm.w_xo"), &x);
        let o_c: Vec<f64> = mv(&get("note_lstm.w_co"), &c1);
        let b_o = get("note_lstm.b_o");
        let expected: Vec<f64> = (0..hid)
            .map(|k| sigmoid(o_pre[k] + o_c[k] + b_o[k]) * c1[k].tanh())
            .collect();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_matching_weights_score_zero_for_any_pair() {
        let mut model = PretrainModel::new(tiny_dims(), 2).unwrap();
        for name in ["matching_mlp.w0", "matching_mlp.b0", "matching_mlp.w1", "matching_mlp.b1"] {
            let id = model.params.find(name).unwrap();
            for v in model.params.slice_mut(id) {
                *v = 0.0;
            }
        }
        let u = model.encode_patient(&desc(&[0, 2], &[1, 4]));
        for drug in 0..5 {
            assert_eq!(model.score_patient_drug(&u, drug), 0.0);
        }
    }

    #[test]
    fn score_is_a_pointwise_function_of_the_pair() {
        let model = PretrainModel::new(tiny_dims(), 8).unwrap();
        let u = model.encode_patient(&desc(&[1], &[2, 3]));
        let lone = model.score_patient_drug(&u, 2);
        // Scoring other drugs in between must not change the result.
        for other in [0, 4, 1, 3] {
            model.score_patient_drug(&u, other);
        }
        assert_eq!(model.score_patient_drug(&u, 2), lone);
    }

    #[test]
    fn hand_set_matching_mlp_matches_closed_form() {
        // Patient dim 6 + drug dim 2 = 8 inputs; hidden 4; hand weights on a
        // 2-active-unit pattern.
        let mut model = PretrainModel::new(tiny_dims(), 4).unwrap();
        let w0 = model.params.find("matching_mlp.w0").unwrap();
        let b0 = model.params.find("matching_mlp.b0").unwrap();
        let w1 = model.params.find("matching_mlp.w1").unwrap();
        let b1 = model.params.find("matching_mlp.b1").unwrap();
        {
            let s = model.params.slice_mut(w0);
            s.fill(0.0);
            s[0] = 1.0; // unit 0 reads input 0
            s[8 + 6] = -2.0; // unit 1 reads drug dim 0
        }
        model.params.slice_mut(b0).copy_from_slice(&[0.5, 0.0, 0.0, 0.0]);
        model.params.slice_mut(w1).copy_from_slice(&[1.0, 3.0, 0.0, 0.0]);
        model.params.slice_mut(b1).copy_from_slice(&[-0.25]);
        // Drug 1 embedding set by hand.
        let dt = model.params.find("drug_table").unwrap();
        {
            let s = model.params.slice_mut(dt);
            s[2] = -1.5; // drug 1, dim 0
            s[3] = 0.0;
        }
        let u = vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        // hidden: relu(1*2 + 0.5) = 2.5; relu(-2 * -1.5) = 3.0
        // out: 2.5 + 3*3 - 0.25 = 11.25
        let got = model.score_patient_drug(&u, 1);
        assert!((got - 11.25).abs() < 1e-12, "{got}");
    }
}
