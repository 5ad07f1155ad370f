//! Package scoring on attributed graphs: learned per-edge attribute vectors,
//! a patient mask applied to edges, a linear-message GNN layer, and a hybrid
//! loss adding interaction-type classification over labeled edges to the
//! package ranking objective.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Direction, DrugId, InteractionClass, LabeledPair};
use crate::embedding::{PretrainModel, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::PackageGraph;
use crate::nn::{Adam, Init, Mlp, NodeId, ParamId, ParamSet, Tape};
use crate::util::{derive_seed, EarlyStopper};

pub use crate::dpr_wg::GraphBank;

/// Component switches for the ablation variants.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgVariant {
    /// When false the patient mask is dropped and raw edge attributes feed
    /// the GNN layer.
    pub use_mask: bool,
    /// When false the classification term is dropped from the loss.
    pub use_class_loss: bool,
}

impl AgVariant {
    pub fn full() -> Self {
        AgVariant {
            use_mask: true,
            use_class_loss: true,
        }
    }

    /// Removes the mask layer.
    pub fn mask_ablation() -> Self {
        AgVariant {
            use_mask: false,
            use_class_loss: true,
        }
    }

    /// Removes the cross-entropy term.
    pub fn type_ablation() -> Self {
        AgVariant {
            use_mask: true,
            use_class_loss: false,
        }
    }
}

/// Width plan for the attributed-graph model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgDims {
    pub patient_dim: usize,
    pub drug_dim: usize,
    pub mlp_hidden: usize,
    /// Edge attribute width (D). Defaults to the drug embedding width.
    pub edge_dim: usize,
    pub layers: usize,
}

impl AgDims {
    pub fn new(patient_dim: usize, drug_dim: usize, mlp_hidden: usize) -> Self {
        AgDims {
            patient_dim,
            drug_dim,
            mlp_hidden,
            edge_dim: drug_dim,
            layers: 1,
        }
    }

    pub fn with_edge_dim(mut self, edge_dim: usize) -> Self {
        self.edge_dim = edge_dim;
        self
    }

    pub fn with_layers(mut self, layers: usize) -> Self {
        self.layers = layers;
        self
    }

    fn validate(&self) -> Result<()> {
        if [self.patient_dim, self.drug_dim, self.mlp_hidden, self.edge_dim]
            .iter()
            .any(|&d| d == 0)
        {
            return Err(Error::Config("ag dimensions must be positive".into()));
        }
        if !(1..=2).contains(&self.layers) {
            return Err(Error::Config(format!(
                "layers must be 1 or 2, got {}",
                self.layers
            )));
        }
        Ok(())
    }
}

#[derive(Clone)]
struct AgLayer {
    w_self: ParamId,
    w_msg: ParamId,
    update: Mlp,
}

/// Attributed-graph package scorer with a 3-way interaction classifier.
#[derive(Clone)]
pub struct AgModel {
    pub params: ParamSet,
    pub dims: AgDims,
    pub variant: AgVariant,
    edge_mlp: Mlp,
    mask_mlp: Option<Mlp>,
    layers: Vec<AgLayer>,
    readout_gate: Mlp,
    readout_value: Mlp,
    head: Mlp,
    /// Transfer matrix Q mapping edge attributes to the three class logits
    /// (no-interaction, synergism, antagonism).
    transfer: ParamId,
    drug_table: Option<ParamId>,
    frozen_drugs: Option<Vec<Vec<f64>>>,
}

impl AgModel {
    pub fn new(
        dims: AgDims,
        variant: AgVariant,
        drug_rows: &[Vec<f64>],
        freeze_embeddings: bool,
        seed: u64,
    ) -> Result<Self> {
        dims.validate()?;
        if drug_rows.is_empty() || drug_rows[0].len() != dims.drug_dim {
            return Err(Error::Config("drug table width differs from dims".into()));
        }
        let mut rng = StdRng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let edge_mlp = Mlp::new(
            &mut params,
            "edge_mlp",
            &[2 * dims.drug_dim, dims.mlp_hidden, dims.edge_dim],
            &mut rng,
        );
        let mask_mlp = if variant.use_mask {
            Some(Mlp::new(
                &mut params,
                "mask_mlp",
                &[dims.patient_dim, dims.mlp_hidden, dims.edge_dim],
                &mut rng,
            ))
        } else {
            None
        };
        let layers = (0..dims.layers)
            .map(|l| AgLayer {
                w_self: params.matrix(
                    &format!("layer{l}.w_self"),
                    dims.drug_dim,
                    dims.drug_dim,
                    Init::Kaiming,
                    &mut rng,
                ),
                w_msg: params.matrix(
                    &format!("layer{l}.w_msg"),
                    dims.drug_dim,
                    dims.edge_dim,
                    Init::Kaiming,
                    &mut rng,
                ),
                update: Mlp::new(
                    &mut params,
                    &format!("layer{l}.update"),
                    &[dims.drug_dim, dims.mlp_hidden, dims.drug_dim],
                    &mut rng,
                ),
            })
            .collect();
        let readout_gate = Mlp::new(
            &mut params,
            "readout_gate",
            &[2 * dims.drug_dim, dims.mlp_hidden, dims.drug_dim],
            &mut rng,
        );
        let readout_value = Mlp::new(
            &mut params,
            "readout_value",
            &[2 * dims.drug_dim, dims.mlp_hidden, dims.drug_dim],
            &mut rng,
        );
        let head = Mlp::new(
            &mut params,
            "head",
            &[dims.patient_dim + dims.drug_dim, dims.mlp_hidden, 1],
            &mut rng,
        );
        let transfer = params.matrix("transfer", dims.edge_dim, 3, Init::Kaiming, &mut rng);
        let (drug_table, frozen_drugs) = if freeze_embeddings {
            (None, Some(drug_rows.to_vec()))
        } else {
            let flat: Vec<f64> = drug_rows.iter().flatten().copied().collect();
            let id = params.matrix_from("drug_table", drug_rows.len(), dims.drug_dim, &flat);
            (Some(id), None)
        };
        Ok(AgModel {
            params,
            dims,
            variant,
            edge_mlp,
            mask_mlp,
            layers,
            readout_gate,
            readout_value,
            head,
            transfer,
            drug_table,
            frozen_drugs,
        })
    }

    /// Same structure, substituted parameter values.
    pub fn clone_with_params(&self, params: ParamSet) -> AgModel {
        let mut out = self.clone();
        out.params = params;
        out
    }

    /// Rebuild a model from checkpointed pieces (see the weighted variant).
    pub fn from_parts(
        dims: AgDims,
        variant: AgVariant,
        frozen_drugs: Option<Vec<Vec<f64>>>,
        params: ParamSet,
    ) -> Result<Self> {
        let rows = match &frozen_drugs {
            Some(rows) => rows.clone(),
            None => {
                let table = params.find("drug_table").ok_or_else(|| {
                    Error::Checkpoint("fine-tuned checkpoint lacks a drug table".into())
                })?;
                let (n, _) = params.shape(table);
                vec![vec![0.0; dims.drug_dim]; n]
            }
        };
        let model = Self::new(dims, variant, &rows, frozen_drugs.is_some(), 0)?;
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
        Ok(AgModel { params, ..model })
    }

    pub fn frozen_drug_rows(&self) -> Option<&Vec<Vec<f64>>> {
        self.frozen_drugs.as_ref()
    }

    fn drug_node(&self, t: &mut Tape, drug: DrugId) -> NodeId {
        match self.drug_table {
            Some(id) => t.param_row(id, drug),
            None => t.input(self.frozen_drugs.as_ref().unwrap()[drug].clone()),
        }
    }

    /// Raw edge attribute for a directed pair: MLP over `[sender || receiver]`
    /// drug embeddings (pre-mask).
    pub fn edge_attribute(&self, t: &mut Tape, sender: NodeId, receiver: NodeId) -> NodeId {
        let cat = t.concat(sender, receiver);
        self.edge_mlp.forward(t, cat)
    }

    /// Sigmoid mask over edge attributes derived from the patient embedding.
    pub fn edge_mask(&self, t: &mut Tape, patient: NodeId) -> NodeId {
        let mlp = self.mask_mlp.as_ref().expect("variant has no mask");
        let pre = mlp.forward(t, patient);
        t.sigmoid(pre)
    }

    /// Masked edge attribute; for a fixed patient the same mask multiplies
    /// every edge of the graph.
    pub fn mask_edge_attribute(&self, t: &mut Tape, mask: NodeId, attribute: NodeId) -> NodeId {
        t.mul(mask, attribute)
    }

    /// Class logits for an edge attribute (transpose product with Q).
    pub fn class_logits(&self, t: &mut Tape, attribute: NodeId) -> NodeId {
        t.mat_t_vec(self.transfer, attribute)
    }

    /// Probability triple `(no-interaction, synergism, antagonism)`.
    pub fn classify_attribute(&self, attribute: &[f64]) -> [f64; 3] {
        let mut t = Tape::new(&self.params);
        let a = t.input(attribute.to_vec());
        let logits = self.class_logits(&mut t, a);
        let p = t.softmax_values(logits);
        [p[0], p[1], p[2]]
    }

    /// Raw attribute then classification for a directed drug pair.
    pub fn classify_pair(&self, from: DrugId, to: DrugId) -> [f64; 3] {
        let mut t = Tape::new(&self.params);
        let s = self.drug_node(&mut t, from);
        let r = self.drug_node(&mut t, to);
        let e = self.edge_attribute(&mut t, s, r);
        let logits = self.class_logits(&mut t, e);
        let p = t.softmax_values(logits);
        [p[0], p[1], p[2]]
    }

    /// All per-edge raw attributes for a graph, in edge order.
    fn edge_attributes_on_tape(
        &self,
        t: &mut Tape,
        graph: &PackageGraph,
        drug_nodes: &[NodeId],
    ) -> Vec<NodeId> {
        graph
            .edges()
            .iter()
            .map(|e| self.edge_attribute(t, drug_nodes[e.from], drug_nodes[e.to]))
            .collect()
    }

    /// One GNN layer: message is a linear image of the (masked) edge
    /// attribute, aggregation is a plain sum, update mixes the self path.
    pub fn layer_forward(
        &self,
        t: &mut Tape,
        layer: usize,
        graph: &PackageGraph,
        states: &[NodeId],
        edge_attributes: &[NodeId],
    ) -> Vec<NodeId> {
        let spec = &self.layers[layer];
        let messages: Vec<NodeId> = edge_attributes
            .iter()
            .map(|&e| t.matvec(spec.w_msg, e))
            .collect();
        states
            .iter()
            .enumerate()
            .map(|(u, &h)| {
                let own = t.matvec(spec.w_self, h);
                let incoming = graph.incoming(u);
                let pre = if incoming.is_empty() {
                    own
                } else {
                    let mut terms: Vec<NodeId> = Vec::with_capacity(incoming.len() + 1);
                    terms.push(own);
                    terms.extend(incoming.iter().map(|&e| messages[e]));
                    t.add_many(&terms)
                };
                spec.update.forward(t, pre)
            })
            .collect()
    }

    /// Gated readout, same contract as the weighted model.
    pub fn readout(&self, t: &mut Tape, initial: &[NodeId], hidden: &[NodeId]) -> NodeId {
        let terms: Vec<NodeId> = initial
            .iter()
            .zip(hidden)
            .map(|(&d, &h)| {
                let cat = t.concat(d, h);
                let gate_pre = self.readout_gate.forward(t, cat);
                let gate = t.sigmoid(gate_pre);
                let value = self.readout_value.forward(t, cat);
                t.mul(gate, value)
            })
            .collect();
        t.add_many(&terms)
    }

    /// Score one package graph under one patient; also returns the raw edge
    /// attribute nodes so the classification loss can reuse them.
    pub fn score_with_attributes(
        &self,
        t: &mut Tape,
        patient: NodeId,
        graph: &PackageGraph,
    ) -> (NodeId, Vec<NodeId>) {
        let drug_nodes: Vec<NodeId> = graph
            .drugs()
            .iter()
            .map(|&d| self.drug_node(t, d))
            .collect();
        let raw = self.edge_attributes_on_tape(t, graph, &drug_nodes);
        let effective: Vec<NodeId> = if self.variant.use_mask {
            let mask = self.edge_mask(t, patient);
            raw.iter()
                .map(|&e| self.mask_edge_attribute(t, mask, e))
                .collect()
        } else {
            raw.clone()
        };
        let mut states = drug_nodes.clone();
        for l in 0..self.dims.layers {
            states = self.layer_forward(t, l, graph, &states, &effective);
        }
        let g = self.readout(t, &drug_nodes, &states);
        let cat = t.concat(patient, g);
        (self.head.forward(t, cat), raw)
    }

    pub fn score_package(&self, patient: &[f64], graph: &PackageGraph) -> f64 {
        let mut t = Tape::new(&self.params);
        let u = t.input(patient.to_vec());
        let (s, _) = self.score_with_attributes(&mut t, u, graph);
        t.scalar_value(s)
    }

    /// Mask vector for a patient (None for the mask-free ablation).
    pub fn mask_vector(&self, patient: &[f64]) -> Option<Vec<f64>> {
        self.mask_mlp.as_ref()?;
        let mut t = Tape::new(&self.params);
        let u = t.input(patient.to_vec());
        let m = self.edge_mask(&mut t, u);
        Some(t.value(m).to_vec())
    }

    /// Per-edge classification report for case studies: true class plus the
    /// probability triple from the raw attribute and from the masked one.
    pub fn edge_classification_report(
        &self,
        patient: &[f64],
        graph: &PackageGraph,
        corpus: &Corpus,
    ) -> Vec<EdgeClassRow> {
        let mut t = Tape::new(&self.params);
        let u = t.input(patient.to_vec());
        let drug_nodes: Vec<NodeId> = graph
            .drugs()
            .iter()
            .map(|&d| self.drug_node(&mut t, d))
            .collect();
        let mask = self.variant.use_mask.then(|| self.edge_mask(&mut t, u));
        graph
            .edges()
            .iter()
            .map(|e| {
                let from = graph.drugs()[e.from];
                let to = graph.drugs()[e.to];
                let raw = self.edge_attribute(&mut t, drug_nodes[e.from], drug_nodes[e.to]);
                let raw_logits = self.class_logits(&mut t, raw);
                let raw_probs = t.softmax_values(raw_logits);
                let masked_probs = match mask {
                    Some(m) => {
                        let masked = self.mask_edge_attribute(&mut t, m, raw);
                        let logits = self.class_logits(&mut t, masked);
                        t.softmax_values(logits)
                    }
                    None => raw_probs.clone(),
                };
                EdgeClassRow {
                    from,
                    to,
                    true_class: corpus.relation.get(from, to),
                    raw_probs: [raw_probs[0], raw_probs[1], raw_probs[2]],
                    masked_probs: [masked_probs[0], masked_probs[1], masked_probs[2]],
                }
            })
            .collect()
    }
}

/// One row of the edge-classification export.
#[derive(Clone, Debug)]
pub struct EdgeClassRow {
    pub from: DrugId,
    pub to: DrugId,
    pub true_class: InteractionClass,
    pub raw_probs: [f64; 3],
    pub masked_probs: [f64; 3],
}

/// Options for [`train_ag`].
#[derive(Clone, Debug)]
pub struct AgTrainOptions {
    pub train: TrainConfig,
    pub threshold: f64,
    pub layers: usize,
    pub edge_dim: Option<usize>,
    pub ce_weight: f64,
    pub freeze_embeddings: bool,
    pub variant: AgVariant,
    pub mlp_hidden: usize,
}

impl AgTrainOptions {
    pub fn new(train: TrainConfig) -> Self {
        AgTrainOptions {
            train,
            threshold: 0.01,
            layers: 1,
            edge_dim: None,
            ce_weight: 1.0,
            freeze_embeddings: false,
            variant: AgVariant::full(),
            mlp_hidden: 128,
        }
    }
}

pub struct AgOutcome {
    pub model: AgModel,
    pub bank: GraphBank,
    /// `(epoch, mean bpr term, mean ce term, mean val loss)` rows.
    pub log: Vec<(usize, f64, f64, f64)>,
    pub best_val_loss: f64,
}

/// Labeled edges of a graph as `(edge index, class index)`.
pub fn labeled_edges(graph: &PackageGraph, corpus: &Corpus) -> Vec<(usize, usize)> {
    graph
        .edges()
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            corpus
                .relation
                .get(graph.drugs()[e.from], graph.drugs()[e.to])
                .class_index()
                .map(|c| (i, c))
        })
        .collect()
}

pub(crate) struct AgLossParts {
    pub total: NodeId,
    pub bpr_value: f64,
    pub ce_value: f64,
    /// Ranking terms in the loss.
    pub n_terms: usize,
    /// Classification terms in the loss.
    pub n_ce: usize,
}

// Hybrid loss for one patient: package-ranking terms plus the classification
// term over the positive graph's labeled edges. The classification term
// reads pre-mask attributes.
pub(crate) fn patient_ag_loss(
    model: &AgModel,
    t: &mut Tape,
    patient_embedding: &[f64],
    own: &PackageGraph,
    own_labeled: &[(usize, usize)],
    negatives: &[&PackageGraph],
    ce_weight: f64,
) -> AgLossParts {
    let u = t.input(patient_embedding.to_vec());
    let (pos, raw_attributes) = model.score_with_attributes(t, u, own);
    let mut terms: Vec<NodeId> = Vec::with_capacity(negatives.len() + own_labeled.len());
    for g in negatives {
        let (neg, _) = model.score_with_attributes(t, u, g);
        let margin = t.sub(neg, pos);
        terms.push(t.softplus(margin));
    }
    let bpr_value: f64 = terms.iter().map(|&n| t.scalar_value(n)).sum();
    let mut ce_value = 0.0;
    if model.variant.use_class_loss && ce_weight > 0.0 {
        for &(edge_idx, class_idx) in own_labeled {
            let logits = model.class_logits(t, raw_attributes[edge_idx]);
            let log_p = t.log_softmax_pick(logits, class_idx);
            let nll = t.neg(log_p);
            let weighted = if (ce_weight - 1.0).abs() > 1e-12 {
                let w = t.scalar(ce_weight);
                t.mul(nll, w)
            } else {
                nll
            };
            ce_value += t.scalar_value(weighted);
            terms.push(weighted);
        }
    }
    let n_terms = negatives.len();
    let n_ce = terms.len() - n_terms;
    let total = t.add_many(&terms);
    AgLossParts {
        total,
        bpr_value,
        ce_value,
        n_terms,
        n_ce,
    }
}

fn sample_negative_patients(
    own: usize,
    pool: &[usize],
    count: usize,
    rng: &mut StdRng,
) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let candidate = pool[rng.gen_range(0..pool.len())];
        if candidate != own {
            out.push(candidate);
        }
    }
    out
}

/// Train the attributed-graph scorer with the hybrid loss.
pub fn train_ag(
    corpus: &Corpus,
    pretrained: &PretrainModel,
    patient_embeddings: &[Vec<f64>],
    opts: &AgTrainOptions,
) -> Result<AgOutcome> {
    opts.train.validate()?;
    if opts.ce_weight < 0.0 {
        return Err(Error::Config("ce_weight must be non-negative".into()));
    }
    if corpus.split.train.len() < 2 {
        return Err(Error::Train(
            "package-level negatives need at least two training patients".into(),
        ));
    }
    let bank = GraphBank::build(corpus, opts.threshold)?;
    let mut dims = AgDims::new(
        pretrained.dims.patient_dim(),
        pretrained.dims.drug_dim,
        opts.mlp_hidden,
    )
    .with_layers(opts.layers);
    if let Some(d) = opts.edge_dim {
        dims = dims.with_edge_dim(d);
    }
    let mut model = AgModel::new(
        dims,
        opts.variant,
        &pretrained.drug_rows(),
        opts.freeze_embeddings,
        opts.train.seed,
    )?;

    let cfg = &opts.train;
    let train_pool: Vec<usize> = corpus
        .split
        .train
        .iter()
        .copied()
        .filter(|&p| bank.get(p).is_some())
        .collect();
    if train_pool.len() < 2 {
        return Err(Error::Train("not enough usable training packages".into()));
    }
    let labeled: Vec<Option<Vec<(usize, usize)>>> = (0..corpus.n_patients())
        .map(|p| bank.get(p).map(|(g, _)| labeled_edges(g, corpus)))
        .collect();

    let val_pool: Vec<(usize, Vec<usize>)> = corpus
        .split
        .valid
        .iter()
        .filter(|&&p| bank.get(p).is_some())
        .map(|&p| {
            let mut rng = StdRng::seed_from_u64(derive_seed(cfg.seed, 21, p as u64));
            let negs = sample_negative_patients(p, &train_pool, cfg.negative_ratio, &mut rng);
            (p, negs)
        })
        .collect();

    let mut optimizer = Adam::new(cfg.learning_rate, model.params.len());
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut log = Vec::new();

    let val_loss_of = |model: &AgModel| -> f64 {
        let (sum, count): (f64, usize) = val_pool
            .par_iter()
            .map(|(p, negs)| {
                let own = &bank.get(*p).unwrap().0;
                let neg_refs: Vec<&PackageGraph> =
                    negs.iter().map(|&j| &bank.get(j).unwrap().0).collect();
                let mut t = Tape::new(&model.params);
                let parts = patient_ag_loss(
                    model,
                    &mut t,
                    &patient_embeddings[*p],
                    own,
                    labeled[*p].as_deref().unwrap_or(&[]),
                    &neg_refs,
                    opts.ce_weight,
                );
                (t.scalar_value(parts.total), parts.n_terms.max(1))
            })
            .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        if count == 0 {
            f64::INFINITY
        } else {
            sum / count as f64
        }
    };

    for epoch in 0..cfg.epochs {
        let mut order = train_pool.clone();
        let mut epoch_rng = StdRng::seed_from_u64(derive_seed(cfg.seed, 22, epoch as u64));
        order.shuffle(&mut epoch_rng);
        if let Some(cap) = cfg.train_subsample {
            order.truncate(cap.max(1));
        }
        let negatives: Vec<Vec<usize>> = order
            .iter()
            .map(|&p| {
                let mut rng =
                    StdRng::seed_from_u64(derive_seed(cfg.seed, 23 + epoch as u64, p as u64));
                sample_negative_patients(p, &train_pool, cfg.negative_ratio, &mut rng)
            })
            .collect();

        let mut epoch_bpr = 0.0;
        let mut epoch_ce = 0.0;
        let mut epoch_terms = 0usize;
        let mut grad_acc = vec![0.0; model.params.len()];
        let mut batch_terms = 0usize;
        let chunk = rayon::current_num_threads().max(1) * 2;
        for (chunk_idx, slots) in order.chunks(chunk).enumerate() {
            let base = chunk_idx * chunk;
            let results: Vec<(Vec<f64>, f64, f64, (usize, usize))> = slots
                .par_iter()
                .enumerate()
                .map(|(off, &p)| {
                    let own = &bank.get(p).unwrap().0;
                    let negs = &negatives[base + off];
                    let neg_refs: Vec<&PackageGraph> =
                        negs.iter().map(|&j| &bank.get(j).unwrap().0).collect();
                    let mut t = Tape::new(&model.params);
                    let parts = patient_ag_loss(
                        &model,
                        &mut t,
                        &patient_embeddings[p],
                        own,
                        labeled[p].as_deref().unwrap_or(&[]),
                        &neg_refs,
                        opts.ce_weight,
                    );
                    (
                        t.backward(parts.total),
                        parts.bpr_value,
                        parts.ce_value,
                        (parts.n_terms, parts.n_ce),
                    )
                })
                .collect();
            for (grads, bpr, ce, (n_terms, n_ce)) in results {
                for (a, g) in grad_acc.iter_mut().zip(&grads) {
                    *a += g;
                }
                epoch_bpr += bpr;
                epoch_ce += ce;
                epoch_terms += n_terms;
                batch_terms += n_terms + n_ce;
                if batch_terms >= cfg.batch_size {
                    model.params.add_l2_grad(cfg.l2, &mut grad_acc);
                    optimizer.step(model.params.values_mut(), &grad_acc);
                    grad_acc.iter_mut().for_each(|g| *g = 0.0);
                    batch_terms = 0;
                }
            }
        }
        if batch_terms > 0 {
            model.params.add_l2_grad(cfg.l2, &mut grad_acc);
            optimizer.step(model.params.values_mut(), &grad_acc);
        }

        let denom = epoch_terms.max(1) as f64;
        let val_loss = val_loss_of(&model);
        log.push((epoch, epoch_bpr / denom, epoch_ce / denom, val_loss));
        if stopper.observe(val_loss, model.params.values()) {
            break;
        }
    }
    stopper.restore(model.params.values_mut());
    let best_val_loss = stopper.best_loss();
    Ok(AgOutcome {
        model,
        bank,
        log,
        best_val_loss,
    })
}

/// Accuracy of the trained classifier on a held-out label list. Directed
/// instances follow each label's direction; bidirectional labels contribute
/// both directions.
pub fn heldout_classification_accuracy(model: &AgModel, labels: &[LabeledPair]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for l in labels {
        let Some(class_idx) = l.class.class_index() else {
            continue;
        };
        let mut cases: Vec<(DrugId, DrugId)> = Vec::new();
        match l.direction {
            Direction::AToB => cases.push((l.drug_a, l.drug_b)),
            Direction::BToA => cases.push((l.drug_b, l.drug_a)),
            Direction::Bidirection => {
                cases.push((l.drug_a, l.drug_b));
                cases.push((l.drug_b, l.drug_a));
            }
        }
        for (from, to) in cases {
            let probs = model.classify_pair(from, to);
            let pred = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if pred == class_idx {
                correct += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}
