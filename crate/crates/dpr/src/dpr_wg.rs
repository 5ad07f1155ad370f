//! Package scoring on weighted graphs: signed edge-weight initialization
//! from interaction labels, a patient-conditioned mask, per-edge contextual
//! impact factors, a GRU-aggregated GNN layer, gated readout, and BPR
//! training over packages.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, InteractionClass, RelationMatrix};
use crate::embedding::{PretrainModel, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::{construct_package_graph, CooccurrenceStats, PackageGraph};
use crate::nn::{Adam, GruCell, Init, Mlp, NodeId, ParamId, ParamSet, Tape};
use crate::util::{derive_seed, EarlyStopper};

/// Initial scalar weight per edge: +1 for synergism, -1 for antagonism, and
/// the raw co-occurrence proportion otherwise (including labeled
/// no-interaction and unlabeled pairs).
pub fn init_edge_weights(
    graph: &PackageGraph,
    relation: &RelationMatrix,
    stats: &CooccurrenceStats,
) -> Vec<f64> {
    graph
        .edges()
        .iter()
        .map(|e| {
            let from = graph.drugs()[e.from];
            let to = graph.drugs()[e.to];
            match relation.get(from, to) {
                InteractionClass::Synergism => 1.0,
                InteractionClass::Antagonism => -1.0,
                _ => stats.proportion(from, to),
            }
        })
        .collect()
}

/// Component switches for the ablation variants.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WgVariant {
    /// When false the patient-conditioned impact factor (and its mask/factor
    /// networks) is dropped and edges keep their initial weights.
    pub use_impact_factor: bool,
    /// When false every initial edge weight is 1 (interaction type ignored).
    pub use_typed_weights: bool,
}

impl WgVariant {
    pub fn full() -> Self {
        WgVariant {
            use_impact_factor: true,
            use_typed_weights: true,
        }
    }

    /// Keeps typed initial weights, drops the patient-conditioned factor.
    pub fn context_ablation() -> Self {
        WgVariant {
            use_impact_factor: false,
            use_typed_weights: true,
        }
    }

    /// Keeps the factor, ignores interaction types.
    pub fn type_ablation() -> Self {
        WgVariant {
            use_impact_factor: true,
            use_typed_weights: false,
        }
    }

    /// Structure only: unit weights, no mask/factor machinery.
    pub fn plain_gnn() -> Self {
        WgVariant {
            use_impact_factor: false,
            use_typed_weights: false,
        }
    }
}

/// Width plan for the weighted-graph model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WgDims {
    pub patient_dim: usize,
    pub drug_dim: usize,
    pub mlp_hidden: usize,
    /// Output width of the factor network (and length of its projection row).
    pub factor_dim: usize,
    pub layers: usize,
}

impl WgDims {
    pub fn new(patient_dim: usize, drug_dim: usize, mlp_hidden: usize) -> Self {
        WgDims {
            patient_dim,
            drug_dim,
            mlp_hidden,
            factor_dim: mlp_hidden,
            layers: 1,
        }
    }

    pub fn with_layers(mut self, layers: usize) -> Self {
        self.layers = layers;
        self
    }

    fn validate(&self) -> Result<()> {
        if [self.patient_dim, self.drug_dim, self.mlp_hidden, self.factor_dim]
            .iter()
            .any(|&d| d == 0)
        {
            return Err(Error::Config("wg dimensions must be positive".into()));
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
struct WgLayer {
    w_self: ParamId,
    w_msg: ParamId,
    gru: GruCell,
    update: Mlp,
}

/// Weighted-graph package scorer.
#[derive(Clone)]
pub struct WgModel {
    pub params: ParamSet,
    pub dims: WgDims,
    pub variant: WgVariant,
    mask_mlp: Option<Mlp>,
    factor_mlp: Option<Mlp>,
    factor_proj: Option<ParamId>,
    layers: Vec<WgLayer>,
    readout_gate: Mlp,
    readout_value: Mlp,
    head: Mlp,
    drug_table: Option<ParamId>,
    frozen_drugs: Option<Vec<Vec<f64>>>,
}

impl WgModel {
    /// Build a model. `drug_rows` seeds the embedding table (one row per
    /// drug); with `freeze_embeddings` the rows stay constant instead of
    /// joining the trainable set.
    pub fn new(
        dims: WgDims,
        variant: WgVariant,
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
        let (mask_mlp, factor_mlp, factor_proj) = if variant.use_impact_factor {
            let mask = Mlp::new(
                &mut params,
                "mask_mlp",
                &[dims.patient_dim, dims.mlp_hidden, dims.drug_dim],
                &mut rng,
            );
            let factor = Mlp::new(
                &mut params,
                "factor_mlp",
                &[2 * dims.drug_dim, dims.mlp_hidden, dims.factor_dim],
                &mut rng,
            );
            let proj = params.vector("factor_proj", dims.factor_dim, Init::Kaiming, &mut rng);
            (Some(mask), Some(factor), Some(proj))
        } else {
            (None, None, None)
        };
        let layers = (0..dims.layers)
            .map(|l| WgLayer {
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
                    dims.drug_dim,
                    Init::Kaiming,
                    &mut rng,
                ),
                gru: GruCell::new(
                    &mut params,
                    &format!("layer{l}.gru"),
                    dims.drug_dim,
                    dims.drug_dim,
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
        let (drug_table, frozen_drugs) = if freeze_embeddings {
            (None, Some(drug_rows.to_vec()))
        } else {
            let flat: Vec<f64> = drug_rows.iter().flatten().copied().collect();
            let id = params.matrix_from("drug_table", drug_rows.len(), dims.drug_dim, &flat);
            (Some(id), None)
        };
        Ok(WgModel {
            params,
            dims,
            variant,
            mask_mlp,
            factor_mlp,
            factor_proj,
            layers,
            readout_gate,
            readout_value,
            head,
            drug_table,
            frozen_drugs,
        })
    }

    /// Same structure, substituted parameter values.
    pub fn clone_with_params(&self, params: ParamSet) -> WgModel {
        let mut out = self.clone();
        out.params = params;
        out
    }

    /// Rebuild a model from checkpointed pieces. For fine-tuned embeddings
    /// the table rides inside `params`; frozen rows are stored separately.
    pub fn from_parts(
        dims: WgDims,
        variant: WgVariant,
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
        Ok(WgModel { params, ..model })
    }

    pub fn frozen_drug_rows(&self) -> Option<&Vec<Vec<f64>>> {
        self.frozen_drugs.as_ref()
    }

    pub fn embeddings_frozen(&self) -> bool {
        self.drug_table.is_none()
    }

    fn drug_node(&self, t: &mut Tape, drug: usize) -> NodeId {
        match self.drug_table {
            Some(id) => t.param_row(id, drug),
            None => t.input(self.frozen_drugs.as_ref().unwrap()[drug].clone()),
        }
    }

    /// Sigmoid mask vector from the patient embedding; every component lies
    /// strictly inside (0, 1).
    pub fn mask_on_tape(&self, t: &mut Tape, patient: NodeId) -> NodeId {
        let mlp = self
            .mask_mlp
            .as_ref()
            .expect("variant without impact factor has no mask");
        let pre = mlp.forward(t, patient);
        t.sigmoid(pre)
    }

    /// Patient-conditioned drug embedding: mask applied element-wise.
    pub fn masked_drug(&self, t: &mut Tape, mask: NodeId, drug_embedding: NodeId) -> NodeId {
        t.mul(mask, drug_embedding)
    }

    /// Contextual impact factor for an edge, as tanh of a projected MLP over
    /// the masked receiver/sender embeddings (receiver first).
    pub fn impact_factor(
        &self,
        t: &mut Tape,
        masked_receiver: NodeId,
        masked_sender: NodeId,
    ) -> NodeId {
        let mlp = self.factor_mlp.as_ref().expect("variant has no factor");
        let proj = self.factor_proj.expect("variant has no projection");
        let cat = t.concat(masked_receiver, masked_sender);
        let hidden = mlp.forward(t, cat);
        let a = t.param(proj);
        let dot = t.dot(a, hidden);
        t.tanh(dot)
    }

    /// Effective edge scalars: impact factor times the initial weight (or
    /// the variant-appropriate degenerate form).
    pub fn effective_edge_weights(
        &self,
        t: &mut Tape,
        patient: NodeId,
        graph: &PackageGraph,
        initial: &[f64],
        drug_nodes: &[NodeId],
    ) -> Vec<NodeId> {
        assert_eq!(initial.len(), graph.n_edges());
        let init_value = |e: usize| {
            if self.variant.use_typed_weights {
                initial[e]
            } else {
                1.0
            }
        };
        if !self.variant.use_impact_factor {
            return (0..graph.n_edges())
                .map(|e| t.scalar(init_value(e)))
                .collect();
        }
        let mask = self.mask_on_tape(t, patient);
        let masked: Vec<NodeId> = drug_nodes
            .iter()
            .map(|&d| self.masked_drug(t, mask, d))
            .collect();
        graph
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                let c = self.impact_factor(t, masked[edge.to], masked[edge.from]);
                let w = t.scalar(init_value(e));
                t.mul(c, w)
            })
            .collect()
    }

    /// Aggregated message per node for one layer: the sum over in-edges of
    /// `GRU(weight * W_msg h_sender, h_receiver)`; zeros for isolated nodes.
    pub fn aggregate_messages(
        &self,
        t: &mut Tape,
        layer: usize,
        graph: &PackageGraph,
        states: &[NodeId],
        edge_weights: &[NodeId],
    ) -> Vec<NodeId> {
        let spec = &self.layers[layer];
        let transformed: Vec<NodeId> = states.iter().map(|&h| t.matvec(spec.w_msg, h)).collect();
        (0..graph.n_nodes())
            .map(|u| {
                let contributions: Vec<NodeId> = graph
                    .incoming(u)
                    .iter()
                    .map(|&e| {
                        let edge = &graph.edges()[e];
                        let scaled = t.scale_by_scalar(transformed[edge.from], edge_weights[e]);
                        spec.gru.step(t, scaled, states[u])
                    })
                    .collect();
                if contributions.is_empty() {
                    t.zeros(self.dims.drug_dim)
                } else {
                    t.add_many(&contributions)
                }
            })
            .collect()
    }

    /// One GNN layer: aggregate then update every node.
    pub fn layer_forward(
        &self,
        t: &mut Tape,
        layer: usize,
        graph: &PackageGraph,
        states: &[NodeId],
        edge_weights: &[NodeId],
    ) -> Vec<NodeId> {
        let spec = &self.layers[layer];
        let aggregated = self.aggregate_messages(t, layer, graph, states, edge_weights);
        states
            .iter()
            .zip(aggregated)
            .map(|(&h, m)| {
                let own = t.matvec(spec.w_self, h);
                let pre = t.add(own, m);
                spec.update.forward(t, pre)
            })
            .collect()
    }

    /// Gated readout over nodes: sum of sigmoid-gate times value, both MLPs
    /// over `[initial embedding || hidden state]`.
    pub fn readout(&self, t: &mut Tape, initial: &[NodeId], hidden: &[NodeId]) -> NodeId {
        assert_eq!(initial.len(), hidden.len());
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

    /// Prediction-head score over `[patient || package embedding]`.
    pub fn head_score(&self, t: &mut Tape, patient: NodeId, package_embedding: NodeId) -> NodeId {
        let cat = t.concat(patient, package_embedding);
        self.head.forward(t, cat)
    }

    /// Full forward pass for one package graph under one patient.
    pub fn score_on_tape(
        &self,
        t: &mut Tape,
        patient: NodeId,
        graph: &PackageGraph,
        initial_weights: &[f64],
    ) -> NodeId {
        let drug_nodes: Vec<NodeId> = graph
            .drugs()
            .iter()
            .map(|&d| self.drug_node(t, d))
            .collect();
        let edge_weights =
            self.effective_edge_weights(t, patient, graph, initial_weights, &drug_nodes);
        let mut states = drug_nodes.clone();
        for l in 0..self.dims.layers {
            states = self.layer_forward(t, l, graph, &states, &edge_weights);
        }
        let g = self.readout(t, &drug_nodes, &states);
        self.head_score(t, patient, g)
    }

    /// Plain-value score for ranking.
    pub fn score_package(
        &self,
        patient: &[f64],
        graph: &PackageGraph,
        initial_weights: &[f64],
    ) -> f64 {
        let mut t = Tape::new(&self.params);
        let u = t.input(patient.to_vec());
        let s = self.score_on_tape(&mut t, u, graph, initial_weights);
        t.scalar_value(s)
    }

    /// Mask vector as plain values (for export and case studies); `None` for
    /// variants without the mask network.
    pub fn mask_vector(&self, patient: &[f64]) -> Option<Vec<f64>> {
        self.mask_mlp.as_ref()?;
        let mut t = Tape::new(&self.params);
        let u = t.input(patient.to_vec());
        let m = self.mask_on_tape(&mut t, u);
        Some(t.value(m).to_vec())
    }

    /// Contextual impact factor per edge as plain values.
    pub fn impact_factors(&self, patient: &[f64], graph: &PackageGraph) -> Option<Vec<f64>> {
        self.mask_mlp.as_ref()?;
        let mut t = Tape::new(&self.params);
        let u = t.input(patient.to_vec());
        let drug_nodes: Vec<NodeId> = graph
            .drugs()
            .iter()
            .map(|&d| self.drug_node(&mut t, d))
            .collect();
        let mask = self.mask_on_tape(&mut t, u);
        let masked: Vec<NodeId> = drug_nodes
            .iter()
            .map(|&d| self.masked_drug(&mut t, mask, d))
            .collect();
        Some(
            graph
                .edges()
                .iter()
                .map(|edge| {
                    let c = self.impact_factor(&mut t, masked[edge.to], masked[edge.from]);
                    t.scalar_value(c)
                })
                .collect(),
        )
    }
}

/// Graphs plus initial weights for every patient package, built once per run
/// from frozen training-split statistics.
pub struct GraphBank {
    pub stats: CooccurrenceStats,
    pub threshold: f64,
    graphs: Vec<Option<(PackageGraph, Vec<f64>)>>,
}

impl GraphBank {
    pub fn build(corpus: &Corpus, threshold: f64) -> Result<Self> {
        let stats = CooccurrenceStats::from_packages(&corpus.train_packages(), corpus.n_drugs());
        let graphs: Vec<Option<(PackageGraph, Vec<f64>)>> = corpus
            .packages
            .par_iter()
            .map(|package| {
                construct_package_graph(package, &corpus.relation, &stats, threshold)
                    .ok()
                    .map(|g| {
                        let w = init_edge_weights(&g, &corpus.relation, &stats);
                        (g, w)
                    })
            })
            .collect();
        Ok(GraphBank {
            stats,
            threshold,
            graphs,
        })
    }

    pub fn get(&self, patient: usize) -> Option<&(PackageGraph, Vec<f64>)> {
        self.graphs[patient].as_ref()
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// Options for [`train_wg`].
#[derive(Clone, Debug)]
pub struct WgTrainOptions {
    pub train: TrainConfig,
    pub threshold: f64,
    pub layers: usize,
    pub freeze_embeddings: bool,
    pub variant: WgVariant,
    pub mlp_hidden: usize,
    /// Factor-network output width; defaults to `mlp_hidden`.
    pub factor_dim: Option<usize>,
}

impl WgTrainOptions {
    pub fn new(train: TrainConfig) -> Self {
        WgTrainOptions {
            train,
            threshold: 0.01,
            layers: 1,
            freeze_embeddings: false,
            variant: WgVariant::full(),
            mlp_hidden: 128,
            factor_dim: None,
        }
    }
}

pub struct WgOutcome {
    pub model: WgModel,
    pub bank: GraphBank,
    /// `(epoch, mean train term, mean val term)` rows.
    pub log: Vec<(usize, f64, f64)>,
    pub best_val_loss: f64,
}

fn patient_graph_loss(
    model: &WgModel,
    patient_embedding: &[f64],
    own: &(PackageGraph, Vec<f64>),
    negatives: &[&(PackageGraph, Vec<f64>)],
    t: &mut Tape,
) -> NodeId {
    let u = t.input(patient_embedding.to_vec());
    let pos = model.score_on_tape(t, u, &own.0, &own.1);
    let terms: Vec<NodeId> = negatives
        .iter()
        .map(|(g, w)| {
            let neg = model.score_on_tape(t, u, g, w);
            let margin = t.sub(neg, pos);
            t.softplus(margin)
        })
        .collect();
    t.add_many(&terms)
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

/// Train a weighted-graph scorer with package-level BPR. Negatives are other
/// training patients' packages, conditioned under the scored patient's mask.
pub fn train_wg(
    corpus: &Corpus,
    pretrained: &PretrainModel,
    patient_embeddings: &[Vec<f64>],
    opts: &WgTrainOptions,
) -> Result<WgOutcome> {
    opts.train.validate()?;
    if corpus.split.train.len() < 2 {
        return Err(Error::Train(
            "package-level negatives need at least two training patients".into(),
        ));
    }
    let bank = GraphBank::build(corpus, opts.threshold)?;
    let mut dims = WgDims::new(
        pretrained.dims.patient_dim(),
        pretrained.dims.drug_dim,
        opts.mlp_hidden,
    )
    .with_layers(opts.layers);
    if let Some(f) = opts.factor_dim {
        dims.factor_dim = f;
    }
    let mut model = WgModel::new(
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

    // Fixed validation negatives so epoch losses are comparable.
    let val_pool: Vec<(usize, Vec<usize>)> = corpus
        .split
        .valid
        .iter()
        .filter(|&&p| bank.get(p).is_some())
        .map(|&p| {
            let mut rng = StdRng::seed_from_u64(derive_seed(cfg.seed, 11, p as u64));
            let negs = sample_negative_patients(p, &train_pool, cfg.negative_ratio, &mut rng);
            (p, negs)
        })
        .collect();

    let mut optimizer = Adam::new(cfg.learning_rate, model.params.len());
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut log = Vec::new();

    let val_loss_of = |model: &WgModel| -> f64 {
        let (sum, count): (f64, usize) = val_pool
            .par_iter()
            .map(|(p, negs)| {
                let own = bank.get(*p).unwrap();
                let neg_refs: Vec<_> = negs.iter().map(|&j| bank.get(j).unwrap()).collect();
                let mut t = Tape::new(&model.params);
                let loss =
                    patient_graph_loss(model, &patient_embeddings[*p], own, &neg_refs, &mut t);
                (t.scalar_value(loss), negs.len())
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
        let mut epoch_rng = StdRng::seed_from_u64(derive_seed(cfg.seed, 12, epoch as u64));
        order.shuffle(&mut epoch_rng);
        if let Some(cap) = cfg.train_subsample {
            order.truncate(cap.max(1));
        }
        let negatives: Vec<Vec<usize>> = order
            .iter()
            .map(|&p| {
                let mut rng =
                    StdRng::seed_from_u64(derive_seed(cfg.seed, 13 + epoch as u64, p as u64));
                sample_negative_patients(p, &train_pool, cfg.negative_ratio, &mut rng)
            })
            .collect();

        let mut epoch_loss = 0.0;
        let mut epoch_terms = 0usize;
        let mut grad_acc = vec![0.0; model.params.len()];
        let mut batch_terms = 0usize;
        let chunk = rayon::current_num_threads().max(1) * 2;
        for (chunk_idx, slots) in order.chunks(chunk).enumerate() {
            let base = chunk_idx * chunk;
            let results: Vec<(Vec<f64>, f64, usize)> = slots
                .par_iter()
                .enumerate()
                .map(|(off, &p)| {
                    let own = bank.get(p).unwrap();
                    let negs = &negatives[base + off];
                    let neg_refs: Vec<_> = negs.iter().map(|&j| bank.get(j).unwrap()).collect();
                    let mut t = Tape::new(&model.params);
                    let loss = patient_graph_loss(
                        &model,
                        &patient_embeddings[p],
                        own,
                        &neg_refs,
                        &mut t,
                    );
                    (t.backward(loss), t.scalar_value(loss), negs.len())
                })
                .collect();
            for (grads, loss_value, n_terms) in results {
                for (a, g) in grad_acc.iter_mut().zip(&grads) {
                    *a += g;
                }
                epoch_loss += loss_value;
                epoch_terms += n_terms;
                batch_terms += n_terms;
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

        let train_loss = if epoch_terms == 0 {
            f64::INFINITY
        } else {
            epoch_loss / epoch_terms as f64
        };
        let val_loss = val_loss_of(&model);
        log.push((epoch, train_loss, val_loss));
        if stopper.observe(val_loss, model.params.values()) {
            break;
        }
    }
    stopper.restore(model.params.values_mut());
    let best_val_loss = stopper.best_loss();
    Ok(WgOutcome {
        model,
        bank,
        log,
        best_val_loss,
    })
}
