//! Define-by-run tape over `f64` vectors.
//!
//! Each op evaluates eagerly and records enough structure for the reverse
//! sweep. `backward` returns one flat gradient vector aligned with the
//! [`ParamSet`] the tape was opened on, so independent samples can run on
//! separate tapes (and threads) and their gradients summed in a fixed order.

use super::params::{ParamId, ParamSet};
use super::{sigmoid, softplus};

#[derive(Copy, Clone, Debug)]
pub struct NodeId(usize);

enum Op {
    Input,
    ParamVec(ParamId),
    ParamRow(ParamId, usize),
    /// `W x` for a `rows x cols` matrix param and a `cols` vector.
    MatVec(ParamId, NodeId),
    /// `W^T x` for a `rows x cols` matrix param and a `rows` vector.
    MatTVec(ParamId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Vector scaled by a length-1 node.
    ScaleByScalar(NodeId, NodeId),
    AddMany(Vec<NodeId>),
    Concat(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Softplus(NodeId),
    Neg(NodeId),
    Dot(NodeId, NodeId),
    Sum(NodeId),
    /// `ln softmax(x)[k]` as a length-1 node.
    LogSoftmaxPick(NodeId, usize),
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'a> {
    params: &'a ParamSet,
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn zeros(&mut self, len: usize) -> NodeId {
        self.input(vec![0.0; len])
    }

    pub fn scalar(&mut self, x: f64) -> NodeId {
        self.input(vec![x])
    }

    /// A parameter vector (or flattened matrix) as a node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.push(self.params.slice(id).to_vec(), Op::ParamVec(id))
    }

    /// One row of a matrix parameter, e.g. an embedding lookup.
    pub fn param_row(&mut self, id: ParamId, row: usize) -> NodeId {
        let (rows, cols) = self.params.shape(id);
        assert!(row < rows, "row {row} out of range for param with {rows} rows");
        let s = self.params.slice(id);
        self.push(s[row * cols..(row + 1) * cols].to_vec(), Op::ParamRow(id, row))
    }

    pub fn matvec(&mut self, w: ParamId, x: NodeId) -> NodeId {
        let (rows, cols) = self.params.shape(w);
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), cols, "matvec dimension mismatch");
        let m = self.params.slice(w);
        let mut out = vec![0.0; rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &m[i * cols..(i + 1) * cols];
            *o = row.iter().zip(xv).map(|(a, b)| a * b).sum();
        }
        self.push(out, Op::MatVec(w, x))
    }

    pub fn mat_t_vec(&mut self, w: ParamId, x: NodeId) -> NodeId {
        let (rows, cols) = self.params.shape(w);
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), rows, "mat_t_vec dimension mismatch");
        let m = self.params.slice(w);
        let mut out = vec![0.0; cols];
        for i in 0..rows {
            let xi = xv[i];
            for (j, o) in out.iter_mut().enumerate() {
                *o += m[i * cols + j] * xi;
            }
        }
        self.push(out, Op::MatTVec(w, x))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = zip_with(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = zip_with(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = zip_with(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale_by_scalar(&mut self, v: NodeId, s: NodeId) -> NodeId {
        debug_assert_eq!(self.nodes[s.0].value.len(), 1);
        let k = self.nodes[s.0].value[0];
        let out = self.nodes[v.0].value.iter().map(|x| x * k).collect();
        self.push(out, Op::ScaleByScalar(v, s))
    }

    /// Element-wise sum of any number of equal-length nodes.
    pub fn add_many(&mut self, ids: &[NodeId]) -> NodeId {
        assert!(!ids.is_empty());
        let mut out = self.nodes[ids[0].0].value.clone();
        for id in &ids[1..] {
            for (o, v) in out.iter_mut().zip(&self.nodes[id.0].value) {
                *o += v;
            }
        }
        self.push(out, Op::AddMany(ids.to_vec()))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.nodes[a.0].value.clone();
        out.extend_from_slice(&self.nodes[b.0].value);
        self.push(out, Op::Concat(a, b))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.iter().map(|&v| sigmoid(v)).collect();
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.iter().map(|v| v.tanh()).collect();
        self.push(out, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.iter().map(|v| v.max(0.0)).collect();
        self.push(out, Op::Relu(x))
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.iter().map(|&v| softplus(v)).collect();
        self.push(out, Op::Softplus(x))
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.iter().map(|v| -v).collect();
        self.push(out, Op::Neg(x))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s: f64 = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .sum();
        self.push(vec![s], Op::Dot(a, b))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x.0].value.iter().sum();
        self.push(vec![s], Op::Sum(x))
    }

    pub fn log_softmax_pick(&mut self, x: NodeId, k: usize) -> NodeId {
        let v = &self.nodes[x.0].value;
        assert!(k < v.len());
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        self.push(vec![v[k] - lse], Op::LogSoftmaxPick(x, k))
    }

    /// Softmax probabilities of a node's value (forward-only helper).
    pub fn softmax_values(&self, x: NodeId) -> Vec<f64> {
        softmax(&self.nodes[x.0].value)
    }

    /// Reverse sweep from a scalar node. Returns gradients for every scalar
    /// in the underlying [`ParamSet`], in storage order.
    pub fn backward(&self, loss: NodeId) -> Vec<f64> {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "loss must be scalar");
        let mut adj: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        let mut grads = vec![0.0; self.params.len()];
        adj[loss.0][0] = 1.0;

        for idx in (0..=loss.0).rev() {
            if adj[idx].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = std::mem::take(&mut adj[idx]);
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::ParamVec(p) => {
                    let off = self.params.offset(*p);
                    for (i, gi) in g.iter().enumerate() {
                        grads[off + i] += gi;
                    }
                }
                Op::ParamRow(p, row) => {
                    let (_, cols) = self.params.shape(*p);
                    let off = self.params.offset(*p) + row * cols;
                    for (i, gi) in g.iter().enumerate() {
                        grads[off + i] += gi;
                    }
                }
                Op::MatVec(p, x) => {
                    let (rows, cols) = self.params.shape(*p);
                    let off = self.params.offset(*p);
                    let xv = &self.nodes[x.0].value;
                    let m = self.params.slice(*p);
                    let xadj = &mut adj[x.0];
                    for i in 0..rows {
                        let gi = g[i];
                        if gi == 0.0 {
                            continue;
                        }
                        let row = &m[i * cols..(i + 1) * cols];
                        let gw = &mut grads[off + i * cols..off + (i + 1) * cols];
                        for j in 0..cols {
                            gw[j] += gi * xv[j];
                            xadj[j] += gi * row[j];
                        }
                    }
                }
                Op::MatTVec(p, x) => {
                    let (rows, cols) = self.params.shape(*p);
                    let off = self.params.offset(*p);
                    let xv = &self.nodes[x.0].value;
                    let m = self.params.slice(*p);
                    let xadj = &mut adj[x.0];
                    for i in 0..rows {
                        let xi = xv[i];
                        let row = &m[i * cols..(i + 1) * cols];
                        let gw = &mut grads[off + i * cols..off + (i + 1) * cols];
                        let mut acc = 0.0;
                        for j in 0..cols {
                            gw[j] += g[j] * xi;
                            acc += row[j] * g[j];
                        }
                        xadj[i] += acc;
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, &g, 1.0);
                    accumulate(&mut adj, *b, &g, 1.0);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, &g, 1.0);
                    accumulate(&mut adj, *b, &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (ai, bi) = (a.0, b.0);
                    for i in 0..g.len() {
                        let (av, bv) = (self.nodes[ai].value[i], self.nodes[bi].value[i]);
                        adj[ai][i] += g[i] * bv;
                        adj[bi][i] += g[i] * av;
                    }
                }
                Op::ScaleByScalar(v, s) => {
                    let k = self.nodes[s.0].value[0];
                    let mut ds = 0.0;
                    for i in 0..g.len() {
                        adj[v.0][i] += g[i] * k;
                        ds += g[i] * self.nodes[v.0].value[i];
                    }
                    adj[s.0][0] += ds;
                }
                Op::AddMany(ids) => {
                    for id in ids {
                        accumulate(&mut adj, *id, &g, 1.0);
                    }
                }
                Op::Concat(a, b) => {
                    let alen = self.nodes[a.0].value.len();
                    accumulate(&mut adj, *a, &g[..alen], 1.0);
                    accumulate(&mut adj, *b, &g[alen..], 1.0);
                }
                Op::Sigmoid(x) => {
                    let y = &self.nodes[idx].value;
                    for i in 0..g.len() {
                        adj[x.0][i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Tanh(x) => {
                    let y = &self.nodes[idx].value;
                    for i in 0..g.len() {
                        adj[x.0][i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[x.0].value;
                    for i in 0..g.len() {
                        if xv[i] > 0.0 {
                            adj[x.0][i] += g[i];
                        }
                    }
                }
                Op::Softplus(x) => {
                    let xv = &self.nodes[x.0].value;
                    for i in 0..g.len() {
                        adj[x.0][i] += g[i] * sigmoid(xv[i]);
                    }
                }
                Op::Neg(x) => accumulate(&mut adj, *x, &g, -1.0),
                Op::Dot(a, b) => {
                    let g0 = g[0];
                    let (ai, bi) = (a.0, b.0);
                    for i in 0..self.nodes[ai].value.len() {
                        adj[ai][i] += g0 * self.nodes[bi].value[i];
                        adj[bi][i] += g0 * self.nodes[ai].value[i];
                    }
                }
                Op::Sum(x) => {
                    let g0 = g[0];
                    for gi in adj[x.0].iter_mut() {
                        *gi += g0;
                    }
                }
                Op::LogSoftmaxPick(x, k) => {
                    let probs = softmax(&self.nodes[x.0].value);
                    let g0 = g[0];
                    for (i, p) in probs.iter().enumerate() {
                        let ind = if i == *k { 1.0 } else { 0.0 };
                        adj[x.0][i] += g0 * (ind - p);
                    }
                }
            }
        }
        grads
    }
}

fn zip_with(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "element-wise op on mismatched lengths");
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

fn accumulate(adj: &mut [Vec<f64>], target: NodeId, g: &[f64], scale: f64) {
    for (a, gi) in adj[target.0].iter_mut().zip(g) {
        *a += gi * scale;
    }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

#[cfg(test)]
mod tests {
    use super::super::gradcheck::finite_diff;
    use super::super::params::{Init, ParamSet};
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matvec_forward_hand_case() {
        let mut rng = StdRng::seed_from_u64(0);
        let mut p = ParamSet::new();
        let w = p.matrix("w", 2, 3, Init::Zeros, &mut rng);
        p.slice_mut(w).copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut t = Tape::new(&p);
        let x = t.input(vec![1.0, 0.0, -1.0]);
        let y = t.matvec(w, x);
        assert_eq!(t.value(y), &[-2.0, -2.0]);
    }

    #[test]
    fn mat_t_vec_forward_hand_case() {
        let mut rng = StdRng::seed_from_u64(0);
        let mut p = ParamSet::new();
        let w = p.matrix("q", 2, 3, Init::Zeros, &mut rng);
        p.slice_mut(w).copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut t = Tape::new(&p);
        let x = t.input(vec![1.0, 2.0]);
        let y = t.mat_t_vec(w, x);
        assert_eq!(t.value(y), &[9.0, 12.0, 15.0]);
    }

    #[test]
    fn log_softmax_pick_uniform() {
        let p = ParamSet::new();
        let mut t = Tape::new(&p);
        let x = t.input(vec![0.0, 0.0, 0.0]);
        let y = t.log_softmax_pick(x, 1);
        assert!((t.scalar_value(y) - (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    // A composite scalar function exercising every differentiable op, checked
    // against central finite differences.
    fn composite_loss(p: &ParamSet) -> f64 {
        let w = p.find("w").unwrap();
        let q = p.find("q").unwrap();
        let emb = p.find("emb").unwrap();
        let a = p.find("a").unwrap();
        let mut t = Tape::new(p);
        let x = t.input(vec![0.3, -0.7, 1.1]);
        let h1 = t.matvec(w, x);
        let h1 = t.relu(h1);
        let row = t.param_row(emb, 1);
        let cat = t.concat(h1, row);
        let sg = t.sigmoid(cat);
        let th = t.tanh(cat);
        let prod = t.mul(sg, th);
        let av = t.param(a);
        let d = t.dot(av, prod);
        let scaled = t.scale_by_scalar(prod, d);
        let qt = t.mat_t_vec(q, scaled);
        let lsm = t.log_softmax_pick(qt, 2);
        let neg = t.neg(lsm);
        let sum_all = t.sum(scaled);
        let sp = t.softplus(sum_all);
        let diff = t.sub(sp, lsm);
        let many = t.add_many(&[neg, sp, diff]);
        let total = t.sum(many);
        t.scalar_value(total)
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(11);
        let mut p = ParamSet::new();
        p.matrix("w", 2, 3, Init::Kaiming, &mut rng);
        p.matrix("q", 4, 3, Init::Kaiming, &mut rng);
        p.matrix("emb", 3, 2, Init::Normal(0.5), &mut rng);
        p.vector("a", 4, Init::Kaiming, &mut rng);

        let analytic = {
            let w = p.find("w").unwrap();
            let q = p.find("q").unwrap();
            let emb = p.find("emb").unwrap();
            let a = p.find("a").unwrap();
            let mut t = Tape::new(&p);
            let x = t.input(vec![0.3, -0.7, 1.1]);
            let h1 = t.matvec(w, x);
            let h1 = t.relu(h1);
            let row = t.param_row(emb, 1);
            let cat = t.concat(h1, row);
            let sg = t.sigmoid(cat);
            let th = t.tanh(cat);
            let prod = t.mul(sg, th);
            let av = t.param(a);
            let d = t.dot(av, prod);
            let scaled = t.scale_by_scalar(prod, d);
            let qt = t.mat_t_vec(q, scaled);
            let lsm = t.log_softmax_pick(qt, 2);
            let neg = t.neg(lsm);
            let sum_all = t.sum(scaled);
            let sp = t.softplus(sum_all);
            let diff = t.sub(sp, lsm);
            let many = t.add_many(&[neg, sp, diff]);
            let total = t.sum(many);
            t.backward(total)
        };
        let numeric = finite_diff(&mut p, composite_loss, 1e-6);
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let denom = a.abs().max(n.abs()).max(1e-8);
            assert!(
                ((a - n) / denom).abs() < 1e-6,
                "param scalar {i}: analytic {a} vs numeric {n}"
            );
        }
    }

    #[test]
    fn unused_embedding_rows_get_zero_grad() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut p = ParamSet::new();
        let emb = p.matrix("emb", 4, 3, Init::Normal(1.0), &mut rng);
        let mut t = Tape::new(&p);
        let r = t.param_row(emb, 2);
        let s = t.sum(r);
        let grads = t.backward(s);
        let off = p.offset(emb);
        for row in 0..4 {
            for c in 0..3 {
                let g = grads[off + row * 3 + c];
                if row == 2 {
                    assert_eq!(g, 1.0);
                } else {
                    assert_eq!(g, 0.0);
                }
            }
        }
    }

    #[test]
    fn backward_is_deterministic() {
        let mut rng = StdRng::seed_from_u64(9);
        let mut p = ParamSet::new();
        p.matrix("w", 5, 5, Init::Kaiming, &mut rng);
        let xs: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let run = || {
            let w = p.find("w").unwrap();
            let mut t = Tape::new(&p);
            let x = t.input(xs.clone());
            let y = t.matvec(w, x);
            let y = t.tanh(y);
            let s = t.sum(y);
            t.backward(s)
        };
        assert_eq!(run(), run());
    }
}
