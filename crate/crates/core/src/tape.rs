//! Reverse-mode automatic differentiation on an append-only tape.
//!
//! Nodes are evaluated eagerly as they are pushed, so the tape is always in
//! topological order and holds every intermediate value. Two backward passes
//! are provided:
//!
//! - [`Tape::grad`] computes numeric gradients with a single reverse sweep;
//! - [`Tape::grad_nodes`] emits the backward pass as new tape nodes, which
//!   makes gradients themselves differentiable. Differentiating through a
//!   gradient step (as meta-learning requires) is a `grad_nodes` sweep for
//!   the inner loss followed by a plain `grad` over the combined graph.
//!
//! The op set is closed under differentiation: every op emitted by
//! `grad_nodes` has both a numeric and a graph VJP. Weight-matrix adjoints
//! from `MatVec` are fused into a single [`Op::OuterAccum`] node per matrix
//! instead of one outer-product matrix per use, which keeps second-order
//! tapes for long rollouts small.
//!
//! Shape agreement between operands is a programming error and panics;
//! fallible user-facing checks (scalar outputs, duplicate parameter names)
//! return [`Error`] values.

use std::collections::{HashMap, HashSet};

use ndarray::{linalg::general_mat_mul, Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::nn::act;
use crate::params::ParamVector;
use crate::value::Value;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(u32);

impl NodeId {
    #[inline]
    fn index(self) -> usize {
        self.0 as usize
    }
}

/// Primitive operations. Unary/binary ops are elementwise unless noted.
#[derive(Debug, Clone)]
enum Op {
    /// Leaf with no gradient flow.
    Const,
    /// Differentiable leaf; payload indexes the tape's parameter registry.
    Param(usize),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    // Values are computed eagerly, so the shift survives only as record
    // metadata; same for Broadcast's width below.
    AddConst(NodeId, #[allow(dead_code)] f64),
    Exp(NodeId),
    Log(NodeId),
    Recip(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Softplus(NodeId),
    /// Vector -> scalar sum.
    Sum(NodeId),
    /// Vector -> scalar element extraction.
    Pick(NodeId, usize),
    /// Scalar -> vector with the scalar at one index, zeros elsewhere.
    OneHot(NodeId, usize, #[allow(dead_code)] usize),
    /// Scalar -> constant-filled vector.
    Broadcast(NodeId, #[allow(dead_code)] usize),
    /// Matrix-vector product A·x.
    MatVec(NodeId, NodeId),
    /// Transposed product Aᵀ·x.
    MatTVec(NodeId, NodeId),
    /// Outer product u·wᵀ.
    Outer(NodeId, NodeId),
    /// Fused sum of outer products Σᵢ gᵢ·xᵢᵀ.
    OuterAccum(Vec<(NodeId, NodeId)>),
    /// N-ary sum of same-shaped nodes.
    AddN(Vec<NodeId>),
}

impl Op {
    fn for_each_input(&self, mut f: impl FnMut(NodeId)) {
        match self {
            Op::Const | Op::Param(_) => {}
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::AddConst(a, _)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Recip(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Softplus(a)
            | Op::Sum(a)
            | Op::Pick(a, _)
            | Op::OneHot(a, _, _)
            | Op::Broadcast(a, _) => f(*a),
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MatVec(a, b)
            | Op::MatTVec(a, b)
            | Op::Outer(a, b) => {
                f(*a);
                f(*b);
            }
            Op::OuterAccum(pairs) => {
                for (g, x) in pairs {
                    f(*g);
                    f(*x);
                }
            }
            Op::AddN(ids) => {
                for id in ids {
                    f(*id);
                }
            }
        }
    }
}

struct Node {
    op: Op,
    value: Value,
}

/// Append-only computation record. See module docs.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, NodeId)>,
}

impl std::fmt::Debug for Tape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.len())
            .field("params", &self.params.len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Tape { nodes: Vec::with_capacity(nodes), params: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value computed for a node.
    pub fn value(&self, id: NodeId) -> &Value {
        &self.nodes[id.index()].value
    }

    /// Registered differentiable leaves, in registration order.
    pub fn param_nodes(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.params.iter().map(|(name, id)| (name.as_str(), *id))
    }

    fn push(&mut self, op: Op, value: Value) -> NodeId {
        let id = NodeId(u32::try_from(self.nodes.len()).expect("tape: node count exceeds u32"));
        self.nodes.push(Node { op, value });
        id
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: impl Into<Value>) -> NodeId {
        self.push(Op::Const, value.into())
    }

    /// Scalar convenience for [`Tape::constant`].
    pub fn scalar(&mut self, x: f64) -> NodeId {
        self.constant(Value::Scalar(x))
    }

    /// Differentiable leaf with a unique name; gradients are reported per name.
    pub fn param(&mut self, name: impl Into<String>, value: impl Into<Value>) -> Result<NodeId> {
        let name = name.into();
        if self.params.iter().any(|(n, _)| *n == name) {
            return Err(Error::config(format!("duplicate tape parameter {name:?}")));
        }
        let idx = self.params.len();
        let id = self.push(Op::Param(idx), value.into());
        self.params.push((name, id));
        Ok(id)
    }

    /// Register every entry of a ParamVector as a leaf; returns ids in order.
    pub fn param_vector(&mut self, params: &ParamVector) -> Result<Vec<NodeId>> {
        params
            .iter()
            .map(|(name, value)| self.param(name, value.clone()))
            .collect()
    }

    fn scalar_of(&self, id: NodeId, what: &str) -> f64 {
        match self.value(id) {
            Value::Scalar(x) => *x,
            v => panic!("tape: {what} expects a scalar, got {}", v.shape()),
        }
    }

    fn vector_of(&self, id: NodeId, what: &str) -> &Array1<f64> {
        match self.value(id) {
            Value::Vector(v) => v,
            v => panic!("tape: {what} expects a vector, got {}", v.shape()),
        }
    }

    fn matrix_of(&self, id: NodeId, what: &str) -> &Array2<f64> {
        match self.value(id) {
            Value::Matrix(m) => m,
            v => panic!("tape: {what} expects a matrix, got {}", v.shape()),
        }
    }

    fn zip_values(&self, a: NodeId, b: NodeId, what: &str, f: impl Fn(f64, f64) -> f64) -> Value {
        self.value(a)
            .zip(self.value(b), f)
            .unwrap_or_else(|_|

                panic!(
                    "tape: {what} shape mismatch: {} vs {}",
                    self.value(a).shape(),
                    self.value(b).shape()
                )
            )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip_values(a, b, "add", |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip_values(a, b, "sub", |x, y| x - y);
        self.push(Op::Sub(a, b), v)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip_values(a, b, "mul", |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| -x);
        self.push(Op::Neg(a), v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddConst(a, c), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        self.push(Op::Log(a), v)
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::recip);
        self.push(Op::Recip(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(act::sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(act::softplus);
        self.push(Op::Softplus(a), v)
    }

    /// Sum of a vector's elements.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Value::Scalar(self.vector_of(a, "sum").sum());
        self.push(Op::Sum(a), v)
    }

    /// Extract element `i` of a vector as a scalar.
    pub fn pick(&mut self, a: NodeId, i: usize) -> NodeId {
        let vec = self.vector_of(a, "pick");
        assert!(i < vec.len(), "tape: pick index {i} out of bounds for length {}", vec.len());
        let v = Value::Scalar(vec[i]);
        self.push(Op::Pick(a, i), v)
    }

    /// Vector of length `dim` with scalar `a` at index `i`, zeros elsewhere.
    pub fn one_hot(&mut self, a: NodeId, i: usize, dim: usize) -> NodeId {
        assert!(i < dim, "tape: one_hot index {i} out of bounds for dim {dim}");
        let s = self.scalar_of(a, "one_hot");
        let mut v = Array1::zeros(dim);
        v[i] = s;
        self.push(Op::OneHot(a, i, dim), Value::Vector(v))
    }

    /// Vector of length `dim` filled with scalar `a`.
    pub fn broadcast(&mut self, a: NodeId, dim: usize) -> NodeId {
        let s = self.scalar_of(a, "broadcast");
        self.push(Op::Broadcast(a, dim), Value::Vector(Array1::from_elem(dim, s)))
    }

    /// Matrix-vector product.
    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> NodeId {
        let mat = self.matrix_of(m, "matvec");
        let vec = self.vector_of(x, "matvec");
        assert_eq!(
            mat.ncols(),
            vec.len(),
            "tape: matvec dims {}x{} vs {}",
            mat.nrows(),
            mat.ncols(),
            vec.len()
        );
        let v = Value::Vector(mat.dot(vec));
        self.push(Op::MatVec(m, x), v)
    }

    /// Transposed matrix-vector product Aᵀ·x.
    pub fn mat_t_vec(&mut self, m: NodeId, x: NodeId) -> NodeId {
        let mat = self.matrix_of(m, "mat_t_vec");
        let vec = self.vector_of(x, "mat_t_vec");
        assert_eq!(
            mat.nrows(),
            vec.len(),
            "tape: mat_t_vec dims {}x{} vs {}",
            mat.nrows(),
            mat.ncols(),
            vec.len()
        );
        let v = Value::Vector(mat.t().dot(vec));
        self.push(Op::MatTVec(m, x), v)
    }

    /// Outer product u·wᵀ.
    pub fn outer(&mut self, u: NodeId, w: NodeId) -> NodeId {
        let a = self.vector_of(u, "outer");
        let b = self.vector_of(w, "outer");
        let mut m = Array2::zeros((a.len(), b.len()));
        accumulate_outer(&mut m, a, b);
        self.push(Op::Outer(u, w), Value::Matrix(m))
    }

    /// Fused Σᵢ gᵢ·xᵢᵀ over vector pairs. All gᵢ share a length, as do xᵢ.
    pub fn outer_accum(&mut self, pairs: Vec<(NodeId, NodeId)>) -> NodeId {
        assert!(!pairs.is_empty(), "tape: outer_accum needs at least one pair");
        let rows = self.vector_of(pairs[0].0, "outer_accum").len();
        let cols = self.vector_of(pairs[0].1, "outer_accum").len();
        let mut m = Array2::zeros((rows, cols));
        for (g, x) in &pairs {
            accumulate_outer(&mut m, self.vector_of(*g, "outer_accum"), self.vector_of(*x, "outer_accum"));
        }
        self.push(Op::OuterAccum(pairs), Value::Matrix(m))
    }

    /// Sum of same-shaped nodes.
    pub fn add_n(&mut self, ids: &[NodeId]) -> NodeId {
        assert!(!ids.is_empty(), "tape: add_n needs at least one input");
        let mut v = self.value(ids[0]).clone();
        for id in &ids[1..] {
            v.accumulate(self.value(*id)).unwrap_or_else(|_| {
                panic!(
                    "tape: add_n shape mismatch: {} vs {}",
                    v.shape(),
                    self.value(*id).shape()
                )
            });
        }
        self.push(Op::AddN(ids.to_vec()), v)
    }

    /// log Σ exp(z) over a vector, stabilized by max subtraction. The max is
    /// treated as a constant shift, which leaves the gradient unchanged.
    pub fn logsumexp(&mut self, z: NodeId) -> NodeId {
        let m = self
            .vector_of(z, "logsumexp")
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let shifted = self.add_const(z, -m);
        let e = self.exp(shifted);
        let s = self.sum(e);
        let l = self.log(s);
        self.add_const(l, m)
    }

    /// log softmax(z)[k] = z[k] − logsumexp(z).
    pub fn log_softmax_pick(&mut self, z: NodeId, k: usize) -> NodeId {
        let zk = self.pick(z, k);
        let lse = self.logsumexp(z);
        self.sub(zk, lse)
    }

    /// Nodes reachable forward from `seeds` (i.e. values that depend on them).
    fn reachable_from(&self, seeds: &[NodeId]) -> Vec<bool> {
        let mut active = vec![false; self.nodes.len()];
        for s in seeds {
            active[s.index()] = true;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if active[i] {
                continue;
            }
            let mut any = false;
            node.op.for_each_input(|inp| any |= active[inp.index()]);
            active[i] = any;
        }
        active
    }

    /// Numeric reverse sweep. Returns d(output)/d(p) for every registered
    /// parameter leaf; leaves the output does not depend on get zeros.
    pub fn grad(&self, output: NodeId) -> Result<ParamVector> {
        if self.value(output).as_scalar().is_err() {
            return Err(Error::usage("gradient target must be a scalar node"));
        }
        let seeds: Vec<NodeId> = self.params.iter().map(|(_, id)| *id).collect();
        let active = self.reachable_from(&seeds);
        let n = output.index() + 1;
        let mut adj: Vec<Option<Value>> = Vec::new();
        adj.resize_with(n, || None);
        adj[output.index()] = Some(Value::Scalar(1.0));
        let mut grads: Vec<Option<Value>> = Vec::new();
        grads.resize_with(self.params.len(), || None);

        for i in (0..n).rev() {
            let Some(a) = adj[i].take() else { continue };
            if let Op::Param(k) = self.nodes[i].op {
                match &mut grads[k] {
                    Some(g) => g.accumulate(&a)?,
                    slot => *slot = Some(a),
                }
                continue;
            }
            self.vjp_numeric(i, &a, &active, &mut adj)?;
        }

        let mut out = ParamVector::new();
        for (k, (name, id)) in self.params.iter().enumerate() {
            let g = grads[k]
                .take()
                .unwrap_or_else(|| self.value(*id).zeros_like());
            out.insert(name.clone(), g)?;
        }
        Ok(out)
    }

    /// Apply node `i`'s VJP numerically, accumulating into `adj` for active inputs.
    fn vjp_numeric(
        &self,
        i: usize,
        a: &Value,
        active: &[bool],
        adj: &mut [Option<Value>],
    ) -> Result<()> {
        let acc = |id: NodeId, v: Value, adj: &mut [Option<Value>]| -> Result<()> {
            if !active[id.index()] {
                return Ok(());
            }
            match &mut adj[id.index()] {
                Some(slot) => slot.accumulate(&v),
                slot => {
                    *slot = Some(v);
                    Ok(())
                }
            }
        };
        match &self.nodes[i].op {
            Op::Const | Op::Param(_) => {}
            Op::Add(x, y) => {
                acc(*x, a.clone(), adj)?;
                acc(*y, a.clone(), adj)?;
            }
            Op::Sub(x, y) => {
                acc(*x, a.clone(), adj)?;
                acc(*y, a.map(|v| -v), adj)?;
            }
            Op::Mul(x, y) => {
                acc(*x, a.zip(self.value(*y), |g, v| g * v)?, adj)?;
                acc(*y, a.zip(self.value(*x), |g, v| g * v)?, adj)?;
            }
            Op::Neg(x) => acc(*x, a.map(|v| -v), adj)?,
            Op::Scale(x, c) => acc(*x, a.map(|v| c * v), adj)?,
            Op::AddConst(x, _) => acc(*x, a.clone(), adj)?,
            Op::Exp(x) => acc(*x, a.zip(&self.nodes[i].value, |g, e| g * e)?, adj)?,
            Op::Log(x) => acc(*x, a.zip(self.value(*x), |g, v| g / v)?, adj)?,
            Op::Recip(x) => acc(*x, a.zip(&self.nodes[i].value, |g, r| -g * r * r)?, adj)?,
            Op::Tanh(x) => acc(*x, a.zip(&self.nodes[i].value, |g, t| g * (1.0 - t * t))?, adj)?,
            Op::Sigmoid(x) => {
                acc(*x, a.zip(&self.nodes[i].value, |g, s| g * s * (1.0 - s))?, adj)?
            }
            Op::Relu(x) => {
                acc(*x, a.zip(self.value(*x), |g, v| if v > 0.0 { g } else { 0.0 })?, adj)?
            }
            Op::Softplus(x) => {
                acc(*x, a.zip(self.value(*x), |g, v| g * act::sigmoid(v))?, adj)?
            }
            Op::Sum(x) => {
                let g = a.as_scalar()?;
                let len = self.vector_of(*x, "sum vjp").len();
                acc(*x, Value::Vector(Array1::from_elem(len, g)), adj)?;
            }
            Op::Pick(x, k) => {
                let g = a.as_scalar()?;
                let len = self.vector_of(*x, "pick vjp").len();
                let mut v = Array1::zeros(len);
                v[*k] = g;
                acc(*x, Value::Vector(v), adj)?;
            }
            Op::OneHot(x, k, _) => {
                let g = a.as_vector()?;
                acc(*x, Value::Scalar(g[*k]), adj)?;
            }
            Op::Broadcast(x, _) => {
                let g = a.as_vector()?;
                acc(*x, Value::Scalar(g.sum()), adj)?;
            }
            Op::MatVec(m, x) => {
                let g = a.as_vector()?;
                if active[m.index()] {
                    let xv = self.vector_of(*x, "matvec vjp");
                    let mut om = Array2::zeros((g.len(), xv.len()));
                    accumulate_outer(&mut om, g, xv);
                    acc(*m, Value::Matrix(om), adj)?;
                }
                if active[x.index()] {
                    let mv = self.matrix_of(*m, "matvec vjp");
                    acc(*x, Value::Vector(mv.t().dot(g)), adj)?;
                }
            }
            Op::MatTVec(m, x) => {
                let g = a.as_vector()?;
                if active[m.index()] {
                    let xv = self.vector_of(*x, "mat_t_vec vjp");
                    let mut om = Array2::zeros((xv.len(), g.len()));
                    accumulate_outer(&mut om, xv, g);
                    acc(*m, Value::Matrix(om), adj)?;
                }
                if active[x.index()] {
                    let mv = self.matrix_of(*m, "mat_t_vec vjp");
                    acc(*x, Value::Vector(mv.dot(g)), adj)?;
                }
            }
            Op::Outer(u, w) => {
                let g = a.as_matrix()?;
                if active[u.index()] {
                    let wv = self.vector_of(*w, "outer vjp");
                    acc(*u, Value::Vector(g.dot(wv)), adj)?;
                }
                if active[w.index()] {
                    let uv = self.vector_of(*u, "outer vjp");
                    acc(*w, Value::Vector(g.t().dot(uv)), adj)?;
                }
            }
            Op::OuterAccum(pairs) => {
                let g = a.as_matrix()?;
                for (gi, xi) in pairs {
                    if active[gi.index()] {
                        let xv = self.vector_of(*xi, "outer_accum vjp");
                        acc(*gi, Value::Vector(g.dot(xv)), adj)?;
                    }
                    if active[xi.index()] {
                        let gv = self.vector_of(*gi, "outer_accum vjp");
                        acc(*xi, Value::Vector(g.t().dot(gv)), adj)?;
                    }
                }
            }
            Op::AddN(ids) => {
                for id in ids {
                    acc(*id, a.clone(), adj)?;
                }
            }
        }
        Ok(())
    }

    /// Graph-building reverse sweep: emits the backward pass as tape nodes
    /// and returns one gradient node per `wrt` entry (a zeros constant when
    /// the output does not depend on it). `wrt` nodes are treated as leaves:
    /// adjoints are not propagated into their inputs.
    pub fn grad_nodes(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        if self.value(output).as_scalar().is_err() {
            return Err(Error::usage("gradient target must be a scalar node"));
        }
        let active = self.reachable_from(wrt);
        let stop: HashSet<usize> = wrt.iter().map(|d| d.index()).collect();
        let n = output.index() + 1;
        let mut addends: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut outer_pending: HashMap<usize, Vec<(NodeId, NodeId)>> = HashMap::new();
        let seed = self.scalar(1.0);
        addends[output.index()].push(seed);
        let mut grads: HashMap<usize, NodeId> = HashMap::new();

        for i in (0..n).rev() {
            let parts = std::mem::take(&mut addends[i]);
            let pairs = outer_pending.remove(&i);
            if parts.is_empty() && pairs.is_none() {
                continue;
            }
            let mut parts = parts;
            if let Some(pairs) = pairs {
                parts.push(self.outer_accum(pairs));
            }
            let g = if parts.len() == 1 { parts[0] } else { self.add_n(&parts) };
            if stop.contains(&i) {
                grads.insert(i, g);
                continue;
            }
            self.vjp_graph(i, g, &active, &mut addends, &mut outer_pending)?;
        }

        Ok(wrt
            .iter()
            .map(|d| {
                grads.get(&d.index()).copied().unwrap_or_else(|| {
                    let z = self.value(*d).zeros_like();
                    self.constant(z)
                })
            })
            .collect())
    }

    /// Emit node `i`'s VJP as tape nodes, pushing addends onto active inputs.
    fn vjp_graph(
        &mut self,
        i: usize,
        g: NodeId,
        active: &[bool],
        addends: &mut [Vec<NodeId>],
        outer_pending: &mut HashMap<usize, Vec<(NodeId, NodeId)>>,
    ) -> Result<()> {
        let op = self.nodes[i].op.clone();
        let this = NodeId(u32::try_from(i).expect("tape: node index"));
        let is_active = |id: NodeId| active[id.index()];
        match op {
            Op::Const | Op::Param(_) => {}
            Op::Add(x, y) => {
                if is_active(x) {
                    addends[x.index()].push(g);
                }
                if is_active(y) {
                    addends[y.index()].push(g);
                }
            }
            Op::Sub(x, y) => {
                if is_active(x) {
                    addends[x.index()].push(g);
                }
                if is_active(y) {
                    let n = self.neg(g);
                    addends[y.index()].push(n);
                }
            }
            Op::Mul(x, y) => {
                if is_active(x) {
                    let t = self.mul(g, y);
                    addends[x.index()].push(t);
                }
                if is_active(y) {
                    let t = self.mul(g, x);
                    addends[y.index()].push(t);
                }
            }
            Op::Neg(x) => {
                if is_active(x) {
                    let t = self.neg(g);
                    addends[x.index()].push(t);
                }
            }
            Op::Scale(x, c) => {
                if is_active(x) {
                    let t = self.scale(g, c);
                    addends[x.index()].push(t);
                }
            }
            Op::AddConst(x, _) => {
                if is_active(x) {
                    addends[x.index()].push(g);
                }
            }
            Op::Exp(x) => {
                if is_active(x) {
                    let t = self.mul(g, this);
                    addends[x.index()].push(t);
                }
            }
            Op::Log(x) => {
                if is_active(x) {
                    let r = self.recip(x);
                    let t = self.mul(g, r);
                    addends[x.index()].push(t);
                }
            }
            Op::Recip(x) => {
                if is_active(x) {
                    let t = self.mul(g, this);
                    let t = self.mul(t, this);
                    let t = self.neg(t);
                    addends[x.index()].push(t);
                }
            }
            Op::Tanh(x) => {
                if is_active(x) {
                    let sq = self.mul(this, this);
                    let neg = self.neg(sq);
                    let one_minus = self.add_const(neg, 1.0);
                    let t = self.mul(g, one_minus);
                    addends[x.index()].push(t);
                }
            }
            Op::Sigmoid(x) => {
                if is_active(x) {
                    let neg = self.neg(this);
                    let one_minus = self.add_const(neg, 1.0);
                    let d = self.mul(this, one_minus);
                    let t = self.mul(g, d);
                    addends[x.index()].push(t);
                }
            }
            Op::Relu(x) => {
                if is_active(x) {
                    // Subgradient mask frozen at the forward values; correct
                    // almost everywhere and constant for second order.
                    let mask =
                        self.value(x).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    let mask = self.constant(mask);
                    let t = self.mul(g, mask);
                    addends[x.index()].push(t);
                }
            }
            Op::Softplus(x) => {
                if is_active(x) {
                    let s = self.sigmoid(x);
                    let t = self.mul(g, s);
                    addends[x.index()].push(t);
                }
            }
            Op::Sum(x) => {
                if is_active(x) {
                    let len = self.vector_of(x, "sum vjp").len();
                    let t = self.broadcast(g, len);
                    addends[x.index()].push(t);
                }
            }
            Op::Pick(x, k) => {
                if is_active(x) {
                    let len = self.vector_of(x, "pick vjp").len();
                    let t = self.one_hot(g, k, len);
                    addends[x.index()].push(t);
                }
            }
            Op::OneHot(x, k, _) => {
                if is_active(x) {
                    let t = self.pick(g, k);
                    addends[x.index()].push(t);
                }
            }
            Op::Broadcast(x, _) => {
                if is_active(x) {
                    let t = self.sum(g);
                    addends[x.index()].push(t);
                }
            }
            Op::MatVec(m, x) => {
                if is_active(m) {
                    outer_pending.entry(m.index()).or_default().push((g, x));
                }
                if is_active(x) {
                    let t = self.mat_t_vec(m, g);
                    addends[x.index()].push(t);
                }
            }
            Op::MatTVec(m, x) => {
                if is_active(m) {
                    outer_pending.entry(m.index()).or_default().push((x, g));
                }
                if is_active(x) {
                    let t = self.matvec(m, g);
                    addends[x.index()].push(t);
                }
            }
            Op::Outer(u, w) => {
                if is_active(u) {
                    let t = self.matvec(g, w);
                    addends[u.index()].push(t);
                }
                if is_active(w) {
                    let t = self.mat_t_vec(g, u);
                    addends[w.index()].push(t);
                }
            }
            Op::OuterAccum(pairs) => {
                for (gi, xi) in pairs {
                    if is_active(gi) {
                        let t = self.matvec(g, xi);
                        addends[gi.index()].push(t);
                    }
                    if is_active(xi) {
                        let t = self.mat_t_vec(g, gi);
                        addends[xi.index()].push(t);
                    }
                }
            }
            Op::AddN(ids) => {
                for id in ids {
                    if is_active(id) {
                        addends[id.index()].push(g);
                    }
                }
            }
        }
        Ok(())
    }
}

/// m += g·xᵀ without intermediate allocation.
fn accumulate_outer(m: &mut Array2<f64>, g: &Array1<f64>, x: &Array1<f64>) {
    let g2 = g.view().insert_axis(Axis(1));
    let x2 = x.view().insert_axis(Axis(0));
    general_mat_mul(1.0, &g2, &x2, 1.0, m);
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn quadratic_gradient() {
        let mut t = Tape::new();
        let th = t.param("theta", 3.0).unwrap();
        let y = t.mul(th, th);
        let g = t.grad(y).unwrap();
        assert_eq!(g.get("theta").unwrap().as_scalar().unwrap(), 6.0);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let mut t = Tape::new();
        let _th = t.param("theta", 3.0).unwrap();
        let c = t.scalar(5.0);
        let y = t.mul(c, c);
        let g = t.grad(y).unwrap();
        assert_eq!(g.get("theta").unwrap().as_scalar().unwrap(), 0.0);
    }

    #[test]
    fn non_scalar_output_is_usage_error() {
        let mut t = Tape::new();
        let v = t.param("v", array![1.0, 2.0]).unwrap();
        assert!(t.grad(v).is_err());
    }

    #[test]
    fn duplicate_param_name_rejected() {
        let mut t = Tape::new();
        t.param("w", 1.0).unwrap();
        assert!(t.param("w", 2.0).is_err());
    }

    #[test]
    fn replay_is_bit_identical() {
        let build = || {
            let mut t = Tape::new();
            let w = t.param("w", array![[0.3, -0.2], [0.1, 0.5]]).unwrap();
            let x = t.constant(array![0.7, -1.1]);
            let h = t.matvec(w, x);
            let s = t.sigmoid(h);
            let out = t.sum(s);
            t.value(out).as_scalar().unwrap()
        };
        assert_eq!(build().to_bits(), build().to_bits());
    }

    #[test]
    fn matvec_chain_matches_hand_computation() {
        let mut t = Tape::new();
        let w = t.param("w", array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let x = t.constant(array![1.0, 1.0]);
        let y = t.matvec(w, x);
        let s = t.sum(y);
        assert_eq!(t.value(s).as_scalar().unwrap(), 10.0);
        let g = t.grad(s).unwrap();
        // d(sum(Wx))/dW = 1·xᵀ per row.
        assert_eq!(
            g.get("w").unwrap(),
            &Value::Matrix(array![[1.0, 1.0], [1.0, 1.0]])
        );
    }

    #[test]
    fn log_softmax_pick_matches_direct_formula() {
        let mut t = Tape::new();
        let z = t.param("z", array![0.2, -1.3, 0.9]).unwrap();
        let lp = t.log_softmax_pick(z, 2);
        let direct = {
            let z = [0.2f64, -1.3, 0.9];
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            z[2] - lse
        };
        assert!((t.value(lp).as_scalar().unwrap() - direct).abs() < 1e-12);
        // Gradient of log softmax: e_k − softmax(z).
        let g = t.grad(lp).unwrap();
        let gz = g.get("z").unwrap().as_vector().unwrap().clone();
        let m = 0.9f64;
        let exps: Vec<f64> = [0.2f64, -1.3, 0.9].iter().map(|v| (v - m).exp()).collect();
        let s: f64 = exps.iter().sum();
        for (k, gk) in gz.iter().enumerate() {
            let want = if k == 2 { 1.0 - exps[k] / s } else { -exps[k] / s };
            assert!((gk - want).abs() < 1e-12, "k={k} got {gk} want {want}");
        }
    }

    #[test]
    fn grad_nodes_inner_lr_zero_reduces_to_plain_grad() {
        // theta' = theta − 0·∇L_inner; outer loss on theta' must have the
        // same gradient as on theta directly.
        let mut t = Tape::new();
        let th = t.param("theta", 1.5).unwrap();
        let inner = t.mul(th, th);
        let gs = t.grad_nodes(inner, &[th]).unwrap();
        let step = t.scale(gs[0], -0.0);
        let adapted = t.add(th, step);
        let outer = t.mul(adapted, adapted);
        let g = t.grad(outer).unwrap();
        assert!((g.get("theta").unwrap().as_scalar().unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn second_order_quadratic_chain() {
        // L_inner = L_outer = θ², θ=1, lr=0.1: θ' = θ − 0.1·2θ = 0.8·θ,
        // outer grad = 2·θ'·0.8 = 1.28.
        let mut t = Tape::new();
        let th = t.param("theta", 1.0).unwrap();
        let inner = t.mul(th, th);
        let gs = t.grad_nodes(inner, &[th]).unwrap();
        let step = t.scale(gs[0], -0.1);
        let adapted = t.add(th, step);
        let outer = t.mul(adapted, adapted);
        let g = t.grad(outer).unwrap();
        assert!((g.get("theta").unwrap().as_scalar().unwrap() - 1.28).abs() < 1e-12);
    }

    #[test]
    fn grad_nodes_returns_zeros_for_untouched_leaf() {
        let mut t = Tape::new();
        let a = t.param("a", 2.0).unwrap();
        let b = t.param("b", array![1.0, 2.0]).unwrap();
        let y = t.mul(a, a);
        let gs = t.grad_nodes(y, &[a, b]).unwrap();
        assert_eq!(t.value(gs[0]).as_scalar().unwrap(), 4.0);
        assert_eq!(t.value(gs[1]), &Value::Vector(array![0.0, 0.0]));
    }

    #[test]
    fn outer_accum_matches_sum_of_outers() {
        let mut t = Tape::new();
        let g1 = t.constant(array![1.0, 2.0]);
        let x1 = t.constant(array![3.0, 4.0, 5.0]);
        let g2 = t.constant(array![-1.0, 0.5]);
        let x2 = t.constant(array![1.0, 0.0, -2.0]);
        let fused = t.outer_accum(vec![(g1, x1), (g2, x2)]);
        let o1 = t.outer(g1, x1);
        let o2 = t.outer(g2, x2);
        let summed = t.add(o1, o2);
        assert_eq!(t.value(fused), t.value(summed));
    }
}
