//! Network definitions: a multi-layer GRU stack with a linear head, and a
//! single-hidden-layer MLP with a scalar output.
//!
//! Each network has two forward paths over the same parameters: a plain
//! numeric path for rollouts where no gradient is needed, and a tape path
//! that records onto a [`Tape`] for training. Both paths apply the same
//! operations in the same order, so their outputs are bit-identical; a test
//! pins that equivalence.
//!
//! Gate convention: `h' = (1−z)⊙h + z⊙h̃` with sigmoid update/reset gates and
//! a tanh candidate. With all-zero parameters one step maps `h` to `0.5·h`.

use indexmap::IndexMap;
use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::rng::SplitRng;
use crate::tape::{NodeId, Tape};
use crate::value::Value;

/// Numerically stable scalar activations. The tape and the numeric forward
/// paths both call these, which is what makes the two paths bit-identical.
pub mod act {
    /// Logistic sigmoid, stable for large |x|.
    pub fn sigmoid(x: f64) -> f64 {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    }

    /// ln(1 + eˣ), stable for large |x|.
    pub fn softplus(x: f64) -> f64 {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }

    /// Stable softmax over a slice; strictly positive, sums to 1.
    pub fn softmax(z: &ndarray::Array1<f64>) -> ndarray::Array1<f64> {
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e = z.mapv(|v| (v - m).exp());
        let s = e.sum();
        e / s
    }
}

/// One-hot encoding; `None` encodes as all zeros (used at t=1).
pub fn one_hot(slot: Option<usize>, dim: usize) -> Array1<f64> {
    let mut v = Array1::zeros(dim);
    if let Some(i) = slot {
        assert!(i < dim, "one_hot index {i} out of bounds for dim {dim}");
        v[i] = 1.0;
    }
    v
}

/// Named tape leaves or adapted nodes standing in for a ParamVector.
#[derive(Debug, Clone)]
pub struct TapeBindings {
    ids: IndexMap<String, NodeId>,
}

impl TapeBindings {
    /// Register every entry of `params` as a differentiable tape leaf.
    pub fn leaves(tape: &mut Tape, params: &ParamVector) -> Result<Self> {
        let mut ids = IndexMap::new();
        for (name, value) in params.iter() {
            ids.insert(name.to_string(), tape.param(name, value.clone())?);
        }
        Ok(TapeBindings { ids })
    }

    /// Bind existing nodes (e.g. adapted parameters) under the same names.
    pub fn from_ids(names: impl IntoIterator<Item = String>, ids: Vec<NodeId>) -> Self {
        TapeBindings { ids: names.into_iter().zip(ids).collect() }
    }

    pub fn get(&self, name: &str) -> Result<NodeId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::usage(format!("unbound tape parameter {name:?}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.ids.keys().map(String::as_str)
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.ids.values().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn uniform_init(rng: &mut SplitRng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

fn uniform_init_vec(rng: &mut SplitRng, len: usize, fan_in: usize) -> Array1<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array1::from_shape_fn(len, |_| rng.random_range(-bound..bound))
}

/// Shape of a GRU stack with a linear head over the top layer's hidden state.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GruSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub out_dim: usize,
}

/// Per-layer hidden state of a GRU stack.
#[derive(Debug, Clone)]
pub struct GruState {
    pub h: Vec<Array1<f64>>,
}

const GATE_NAMES: [(&str, &str, &str); 3] =
    [("wxz", "whz", "bz"), ("wxr", "whr", "br"), ("wxh", "whh", "bh")];

impl GruSpec {
    pub fn new(input_dim: usize, hidden_dim: usize, layers: usize, out_dim: usize) -> Self {
        GruSpec { input_dim, hidden_dim, layers, out_dim }
    }

    fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.hidden_dim
        }
    }

    /// Fresh parameters: matrices and gate biases uniform in
    /// ±1/√fan_in; the head is zero-initialized so the initial output
    /// distribution is uniform.
    pub fn init_params(&self, rng: &mut SplitRng) -> ParamVector {
        let mut p = ParamVector::new();
        for l in 0..self.layers {
            let din = self.layer_input_dim(l);
            let dh = self.hidden_dim;
            for (wx, wh, b) in GATE_NAMES {
                p.insert(format!("l{l}.{wx}"), uniform_init(rng, dh, din, din)).unwrap();
                p.insert(format!("l{l}.{wh}"), uniform_init(rng, dh, dh, dh)).unwrap();
                p.insert(format!("l{l}.{b}"), uniform_init_vec(rng, dh, dh)).unwrap();
            }
        }
        p.insert("head.w", Array2::<f64>::zeros((self.out_dim, self.hidden_dim))).unwrap();
        p.insert("head.b", Array1::<f64>::zeros(self.out_dim)).unwrap();
        p
    }

    /// All-zero parameters (used to pin the gate-convention fixed point).
    pub fn zero_params(&self) -> ParamVector {
        let mut p = ParamVector::new();
        for l in 0..self.layers {
            let din = self.layer_input_dim(l);
            let dh = self.hidden_dim;
            for (wx, wh, b) in GATE_NAMES {
                p.insert(format!("l{l}.{wx}"), Array2::<f64>::zeros((dh, din))).unwrap();
                p.insert(format!("l{l}.{wh}"), Array2::<f64>::zeros((dh, dh))).unwrap();
                p.insert(format!("l{l}.{b}"), Array1::<f64>::zeros(dh)).unwrap();
            }
        }
        p.insert("head.w", Array2::<f64>::zeros((self.out_dim, self.hidden_dim))).unwrap();
        p.insert("head.b", Array1::<f64>::zeros(self.out_dim)).unwrap();
        p
    }

    pub fn zero_state(&self) -> GruState {
        GruState { h: vec![Array1::zeros(self.hidden_dim); self.layers] }
    }

    /// Check that `params` carries every tensor this spec expects, with the
    /// right shapes.
    pub fn validate_params(&self, params: &ParamVector) -> Result<()> {
        use crate::value::Shape;
        let expect = |name: String, shape: Shape| -> Result<()> {
            let got = params.get(&name)?.shape();
            if got != shape {
                return Err(Error::config(format!(
                    "parameter {name:?} has shape {got}, expected {shape}"
                )));
            }
            Ok(())
        };
        for l in 0..self.layers {
            let din = self.layer_input_dim(l);
            let dh = self.hidden_dim;
            for (wx, wh, b) in GATE_NAMES {
                expect(format!("l{l}.{wx}"), Shape::Matrix(dh, din))?;
                expect(format!("l{l}.{wh}"), Shape::Matrix(dh, dh))?;
                expect(format!("l{l}.{b}"), Shape::Vector(dh))?;
            }
        }
        expect("head.w".to_string(), Shape::Matrix(self.out_dim, self.hidden_dim))?;
        expect("head.b".to_string(), Shape::Vector(self.out_dim))?;
        Ok(())
    }

    fn check_step_inputs(&self, x_len: usize, state: &GruState) -> Result<()> {
        if x_len != self.input_dim {
            return Err(Error::config(format!(
                "gru input dimension {} does not match spec {}",
                x_len, self.input_dim
            )));
        }
        if state.h.len() != self.layers
            || state.h.iter().any(|h| h.len() != self.hidden_dim)
        {
            return Err(Error::config("gru hidden state does not match spec".to_string()));
        }
        Ok(())
    }

    /// One numeric step. Returns the advanced state and the top layer's new
    /// hidden state (the stack's output before any head).
    pub fn step(
        &self,
        params: &ParamVector,
        x: &Array1<f64>,
        state: &GruState,
    ) -> Result<(GruState, Array1<f64>)> {
        self.check_step_inputs(x.len(), state)?;
        let mut h_next = Vec::with_capacity(self.layers);
        let mut input = x.clone();
        for l in 0..self.layers {
            let h = &state.h[l];
            let wxz = params.get(&format!("l{l}.wxz"))?.as_matrix()?;
            let whz = params.get(&format!("l{l}.whz"))?.as_matrix()?;
            let bz = params.get(&format!("l{l}.bz"))?.as_vector()?;
            let wxr = params.get(&format!("l{l}.wxr"))?.as_matrix()?;
            let whr = params.get(&format!("l{l}.whr"))?.as_matrix()?;
            let br = params.get(&format!("l{l}.br"))?.as_vector()?;
            let wxh = params.get(&format!("l{l}.wxh"))?.as_matrix()?;
            let whh = params.get(&format!("l{l}.whh"))?.as_matrix()?;
            let bh = params.get(&format!("l{l}.bh"))?.as_vector()?;

            // Mirror the tape path exactly: (wx·x + wh·h) + b, then activation.
            let z_pre = &(&wxz.dot(&input) + &whz.dot(h)) + bz;
            let z = z_pre.mapv(act::sigmoid);
            let r_pre = &(&wxr.dot(&input) + &whr.dot(h)) + br;
            let r = r_pre.mapv(act::sigmoid);
            let rh = &r * h;
            let c_pre = &(&wxh.dot(&input) + &whh.dot(&rh)) + bh;
            let c = c_pre.mapv(f64::tanh);
            // h' = h − z⊙h + z⊙h̃, in this operation order.
            let zh = &z * h;
            let t = h - &zh;
            let zc = &z * &c;
            let h_new = &t + &zc;
            input = h_new.clone();
            h_next.push(h_new);
        }
        let top = h_next.last().expect("at least one layer").clone();
        Ok((GruState { h: h_next }, top))
    }

    /// Linear head over the top hidden state: logits = W·h + b.
    pub fn head(&self, params: &ParamVector, top: &Array1<f64>) -> Result<Array1<f64>> {
        let w = params.get("head.w")?.as_matrix()?;
        let b = params.get("head.b")?.as_vector()?;
        Ok(&w.dot(top) + b)
    }

    /// One tape step; mirrors [`GruSpec::step`]. `state` holds per-layer
    /// hidden nodes; returns the advanced nodes and the top hidden node.
    pub fn step_tape(
        &self,
        tape: &mut Tape,
        tp: &TapeBindings,
        x: NodeId,
        state: &[NodeId],
    ) -> Result<(Vec<NodeId>, NodeId)> {
        let x_len = tape.value(x).as_vector()?.len();
        if x_len != self.input_dim || state.len() != self.layers {
            return Err(Error::config("gru tape step inputs do not match spec".to_string()));
        }
        let mut h_next = Vec::with_capacity(self.layers);
        let mut input = x;
        for (l, &h) in state.iter().enumerate() {
            let wxz = tp.get(&format!("l{l}.wxz"))?;
            let whz = tp.get(&format!("l{l}.whz"))?;
            let bz = tp.get(&format!("l{l}.bz"))?;
            let wxr = tp.get(&format!("l{l}.wxr"))?;
            let whr = tp.get(&format!("l{l}.whr"))?;
            let br = tp.get(&format!("l{l}.br"))?;
            let wxh = tp.get(&format!("l{l}.wxh"))?;
            let whh = tp.get(&format!("l{l}.whh"))?;
            let bh = tp.get(&format!("l{l}.bh"))?;

            let zx = tape.matvec(wxz, input);
            let zp = tape.matvec(whz, h);
            let zs = tape.add(zx, zp);
            let z_pre = tape.add(zs, bz);
            let z = tape.sigmoid(z_pre);

            let rx = tape.matvec(wxr, input);
            let rp = tape.matvec(whr, h);
            let rs = tape.add(rx, rp);
            let r_pre = tape.add(rs, br);
            let r = tape.sigmoid(r_pre);

            let rh = tape.mul(r, h);
            let cx = tape.matvec(wxh, input);
            let cp = tape.matvec(whh, rh);
            let cs = tape.add(cx, cp);
            let c_pre = tape.add(cs, bh);
            let c = tape.tanh(c_pre);

            let zh = tape.mul(z, h);
            let t = tape.sub(h, zh);
            let zc = tape.mul(z, c);
            let h_new = tape.add(t, zc);
            input = h_new;
            h_next.push(h_new);
        }
        let top = *h_next.last().expect("at least one layer");
        Ok((h_next, top))
    }

    /// Tape head; mirrors [`GruSpec::head`].
    pub fn head_tape(&self, tape: &mut Tape, tp: &TapeBindings, top: NodeId) -> Result<NodeId> {
        let w = tp.get("head.w")?;
        let b = tp.get("head.b")?;
        let wh = tape.matvec(w, top);
        Ok(tape.add(wh, b))
    }
}

/// Single-hidden-layer MLP with ReLU and a scalar output logit.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dim: usize) -> Self {
        MlpSpec { input_dim, hidden_dim }
    }

    pub fn init_params(&self, rng: &mut SplitRng) -> ParamVector {
        let mut p = ParamVector::new();
        p.insert("fc1.w", uniform_init(rng, self.hidden_dim, self.input_dim, self.input_dim))
            .unwrap();
        p.insert("fc1.b", uniform_init_vec(rng, self.hidden_dim, self.input_dim)).unwrap();
        p.insert("fc2.w", uniform_init(rng, 1, self.hidden_dim, self.hidden_dim)).unwrap();
        p.insert("fc2.b", Value::Scalar(0.0)).unwrap();
        p
    }

    /// Numeric forward to the scalar logit.
    pub fn logit(&self, params: &ParamVector, x: &Array1<f64>) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::config(format!(
                "mlp input dimension {} does not match spec {}",
                x.len(),
                self.input_dim
            )));
        }
        let w1 = params.get("fc1.w")?.as_matrix()?;
        let b1 = params.get("fc1.b")?.as_vector()?;
        let w2 = params.get("fc2.w")?.as_matrix()?;
        let b2 = params.get("fc2.b")?.as_scalar()?;
        let h = (&w1.dot(x) + b1).mapv(|v| v.max(0.0));
        Ok(w2.dot(&h)[0] + b2)
    }

    /// Tape forward to the scalar logit node; mirrors [`MlpSpec::logit`].
    pub fn logit_tape(&self, tape: &mut Tape, tp: &TapeBindings, x: NodeId) -> Result<NodeId> {
        let w1 = tp.get("fc1.w")?;
        let b1 = tp.get("fc1.b")?;
        let w2 = tp.get("fc2.w")?;
        let b2 = tp.get("fc2.b")?;
        let pre = tape.matvec(w1, x);
        let pre = tape.add(pre, b1);
        let h = tape.relu(pre);
        let out = tape.matvec(w2, h);
        let out0 = tape.pick(out, 0);
        Ok(tape.add(out0, b2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_params_halve_hidden_state() {
        let spec = GruSpec::new(3, 4, 2, 2);
        let params = spec.zero_params();
        let state = GruState { h: vec![array![1.0, 1.0, 1.0, 1.0]; 2] };
        let x = array![0.3, -0.2, 0.9];
        let (next, top) = spec.step(&params, &x, &state).unwrap();
        for h in &next.h {
            assert_eq!(h, &array![0.5, 0.5, 0.5, 0.5]);
        }
        assert_eq!(top, array![0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn step_is_deterministic() {
        let spec = GruSpec::new(3, 4, 2, 2);
        let mut rng = SplitRng::new(1);
        let params = spec.init_params(&mut rng);
        let state = spec.zero_state();
        let x = array![0.1, 0.2, 0.3];
        let (s1, o1) = spec.step(&params, &x, &state).unwrap();
        let (s2, o2) = spec.step(&params, &x, &state).unwrap();
        assert_eq!(o1, o2);
        assert_eq!(s1.h, s2.h);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let spec = GruSpec::new(3, 4, 2, 2);
        let params = spec.zero_params();
        let state = spec.zero_state();
        let bad_x = array![0.1, 0.2];
        assert!(spec.step(&params, &bad_x, &state).is_err());
    }

    #[test]
    fn tape_and_numeric_paths_are_bit_identical() {
        let spec = GruSpec::new(5, 4, 2, 3);
        let mut rng = SplitRng::new(9);
        let mut params = spec.init_params(&mut rng);
        // Give the head nonzero weights so the comparison covers it.
        params
            .set("head.w", Value::Matrix(uniform_init(&mut rng, 3, 4, 4)))
            .unwrap();
        let x_val = Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0));

        let state = spec.zero_state();
        let (next, top) = spec.step(&params, &x_val, &state).unwrap();
        let logits = spec.head(&params, &top).unwrap();

        let mut tape = Tape::new();
        let tp = TapeBindings::leaves(&mut tape, &params).unwrap();
        let x = tape.constant(x_val.clone());
        let h0: Vec<_> = (0..2)
            .map(|_| tape.constant(Array1::<f64>::zeros(4)))
            .collect();
        let (h1, top_id) = spec.step_tape(&mut tape, &tp, x, &h0).unwrap();
        let logits_id = spec.head_tape(&mut tape, &tp, top_id).unwrap();

        for (l, id) in next.h.iter().zip(&h1) {
            let tv = tape.value(*id).as_vector().unwrap();
            for (a, b) in l.iter().zip(tv.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        let tl = tape.value(logits_id).as_vector().unwrap();
        for (a, b) in logits.iter().zip(tl.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn mlp_paths_are_bit_identical() {
        let spec = MlpSpec::new(1, 8);
        let mut rng = SplitRng::new(4);
        let params = spec.init_params(&mut rng);
        let x_val = array![0.37];
        let direct = spec.logit(&params, &x_val).unwrap();

        let mut tape = Tape::new();
        let tp = TapeBindings::leaves(&mut tape, &params).unwrap();
        let x = tape.constant(x_val);
        let logit = spec.logit_tape(&mut tape, &tp, x).unwrap();
        assert_eq!(direct.to_bits(), tape.value(logit).as_scalar().unwrap().to_bits());
    }

    #[test]
    fn softmax_is_positive_and_normalized() {
        let z = array![30.0, -30.0, 0.5, 0.4];
        let p = act::softmax(&z);
        assert!(p.iter().all(|&x| x > 0.0));
        assert!((p.sum() - 1.0).abs() < 1e-9);
        // Extreme logits may underflow to zero but must stay finite and normalized.
        let q = act::softmax(&array![1000.0, -1000.0, 0.5, 0.4]);
        assert!(q.iter().all(|&x| x.is_finite() && x >= 0.0));
        assert!((q.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn one_hot_none_is_zeros() {
        assert_eq!(one_hot(None, 3), array![0.0, 0.0, 0.0]);
        assert_eq!(one_hot(Some(1), 3), array![0.0, 1.0, 0.0]);
    }
}
