//! Recurrent world model: predicts the agent's next action from the history
//! of (agent action, intervention) pairs.
//!
//! Input per step: one-hot previous agent action ⊕ one-hot previous
//! intervention level; both all-zero at t=1. Output: softmax distribution
//! over the agent's action set. One world model is shared across all
//! training agents and frozen at test time.

use ndarray::Array1;

use crate::agents::argmax_first;
use crate::env::bandit::INTERVENTION_LEVELS;
use crate::error::Result;
use crate::nn::{act, one_hot, GruSpec, GruState, TapeBindings};
use crate::params::ParamVector;
use crate::rng::SplitRng;
use crate::tape::{NodeId, Tape};

/// World-model parameters ω plus the network shape.
#[derive(Debug, Clone)]
pub struct WorldModel {
    pub spec: GruSpec,
    pub params: ParamVector,
}

impl WorldModel {
    /// Fresh world model for `num_arms` agent actions.
    pub fn new(num_arms: usize, hidden_dim: usize, layers: usize, rng: &mut SplitRng) -> Self {
        let spec = GruSpec::new(
            num_arms + INTERVENTION_LEVELS.len(),
            hidden_dim,
            layers,
            num_arms,
        );
        let params = spec.init_params(rng);
        WorldModel { spec, params }
    }

    pub fn from_params(spec: GruSpec, params: ParamVector) -> Result<Self> {
        spec.validate_params(&params)?;
        Ok(WorldModel { spec, params })
    }

    pub fn num_arms(&self) -> usize {
        self.spec.out_dim
    }

    pub fn validate(&self, num_arms: usize) -> Result<()> {
        if self.num_arms() != num_arms {
            return Err(crate::error::Error::config(format!(
                "world model covers {} arms, task has {num_arms}",
                self.num_arms()
            )));
        }
        self.spec.validate_params(&self.params)
    }

    /// Start a per-episode inference session (owns the hidden state).
    pub fn session(&self) -> WmSession<'_> {
        WmSession { wm: self, state: self.spec.zero_state() }
    }

    /// Input encoding shared by inference and training.
    pub fn encode_input(&self, a_prev: Option<usize>, level_idx_prev: Option<usize>) -> Array1<f64> {
        let mut x = one_hot(a_prev, self.num_arms());
        x.append(ndarray::Axis(0), one_hot(level_idx_prev, INTERVENTION_LEVELS.len()).view())
            .expect("1-d concat");
        x
    }

    /// Sum over steps of −log π̂(a_t | history) for a recorded episode,
    /// computed numerically (no gradients).
    pub fn episode_nll(&self, actions: &[usize], level_indices: &[usize]) -> Result<f64> {
        let mut session = self.session();
        let mut nll = 0.0;
        for (t, &a_t) in actions.iter().enumerate() {
            let (a_prev, lv_prev) = if t == 0 {
                (None, None)
            } else {
                (Some(actions[t - 1]), Some(level_indices[t - 1]))
            };
            let (probs, _) = session.predict(a_prev, lv_prev)?;
            nll -= probs[a_t].ln();
        }
        Ok(nll)
    }

    /// Tape node for the same episode NLL; `tp` binds this model's
    /// parameter names.
    pub fn episode_nll_tape(
        &self,
        tape: &mut Tape,
        tp: &TapeBindings,
        actions: &[usize],
        level_indices: &[usize],
    ) -> Result<NodeId> {
        let mut h: Vec<NodeId> = (0..self.spec.layers)
            .map(|_| tape.constant(Array1::<f64>::zeros(self.spec.hidden_dim)))
            .collect();
        let mut logprobs = Vec::with_capacity(actions.len());
        for (t, &a_t) in actions.iter().enumerate() {
            let (a_prev, lv_prev) = if t == 0 {
                (None, None)
            } else {
                (Some(actions[t - 1]), Some(level_indices[t - 1]))
            };
            let x = tape.constant(self.encode_input(a_prev, lv_prev));
            let (h_next, top) = self.spec.step_tape(tape, tp, x, &h)?;
            h = h_next;
            let logits = self.spec.head_tape(tape, tp, top)?;
            logprobs.push(tape.log_softmax_pick(logits, a_t));
        }
        let ll = tape.add_n(&logprobs);
        Ok(tape.neg(ll))
    }
}

/// Per-episode world-model inference state.
pub struct WmSession<'a> {
    wm: &'a WorldModel,
    state: GruState,
}

impl WmSession<'_> {
    /// Advance on (a_{t−1}, r'_{t−1}) and predict a_t. Returns the action
    /// distribution and its argmax (ties toward the lowest index).
    pub fn predict(
        &mut self,
        a_prev: Option<usize>,
        level_idx_prev: Option<usize>,
    ) -> Result<(Array1<f64>, usize)> {
        let x = self.wm.encode_input(a_prev, level_idx_prev);
        let (next, top) = self.wm.spec.step(&self.wm.params, &x, &self.state)?;
        self.state = next;
        let logits = self.wm.spec.head(&self.wm.params, &top)?;
        let probs = act::softmax(&logits);
        let ahat = argmax_first(probs.as_slice().expect("contiguous"));
        Ok((probs, ahat))
    }
}

/// Free-function form of [`WmSession::predict`] for one-off use.
pub fn wm_predict(
    wm: &WorldModel,
    session: &mut WmSession<'_>,
    a_prev: Option<usize>,
    level_idx_prev: Option<usize>,
) -> Result<(Array1<f64>, usize)> {
    debug_assert!(std::ptr::eq(wm, session.wm));
    session.predict(a_prev, level_idx_prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_predict_uniform_arm_zero() {
        let mut rng = SplitRng::new(1);
        let mut wm = WorldModel::new(4, 8, 2, &mut rng);
        wm.params = wm.spec.zero_params();
        let mut s = wm.session();
        let (probs, ahat) = s.predict(None, None).unwrap();
        for p in probs.iter() {
            assert!((p - 0.25).abs() < 1e-12);
        }
        assert_eq!(ahat, 0);
    }

    #[test]
    fn prediction_is_deterministic() {
        let mut rng = SplitRng::new(2);
        let wm = WorldModel::new(3, 8, 2, &mut rng);
        let run = || {
            let mut s = wm.session();
            let mut outs = Vec::new();
            outs.push(s.predict(None, None).unwrap());
            outs.push(s.predict(Some(1), Some(2)).unwrap());
            outs.push(s.predict(Some(0), Some(0)).unwrap());
            outs
        };
        let a = run();
        let b = run();
        for ((pa, aa), (pb, ab)) in a.iter().zip(b.iter()) {
            assert_eq!(pa, pb);
            assert_eq!(aa, ab);
        }
    }

    #[test]
    fn numeric_and_tape_nll_agree() {
        let mut rng = SplitRng::new(3);
        let wm = WorldModel::new(3, 6, 2, &mut rng);
        let actions = vec![0, 2, 1, 1, 0];
        let levels = vec![0, 1, 2, 0, 0];
        let direct = wm.episode_nll(&actions, &levels).unwrap();
        let mut tape = Tape::new();
        let tp = TapeBindings::leaves(&mut tape, &wm.params).unwrap();
        let node = wm.episode_nll_tape(&mut tape, &tp, &actions, &levels).unwrap();
        let taped = tape.value(node).as_scalar().unwrap();
        assert!((direct - taped).abs() < 1e-9, "direct {direct} taped {taped}");
    }

    #[test]
    fn uniform_nll_is_t_log_a() {
        let mut rng = SplitRng::new(4);
        let mut wm = WorldModel::new(10, 8, 2, &mut rng);
        wm.params = wm.spec.zero_params();
        let actions: Vec<usize> = (0..200).map(|t| t % 10).collect();
        let levels = vec![0usize; 200];
        let nll = wm.episode_nll(&actions, &levels).unwrap();
        let want = 200.0 * (10f64).ln();
        assert!((nll - want).abs() / want < 0.01, "nll {nll} want {want}");
    }
}
