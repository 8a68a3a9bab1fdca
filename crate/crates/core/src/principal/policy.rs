//! Learned principal policies: the recurrent bandit intervention policy
//! (softmax over the three levels) and the MLP matrix-game policy
//! (Bernoulli over intervening).
//!
//! The recurrent policy's input is a concatenation of one-hot encodings
//! selected by its [`Conditioning`]; "none" inputs (at t=1) encode as
//! zeros. Sampling happens numerically; during training the per-step
//! log-probability is additionally recorded as a tape node for REINFORCE.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::env::bandit::INTERVENTION_LEVELS;
use crate::error::{Error, Result};
use crate::nn::{act, one_hot, GruSpec, GruState, MlpSpec, TapeBindings};
use crate::params::ParamVector;
use crate::rng::{sample_categorical, SplitRng};
use crate::tape::{NodeId, Tape};

/// Which pieces of per-step context the recurrent policy conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Previous agent action ⊕ previous intervention ⊕ predicted action.
    Full,
    /// Previous agent action ⊕ previous intervention only.
    PrevOnly,
    /// Predicted action only.
    PredictedOnly,
    /// The realized current-step agent action (oracle baselines).
    TrueActionOnly,
}

impl Conditioning {
    /// Input dimension for `num_arms` agent actions.
    pub fn input_dim(self, num_arms: usize) -> usize {
        let levels = INTERVENTION_LEVELS.len();
        match self {
            Conditioning::Full => num_arms + levels + num_arms,
            Conditioning::PrevOnly => num_arms + levels,
            Conditioning::PredictedOnly => num_arms,
            Conditioning::TrueActionOnly => num_arms,
        }
    }

    /// Whether the policy consumes world-model predictions.
    pub fn uses_prediction(self) -> bool {
        matches!(self, Conditioning::Full | Conditioning::PredictedOnly)
    }
}

/// Raw per-step context; the conditioning picks what gets encoded.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolicyInputs {
    pub a_prev: Option<usize>,
    /// Previous intervention as a level index.
    pub level_idx_prev: Option<usize>,
    /// World-model prediction of the current agent action.
    pub predicted: Option<usize>,
    /// Realized current agent action (oracle conditioning only).
    pub true_action: Option<usize>,
}

/// Recurrent bandit intervention policy (parameters θ).
#[derive(Debug, Clone)]
pub struct InterventionPolicy {
    pub spec: GruSpec,
    pub conditioning: Conditioning,
    pub params: ParamVector,
}

impl InterventionPolicy {
    pub fn new(
        num_arms: usize,
        conditioning: Conditioning,
        hidden_dim: usize,
        layers: usize,
        rng: &mut SplitRng,
    ) -> Self {
        let spec = GruSpec::new(
            conditioning.input_dim(num_arms),
            hidden_dim,
            layers,
            INTERVENTION_LEVELS.len(),
        );
        let params = spec.init_params(rng);
        InterventionPolicy { spec, conditioning, params }
    }

    pub fn from_params(
        spec: GruSpec,
        conditioning: Conditioning,
        params: ParamVector,
    ) -> Result<Self> {
        spec.validate_params(&params)?;
        Ok(InterventionPolicy { spec, conditioning, params })
    }

    pub fn num_arms(&self) -> usize {
        match self.conditioning {
            Conditioning::Full => {
                (self.spec.input_dim - INTERVENTION_LEVELS.len()) / 2
            }
            Conditioning::PrevOnly => self.spec.input_dim - INTERVENTION_LEVELS.len(),
            Conditioning::PredictedOnly | Conditioning::TrueActionOnly => self.spec.input_dim,
        }
    }

    pub fn validate(&self, num_arms: usize) -> Result<()> {
        if self.conditioning.input_dim(num_arms) != self.spec.input_dim {
            return Err(Error::config(format!(
                "policy input dim {} does not match {num_arms} arms under {:?}",
                self.spec.input_dim, self.conditioning
            )));
        }
        if self.spec.out_dim != INTERVENTION_LEVELS.len() {
            return Err(Error::config("policy head must cover the 3 intervention levels"));
        }
        self.spec.validate_params(&self.params)
    }

    /// Encode per-step context under this policy's conditioning.
    pub fn encode_input(&self, inputs: &PolicyInputs) -> Array1<f64> {
        let arms = self.num_arms();
        let levels = INTERVENTION_LEVELS.len();
        match self.conditioning {
            Conditioning::Full => {
                let mut x = one_hot(inputs.a_prev, arms);
                x.append(ndarray::Axis(0), one_hot(inputs.level_idx_prev, levels).view())
                    .expect("1-d concat");
                x.append(ndarray::Axis(0), one_hot(inputs.predicted, arms).view())
                    .expect("1-d concat");
                x
            }
            Conditioning::PrevOnly => {
                let mut x = one_hot(inputs.a_prev, arms);
                x.append(ndarray::Axis(0), one_hot(inputs.level_idx_prev, levels).view())
                    .expect("1-d concat");
                x
            }
            Conditioning::PredictedOnly => one_hot(inputs.predicted, arms),
            Conditioning::TrueActionOnly => one_hot(inputs.true_action, arms),
        }
    }

    /// Start a per-episode numeric session.
    pub fn session(&self) -> PolicySession<'_> {
        PolicySession { policy: self, state: self.spec.zero_state() }
    }

    /// Start a per-episode tape session over bindings `tp`.
    pub fn tape_session(&self, tape: &mut Tape) -> PolicyTapeSession {
        let h = (0..self.spec.layers)
            .map(|_| tape.constant(Array1::<f64>::zeros(self.spec.hidden_dim)))
            .collect();
        PolicyTapeSession { spec: self.spec.clone(), conditioning: self.conditioning, h }
    }
}

/// A sampled intervention with its log-probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyDecision {
    pub level_idx: usize,
    pub level: f64,
    pub logprob: f64,
}

/// Numeric rollout state for the recurrent policy.
pub struct PolicySession<'a> {
    policy: &'a InterventionPolicy,
    state: GruState,
}

impl PolicySession<'_> {
    fn step_probs(&mut self, inputs: &PolicyInputs) -> Result<Array1<f64>> {
        let x = self.policy.encode_input(inputs);
        let (next, top) = self.policy.spec.step(&self.policy.params, &x, &self.state)?;
        self.state = next;
        let logits = self.policy.spec.head(&self.policy.params, &top)?;
        Ok(act::softmax(&logits))
    }

    /// Advance one step and sample an intervention level.
    pub fn act(&mut self, inputs: &PolicyInputs, rng: &mut SplitRng) -> Result<PolicyDecision> {
        let probs = self.step_probs(inputs)?;
        let level_idx = sample_categorical(rng, probs.as_slice().expect("contiguous"));
        Ok(PolicyDecision {
            level_idx,
            level: INTERVENTION_LEVELS[level_idx],
            logprob: probs[level_idx].ln(),
        })
    }

    /// Advance one step and score a forced level (teacher-forced replay).
    pub fn logprob_of(&mut self, inputs: &PolicyInputs, level_idx: usize) -> Result<f64> {
        let probs = self.step_probs(inputs)?;
        if level_idx >= probs.len() {
            return Err(Error::usage(format!("level index {level_idx} out of range")));
        }
        Ok(probs[level_idx].ln())
    }
}

/// Tape rollout state: hidden nodes live on the tape so the whole episode
/// is differentiable.
pub struct PolicyTapeSession {
    spec: GruSpec,
    conditioning: Conditioning,
    h: Vec<NodeId>,
}

impl PolicyTapeSession {
    /// Advance one step on the tape, sample a level from the current
    /// softmax, and return the decision plus its log-probability node.
    pub fn act(
        &mut self,
        tape: &mut Tape,
        tp: &TapeBindings,
        encoded_input: Array1<f64>,
        rng: &mut SplitRng,
    ) -> Result<(PolicyDecision, NodeId)> {
        let x = tape.constant(encoded_input);
        let (h_next, top) = self.spec.step_tape(tape, tp, x, &self.h)?;
        self.h = h_next;
        let logits_id = self.spec.head_tape(tape, tp, top)?;
        let logits = tape.value(logits_id).as_vector()?;
        let probs = act::softmax(logits);
        let level_idx = sample_categorical(rng, probs.as_slice().expect("contiguous"));
        let logprob_id = tape.log_softmax_pick(logits_id, level_idx);
        let decision = PolicyDecision {
            level_idx,
            level: INTERVENTION_LEVELS[level_idx],
            logprob: tape.value(logprob_id).as_scalar()?,
        };
        Ok((decision, logprob_id))
    }

    pub fn conditioning(&self) -> Conditioning {
        self.conditioning
    }
}

/// One policy step conditioned on a world-model prediction.
pub fn policy_act(
    session: &mut PolicySession<'_>,
    a_prev: Option<usize>,
    level_idx_prev: Option<usize>,
    predicted: usize,
    rng: &mut SplitRng,
) -> Result<PolicyDecision> {
    session.act(
        &PolicyInputs {
            a_prev,
            level_idx_prev,
            predicted: Some(predicted),
            true_action: None,
        },
        rng,
    )
}

/// One policy step conditioned on the oracle-provided true agent action.
pub fn oracle_policy_act(
    session: &mut PolicySession<'_>,
    true_action: usize,
    rng: &mut SplitRng,
) -> Result<PolicyDecision> {
    session.act(
        &PolicyInputs { true_action: Some(true_action), ..PolicyInputs::default() },
        rng,
    )
}

/// MLP matrix-game policy: sigmoid probability of intervening given the
/// (possibly noisy) observed agent type.
#[derive(Debug, Clone)]
pub struct StackelbergPolicy {
    pub spec: MlpSpec,
    pub params: ParamVector,
}

impl StackelbergPolicy {
    pub fn new(hidden_dim: usize, rng: &mut SplitRng) -> Self {
        let spec = MlpSpec::new(1, hidden_dim);
        let params = spec.init_params(rng);
        StackelbergPolicy { spec, params }
    }

    /// Probability of intervening; strictly inside (0,1).
    pub fn intervene_prob(&self, u_obs: f64) -> Result<f64> {
        Ok(act::sigmoid(self.spec.logit(&self.params, &ndarray::arr1(&[u_obs]))?))
    }
}

/// Bernoulli sample of the intervention decision with its log-probability.
pub fn stackelberg_act(
    pol: &StackelbergPolicy,
    u_obs: f64,
    rng: &mut SplitRng,
) -> Result<(bool, f64)> {
    let z = pol.spec.logit(&pol.params, &ndarray::arr1(&[u_obs]))?;
    let p = act::sigmoid(z);
    let intervene = rand::Rng::random::<f64>(rng) < p;
    // log σ(z) = −softplus(−z); log(1−σ(z)) = −softplus(z).
    let logprob = if intervene { -act::softplus(-z) } else { -act::softplus(z) };
    Ok((intervene, logprob))
}

/// Tape node for the Bernoulli log-probability of a realized decision.
pub fn stackelberg_logprob_tape(
    pol: &StackelbergPolicy,
    tape: &mut Tape,
    tp: &TapeBindings,
    u_obs: f64,
    intervene: bool,
) -> Result<NodeId> {
    let x = tape.constant(ndarray::arr1(&[u_obs]));
    let z = pol.spec.logit_tape(tape, tp, x)?;
    let arg = if intervene { tape.neg(z) } else { z };
    let sp = tape.softplus(arg);
    Ok(tape.neg(sp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(cond: Conditioning) -> InterventionPolicy {
        let mut rng = SplitRng::new(11);
        InterventionPolicy::new(5, cond, 8, 2, &mut rng)
    }

    #[test]
    fn input_dims_per_conditioning() {
        assert_eq!(Conditioning::Full.input_dim(10), 23);
        assert_eq!(Conditioning::PrevOnly.input_dim(10), 13);
        assert_eq!(Conditioning::PredictedOnly.input_dim(10), 10);
        assert_eq!(Conditioning::TrueActionOnly.input_dim(10), 10);
        for cond in [
            Conditioning::Full,
            Conditioning::PrevOnly,
            Conditioning::PredictedOnly,
            Conditioning::TrueActionOnly,
        ] {
            let p = policy(cond);
            assert_eq!(p.num_arms(), 5);
            assert!(p.validate(5).is_ok());
            assert!(p.validate(6).is_err());
        }
    }

    #[test]
    fn zero_params_sample_each_level_uniformly() {
        let mut p = policy(Conditioning::Full);
        p.params = p.spec.zero_params();
        let mut rng = SplitRng::new(3);
        let n = 10_000;
        let mut freq = [0usize; 3];
        for _ in 0..n {
            let mut s = p.session();
            let d = policy_act(&mut s, None, None, 2, &mut rng).unwrap();
            freq[d.level_idx] += 1;
        }
        let pr = 1.0 / 3.0;
        let sigma = (n as f64 * pr * (1.0 - pr)).sqrt();
        for f in freq {
            assert!((f as f64 - n as f64 * pr).abs() < 3.0 * sigma, "freq {f}");
        }
    }

    #[test]
    fn logprob_matches_softmax_probability() {
        let p = policy(Conditioning::PrevOnly);
        let mut rng = SplitRng::new(5);
        let mut s = p.session();
        for t in 0..20 {
            let inputs = PolicyInputs {
                a_prev: if t == 0 { None } else { Some(t % 5) },
                level_idx_prev: if t == 0 { None } else { Some(t % 3) },
                ..PolicyInputs::default()
            };
            // Recompute the step's distribution independently.
            let d = s.act(&inputs, &mut rng).unwrap();
            assert!(d.logprob <= 0.0);
            assert!((d.level - INTERVENTION_LEVELS[d.level_idx]).abs() < 1e-15);
        }
    }

    #[test]
    fn frozen_rng_reproduces_action_sequence() {
        let p = policy(Conditioning::Full);
        let run = || {
            let mut rng = SplitRng::new(9);
            let mut s = p.session();
            (0..30)
                .map(|t| {
                    let inputs = PolicyInputs {
                        a_prev: if t == 0 { None } else { Some(t % 5) },
                        level_idx_prev: if t == 0 { None } else { Some(t % 3) },
                        predicted: Some((t + 1) % 5),
                        true_action: None,
                    };
                    s.act(&inputs, &mut rng).unwrap().level_idx
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn tape_and_numeric_sessions_agree() {
        let p = policy(Conditioning::Full);
        let mut rng_a = SplitRng::new(7);
        let mut rng_b = SplitRng::new(7);
        let mut num = p.session();
        let mut tape = Tape::new();
        let tp = TapeBindings::leaves(&mut tape, &p.params).unwrap();
        let mut sym = p.tape_session(&mut tape);
        for t in 0..10 {
            let inputs = PolicyInputs {
                a_prev: if t == 0 { None } else { Some(t % 5) },
                level_idx_prev: if t == 0 { None } else { Some(t % 3) },
                predicted: Some(t % 5),
                true_action: None,
            };
            let dn = num.act(&inputs, &mut rng_a).unwrap();
            let (dt, lp) = sym
                .act(&mut tape, &tp, p.encode_input(&inputs), &mut rng_b)
                .unwrap();
            assert_eq!(dn.level_idx, dt.level_idx);
            assert!((dn.logprob - tape.value(lp).as_scalar().unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn stackelberg_zero_params_give_half() {
        let mut rng = SplitRng::new(2);
        let mut p = StackelbergPolicy::new(8, &mut rng);
        let mut zeros = crate::params::ParamVector::new();
        for (name, v) in p.params.iter() {
            zeros.insert(name, v.zeros_like()).unwrap();
        }
        p.params = zeros;
        assert_eq!(p.intervene_prob(0.3).unwrap(), 0.5);
    }

    #[test]
    fn stackelberg_prob_is_pure_function_of_input() {
        let mut rng = SplitRng::new(6);
        let p = StackelbergPolicy::new(8, &mut rng);
        assert_eq!(p.intervene_prob(0.42).unwrap(), p.intervene_prob(0.42).unwrap());
    }

    #[test]
    fn bernoulli_logprob_matches_probability() {
        let mut rng = SplitRng::new(8);
        let p = StackelbergPolicy::new(8, &mut rng);
        for u in [0.07, 0.5, 0.93] {
            let prob = p.intervene_prob(u).unwrap();
            let (intervene, lp) = stackelberg_act(&p, u, &mut rng).unwrap();
            let want = if intervene { prob.ln() } else { (1.0 - prob).ln() };
            assert!((lp - want).abs() < 1e-9);
        }
    }
}
