//! REINFORCE with a scalar moving-average baseline.
//!
//! The surrogate loss is L(θ) = −(1/N) Σ_episodes Σ_t log π_θ(a_t)·(G_t − b)
//! with G_t the discounted return-to-go of per-step principal utilities;
//! its gradient is the (negated) policy gradient, so one SGD step on L is
//! one ascent step on the expected score. The baseline b is constant with
//! respect to θ, so it changes variance but not the gradient's expectation.

use crate::env::bandit::level_index;
use crate::env::trace::EpisodeTrace;
use crate::error::{Error, Result};
use crate::nn::TapeBindings;
use crate::optim::sgd_step;
use crate::params::ParamVector;
use crate::principal::{InterventionPolicy, PolicyInputs};
use crate::tape::{NodeId, Tape};

use super::sampler::SampledEpisode;

/// Scalar exponential-moving-average baseline over episode scores.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EmaBaseline {
    value: Option<f64>,
    decay: f64,
}

impl EmaBaseline {
    pub fn new(decay: f64) -> Self {
        assert!((0.0..1.0).contains(&decay), "baseline decay must be in [0,1)");
        EmaBaseline { value: None, decay }
    }

    /// Resume from an already-accumulated value, e.g. carrying the training
    /// baseline into test-time adaptation.
    pub fn resume(decay: f64, value: f64) -> Self {
        let mut b = EmaBaseline::new(decay);
        b.value = Some(value);
        b
    }

    /// Current baseline, falling back to `batch_mean` before any update.
    pub fn value_or(&self, batch_mean: f64) -> f64 {
        self.value.unwrap_or(batch_mean)
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    /// Fold one batch-mean score into the moving average.
    pub fn update(&mut self, batch_mean: f64) {
        self.value = Some(match self.value {
            Some(v) => self.decay * v + (1.0 - self.decay) * batch_mean,
            None => batch_mean,
        });
    }
}

/// G_t = u_t + γ·G_{t+1}, computed right-to-left.
pub fn returns_to_go(utilities: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; utilities.len()];
    let mut acc = 0.0;
    for (g, u) in out.iter_mut().zip(utilities).rev() {
        acc = u + gamma * acc;
        *g = acc;
    }
    out
}

/// Per-step principal utilities r^p_t − α·c_t read back from a trace.
pub fn trace_utilities(trace: &EpisodeTrace, alpha: f64) -> Vec<f64> {
    trace.steps.iter().map(|s| s.principal_reward - alpha * s.cost).collect()
}

/// Build the surrogate loss node over already-sampled episodes.
pub fn reinforce_surrogate(
    tape: &mut Tape,
    episodes: &[SampledEpisode],
    gamma: f64,
    baseline: f64,
) -> Result<NodeId> {
    if episodes.is_empty() {
        return Err(Error::usage("reinforce surrogate needs at least one episode"));
    }
    let mut terms = Vec::new();
    for ep in episodes {
        if ep.logprob_ids.len() != ep.utilities.len() {
            return Err(Error::usage("episode log-probabilities and utilities disagree"));
        }
        for (lp, g) in ep.logprob_ids.iter().zip(returns_to_go(&ep.utilities, gamma)) {
            terms.push(tape.scale(*lp, -(g - baseline)));
        }
    }
    let total = tape.add_n(&terms);
    Ok(tape.scale(total, 1.0 / episodes.len() as f64))
}

/// Episodes sampled on a retained tape, ready for a gradient step.
#[derive(Debug)]
pub struct TapedEpisodes {
    pub tape: Tape,
    pub bindings: TapeBindings,
    pub episodes: Vec<SampledEpisode>,
}

impl TapedEpisodes {
    pub fn mean_score(&self) -> f64 {
        self.episodes.iter().map(|e| e.score).sum::<f64>() / self.episodes.len().max(1) as f64
    }
}

/// One REINFORCE ascent step: θ' = θ − lr·∇L(θ).
///
/// The episodes must have been sampled under exactly `params`; the tape's
/// leaf values are checked against them. The baseline is read before and
/// updated after the step, so the advantage never depends on the current
/// batch once the baseline has burned in.
pub fn reinforce_update(
    params: &ParamVector,
    batch: &mut TapedEpisodes,
    lr: f64,
    gamma: f64,
    baseline: &mut EmaBaseline,
) -> Result<ParamVector> {
    for (name, value) in params.iter() {
        let bound = batch.tape.value(batch.bindings.get(name)?);
        if bound != value {
            return Err(Error::usage(format!(
                "episodes were not sampled under the given parameters ({name} differs)"
            )));
        }
    }
    if batch.bindings.len() != params.len() {
        return Err(Error::usage("parameter names do not match the sampling tape".to_string()));
    }
    let mean = batch.mean_score();
    let b = baseline.value_or(mean);
    let surrogate = reinforce_surrogate(&mut batch.tape, &batch.episodes, gamma, b)?;
    let grads = batch.tape.grad(surrogate)?;
    let next = sgd_step(params, &grads, lr)?;
    baseline.update(mean);
    Ok(next)
}

/// Numeric surrogate value for recorded episodes: replays the policy
/// forward pass along each trace (teacher forcing) and scores the realized
/// intervention levels. Ground truth for finite-difference checks of
/// [`reinforce_surrogate`], and the engine behind gradient-free sanity
/// evaluation of a parameter vector on fixed data.
pub fn replay_surrogate(
    policy: &InterventionPolicy,
    episodes: &[(EpisodeTrace, Vec<f64>)],
    gamma: f64,
    baseline: f64,
) -> Result<f64> {
    if episodes.is_empty() {
        return Err(Error::usage("replay needs at least one episode"));
    }
    let mut total = 0.0;
    for (trace, utilities) in episodes {
        if trace.len() != utilities.len() {
            return Err(Error::usage("trace and utilities disagree in length"));
        }
        let mut session = policy.session();
        let mut a_prev = None;
        let mut lv_prev = None;
        for (step, g) in trace.steps.iter().zip(returns_to_go(utilities, gamma)) {
            let inputs = PolicyInputs {
                a_prev,
                level_idx_prev: lv_prev,
                predicted: step.wm_prediction,
                true_action: Some(step.agent_action),
            };
            let lp = session.logprob_of(&inputs, level_index(step.intervention)?)?;
            total -= lp * (g - baseline);
            a_prev = Some(step.agent_action);
            lv_prev = Some(level_index(step.intervention)?);
        }
    }
    Ok(total / episodes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::trace::TraceStep;
    use crate::rng::{sample_categorical, SplitRng};
    use crate::value::Value;
    use ndarray::arr1;

    #[test]
    fn returns_to_go_matches_brute_force() {
        let u = [1.0, 0.5, -0.25, 2.0];
        let gamma = 0.9;
        let got = returns_to_go(&u, gamma);
        for t in 0..u.len() {
            let want: f64 = (t..u.len()).map(|s| gamma.powi((s - t) as i32) * u[s]).sum();
            assert!((got[t] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn baseline_burns_in_then_averages() {
        let mut b = EmaBaseline::new(0.9);
        assert_eq!(b.value_or(5.0), 5.0);
        b.update(10.0);
        assert_eq!(b.value_or(0.0), 10.0);
        b.update(20.0);
        assert!((b.value().unwrap() - (0.9 * 10.0 + 0.1 * 20.0)).abs() < 1e-12);
    }

    /// Minimal one-step "policy": two logits, reward 1 for action 0.
    fn one_step_episode(
        logits_value: &Value,
        rng: &mut SplitRng,
    ) -> (TapedEpisodes, usize) {
        let mut tape = Tape::new();
        let logits = tape.param("logits", logits_value.clone()).unwrap();
        let bindings = TapeBindings::from_ids(["logits".to_string()], vec![logits]);
        let v = tape.value(logits).as_vector().unwrap();
        let probs = crate::nn::act::softmax(v);
        let a = sample_categorical(rng, probs.as_slice().unwrap());
        let lp = tape.log_softmax_pick(logits, a);
        let reward = if a == 0 { 1.0 } else { 0.0 };
        let mut trace = EpisodeTrace::new();
        trace.push(TraceStep {
            t: 1,
            agent_action: a,
            intervention: 0.0,
            cost: 0.0,
            agent_reward: reward,
            principal_reward: reward,
            logprob: probs[a].ln(),
            wm_prediction: None,
        });
        let episode = SampledEpisode {
            trace,
            logprob_ids: vec![lp],
            utilities: vec![reward],
            score: reward,
        };
        (TapedEpisodes { tape, bindings, episodes: vec![episode] }, a)
    }

    #[test]
    fn all_returns_at_baseline_give_zero_update() {
        let mut params = ParamVector::new();
        params.insert("logits", Value::Vector(arr1(&[0.3, -0.2]))).unwrap();
        let mut rng = SplitRng::new(1);
        let (mut batch, a) = one_step_episode(params.get("logits").unwrap(), &mut rng);
        let reward = if a == 0 { 1.0 } else { 0.0 };
        let mut baseline = EmaBaseline::new(0.9);
        baseline.update(reward);
        let next = reinforce_update(&params, &mut batch, 0.5, 1.0, &mut baseline).unwrap();
        assert_eq!(next.checksum(), params.checksum());
    }

    #[test]
    fn two_action_convergence_to_the_rewarded_arm() {
        let mut params = ParamVector::new();
        params.insert("logits", Value::Vector(arr1(&[0.0, 0.0]))).unwrap();
        let mut rng = SplitRng::new(2);
        let mut baseline = EmaBaseline::new(0.9);
        for _ in 0..500 {
            let (mut batch, _) = one_step_episode(params.get("logits").unwrap(), &mut rng);
            params = reinforce_update(&params, &mut batch, 0.3, 1.0, &mut baseline).unwrap();
        }
        let logits = params.get("logits").unwrap().as_vector().unwrap();
        let probs = crate::nn::act::softmax(logits);
        assert!(probs[0] > 0.95, "P(action 0) = {}", probs[0]);
    }

    #[test]
    fn stale_parameters_are_rejected() {
        let mut params = ParamVector::new();
        params.insert("logits", Value::Vector(arr1(&[0.3, -0.2]))).unwrap();
        let mut rng = SplitRng::new(3);
        let (mut batch, _) = one_step_episode(params.get("logits").unwrap(), &mut rng);
        params.set("logits", Value::Vector(arr1(&[0.5, -0.2]))).unwrap();
        let mut baseline = EmaBaseline::new(0.9);
        let err = reinforce_update(&params, &mut batch, 0.1, 1.0, &mut baseline);
        assert!(err.is_err());
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        use crate::principal::Conditioning;
        let mut rng = SplitRng::new(4);
        let task = crate::env::bandit::BanditTask::new(
            vec![0.2, 0.8, 0.4],
            0,
            0.0,
            crate::agents::LearnerSpec::EpsGreedy { eps: 0.2 },
        )
        .unwrap();
        let policy =
            InterventionPolicy::new(3, Conditioning::PrevOnly, 4, 1, &mut rng);
        let cfg = super::super::sampler::RolloutConfig::new(12, 0.2, 1.0).unwrap();
        let mut tape = Tape::new();
        let tp = TapeBindings::leaves(&mut tape, &policy.params).unwrap();
        let ep = super::super::sampler::rollout_bandit_tape(
            &mut tape,
            &tp,
            &policy,
            None,
            &task,
            &cfg,
            &mut rng.child(7),
        )
        .unwrap();
        let baseline = 0.4;
        let surrogate = reinforce_surrogate(&mut tape, &[ep.clone()], cfg.gamma, baseline).unwrap();
        let grads = tape.grad(surrogate).unwrap();

        let replay = |params: &ParamVector| {
            let p = InterventionPolicy::from_params(
                policy.spec.clone(),
                policy.conditioning,
                params.clone(),
            )
            .unwrap();
            replay_surrogate(
                &p,
                &[(ep.trace.clone(), ep.utilities.clone())],
                cfg.gamma,
                baseline,
            )
            .unwrap()
        };
        assert!(
            (replay(&policy.params) - tape.value(surrogate).as_scalar().unwrap()).abs() < 1e-9
        );
        let eps = 1e-5;
        let mut checked = 0;
        for (name, value) in policy.params.iter() {
            let flat: Vec<f64> = match value {
                Value::Scalar(x) => vec![*x],
                Value::Vector(v) => v.to_vec(),
                Value::Matrix(m) => m.iter().copied().collect(),
            };
            for idx in 0..flat.len().min(3) {
                let mut plus = policy.params.clone();
                let mut minus = policy.params.clone();
                perturb(&mut plus, name, idx, eps);
                perturb(&mut minus, name, idx, -eps);
                let fd = (replay(&plus) - replay(&minus)) / (2.0 * eps);
                let got = component(grads.get(name).unwrap(), idx);
                let scale = fd.abs().max(got.abs()).max(1.0);
                assert!(
                    (fd - got).abs() / scale < 1e-4,
                    "{name}[{idx}]: fd {fd} vs grad {got}"
                );
                checked += 1;
            }
        }
        assert!(checked >= 20);
    }

    fn perturb(params: &mut ParamVector, name: &str, idx: usize, eps: f64) {
        let mut v = params.get(name).unwrap().clone();
        match &mut v {
            Value::Scalar(x) => *x += eps,
            Value::Vector(a) => a[idx] += eps,
            Value::Matrix(m) => {
                let cols = m.ncols();
                m[[idx / cols, idx % cols]] += eps;
            }
        }
        params.set(name, v).unwrap();
    }

    fn component(v: &Value, idx: usize) -> f64 {
        match v {
            Value::Scalar(x) => *x,
            Value::Vector(a) => a[idx],
            Value::Matrix(m) => {
                let cols = m.ncols();
                m[[idx / cols, idx % cols]]
            }
        }
    }
}
