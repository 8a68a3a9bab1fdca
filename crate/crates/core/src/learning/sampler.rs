//! Episode rollouts. One numeric path used for evaluation and fixed
//! baselines, and one tape path used for training, where every policy
//! forward pass lives on a [`Tape`] so log-probabilities stay
//! differentiable. Both paths draw randomness in the same order per step
//! (policy sample, agent selection, reward noise; agent first for oracle
//! conditionings), so a numeric rollout reproduces a tape rollout exactly
//! under the same seed.

use crate::agents::{
    bandit_select, best_response_running_average, best_response_single_round,
    best_response_update, AgentAction,
};
use crate::env::bandit::{bandit_experience, episode_score, level_index, BanditTask};
use crate::env::stackelberg::{
    noisy_payoff_observation, noisy_type_observation, stackelberg_payoffs, StackelbergSetting,
    StackelbergTask,
};
use crate::env::trace::{EpisodeTrace, TraceStep};
use crate::error::{Error, Result};
use crate::nn::TapeBindings;
use crate::principal::{
    policy::stackelberg_logprob_tape, rules, stackelberg_act, BanditPrincipal, Conditioning,
    InterventionPolicy, PolicyInputs, StackelbergPolicy, WorldModel,
};
use crate::rng::SplitRng;
use crate::tape::{NodeId, Tape};

/// Episode-level knobs shared by every rollout: horizon and the score's
/// cost weight and discount.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub alpha: f64,
    pub gamma: f64,
}

impl RolloutConfig {
    pub fn new(horizon: usize, alpha: f64, gamma: f64) -> Result<Self> {
        let cfg = RolloutConfig { horizon, alpha, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon must be positive".to_string()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::config("alpha must be finite and nonnegative".to_string()));
        }
        if !(0.0 < self.gamma && self.gamma <= 1.0) {
            return Err(Error::config("gamma must lie in (0, 1]".to_string()));
        }
        Ok(())
    }
}

/// A training rollout: the trace plus the tape nodes and per-step
/// utilities REINFORCE needs.
#[derive(Debug, Clone)]
pub struct SampledEpisode {
    pub trace: EpisodeTrace,
    /// One log-probability node per step, aligned with `trace.steps`.
    pub logprob_ids: Vec<NodeId>,
    /// Per-step principal utility u_t = r^p_t − α·c_t.
    pub utilities: Vec<f64>,
    /// Discounted episode score Σ_t γ^(t−1) u_t.
    pub score: f64,
}

/// Run one bandit episode against a fresh agent, numerically.
pub fn rollout_bandit(
    task: &BanditTask,
    principal: &BanditPrincipal,
    cfg: &RolloutConfig,
    rng: &mut SplitRng,
) -> Result<EpisodeTrace> {
    cfg.validate()?;
    principal.validate(task.num_arms())?;
    let mut trace = EpisodeTrace::with_capacity(cfg.horizon);
    let mut state = task.fresh_learner_state();
    let agent_first = principal.wants_agent_first();

    let (mut pol_session, mut wm_session) = match principal {
        BanditPrincipal::Learned { policy, world_model } => {
            (Some(policy.session()), world_model.as_ref().map(|wm| wm.session()))
        }
        _ => (None, None),
    };

    let mut a_prev: Option<usize> = None;
    let mut lv_prev: Option<usize> = None;
    for t in 1..=cfg.horizon {
        let predicted = match wm_session.as_mut() {
            Some(session) => Some(session.predict(a_prev, lv_prev)?.1),
            None => None,
        };
        let pre_selected = if agent_first {
            Some(bandit_select(&task.learner, &state, rng)?)
        } else {
            None
        };
        let (level, logprob) = match principal {
            BanditPrincipal::NoIntervention => (0.0, 0.0),
            BanditPrincipal::S1 { level } => (rules::rule_s1(t, *level), 0.0),
            BanditPrincipal::S2 { level } => (rules::rule_s2(t, *level), 0.0),
            BanditPrincipal::Rb { level } => (
                rules::rule_rb(
                    pre_selected.as_ref().expect("oracle rollouts select first").action,
                    task.a_star,
                    *level,
                ),
                0.0,
            ),
            BanditPrincipal::Learned { .. } => {
                let inputs = PolicyInputs {
                    a_prev,
                    level_idx_prev: lv_prev,
                    predicted,
                    true_action: pre_selected.as_ref().map(|s| s.action),
                };
                let d = pol_session
                    .as_mut()
                    .expect("learned rollouts carry a policy session")
                    .act(&inputs, rng)?;
                (d.level, d.logprob)
            }
        };
        let sel = match pre_selected {
            Some(sel) => sel,
            None => bandit_select(&task.learner, &state, rng)?,
        };
        let (out, next_state) = bandit_experience(task, state, sel, level, rng)?;
        state = next_state;
        trace.push(TraceStep {
            t,
            agent_action: out.action,
            intervention: level,
            cost: out.cost,
            agent_reward: out.agent_reward,
            principal_reward: out.principal_reward,
            logprob,
            wm_prediction: predicted,
        });
        a_prev = Some(out.action);
        lv_prev = Some(level_index(level)?);
    }
    Ok(trace)
}

/// Run one bandit episode with the policy forward pass on `tape`.
///
/// `bindings` supplies the policy parameter nodes; they may be tape
/// leaves or adapted nodes computed by an inner update. `policy` only
/// contributes its architecture and conditioning; its stored parameter
/// values are ignored.
pub fn rollout_bandit_tape(
    tape: &mut Tape,
    bindings: &TapeBindings,
    policy: &InterventionPolicy,
    world_model: Option<&WorldModel>,
    task: &BanditTask,
    cfg: &RolloutConfig,
    rng: &mut SplitRng,
) -> Result<SampledEpisode> {
    cfg.validate()?;
    if policy.conditioning.input_dim(task.num_arms()) != policy.spec.input_dim {
        return Err(Error::config(format!(
            "policy input dim {} does not fit {} arms under {:?}",
            policy.spec.input_dim,
            task.num_arms(),
            policy.conditioning
        )));
    }
    if policy.conditioning.uses_prediction() && world_model.is_none() {
        return Err(Error::config(
            "policy conditioning consumes predictions but no world model given".to_string(),
        ));
    }
    let agent_first = policy.conditioning == Conditioning::TrueActionOnly;
    let mut trace = EpisodeTrace::with_capacity(cfg.horizon);
    let mut logprob_ids = Vec::with_capacity(cfg.horizon);
    let mut utilities = Vec::with_capacity(cfg.horizon);
    let mut state = task.fresh_learner_state();
    let mut session = policy.tape_session(tape);
    let mut wm_session = world_model.map(|wm| wm.session());

    let mut a_prev: Option<usize> = None;
    let mut lv_prev: Option<usize> = None;
    for t in 1..=cfg.horizon {
        let predicted = match wm_session.as_mut() {
            Some(s) => Some(s.predict(a_prev, lv_prev)?.1),
            None => None,
        };
        let pre_selected = if agent_first {
            Some(bandit_select(&task.learner, &state, rng)?)
        } else {
            None
        };
        let inputs = PolicyInputs {
            a_prev,
            level_idx_prev: lv_prev,
            predicted,
            true_action: pre_selected.as_ref().map(|s| s.action),
        };
        let (decision, lp_id) =
            session.act(tape, bindings, policy.encode_input(&inputs), rng)?;
        let sel = match pre_selected {
            Some(sel) => sel,
            None => bandit_select(&task.learner, &state, rng)?,
        };
        let (out, next_state) = bandit_experience(task, state, sel, decision.level, rng)?;
        state = next_state;
        utilities.push(out.principal_reward - cfg.alpha * out.cost);
        logprob_ids.push(lp_id);
        trace.push(TraceStep {
            t,
            agent_action: out.action,
            intervention: decision.level,
            cost: out.cost,
            agent_reward: out.agent_reward,
            principal_reward: out.principal_reward,
            logprob: decision.logprob,
            wm_prediction: predicted,
        });
        a_prev = Some(out.action);
        lv_prev = Some(decision.level_idx);
    }
    let score = episode_score(&trace, cfg.alpha, cfg.gamma);
    Ok(SampledEpisode { trace, logprob_ids, utilities, score })
}

fn action_code(a: AgentAction) -> usize {
    match a {
        AgentAction::Cooperate => 0,
        AgentAction::Defect => 1,
    }
}

fn stackelberg_step(
    task: &StackelbergTask,
    t: usize,
    agent: AgentAction,
    intervene: bool,
    logprob: f64,
) -> (TraceStep, f64, f64) {
    let (agent_payoff, principal_payoff) = stackelberg_payoffs(task.u, task.c, agent, intervene);
    let step = TraceStep {
        t,
        agent_action: action_code(agent),
        intervention: if intervene { 1.0 } else { 0.0 },
        cost: if intervene { task.c } else { 0.0 },
        agent_reward: agent_payoff,
        principal_reward: if agent == AgentAction::Cooperate { 1.0 } else { 0.0 },
        logprob,
        wm_prediction: None,
    };
    (step, agent_payoff, principal_payoff)
}

/// Run one matrix-game episode with the policy logits on `tape`.
///
/// Single-round settings play one round against the type's best response;
/// the multi-round setting plays `task.horizon` rounds against the
/// running-average responder with noisy payoff observations. Utilities are
/// the principal's matrix payoffs, so the score already nets out the
/// intervention cost.
pub fn rollout_stackelberg_tape(
    tape: &mut Tape,
    bindings: &TapeBindings,
    policy: &StackelbergPolicy,
    task: &StackelbergTask,
    rng: &mut SplitRng,
) -> Result<SampledEpisode> {
    let mut trace = EpisodeTrace::with_capacity(task.horizon);
    let mut logprob_ids = Vec::with_capacity(task.horizon);
    let mut utilities = Vec::with_capacity(task.horizon);
    let mut state = crate::agents::LearnerState::new(2);
    for t in 1..=task.horizon {
        let u_obs = noisy_type_observation(task.u, task.obs_noise_sigma, rng);
        let (intervene, logprob) = stackelberg_act(policy, u_obs, rng)?;
        let lp_id = stackelberg_logprob_tape(policy, tape, bindings, u_obs, intervene)?;
        let agent = match task.setting {
            StackelbergSetting::SingleRoundPerfect | StackelbergSetting::SingleRoundNoisy => {
                best_response_single_round(task.u, intervene)
            }
            StackelbergSetting::MultiRoundNoisy => best_response_running_average(&state),
        };
        let (step, agent_payoff, principal_payoff) =
            stackelberg_step(task, t, agent, intervene, logprob);
        if task.setting == StackelbergSetting::MultiRoundNoisy {
            let observed = noisy_payoff_observation(agent_payoff, task.payoff_noise_sigma, rng);
            state = best_response_update(state, agent, observed);
        }
        utilities.push(principal_payoff);
        logprob_ids.push(lp_id);
        trace.push(step);
    }
    let score = utilities.iter().sum();
    Ok(SampledEpisode { trace, logprob_ids, utilities, score })
}

/// Numeric matrix-game episode; same draw order as the tape path.
pub fn rollout_stackelberg(
    task: &StackelbergTask,
    policy: &StackelbergPolicy,
    rng: &mut SplitRng,
) -> Result<(EpisodeTrace, f64)> {
    let mut trace = EpisodeTrace::with_capacity(task.horizon);
    let mut score = 0.0;
    let mut state = crate::agents::LearnerState::new(2);
    for t in 1..=task.horizon {
        let u_obs = noisy_type_observation(task.u, task.obs_noise_sigma, rng);
        let (intervene, logprob) = stackelberg_act(policy, u_obs, rng)?;
        let agent = match task.setting {
            StackelbergSetting::SingleRoundPerfect | StackelbergSetting::SingleRoundNoisy => {
                best_response_single_round(task.u, intervene)
            }
            StackelbergSetting::MultiRoundNoisy => best_response_running_average(&state),
        };
        let (step, agent_payoff, principal_payoff) =
            stackelberg_step(task, t, agent, intervene, logprob);
        if task.setting == StackelbergSetting::MultiRoundNoisy {
            let observed = noisy_payoff_observation(agent_payoff, task.payoff_noise_sigma, rng);
            state = best_response_update(state, agent, observed);
        }
        score += principal_payoff;
        trace.push(step);
    }
    Ok((trace, score))
}
