//! The adaptive learners the principal intervenes on: UCB, ε-greedy, and
//! EXP3 bandit agents, plus single- and multi-round Stackelberg
//! best-responders.
//!
//! All updates are pure state transitions: given the same state and inputs
//! they produce the same next state, so replaying a recorded episode
//! reproduces the final learner state exactly.
//!
//! Conventions shared by the bandit learners:
//! - unpulled arms are tried first, in index order, before the selection
//!   formula applies;
//! - ties break toward the lowest action index;
//! - the step counter `t` is 1-based and counts the current step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::act;
use crate::rng::{sample_categorical, SplitRng};

/// Which learning algorithm an agent runs, with its exploration parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum LearnerSpec {
    Ucb { beta: f64 },
    EpsGreedy { eps: f64 },
    Exp3 { w: f64 },
    BestResponseSingleRound,
    BestResponseRunningAverage,
}

impl LearnerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LearnerSpec::Ucb { beta } if beta <= 0.0 => {
                Err(Error::config(format!("ucb beta must be > 0, got {beta}")))
            }
            LearnerSpec::EpsGreedy { eps } if !(0.0..=1.0).contains(&eps) => {
                Err(Error::config(format!("epsilon must be in [0,1], got {eps}")))
            }
            LearnerSpec::Exp3 { w } if !(w > 0.0 && w <= 1.0) => {
                Err(Error::config(format!("exp3 w must be in (0,1], got {w}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_bandit(&self) -> bool {
        matches!(
            self,
            LearnerSpec::Ucb { .. } | LearnerSpec::EpsGreedy { .. } | LearnerSpec::Exp3 { .. }
        )
    }

    /// Short label for table headers, e.g. `ucb(0.17)`.
    pub fn label(&self) -> String {
        match *self {
            LearnerSpec::Ucb { beta } => format!("ucb({beta})"),
            LearnerSpec::EpsGreedy { eps } => format!("eps({eps})"),
            LearnerSpec::Exp3 { w } => format!("exp3({w})"),
            LearnerSpec::BestResponseSingleRound => "br_single".to_string(),
            LearnerSpec::BestResponseRunningAverage => "br_running".to_string(),
        }
    }
}

/// Mutable learner statistics. One struct covers every algorithm; unused
/// fields stay at their initial values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    /// Per-arm pull counts n_a.
    pub counts: Vec<u64>,
    /// Per-arm running means of experienced rewards.
    pub means: Vec<f64>,
    /// EXP3 cumulative importance-weighted sums S_a.
    pub exp3_s: Vec<f64>,
    /// Current 1-based step; increments on every update.
    pub t: u64,
    /// Stackelberg running-average agent: per-action payoff means (C, D).
    pub br_means: [f64; 2],
    /// Stackelberg running-average agent: per-action observation counts.
    pub br_counts: [u64; 2],
}

impl LearnerState {
    pub fn new(num_arms: usize) -> Self {
        LearnerState {
            counts: vec![0; num_arms],
            means: vec![0.0; num_arms],
            exp3_s: vec![0.0; num_arms],
            t: 1,
            br_means: [0.0; 2],
            br_counts: [0; 2],
        }
    }

    pub fn num_arms(&self) -> usize {
        self.counts.len()
    }

    fn first_unpulled(&self) -> Option<usize> {
        self.counts.iter().position(|&n| n == 0)
    }

    /// Argmax of per-arm means, ties toward the lowest index.
    fn greedy_arm(&self) -> usize {
        argmax_first(&self.means)
    }
}

/// Index of the maximum value, first occurrence on ties.
pub fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// UCB selection: argmax μ̃_a + β√(ln t / n_a), after each arm has been
/// pulled once (unpulled arms are taken in index order).
pub fn ucb_select(state: &LearnerState, beta: f64) -> Result<usize> {
    if state.num_arms() == 0 {
        return Err(Error::config("ucb_select: empty action set".to_string()));
    }
    if let Some(a) = state.first_unpulled() {
        return Ok(a);
    }
    let t = state.t as f64;
    let mut best = 0;
    let mut best_idx = f64::NEG_INFINITY;
    for a in 0..state.num_arms() {
        let bonus = beta * ((t.ln()) / state.counts[a] as f64).sqrt();
        let idx = state.means[a] + bonus;
        if idx > best_idx {
            best_idx = idx;
            best = a;
        }
    }
    Ok(best)
}

/// Incremental-mean update shared by UCB and ε-greedy: folds reward `r`
/// into arm `a`'s running mean and advances the step counter.
pub fn ucb_update(mut state: LearnerState, a: usize, r: f64) -> LearnerState {
    state.counts[a] += 1;
    state.means[a] += (r - state.means[a]) / state.counts[a] as f64;
    state.t += 1;
    state
}

/// ε-greedy selection: uniform random arm with probability ε, otherwise the
/// empirical-best arm. Unpulled arms are initialized first, in index order.
pub fn eps_greedy_select(state: &LearnerState, eps: f64, rng: &mut SplitRng) -> usize {
    if let Some(a) = state.first_unpulled() {
        return a;
    }
    if rng.random::<f64>() < eps {
        rng.random_range(0..state.num_arms())
    } else {
        state.greedy_arm()
    }
}

/// EXP3 action distribution: π(a) = w/|A| + (1−w)·softmax(S)_a.
pub fn exp3_distribution(state: &LearnerState, w: f64) -> Vec<f64> {
    let n = state.num_arms() as f64;
    let soft = act::softmax(&ndarray::Array1::from_vec(state.exp3_s.clone()));
    soft.iter().map(|p| w / n + (1.0 - w) * p).collect()
}

/// Sample from the EXP3 mixture; returns the action and the probability it
/// was drawn with (needed for the importance-weighted update).
pub fn exp3_select(state: &LearnerState, w: f64, rng: &mut SplitRng) -> (usize, f64) {
    let probs = exp3_distribution(state, w);
    let a = sample_categorical(rng, &probs);
    (a, probs[a])
}

/// EXP3 update: S_a ← S_a + r/π_a; other entries unchanged.
pub fn exp3_update(mut state: LearnerState, a: usize, r: f64, pi_a: f64) -> Result<LearnerState> {
    if pi_a <= 0.0 {
        return Err(Error::Invariant(format!(
            "exp3_update: selection probability must be positive, got {pi_a}"
        )));
    }
    state.exp3_s[a] += r / pi_a;
    state.counts[a] += 1;
    state.means[a] += (r - state.means[a]) / state.counts[a] as f64;
    state.t += 1;
    Ok(state)
}

/// Follower actions in the Stackelberg game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentAction {
    Cooperate,
    Defect,
}

/// Single-round best response to an observed principal action, given the
/// agent's type `u`. Under no intervention the agent compares u against
/// 1−u; under intervention cooperation strictly dominates for any u > 0.
/// Ties resolve to Cooperate.
pub fn best_response_single_round(u: f64, principal_intervened: bool) -> AgentAction {
    if principal_intervened {
        // u + 1 ≥ −u for all u > 0.
        AgentAction::Cooperate
    } else if u >= 1.0 - u {
        AgentAction::Cooperate
    } else {
        AgentAction::Defect
    }
}

/// Multi-round agent: best-responds to its per-action payoff running
/// averages, trying each action once first (Cooperate, then Defect).
/// Ties resolve to Cooperate.
pub fn best_response_running_average(state: &LearnerState) -> AgentAction {
    if state.br_counts[0] == 0 {
        return AgentAction::Cooperate;
    }
    if state.br_counts[1] == 0 {
        return AgentAction::Defect;
    }
    if state.br_means[0] >= state.br_means[1] {
        AgentAction::Cooperate
    } else {
        AgentAction::Defect
    }
}

/// Fold an observed payoff into the multi-round agent's running average.
pub fn best_response_update(
    mut state: LearnerState,
    action: AgentAction,
    payoff: f64,
) -> LearnerState {
    let i = match action {
        AgentAction::Cooperate => 0,
        AgentAction::Defect => 1,
    };
    state.br_counts[i] += 1;
    state.br_means[i] += (payoff - state.br_means[i]) / state.br_counts[i] as f64;
    state.t += 1;
    state
}

/// A bandit selection plus the probability it was sampled with (EXP3 only).
#[derive(Debug, Clone, Copy)]
pub struct Selection {
    pub action: usize,
    pub prob: Option<f64>,
}

/// Dispatch selection for any bandit learner.
pub fn bandit_select(
    spec: &LearnerSpec,
    state: &LearnerState,
    rng: &mut SplitRng,
) -> Result<Selection> {
    match *spec {
        LearnerSpec::Ucb { beta } => {
            Ok(Selection { action: ucb_select(state, beta)?, prob: None })
        }
        LearnerSpec::EpsGreedy { eps } => {
            Ok(Selection { action: eps_greedy_select(state, eps, rng), prob: None })
        }
        LearnerSpec::Exp3 { w } => {
            let (action, prob) = exp3_select(state, w, rng);
            Ok(Selection { action, prob: Some(prob) })
        }
        _ => Err(Error::usage("bandit_select: not a bandit learner".to_string())),
    }
}

/// Dispatch update for any bandit learner.
pub fn bandit_update(
    spec: &LearnerSpec,
    state: LearnerState,
    sel: Selection,
    r: f64,
) -> Result<LearnerState> {
    match *spec {
        LearnerSpec::Ucb { .. } | LearnerSpec::EpsGreedy { .. } => {
            Ok(ucb_update(state, sel.action, r))
        }
        LearnerSpec::Exp3 { .. } => {
            let pi = sel.prob.ok_or_else(|| {
                Error::usage("exp3 update requires the selection probability".to_string())
            })?;
            exp3_update(state, sel.action, r, pi)
        }
        _ => Err(Error::usage("bandit_update: not a bandit learner".to_string())),
    }
}
