//! The costly reward-intervention bandit environment.
//!
//! Each step the principal picks an intervention level r' ∈ {0, 0.5, 1}.
//! The agent's base rewards are shifted — up by r' on the principal's
//! preferred arm a*, down by r' everywhere else — so the agent always
//! experiences the intervention regardless of which arm it pulls. The
//! principal earns 1 when the agent plays a* and pays c_t = |r'|.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agents::{self, LearnerSpec, LearnerState, Selection};
use crate::env::trace::EpisodeTrace;
use crate::error::{Error, Result};
use crate::rng::SplitRng;

/// The three intervention levels available to the bandit principal.
pub const INTERVENTION_LEVELS: [f64; 3] = [0.0, 0.5, 1.0];

/// Index of a level within [`INTERVENTION_LEVELS`].
pub fn level_index(level: f64) -> Result<usize> {
    INTERVENTION_LEVELS
        .iter()
        .position(|l| *l == level)
        .ok_or_else(|| Error::config(format!("intervention level {level} not in {INTERVENTION_LEVELS:?}")))
}

/// How to read the `noise_sigma` field of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `noise_sigma` is the variance σ² of the reward noise.
    #[default]
    Variance,
    /// `noise_sigma` is the standard deviation σ.
    StdDev,
}

/// One bandit agent instance: base rewards, the principal's preferred arm,
/// reward noise, and the learning algorithm the agent runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditTask {
    pub base_rewards: Vec<f64>,
    pub a_star: usize,
    pub noise_sigma: f64,
    #[serde(default)]
    pub noise_kind: NoiseKind,
    pub learner: LearnerSpec,
}

impl BanditTask {
    /// Construct and validate. Requires rewards in (0,1) with a unique
    /// maximum, and a preferred arm that conflicts with the agent's default.
    pub fn new(
        base_rewards: Vec<f64>,
        a_star: usize,
        noise_sigma: f64,
        learner: LearnerSpec,
    ) -> Result<Self> {
        let task = Self::new_allowing_aligned(base_rewards, a_star, noise_sigma, learner)?;
        if task.a_star == task.agent_best_arm() {
            return Err(Error::config(
                "preferred arm coincides with the agent's best arm; \
                 use new_allowing_aligned to permit this"
                    .to_string(),
            ));
        }
        Ok(task)
    }

    /// As [`BanditTask::new`] but permitting a* = argmax r.
    pub fn new_allowing_aligned(
        base_rewards: Vec<f64>,
        a_star: usize,
        noise_sigma: f64,
        learner: LearnerSpec,
    ) -> Result<Self> {
        if base_rewards.len() < 2 {
            return Err(Error::config("bandit task needs at least 2 arms".to_string()));
        }
        if base_rewards.iter().any(|r| !(0.0 < *r && *r < 1.0)) {
            return Err(Error::config("base rewards must lie in (0,1)".to_string()));
        }
        let max = base_rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if base_rewards.iter().filter(|r| **r == max).count() != 1 {
            return Err(Error::config("base rewards must have a unique maximum".to_string()));
        }
        if a_star >= base_rewards.len() {
            return Err(Error::config(format!(
                "preferred arm {a_star} out of range for {} arms",
                base_rewards.len()
            )));
        }
        if noise_sigma < 0.0 {
            return Err(Error::config("noise sigma must be nonnegative".to_string()));
        }
        learner.validate()?;
        Ok(BanditTask {
            base_rewards,
            a_star,
            noise_sigma,
            noise_kind: NoiseKind::default(),
            learner,
        })
    }

    pub fn num_arms(&self) -> usize {
        self.base_rewards.len()
    }

    /// Arm the unintervened agent prefers: argmax of base rewards.
    pub fn agent_best_arm(&self) -> usize {
        agents::argmax_first(&self.base_rewards)
    }

    /// Reward gap δ = max_a r[a] − r[a*]; ≥ 0.
    pub fn reward_gap(&self) -> f64 {
        self.base_rewards[self.agent_best_arm()] - self.base_rewards[self.a_star]
    }

    /// Standard deviation of the reward noise under this task's convention.
    pub fn noise_std(&self) -> f64 {
        match self.noise_kind {
            NoiseKind::Variance => self.noise_sigma.sqrt(),
            NoiseKind::StdDev => self.noise_sigma,
        }
    }

    pub fn fresh_learner_state(&self) -> LearnerState {
        LearnerState::new(self.num_arms())
    }
}

/// Shift rewards by the intervention: r̃[a*] = r[a*] + r', r̃[a] = r[a] − r'
/// for a ≠ a*. Outputs are not clamped.
pub fn apply_intervention(r: &[f64], a_star: usize, level: f64) -> Result<Vec<f64>> {
    if !INTERVENTION_LEVELS.contains(&level) {
        return Err(Error::config(format!(
            "intervention level {level} not in {INTERVENTION_LEVELS:?}"
        )));
    }
    if a_star >= r.len() {
        return Err(Error::config(format!(
            "preferred arm {a_star} out of range for {} arms",
            r.len()
        )));
    }
    Ok(r.iter()
        .enumerate()
        .map(|(a, &x)| if a == a_star { x + level } else { x - level })
        .collect())
}

/// What the principal observes from one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub action: usize,
    pub agent_reward: f64,
    /// 1 if the agent played a*, else 0.
    pub principal_reward: f64,
    /// |r'|.
    pub cost: f64,
}

/// Complete one step given an already-made selection: apply the
/// intervention, sample the agent's reward around the intervened mean of
/// the chosen arm, update the learner, and settle the principal's reward
/// and cost. Split out from [`bandit_step`] because oracle baselines choose
/// their intervention after seeing the agent's selection (which never
/// depends on the current step's intervention).
pub fn bandit_experience(
    task: &BanditTask,
    state: LearnerState,
    sel: Selection,
    level: f64,
    rng: &mut SplitRng,
) -> Result<(StepOutcome, LearnerState)> {
    let intervened = apply_intervention(&task.base_rewards, task.a_star, level)?;
    let mean = intervened[sel.action];
    let std = task.noise_std();
    let reward = if std > 0.0 {
        let normal = Normal::new(mean, std)
            .map_err(|e| Error::config(format!("reward noise: {e}")))?;
        normal.sample(rng)
    } else {
        mean
    };
    let next = agents::bandit_update(&task.learner, state, sel, reward)?;
    let outcome = StepOutcome {
        action: sel.action,
        agent_reward: reward,
        principal_reward: if sel.action == task.a_star { 1.0 } else { 0.0 },
        cost: level.abs(),
    };
    Ok((outcome, next))
}

/// One full environment step: the agent selects per its learner, then
/// experiences the intervened reward.
pub fn bandit_step(
    task: &BanditTask,
    state: LearnerState,
    level: f64,
    rng: &mut SplitRng,
) -> Result<(StepOutcome, LearnerState)> {
    let sel = agents::bandit_select(&task.learner, &state, rng)?;
    bandit_experience(task, state, sel, level, rng)
}

/// Discounted cost-adjusted return Σ γ^(t−1) (r^p_t − α c_t).
pub fn episode_score(trace: &EpisodeTrace, alpha: f64, gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for step in &trace.steps {
        total += discount * (step.principal_reward - alpha * step.cost);
        discount *= gamma;
    }
    total
}
