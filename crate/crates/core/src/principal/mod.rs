//! Principal-side models and policies: the recurrent world model that
//! predicts agent actions, the recurrent bandit intervention policy, the
//! MLP matrix-game policy, and the fixed/oracle baseline rules.

pub mod policy;
pub mod rules;
pub mod world_model;

pub use policy::{
    oracle_policy_act, policy_act, stackelberg_act, stackelberg_logprob_tape, Conditioning,
    InterventionPolicy, PolicyDecision, PolicyInputs, PolicySession, PolicyTapeSession,
    StackelbergPolicy,
};
pub use rules::{rule_rb, rule_s1, rule_s2};
pub use world_model::{wm_predict, WmSession, WorldModel};

use crate::error::{Error, Result};

/// A complete bandit-side principal: what decides the intervention level at
/// each step of a rollout.
#[derive(Debug, Clone)]
pub enum BanditPrincipal {
    /// Always level 0.
    NoIntervention,
    /// Fixed level once every 10 steps.
    S1 { level: f64 },
    /// Fixed level for the first 20 steps.
    S2 { level: f64 },
    /// Oracle rule: fixed level whenever the agent's (true) next action
    /// differs from a*.
    Rb { level: f64 },
    /// Learned recurrent policy, optionally backed by a world model.
    Learned { policy: InterventionPolicy, world_model: Option<WorldModel> },
}

impl BanditPrincipal {
    /// Whether this principal observes the agent's realized action for the
    /// current step before choosing its intervention (oracle privilege).
    pub fn wants_agent_first(&self) -> bool {
        match self {
            BanditPrincipal::Rb { .. } => true,
            BanditPrincipal::Learned { policy, .. } => {
                policy.conditioning == Conditioning::TrueActionOnly
            }
            _ => false,
        }
    }

    /// Validate internal consistency (e.g. a conditioning that consumes
    /// world-model predictions requires a world model).
    pub fn validate(&self, num_arms: usize) -> Result<()> {
        match self {
            BanditPrincipal::S1 { level }
            | BanditPrincipal::S2 { level }
            | BanditPrincipal::Rb { level } => {
                crate::env::bandit::level_index(*level).map(|_| ())
            }
            BanditPrincipal::Learned { policy, world_model } => {
                policy.validate(num_arms)?;
                let needs_wm = matches!(
                    policy.conditioning,
                    Conditioning::Full | Conditioning::PredictedOnly
                );
                match (needs_wm, world_model) {
                    (true, None) => Err(Error::config(
                        "policy conditioning consumes predictions but no world model given"
                            .to_string(),
                    )),
                    (_, Some(wm)) => wm.validate(num_arms),
                    (false, None) => Ok(()),
                }
            }
            BanditPrincipal::NoIntervention => Ok(()),
        }
    }
}
