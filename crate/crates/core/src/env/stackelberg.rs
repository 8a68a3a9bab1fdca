//! The 2×2 Stackelberg matrix game and its equilibrium oracles.
//!
//! Payoffs (agent, principal) for agent type u and intervention cost c:
//!
//! |              | No intervention | Intervene      |
//! |--------------|-----------------|----------------|
//! | Cooperate    | (u, 1)          | (u+1, 1−c)     |
//! | Defect       | (1−u, 0)        | (−u, −c)       |
//!
//! The multi-round oracle reports the minimal intervention probability p at
//! which cooperating weakly dominates in expected experienced payoff, found
//! by brute-force grid search; the closed form (1−2u)/2 is cross-checked
//! against the grid in tests rather than hard-coded.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agents::AgentAction;
use crate::error::{Error, Result};
use crate::rng::SplitRng;

/// Grid step for the multi-round equilibrium search.
const P_GRID_STEPS: usize = 10_000;

/// Observation regime and horizon structure of a matrix-game task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackelbergSetting {
    /// One round; the principal observes u exactly.
    SingleRoundPerfect,
    /// One round; the principal observes u plus Gaussian noise.
    SingleRoundNoisy,
    /// T rounds against a running-average best-responder; noisy observation.
    MultiRoundNoisy,
}

/// One matrix-game agent instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackelbergTask {
    /// Agent type u ∈ (0,1).
    pub u: f64,
    /// Intervention cost, < 1.
    pub c: f64,
    /// Std of the Gaussian noise on the principal's observation of u.
    pub obs_noise_sigma: f64,
    /// Std of the noise on the agent's payoff observations (multi-round).
    pub payoff_noise_sigma: f64,
    pub setting: StackelbergSetting,
    /// Horizon; 1 for single-round settings.
    pub horizon: usize,
}

impl StackelbergTask {
    pub fn new(
        u: f64,
        c: f64,
        obs_noise_sigma: f64,
        setting: StackelbergSetting,
        horizon: usize,
    ) -> Result<Self> {
        if !(0.0 < u && u < 1.0) {
            return Err(Error::config(format!("agent type u must be in (0,1), got {u}")));
        }
        if !(0.0 < c && c < 1.0) {
            return Err(Error::config(format!("intervention cost must be in (0,1), got {c}")));
        }
        if obs_noise_sigma < 0.0 {
            return Err(Error::config("observation noise must be nonnegative".to_string()));
        }
        let single = matches!(
            setting,
            StackelbergSetting::SingleRoundPerfect | StackelbergSetting::SingleRoundNoisy
        );
        if single && horizon != 1 {
            return Err(Error::config("single-round settings require horizon 1".to_string()));
        }
        if !single && horizon < 2 {
            return Err(Error::config("multi-round setting requires horizon ≥ 2".to_string()));
        }
        Ok(StackelbergTask {
            u,
            c,
            obs_noise_sigma,
            payoff_noise_sigma: 0.1,
            setting,
            horizon,
        })
    }

    /// Single-round task with perfect observation and the default c = 0.75.
    pub fn single_round_perfect(u: f64) -> Result<Self> {
        Self::new(u, 0.75, 0.0, StackelbergSetting::SingleRoundPerfect, 1)
    }

    /// Single-round task with the default observation noise σ = 0.1.
    pub fn single_round_noisy(u: f64) -> Result<Self> {
        Self::new(u, 0.75, 0.1, StackelbergSetting::SingleRoundNoisy, 1)
    }

    /// Multi-round task with the defaults c = 0.75, obs noise 0.1, T = 100.
    pub fn multi_round(u: f64) -> Result<Self> {
        Self::new(u, 0.75, 0.1, StackelbergSetting::MultiRoundNoisy, 100)
    }
}

/// Matrix payoffs (agent, principal).
pub fn stackelberg_payoffs(
    u: f64,
    c: f64,
    agent: AgentAction,
    intervene: bool,
) -> (f64, f64) {
    match (agent, intervene) {
        (AgentAction::Cooperate, false) => (u, 1.0),
        (AgentAction::Cooperate, true) => (u + 1.0, 1.0 - c),
        (AgentAction::Defect, false) => (1.0 - u, 0.0),
        (AgentAction::Defect, true) => (-u, -c),
    }
}

/// The principal's equilibrium strategy: a pure action in single-round
/// settings, a mixed intervention probability in the multi-round setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PrincipalEquilibrium {
    Pure { intervene: bool },
    Mixed { p_star: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub agent: AgentAction,
    pub principal: PrincipalEquilibrium,
}

/// Equilibrium oracle. Single-round: (C, NI) when u ≥ 1/2, else (C, IN).
/// Multi-round: the minimal grid point p where the cooperating action's
/// expected experienced payoff u + p weakly exceeds defecting's 1 − u − p;
/// the agent cooperates at equilibrium.
pub fn stackelberg_equilibrium_oracle(
    u: f64,
    c: f64,
    setting: StackelbergSetting,
) -> Equilibrium {
    let _ = c; // The matrix's c < 1 makes intervening worthwhile whenever it flips the agent.
    match setting {
        StackelbergSetting::SingleRoundPerfect | StackelbergSetting::SingleRoundNoisy => {
            Equilibrium {
                agent: AgentAction::Cooperate,
                principal: PrincipalEquilibrium::Pure { intervene: u < 0.5 },
            }
        }
        StackelbergSetting::MultiRoundNoisy => {
            let mut p_star = 1.0;
            for k in 0..=P_GRID_STEPS {
                let p = k as f64 / P_GRID_STEPS as f64;
                if u + p >= 1.0 - u - p {
                    p_star = p;
                    break;
                }
            }
            Equilibrium {
                agent: AgentAction::Cooperate,
                principal: PrincipalEquilibrium::Mixed { p_star },
            }
        }
    }
}

/// Principal's observation of the agent type: u + N(0, σ²), unclamped.
pub fn noisy_type_observation(u: f64, obs_noise_sigma: f64, rng: &mut SplitRng) -> f64 {
    if obs_noise_sigma > 0.0 {
        let normal = Normal::new(u, obs_noise_sigma).expect("finite noise std");
        normal.sample(rng)
    } else {
        u
    }
}

/// Agent-side noisy payoff observation used in the multi-round setting.
pub fn noisy_payoff_observation(payoff: f64, sigma: f64, rng: &mut SplitRng) -> f64 {
    if sigma > 0.0 {
        let normal = Normal::new(payoff, sigma).expect("finite noise std");
        normal.sample(rng)
    } else {
        payoff
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payoff_matrix_entries() {
        assert_eq!(stackelberg_payoffs(0.3, 0.75, AgentAction::Cooperate, true), (1.3, 0.25));
        assert_eq!(stackelberg_payoffs(0.3, 0.75, AgentAction::Defect, false), (0.7, 0.0));
        assert_eq!(stackelberg_payoffs(0.9, 0.75, AgentAction::Cooperate, false), (0.9, 1.0));
        assert_eq!(stackelberg_payoffs(0.9, 0.75, AgentAction::Defect, true), (-0.9, -0.75));
    }

    #[test]
    fn principal_payoff_signs() {
        for u in [0.1, 0.5, 0.9] {
            for intervene in [false, true] {
                let (_, pd) = stackelberg_payoffs(u, 0.75, AgentAction::Defect, intervene);
                assert!(pd <= 0.0);
                let (_, pc) = stackelberg_payoffs(u, 0.75, AgentAction::Cooperate, intervene);
                assert!(pc >= 1.0 - 0.75);
            }
        }
    }

    #[test]
    fn single_round_equilibria() {
        let hi = stackelberg_equilibrium_oracle(0.93, 0.75, StackelbergSetting::SingleRoundPerfect);
        assert_eq!(hi.agent, AgentAction::Cooperate);
        assert_eq!(hi.principal, PrincipalEquilibrium::Pure { intervene: false });
        let lo = stackelberg_equilibrium_oracle(0.07, 0.75, StackelbergSetting::SingleRoundPerfect);
        assert_eq!(lo.principal, PrincipalEquilibrium::Pure { intervene: true });
    }

    #[test]
    fn single_round_matches_brute_force_enumeration() {
        // Enumerate the principal's pure commitments; the agent best-responds
        // to each; the principal picks the better outcome for itself.
        let mut rng = SplitRng::new(13);
        for _ in 0..1000 {
            let u: f64 = rand::Rng::random_range(&mut rng, 0.001..0.999);
            let c = 0.75;
            let mut best = (f64::NEG_INFINITY, false);
            for intervene in [false, true] {
                let agent = crate::agents::best_response_single_round(u, intervene);
                let (_, principal) = stackelberg_payoffs(u, c, agent, intervene);
                // Strict improvement only, so ties prefer not intervening.
                if principal > best.0 {
                    best = (principal, intervene);
                }
            }
            let eq = stackelberg_equilibrium_oracle(u, c, StackelbergSetting::SingleRoundPerfect);
            assert_eq!(
                eq.principal,
                PrincipalEquilibrium::Pure { intervene: best.1 },
                "u = {u}"
            );
        }
    }

    #[test]
    fn multi_round_grid_matches_indifference_point() {
        for (u, want) in [(0.21, 0.29), (0.5, 0.0), (0.93, 0.0)] {
            let eq = stackelberg_equilibrium_oracle(u, 0.75, StackelbergSetting::MultiRoundNoisy);
            let PrincipalEquilibrium::Mixed { p_star } = eq.principal else {
                panic!("expected mixed equilibrium");
            };
            assert!((p_star - want).abs() < 1e-9, "u = {u}: got {p_star} want {want}");
        }
    }

    #[test]
    fn multi_round_grid_is_minimal_point() {
        for k in 0..50 {
            let u = 0.01 + 0.19 * (k as f64 / 49.0);
            let eq = stackelberg_equilibrium_oracle(u, 0.75, StackelbergSetting::MultiRoundNoisy);
            let PrincipalEquilibrium::Mixed { p_star } = eq.principal else {
                panic!("expected mixed equilibrium");
            };
            assert!(u + p_star >= 1.0 - u - p_star);
            let prev = p_star - 1.0 / P_GRID_STEPS as f64;
            if prev >= 0.0 {
                assert!(u + prev < 1.0 - u - prev, "u = {u}: {p_star} not minimal");
            }
        }
    }

    #[test]
    fn observation_noise_moments() {
        let mut rng = SplitRng::new(21);
        assert_eq!(noisy_type_observation(0.4, 0.0, &mut rng), 0.4);
        let n = 10_000;
        let sigma = 0.1;
        let xs: Vec<f64> = (0..n).map(|_| noisy_type_observation(0.4, sigma, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.4).abs() < 3.0 * sigma / (n as f64).sqrt());
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        let std = var.sqrt();
        assert!((std - sigma).abs() < 0.05 * sigma, "std {std}");
    }

    #[test]
    fn task_validation() {
        assert!(StackelbergTask::single_round_perfect(0.5).is_ok());
        assert!(StackelbergTask::single_round_perfect(0.0).is_err());
        assert!(StackelbergTask::new(0.5, 1.0, 0.1, StackelbergSetting::SingleRoundPerfect, 1)
            .is_err());
        assert!(StackelbergTask::new(0.5, 0.75, 0.1, StackelbergSetting::MultiRoundNoisy, 1)
            .is_err());
        assert!(StackelbergTask::multi_round(0.3).is_ok());
    }
}
