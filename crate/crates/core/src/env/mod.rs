//! Interaction environments: the costly reward-intervention bandit and the
//! 2×2 Stackelberg matrix game, plus analytic/brute-force oracles and the
//! episode trace record shared by both.

pub mod bandit;
pub mod stackelberg;
pub mod trace;

pub use bandit::{
    apply_intervention, bandit_experience, bandit_step, episode_score, level_index, BanditTask,
    NoiseKind, StepOutcome, INTERVENTION_LEVELS,
};
pub use stackelberg::{
    noisy_type_observation, stackelberg_equilibrium_oracle, stackelberg_payoffs, Equilibrium,
    PrincipalEquilibrium, StackelbergSetting, StackelbergTask,
};
pub use trace::{EpisodeTrace, TraceStep};
