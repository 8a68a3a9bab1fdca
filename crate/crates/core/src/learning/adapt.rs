//! Test-time K-shot adaptation: K single-episode REINFORCE updates of the
//! policy against a fresh copy of the test agent. The world model stays
//! frozen throughout; K=0 returns the input parameters untouched.

use crate::env::bandit::BanditTask;
use crate::env::stackelberg::StackelbergTask;
use crate::env::trace::EpisodeTrace;
use crate::error::Result;
use crate::nn::TapeBindings;
use crate::principal::{InterventionPolicy, StackelbergPolicy, WorldModel};
use crate::rng::SplitRng;
use crate::tape::Tape;

use super::reinforce::{reinforce_update, EmaBaseline, TapedEpisodes};
use super::sampler::{rollout_bandit_tape, rollout_stackelberg_tape, RolloutConfig};

/// Adapted policy plus the K adaptation traces (in order).
#[derive(Debug, Clone)]
pub struct AdaptResult {
    pub policy: InterventionPolicy,
    pub traces: Vec<EpisodeTrace>,
}

pub fn k_shot_adapt(
    policy: &InterventionPolicy,
    world_model: Option<&WorldModel>,
    task: &BanditTask,
    k: usize,
    inner_lr: f64,
    cfg: &RolloutConfig,
    baseline_decay: f64,
    rng: &mut SplitRng,
) -> Result<AdaptResult> {
    let mut adapted = policy.clone();
    let mut baseline = EmaBaseline::new(baseline_decay);
    let mut traces = Vec::with_capacity(k);
    for shot in 0..k {
        let mut tape = Tape::new();
        let bindings = TapeBindings::leaves(&mut tape, &adapted.params)?;
        let episode = rollout_bandit_tape(
            &mut tape,
            &bindings,
            &adapted,
            world_model,
            task,
            cfg,
            &mut rng.child(shot as u64),
        )?;
        traces.push(episode.trace.clone());
        let mut batch = TapedEpisodes { tape, bindings, episodes: vec![episode] };
        adapted.params =
            reinforce_update(&adapted.params, &mut batch, inner_lr, cfg.gamma, &mut baseline)?;
    }
    Ok(AdaptResult { policy: adapted, traces })
}

/// Matrix-game counterpart of [`k_shot_adapt`]. The caller supplies the
/// baseline state: a fresh one zeroes the advantage of a lone single-round
/// episode, so resuming the training baseline keeps one-shot updates live.
pub fn stackelberg_k_shot_adapt(
    policy: &StackelbergPolicy,
    task: &StackelbergTask,
    k: usize,
    inner_lr: f64,
    gamma: f64,
    baseline: &mut EmaBaseline,
    rng: &mut SplitRng,
) -> Result<StackelbergPolicy> {
    let mut adapted = policy.clone();
    for shot in 0..k {
        let mut tape = Tape::new();
        let bindings = TapeBindings::leaves(&mut tape, &adapted.params)?;
        let episode = rollout_stackelberg_tape(
            &mut tape,
            &bindings,
            &adapted,
            task,
            &mut rng.child(shot as u64),
        )?;
        let mut batch = TapedEpisodes { tape, bindings, episodes: vec![episode] };
        adapted.params = reinforce_update(&adapted.params, &mut batch, inner_lr, gamma, baseline)?;
    }
    Ok(adapted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::LearnerSpec;
    use crate::principal::Conditioning;

    fn setup() -> (BanditTask, InterventionPolicy, WorldModel, RolloutConfig) {
        let mut rng = SplitRng::new(5);
        let task = BanditTask::new(
            vec![0.2, 0.8, 0.4, 0.6],
            0,
            0.1,
            LearnerSpec::Ucb { beta: 0.17 },
        )
        .unwrap();
        let policy = InterventionPolicy::new(4, Conditioning::Full, 8, 2, &mut rng);
        let wm = WorldModel::new(4, 8, 1, &mut rng.child(1));
        let cfg = RolloutConfig::new(40, 0.2, 1.0).unwrap();
        (task, policy, wm, cfg)
    }

    #[test]
    fn zero_shots_return_identical_parameters() {
        let (task, policy, wm, cfg) = setup();
        let got = k_shot_adapt(
            &policy,
            Some(&wm),
            &task,
            0,
            7e-4,
            &cfg,
            0.9,
            &mut SplitRng::new(9),
        )
        .unwrap();
        assert_eq!(got.policy.params.checksum(), policy.params.checksum());
        assert!(got.traces.is_empty());
    }

    #[test]
    fn world_model_is_never_mutated() {
        let (task, policy, wm, cfg) = setup();
        let before = wm.params.checksum();
        for k in [1, 3] {
            let _ = k_shot_adapt(
                &policy,
                Some(&wm),
                &task,
                k,
                7e-4,
                &cfg,
                0.9,
                &mut SplitRng::new(10 + k as u64),
            )
            .unwrap();
            assert_eq!(wm.params.checksum(), before);
        }
    }

    #[test]
    fn adaptation_spends_exactly_k_episodes_of_steps() {
        let (task, policy, wm, cfg) = setup();
        for k in [1, 2, 4] {
            let got = k_shot_adapt(
                &policy,
                Some(&wm),
                &task,
                k,
                7e-4,
                &cfg,
                0.9,
                &mut SplitRng::new(20),
            )
            .unwrap();
            let steps: usize = got.traces.iter().map(|t| t.len()).sum();
            assert_eq!(steps, k * cfg.horizon);
            assert_ne!(got.policy.params.checksum(), policy.params.checksum());
        }
    }

    #[test]
    fn single_round_adaptation_needs_a_resumed_baseline() {
        // One single-round episode is one return; a burn-in baseline centers
        // its advantage to exactly zero, so the update is the identity.
        let policy = StackelbergPolicy::new(8, &mut SplitRng::new(3));
        let task = crate::env::stackelberg::StackelbergTask::single_round_perfect(0.3).unwrap();
        let mut fresh = EmaBaseline::new(0.9);
        let same = stackelberg_k_shot_adapt(
            &policy, &task, 1, 0.01, 1.0, &mut fresh, &mut SplitRng::new(4),
        )
        .unwrap();
        assert_eq!(same.params.checksum(), policy.params.checksum());

        let mut resumed = EmaBaseline::resume(0.9, 0.5);
        let moved = stackelberg_k_shot_adapt(
            &policy, &task, 1, 0.01, 1.0, &mut resumed, &mut SplitRng::new(4),
        )
        .unwrap();
        assert_ne!(moved.params.checksum(), policy.params.checksum());
    }

    #[test]
    fn adaptation_is_reproducible() {
        let (task, policy, wm, cfg) = setup();
        let run = |seed| {
            k_shot_adapt(&policy, Some(&wm), &task, 2, 7e-4, &cfg, 0.9, &mut SplitRng::new(seed))
                .unwrap()
                .policy
                .params
                .checksum()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }
}
