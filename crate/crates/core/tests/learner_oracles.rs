//! Independent scalar re-evaluation of every bandit learner's selection and
//! update formulas on large batches of random states.

use rand::Rng;

use steer_core::agents::{
    bandit_select, bandit_update, best_response_running_average, best_response_single_round,
    exp3_distribution, AgentAction, LearnerSpec, LearnerState, Selection,
};
use steer_core::rng::SplitRng;

const TRIALS: usize = 1_000;
const TOL: f64 = 1e-12;

fn random_state(rng: &mut SplitRng, num_arms: usize) -> LearnerState {
    let mut s = LearnerState::new(num_arms);
    for a in 0..num_arms {
        s.counts[a] = rng.random_range(1..40);
        s.means[a] = rng.random_range(0.0..1.0);
        s.exp3_s[a] = rng.random_range(-4.0..4.0);
    }
    s.t = s.counts.iter().sum::<u64>() + 1;
    s
}

#[test]
fn ucb_selection_matches_scalar_reevaluation() {
    let mut rng = SplitRng::new(11);
    for trial in 0..TRIALS {
        let num_arms = 2 + trial % 9;
        let s = random_state(&mut rng, num_arms);
        let beta: f64 = rng.random_range(0.05..1.0);

        // Direct argmax over independently recomputed indices; ties (measure
        // zero here) resolve to the lowest arm, matching the convention.
        let t = s.t as f64;
        let mut best = 0usize;
        let mut best_idx = f64::NEG_INFINITY;
        for a in 0..num_arms {
            let idx = s.means[a] + beta * (t.ln() / s.counts[a] as f64).sqrt();
            if idx > best_idx {
                best_idx = idx;
                best = a;
            }
        }

        let got = bandit_select(&LearnerSpec::Ucb { beta }, &s, &mut rng.child(trial as u64))
            .unwrap();
        assert_eq!(got.action, best, "trial {trial}");
        assert!(got.prob.is_none());
    }
}

#[test]
fn ucb_pulls_every_unpulled_arm_first() {
    let mut rng = SplitRng::new(12);
    for trial in 0..TRIALS {
        let num_arms = 2 + trial % 9;
        let mut s = random_state(&mut rng, num_arms);
        let hole = rng.random_range(0..num_arms);
        s.counts[hole] = 0;
        let got = bandit_select(&LearnerSpec::Ucb { beta: 0.17 }, &s, &mut rng.child(trial as u64))
            .unwrap();
        let first_hole = s.counts.iter().position(|&n| n == 0).unwrap();
        assert_eq!(got.action, first_hole);
    }
}

#[test]
fn mean_update_matches_closed_form() {
    let mut rng = SplitRng::new(13);
    for trial in 0..TRIALS {
        let num_arms = 2 + trial % 9;
        let s = random_state(&mut rng, num_arms);
        let a = rng.random_range(0..num_arms);
        let r: f64 = rng.random_range(-1.0..2.0);

        let want_mean = (s.means[a] * s.counts[a] as f64 + r) / (s.counts[a] as f64 + 1.0);
        let next = bandit_update(
            &LearnerSpec::Ucb { beta: 0.17 },
            s.clone(),
            Selection { action: a, prob: None },
            r,
        )
        .unwrap();
        assert!((next.means[a] - want_mean).abs() < TOL, "trial {trial}");
        assert_eq!(next.counts[a], s.counts[a] + 1);
        assert_eq!(next.t, s.t + 1);
        for other in (0..num_arms).filter(|&x| x != a) {
            assert_eq!(next.means[other], s.means[other]);
            assert_eq!(next.counts[other], s.counts[other]);
        }
    }
}

#[test]
fn eps_greedy_selection_matches_scalar_reevaluation() {
    let mut rng = SplitRng::new(14);
    for trial in 0..TRIALS {
        let num_arms = 2 + trial % 9;
        let s = random_state(&mut rng, num_arms);
        let eps: f64 = rng.random_range(0.0..1.0);

        // Replay the same stream through an independent decision procedure.
        let mut oracle_rng = rng.child(trial as u64);
        let want = if oracle_rng.random::<f64>() < eps {
            oracle_rng.random_range(0..num_arms)
        } else {
            let mut best = 0;
            for a in 1..num_arms {
                if s.means[a] > s.means[best] {
                    best = a;
                }
            }
            best
        };

        let got = bandit_select(
            &LearnerSpec::EpsGreedy { eps },
            &s,
            &mut rng.child(trial as u64),
        )
        .unwrap();
        assert_eq!(got.action, want, "trial {trial}");
    }
}

#[test]
fn exp3_distribution_matches_scalar_reevaluation() {
    let mut rng = SplitRng::new(15);
    for trial in 0..TRIALS {
        let num_arms = 2 + trial % 9;
        let s = random_state(&mut rng, num_arms);
        let w: f64 = rng.random_range(0.01..1.0);

        let probs = exp3_distribution(&s, w);
        // Stabilized softmax recomputed from scratch.
        let m = s.exp3_s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = s.exp3_s.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        for a in 0..num_arms {
            let want = w / num_arms as f64 + (1.0 - w) * exps[a] / z;
            assert!((probs[a] - want).abs() < TOL, "trial {trial} arm {a}");
        }
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn exp3_update_matches_scalar_reevaluation() {
    let mut rng = SplitRng::new(16);
    for trial in 0..TRIALS {
        let num_arms = 2 + trial % 9;
        let s = random_state(&mut rng, num_arms);
        let a = rng.random_range(0..num_arms);
        let r: f64 = rng.random_range(-1.0..2.0);
        let pi: f64 = rng.random_range(0.01..1.0);

        let next = bandit_update(
            &LearnerSpec::Exp3 { w: 0.1 },
            s.clone(),
            Selection { action: a, prob: Some(pi) },
            r,
        )
        .unwrap();
        assert!((next.exp3_s[a] - (s.exp3_s[a] + r / pi)).abs() < TOL, "trial {trial}");
        for other in (0..num_arms).filter(|&x| x != a) {
            assert_eq!(next.exp3_s[other], s.exp3_s[other]);
        }
        assert_eq!(next.t, s.t + 1);
    }
}

#[test]
fn single_round_best_response_matches_payoff_comparison() {
    let mut rng = SplitRng::new(17);
    for _ in 0..TRIALS {
        let u: f64 = rng.random_range(0.001..0.999);
        for intervene in [false, true] {
            let (coop, _) =
                steer_core::env::stackelberg::stackelberg_payoffs(u, 0.75, AgentAction::Cooperate, intervene);
            let (defect, _) =
                steer_core::env::stackelberg::stackelberg_payoffs(u, 0.75, AgentAction::Defect, intervene);
            let want = if coop >= defect { AgentAction::Cooperate } else { AgentAction::Defect };
            assert_eq!(best_response_single_round(u, intervene), want, "u = {u}");
        }
    }
}

#[test]
fn running_average_best_response_matches_mean_comparison() {
    let mut rng = SplitRng::new(18);
    for _ in 0..TRIALS {
        let mut s = LearnerState::new(2);
        s.br_counts = [rng.random_range(1..20), rng.random_range(1..20)];
        s.br_means = [rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0)];
        let want = if s.br_means[0] >= s.br_means[1] {
            AgentAction::Cooperate
        } else {
            AgentAction::Defect
        };
        assert_eq!(best_response_running_average(&s), want);
    }
}
