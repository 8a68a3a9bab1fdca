//! Reduced-scale end-to-end training check: pooled REINFORCE on a hard
//! single task must improve its mean score over training on every seed, and
//! the smoothed learning curve must end above where it started.
//!
//! The task's preferred arm carries the second-lowest base reward, so an
//! unintervened or randomly intervening principal scores poorly and the
//! headroom for learning is wide.

use steer_core::agents::LearnerSpec;
use steer_core::env::bandit::BanditTask;
use steer_core::learning::{mermaide_meta_train, TrainConfig};
use steer_core::principal::Conditioning;

fn smoothed(xs: &[f64], window: usize) -> Vec<f64> {
    xs.windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect()
}

#[test]
fn pooled_reinforce_improves_on_a_hard_single_task() {
    let task = BanditTask::new(
        vec![0.79, 0.53, 0.57, 0.93, 0.07, 0.09, 0.02, 0.83, 0.78, 0.87],
        6,
        0.1,
        LearnerSpec::Ucb { beta: 0.17 },
    )
    .unwrap();
    for seed in [7u64, 8, 9] {
        let config = TrainConfig {
            e_train: 150,
            k_train: 0,
            horizon: 50,
            meta_lr: 0.01,
            hidden_dim: 8,
            gru_layers: 1,
            conditioning: Conditioning::PrevOnly,
            parallel: false,
            seed,
            ..TrainConfig::default()
        };
        let result = mermaide_meta_train(&config, std::slice::from_ref(&task)).unwrap();
        let scores: Vec<f64> = result.log.iter().map(|r| r.mean_score).collect();
        assert_eq!(scores.len(), config.e_train);

        let head = scores[..20].iter().sum::<f64>() / 20.0;
        let tail = scores[scores.len() - 20..].iter().sum::<f64>() / 20.0;
        assert!(
            tail > head + 8.0,
            "seed {seed}: no training progress (first-20 mean {head:.2}, last-20 mean {tail:.2})"
        );

        let curve = smoothed(&scores, 10);
        assert!(
            curve.last().unwrap() > curve.first().unwrap(),
            "seed {seed}: smoothed curve did not rise"
        );
    }
}
