//! Sequential vs data-parallel episode batches.
//!
//! Measures a realistic training-shaped workload: a batch of independent
//! bandit rollouts under a learned policy, mapped with `exec::map_indexed`
//! over both execution paths.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use steer_core::agents::LearnerSpec;
use steer_core::env::bandit::{episode_score, BanditTask};
use steer_core::learning::{rollout_bandit, RolloutConfig};
use steer_core::principal::{BanditPrincipal, Conditioning, InterventionPolicy, WorldModel};
use steer_core::rng::SplitRng;
use steer_core::{exec, Result};

fn setup() -> Result<(Vec<BanditTask>, BanditPrincipal, RolloutConfig)> {
    let mut rng = SplitRng::new(17);
    let tasks: Vec<BanditTask> = (0..16)
        .map(|i| {
            let mut rewards: Vec<f64> = (0..10).map(|a| 0.2 + 0.05 * (a as f64)).collect();
            rewards[i % 10] = 0.8;
            let a_star = (i % 10 + 5) % 10;
            BanditTask::new_allowing_aligned(rewards, a_star, 0.1, LearnerSpec::Ucb { beta: 0.17 })
        })
        .collect::<Result<_>>()?;
    let policy = InterventionPolicy::new(10, Conditioning::Full, 32, 2, &mut rng);
    let wm = WorldModel::new(10, 32, 2, &mut rng.child(1));
    let principal = BanditPrincipal::Learned { policy, world_model: Some(wm) };
    let cfg = RolloutConfig::new(200, 0.2, 1.0)?;
    Ok((tasks, principal, cfg))
}

fn episode_batch(c: &mut Criterion) {
    let (tasks, principal, cfg) = setup().expect("bench setup");
    let mut group = c.benchmark_group("episode_batch");
    group.sample_size(10);
    for parallel in [false, true] {
        let name = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(name), &parallel, |b, &parallel| {
            b.iter(|| {
                let scores = exec::map_indexed(parallel, &tasks, |i, task| {
                    let mut rng = SplitRng::new(1000 + i as u64);
                    let trace = rollout_bandit(task, &principal, &cfg, &mut rng)
                        .expect("bench rollout");
                    episode_score(&trace, cfg.alpha, cfg.gamma)
                });
                black_box(scores.iter().sum::<f64>())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, episode_batch);
criterion_main!(benches);
