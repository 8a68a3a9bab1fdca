//! Seeded bandit task-set generation.
//!
//! Each task draws its own child stream, so inserting or removing tasks
//! never shifts the rewards of the others, and train/test sets built from
//! different seeds are independent by construction.

use rand::Rng;

use steer_core::agents::LearnerSpec;
use steer_core::env::bandit::BanditTask;
use steer_core::error::Result;
use steer_core::rng::SplitRng;

/// Draw `n` tasks: base rewards i.i.d. uniform, redrawn as a whole vector
/// until every entry lies strictly in (0,1) and the maximum is unique; the
/// preferred arm is then uniform among the non-argmax arms.
pub fn generate_task_set(
    seed: u64,
    n: usize,
    num_arms: usize,
    noise_sigma: f64,
    learner: LearnerSpec,
) -> Result<Vec<BanditTask>> {
    let root = SplitRng::new(seed);
    (0..n)
        .map(|i| {
            let mut rng = root.child(i as u64);
            let rewards = loop {
                let v: Vec<f64> = (0..num_arms).map(|_| rng.random::<f64>()).collect();
                if vector_admissible(&v) {
                    break v;
                }
            };
            let best = steer_core::agents::argmax_first(&rewards);
            let offset = rng.random_range(0..num_arms - 1);
            let a_star = if offset >= best { offset + 1 } else { offset };
            BanditTask::new(rewards, a_star, noise_sigma, learner)
        })
        .collect()
}

fn vector_admissible(v: &[f64]) -> bool {
    if v.iter().any(|r| !(0.0 < *r && *r < 1.0)) {
        return false;
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    v.iter().filter(|r| **r == max).count() == 1
}

/// Same tasks, different learning algorithm. Used to evaluate one task set
/// across a grid of agent specs.
pub fn rebind_learner(tasks: &[BanditTask], learner: LearnerSpec) -> Result<Vec<BanditTask>> {
    tasks
        .iter()
        .map(|t| BanditTask::new(t.base_rewards.clone(), t.a_star, t.noise_sigma, learner))
        .collect()
}
