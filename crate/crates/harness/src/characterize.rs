//! Agent characterization: unintervened exploration counts over the β/ε
//! grids, bisection-based β calibration, and the fixed-vector strategy
//! comparisons (per-step selection indicators plus episode scores).

use steer_core::agents::LearnerSpec;
use steer_core::env::bandit::{episode_score, BanditTask};
use steer_core::env::trace::EpisodeTrace;
use steer_core::error::{Error, Result};
use steer_core::learning::{mean_se, rollout_bandit, RolloutConfig};
use steer_core::principal::BanditPrincipal;
use steer_core::rng::SplitRng;

use crate::taskgen::rebind_learner;

pub const UCB_BETA_GRID: [f64; 5] = [0.17, 0.27, 0.42, 0.5, 0.67];
pub const EPS_GRID: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

/// Reference exploration counts (steps of a_t ≠ argmax r out of T = 200)
/// that the two grids were designed to produce, index-aligned with
/// [`UCB_BETA_GRID`] and [`EPS_GRID`].
pub const UCB_EXPLORATION_REFERENCE: [f64; 5] = [33.0, 47.0, 70.0, 80.0, 99.0];
pub const EPS_EXPLORATION_REFERENCE: [f64; 5] = [33.0, 47.0, 68.0, 81.0, 99.0];

pub fn ucb_grid() -> Vec<LearnerSpec> {
    UCB_BETA_GRID.iter().map(|&beta| LearnerSpec::Ucb { beta }).collect()
}

pub fn eps_grid() -> Vec<LearnerSpec> {
    EPS_GRID.iter().map(|&eps| LearnerSpec::EpsGreedy { eps }).collect()
}

/// Steps where the agent picked something other than its default best arm.
pub fn exploration_count(trace: &EpisodeTrace, preferred: usize) -> usize {
    trace.steps.iter().filter(|s| s.agent_action != preferred).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationCell {
    pub learner: LearnerSpec,
    pub mean: f64,
    pub se: f64,
    pub n_seeds: usize,
}

/// Mean (over tasks, then seeds) unintervened exploration count for each
/// learner in the grid; the standard error is over seeds.
pub fn characterize_exploration(
    tasks: &[BanditTask],
    grid: &[LearnerSpec],
    horizon: usize,
    seeds: &[u64],
) -> Result<Vec<ExplorationCell>> {
    if tasks.is_empty() || grid.is_empty() || seeds.is_empty() {
        return Err(Error::usage("characterization needs tasks, a grid, and seeds"));
    }
    let cfg = RolloutConfig::new(horizon, 0.0, 1.0)?;
    let mut cells = Vec::with_capacity(grid.len());
    for (li, learner) in grid.iter().enumerate() {
        let rebound = rebind_learner(tasks, *learner)?;
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut total = 0usize;
            for (ti, task) in rebound.iter().enumerate() {
                let mut rng = SplitRng::new(seed).child2(li as u64, ti as u64);
                let trace = rollout_bandit(task, &BanditPrincipal::NoIntervention, &cfg, &mut rng)?;
                total += exploration_count(&trace, task.agent_best_arm());
            }
            per_seed.push(total as f64 / rebound.len() as f64);
        }
        let (mean, se) = mean_se(&per_seed);
        cells.push(ExplorationCell { learner: *learner, mean, se, n_seeds: seeds.len() });
    }
    Ok(cells)
}

/// Mean exploration count of a single UCB β on the task set.
fn ucb_count(tasks: &[BanditTask], beta: f64, horizon: usize, seeds: &[u64]) -> Result<f64> {
    let cells =
        characterize_exploration(tasks, &[LearnerSpec::Ucb { beta }], horizon, seeds)?;
    Ok(cells[0].mean)
}

/// Fit β so the UCB exploration count matches `target` by bisection; the
/// count is monotone increasing in β. Returns the clamping endpoint when
/// the target is unreachable inside [0.01, 2].
pub fn calibrate_beta(
    tasks: &[BanditTask],
    target: f64,
    horizon: usize,
    seeds: &[u64],
) -> Result<f64> {
    let (mut lo, mut hi) = (0.01_f64, 2.0_f64);
    if ucb_count(tasks, lo, horizon, seeds)? >= target {
        return Ok(lo);
    }
    if ucb_count(tasks, hi, horizon, seeds)? <= target {
        return Ok(hi);
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if ucb_count(tasks, mid, horizon, seeds)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The three published 10-arm base-reward vectors used for the strategy
/// characterization, ordered by reward gap δ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedVector {
    pub name: &'static str,
    pub base_rewards: [f64; 10],
    pub a_star: usize,
}

pub const B3_VECTORS: [PublishedVector; 3] = [
    PublishedVector {
        name: "small_gap",
        base_rewards: [0.16, 0.11, 0.66, 0.14, 0.20, 0.37, 0.82, 0.10, 0.84, 0.10],
        a_star: 6,
    },
    PublishedVector {
        name: "medium_gap",
        base_rewards: [0.32, 0.67, 0.13, 0.72, 0.29, 0.18, 0.59, 0.02, 0.83, 0.01],
        a_star: 6,
    },
    PublishedVector {
        name: "large_gap",
        base_rewards: [0.79, 0.53, 0.57, 0.93, 0.07, 0.09, 0.02, 0.83, 0.78, 0.87],
        a_star: 6,
    },
];

pub fn b3_vector(name: &str) -> Option<&'static PublishedVector> {
    B3_VECTORS.iter().find(|v| v.name == name)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum B3Strategy {
    None,
    S1 { level: f64 },
    S2 { level: f64 },
}

impl B3Strategy {
    pub fn label(self) -> &'static str {
        match self {
            B3Strategy::None => "no_intervention",
            B3Strategy::S1 { .. } => "s1",
            B3Strategy::S2 { .. } => "s2",
        }
    }

    fn principal(self) -> BanditPrincipal {
        match self {
            B3Strategy::None => BanditPrincipal::NoIntervention,
            B3Strategy::S1 { level } => BanditPrincipal::S1 { level },
            B3Strategy::S2 { level } => BanditPrincipal::S2 { level },
        }
    }
}

/// One (vector, β, strategy) cell: per-seed 0/1 selection indicators for a*
/// and for the unintervened preferred arm, plus the mean episode score.
#[derive(Debug, Clone, PartialEq)]
pub struct B3Cell {
    pub vector: &'static str,
    pub beta: f64,
    pub strategy: B3Strategy,
    pub mean_score: f64,
    pub se: f64,
    pub seed_scores: Vec<f64>,
    pub a_star_rows: Vec<Vec<u8>>,
    pub preferred_rows: Vec<Vec<u8>>,
}

impl B3Cell {
    pub fn a_star_count(&self) -> usize {
        self.a_star_rows.iter().flatten().filter(|&&x| x == 1).count()
    }

    pub fn preferred_count(&self) -> usize {
        self.preferred_rows.iter().flatten().filter(|&&x| x == 1).count()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn b3_characterization(
    vector: &PublishedVector,
    betas: &[f64],
    strategies: &[B3Strategy],
    noise_sigma: f64,
    horizon: usize,
    alpha: f64,
    gamma: f64,
    seeds: &[u64],
) -> Result<Vec<B3Cell>> {
    if betas.is_empty() || strategies.is_empty() || seeds.is_empty() {
        return Err(Error::usage("characterization needs betas, strategies, and seeds"));
    }
    let cfg = RolloutConfig::new(horizon, alpha, gamma)?;
    let mut cells = Vec::with_capacity(betas.len() * strategies.len());
    for (bi, &beta) in betas.iter().enumerate() {
        let task = BanditTask::new(
            vector.base_rewards.to_vec(),
            vector.a_star,
            noise_sigma,
            LearnerSpec::Ucb { beta },
        )?;
        let preferred = task.agent_best_arm();
        for (si, &strategy) in strategies.iter().enumerate() {
            let principal = strategy.principal();
            let mut scores = Vec::with_capacity(seeds.len());
            let mut a_star_rows = Vec::with_capacity(seeds.len());
            let mut preferred_rows = Vec::with_capacity(seeds.len());
            for &seed in seeds {
                let mut rng = SplitRng::new(seed).child2(bi as u64, si as u64);
                let trace = rollout_bandit(&task, &principal, &cfg, &mut rng)?;
                scores.push(episode_score(&trace, alpha, gamma));
                a_star_rows.push(
                    trace.steps.iter().map(|s| u8::from(s.agent_action == task.a_star)).collect(),
                );
                preferred_rows.push(
                    trace.steps.iter().map(|s| u8::from(s.agent_action == preferred)).collect(),
                );
            }
            let (mean_score, se) = mean_se(&scores);
            cells.push(B3Cell {
                vector: vector.name,
                beta,
                strategy,
                mean_score,
                se,
                seed_scores: scores,
                a_star_rows,
                preferred_rows,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::generate_task_set;

    fn tasks() -> Vec<BanditTask> {
        generate_task_set(11, 5, 10, 0.0, LearnerSpec::Ucb { beta: 0.17 }).unwrap()
    }

    #[test]
    fn exploration_is_deterministic_and_bounded() {
        let grid = vec![LearnerSpec::Ucb { beta: 0.17 }, LearnerSpec::EpsGreedy { eps: 0.3 }];
        let a = characterize_exploration(&tasks(), &grid, 100, &[0, 1]).unwrap();
        let b = characterize_exploration(&tasks(), &grid, 100, &[0, 1]).unwrap();
        assert_eq!(a, b);
        for cell in &a {
            assert!(cell.mean >= 0.0 && cell.mean <= 100.0);
            assert_eq!(cell.n_seeds, 2);
        }
    }

    #[test]
    fn uniform_exploration_dominates_greedy() {
        let grid = vec![LearnerSpec::EpsGreedy { eps: 0.0 }, LearnerSpec::EpsGreedy { eps: 1.0 }];
        let cells = characterize_exploration(&tasks(), &grid, 200, &[0, 1, 2]).unwrap();
        // ε=1 picks uniformly, so ~90% of 200 steps are off the best arm.
        assert!(cells[1].mean > 150.0, "uniform mean {}", cells[1].mean);
        assert!(cells[0].mean < cells[1].mean);
    }

    #[test]
    fn exploration_grows_with_beta() {
        let low = ucb_count(&tasks(), 0.05, 200, &[0, 1]).unwrap();
        let high = ucb_count(&tasks(), 1.5, 200, &[0, 1]).unwrap();
        assert!(low < high, "low {low}, high {high}");
    }

    #[test]
    fn calibration_hits_the_requested_count() {
        let tasks = tasks();
        let seeds = [0, 1];
        let target = 60.0;
        let beta = calibrate_beta(&tasks, target, 200, &seeds).unwrap();
        let got = ucb_count(&tasks, beta, 200, &seeds).unwrap();
        assert!(
            (got - target).abs() <= 6.0,
            "beta {beta} gives count {got}, wanted {target}"
        );
    }

    #[test]
    fn vectors_have_the_documented_gaps() {
        let gaps: Vec<f64> = B3_VECTORS
            .iter()
            .map(|v| {
                BanditTask::new(
                    v.base_rewards.to_vec(),
                    v.a_star,
                    0.0,
                    LearnerSpec::Ucb { beta: 0.17 },
                )
                .unwrap()
                .reward_gap()
            })
            .collect();
        assert!((gaps[0] - 0.02).abs() < 1e-12);
        assert!((gaps[1] - 0.24).abs() < 1e-12);
        assert!((gaps[2] - 0.91).abs() < 1e-12);
        assert!(b3_vector("large_gap").is_some());
        assert!(b3_vector("unknown").is_none());
    }

    #[test]
    fn b3_cells_have_full_indicator_rows() {
        let cells = b3_characterization(
            &B3_VECTORS[2],
            &[0.17, 0.67],
            &[B3Strategy::None, B3Strategy::S2 { level: 1.0 }],
            0.1,
            50,
            0.2,
            1.0,
            &[0, 1],
        )
        .unwrap();
        assert_eq!(cells.len(), 4);
        for cell in &cells {
            assert_eq!(cell.a_star_rows.len(), 2);
            assert!(cell.a_star_rows.iter().all(|r| r.len() == 50));
            assert!(cell.preferred_rows.iter().all(|r| r.len() == 50));
            assert!(cell.mean_score.is_finite());
        }
    }

    #[test]
    fn small_gap_confusion_dwarfs_large_gap_a_star_selection() {
        // δ = 0.02: the two top arms are nearly indistinguishable under
        // noise, so the unintervened agent still picks a* often; at δ = 0.91
        // it essentially never does.
        let per_episode = |vector| {
            let cells = b3_characterization(
                vector,
                &UCB_BETA_GRID,
                &[B3Strategy::None],
                0.1,
                200,
                0.2,
                1.0,
                &[0, 1, 2],
            )
            .unwrap();
            let episodes = 3 * cells.len();
            cells.iter().map(B3Cell::a_star_count).sum::<usize>() as f64 / episodes as f64
        };
        let small = per_episode(&B3_VECTORS[0]);
        let large = per_episode(&B3_VECTORS[2]);
        assert!(small > 30.0, "small-gap a* per episode {small}");
        assert!(large < 10.0, "large-gap a* per episode {large}");
    }
}
