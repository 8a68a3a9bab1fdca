//! Evaluation episodes: one rollout per seed against a fresh agent copy,
//! reported as mean episode score with its standard error.

use crate::env::bandit::{episode_score, BanditTask};
use crate::env::trace::EpisodeTrace;
use crate::error::{Error, Result};
use crate::principal::BanditPrincipal;
use crate::rng::SplitRng;

use super::sampler::{rollout_bandit, RolloutConfig};

#[derive(Debug, Clone)]
pub struct EvalResult {
    pub mean: f64,
    pub se: f64,
    pub scores: Vec<f64>,
    pub traces: Vec<EpisodeTrace>,
}

/// Sample mean and standard error (sample std over √n; 0 for n < 2).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn evaluate(
    principal: &BanditPrincipal,
    task: &BanditTask,
    cfg: &RolloutConfig,
    seeds: &[u64],
) -> Result<EvalResult> {
    if seeds.is_empty() {
        return Err(Error::usage("evaluation needs at least one seed"));
    }
    let mut scores = Vec::with_capacity(seeds.len());
    let mut traces = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let trace = rollout_bandit(task, principal, cfg, &mut SplitRng::new(seed))?;
        scores.push(episode_score(&trace, cfg.alpha, cfg.gamma));
        traces.push(trace);
    }
    let (mean, se) = mean_se(&scores);
    Ok(EvalResult { mean, se, scores, traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::LearnerSpec;

    fn task() -> BanditTask {
        BanditTask::new(
            vec![0.35, 0.8, 0.4, 0.6, 0.3],
            0,
            0.1,
            LearnerSpec::Ucb { beta: 0.17 },
        )
        .unwrap()
    }

    #[test]
    fn identical_seed_gives_identical_score() {
        let cfg = RolloutConfig::new(100, 0.2, 1.0).unwrap();
        let a = evaluate(&BanditPrincipal::NoIntervention, &task(), &cfg, &[42]).unwrap();
        let b = evaluate(&BanditPrincipal::NoIntervention, &task(), &cfg, &[42]).unwrap();
        assert_eq!(a.scores, b.scores);
        assert_eq!(a.se, 0.0);
    }

    #[test]
    fn alpha_linearity_per_trace() {
        let cfg0 = RolloutConfig::new(80, 0.0, 1.0).unwrap();
        let cfg2 = RolloutConfig::new(80, 0.2, 1.0).unwrap();
        let principal = BanditPrincipal::S2 { level: 1.0 };
        let t = task();
        for seed in [1u64, 2, 3] {
            let a = evaluate(&principal, &t, &cfg0, &[seed]).unwrap();
            let b = evaluate(&principal, &t, &cfg2, &[seed]).unwrap();
            let cost = b.traces[0].total_cost();
            assert!((a.scores[0] - b.scores[0] - 0.2 * cost).abs() < 1e-9);
        }
    }

    #[test]
    fn score_decomposes_into_alignment_minus_cost_at_gamma_one() {
        let cfg = RolloutConfig::new(60, 0.2, 1.0).unwrap();
        let principal = BanditPrincipal::S1 { level: 0.5 };
        let t = task();
        let r = evaluate(&principal, &t, &cfg, &[5, 6]).unwrap();
        for (score, trace) in r.scores.iter().zip(&r.traces) {
            let want = trace.aligned_steps() as f64 - 0.2 * trace.total_cost();
            assert!((score - want).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_and_se_match_hand_computation() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-12);
        let var = (2.25 + 0.25 + 0.25 + 2.25) / 3.0;
        assert!((se - (var / 4.0_f64).sqrt()).abs() < 1e-12);
    }
}
