//! Meta-training of the intervention policy.
//!
//! Each epoch: (1) the world model takes one training round on data
//! accumulated in earlier epochs; (2) each task adapts a copy of the meta
//! parameters with `k_train` inner REINFORCE steps built on the tape, then
//! rolls out under the adapted parameters; (3) a single numeric backward
//! pass per task differentiates the post-adaptation surrogate through the
//! inner updates, and the averaged gradient drives one Adam meta-step.
//! With `k_train = 0` the inner loop vanishes and this is plain pooled
//! REINFORCE, which is exactly the RL baseline configuration.

use serde::{Deserialize, Serialize};

use crate::env::bandit::BanditTask;
use crate::env::stackelberg::StackelbergTask;
use crate::env::trace::EpisodeTrace;
use crate::error::{Error, Result};
use crate::exec;
use crate::nn::TapeBindings;
use crate::optim::Adam;
use crate::params::ParamVector;
use crate::principal::{Conditioning, InterventionPolicy, StackelbergPolicy, WorldModel};
use crate::rng::SplitRng;
use crate::tape::{NodeId, Tape};

use super::evaluate::mean_se;
use super::reinforce::{reinforce_surrogate, EmaBaseline};
use super::sampler::{
    rollout_bandit_tape, rollout_stackelberg_tape, RolloutConfig, SampledEpisode,
};
use super::wm_train::WmTrainer;

/// Everything a training run needs beyond the task set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Meta-epochs.
    pub e_train: usize,
    /// Number of training tasks (used where tasks are generated, e.g. the
    /// matrix game's per-epoch type draws).
    pub n_train: usize,
    /// Inner REINFORCE updates per task per epoch; 0 disables adaptation.
    pub k_train: usize,
    pub inner_lr: f64,
    pub meta_lr: f64,
    pub wm_lr: f64,
    pub episodes_per_inner_update: usize,
    /// Episode horizon T.
    pub horizon: usize,
    /// Cost weight in the principal's utility.
    pub alpha: f64,
    pub gamma: f64,
    pub seed: u64,
    pub hidden_dim: usize,
    pub gru_layers: usize,
    pub conditioning: Conditioning,
    pub baseline_decay: f64,
    /// Detach inner gradients (first-order approximation).
    pub first_order: bool,
    pub wm_hidden_dim: usize,
    pub wm_layers: usize,
    pub wm_minibatch: usize,
    /// Episodes sampled from the replay buffer per world-model round.
    pub wm_episodes_per_epoch: usize,
    pub replay_cap: usize,
    pub parallel: bool,
    /// Where to drop a parameter checkpoint if training aborts on a
    /// non-finite gradient.
    pub abort_checkpoint_dir: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            e_train: 500,
            n_train: 15,
            k_train: 1,
            inner_lr: 7e-4,
            meta_lr: 1e-3,
            wm_lr: 1e-3,
            episodes_per_inner_update: 1,
            horizon: 200,
            alpha: 0.2,
            gamma: 1.0,
            seed: 0,
            hidden_dim: 32,
            gru_layers: 2,
            conditioning: Conditioning::Full,
            baseline_decay: 0.9,
            first_order: false,
            wm_hidden_dim: 32,
            wm_layers: 2,
            wm_minibatch: 8,
            wm_episodes_per_epoch: 32,
            replay_cap: 10_000,
            parallel: true,
            abort_checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, lr) in
            [("inner_lr", self.inner_lr), ("meta_lr", self.meta_lr), ("wm_lr", self.wm_lr)]
        {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {lr}")));
            }
        }
        if self.episodes_per_inner_update == 0 {
            return Err(Error::config("episodes_per_inner_update must be positive"));
        }
        if self.e_train == 0 || self.n_train == 0 {
            return Err(Error::config("e_train and n_train must be positive"));
        }
        if self.hidden_dim == 0 || self.gru_layers == 0 || self.wm_hidden_dim == 0 {
            return Err(Error::config("network dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(Error::config("baseline_decay must lie in [0,1)"));
        }
        self.rollout().validate()
    }

    pub fn rollout(&self) -> RolloutConfig {
        RolloutConfig { horizon: self.horizon, alpha: self.alpha, gamma: self.gamma }
    }
}

/// One epoch's post-adaptation rollouts, one entry per task. Every trace
/// here was generated under that task's adapted parameters, never the meta
/// parameters (unless `k_train = 0`, where the two coincide).
#[derive(Debug, Clone, Default)]
pub struct MetaBatch {
    pub tasks: Vec<MetaTaskRollouts>,
}

#[derive(Debug, Clone)]
pub struct MetaTaskRollouts {
    pub task_index: usize,
    pub traces: Vec<EpisodeTrace>,
    pub mean_score: f64,
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub mean_score: f64,
    pub se: f64,
    pub wm_nll: Option<f64>,
}

pub const TRAINING_LOG_HEADER: &str = "epoch,mean_score,se,wm_nll";

pub fn training_log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from(TRAINING_LOG_HEADER);
    out.push('\n');
    for r in rows {
        let nll = r.wm_nll.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.mean_score, r.se, nll));
    }
    out
}

struct TaskOutcome {
    grad: ParamVector,
    inner_traces: Vec<EpisodeTrace>,
    meta_traces: Vec<EpisodeTrace>,
    mean_score: f64,
}

/// Adapt one task on a fresh tape and return the meta gradient.
///
/// The inner updates are emitted as tape nodes, so the final numeric
/// backward pass differentiates through them; `first_order` snapshots the
/// inner gradients into constants, cutting that path.
fn adapt_and_meta_grad<F>(
    params: &ParamVector,
    k: usize,
    inner_lr: f64,
    episodes_per_update: usize,
    gamma: f64,
    baseline: Option<f64>,
    first_order: bool,
    mut sample: F,
    rng: &SplitRng,
) -> Result<TaskOutcome>
where
    F: FnMut(&mut Tape, &TapeBindings, &mut SplitRng) -> Result<SampledEpisode>,
{
    let mut tape = Tape::new();
    let mut current = TapeBindings::leaves(&mut tape, params)?;
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut inner_traces = Vec::new();

    let sample_batch = |tape: &mut Tape,
                            bindings: &TapeBindings,
                            label: u64,
                            sample: &mut F|
     -> Result<Vec<SampledEpisode>> {
        (0..episodes_per_update)
            .map(|e| sample(tape, bindings, &mut rng.child2(label, e as u64)))
            .collect()
    };

    for step in 0..k {
        let episodes = sample_batch(&mut tape, &current, step as u64, &mut sample)?;
        let mean = episodes.iter().map(|e| e.score).sum::<f64>() / episodes.len() as f64;
        let surrogate =
            reinforce_surrogate(&mut tape, &episodes, gamma, baseline.unwrap_or(mean))?;
        let wrt = current.node_ids();
        let mut grads = tape.grad_nodes(surrogate, &wrt)?;
        if first_order {
            grads = grads
                .into_iter()
                .map(|g| {
                    let v = tape.value(g).clone();
                    tape.constant(v)
                })
                .collect();
        }
        let next_ids: Vec<NodeId> = wrt
            .iter()
            .zip(&grads)
            .map(|(&p, &g)| {
                let delta = tape.scale(g, inner_lr);
                tape.sub(p, delta)
            })
            .collect();
        current = TapeBindings::from_ids(names.iter().cloned(), next_ids);
        inner_traces.extend(episodes.into_iter().map(|e| e.trace));
    }

    let meta_episodes = sample_batch(&mut tape, &current, k as u64, &mut sample)?;
    let mean_score =
        meta_episodes.iter().map(|e| e.score).sum::<f64>() / meta_episodes.len() as f64;
    let surrogate =
        reinforce_surrogate(&mut tape, &meta_episodes, gamma, baseline.unwrap_or(mean_score))?;
    let grad = tape.grad(surrogate)?;
    Ok(TaskOutcome {
        grad,
        inner_traces,
        meta_traces: meta_episodes.into_iter().map(|e| e.trace).collect(),
        mean_score,
    })
}

fn mean_gradient(grads: &[ParamVector]) -> Result<ParamVector> {
    let mut total = grads[0].clone();
    for g in &grads[1..] {
        total.accumulate(g)?;
    }
    total.scale(1.0 / grads.len() as f64);
    Ok(total)
}

fn abort_on_non_finite(
    grad: &ParamVector,
    params: &ParamVector,
    epoch: usize,
    dir: Option<&str>,
) -> Result<()> {
    if let Some(name) = grad.first_non_finite() {
        if let Some(dir) = dir {
            let path = std::path::Path::new(dir).join(format!("abort_epoch_{epoch}.json"));
            // Best effort; the abort error matters more than the dump.
            let _ = std::fs::create_dir_all(dir);
            let _ = crate::params::save_checkpoint(&path, params);
        }
        return Err(Error::NonFinite(format!(
            "meta gradient entry {name:?} at epoch {epoch} (params checksum {})",
            params.checksum()
        )));
    }
    Ok(())
}

/// Meta-training output: the meta-initialization, the trained world model
/// (when the conditioning uses one), the per-epoch log, and the last
/// epoch's post-adaptation rollouts.
#[derive(Debug)]
pub struct TrainResult {
    pub policy: InterventionPolicy,
    pub world_model: Option<WorldModel>,
    pub log: Vec<LogRow>,
    pub final_meta_batch: MetaBatch,
    pub baseline: EmaBaseline,
}

pub fn mermaide_meta_train(config: &TrainConfig, tasks: &[BanditTask]) -> Result<TrainResult> {
    config.validate()?;
    if tasks.is_empty() {
        return Err(Error::config("meta-training needs at least one task".to_string()));
    }
    let num_arms = tasks[0].num_arms();
    if tasks.iter().any(|t| t.num_arms() != num_arms) {
        return Err(Error::config("all training tasks must share an action count".to_string()));
    }

    let root = SplitRng::new(config.seed);
    let mut policy = InterventionPolicy::new(
        num_arms,
        config.conditioning,
        config.hidden_dim,
        config.gru_layers,
        &mut root.child(0),
    );
    let mut wm_trainer = if config.conditioning.uses_prediction() {
        let wm = WorldModel::new(num_arms, config.wm_hidden_dim, config.wm_layers, &mut root.child(1));
        Some(WmTrainer::new(wm, config.wm_lr, config.replay_cap, config.wm_minibatch))
    } else {
        None
    };
    let mut adam = Adam::new(&policy.params, config.meta_lr);
    let mut baseline = EmaBaseline::new(config.baseline_decay);
    let mut log = Vec::with_capacity(config.e_train);
    let mut final_meta_batch = MetaBatch::default();
    let rollout_cfg = config.rollout();

    for epoch in 0..config.e_train {
        let wm_nll = match wm_trainer.as_mut() {
            Some(trainer) => {
                trainer.train_round(config.wm_episodes_per_epoch, &mut root.child2(2, epoch as u64))?
            }
            None => None,
        };
        let wm_snapshot = wm_trainer.as_ref().map(|t| t.wm.clone());
        let params = policy.params.clone();
        let b = baseline.value();
        let policy_ref = &policy;
        let outcomes = exec::map_indexed(config.parallel, tasks, |i, task| {
            adapt_and_meta_grad(
                &params,
                config.k_train,
                config.inner_lr,
                config.episodes_per_inner_update,
                config.gamma,
                b,
                config.first_order,
                |tape, bindings, rng| {
                    rollout_bandit_tape(
                        tape,
                        bindings,
                        policy_ref,
                        wm_snapshot.as_ref(),
                        task,
                        &rollout_cfg,
                        rng,
                    )
                },
                &root.child2(3 + epoch as u64, i as u64),
            )
        });

        let mut grads = Vec::with_capacity(tasks.len());
        let mut scores = Vec::with_capacity(tasks.len());
        let mut batch = MetaBatch::default();
        for (i, outcome) in outcomes.into_iter().enumerate() {
            let out = outcome?;
            scores.push(out.mean_score);
            grads.push(out.grad);
            if let Some(trainer) = wm_trainer.as_mut() {
                for trace in out.inner_traces.iter().chain(&out.meta_traces) {
                    trainer.push_trace(trace)?;
                }
            }
            batch.tasks.push(MetaTaskRollouts {
                task_index: i,
                traces: out.meta_traces,
                mean_score: out.mean_score,
            });
        }
        let meta_grad = mean_gradient(&grads)?;
        abort_on_non_finite(
            &meta_grad,
            &policy.params,
            epoch,
            config.abort_checkpoint_dir.as_deref(),
        )?;
        policy.params = adam.step(&policy.params, &meta_grad)?;
        let (mean_score, se) = mean_se(&scores);
        baseline.update(mean_score);
        log.push(LogRow { epoch, mean_score, se, wm_nll });
        if epoch + 1 == config.e_train {
            final_meta_batch = batch;
        }
    }

    Ok(TrainResult {
        policy,
        world_model: wm_trainer.map(|t| t.wm),
        log,
        final_meta_batch,
        baseline,
    })
}

/// Meta-training for the matrix game. Types are drawn fresh each epoch
/// from u ~ U(0,1); everything else (cost, observation noise, setting,
/// horizon) comes from `template`.
#[derive(Debug)]
pub struct StackelbergTrainResult {
    pub policy: StackelbergPolicy,
    pub log: Vec<LogRow>,
    pub baseline: EmaBaseline,
}

pub fn stackelberg_meta_train(
    config: &TrainConfig,
    template: &StackelbergTask,
) -> Result<StackelbergTrainResult> {
    config.validate()?;
    let root = SplitRng::new(config.seed);
    let mut policy = StackelbergPolicy::new(config.hidden_dim, &mut root.child(0));
    let mut adam = Adam::new(&policy.params, config.meta_lr);
    let mut baseline = EmaBaseline::new(config.baseline_decay);
    let mut log = Vec::with_capacity(config.e_train);

    for epoch in 0..config.e_train {
        let mut type_rng = root.child2(1, epoch as u64);
        let tasks: Vec<StackelbergTask> = (0..config.n_train)
            .map(|_| {
                let u = rand::Rng::random_range(&mut type_rng, f64::EPSILON..1.0);
                StackelbergTask::new(
                    u,
                    template.c,
                    template.obs_noise_sigma,
                    template.setting,
                    template.horizon,
                )
            })
            .collect::<Result<_>>()?;
        let params = policy.params.clone();
        let b = baseline.value();
        let policy_ref = &policy;
        let outcomes = exec::map_indexed(config.parallel, &tasks, |i, task| {
            adapt_and_meta_grad(
                &params,
                config.k_train,
                config.inner_lr,
                config.episodes_per_inner_update,
                config.gamma,
                b,
                config.first_order,
                |tape, bindings, rng| {
                    rollout_stackelberg_tape(tape, bindings, policy_ref, task, rng)
                },
                &root.child2(2 + epoch as u64, i as u64),
            )
        });
        let mut grads = Vec::with_capacity(tasks.len());
        let mut scores = Vec::with_capacity(tasks.len());
        for outcome in outcomes {
            let out = outcome?;
            scores.push(out.mean_score);
            grads.push(out.grad);
        }
        let meta_grad = mean_gradient(&grads)?;
        abort_on_non_finite(
            &meta_grad,
            &policy.params,
            epoch,
            config.abort_checkpoint_dir.as_deref(),
        )?;
        policy.params = adam.step(&policy.params, &meta_grad)?;
        let (mean_score, se) = mean_se(&scores);
        baseline.update(mean_score);
        log.push(LogRow { epoch, mean_score, se, wm_nll: None });
    }

    Ok(StackelbergTrainResult { policy, log, baseline })
}
