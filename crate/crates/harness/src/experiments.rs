//! The experiment protocols: bandit score tables (train, K-shot adapt per
//! test task, evaluate), the exploration-count characterization, the
//! fixed-vector strategy comparison, and the matrix-game adaptation sweep.
//!
//! Everything is keyed off explicit seeds: per-replicate training seeds are
//! derived from the base training seed, and every (principal, cell, K,
//! task) evaluation owns a labeled child stream, so re-running a config
//! reproduces the table bit for bit.

use std::path::{Path, PathBuf};

use steer_core::env::bandit::{episode_score, BanditTask};
use steer_core::env::stackelberg::{
    stackelberg_equilibrium_oracle, PrincipalEquilibrium, StackelbergSetting, StackelbergTask,
};
use steer_core::error::{Error, Result};
use steer_core::learning::{
    k_shot_adapt, mean_se, mermaide_meta_train, rollout_bandit, stackelberg_k_shot_adapt,
    stackelberg_meta_train, training_log_csv, EmaBaseline, RolloutConfig, TrainResult,
};
use steer_core::params::to_checkpoint_json;
use steer_core::principal::{BanditPrincipal, StackelbergPolicy};
use steer_core::rng::SplitRng;

use crate::characterize::{
    b3_characterization, calibrate_beta, characterize_exploration, B3Strategy, ExplorationCell,
    B3_VECTORS, UCB_BETA_GRID,
};
use crate::config::{config_hash, ExperimentConfig, ExperimentKind, PrincipalSpec, TaskConfig};
use crate::results::{
    emit_results, Artifact, Manifest, ResultsCell, ResultsRow, ResultsTable,
};
use crate::taskgen::{generate_task_set, rebind_learner};

/// Salt separating test-time adaptation streams from the training streams
/// that share the same base seed.
const ADAPT_STREAM_SALT: u64 = 0x5EED_AD47;

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub epochs: usize,
    /// Intervention probability at each test type before adaptation.
    pub pre_adapt: Vec<f64>,
    /// Same, after `adapt_k` adaptation episodes on that type.
    pub adapted: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepCurve {
    pub principal: String,
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    pub fn final_point(&self) -> &SweepPoint {
        self.points.last().expect("curves are never empty")
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumFlag {
    pub principal: String,
    pub u: f64,
    pub oracle: PrincipalEquilibrium,
    pub adapted_prob: f64,
    pub matched: bool,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub test_types: Vec<f64>,
    pub curves: Vec<SweepCurve>,
    pub flags: Vec<EquilibriumFlag>,
}

impl SweepOutput {
    pub fn curve(&self, principal: &str) -> Option<&SweepCurve> {
        self.curves.iter().find(|c| c.principal == principal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedBeta {
    pub eps: f64,
    pub target_count: f64,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct ExplorationOutput {
    pub cells: Vec<ExplorationCell>,
    pub calibrated: Option<Vec<CalibratedBeta>>,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub config_hash: String,
    pub table: ResultsTable,
    pub artifacts: Vec<Artifact>,
    pub sweep: Option<SweepOutput>,
    pub exploration: Option<ExplorationOutput>,
}

/// Run the configured protocol without touching the filesystem.
pub fn compute_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let hash = config_hash(cfg)?;
    let (table, artifacts, sweep, exploration) = match cfg.experiment {
        ExperimentKind::BanditTable1 | ExperimentKind::BanditTable2Crossalgo => {
            let (t, a) = bandit_tables(cfg)?;
            (t, a, None, None)
        }
        ExperimentKind::Table4Calibration => {
            let (t, a, e) = table4(cfg)?;
            (t, a, None, Some(e))
        }
        ExperimentKind::B3Characterization => {
            let (t, a) = b3(cfg)?;
            (t, a, None, None)
        }
        ExperimentKind::StackelbergSingle | ExperimentKind::StackelbergMulti => {
            let (t, a, s) = sweep(cfg)?;
            (t, a, Some(s), None)
        }
    };
    Ok(ExperimentOutput { config_hash: hash, table, artifacts, sweep, exploration })
}

/// Compute and emit: results table, per-cell files, and the manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentOutput, Manifest, PathBuf)> {
    let out = compute_experiment(cfg)?;
    let (manifest, dir) =
        emit_results(Path::new(&cfg.out_dir), &out.table, &out.config_hash, &out.artifacts)?;
    Ok((out, manifest, dir))
}

/// Validate the config and resolve every identifier (task sets, principals,
/// grids) without running a single episode.
pub fn dry_run(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let hash = config_hash(cfg)?;
    let principals: Vec<&str> = cfg.principals.iter().map(|p| p.label()).collect();
    let mut lines = vec![
        format!("experiment: {}", cfg.experiment.label()),
        format!("config hash: {hash}"),
        format!("out dir: {}", cfg.out_dir),
        format!("principals: {}", principals.join(", ")),
    ];
    if cfg.experiment.is_stackelberg() {
        let template = stackelberg_template(cfg, cfg.stackelberg.test_types[0])?;
        lines.push(format!(
            "setting: {:?}, horizon {}, cost {}",
            template.setting, template.horizon, template.c
        ));
        lines.push(format!(
            "checkpoints: {:?}, test types: {:?}",
            checkpoint_schedule(cfg),
            cfg.stackelberg.test_types
        ));
    } else {
        let train = build_train_tasks(&cfg.tasks)?;
        let test = build_test_tasks(&cfg.tasks)?;
        lines.push(format!(
            "tasks: {} train + {} test, {} arms, noise {}",
            train.len(),
            test.len(),
            cfg.tasks.num_arms,
            cfg.tasks.noise_sigma
        ));
        let grid: Vec<String> = cfg.eval.test_learners.iter().map(|l| l.label()).collect();
        lines.push(format!(
            "grid: [{}] × K {:?} × {} seeds, T = {}",
            grid.join(", "),
            cfg.eval.k_values,
            cfg.eval.eval_seeds.len(),
            cfg.eval.horizon
        ));
    }
    Ok(lines.join("\n"))
}

pub fn build_train_tasks(tasks: &TaskConfig) -> Result<Vec<BanditTask>> {
    generate_task_set(
        tasks.train_seed,
        tasks.n_train,
        tasks.num_arms,
        tasks.noise_sigma,
        tasks.train_learner,
    )
}

pub fn build_test_tasks(tasks: &TaskConfig) -> Result<Vec<BanditTask>> {
    if tasks.explicit_test.is_empty() {
        generate_task_set(
            tasks.test_seed,
            tasks.n_test,
            tasks.num_arms,
            tasks.noise_sigma,
            tasks.train_learner,
        )
    } else {
        tasks
            .explicit_test
            .iter()
            .map(|t| {
                BanditTask::new(
                    t.base_rewards.clone(),
                    t.a_star,
                    tasks.noise_sigma,
                    tasks.train_learner,
                )
            })
            .collect()
    }
}

/// Train one learned bandit principal per evaluation seed. Replicate i uses
/// base training seed + eval seed so replicates differ but stay pinned.
fn train_replicates(
    cfg: &ExperimentConfig,
    spec: PrincipalSpec,
    train_tasks: &[BanditTask],
) -> Result<Vec<TrainResult>> {
    cfg.eval
        .eval_seeds
        .iter()
        .map(|&s| {
            let mut tc = spec.train_overrides(&cfg.train);
            tc.seed = cfg.train.seed.wrapping_add(s);
            mermaide_meta_train(&tc, train_tasks)
        })
        .collect()
}

fn static_principal(spec: PrincipalSpec) -> Option<BanditPrincipal> {
    match spec {
        PrincipalSpec::NoIntervention => Some(BanditPrincipal::NoIntervention),
        PrincipalSpec::S1 { level } => Some(BanditPrincipal::S1 { level }),
        PrincipalSpec::S2 { level } => Some(BanditPrincipal::S2 { level }),
        PrincipalSpec::Rb { level } => Some(BanditPrincipal::Rb { level }),
        _ => None,
    }
}

struct CellOutcome {
    cell: ResultsCell,
    artifacts: Vec<Artifact>,
}

/// Evaluate one grid cell: for each seed, K-shot adapt per task (learned
/// principals) and average the post-adaptation episode scores over tasks;
/// the cell statistic is the mean and standard error over seeds.
#[allow(clippy::too_many_arguments)]
fn evaluate_cell(
    cfg: &ExperimentConfig,
    principal_index: usize,
    principal_label: &str,
    file_train_spec: &str,
    trained: Option<&[TrainResult]>,
    rule: Option<&BanditPrincipal>,
    k: usize,
    learner_index: usize,
    tasks: &[BanditTask],
    rollout: &RolloutConfig,
) -> Result<CellOutcome> {
    let test_spec = cfg.eval.test_learners[learner_index].label();
    let mut per_seed = Vec::with_capacity(cfg.eval.eval_seeds.len());
    let mut rows_csv = String::from("seed,task,score\n");
    let mut artifacts = Vec::new();
    for (si, &seed) in cfg.eval.eval_seeds.iter().enumerate() {
        let mut task_scores = Vec::with_capacity(tasks.len());
        for (ti, task) in tasks.iter().enumerate() {
            let cell_rng = SplitRng::new(seed ^ ADAPT_STREAM_SALT)
                .child2(principal_index as u64, learner_index as u64)
                .child2(k as u64, ti as u64);
            let principal = match (trained, rule) {
                (Some(replicates), _) => {
                    let tr = &replicates[si];
                    let adapted = k_shot_adapt(
                        &tr.policy,
                        tr.world_model.as_ref(),
                        task,
                        k,
                        cfg.train.inner_lr,
                        rollout,
                        cfg.train.baseline_decay,
                        &mut cell_rng.child(0),
                    )?;
                    BanditPrincipal::Learned {
                        policy: adapted.policy,
                        world_model: tr.world_model.clone(),
                    }
                }
                (None, Some(rule)) => rule.clone(),
                (None, None) => return Err(Error::usage("cell needs a principal")),
            };
            let eval_rng = cell_rng.child(1);
            let mut episode_scores = Vec::with_capacity(cfg.eval.eval_episodes);
            for e in 0..cfg.eval.eval_episodes {
                let trace =
                    rollout_bandit(task, &principal, rollout, &mut eval_rng.child(e as u64))?;
                episode_scores.push(episode_score(&trace, rollout.alpha, rollout.gamma));
                if cfg.eval.emit_traces && e == 0 {
                    artifacts.push(Artifact::new(
                        format!(
                            "{principal_label}/{file_train_spec}__{test_spec}__seed{seed}_task{ti}.trace.csv"
                        ),
                        trace.to_csv(),
                    ));
                }
            }
            let score =
                episode_scores.iter().sum::<f64>() / episode_scores.len() as f64;
            rows_csv.push_str(&format!("{seed},{ti},{score}\n"));
            task_scores.push(score);
        }
        per_seed.push(task_scores.iter().sum::<f64>() / task_scores.len() as f64);
    }
    let (mean, se) = mean_se(&per_seed);
    artifacts.insert(
        0,
        Artifact::new(Artifact::cell_path(principal_label, file_train_spec, &test_spec), rows_csv),
    );
    Ok(CellOutcome {
        cell: ResultsCell { test_spec, mean, se, n_seeds: cfg.eval.eval_seeds.len() },
        artifacts,
    })
}

fn bandit_tables(cfg: &ExperimentConfig) -> Result<(ResultsTable, Vec<Artifact>)> {
    let train_tasks = build_train_tasks(&cfg.tasks)?;
    let test_base = build_test_tasks(&cfg.tasks)?;
    let rollout = RolloutConfig::new(cfg.eval.horizon, cfg.eval.alpha, cfg.eval.gamma)?;
    let rebound: Vec<Vec<BanditTask>> = cfg
        .eval
        .test_learners
        .iter()
        .map(|l| rebind_learner(&test_base, *l))
        .collect::<Result<_>>()?;

    let mut table = ResultsTable::new(cfg.experiment.label());
    let mut artifacts = Vec::new();
    for (pi, &spec) in cfg.principals.iter().enumerate() {
        let label = spec.label();
        if spec.is_learned_bandit() {
            let trained = train_replicates(cfg, spec, &train_tasks)?;
            let train_spec = cfg.tasks.train_learner.label();
            for (si, tr) in trained.iter().enumerate() {
                let seed = cfg.eval.eval_seeds[si];
                artifacts.push(Artifact::new(
                    format!("{label}/train_seed{seed}.log.csv"),
                    training_log_csv(&tr.log),
                ));
                artifacts.push(Artifact::new(
                    format!("{label}/train_seed{seed}.params.json"),
                    to_checkpoint_json(&tr.policy.params)?,
                ));
                if let Some(wm) = &tr.world_model {
                    artifacts.push(Artifact::new(
                        format!("{label}/train_seed{seed}.wm.json"),
                        to_checkpoint_json(&wm.params)?,
                    ));
                }
            }
            for &k in &cfg.eval.k_values {
                let file_train_spec = format!("{train_spec}_k{k}");
                let mut cells = Vec::with_capacity(rebound.len());
                for (li, tasks) in rebound.iter().enumerate() {
                    let out = evaluate_cell(
                        cfg,
                        pi,
                        label,
                        &file_train_spec,
                        Some(&trained),
                        None,
                        k,
                        li,
                        tasks,
                        &rollout,
                    )?;
                    cells.push(out.cell);
                    artifacts.extend(out.artifacts);
                }
                table.rows.push(ResultsRow {
                    principal: label.to_string(),
                    train_spec: train_spec.clone(),
                    k,
                    cells,
                });
            }
        } else {
            let rule = static_principal(spec)
                .ok_or_else(|| Error::config(format!("{label} is not a bandit principal")))?;
            let mut cells = Vec::with_capacity(rebound.len());
            for (li, tasks) in rebound.iter().enumerate() {
                let out = evaluate_cell(
                    cfg,
                    pi,
                    label,
                    "none_k0",
                    None,
                    Some(&rule),
                    0,
                    li,
                    tasks,
                    &rollout,
                )?;
                cells.push(out.cell);
                artifacts.extend(out.artifacts);
            }
            table.rows.push(ResultsRow {
                principal: label.to_string(),
                train_spec: "none".to_string(),
                k: 0,
                cells,
            });
        }
    }
    Ok((table, artifacts))
}

fn table4(cfg: &ExperimentConfig) -> Result<(ResultsTable, Vec<Artifact>, ExplorationOutput)> {
    let tasks = build_train_tasks(&cfg.tasks)?;
    let cells = characterize_exploration(
        &tasks,
        &cfg.eval.test_learners,
        cfg.eval.horizon,
        &cfg.eval.eval_seeds,
    )?;
    let mut exploration_csv = String::from("learner,mean,se,n_seeds\n");
    let mut table_cells = Vec::with_capacity(cells.len());
    for c in &cells {
        exploration_csv.push_str(&format!("{},{},{},{}\n", c.learner.label(), c.mean, c.se, c.n_seeds));
        table_cells.push(ResultsCell {
            test_spec: c.learner.label(),
            mean: c.mean,
            se: c.se,
            n_seeds: c.n_seeds,
        });
    }
    let mut artifacts = vec![Artifact::new("exploration.csv", exploration_csv)];

    let calibrated = if cfg.eval.calibrate {
        let mut fits = Vec::new();
        let mut csv = String::from("eps,target_count,beta\n");
        for c in &cells {
            if let steer_core::agents::LearnerSpec::EpsGreedy { eps } = c.learner {
                let beta =
                    calibrate_beta(&tasks, c.mean, cfg.eval.horizon, &cfg.eval.eval_seeds)?;
                csv.push_str(&format!("{eps},{},{beta}\n", c.mean));
                fits.push(CalibratedBeta { eps, target_count: c.mean, beta });
            }
        }
        artifacts.push(Artifact::new("calibrated_betas.csv", csv));
        Some(fits)
    } else {
        None
    };

    let table = ResultsTable {
        experiment: cfg.experiment.label().to_string(),
        rows: vec![ResultsRow {
            principal: "no_intervention".to_string(),
            train_spec: "exploration".to_string(),
            k: 0,
            cells: table_cells,
        }],
    };
    Ok((table, artifacts, ExplorationOutput { cells, calibrated }))
}

fn b3_strategy(spec: PrincipalSpec) -> Result<B3Strategy> {
    match spec {
        PrincipalSpec::NoIntervention => Ok(B3Strategy::None),
        PrincipalSpec::S1 { level } => Ok(B3Strategy::S1 { level }),
        PrincipalSpec::S2 { level } => Ok(B3Strategy::S2 { level }),
        other => Err(Error::config(format!(
            "{} has no role in the strategy characterization",
            other.label()
        ))),
    }
}

fn b3(cfg: &ExperimentConfig) -> Result<(ResultsTable, Vec<Artifact>)> {
    let strategies: Vec<B3Strategy> =
        cfg.principals.iter().map(|&p| b3_strategy(p)).collect::<Result<_>>()?;
    let mut table = ResultsTable::new(cfg.experiment.label());
    let mut artifacts = Vec::new();
    for vector in &B3_VECTORS {
        let cells = b3_characterization(
            vector,
            &UCB_BETA_GRID,
            &strategies,
            cfg.tasks.noise_sigma,
            cfg.eval.horizon,
            cfg.eval.alpha,
            cfg.eval.gamma,
            &cfg.eval.eval_seeds,
        )?;
        for (si, &strategy) in strategies.iter().enumerate() {
            let mut row_cells = Vec::with_capacity(UCB_BETA_GRID.len());
            for (bi, &beta) in UCB_BETA_GRID.iter().enumerate() {
                let cell = &cells[bi * strategies.len() + si];
                let test_spec = format!("ucb({beta})");
                row_cells.push(ResultsCell {
                    test_spec: test_spec.clone(),
                    mean: cell.mean_score,
                    se: cell.se,
                    n_seeds: cfg.eval.eval_seeds.len(),
                });
                let mut scores_csv = String::from("seed,score\n");
                for (i, &seed) in cfg.eval.eval_seeds.iter().enumerate() {
                    scores_csv.push_str(&format!("{seed},{}\n", cell.seed_scores[i]));
                }
                artifacts.push(Artifact::new(
                    Artifact::cell_path(strategy.label(), vector.name, &test_spec),
                    scores_csv,
                ));
                for (i, &seed) in cfg.eval.eval_seeds.iter().enumerate() {
                    let mut ind = String::from("t,a_star,preferred\n");
                    for (t, (a, p)) in
                        cell.a_star_rows[i].iter().zip(&cell.preferred_rows[i]).enumerate()
                    {
                        ind.push_str(&format!("{},{a},{p}\n", t + 1));
                    }
                    artifacts.push(Artifact::new(
                        format!(
                            "{}/{}__{test_spec}__seed{seed}.indicators.csv",
                            strategy.label(),
                            vector.name
                        ),
                        ind,
                    ));
                }
            }
            table.rows.push(ResultsRow {
                principal: strategy.label().to_string(),
                train_spec: vector.name.to_string(),
                k: 0,
                cells: row_cells,
            });
        }
    }
    Ok((table, artifacts))
}

pub fn stackelberg_setting(cfg: &ExperimentConfig) -> StackelbergSetting {
    match cfg.experiment {
        ExperimentKind::StackelbergMulti => StackelbergSetting::MultiRoundNoisy,
        _ if cfg.stackelberg.obs_noise_sigma > 0.0 => StackelbergSetting::SingleRoundNoisy,
        _ => StackelbergSetting::SingleRoundPerfect,
    }
}

pub fn stackelberg_template(cfg: &ExperimentConfig, u: f64) -> Result<StackelbergTask> {
    StackelbergTask::new(
        u,
        cfg.stackelberg.cost,
        cfg.stackelberg.obs_noise_sigma,
        stackelberg_setting(cfg),
        cfg.stackelberg.horizon,
    )
}

/// Configured checkpoints plus the full training length, sorted, deduped.
fn checkpoint_schedule(cfg: &ExperimentConfig) -> Vec<usize> {
    let mut cps = cfg.stackelberg.checkpoints.clone();
    cps.push(cfg.train.e_train);
    cps.sort_unstable();
    cps.dedup();
    cps
}

/// Train each matrix-game principal on fresh per-epoch type draws and probe
/// one-shot adaptation on the held-out test types at every checkpoint.
/// Checkpoint c retrains for c epochs from the shared initialization, which
/// reproduces the prefix of the full run because the epoch streams are
/// position-keyed. Epoch 0 probes the untrained initialization, i.e. the
/// from-scratch policy given only the adaptation episodes.
pub fn stackelberg_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let (_, _, out) = sweep(cfg)?;
    Ok(out)
}

fn sweep(cfg: &ExperimentConfig) -> Result<(ResultsTable, Vec<Artifact>, SweepOutput)> {
    let schedule = checkpoint_schedule(cfg);
    let types = &cfg.stackelberg.test_types;
    let setting = stackelberg_setting(cfg);
    let template = stackelberg_template(cfg, 0.5)?;

    let mut curves = Vec::with_capacity(cfg.principals.len());
    let mut flags = Vec::new();
    let mut curves_csv = String::from("principal,epochs,u,pre_adapt_prob,adapted_prob\n");
    let mut flags_csv = String::from("principal,u,oracle,adapted_prob,matched\n");
    let mut artifacts = Vec::new();
    let mut table = ResultsTable::new(cfg.experiment.label());

    for (pi, &spec) in cfg.principals.iter().enumerate() {
        let label = spec.label();
        let base_tc = spec.train_overrides(&cfg.train);
        let mut points = Vec::with_capacity(schedule.len());
        for &epochs in &schedule {
            let (policy, baseline_value) = if epochs == 0 {
                let init = StackelbergPolicy::new(
                    base_tc.hidden_dim,
                    &mut SplitRng::new(base_tc.seed).child(0),
                );
                (init, None)
            } else {
                let mut tc = base_tc.clone();
                tc.e_train = epochs;
                let result = stackelberg_meta_train(&tc, &template)?;
                if epochs == *schedule.last().unwrap() {
                    artifacts.push(Artifact::new(
                        format!("{label}/train.log.csv"),
                        training_log_csv(&result.log),
                    ));
                    artifacts.push(Artifact::new(
                        format!("{label}/train.params.json"),
                        to_checkpoint_json(&result.policy.params)?,
                    ));
                }
                (result.policy, result.baseline.value())
            };
            let mut pre = Vec::with_capacity(types.len());
            let mut adapted_probs = Vec::with_capacity(types.len());
            for (ti, &u) in types.iter().enumerate() {
                let task = stackelberg_template(cfg, u)?;
                // An untrained policy has no running baseline; zero keeps
                // its single-episode update live instead of degenerate.
                let mut baseline = EmaBaseline::resume(
                    cfg.train.baseline_decay,
                    baseline_value.unwrap_or(0.0),
                );
                let mut rng = SplitRng::new(cfg.train.seed ^ ADAPT_STREAM_SALT)
                    .child2(pi as u64, epochs as u64)
                    .child(ti as u64);
                let adapted = stackelberg_k_shot_adapt(
                    &policy,
                    &task,
                    cfg.stackelberg.adapt_k,
                    cfg.train.inner_lr,
                    cfg.train.gamma,
                    &mut baseline,
                    &mut rng,
                )?;
                pre.push(policy.intervene_prob(u)?);
                adapted_probs.push(adapted.intervene_prob(u)?);
                curves_csv.push_str(&format!(
                    "{label},{epochs},{u},{},{}\n",
                    pre[ti], adapted_probs[ti]
                ));
            }
            points.push(SweepPoint { epochs, pre_adapt: pre, adapted: adapted_probs });
        }

        let final_point = points.last().unwrap();
        let mut cells = Vec::with_capacity(types.len());
        for (ti, &u) in types.iter().enumerate() {
            let oracle = stackelberg_equilibrium_oracle(u, cfg.stackelberg.cost, setting);
            let prob = final_point.adapted[ti];
            let (oracle_text, matched) = match oracle.principal {
                PrincipalEquilibrium::Pure { intervene } => {
                    (if intervene { "intervene".to_string() } else { "no_intervene".to_string() },
                     (prob > 0.5) == intervene)
                }
                PrincipalEquilibrium::Mixed { p_star } => {
                    (format!("p*={p_star}"), (prob - p_star).abs() <= 0.15)
                }
            };
            flags_csv.push_str(&format!("{label},{u},{oracle_text},{prob},{matched}\n"));
            flags.push(EquilibriumFlag {
                principal: label.to_string(),
                u,
                oracle: oracle.principal,
                adapted_prob: prob,
                matched,
            });
            cells.push(ResultsCell {
                test_spec: format!("u({u})"),
                mean: prob,
                se: 0.0,
                n_seeds: 1,
            });
        }
        table.rows.push(ResultsRow {
            principal: label.to_string(),
            train_spec: "uniform_types".to_string(),
            k: cfg.stackelberg.adapt_k,
            cells,
        });
        curves.push(SweepCurve { principal: label.to_string(), points });
    }
    artifacts.insert(0, Artifact::new("curves.csv", curves_csv));
    artifacts.insert(1, Artifact::new("equilibrium.csv", flags_csv));
    let out = SweepOutput { test_types: types.clone(), curves, flags };
    Ok((table, artifacts, out))
}
