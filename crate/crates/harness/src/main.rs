//! `steer`: train, adapt, and evaluate reward-intervention principals from
//! TOML experiment configs, and render saved results.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use steer_core::env::bandit::episode_score;
use steer_core::error::{Error, Result};
use steer_core::learning::{
    k_shot_adapt, mermaide_meta_train, rollout_bandit, stackelberg_meta_train, training_log_csv,
    RolloutConfig,
};
use steer_core::params::{load_checkpoint, save_checkpoint};
use steer_core::principal::{BanditPrincipal, InterventionPolicy, WorldModel};
use steer_core::rng::SplitRng;

use steer_harness::config::{load_config, ExperimentConfig, ExperimentKind};
use steer_harness::experiments::{
    build_test_tasks, build_train_tasks, dry_run, run_experiment, stackelberg_template,
};
use steer_harness::report::render_table;
use steer_harness::results::{read_file, ResultsTable};

#[derive(Parser)]
#[command(name = "steer", version, about = "Cost-aware reward-intervention experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train the configured principals and save final checkpoints.
    Train(RunArgs),
    /// K-shot adapt a saved policy checkpoint to one held-out test task.
    Adapt(AdaptArgs),
    /// Run the experiment described by an arbitrary config file.
    Eval(RunArgs),
    /// Bandit score table on the training agent algorithm.
    Table1(RunArgs),
    /// Bandit score table across mismatched test agents.
    Table2(RunArgs),
    /// Exploration-count characterization over the learner grids.
    Table4(RunArgs),
    /// Fixed-vector intervention-strategy characterization.
    B3(RunArgs),
    /// Matrix-game checkpoint sweep with one-shot adaptation probes.
    Stackelberg(RunArgs),
    /// Render the results table saved in an output directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config. Omitted: the subcommand's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the base training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<String>,
    /// Validate and resolve the config without running any episodes.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct AdaptArgs {
    /// Config supplying the task set, test agents, and policy shape.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Policy checkpoint to adapt.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Optional frozen world-model checkpoint.
    #[arg(long)]
    wm_checkpoint: Option<PathBuf>,
    /// Index into the config's test task set.
    #[arg(long, default_value_t = 0)]
    task: usize,
    /// Number of adaptation episodes.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Seed for the adaptation and evaluation episodes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to save the adapted parameters.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment output directory (the one holding results.csv).
    #[arg(long)]
    dir: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}

fn error_json(e: &Error) -> String {
    let kind = match e {
        Error::Config(_) => "config",
        Error::Usage(_) => "usage",
        Error::Invariant(_) => "invariant",
        Error::UnsupportedOp(_) => "unsupported_op",
        Error::NonFinite(_) => "non_finite",
        Error::Io { .. } => "io",
        Error::Serde(_) => "serde",
    };
    serde_json::json!({ "error": { "kind": kind, "message": e.to_string() } }).to_string()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => train_cmd(&load_for(&args, None)?),
        Command::Adapt(args) => adapt_cmd(&args),
        Command::Eval(args) => {
            if args.config.is_none() {
                return Err(Error::usage("eval requires --config"));
            }
            run_cmd(&load_for(&args, None)?, args.dry_run)
        }
        Command::Table1(args) => {
            run_cmd(&load_for(&args, Some(ExperimentKind::BanditTable1))?, args.dry_run)
        }
        Command::Table2(args) => {
            run_cmd(&load_for(&args, Some(ExperimentKind::BanditTable2Crossalgo))?, args.dry_run)
        }
        Command::Table4(args) => {
            run_cmd(&load_for(&args, Some(ExperimentKind::Table4Calibration))?, args.dry_run)
        }
        Command::B3(args) => {
            run_cmd(&load_for(&args, Some(ExperimentKind::B3Characterization))?, args.dry_run)
        }
        Command::Stackelberg(args) => {
            let cfg = load_for(&args, None)?;
            if !cfg.experiment.is_stackelberg() {
                return Err(Error::config(format!(
                    "config describes {}, not a stackelberg sweep",
                    cfg.experiment.label()
                )));
            }
            run_cmd(&cfg, args.dry_run)
        }
        Command::Report(args) => report_cmd(&args.dir),
    }
}

/// Load the config (or take the subcommand's defaults) and apply CLI
/// overrides. `expect` pins the experiment kind a table subcommand serves.
fn load_for(args: &RunArgs, expect: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let mut cfg = match (&args.config, expect) {
        (Some(path), _) => load_config(path)?,
        (None, Some(kind)) => ExperimentConfig::for_kind(kind),
        (None, None) => return Err(Error::usage("this subcommand requires --config")),
    };
    if let Some(kind) = expect {
        if cfg.experiment != kind {
            return Err(Error::config(format!(
                "config describes {}, this subcommand runs {}",
                cfg.experiment.label(),
                kind.label()
            )));
        }
    }
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(out_dir) = &args.out_dir {
        cfg.out_dir = out_dir.clone();
    }
    Ok(cfg)
}

fn run_cmd(cfg: &ExperimentConfig, dry: bool) -> Result<()> {
    if dry {
        println!("{}", dry_run(cfg)?);
        return Ok(());
    }
    let (out, manifest, dir) = run_experiment(cfg)?;
    print!("{}", render_table(&out.table));
    println!("\nresults: {}", dir.display());
    println!("config hash: {}", manifest.config_hash);
    Ok(())
}

fn train_cmd(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let dir = Path::new(&cfg.out_dir).join(cfg.experiment.label()).join("train");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    if cfg.experiment.is_stackelberg() {
        let template = stackelberg_template(cfg, 0.5)?;
        for &spec in &cfg.principals {
            let tc = spec.train_overrides(&cfg.train);
            let result = stackelberg_meta_train(&tc, &template)?;
            finish_training(
                &dir,
                spec.label(),
                &result.policy.params,
                None,
                &training_log_csv(&result.log),
                result.log.last().map(|r| r.mean_score),
            )?;
        }
    } else {
        let tasks = build_train_tasks(&cfg.tasks)?;
        for &spec in &cfg.principals {
            if !spec.is_learned_bandit() {
                continue;
            }
            let tc = spec.train_overrides(&cfg.train);
            let result = mermaide_meta_train(&tc, &tasks)?;
            finish_training(
                &dir,
                spec.label(),
                &result.policy.params,
                result.world_model.as_ref().map(|wm| &wm.params),
                &training_log_csv(&result.log),
                result.log.last().map(|r| r.mean_score),
            )?;
        }
    }
    Ok(())
}

fn finish_training(
    dir: &Path,
    label: &str,
    params: &steer_core::params::ParamVector,
    wm_params: Option<&steer_core::params::ParamVector>,
    log_csv: &str,
    final_score: Option<f64>,
) -> Result<()> {
    let log_path = dir.join(format!("{label}.log.csv"));
    std::fs::write(&log_path, log_csv)
        .map_err(|e| Error::io(log_path.display().to_string(), e))?;
    save_checkpoint(&dir.join(format!("{label}.params.json")), params)?;
    if let Some(wp) = wm_params {
        save_checkpoint(&dir.join(format!("{label}.wm.json")), wp)?;
    }
    match final_score {
        Some(score) => println!("trained {label}: final mean score {score:.4}"),
        None => println!("trained {label}"),
    }
    println!("  params: {}", dir.join(format!("{label}.params.json")).display());
    Ok(())
}

fn adapt_cmd(args: &AdaptArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::for_kind(ExperimentKind::BanditTable1),
    };
    cfg.validate()?;
    if cfg.experiment.is_stackelberg() {
        return Err(Error::usage("adapt works on bandit configs; use `stackelberg` for sweeps"));
    }
    let spec = cfg
        .principals
        .iter()
        .copied()
        .find(|p| p.is_learned_bandit())
        .ok_or_else(|| Error::config("config lists no learned principal to shape the policy"))?;
    let tc = spec.train_overrides(&cfg.train);

    let loaded = load_checkpoint(&args.checkpoint)?;
    let mut policy = InterventionPolicy::new(
        cfg.tasks.num_arms,
        tc.conditioning,
        tc.hidden_dim,
        tc.gru_layers,
        &mut SplitRng::new(0),
    );
    if !policy.params.compatible(&loaded) {
        return Err(Error::config(format!(
            "checkpoint {} does not fit a {} policy ({} arms, hidden {}, {} layers)",
            args.checkpoint.display(),
            spec.label(),
            cfg.tasks.num_arms,
            tc.hidden_dim,
            tc.gru_layers
        )));
    }
    policy.params = loaded;

    let world_model = match &args.wm_checkpoint {
        Some(path) => {
            let loaded = load_checkpoint(path)?;
            let mut wm = WorldModel::new(
                cfg.tasks.num_arms,
                tc.wm_hidden_dim,
                tc.wm_layers,
                &mut SplitRng::new(1),
            );
            if !wm.params.compatible(&loaded) {
                return Err(Error::config(format!(
                    "world-model checkpoint {} does not fit ({} arms, hidden {}, {} layers)",
                    path.display(),
                    cfg.tasks.num_arms,
                    tc.wm_hidden_dim,
                    tc.wm_layers
                )));
            }
            wm.params = loaded;
            Some(wm)
        }
        None => None,
    };

    let tasks = build_test_tasks(&cfg.tasks)?;
    let task = tasks.get(args.task).ok_or_else(|| {
        Error::usage(format!("task index {} out of range (test set has {})", args.task, tasks.len()))
    })?;
    let rollout = RolloutConfig::new(cfg.eval.horizon, cfg.eval.alpha, cfg.eval.gamma)?;

    let adapted = k_shot_adapt(
        &policy,
        world_model.as_ref(),
        task,
        args.k,
        cfg.train.inner_lr,
        &rollout,
        cfg.train.baseline_decay,
        &mut SplitRng::new(args.seed),
    )?;
    let principal =
        BanditPrincipal::Learned { policy: adapted.policy.clone(), world_model };
    principal.validate(task.num_arms())?;
    let trace =
        rollout_bandit(task, &principal, &rollout, &mut SplitRng::new(args.seed).child(1))?;
    let score = episode_score(&trace, rollout.alpha, rollout.gamma);

    if let Some(out) = &args.out {
        save_checkpoint(out, &adapted.policy.params)?;
        println!("adapted params: {}", out.display());
    }
    println!(
        "adapted {} shot(s) on task {}: eval score {:.4}, params {}",
        args.k,
        args.task,
        score,
        &adapted.policy.params.checksum()[..12]
    );
    Ok(())
}

fn report_cmd(dir: &Path) -> Result<()> {
    let csv = read_file(&dir.join("results.csv"))?;
    let table = ResultsTable::from_csv(&csv)?;
    print!("{}", render_table(&table));
    let manifest_path = dir.join("manifest.json");
    if manifest_path.exists() {
        let manifest: serde_json::Value = serde_json::from_str(&read_file(&manifest_path)?)
            .map_err(|e| Error::Serde(e.to_string()))?;
        if let Some(hash) = manifest.get("config_hash").and_then(|v| v.as_str()) {
            println!("\nconfig hash: {hash}");
        }
    }
    Ok(())
}
