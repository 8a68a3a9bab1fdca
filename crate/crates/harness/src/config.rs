//! Experiment configuration: the kinds, the principal registry, evaluation
//! and task-set settings, TOML loading, and a content hash that changes iff
//! any field changes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use steer_core::agents::LearnerSpec;
use steer_core::env::bandit::{level_index, BanditTask};
use steer_core::error::{Error, Result};
use steer_core::learning::TrainConfig;
use steer_core::principal::Conditioning;

use crate::characterize::{eps_grid, ucb_grid};
use crate::results::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    StackelbergSingle,
    StackelbergMulti,
    BanditTable1,
    BanditTable2Crossalgo,
    Table4Calibration,
    B3Characterization,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::StackelbergSingle => "stackelberg_single",
            ExperimentKind::StackelbergMulti => "stackelberg_multi",
            ExperimentKind::BanditTable1 => "bandit_table1",
            ExperimentKind::BanditTable2Crossalgo => "bandit_table2_crossalgo",
            ExperimentKind::Table4Calibration => "table4_calibration",
            ExperimentKind::B3Characterization => "b3_characterization",
        }
    }

    pub fn is_stackelberg(self) -> bool {
        matches!(self, ExperimentKind::StackelbergSingle | ExperimentKind::StackelbergMulti)
    }

    pub fn is_bandit_table(self) -> bool {
        matches!(self, ExperimentKind::BanditTable1 | ExperimentKind::BanditTable2Crossalgo)
    }
}

/// Which principal sits in a table row: the fixed rules, the learned bandit
/// principals (model-free or world-model-backed, pooled or meta-trained),
/// and the matrix-game pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrincipalSpec {
    NoIntervention,
    /// Fixed level once every 10 steps.
    S1 { level: f64 },
    /// Fixed level for the first 20 steps.
    S2 { level: f64 },
    /// Oracle rule: fire whenever the agent's next action would miss a*.
    Rb { level: f64 },
    /// Pooled REINFORCE, no world model.
    MfRl,
    /// Meta-trained, no world model.
    MfMaml,
    /// Pooled REINFORCE with a world model.
    WmRl,
    /// Meta-trained with a world model.
    Mermaide,
    /// Matrix game, pooled REINFORCE.
    SbRl,
    /// Matrix game, meta-trained.
    SbMaml,
}

impl PrincipalSpec {
    pub fn label(self) -> &'static str {
        match self {
            PrincipalSpec::NoIntervention => "no_intervention",
            PrincipalSpec::S1 { .. } => "s1",
            PrincipalSpec::S2 { .. } => "s2",
            PrincipalSpec::Rb { .. } => "rb",
            PrincipalSpec::MfRl => "mf_rl",
            PrincipalSpec::MfMaml => "mf_maml",
            PrincipalSpec::WmRl => "wm_rl",
            PrincipalSpec::Mermaide => "mermaide",
            PrincipalSpec::SbRl => "sb_rl",
            PrincipalSpec::SbMaml => "sb_maml",
        }
    }

    pub fn is_learned_bandit(self) -> bool {
        matches!(
            self,
            PrincipalSpec::MfRl | PrincipalSpec::MfMaml | PrincipalSpec::WmRl | PrincipalSpec::Mermaide
        )
    }

    pub fn is_stackelberg(self) -> bool {
        matches!(self, PrincipalSpec::SbRl | PrincipalSpec::SbMaml)
    }

    /// Whether training uses inner adaptation steps (meta-learning) or
    /// pools episodes into plain policy gradients.
    pub fn is_meta(self) -> bool {
        matches!(self, PrincipalSpec::MfMaml | PrincipalSpec::Mermaide | PrincipalSpec::SbMaml)
    }

    /// Specialize the shared training config to this principal: pooled
    /// variants drop the inner loop, model-free variants drop the
    /// prediction input.
    pub fn train_overrides(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            PrincipalSpec::MfRl => {
                cfg.k_train = 0;
                cfg.conditioning = Conditioning::PrevOnly;
            }
            PrincipalSpec::MfMaml => {
                cfg.k_train = base.k_train.max(1);
                cfg.conditioning = Conditioning::PrevOnly;
            }
            PrincipalSpec::WmRl => {
                cfg.k_train = 0;
                cfg.conditioning = Conditioning::Full;
            }
            PrincipalSpec::Mermaide => {
                cfg.k_train = base.k_train.max(1);
                cfg.conditioning = Conditioning::Full;
            }
            PrincipalSpec::SbRl => cfg.k_train = 0,
            PrincipalSpec::SbMaml => cfg.k_train = base.k_train.max(1),
            _ => {}
        }
        cfg
    }
}

/// Base rewards pinned explicitly instead of generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitTask {
    pub base_rewards: Vec<f64>,
    pub a_star: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub num_arms: usize,
    pub train_seed: u64,
    pub test_seed: u64,
    pub noise_sigma: f64,
    pub train_learner: LearnerSpec,
    /// When nonempty, replaces the generated test set.
    pub explicit_test: Vec<ExplicitTask>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            n_train: 15,
            n_test: 10,
            num_arms: 10,
            train_seed: 1001,
            test_seed: 2002,
            noise_sigma: 0.1,
            train_learner: LearnerSpec::Ucb { beta: 0.17 },
            explicit_test: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Adaptation budgets to evaluate, one table row each.
    pub k_values: Vec<usize>,
    pub test_learners: Vec<LearnerSpec>,
    pub eval_seeds: Vec<u64>,
    pub horizon: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// Episodes averaged per (seed, task) cell entry after adaptation.
    pub eval_episodes: usize,
    pub emit_traces: bool,
    /// Re-fit β per ε-column exploration count by bisection (Table 4 mode).
    pub calibrate: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k_values: vec![0, 1],
            test_learners: ucb_grid(),
            eval_seeds: vec![0, 1, 2],
            horizon: 200,
            alpha: 0.2,
            gamma: 1.0,
            eval_episodes: 1,
            emit_traces: true,
            calibrate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StackelbergConfig {
    pub cost: f64,
    pub obs_noise_sigma: f64,
    /// 1 for the single-round kinds, ≥ 2 for multi-round.
    pub horizon: usize,
    /// Held-out test types probed at every checkpoint.
    pub test_types: Vec<f64>,
    /// Training lengths at which adaptation is probed; 0 = untrained
    /// initialization. The configured e_train is always probed as well.
    pub checkpoints: Vec<usize>,
    pub adapt_k: usize,
}

impl Default for StackelbergConfig {
    fn default() -> Self {
        StackelbergConfig {
            cost: 0.75,
            obs_noise_sigma: 0.0,
            horizon: 1,
            test_types: vec![0.93, 0.21, 0.07],
            checkpoints: vec![0, 250, 500],
            adapt_k: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default = "default_principals")]
    pub principals: Vec<PrincipalSpec>,
    #[serde(default)]
    pub tasks: TaskConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub stackelberg: StackelbergConfig,
}

fn default_out_dir() -> String {
    "results".to_string()
}

/// Serde default: empty defers to the experiment kind's principal list,
/// filled in by [`load_config`].
fn default_principals() -> Vec<PrincipalSpec> {
    Vec::new()
}

fn bandit_table_principals() -> Vec<PrincipalSpec> {
    vec![
        PrincipalSpec::NoIntervention,
        PrincipalSpec::S1 { level: 1.0 },
        PrincipalSpec::S2 { level: 1.0 },
        PrincipalSpec::Rb { level: 1.0 },
        PrincipalSpec::MfRl,
        PrincipalSpec::MfMaml,
        PrincipalSpec::WmRl,
        PrincipalSpec::Mermaide,
    ]
}

impl ExperimentConfig {
    /// Ready-to-run defaults for each experiment kind.
    pub fn for_kind(kind: ExperimentKind) -> Self {
        let mut cfg = ExperimentConfig {
            experiment: kind,
            out_dir: default_out_dir(),
            principals: bandit_table_principals(),
            tasks: TaskConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            stackelberg: StackelbergConfig::default(),
        };
        match kind {
            ExperimentKind::BanditTable1 => {}
            ExperimentKind::BanditTable2Crossalgo => {
                cfg.principals = vec![PrincipalSpec::NoIntervention, PrincipalSpec::Mermaide];
                cfg.eval.k_values = vec![0];
                cfg.eval.test_learners = ucb_grid().into_iter().chain(eps_grid()).collect();
            }
            ExperimentKind::Table4Calibration => {
                cfg.principals = vec![PrincipalSpec::NoIntervention];
                cfg.eval.k_values = vec![0];
                cfg.eval.test_learners = ucb_grid().into_iter().chain(eps_grid()).collect();
                // The published exploration counts assume much quieter reward
                // observations than the table protocols.
                cfg.tasks.noise_sigma = 0.0025;
            }
            ExperimentKind::B3Characterization => {
                cfg.principals = vec![
                    PrincipalSpec::NoIntervention,
                    PrincipalSpec::S1 { level: 1.0 },
                    PrincipalSpec::S2 { level: 1.0 },
                ];
                cfg.eval.k_values = vec![0];
            }
            ExperimentKind::StackelbergSingle | ExperimentKind::StackelbergMulti => {
                cfg.principals = vec![PrincipalSpec::SbMaml, PrincipalSpec::SbRl];
                cfg.train = TrainConfig {
                    e_train: 1000,
                    n_train: 8,
                    k_train: 1,
                    inner_lr: 0.05,
                    meta_lr: 0.01,
                    episodes_per_inner_update: 2,
                    horizon: 1,
                    hidden_dim: 16,
                    gru_layers: 1,
                    parallel: false,
                    ..TrainConfig::default()
                };
                if kind == ExperimentKind::StackelbergMulti {
                    cfg.stackelberg.obs_noise_sigma = 0.1;
                    cfg.stackelberg.horizon = 100;
                    cfg.train.horizon = 100;
                    cfg.train.e_train = 200;
                    cfg.stackelberg.checkpoints = vec![0, 50, 100];
                }
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_dir.is_empty() {
            return Err(Error::config("out_dir must not be empty"));
        }
        if self.principals.is_empty() {
            return Err(Error::config("at least one principal is required"));
        }
        self.train.validate()?;
        for p in &self.principals {
            match *p {
                PrincipalSpec::S1 { level }
                | PrincipalSpec::S2 { level }
                | PrincipalSpec::Rb { level } => {
                    level_index(level)?;
                }
                _ => {}
            }
            if self.experiment.is_stackelberg() != p.is_stackelberg() {
                return Err(Error::config(format!(
                    "principal {} does not fit experiment {}",
                    p.label(),
                    self.experiment.label()
                )));
            }
            if self.experiment == ExperimentKind::B3Characterization
                && !matches!(
                    p,
                    PrincipalSpec::NoIntervention
                        | PrincipalSpec::S1 { .. }
                        | PrincipalSpec::S2 { .. }
                )
            {
                return Err(Error::config(format!(
                    "principal {} has no role in the strategy characterization",
                    p.label()
                )));
            }
        }
        if self.experiment.is_stackelberg() {
            self.validate_stackelberg()
        } else {
            self.validate_bandit()
        }
    }

    fn validate_bandit(&self) -> Result<()> {
        let t = &self.tasks;
        if t.n_train == 0 || t.n_test == 0 {
            return Err(Error::config("task counts must be positive"));
        }
        if t.num_arms < 2 {
            return Err(Error::config("num_arms must be at least 2"));
        }
        if t.noise_sigma < 0.0 {
            return Err(Error::config("noise_sigma must be nonnegative"));
        }
        t.train_learner.validate()?;
        if !t.train_learner.is_bandit() {
            return Err(Error::config("train_learner must be a bandit algorithm"));
        }
        for task in &t.explicit_test {
            if task.base_rewards.len() != t.num_arms {
                return Err(Error::config(format!(
                    "explicit task has {} arms, config says {}",
                    task.base_rewards.len(),
                    t.num_arms
                )));
            }
            BanditTask::new(task.base_rewards.clone(), task.a_star, t.noise_sigma, t.train_learner)?;
        }
        let e = &self.eval;
        if e.k_values.is_empty() || e.eval_seeds.is_empty() || e.test_learners.is_empty() {
            return Err(Error::config("k_values, eval_seeds, and test_learners must be nonempty"));
        }
        if e.horizon == 0 || e.eval_episodes == 0 {
            return Err(Error::config("horizon and eval_episodes must be positive"));
        }
        if !(e.alpha.is_finite() && e.alpha >= 0.0) {
            return Err(Error::config("alpha must be finite and nonnegative"));
        }
        if !(e.gamma > 0.0 && e.gamma <= 1.0) {
            return Err(Error::config("gamma must lie in (0,1]"));
        }
        for l in &e.test_learners {
            l.validate()?;
            if !l.is_bandit() {
                return Err(Error::config("test learners must be bandit algorithms"));
            }
        }
        Ok(())
    }

    fn validate_stackelberg(&self) -> Result<()> {
        let s = &self.stackelberg;
        if !(0.0 < s.cost && s.cost < 1.0) {
            return Err(Error::config("stackelberg cost must lie in (0,1)"));
        }
        if s.obs_noise_sigma < 0.0 {
            return Err(Error::config("observation noise must be nonnegative"));
        }
        let single = self.experiment == ExperimentKind::StackelbergSingle;
        if single && s.horizon != 1 {
            return Err(Error::config("stackelberg_single requires horizon 1"));
        }
        if !single && s.horizon < 2 {
            return Err(Error::config("stackelberg_multi requires horizon ≥ 2"));
        }
        if s.test_types.is_empty() {
            return Err(Error::config("at least one test type is required"));
        }
        for &u in &s.test_types {
            if !(0.0 < u && u < 1.0) {
                return Err(Error::config(format!("test type {u} outside (0,1)")));
            }
        }
        for &c in &s.checkpoints {
            if c > self.train.e_train {
                return Err(Error::config(format!(
                    "checkpoint {c} exceeds e_train {}",
                    self.train.e_train
                )));
            }
        }
        Ok(())
    }
}

/// SHA-256 over the canonical JSON rendering; any field change changes it.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let json = serde_json::to_string(cfg).map_err(|e| Error::Serde(e.to_string()))?;
    Ok(sha256_hex(json.as_bytes()))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut cfg: ExperimentConfig =
        toml::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
    if cfg.principals.is_empty() {
        cfg.principals = ExperimentConfig::for_kind(cfg.experiment).principals;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Render a config back to TOML (the schema documentation is the output of
/// this on the defaults).
pub fn to_toml(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string_pretty(cfg).map_err(|e| Error::Serde(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_for_every_kind() {
        for kind in [
            ExperimentKind::StackelbergSingle,
            ExperimentKind::StackelbergMulti,
            ExperimentKind::BanditTable1,
            ExperimentKind::BanditTable2Crossalgo,
            ExperimentKind::Table4Calibration,
            ExperimentKind::B3Characterization,
        ] {
            let cfg = ExperimentConfig::for_kind(kind);
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", kind.label()));
        }
    }

    #[test]
    fn toml_round_trip_preserves_the_config() {
        let cfg = ExperimentConfig::for_kind(ExperimentKind::BanditTable1);
        let text = to_toml(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn minimal_toml_fills_defaults() {
        let bare: ExperimentConfig = toml::from_str("experiment = \"bandit_table1\"").unwrap();
        assert_eq!(bare.tasks.n_train, 15);
        assert_eq!(bare.eval.eval_seeds, vec![0, 1, 2]);
        // An omitted principal list defers to the experiment kind.
        assert!(bare.principals.is_empty());
        let path = std::env::temp_dir()
            .join(format!("steer_minimal_cfg_{}.toml", std::process::id()));
        std::fs::write(&path, "experiment = \"bandit_table1\"").unwrap();
        let cfg = load_config(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(cfg.principals.len(), 8);
        cfg.validate().unwrap();
    }

    #[test]
    fn hash_changes_iff_a_field_changes() {
        let a = ExperimentConfig::for_kind(ExperimentKind::BanditTable1);
        let mut b = a.clone();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.tasks.test_seed += 1;
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.tasks.test_seed -= 1;
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }

    #[test]
    fn cross_kind_principals_are_rejected() {
        let mut cfg = ExperimentConfig::for_kind(ExperimentKind::BanditTable1);
        cfg.principals.push(PrincipalSpec::SbMaml);
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::for_kind(ExperimentKind::StackelbergSingle);
        cfg.principals.push(PrincipalSpec::Mermaide);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn off_grid_rule_levels_are_rejected() {
        let mut cfg = ExperimentConfig::for_kind(ExperimentKind::BanditTable1);
        cfg.principals = vec![PrincipalSpec::S1 { level: 0.25 }];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn checkpoints_beyond_training_are_rejected() {
        let mut cfg = ExperimentConfig::for_kind(ExperimentKind::StackelbergSingle);
        cfg.stackelberg.checkpoints = vec![cfg.train.e_train + 1];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn train_overrides_pin_the_inner_loop_and_inputs() {
        let base = TrainConfig::default();
        let mf = PrincipalSpec::MfRl.train_overrides(&base);
        assert_eq!(mf.k_train, 0);
        assert_eq!(mf.conditioning, Conditioning::PrevOnly);
        let full = PrincipalSpec::Mermaide.train_overrides(&base);
        assert_eq!(full.k_train, 1);
        assert_eq!(full.conditioning, Conditioning::Full);
        let mut zero = base.clone();
        zero.k_train = 0;
        assert_eq!(PrincipalSpec::MfMaml.train_overrides(&zero).k_train, 1);
    }
}
