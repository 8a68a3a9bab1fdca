//! Per-step episode records with a stable CSV layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One environment step as experienced by the principal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// 1-based step index.
    pub t: usize,
    /// Agent's action (arm index; 0=Cooperate, 1=Defect in the matrix game).
    pub agent_action: usize,
    /// Intervention level r' (bandit) or 0/1 intervene flag (matrix game).
    pub intervention: f64,
    /// Intervention cost c_t; nonnegative.
    pub cost: f64,
    /// Reward the agent experienced.
    pub agent_reward: f64,
    /// Principal's alignment reward; 0 or 1.
    pub principal_reward: f64,
    /// Log-probability of the principal's sampled intervention.
    pub logprob: f64,
    /// World-model prediction of the agent's action, when one was made.
    pub wm_prediction: Option<usize>,
}

/// A full episode, exactly `T` steps once complete.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
}

/// CSV column order; stable across releases.
pub const TRACE_CSV_HEADER: &str =
    "t,agent_action,intervention,cost,agent_reward,principal_reward,logprob,wm_prediction";

impl EpisodeTrace {
    pub fn new() -> Self {
        EpisodeTrace::default()
    }

    pub fn with_capacity(t: usize) -> Self {
        EpisodeTrace { steps: Vec::with_capacity(t) }
    }

    pub fn push(&mut self, step: TraceStep) {
        self.steps.push(step);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Check the trace invariants for a horizon `t_horizon`.
    pub fn validate(&self, t_horizon: usize) -> Result<()> {
        if self.steps.len() != t_horizon {
            return Err(Error::Invariant(format!(
                "trace length {} differs from horizon {t_horizon}",
                self.steps.len()
            )));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.t != i + 1 {
                return Err(Error::Invariant(format!("step {i} has index {}", s.t)));
            }
            if s.principal_reward != 0.0 && s.principal_reward != 1.0 {
                return Err(Error::Invariant(format!(
                    "principal reward must be 0 or 1, got {}",
                    s.principal_reward
                )));
            }
            if s.cost < 0.0 {
                return Err(Error::Invariant(format!("negative cost {}", s.cost)));
            }
        }
        Ok(())
    }

    /// Count of steps where the principal's alignment reward was 1.
    pub fn aligned_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.principal_reward == 1.0).count()
    }

    /// Sum of intervention costs.
    pub fn total_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.cost).sum()
    }

    /// Render as CSV with the documented header. Floats use the shortest
    /// round-trippable representation, so parsing back is exact.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.steps.len() + 1));
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for s in &self.steps {
            let wm = s.wm_prediction.map(|p| p.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.t,
                s.agent_action,
                s.intervention,
                s.cost,
                s.agent_reward,
                s.principal_reward,
                s.logprob,
                wm
            ));
        }
        out
    }

    /// Parse CSV produced by [`EpisodeTrace::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Serde("empty trace csv".to_string()))?;
        if header.trim() != TRACE_CSV_HEADER {
            return Err(Error::Serde(format!("unexpected trace header {header:?}")));
        }
        let mut steps = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(Error::Serde(format!(
                    "trace line {}: expected 8 fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let parse_f = |s: &str, what: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::Serde(format!("trace line {}: bad {what} {s:?}", lineno + 2)))
            };
            let parse_u = |s: &str, what: &str| -> Result<usize> {
                s.parse()
                    .map_err(|_| Error::Serde(format!("trace line {}: bad {what} {s:?}", lineno + 2)))
            };
            steps.push(TraceStep {
                t: parse_u(fields[0], "t")?,
                agent_action: parse_u(fields[1], "agent_action")?,
                intervention: parse_f(fields[2], "intervention")?,
                cost: parse_f(fields[3], "cost")?,
                agent_reward: parse_f(fields[4], "agent_reward")?,
                principal_reward: parse_f(fields[5], "principal_reward")?,
                logprob: parse_f(fields[6], "logprob")?,
                wm_prediction: if fields[7].is_empty() {
                    None
                } else {
                    Some(parse_u(fields[7], "wm_prediction")?)
                },
            });
        }
        Ok(EpisodeTrace { steps })
    }
}
