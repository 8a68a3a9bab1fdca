//! Core library for learned, cost-aware reward intervention.
//!
//! A principal repeatedly intervenes on the rewards experienced by an adaptive
//! agent (a bandit learner or a Stackelberg best-responder) to steer it toward
//! a preferred action while paying for each intervention. This crate provides:
//!
//! - a minimal reverse-mode autodiff tape supporting first- and second-order
//!   gradients over MLP/GRU networks ([`tape`], [`nn`], [`optim`]);
//! - the agent learners and the two interaction environments ([`agents`],
//!   [`env`]);
//! - the principal's world model, intervention policies, and fixed strategy
//!   rules ([`principal`]);
//! - training loops: REINFORCE, world-model likelihood training, meta-training
//!   with differentiated inner updates, and K-shot test-time adaptation
//!   ([`learning`]);
//! - data-parallel execution helpers with a sequential fallback ([`exec`]).
//!
//! All randomness flows through [`rng::SplitRng`]; there is no global RNG.

pub mod agents;
pub mod env;
pub mod error;
pub mod exec;
pub mod learning;
pub mod nn;
pub mod optim;
pub mod params;
pub mod principal;
pub mod rng;
pub mod tape;
pub mod value;

pub use error::{Error, Result};
