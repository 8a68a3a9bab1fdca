//! Training loops: REINFORCE, world-model maximum likelihood,
//! meta-training, K-shot test-time adaptation, and evaluation.

pub mod adapt;
pub mod evaluate;
pub mod maml;
pub mod reinforce;
pub mod sampler;
pub mod wm_train;

pub use adapt::{k_shot_adapt, stackelberg_k_shot_adapt, AdaptResult};
pub use evaluate::{evaluate, mean_se, EvalResult};
pub use maml::{
    mermaide_meta_train, stackelberg_meta_train, training_log_csv, LogRow, MetaBatch,
    MetaTaskRollouts, StackelbergTrainResult, TrainConfig, TrainResult, TRAINING_LOG_HEADER,
};
pub use reinforce::{
    reinforce_surrogate, reinforce_update, replay_surrogate, returns_to_go, trace_utilities,
    EmaBaseline, TapedEpisodes,
};
pub use sampler::{
    rollout_bandit, rollout_bandit_tape, rollout_stackelberg, rollout_stackelberg_tape,
    RolloutConfig, SampledEpisode,
};
pub use wm_train::{train_world_model, ReplayBuffer, WmExample, WmTrainer};
