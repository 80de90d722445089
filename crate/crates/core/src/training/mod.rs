//! PPO self-play: GAE advantages, the clipped-surrogate update, lockstep
//! rollout collection against a snapshot pool, and the stage curriculum.

mod curriculum;
mod gae;
mod pool;
mod ppo;
mod rollout;
mod trainer;

pub use curriculum::{curriculum_advance, Curriculum, CurriculumStage, PromotionRule, FINAL_STAGE, FIXED_RESERVATION};
pub use gae::compute_gae;
pub use pool::{OpponentPool, PoolConfig};
pub use ppo::{
    clip_grad_norm, clipped_surrogate, normalize_advantages, ppo_update, surrogate_objective,
    PpoConfig, RolloutBuffer, Sample, UpdateStats,
};
pub use rollout::{collect_parallel, collect_rollouts, worker_seed, Rollout, RolloutOptions, EXPLOITERS};
pub use trainer::{
    checkpoint_path, IterationLog, Trainer, TrainerConfig, CHECKPOINT_DIR, FINAL_CHECKPOINT, LOG_FILE,
};
