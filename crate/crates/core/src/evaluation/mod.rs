//! Episode metrics, brute-force oracles, and the evaluation harness.

mod harness;
mod metrics;
mod pareto;
mod sweeps;

pub use harness::{
    episode_record, episode_seed, evaluate, play_episode, EvalConfig, EvalReport, SeatPolicy,
};
pub use metrics::{
    gini, read_episodes_csv, summarize, write_episodes_csv, EpisodeRecord, MetricsSummary,
    EPISODES_FORMAT, SUMMARY_FORMAT,
};
pub use pareto::{dominates, is_pareto_optimal, pareto_front, ParetoFront};
pub use sweeps::{
    ablate, scalability_sweep, scaled_stage, train_and_evaluate, AblationFlag, ScalePoint, VariantReport,
    EVAL_SEED_OFFSET,
};
