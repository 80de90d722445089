//! Hierarchical consensus network: a shared entity encoder, coalition-gated
//! multi-head attention over opponents, a stance head, and the action and
//! value heads trained by PPO.

mod features;
mod network;
mod params;
mod policy;

pub use features::{Batch, Features};
pub use network::{encode, forward, Forward, STANCE_SHIFT};
pub use params::{HcnConfig, HcnParams, ProposalMode, MANIFEST_FORMAT, SLOT_NAMES};
pub use policy::{
    act, entropy, evaluate_actions, log_prob, outputs, sample_action, Decision, PolicyOutput,
    StoredAction,
};

#[cfg(test)]
mod tests;
