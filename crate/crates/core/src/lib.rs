//! Multi-agent negotiation arena.
//!
//! Agents bargain over multi-issue deals through a phased message protocol
//! ([`protocol`]) wrapped in a partially observable episode engine ([`env`](mod@env)).
//! A hierarchical attention policy ([`hcn`]), built on a small reverse-mode
//! tensor library ([`numerics`]), is trained by PPO self-play with a stage
//! curriculum and a snapshot opponent pool ([`training`]). [`rewards`] holds
//! the shaped reward and the opponent belief model, [`baselines`] the
//! rule-based negotiators and [`evaluation`] the metrics, brute-force oracles
//! and sweeps. The `diplomat` binary is a thin wrapper over [`cli`].

pub mod baselines;
pub mod cli;
pub mod config;
pub mod domain;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod hcn;
pub mod numerics;
pub mod protocol;
pub mod rewards;
pub mod training;

pub use error::{Error, Result};
