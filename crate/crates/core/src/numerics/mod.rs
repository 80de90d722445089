//! Minimal dense tensors with reverse-mode differentiation, an LSTM cell,
//! Adam, and the binary checkpoint format.

mod adam;
mod checkpoint;
mod graph;
mod lstm;
mod tensor;

pub mod gradcheck;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, MAGIC as CHECKPOINT_MAGIC};
pub use graph::{sigmoid, Graph, Var};
pub use lstm::{lstm_cell, LstmVars};
pub use tensor::{Shape, Tensor, MAX_RANK};

#[cfg(test)]
mod tests;
