//! Independent deep Q-learning with learned inter-agent communication.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: a tape-based reverse-mode differentiation engine over
//!   dense `f64` tensors, including [`autodiff::Var::detach`].
//! - [`nn`]: linear layers, a GRU cell, the recurrent Q-network, the message
//!   encoder, RMSprop and target synchronisation.
//! - [`envs`]: the punished predator-prey grid world and a signalling game.
//! - [`replay`]: an episode-granular FIFO buffer with padded batch assembly.
//! - [`trainer`]: the four learning configurations (parameter sharing on or
//!   off, communication on or off) and the gradient-flow diagnostics.
//! - `expcli` (feature `cli`): configuration files, multi-seed runs,
//!   CSV metrics and SVG plots.

pub mod autodiff;
pub mod envs;
mod error;
#[cfg(feature = "cli")]
pub mod expcli;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
