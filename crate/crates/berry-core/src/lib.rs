//! Simulator and evaluation harness for error-aware reinforcement learning
//! under low-voltage SRAM bit errors.
//!
//! The pipeline, end to end:
//!
//! ```text
//! voltage ──curve──▶ bit error rate ──faults──▶ corrupted quantized Q-network
//!    │                                                  │
//!    └──curve──▶ compute energy scale                   ▼
//!                      │                    gridworld rollouts (env, rl, eval)
//!                      ▼                                │
//!              UAV physics chain ◀── success rate, mean flight distance
//!              (sysmodel)
//!                      ▼
//!       flight time / flight energy / missions per battery charge
//! ```
//!
//! Training (`rl::berry_train`) runs a dual-pass DQN update: a clean TD
//! gradient plus a gradient evaluated at a bit-error-perturbed copy of the
//! network, so the learned policy tolerates the fault patterns it will meet
//! at low voltage. Everything is seed-deterministic; identical configs
//! produce byte-identical checkpoints and reports.

pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod faults;
pub mod qnet;
pub mod rl;
pub mod rng;
pub mod sysmodel;

pub use error::{Error, Result};
