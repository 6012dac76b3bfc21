//! Multi-user semantic communication simulator.
//!
//! A gating policy picks which semantic modalities (edge, pose,
//! segmentation, depth, text) each user transmits over a Rayleigh-fading
//! link. Reconstruction quality is scored by a surrogate fidelity model,
//! low-fidelity deliveries are retransmitted, and learned gates are trained
//! online with a small from-scratch DQN.

pub mod channel;
pub mod dqn;
pub mod domain;
pub mod error;
pub mod fidelity;
pub mod policies;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
