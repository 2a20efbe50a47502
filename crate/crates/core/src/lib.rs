//! Adaptive tracking control for periodic tasks: a conditional-GAN
//! steady-state policy with a RISE regulator, plus direct (actor–critic)
//! and indirect (EKF + learned decoder) adaptation of the policy's
//! latent input. Benchmarked on a planar 2-DoF manipulator.

pub mod bench;
pub mod cgan;
pub mod ekf_indirect;
pub mod error;
pub mod nn;
pub mod plant;
pub mod rise;
pub mod rl_direct;
pub mod tfs;

pub use error::{Error, Result};
