//! Flight control for a quadrotor with independently telescoping arms.
//!
//! One PPO-trained Beta policy is learned per arm-length extreme (the 16
//! vertices of the arm-length hypercube). At run time the current lengths are
//! written as a sparse convex combination of those vertices and the vertex
//! policies' mean actions are blended with the same weights.

pub mod ccomb;
pub mod checkpoint;
pub mod config;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod net;
pub mod policy;
pub mod ppo;
pub mod runtime;

pub use error::{Error, Result};
