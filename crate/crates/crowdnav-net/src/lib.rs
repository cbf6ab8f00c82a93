//! Recurrent attention policy network on a minimal reverse-mode autodiff
//! engine.
//!
//! The crate provides:
//! - [`matrix::Matrix`]: dense row-major `f64` matrices,
//! - [`tape::Tape`]: a recording tape with reverse-mode [`tape::Tape::backward`],
//! - [`gru`]: a gated recurrent unit assembled from tape ops,
//! - [`policy`]: the crowd-navigation network (human-human multi-head
//!   attention, robot-human attention, GRU, value and Gaussian action heads),
//! - [`checkpoint`]: a versioned text format for named parameter arrays,
//! - [`gradcheck`]: central finite-difference oracles used by the tests.

pub mod checkpoint;
pub mod controller;
pub mod error;
pub mod gradcheck;
pub mod gru;
pub mod matrix;
pub mod policy;
pub mod sweeps;
pub mod tape;

pub use controller::PolicyController;
pub use error::NetError;
pub use matrix::Matrix;
pub use policy::{
    build_human_features, build_robot_features, sample_action, NetDims, PolicyOutput,
    PolicyParams, PolicySession,
};
pub use tape::{Gradients, Tape, TensorId};
