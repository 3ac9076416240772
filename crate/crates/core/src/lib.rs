//! Cooperative inverse reinforcement learning under a pragmatic robot and a
//! pedagogic, noisily rational human.

// `!(x > 0.0)` is used on purpose so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod belief;
pub mod benchmark;
pub mod chefworld;
pub mod config;
pub mod error;
pub mod evaluator;
pub mod game;
pub mod grid;
pub mod scenario;
pub mod solver;

pub use belief::{Belief, RationalityModel};
pub use error::{CirlError, Result};
pub use game::{Actor, GameSpec};
pub use grid::BeliefGrid;
