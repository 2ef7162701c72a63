//! Entropy-payoff trade-off toolkit for two-player zero-sum games.
//!
//! The crate computes how much payoff a player can guarantee with a limited amount of
//! randomness, and checks those curves operationally:
//!
//! - [`game`] and [`lp`]: payoff matrices, security levels and exact game values.
//! - [`info`]: entropies, divergences and collision entropy.
//! - [`minentropy`]: the min-entropy function, its concave envelope and closed-form bounds.
//! - [`separation`]: distance bounds between strategy polytopes.
//! - [`randomness`]: hashing extractors and source simulation from uniform bits.
//! - [`repeated`]: Monte-Carlo runs of the repeated game with a leaked randomness source.
//! - [`team`]: the team maxmin value under imperfect monitoring.
//! - [`cli`]: the `entrogame` command-line interface.

pub mod cli;
pub mod error;
pub mod formats;
pub mod game;
pub mod info;
pub mod lp;
pub mod minentropy;
pub mod randomness;
pub mod rational;
pub mod repeated;
pub mod rng;
pub mod separation;
pub mod team;

pub use error::{Error, Result};
pub use game::{PayoffMatrix, ProbVector};
pub use info::JointPmf;
pub use rational::Rational;
