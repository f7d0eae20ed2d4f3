//! Values of zero-sum stochastic differential games whose payoffs are
//! defined through doubly reflected BSDEs.
//!
//! Three independent routes compute the same value and are cross-checked:
//!
//! * [`drbsde`]: backward reflected recursion on a Markov-chain lattice or
//!   by least-squares Monte Carlo over Euler paths;
//! * [`game`]: backward sup-inf / inf-sup induction, with an exact
//!   brute-force Dynkin-game oracle on small trees;
//! * [`pde`]: an explicit monotone finite-difference scheme for the
//!   double-obstacle Isaacs equation.

// `!(a < b)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod csv;
pub mod drbsde;
pub mod error;
pub mod game;
pub mod linalg;
pub mod model;
pub mod paths;
pub mod pde;
pub mod run;

pub use error::{Error, Result};
