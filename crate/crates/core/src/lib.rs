//! Coordinate ascent policy optimization (CAPO) for tabular softmax policies.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: finite MDPs, the bandit and Chain environments, rollout sampling.
//! - [`exact`]: closed-form policy evaluation, visitation, optimal values.
//! - [`policy`]: softmax tables and the CAPO step-size rules.
//! - [`capo`]: the coordinate update, coordinate generators, one-step
//!   oracles and the training loop.
//! - [`baselines`]: on-policy CAPO, stochastic policy gradient, Off-PAC and
//!   the multi-seed bandit study runner.
//! - [`critic`]: replay buffer and tabular Retrace(λ) critic.
//! - [`ncapo`]: neural CAPO with a one-hidden-layer policy network.
//! - [`cli`]: experiment configuration, seeding and CSV emission.

// `!(x > 0.0)` rejects NaN along with non-positive values, and the numeric
// kernels index several parallel arrays by the same loop variable.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod capo;
pub mod cli;
pub mod critic;
pub mod error;
pub mod exact;
pub mod mdp;
pub mod ncapo;
pub mod policy;
pub mod rng;
pub mod table;

pub use error::{Error, Result};
pub use exact::ValueProfile;
pub use mdp::{Rollout, TabularMdp, Transition};
pub use policy::SoftmaxTable;
pub use table::StateActionTable;
