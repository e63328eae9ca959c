//! Thompson Sampling for partially observable contextual bandits.
//!
//! Contexts `x_i(t) ~ N(0, Σ_x)` are hidden; the learner sees
//! `y_i(t) = A·x_i(t) + ε`, filters them to `x̂_i(t) = E[x | y] = D·y`, and
//! runs Thompson Sampling on a Gaussian belief over the reward weights.
//!
//! - [`gaussian`]: SPD factorizations and Gaussian sampling
//! - [`environment`]: instances, the filter, round simulation
//! - [`policy`]: posterior updates and arm selection
//! - [`metrics`]: regret, estimation error, order-statistic constants
//! - [`harness`]: replication runner, aggregation, CSV
//! - [`cli`]: the `pocmab` command line

pub mod cli;
pub mod environment;
pub mod gaussian;
pub mod harness;
pub mod metrics;
pub mod policy;
pub mod rng;

pub use gaussian::{LinalgError, LowerTriangular, Matrix, SpdMatrix, Vector};
pub use rng::RandomStream;
