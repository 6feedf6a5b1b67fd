//! Cross-learning contextual bandits against an oblivious adversary.
//!
//! The crate is organized around a single learner, [`algo`], which splits the
//! horizon into epochs, freezes a snapshot of its exponential-weights
//! distribution at every epoch boundary, and uses paired rounds to estimate
//! both how often each arm is observed and what its loss is for every context
//! at once. Everything else exists to feed it or to check it:
//!
//! - [`simplex`], [`rng`], [`loss`], [`trace`], [`regret`]: shared domain
//!   types, the deterministic RNG contract, and regret accounting.
//! - [`env`]: oblivious environments (shifting, first-price auction, sleeping).
//! - [`baselines`]: uniform play, per-context EXP3-IX, and a cross-learning
//!   learner that is told the context distribution.
//! - [`diagnostics`]: replays a trace against ground truth to compute the
//!   six-term regret decomposition and the concentration events.
//! - [`oracle`]: brute-force verifiers used by tests.
//! - [`sweep`], [`summary`]: the seeded experiment harness behind the CLI.

pub mod algo;
pub mod baselines;
pub mod diagnostics;
pub mod env;
mod error;
pub mod loss;
pub mod oracle;
pub mod regret;
pub mod rng;
pub mod simplex;
pub mod summary;
pub mod sweep;
pub mod trace;

pub use error::{Error, Result};
pub use loss::{LossOracle, TensorOracle};
pub use regret::{best_fixed_policy, realized_regret, Policy};
pub use rng::RngStreams;
pub use simplex::{sample_categorical, softmax_weights, ContextDistribution, SimplexVector};
pub use trace::{Role, RoundRecord, Trace};
