//! The epoch/snapshot cross-learning learner.
//!
//! Per context the learner keeps exponential weights over cumulative loss
//! estimates. The horizon is cut into epochs of `L` rounds. At the end of
//! every epoch the current distributions are frozen as a snapshot that is
//! used two epochs later:
//!
//! - Rejection sampling: the learner plays its FTRL distribution `p` unless
//!   some arm drops below half of the snapshot `s_e`, in which case it plays
//!   `s_e`. A keep coin with probability `s_e(a) / 2q(a)` then makes the
//!   chance of using arm `a`'s loss exactly `f_e(a) = E_c[s_e,c(a) / 2]`.
//! - `f_e` is unknown (it depends on the context distribution), so it is
//!   estimated during the previous epoch from the contexts of the
//!   frequency-role rounds alone, which keeps the estimate independent of the
//!   losses it later weights.
//! - Rounds are paired; both rounds of a pair play the same `p` and a random
//!   one of them is the frequency round, the other the loss round.

mod episode;
mod schedule;
mod state;

pub use episode::run_episode;
pub use schedule::{derive_schedule, ParamSchedule};
pub use state::{assign_pair_roles, keep_probability, reject_or_fallback, AlgoState, LossUpdate, PairOrder};
