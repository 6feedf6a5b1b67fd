//! Reference learners.
//!
//! - `Uniform` ignores feedback.
//! - `PerContextExp3Ix` runs an independent EXP3-IX learner per context with
//!   learning rate `sqrt(2 ln K / (K T / C))` and implicit exploration half of
//!   that. A round only touches the learner of its own context.
//! - `KnownNuCross` is a single cross-learning exponential-weights learner
//!   that is handed the true context distribution: after playing `a` it
//!   updates every context with `loss / (E_c[p_c(a)] + gamma_ix)`, with
//!   `eta = sqrt(2 ln K / (K T))` and `gamma_ix = eta / 2`.

use serde::{Deserialize, Serialize};

use crate::env::sample_context;
use crate::error::{Error, Result};
use crate::loss::LossOracle;
use crate::rng::RngStreams;
use crate::simplex::{sample_categorical, softmax_into, ContextDistribution, SimplexVector};
use crate::trace::{Role, RoundRecord, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    PerContextExp3ix,
    KnownNuCross,
    Uniform,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::PerContextExp3ix => "per_context_exp3ix",
            BaselineKind::KnownNuCross => "known_nu_cross",
            BaselineKind::Uniform => "uniform",
        }
    }
}

/// EXP3-IX learning rate for `rounds` rounds.
pub fn exp3ix_learning_rate(arms: usize, rounds: f64) -> f64 {
    (2.0 * (arms as f64).ln() / (arms as f64 * rounds)).sqrt()
}

pub fn run_baseline(
    kind: BaselineKind,
    oracle: &impl LossOracle,
    nu: &ContextDistribution,
    horizon: usize,
    rngs: &mut RngStreams,
) -> Result<Trace> {
    let (contexts, arms) = (oracle.num_contexts(), oracle.num_arms());
    if horizon != oracle.horizon() {
        return Err(Error::DimensionMismatch(format!(
            "horizon {horizon} differs from the oracle's {}",
            oracle.horizon()
        )));
    }
    if nu.len() != contexts {
        return Err(Error::DimensionMismatch(format!(
            "context distribution has {} entries, oracle has {contexts} contexts",
            nu.len()
        )));
    }
    let mut trace = Trace::new(arms, contexts, horizon, None);
    match kind {
        BaselineKind::Uniform => {
            let p = SimplexVector::uniform(arms);
            for t in 0..horizon {
                let context = sample_context(nu, &mut rngs.context);
                let arm = sample_categorical(&p, &mut rngs.action);
                push(&mut trace, t, context, arm, p.as_slice())?;
            }
        }
        BaselineKind::PerContextExp3ix => {
            let rounds_per_context = (horizon as f64 / contexts as f64).max(1.0);
            let eta = exp3ix_learning_rate(arms, rounds_per_context);
            let gamma = eta / 2.0;
            let mut cumloss = vec![0.0; contexts * arms];
            let mut p = vec![0.0; arms];
            for t in 0..horizon {
                let context = sample_context(nu, &mut rngs.context);
                let own = &mut cumloss[context * arms..(context + 1) * arms];
                softmax_into(own, eta, None, &mut p);
                let pv = SimplexVector::from_normalized(p.clone());
                let arm = sample_categorical(&pv, &mut rngs.action);
                own[arm] += oracle.loss(t, context, arm) / (p[arm] + gamma);
                push(&mut trace, t, context, arm, &p)?;
            }
        }
        BaselineKind::KnownNuCross => {
            let eta = exp3ix_learning_rate(arms, horizon as f64);
            let gamma = eta / 2.0;
            let mut cumloss = vec![0.0; contexts * arms];
            let mut probs = vec![0.0; contexts * arms];
            let mut importance = vec![0.0; arms];
            let mut row = vec![0.0; contexts];
            for t in 0..horizon {
                for c in 0..contexts {
                    let range = c * arms..(c + 1) * arms;
                    softmax_into(&cumloss[range.clone()], eta, None, &mut probs[range]);
                }
                mixture_importance(&probs, nu, &mut importance);
                let context = sample_context(nu, &mut rngs.context);
                let p = &probs[context * arms..(context + 1) * arms];
                let arm = sample_categorical(&SimplexVector::from_normalized(p.to_vec()), &mut rngs.action);
                push(&mut trace, t, context, arm, p)?;
                oracle.loss_row_into(t, arm, &mut row);
                let denom = importance[arm] + gamma;
                for (c, &l) in row.iter().enumerate() {
                    cumloss[c * arms + arm] += l / denom;
                }
            }
        }
    }
    Ok(trace)
}

/// `E_c[p_c(a)]` for every arm, with `probs` holding one row of `K` per context.
pub(crate) fn mixture_importance(probs: &[f64], nu: &ContextDistribution, out: &mut [f64]) {
    let arms = out.len();
    out.iter_mut().for_each(|x| *x = 0.0);
    for (c, pc) in probs.chunks(arms).enumerate() {
        for (imp, &pa) in out.iter_mut().zip(pc) {
            *imp += nu[c] * pa;
        }
    }
}

fn push(trace: &mut Trace, t: usize, context: usize, arm: usize, p: &[f64]) -> Result<()> {
    trace.push_round(
        RoundRecord {
            t,
            context,
            arm,
            fallback: false,
            keep: None,
            role: Role::Unpaired,
        },
        p,
        p,
    )
}
