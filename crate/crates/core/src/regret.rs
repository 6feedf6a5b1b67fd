//! Comparator policies and realized regret.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossOracle;
use crate::trace::Trace;

/// A fixed map from context to arm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    arm_for_context: Vec<usize>,
}

impl Policy {
    pub fn new(arm_for_context: Vec<usize>, arms: usize) -> Result<Self> {
        if let Some((c, a)) = arm_for_context.iter().enumerate().find(|(_, &a)| a >= arms) {
            return Err(Error::invalid(format!("policy maps context {c} to arm {a} >= {arms}")));
        }
        Ok(Self { arm_for_context })
    }

    pub fn arm(&self, context: usize) -> usize {
        self.arm_for_context[context]
    }

    pub fn contexts(&self) -> usize {
        self.arm_for_context.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.arm_for_context
    }

    /// The policy that reproduces a trace's actions, if the trace always
    /// played the same arm in the same context. Unseen contexts map to arm 0.
    pub fn from_consistent_trace(trace: &Trace) -> Option<Self> {
        let mut map: Vec<Option<usize>> = vec![None; trace.contexts()];
        for r in trace.rounds() {
            match map[r.context] {
                None => map[r.context] = Some(r.arm),
                Some(a) if a != r.arm => return None,
                Some(_) => {}
            }
        }
        Some(Self {
            arm_for_context: map.into_iter().map(|a| a.unwrap_or(0)).collect(),
        })
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

fn check_dimensions(trace: &Trace, oracle: &impl LossOracle, pi: &Policy) -> Result<()> {
    if !trace.is_complete() {
        return Err(Error::invalid(format!(
            "trace covers {} of {} rounds",
            trace.rounds().len(),
            trace.horizon()
        )));
    }
    if trace.horizon() != oracle.horizon()
        || trace.contexts() != oracle.num_contexts()
        || trace.arms() != oracle.num_arms()
    {
        return Err(Error::DimensionMismatch(format!(
            "trace is {}x{}x{}, oracle is {}x{}x{}",
            trace.horizon(),
            trace.contexts(),
            trace.arms(),
            oracle.horizon(),
            oracle.num_contexts(),
            oracle.num_arms()
        )));
    }
    if pi.contexts() != trace.contexts() {
        return Err(Error::DimensionMismatch(format!(
            "policy covers {} contexts, trace has {}",
            pi.contexts(),
            trace.contexts()
        )));
    }
    if pi.as_slice().iter().any(|&a| a >= trace.arms()) {
        return Err(Error::DimensionMismatch("policy arm out of range".into()));
    }
    Ok(())
}

/// Per-round regret increment `loss(t, c_t, a_t) - loss(t, c_t, pi(c_t))`.
pub(crate) fn round_regret(oracle: &impl LossOracle, t: usize, context: usize, arm: usize, pi: &Policy) -> f64 {
    oracle.loss(t, context, arm) - oracle.loss(t, context, pi.arm(context))
}

/// `sum_t loss(t, c_t, a_t) - loss(t, c_t, pi(c_t))` over the whole trace.
pub fn realized_regret(trace: &Trace, oracle: &impl LossOracle, pi: &Policy) -> Result<f64> {
    check_dimensions(trace, oracle, pi)?;
    let mut total = CompensatedSum::default();
    for r in trace.rounds() {
        total.add(round_regret(oracle, r.t, r.context, r.arm, pi));
    }
    Ok(total.value())
}

/// Running regret after each round (entry `t` covers rounds `0..=t`).
pub fn cumulative_regret(trace: &Trace, oracle: &impl LossOracle, pi: &Policy) -> Result<Vec<f64>> {
    check_dimensions(trace, oracle, pi)?;
    let mut total = CompensatedSum::default();
    Ok(trace
        .rounds()
        .iter()
        .map(|r| {
            total.add(round_regret(oracle, r.t, r.context, r.arm, pi));
            total.value()
        })
        .collect())
}

/// Hindsight-optimal fixed policy: per context, the arm with the smallest
/// total loss over the rounds where that context occurred. Ties go to the
/// lowest arm index.
pub fn best_fixed_policy(oracle: &impl LossOracle, realized_contexts: &[usize]) -> Result<Policy> {
    let arms = oracle.num_arms();
    let contexts = oracle.num_contexts();
    if realized_contexts.len() > oracle.horizon() {
        return Err(Error::DimensionMismatch(format!(
            "{} contexts for horizon {}",
            realized_contexts.len(),
            oracle.horizon()
        )));
    }
    let mut totals = vec![CompensatedSum::default(); contexts * arms];
    for (t, &c) in realized_contexts.iter().enumerate() {
        if c >= contexts {
            return Err(Error::invalid(format!("context {c} at round {t} out of range")));
        }
        for a in 0..arms {
            totals[c * arms + a].add(oracle.loss(t, c, a));
        }
    }
    let arm_for_context = totals
        .chunks(arms)
        .map(|row| {
            let mut best = 0;
            for a in 1..arms {
                if row[a].value() < row[best].value() {
                    best = a;
                }
            }
            best
        })
        .collect();
    Ok(Policy { arm_for_context })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::TensorOracle;
    use crate::trace::{Role, RoundRecord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trace_from(arms: usize, contexts: usize, plays: &[(usize, usize)]) -> Trace {
        let mut tr = Trace::new(arms, contexts, plays.len(), None);
        let u = vec![1.0 / arms as f64; arms];
        for (t, &(context, arm)) in plays.iter().enumerate() {
            tr.push_round(
                RoundRecord {
                    t,
                    context,
                    arm,
                    fallback: false,
                    keep: None,
                    role: Role::Unpaired,
                },
                &u,
                &u,
            )
            .unwrap();
        }
        tr
    }

    #[test]
    fn zero_losses_give_zero_regret() {
        let oracle = TensorOracle::zeros(4, 2, 2);
        let tr = trace_from(2, 2, &[(0, 1), (1, 0), (0, 0), (1, 1)]);
        let pi = Policy::new(vec![1, 0], 2).unwrap();
        assert_eq!(realized_regret(&tr, &oracle, &pi).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_regret() {
        // loss(t, c, a), T = 4, C = 2, K = 2.
        let data = vec![
            0.1, 0.9, 0.5, 0.2, // t = 0
            0.3, 0.4, 0.8, 0.6, // t = 1
            1.0, 0.0, 0.25, 0.75, // t = 2
            0.6, 0.6, 0.3, 0.7, // t = 3
        ];
        let oracle = TensorOracle::new(4, 2, 2, data).unwrap();
        let tr = trace_from(2, 2, &[(0, 1), (1, 0), (0, 0), (1, 1)]);
        let pi = Policy::new(vec![0, 1], 2).unwrap();
        // (0.9-0.1) + (0.8-0.6) + (1.0-1.0) + (0.7-0.7)
        let expected = 0.8 + 0.2 + 0.0 + 0.0;
        assert!((realized_regret(&tr, &oracle, &pi).unwrap() - expected).abs() < 1e-15);
        let cum = cumulative_regret(&tr, &oracle, &pi).unwrap();
        assert!((cum[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn self_consistent_policy_has_zero_regret() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let oracle = TensorOracle::from_fn(50, 3, 4, |_, _, _| rng.random()).unwrap();
        let map = [2usize, 0, 3];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let plays: Vec<_> = (0..50)
            .map(|_| {
                let c = rng.random_range(0..3);
                (c, map[c])
            })
            .collect();
        let tr = trace_from(4, 3, &plays);
        let pi = Policy::from_consistent_trace(&tr).unwrap();
        assert_eq!(pi.as_slice(), &map);
        assert_eq!(realized_regret(&tr, &oracle, &pi).unwrap(), 0.0);

        let inconsistent = trace_from(4, 3, &[(0, 1), (0, 2)]);
        assert!(Policy::from_consistent_trace(&inconsistent).is_none());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let oracle = TensorOracle::zeros(3, 2, 2);
        let tr = trace_from(2, 2, &[(0, 0), (1, 1)]);
        let pi = Policy::new(vec![0, 0], 2).unwrap();
        assert!(realized_regret(&tr, &oracle, &pi).is_err());
        let oracle = TensorOracle::zeros(2, 3, 2);
        assert!(realized_regret(&tr, &oracle, &pi).is_err());
    }

    #[test]
    fn best_policy_tie_breaks_low() {
        let oracle = TensorOracle::zeros(6, 3, 4);
        let pi = best_fixed_policy(&oracle, &[0, 1, 2, 0, 1, 2]).unwrap();
        assert_eq!(pi.as_slice(), &[0, 0, 0]);
    }

    #[test]
    fn best_policy_single_context() {
        let oracle = TensorOracle::from_fn(10, 1, 2, |_, _, a| if a == 0 { 0.9 } else { 0.1 }).unwrap();
        let pi = best_fixed_policy(&oracle, &[0; 10]).unwrap();
        assert_eq!(pi.as_slice(), &[1]);
    }

    #[test]
    fn best_policy_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let oracle = TensorOracle::from_fn(5, 3, 4, |_, _, _| rng.random()).unwrap();
        let contexts: Vec<usize> = (0..5).map(|_| rng.random_range(0..3)).collect();
        let pi = best_fixed_policy(&oracle, &contexts).unwrap();
        for c in 0..3 {
            // Every alternative policy that differs only at c is no better.
            let total = |a: usize| -> f64 {
                contexts
                    .iter()
                    .enumerate()
                    .filter(|(_, &ct)| ct == c)
                    .map(|(t, _)| oracle.loss(t, c, a))
                    .sum()
            };
            let best = (0..4)
                .min_by(|&x, &y| total(x).partial_cmp(&total(y)).unwrap())
                .unwrap();
            assert_eq!(total(pi.arm(c)), total(best));
        }
    }

    #[test]
    fn best_policy_rejects_bad_context() {
        let oracle = TensorOracle::zeros(2, 2, 2);
        assert!(best_fixed_policy(&oracle, &[0, 5]).is_err());
    }
}
