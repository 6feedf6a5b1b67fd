//! Ground-truth instrumentation of the epoch learner.
//!
//! Nothing here is visible to the learner. Given a finished [`Trace`], the
//! loss oracle and the true context distribution, [`analyze`] replays the
//! learner deterministically and measures the quantities its regret analysis
//! talks about: the true importance `f_e`, the oracle-weighted estimates
//! `l~`, the auxiliary distributions `p~`, the concentration events, and the
//! six-term regret decomposition.
//!
//! [`Trace`]: crate::trace::Trace

mod replay;

use serde::Serialize;

use crate::algo::ParamSchedule;
use crate::error::Result;
use crate::simplex::{softmax_weights, ContextDistribution, SimplexVector};

pub use replay::{analyze, decomposition, pairing_gap, DecompositionLedger, RunDiagnostics};

/// `f_e(a) = E_{c ~ nu}[s_e,c(a) / 2]`: the probability that a loss-role
/// round uses arm `a`'s loss.
pub fn true_importance(snapshots: &[SimplexVector], nu: &ContextDistribution) -> Vec<f64> {
    let arms = snapshots.first().map_or(0, SimplexVector::len);
    let mut f = vec![0.0; arms];
    for (c, s) in snapshots.iter().enumerate() {
        for (fa, &sa) in f.iter_mut().zip(s.as_slice()) {
            *fa += nu[c] * sa / 2.0;
        }
    }
    f
}

/// `2 loss / (f_e(a) + gamma)`.
pub fn tilde_increment(loss: f64, importance: f64, gamma: f64) -> f64 {
    2.0 * loss / (importance + gamma)
}

/// The oracle-weighted estimate `l~_t,c` for every context from one round:
/// non-zero only at `arm`, and only when the round is a loss round whose
/// loss was used.
pub fn tilde_estimate(loss_row: &[f64], arm: usize, used: bool, f_e: &[f64], gamma: f64) -> Vec<Vec<f64>> {
    let arms = f_e.len();
    loss_row
        .iter()
        .map(|&l| {
            let mut v = vec![0.0; arms];
            if used {
                v[arm] = tilde_increment(l, f_e[arm], gamma);
            }
            v
        })
        .collect()
}

/// `p~ ∝ base ∘ exp(-eta * tilde_sum)`.
pub fn tilde_p(base: &SimplexVector, tilde_sum: &[f64], eta: f64) -> Result<SimplexVector> {
    softmax_weights(tilde_sum, eta, Some(base))
}

/// `F_e`: every arm's importance estimate is within
/// `2 max(sqrt(f iota / L), iota / L)` of the truth.
pub fn frequency_event(f: &[f64], fhat: &[f64], iota: f64, epoch_len: usize) -> bool {
    let l = epoch_len as f64;
    f.iter().zip(fhat).all(|(&fa, &fh)| {
        let radius = 2.0 * (fa * iota / l).sqrt().max(iota / l);
        (fh - fa).abs() <= radius
    })
}

/// `L_e`: no context/arm accumulates more than `L + iota / gamma` of `l~`
/// within the epoch.
pub fn loss_event(max_tilde_sum: f64, epoch_len: usize, iota: f64, gamma: f64) -> bool {
    max_tilde_sum <= epoch_len as f64 + iota / gamma
}

/// Smallest and largest `(f(a) + gamma) / (f̂(a) + 3 gamma / 2)` over arms.
pub fn ratio_range(f: &[f64], fhat: &[f64], gamma: f64) -> (f64, f64) {
    f.iter()
        .zip(fhat)
        .map(|(&fa, &fh)| (fa + gamma) / (fh + 1.5 * gamma))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

/// `1/2 <= (f(a) + gamma) / (f̂(a) + 3 gamma / 2) <= 2` for every arm.
pub fn ratio_check(f: &[f64], fhat: &[f64], gamma: f64) -> bool {
    let (lo, hi) = ratio_range(f, fhat, gamma);
    lo >= 0.5 && hi <= 2.0
}

/// Per-epoch counts gathered while replaying a trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochObservations {
    pub max_tilde_sum: f64,
    pub fallback_count: usize,
    pub loss_rounds: usize,
    /// Loss rounds where some arm has `E_c[p~_t,c(a)] > 4 f_e(a)`.
    pub tilde_mass_violations: usize,
    /// Loss rounds where some arm has `E_c[p_t,c(a)] > 4 f_e(a)`.
    pub mass_violations: usize,
    /// `(t, c, a)` with `p_t,c(a)` outside `[s_e,c(a)/2, 2 s_e,c(a)]`.
    pub p_band_violations: usize,
    /// Same band check for `p~_t,c(a)`.
    pub tilde_p_band_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochEvents {
    pub epoch: usize,
    pub completed: bool,
    /// `F_e`
    pub frequency_event: bool,
    /// `L_e`
    pub loss_event: bool,
    pub fallback_count: usize,
    pub loss_rounds: usize,
    pub max_tilde_sum: f64,
    /// Range of `(f + gamma) / (f̂ + 3 gamma / 2)`; absent in epoch 1.
    pub ratio_min: Option<f64>,
    pub ratio_max: Option<f64>,
    pub ratio_ok: Option<bool>,
    pub j_violations: usize,
    pub l_violations: usize,
    pub p_band_violations: usize,
    pub tilde_p_band_violations: usize,
}

/// Evaluates the concentration events of one epoch. `fhat` is `None` for
/// epoch 1, where no estimate is formed and both events hold trivially.
pub fn indicator_events(
    epoch: usize,
    completed: bool,
    obs: &EpochObservations,
    f: &[f64],
    fhat: Option<&[f64]>,
    schedule: &ParamSchedule,
) -> EpochEvents {
    let (frequency_event, ratio) = match fhat {
        Some(fh) => (
            frequency_event(f, fh, schedule.iota, schedule.epoch_len),
            Some(ratio_range(f, fh, schedule.gamma)),
        ),
        None => (true, None),
    };
    EpochEvents {
        epoch,
        completed,
        frequency_event,
        loss_event: loss_event(obs.max_tilde_sum, schedule.epoch_len, schedule.iota, schedule.gamma),
        fallback_count: obs.fallback_count,
        loss_rounds: obs.loss_rounds,
        max_tilde_sum: obs.max_tilde_sum,
        ratio_min: ratio.map(|r| r.0),
        ratio_max: ratio.map(|r| r.1),
        ratio_ok: ratio.map(|(lo, hi)| lo >= 0.5 && hi <= 2.0),
        j_violations: obs.tilde_mass_violations,
        l_violations: obs.mass_violations,
        p_band_violations: obs.p_band_violations,
        tilde_p_band_violations: obs.tilde_p_band_violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(w: &[f64]) -> SimplexVector {
        SimplexVector::new(w.to_vec()).unwrap()
    }

    #[test]
    fn importance_arithmetic() {
        let nu = ContextDistribution::uniform(2);
        let f = true_importance(&[sv(&[0.4, 0.6]), sv(&[0.8, 0.2])], &nu);
        assert!((f[0] - 0.3).abs() < 1e-15 && (f[1] - 0.2).abs() < 1e-15);
        let f = true_importance(&vec![SimplexVector::uniform(5); 3], &ContextDistribution::uniform(3));
        for fa in &f {
            assert!((fa - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn importance_sums_to_half() {
        let nu = ContextDistribution::new(vec![0.1, 0.6, 0.3]).unwrap();
        let snaps = [sv(&[0.2, 0.3, 0.5]), sv(&[0.9, 0.05, 0.05]), sv(&[1.0 / 3.0; 3])];
        let f = true_importance(&snaps, &nu);
        assert!((f.iter().sum::<f64>() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tilde_estimate_structure() {
        let none = tilde_estimate(&[0.8, 0.4], 1, false, &[0.3, 0.2], 0.1);
        assert!(none.iter().flatten().all(|&x| x == 0.0));
        let est = tilde_estimate(&[0.8, 0.4], 0, true, &[0.3, 0.2], 0.1);
        assert!((est[0][0] - 4.0).abs() < 1e-12);
        assert!((est[1][0] - 2.0).abs() < 1e-12);
        assert_eq!(est[0][1], 0.0);
    }

    #[test]
    fn hat_over_tilde_is_the_importance_ratio() {
        let (l, f, fh, g) = (0.7, 0.3, 0.22, 0.05);
        let hat = 2.0 * l / (fh + 1.5 * g);
        let tilde = tilde_increment(l, f, g);
        assert!((hat / tilde - (f + g) / (fh + 1.5 * g)).abs() < 1e-12);
    }

    #[test]
    fn tilde_p_cases() {
        let base = sv(&[0.3, 0.7]);
        assert_eq!(tilde_p(&base, &[0.0, 0.0], 0.5).unwrap(), base);
        let eta = 0.25;
        let p = tilde_p(&SimplexVector::uniform(2), &[0.0, 2f64.ln() / eta], eta).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn frequency_event_examples() {
        let f = [0.3, 0.2];
        assert!(frequency_event(&f, &[0.31, 0.19], 4.0, 100));
        assert!(!frequency_event(&f, &[0.9, 0.1], 4.0, 100));
    }

    #[test]
    fn loss_event_example() {
        assert!(loss_event(50.0, 100, 4.0, 0.64));
        assert!(loss_event(106.25, 100, 4.0, 0.64));
        assert!(!loss_event(106.3, 100, 4.0, 0.64));
    }

    #[test]
    fn ratio_examples() {
        let f = [0.3, 0.2];
        assert!(ratio_check(&f, &f, 0.05));
        let (lo, hi) = ratio_range(&f, &f, 0.05);
        assert!(lo > 2.0 / 3.0 && hi < 1.0);
        let (lo, _) = ratio_range(&[0.0], &[0.5], 0.01);
        assert!((lo - 0.01 / 0.515).abs() < 1e-12);
        assert!(!ratio_check(&[0.0], &[0.5], 0.01));
    }

    #[test]
    fn epoch_one_events_hold_trivially() {
        let s = ParamSchedule::new(4.0, 100, 0.64, 0.01, 0.1).unwrap();
        let ev = indicator_events(1, true, &EpochObservations::default(), &[0.25, 0.25], None, &s);
        assert!(ev.frequency_event && ev.loss_event);
        assert!(ev.ratio_ok.is_none());
    }
}
