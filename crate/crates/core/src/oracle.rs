//! Brute-force reference computations for tests.
//!
//! These are deliberately naive: exhaustive grids and plain Monte Carlo, with
//! no code shared with the learner.

use rand::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::LossOracle;
use crate::regret::{realized_regret, Policy};
use crate::simplex::SimplexVector;
use crate::trace::Trace;

/// Largest simplex dimension [`grid_argmin_ftrl`] accepts.
pub const GRID_MAX_ARMS: usize = 4;

/// Minimizes `<p, G> + (1/eta) sum p_i ln p_i` over the simplex grid with
/// spacing `step` by exhaustive enumeration.
pub fn grid_argmin_ftrl(cumloss: &[f64], eta: f64, step: f64) -> Result<SimplexVector> {
    let k = cumloss.len();
    if k == 0 || k > GRID_MAX_ARMS {
        return Err(Error::UnsupportedDimension {
            max: GRID_MAX_ARMS,
            got: k,
        });
    }
    if !(step > 0.0 && step <= 0.01) {
        return Err(Error::invalid(format!("grid step {step} must be in (0, 0.01]")));
    }
    if eta.is_nan() || eta <= 0.0 || cumloss.iter().any(|g| !g.is_finite()) {
        return Err(Error::invalid("eta must be positive and losses finite"));
    }
    let n = (1.0 / step).round() as usize;
    let objective = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .zip(cumloss)
            .map(|(&m, &g)| {
                let p = m as f64 / n as f64;
                let entropy = if m == 0 { 0.0 } else { p * p.ln() };
                p * g + entropy / eta
            })
            .sum()
    };

    let mut counts = vec![0; k];
    let mut best = (f64::INFINITY, counts.clone());
    enumerate(&mut counts, 0, n, &mut |c| {
        let v = objective(c);
        if v < best.0 {
            best = (v, c.to_vec());
        }
    });
    Ok(SimplexVector::from_normalized(
        best.1.iter().map(|&m| m as f64 / n as f64).collect(),
    ))
}

/// Calls `visit` on every way of writing `remaining` as an ordered sum of
/// `counts.len() - i` non-negative parts.
fn enumerate(counts: &mut [usize], i: usize, remaining: usize, visit: &mut impl FnMut(&[usize])) {
    if i + 1 == counts.len() {
        counts[i] = remaining;
        visit(counts);
        return;
    }
    for m in 0..=remaining {
        counts[i] = m;
        enumerate(counts, i + 1, remaining - m, visit);
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`.
    pub stderr: f64,
    pub n: usize,
}

impl McEstimate {
    /// `|mean - target| <= k * stderr`, with a small absolute floor so that
    /// deterministic samplers compare exactly.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + 1e-12
    }
}

/// Mean and standard error of `n >= 1000` independent calls of `sampler`.
pub fn mc_expectation<R, F>(mut sampler: F, rng: &mut R, n: usize) -> Result<McEstimate>
where
    R: RngCore + ?Sized,
    F: FnMut(&mut R) -> f64,
{
    if n < 1000 {
        return Err(Error::invalid(format!("Monte Carlo needs n >= 1000, got {n}")));
    }
    // Welford.
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 1..=n {
        let x = sampler(rng);
        let d = x - mean;
        mean += d / i as f64;
        m2 += d * (x - mean);
    }
    let var = m2 / (n - 1) as f64;
    Ok(McEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        n,
    })
}

/// The fixed policy with the smallest realized loss, by trying all `K^C`
/// policies on the trace's context sequence.
pub fn exhaustive_best_policy(trace: &Trace, oracle: &impl LossOracle) -> Result<Policy> {
    let (arms, contexts) = (trace.arms(), trace.contexts());
    let total = (arms as f64).powi(contexts as i32);
    if total > 1e6 {
        return Err(Error::UnsupportedDimension {
            max: 1_000_000,
            got: total as usize,
        });
    }
    let mut choice = vec![0; contexts];
    let mut best: Option<(f64, Policy)> = None;
    loop {
        let pi = Policy::new(choice.clone(), arms)?;
        // Higher regret against pi means pi itself lost less.
        let r = realized_regret(trace, oracle, &pi)?;
        if best.as_ref().is_none_or(|(b, _)| r > *b) {
            best = Some((r, pi));
        }
        let mut i = 0;
        loop {
            if i == contexts {
                return Ok(best.expect("at least one policy").1);
            }
            choice[i] += 1;
            if choice[i] < arms {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}
