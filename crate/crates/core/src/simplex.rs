//! Probability vectors over arms and contexts, the exponential-weights map, and
//! categorical sampling.

use std::ops::Index;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|sum - 1|` accepted when validating a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-12;

fn validate_probabilities(what: &str, weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::invalid(format!("{what} must be non-empty")));
    }
    if let Some((i, w)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !w.is_finite() || **w < 0.0)
    {
        return Err(Error::invalid(format!("{what}[{i}] = {w} is not a probability")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::invalid(format!("{what} sums to {sum}, expected 1")));
    }
    Ok(())
}

/// A probability distribution over `K` arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        validate_probabilities("simplex vector", &weights)?;
        Ok(Self(weights))
    }

    pub fn uniform(arms: usize) -> Self {
        assert!(arms > 0, "uniform distribution needs at least one arm");
        Self(vec![1.0 / arms as f64; arms])
    }

    pub fn one_hot(arms: usize, arm: usize) -> Self {
        assert!(arm < arms, "arm {arm} out of range for {arms} arms");
        let mut w = vec![0.0; arms];
        w[arm] = 1.0;
        Self(w)
    }

    /// Caller guarantees the invariants (used on freshly normalized output).
    pub(crate) fn from_normalized(weights: Vec<f64>) -> Self {
        debug_assert!(validate_probabilities("normalized", &weights).is_ok());
        Self(weights)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `true` when every coordinate is strictly positive.
    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&w| w > 0.0)
    }
}

impl Index<usize> for SimplexVector {
    type Output = f64;

    fn index(&self, arm: usize) -> &f64 {
        &self.0[arm]
    }
}

impl TryFrom<Vec<f64>> for SimplexVector {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights)
    }
}

impl From<SimplexVector> for Vec<f64> {
    fn from(p: SimplexVector) -> Self {
        p.0
    }
}

/// The distribution `nu` from which contexts are drawn i.i.d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ContextDistribution(Vec<f64>);

impl ContextDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_probabilities("context distribution", &probs)?;
        Ok(Self(probs))
    }

    pub fn uniform(contexts: usize) -> Self {
        assert!(contexts > 0, "need at least one context");
        Self(vec![1.0 / contexts as f64; contexts])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Draws one context index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        draw_index(&self.0, rng)
    }
}

impl Index<usize> for ContextDistribution {
    type Output = f64;

    fn index(&self, c: usize) -> &f64 {
        &self.0[c]
    }
}

impl TryFrom<Vec<f64>> for ContextDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<ContextDistribution> for Vec<f64> {
    fn from(nu: ContextDistribution) -> Self {
        nu.0
    }
}

/// Writes `base(a) * exp(-eta * cumloss(a))`, normalized, into `out`.
///
/// Works in the log domain with the maximum logit subtracted, so arbitrarily
/// large cumulative losses never overflow.
pub(crate) fn softmax_into(cumloss: &[f64], eta: f64, base: Option<&[f64]>, out: &mut [f64]) {
    debug_assert_eq!(cumloss.len(), out.len());
    let mut max = f64::NEG_INFINITY;
    for (a, (o, &g)) in out.iter_mut().zip(cumloss).enumerate() {
        let logit = match base {
            Some(b) => b[a].ln() - eta * g,
            None => -eta * g,
        };
        *o = logit;
        max = max.max(logit);
    }
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Exponential weights: the distribution proportional to
/// `base(a) * exp(-eta * cumloss(a))`, with `base` uniform when absent.
///
/// This is the closed-form minimizer of `<p, cumloss> + eta^-1 * sum p ln p`
/// over the simplex (relative entropy to `base` when one is given).
pub fn softmax_weights(
    cumloss: &[f64],
    eta: f64,
    base: Option<&SimplexVector>,
) -> Result<SimplexVector> {
    if cumloss.is_empty() {
        return Err(Error::invalid("cumulative loss vector is empty"));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid(format!("learning rate must be positive, got {eta}")));
    }
    if cumloss.iter().any(|g| !g.is_finite()) {
        return Err(Error::invalid("cumulative loss contains a non-finite entry"));
    }
    if let Some(b) = base {
        if b.len() != cumloss.len() {
            return Err(Error::DimensionMismatch(format!(
                "base has {} arms, cumulative loss has {}",
                b.len(),
                cumloss.len()
            )));
        }
        if !b.is_interior() {
            return Err(Error::invalid("base distribution must be strictly positive"));
        }
    }
    let mut out = vec![0.0; cumloss.len()];
    softmax_into(cumloss, eta, base.map(SimplexVector::as_slice), &mut out);
    Ok(SimplexVector::from_normalized(out))
}

fn draw_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // Rounding left the cumulative sum just under u.
    last_positive
}

/// Draws arm `a` with probability `p(a)`, consuming exactly one uniform draw.
pub fn sample_categorical<R: Rng + ?Sized>(p: &SimplexVector, rng: &mut R) -> usize {
    draw_index(p.as_slice(), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::grid_argmin_ftrl;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linf(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn softmax_symmetric_input_is_uniform() {
        let p = softmax_weights(&[0.0, 0.0], 1.0, None).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_closed_form_two_arms() {
        let p = softmax_weights(&[0.0, 2f64.ln()], 1.0, None).unwrap();
        assert!(linf(p.as_slice(), &[2.0 / 3.0, 1.0 / 3.0]) < 1e-15);
    }

    #[test]
    fn softmax_returns_base_for_zero_loss() {
        let base = SimplexVector::new(vec![0.8, 0.2]).unwrap();
        let p = softmax_weights(&[0.0, 0.0], 1.0, Some(&base)).unwrap();
        assert!(linf(p.as_slice(), &[0.8, 0.2]) < 1e-15);
    }

    #[test]
    fn softmax_matches_grid_search() {
        let g = [1.3, 0.2, 2.7];
        let p = softmax_weights(&g, 0.5, None).unwrap();
        let q = grid_argmin_ftrl(&g, 0.5, 0.005).unwrap();
        assert!(linf(p.as_slice(), q.as_slice()) <= 0.01);
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(softmax_weights(&[0.0, f64::NAN], 1.0, None).is_err());
        assert!(softmax_weights(&[0.0, f64::INFINITY], 1.0, None).is_err());
        assert!(softmax_weights(&[0.0, 1.0], 0.0, None).is_err());
        assert!(softmax_weights(&[0.0, 1.0], f64::NAN, None).is_err());
        let corner = SimplexVector::one_hot(2, 0);
        assert!(softmax_weights(&[0.0, 1.0], 1.0, Some(&corner)).is_err());
    }

    #[test]
    fn softmax_survives_huge_losses() {
        let p = softmax_weights(&[1e300, 1e300 + 1e285, 0.0], 1.0, None).unwrap();
        assert_eq!(p.as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn simplex_validation() {
        assert!(SimplexVector::new(vec![0.5, 0.5]).is_ok());
        assert!(SimplexVector::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexVector::new(vec![1.5, -0.5]).is_err());
        assert!(SimplexVector::new(vec![]).is_err());
        assert!(ContextDistribution::new(vec![0.2, 0.3, 0.5]).is_ok());
        assert!(ContextDistribution::new(vec![0.2, 0.3]).is_err());
    }

    #[test]
    fn degenerate_categorical_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let first = SimplexVector::new(vec![1.0, 0.0]).unwrap();
        let second = SimplexVector::new(vec![0.0, 1.0]).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&first, &mut rng), 0);
            assert_eq!(sample_categorical(&second, &mut rng), 1);
        }
    }

    #[test]
    fn categorical_frequency_within_three_sigma() {
        let p = SimplexVector::new(vec![0.3, 0.7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let zeros = (0..n).filter(|_| sample_categorical(&p, &mut rng) == 0).count();
        let freq = zeros as f64 / n as f64;
        assert!((freq - 0.3).abs() <= 3.0 * (0.21f64 / n as f64).sqrt(), "freq {freq}");
    }

    #[test]
    fn categorical_chi_square_goodness_of_fit() {
        // Upper 1e-3 quantile of chi-square with 3 degrees of freedom.
        const CRITICAL: f64 = 16.266;
        let p = SimplexVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_categorical(&p, &mut rng)] += 1;
        }
        let stat: f64 = counts
            .iter()
            .zip(p.as_slice())
            .map(|(&o, &pi)| {
                let e = pi * n as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        assert!(stat < CRITICAL, "chi-square statistic {stat}");
    }

    #[test]
    fn context_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let point = ContextDistribution::new(vec![1.0, 0.0]).unwrap();
        let single = ContextDistribution::uniform(1);
        for _ in 0..1000 {
            assert_eq!(point.sample(&mut rng), 0);
            assert_eq!(single.sample(&mut rng), 0);
        }
    }

    fn cumloss_strategy() -> impl Strategy<Value = Vec<f64>> {
        (2usize..8).prop_flat_map(|k| prop::collection::vec(-50.0f64..50.0, k))
    }

    proptest! {
        #[test]
        fn softmax_output_is_on_simplex(g in cumloss_strategy(), eta in 1e-4f64..10.0) {
            let p = softmax_weights(&g, eta, None).unwrap();
            prop_assert!(p.as_slice().iter().all(|&w| w >= 0.0));
            prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE);
        }

        #[test]
        fn softmax_shift_invariance(g in cumloss_strategy(), eta in 1e-3f64..2.0, shift in -1e3f64..1e3) {
            let p = softmax_weights(&g, eta, None).unwrap();
            let shifted: Vec<f64> = g.iter().map(|x| x + shift).collect();
            let q = softmax_weights(&shifted, eta, None).unwrap();
            prop_assert!(linf(p.as_slice(), q.as_slice()) < 1e-12);
        }

        #[test]
        fn softmax_monotone_in_own_loss(
            // Narrow enough that no coordinate rounds to exactly 1.
            g in (2usize..8).prop_flat_map(|k| prop::collection::vec(-5.0f64..5.0, k)),
            eta in 1e-2f64..2.0, bump in 1e-2f64..5.0, pick in 0usize..8) {
            let a = pick % g.len();
            let p = softmax_weights(&g, eta, None).unwrap();
            let mut h = g.clone();
            h[a] += bump;
            let q = softmax_weights(&h, eta, None).unwrap();
            prop_assert!(q[a] < p[a]);
        }
    }
}
