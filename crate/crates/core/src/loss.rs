//! Loss oracles: the full oblivious loss tensor `loss(t, c, a)`.
//!
//! Rounds are 0-based throughout the crate: `t` ranges over `0..horizon`.

use crate::error::{Error, Result};

/// An oblivious adversary's losses, fixed before the run.
///
/// Implementations must return values in `[0, 1]` that depend only on
/// `(t, c, a)` and whatever seed the oracle was built from.
pub trait LossOracle: Send + Sync {
    fn horizon(&self) -> usize;
    fn num_contexts(&self) -> usize;
    fn num_arms(&self) -> usize;

    fn loss(&self, t: usize, c: usize, a: usize) -> f64;

    /// Arm `a`'s loss at round `t` for every context: what cross-learning
    /// reveals when `a` is played.
    fn loss_row_into(&self, t: usize, a: usize, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.loss(t, c, a);
        }
    }

    fn loss_row(&self, t: usize, a: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.num_contexts()];
        self.loss_row_into(t, a, &mut row);
        row
    }
}

impl<O: LossOracle + ?Sized> LossOracle for &O {
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn num_contexts(&self) -> usize {
        (**self).num_contexts()
    }
    fn num_arms(&self) -> usize {
        (**self).num_arms()
    }
    fn loss(&self, t: usize, c: usize, a: usize) -> f64 {
        (**self).loss(t, c, a)
    }
    fn loss_row_into(&self, t: usize, a: usize, out: &mut [f64]) {
        (**self).loss_row_into(t, a, out)
    }
}

impl<O: LossOracle + ?Sized> LossOracle for Box<O> {
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn num_contexts(&self) -> usize {
        (**self).num_contexts()
    }
    fn num_arms(&self) -> usize {
        (**self).num_arms()
    }
    fn loss(&self, t: usize, c: usize, a: usize) -> f64 {
        (**self).loss(t, c, a)
    }
    fn loss_row_into(&self, t: usize, a: usize, out: &mut [f64]) {
        (**self).loss_row_into(t, a, out)
    }
}

/// A fully materialized `T x C x K` tensor, row-major in `(t, c, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorOracle {
    horizon: usize,
    contexts: usize,
    arms: usize,
    data: Vec<f64>,
}

impl TensorOracle {
    pub fn new(horizon: usize, contexts: usize, arms: usize, data: Vec<f64>) -> Result<Self> {
        if horizon == 0 || contexts == 0 || arms == 0 {
            return Err(Error::invalid("tensor dimensions must be positive"));
        }
        if data.len() != horizon * contexts * arms {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for {horizon}x{contexts}x{arms}, got {}",
                horizon * contexts * arms,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("loss {v} outside [0, 1]")));
        }
        Ok(Self {
            horizon,
            contexts,
            arms,
            data,
        })
    }

    pub fn from_fn(
        horizon: usize,
        contexts: usize,
        arms: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(horizon * contexts * arms);
        for t in 0..horizon {
            for c in 0..contexts {
                for a in 0..arms {
                    data.push(f(t, c, a));
                }
            }
        }
        Self::new(horizon, contexts, arms, data)
    }

    pub fn zeros(horizon: usize, contexts: usize, arms: usize) -> Self {
        Self::from_fn(horizon, contexts, arms, |_, _, _| 0.0).expect("zero tensor is valid")
    }

    /// Copies any oracle into memory.
    pub fn materialize(oracle: &impl LossOracle) -> Self {
        Self::from_fn(
            oracle.horizon(),
            oracle.num_contexts(),
            oracle.num_arms(),
            |t, c, a| oracle.loss(t, c, a),
        )
        .expect("oracle losses are in [0, 1]")
    }
}

impl LossOracle for TensorOracle {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn num_contexts(&self) -> usize {
        self.contexts
    }

    fn num_arms(&self) -> usize {
        self.arms
    }

    fn loss(&self, t: usize, c: usize, a: usize) -> f64 {
        self.data[(t * self.contexts + c) * self.arms + a]
    }
}
