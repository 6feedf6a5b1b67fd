//! Oblivious environments.
//!
//! Every environment computes `loss(t, c, a)` on demand from its seed, so no
//! loss tensor is ever held in memory and the same spec always yields the
//! same losses.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossOracle;
use crate::rng::{hash_indices, unit_interval};
use crate::simplex::ContextDistribution;

const TAG_BEST: u64 = 1;
const TAG_JITTER: u64 = 2;
const TAG_REGIME: u64 = 3;
const TAG_BID: u64 = 4;
const TAG_AVAILABLE: u64 = 5;
const TAG_LEVEL: u64 = 6;
const TAG_PHASE: u64 = 7;

/// Mean loss of the designated best arm in a shifting segment.
pub const SHIFTING_BEST_LOSS: f64 = 0.2;
/// Mean loss of every other arm in a shifting segment.
pub const SHIFTING_OTHER_LOSS: f64 = 0.8;

/// Number of equal-length blocks in the competing-bid schedule.
pub const AUCTION_REGIME_BLOCKS: usize = 8;
/// Competing-bid range `[lo, hi)` in the low-competition regime.
pub const AUCTION_LOW_REGIME: (f64, f64) = (0.0, 0.5);
/// Competing-bid range `[lo, hi)` in the high-competition regime.
pub const AUCTION_HIGH_REGIME: (f64, f64) = (0.3, 1.0);

/// Full sine cycles of the sleeping environment's loss drift over the horizon.
pub const SLEEPING_DRIFT_CYCLES: f64 = 3.0;

pub const DEFAULT_SEGMENTS: usize = 4;
pub const DEFAULT_JITTER: f64 = 0.1;

fn default_segments() -> usize {
    DEFAULT_SEGMENTS
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvKind {
    /// Each of `segments` equal slices of the horizon gives every context a
    /// designated best arm (mean loss 0.2, others 0.8) plus uniform jitter
    /// of half-width `jitter`.
    Shifting {
        #[serde(default = "default_segments")]
        segments: usize,
        #[serde(default = "default_jitter")]
        jitter: f64,
    },
    /// First-price auction: context = private value, arm = bid.
    Auction {
        #[serde(default)]
        values: Vec<f64>,
        #[serde(default)]
        bids: Vec<f64>,
    },
    /// Context `c` only has the arms in `availability[c]`; the rest lose 1.
    /// Random availability sets are drawn from the seed when absent.
    Sleeping {
        #[serde(default)]
        availability: Option<Vec<Vec<usize>>>,
    },
    /// All losses zero.
    Zero,
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::Shifting { .. } => "shifting",
            EnvKind::Auction { .. } => "auction",
            EnvKind::Sleeping { .. } => "sleeping",
            EnvKind::Zero => "zero",
        }
    }

    /// The kind named `name` with default parameters; auction grids are
    /// evenly spaced: values `(c + 1) / C`, bids `a / (K - 1)`.
    pub fn with_defaults(name: &str, arms: usize, contexts: usize) -> Result<Self> {
        match name {
            "shifting" => Ok(EnvKind::Shifting {
                segments: DEFAULT_SEGMENTS,
                jitter: DEFAULT_JITTER,
            }),
            "auction" => Ok(EnvKind::Auction {
                values: (0..contexts).map(|c| (c + 1) as f64 / contexts as f64).collect(),
                bids: (0..arms)
                    .map(|a| a as f64 / (arms.max(2) - 1) as f64)
                    .collect(),
            }),
            "sleeping" => Ok(EnvKind::Sleeping { availability: None }),
            "zero" => Ok(EnvKind::Zero),
            other => Err(Error::invalid(format!("unknown environment kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    #[serde(flatten)]
    pub kind: EnvKind,
    pub arms: usize,
    pub contexts: usize,
    pub horizon: usize,
    pub env_seed: u64,
    /// Overrides the uniform context distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_probs: Option<Vec<f64>>,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.arms < 2 {
            return Err(Error::invalid(format!("need at least 2 arms, got {}", self.arms)));
        }
        if self.contexts < 1 {
            return Err(Error::invalid("need at least 1 context"));
        }
        if self.horizon < 2 {
            return Err(Error::invalid(format!("horizon must be >= 2, got {}", self.horizon)));
        }
        match &self.kind {
            EnvKind::Shifting { segments, jitter } => {
                if *segments == 0 || *segments > self.horizon {
                    return Err(Error::invalid(format!(
                        "segment count {segments} must be in 1..={}",
                        self.horizon
                    )));
                }
                if !(0.0..=0.5).contains(jitter) {
                    return Err(Error::invalid(format!("jitter {jitter} must be in [0, 0.5]")));
                }
            }
            EnvKind::Auction { values, bids } => {
                if values.is_empty() || bids.is_empty() {
                    return Err(Error::invalid("auction needs non-empty value and bid grids"));
                }
                check_grid("value", values)?;
                check_grid("bid", bids)?;
                if values.len() != self.contexts || bids.len() != self.arms {
                    return Err(Error::DimensionMismatch(format!(
                        "auction grids are {} values x {} bids, spec has {} contexts x {} arms",
                        values.len(),
                        bids.len(),
                        self.contexts,
                        self.arms
                    )));
                }
            }
            EnvKind::Sleeping {
                availability: Some(sets),
            } => {
                if sets.len() != self.contexts {
                    return Err(Error::DimensionMismatch(format!(
                        "{} availability sets for {} contexts",
                        sets.len(),
                        self.contexts
                    )));
                }
                for (c, set) in sets.iter().enumerate() {
                    if set.is_empty() || set.iter().any(|&a| a >= self.arms) {
                        return Err(Error::invalid(format!(
                            "availability set of context {c} must be a non-empty subset of arms"
                        )));
                    }
                }
            }
            EnvKind::Sleeping { availability: None } | EnvKind::Zero => {}
        }
        Ok(())
    }

    pub fn context_distribution(&self) -> Result<ContextDistribution> {
        match &self.context_probs {
            Some(p) if p.len() != self.contexts => Err(Error::DimensionMismatch(format!(
                "{} context probabilities for {} contexts",
                p.len(),
                self.contexts
            ))),
            Some(p) => ContextDistribution::new(p.clone()),
            None => Ok(ContextDistribution::uniform(self.contexts)),
        }
    }
}

fn check_grid(what: &str, grid: &[f64]) -> Result<()> {
    if grid.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::invalid(format!("{what} grid must lie in [0, 1]")));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid(format!("{what} grid must be sorted ascending")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ShiftingOracle {
    horizon: usize,
    contexts: usize,
    arms: usize,
    seed: u64,
    segment_len: usize,
    jitter: f64,
    /// `best[segment * contexts + c]`
    best: Vec<usize>,
}

impl ShiftingOracle {
    pub fn best_arm(&self, t: usize, c: usize) -> usize {
        self.best[(t / self.segment_len) * self.contexts + c]
    }
}

impl LossOracle for ShiftingOracle {
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
        let mean = if a == self.best_arm(t, c) {
            SHIFTING_BEST_LOSS
        } else {
            SHIFTING_OTHER_LOSS
        };
        if self.jitter == 0.0 {
            return mean;
        }
        let u = unit_interval(hash_indices(self.seed, &[TAG_JITTER, t as u64, c as u64, a as u64]));
        (mean + self.jitter * (2.0 * u - 1.0)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct AuctionOracle {
    horizon: usize,
    seed: u64,
    values: Vec<f64>,
    bids: Vec<f64>,
    block_len: usize,
}

impl AuctionOracle {
    /// Highest competing bid at round `t`.
    pub fn competing_bid(&self, t: usize) -> f64 {
        let block = (t / self.block_len) as u64;
        let high = hash_indices(self.seed, &[TAG_REGIME, block]) & 1 == 1;
        let (lo, hi) = if high {
            AUCTION_HIGH_REGIME
        } else {
            AUCTION_LOW_REGIME
        };
        lo + (hi - lo) * unit_interval(hash_indices(self.seed, &[TAG_BID, t as u64]))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bids(&self) -> &[f64] {
        &self.bids
    }

    /// Loss of bidding `bid` with value `value` given whether the bid wins.
    pub fn loss_from_outcome(value: f64, bid: f64, wins: bool) -> f64 {
        let utility = if wins { value - bid } else { 0.0 };
        (1.0 - utility) / 2.0
    }
}

impl LossOracle for AuctionOracle {
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn num_contexts(&self) -> usize {
        self.values.len()
    }
    fn num_arms(&self) -> usize {
        self.bids.len()
    }

    fn loss(&self, t: usize, c: usize, a: usize) -> f64 {
        let bid = self.bids[a];
        Self::loss_from_outcome(self.values[c], bid, bid >= self.competing_bid(t))
    }

    fn loss_row_into(&self, t: usize, a: usize, out: &mut [f64]) {
        let bid = self.bids[a];
        let wins = bid >= self.competing_bid(t);
        for (o, &v) in out.iter_mut().zip(&self.values) {
            *o = Self::loss_from_outcome(v, bid, wins);
        }
    }
}

#[derive(Debug, Clone)]
pub struct SleepingOracle {
    horizon: usize,
    contexts: usize,
    arms: usize,
    /// `available[c * arms + a]`
    available: Vec<bool>,
    level: Vec<f64>,
    phase: Vec<f64>,
}

impl SleepingOracle {
    pub fn is_available(&self, c: usize, a: usize) -> bool {
        self.available[c * self.arms + a]
    }
}

impl LossOracle for SleepingOracle {
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
        let i = c * self.arms + a;
        if !self.available[i] {
            return 1.0;
        }
        let angle = TAU * SLEEPING_DRIFT_CYCLES * t as f64 / self.horizon as f64 + self.phase[a];
        (0.15 + 0.7 * self.level[i] + 0.15 * angle.sin()).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct ZeroOracle {
    horizon: usize,
    contexts: usize,
    arms: usize,
}

impl LossOracle for ZeroOracle {
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn num_contexts(&self) -> usize {
        self.contexts
    }
    fn num_arms(&self) -> usize {
        self.arms
    }
    fn loss(&self, _t: usize, _c: usize, _a: usize) -> f64 {
        0.0
    }
}

/// Any environment produced by [`build_oracle`].
#[derive(Debug, Clone)]
pub enum EnvOracle {
    Shifting(ShiftingOracle),
    Auction(AuctionOracle),
    Sleeping(SleepingOracle),
    Zero(ZeroOracle),
}

macro_rules! dispatch {
    ($self:ident, $o:ident => $e:expr) => {
        match $self {
            EnvOracle::Shifting($o) => $e,
            EnvOracle::Auction($o) => $e,
            EnvOracle::Sleeping($o) => $e,
            EnvOracle::Zero($o) => $e,
        }
    };
}

impl LossOracle for EnvOracle {
    fn horizon(&self) -> usize {
        dispatch!(self, o => o.horizon())
    }
    fn num_contexts(&self) -> usize {
        dispatch!(self, o => o.num_contexts())
    }
    fn num_arms(&self) -> usize {
        dispatch!(self, o => o.num_arms())
    }
    fn loss(&self, t: usize, c: usize, a: usize) -> f64 {
        dispatch!(self, o => o.loss(t, c, a))
    }
    fn loss_row_into(&self, t: usize, a: usize, out: &mut [f64]) {
        dispatch!(self, o => o.loss_row_into(t, a, out))
    }
}

/// Builds the loss oracle and context distribution described by `spec`.
pub fn build_oracle(spec: &EnvSpec) -> Result<(EnvOracle, ContextDistribution)> {
    spec.validate()?;
    let nu = spec.context_distribution()?;
    let (horizon, contexts, arms, seed) = (spec.horizon, spec.contexts, spec.arms, spec.env_seed);
    let oracle = match &spec.kind {
        EnvKind::Shifting { segments, jitter } => {
            let segment_len = horizon.div_ceil(*segments);
            let n_segments = horizon.div_ceil(segment_len);
            let best = (0..n_segments)
                .flat_map(|s| (0..contexts).map(move |c| (s, c)))
                .map(|(s, c)| (hash_indices(seed, &[TAG_BEST, s as u64, c as u64]) % arms as u64) as usize)
                .collect();
            EnvOracle::Shifting(ShiftingOracle {
                horizon,
                contexts,
                arms,
                seed,
                segment_len,
                jitter: *jitter,
                best,
            })
        }
        EnvKind::Auction { values, bids } => EnvOracle::Auction(AuctionOracle {
            horizon,
            seed,
            values: values.clone(),
            bids: bids.clone(),
            block_len: horizon.div_ceil(AUCTION_REGIME_BLOCKS),
        }),
        EnvKind::Sleeping { availability } => {
            let mut available = vec![false; contexts * arms];
            match availability {
                Some(sets) => {
                    for (c, set) in sets.iter().enumerate() {
                        for &a in set {
                            available[c * arms + a] = true;
                        }
                    }
                }
                None => {
                    for c in 0..contexts {
                        let row = &mut available[c * arms..(c + 1) * arms];
                        for (a, slot) in row.iter_mut().enumerate() {
                            let h = hash_indices(seed, &[TAG_AVAILABLE, c as u64, a as u64]);
                            *slot = unit_interval(h) < 0.5;
                        }
                        if !row.iter().any(|&x| x) {
                            row[c % arms] = true;
                        }
                    }
                }
            }
            let level = (0..contexts * arms)
                .map(|i| unit_interval(hash_indices(seed, &[TAG_LEVEL, i as u64])))
                .collect();
            let phase = (0..arms)
                .map(|a| TAU * unit_interval(hash_indices(seed, &[TAG_PHASE, a as u64])))
                .collect();
            EnvOracle::Sleeping(SleepingOracle {
                horizon,
                contexts,
                arms,
                available,
                level,
                phase,
            })
        }
        EnvKind::Zero => EnvOracle::Zero(ZeroOracle {
            horizon,
            contexts,
            arms,
        }),
    };
    Ok((oracle, nu))
}

/// Draws `c_t ~ nu`.
pub fn sample_context<R: Rng + ?Sized>(nu: &ContextDistribution, rng: &mut R) -> usize {
    nu.sample(rng)
}
