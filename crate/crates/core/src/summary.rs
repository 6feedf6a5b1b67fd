//! Scaling and comparison statistics over finished sweeps.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::sweep::{AlgoKind, SweepSummary};

/// Minimum distinct horizons for a slope fit.
pub const MIN_HORIZONS: usize = 3;
/// Minimum seeds per horizon for a slope fit.
pub const MIN_SEEDS: usize = 20;

/// The 5/25/50/75/95 percentiles of a sample (linear interpolation between
/// order statistics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v = values.to_vec();
        if v.is_empty() || v.iter().any(|x| x.is_nan()) {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let q = |p: f64| percentile_sorted(&v, p);
        Some(Self {
            p5: q(5.0),
            p25: q(25.0),
            p50: q(50.0),
            p75: q(75.0),
            p95: q(95.0),
        })
    }
}

/// `p`-th percentile of an ascending, non-empty slice; rank `p/100 (n - 1)`
/// interpolated linearly.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Option<f64> {
    Percentiles::of(values).map(|p| p.p50)
}

/// Least-squares fit `ln y = slope ln x + intercept`. Returns `(slope, intercept)`.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InsufficientData("a slope needs at least two points".into()));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InsufficientData("log-log fit needs positive coordinates".into()));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all horizons are equal".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Paired one-sided sign test of `H1: a tends to be smaller than b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignTest {
    /// Pairs with `a < b`.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(Bin(wins + losses, 1/2) >= wins)`.
    pub p_value: f64,
}

pub fn sign_test(a: &[f64], b: &[f64]) -> Result<SignTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} paired samples", a.len(), b.len())));
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let ties = a.len() - wins - losses;
    let n = (wins + losses) as u64;
    let p_value = if wins == 0 {
        1.0
    } else {
        let bin = Binomial::new(0.5, n).expect("valid binomial");
        // P(X >= wins) = 1 - P(X <= wins - 1)
        bin.sf(wins as u64 - 1)
    };
    Ok(SignTest {
        wins,
        losses,
        ties,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonScaling {
    pub horizon: usize,
    pub median: f64,
    pub p95: f64,
    pub p95_over_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub algo: AlgoKind,
    pub baseline: AlgoKind,
    pub horizon: usize,
    pub median: f64,
    pub baseline_median: f64,
    pub sign_test: SignTest,
}

/// Scaling report for a primary sweep plus comparisons with baselines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub algo: AlgoKind,
    pub slope: f64,
    pub intercept: f64,
    pub horizons: Vec<HorizonScaling>,
    pub comparisons: Vec<Comparison>,
}

/// Per-horizon median and tail of one sweep, in ascending horizon order.
pub fn horizon_scaling(sweep: &SweepSummary) -> Vec<HorizonScaling> {
    let mut rows: Vec<HorizonScaling> = sweep
        .horizons
        .iter()
        .map(|h| HorizonScaling {
            horizon: h.horizon,
            median: h.percentiles.p50,
            p95: h.percentiles.p95,
            p95_over_median: h.percentiles.p95 / h.percentiles.p50,
        })
        .collect();
    rows.sort_by_key(|r| r.horizon);
    rows
}

/// Compares `primary` with `baseline` at every shared horizon, pairing runs
/// by seed.
pub fn compare(primary: &SweepSummary, baseline: &SweepSummary) -> Result<Vec<Comparison>> {
    if primary.seeds != baseline.seeds {
        return Err(Error::InsufficientData(
            "sweeps must use the same seeds to be compared".into(),
        ));
    }
    let mut out = Vec::new();
    for h in &primary.horizons {
        let Some(b) = baseline.horizon(h.horizon) else { continue };
        out.push(Comparison {
            algo: primary.algo(),
            baseline: baseline.algo(),
            horizon: h.horizon,
            median: h.percentiles.p50,
            baseline_median: b.percentiles.p50,
            sign_test: sign_test(&h.final_regrets, &b.final_regrets)?,
        });
    }
    if out.is_empty() {
        return Err(Error::InsufficientData("sweeps share no horizon".into()));
    }
    Ok(out)
}

/// Fits the log-log slope of median regret for the first sweep and compares
/// it with every other sweep. The first sweep needs at least
/// [`MIN_HORIZONS`] horizons with [`MIN_SEEDS`] seeds each.
pub fn summarize(sweeps: &[SweepSummary]) -> Result<ScalingReport> {
    let (primary, rest) = sweeps
        .split_first()
        .ok_or_else(|| Error::InsufficientData("no sweeps given".into()))?;
    if primary.horizons.len() < MIN_HORIZONS {
        return Err(Error::InsufficientData(format!(
            "{} horizons, need at least {MIN_HORIZONS}",
            primary.horizons.len()
        )));
    }
    if primary.seeds.len() < MIN_SEEDS {
        return Err(Error::InsufficientData(format!(
            "{} seeds, need at least {MIN_SEEDS}",
            primary.seeds.len()
        )));
    }
    let horizons = horizon_scaling(primary);
    let points: Vec<(f64, f64)> = horizons.iter().map(|h| (h.horizon as f64, h.median)).collect();
    let (slope, intercept) = loglog_fit(&points)?;
    let mut comparisons = Vec::new();
    for b in rest {
        comparisons.extend(compare(primary, b)?);
    }
    Ok(ScalingReport {
        algo: primary.algo(),
        slope,
        intercept,
        horizons,
        comparisons,
    })
}
