use serde::Serialize;

use crate::error::{Error, Result};

/// Tuning of the epoch learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamSchedule {
    /// Log-confidence term `2 ln(8 K T / delta)`.
    pub iota: f64,
    /// Rounds per epoch; always even.
    pub epoch_len: usize,
    /// Implicit-exploration offset in the loss-estimate denominator.
    pub gamma: f64,
    /// FTRL learning rate.
    pub eta: f64,
    pub delta: f64,
}

impl ParamSchedule {
    /// A hand-picked schedule; only structural constraints are checked.
    pub fn new(iota: f64, epoch_len: usize, gamma: f64, eta: f64, delta: f64) -> Result<Self> {
        if epoch_len < 2 || !epoch_len.is_multiple_of(2) {
            return Err(Error::invalid(format!("epoch length must be even and >= 2, got {epoch_len}")));
        }
        for (name, v) in [("iota", iota), ("gamma", gamma), ("eta", eta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
        }
        Ok(Self {
            iota,
            epoch_len,
            gamma,
            eta,
            delta,
        })
    }
}

/// The high-probability tuning for `arms` arms over `horizon` rounds:
///
/// - `iota = 2 ln(8 K T / delta)`
/// - `L = sqrt(iota K T / ln K)`, rounded to the nearest even integer >= 2
/// - `gamma = 16 iota / L`
/// - `eta = gamma / (2 (2 L gamma + iota))`
///
/// `gamma` and `eta` use the rounded `L`.
pub fn derive_schedule(arms: usize, horizon: usize, delta: f64) -> Result<ParamSchedule> {
    if arms < 2 {
        return Err(Error::invalid(format!("need at least 2 arms, got {arms}")));
    }
    if horizon < 4 {
        return Err(Error::invalid(format!("horizon must be >= 4, got {horizon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
    }
    let k = arms as f64;
    let t = horizon as f64;
    let iota = 2.0 * (8.0 * k * t / delta).ln();
    let raw = (iota * k * t / k.ln()).sqrt();
    let epoch_len = ((raw / 2.0).round() * 2.0).max(2.0) as usize;
    if epoch_len >= horizon {
        return Err(Error::HorizonTooSmall { epoch_len, horizon });
    }
    let l = epoch_len as f64;
    let gamma = 16.0 * iota / l;
    let eta = gamma / (2.0 * (2.0 * l * gamma + iota));
    ParamSchedule::new(iota, epoch_len, gamma, eta, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Expected values recomputed independently in 50-digit arithmetic (mpmath):
    //   K=10, T=1e5, delta=0.1: iota = 36.39507..., L_raw = 3975.70..., L = 3976
    //   K=2, T=1024, delta=0.5: iota = 20.79441..., L_raw = 247.87..., L = 248
    #[test]
    fn schedule_k10_t100000() {
        let s = derive_schedule(10, 100_000, 0.1).unwrap();
        assert!((s.iota - 36.395_074_385_276).abs() < 1e-9, "{}", s.iota);
        assert_eq!(s.epoch_len, 3976);
        assert!((s.gamma - 0.146_459_051_852).abs() < 1e-9, "{}", s.gamma);
        assert!((s.eta - 6.097_189_195_781e-5).abs() < 1e-15, "{}", s.eta);
    }

    #[test]
    fn schedule_k2_t1024() {
        let s = derive_schedule(2, 1024, 0.5).unwrap();
        assert!((s.iota - 20.794_415_416_8).abs() < 1e-9, "{}", s.iota);
        assert_eq!(s.epoch_len, 248);
        assert!((s.gamma - 1.341_575_188_2).abs() < 1e-9, "{}", s.gamma);
        assert!((s.eta - 9.775_171_065_494e-4).abs() < 1e-15, "{}", s.eta);
        assert!(s.gamma > 1.0);
    }

    #[test]
    fn schedule_rejects_tiny_horizon() {
        assert!(matches!(
            derive_schedule(2, 4, 0.5),
            Err(Error::HorizonTooSmall { .. })
        ));
        assert!(derive_schedule(1, 100, 0.5).is_err());
        assert!(derive_schedule(2, 100, 1.0).is_err());
    }

    #[test]
    fn custom_schedule_validation() {
        assert!(ParamSchedule::new(1.0, 4, 0.1, 0.01, 0.1).is_ok());
        assert!(ParamSchedule::new(1.0, 3, 0.1, 0.01, 0.1).is_err());
        assert!(ParamSchedule::new(1.0, 4, 0.0, 0.01, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn derived_schedules_are_self_consistent(k in 2usize..50, log_t in 10u32..24, delta in 0.001f64..0.9) {
            let t = 1usize << log_t;
            if let Ok(s) = derive_schedule(k, t, delta) {
                let l = s.epoch_len as f64;
                prop_assert!(s.epoch_len % 2 == 0 && s.epoch_len >= 2);
                prop_assert!((s.gamma - 16.0 * s.iota / l).abs() <= 1e-12 * s.gamma);
                prop_assert!((s.eta - s.gamma / (2.0 * (2.0 * l * s.gamma + s.iota))).abs() <= 1e-12 * s.eta);
                let raw = (s.iota * k as f64 * t as f64 / (k as f64).ln()).sqrt();
                prop_assert!((l - raw).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
