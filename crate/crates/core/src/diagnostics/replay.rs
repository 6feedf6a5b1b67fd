use serde::Serialize;

use super::{indicator_events, tilde_increment, tilde_p, true_importance, EpochEvents, EpochObservations};
use crate::algo::{reject_or_fallback, AlgoState, LossUpdate, ParamSchedule};
use crate::error::{Error, Result};
use crate::loss::LossOracle;
use crate::regret::{realized_regret, round_regret, CompensatedSum, Policy};
use crate::simplex::{ContextDistribution, SimplexVector};
use crate::trace::{EpochRecord, Role, Trace};

/// The six-term split of realized regret against a fixed policy `pi`.
///
/// With `T_l` the loss-role rounds, `x_t = loss(a_t) - loss(pi(c_t))` at the
/// realized context, and `<.,.>_nu` the `nu`-weighted sum over contexts:
///
/// - `bias1 = Reg - 2 sum_{T_l} x_t`
/// - `bias2 = 2 sum_{T_l} (x_t - <p - pi, l>_nu)`
/// - `ftrl  = 2 sum_{T_l} <p - pi, l^>_nu`
/// - `bias3 = 2 sum_{T_l} <p, l - l~>_nu`
/// - `bias4 = 2 sum_{T_l} <p, l~ - l^>_nu`
/// - `bias5 = 2 sum_{T_l} <pi, l^ - l>_nu`
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionLedger {
    pub bias1: f64,
    pub bias2: f64,
    pub ftrl: f64,
    pub bias3: f64,
    pub bias4: f64,
    pub bias5: f64,
    pub sum: f64,
    pub regret: f64,
    /// `2 sum_{T_l} <p - pi, l>_nu`, which `ftrl + bias3 + bias4 + bias5`
    /// must reproduce.
    pub linearized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunDiagnostics {
    pub ledger: DecompositionLedger,
    pub epochs: Vec<EpochEvents>,
    /// Every epoch satisfied both `F_e` and `L_e`.
    pub good_event: bool,
    /// Rejection fallbacks over epochs `>= 2`.
    pub fallbacks: usize,
}

#[derive(Default)]
struct Sums {
    used: CompensatedSum,
    bias2: CompensatedSum,
    ftrl: CompensatedSum,
    bias3: CompensatedSum,
    bias4: CompensatedSum,
    bias5: CompensatedSum,
    linearized: CompensatedSum,
}

/// Replays the learner over `trace`, checks that the replay reproduces every
/// recorded distribution, snapshot and importance estimate exactly, and
/// measures the decomposition and the concentration events.
pub fn analyze(
    trace: &Trace,
    oracle: &impl LossOracle,
    nu: &ContextDistribution,
    pi: &Policy,
) -> Result<RunDiagnostics> {
    let regret = realized_regret(trace, oracle, pi)?;
    let schedule = *trace
        .schedule()
        .ok_or_else(|| Error::invalid("trace was not produced by the epoch learner"))?;
    if nu.len() != trace.contexts() {
        return Err(Error::DimensionMismatch(format!(
            "context distribution has {} entries, trace has {} contexts",
            nu.len(),
            trace.contexts()
        )));
    }
    let mut replay = Replay::new(trace, oracle, nu, pi, schedule);
    let mut epochs = Vec::with_capacity(trace.epochs().len());
    for record in trace.epochs() {
        epochs.push(replay.epoch(record)?);
    }
    if replay.covered != trace.horizon() {
        return Err(Error::ReplayMismatch(format!(
            "epochs cover {} of {} rounds",
            replay.covered,
            trace.horizon()
        )));
    }

    let s = &replay.sums;
    let bias1 = regret - s.used.value();
    let terms = [
        bias1,
        s.bias2.value(),
        s.ftrl.value(),
        s.bias3.value(),
        s.bias4.value(),
        s.bias5.value(),
    ];
    let mut sum = CompensatedSum::default();
    terms.iter().for_each(|&x| sum.add(x));
    let ledger = DecompositionLedger {
        bias1,
        bias2: terms[1],
        ftrl: terms[2],
        bias3: terms[3],
        bias4: terms[4],
        bias5: terms[5],
        sum: sum.value(),
        regret,
        linearized: s.linearized.value(),
    };
    Ok(RunDiagnostics {
        ledger,
        good_event: epochs.iter().all(|e| e.frequency_event && e.loss_event),
        fallbacks: epochs.iter().filter(|e| e.epoch > 1).map(|e| e.fallback_count).sum(),
        epochs,
    })
}

/// The decomposition alone; see [`analyze`].
pub fn decomposition(
    trace: &Trace,
    oracle: &impl LossOracle,
    nu: &ContextDistribution,
    pi: &Policy,
) -> Result<DecompositionLedger> {
    analyze(trace, oracle, nu, pi).map(|d| d.ledger)
}

/// Regret over all rounds minus twice the regret over loss-role rounds.
pub fn pairing_gap(trace: &Trace, oracle: &impl LossOracle, pi: &Policy) -> Result<f64> {
    // Validates dimensions.
    realized_regret(trace, oracle, pi)?;
    let mut gap = CompensatedSum::default();
    for r in trace.rounds() {
        let x = round_regret(oracle, r.t, r.context, r.arm, pi);
        gap.add(if r.role == Role::Loss { -x } else { x });
    }
    Ok(gap.value())
}

struct Replay<'a, O> {
    trace: &'a Trace,
    oracle: &'a O,
    nu: &'a ContextDistribution,
    pi: &'a Policy,
    state: AlgoState,
    sums: Sums,
    covered: usize,
    /// `loss[c * K + a]` at the current loss round.
    loss: Vec<f64>,
}

/// Per-epoch ground truth.
struct EpochTruth {
    f: Vec<f64>,
    /// FTRL distributions at the epoch start, the base of `p~`.
    base: Vec<SimplexVector>,
    tilde_sum: Vec<f64>,
    obs: EpochObservations,
}

fn mismatch(what: &str, t: usize) -> Error {
    Error::ReplayMismatch(format!("{what} differs at round {t}"))
}

impl<'a, O: LossOracle> Replay<'a, O> {
    fn new(trace: &'a Trace, oracle: &'a O, nu: &'a ContextDistribution, pi: &'a Policy, schedule: ParamSchedule) -> Self {
        let (arms, contexts) = (trace.arms(), trace.contexts());
        Self {
            trace,
            oracle,
            nu,
            pi,
            state: AlgoState::new(arms, contexts, schedule),
            sums: Sums::default(),
            covered: 0,
            loss: vec![0.0; arms * contexts],
        }
    }

    fn epoch(&mut self, record: &EpochRecord) -> Result<EpochEvents> {
        let st = &self.state;
        let schedule = *st.schedule();
        if record.epoch != st.epoch() || record.start != self.covered {
            return Err(Error::ReplayMismatch(format!("epoch {} out of sequence", record.epoch)));
        }
        if record.snapshot.as_slice() != st.snapshots() {
            return Err(Error::ReplayMismatch(format!("snapshot of epoch {}", record.epoch)));
        }
        let fhat = (record.epoch > 1).then(|| st.fhat().to_vec());
        if record.fhat != fhat {
            return Err(Error::ReplayMismatch(format!("importance estimate of epoch {}", record.epoch)));
        }
        let completed = record.len == schedule.epoch_len;
        if record.completed != completed || record.start + record.len > self.trace.horizon() {
            return Err(Error::ReplayMismatch(format!("extent of epoch {}", record.epoch)));
        }

        let mut truth = EpochTruth {
            f: true_importance(&record.snapshot, self.nu),
            base: st.compute_p_all(),
            tilde_sum: vec![0.0; st.arms() * st.contexts()],
            obs: EpochObservations::default(),
        };
        let end = record.start + record.len;
        let mut end_snapshot = None;
        let mut t = record.start;
        while t + 1 < end {
            let last_pair = completed && t + 2 == end;
            let p_all = self.state.compute_p_all();
            self.pair(t, &p_all, &mut truth)?;
            if last_pair {
                end_snapshot = Some(p_all);
            }
            t += 2;
        }
        if t < end {
            let r = &self.trace.rounds()[t];
            if r.role != Role::Unpaired {
                return Err(mismatch("role", t));
            }
            let p = self.state.compute_p(r.context);
            self.check_play(t, &p, &mut truth.obs)?;
            self.state.advance_rounds(1)?;
        }
        self.covered = end;
        if completed {
            let snap = end_snapshot.ok_or_else(|| Error::ReplayMismatch("epoch ended without a pair".into()))?;
            self.state.finalize_epoch(snap)?;
        }
        Ok(indicator_events(
            record.epoch,
            completed,
            &truth.obs,
            &truth.f,
            record.fhat.as_deref(),
            &schedule,
        ))
    }

    /// Checks the recorded `p`, `q` and fallback flag of round `t`.
    fn check_play(&self, t: usize, p: &SimplexVector, obs: &mut EpochObservations) -> Result<()> {
        let r = &self.trace.rounds()[t];
        if self.trace.p(t) != p.as_slice() {
            return Err(mismatch("p", t));
        }
        let (q, fallback) = reject_or_fallback(p, self.state.snapshot(r.context));
        if fallback != r.fallback || self.trace.q(t) != q.as_slice() {
            return Err(mismatch("q", t));
        }
        obs.fallback_count += usize::from(fallback);
        Ok(())
    }

    fn pair(&mut self, t: usize, p_all: &[SimplexVector], truth: &mut EpochTruth) -> Result<()> {
        let rounds = &self.trace.rounds()[t..t + 2];
        let (freq, loss) = match (rounds[0].role, rounds[1].role) {
            (Role::Freq, Role::Loss) => (0, 1),
            (Role::Loss, Role::Freq) => (1, 0),
            _ => return Err(mismatch("pair roles", t)),
        };
        let first_epoch = self.state.epoch() == 1;
        for (offset, r) in rounds.iter().enumerate() {
            self.check_play(t + offset, &p_all[r.context], &mut truth.obs)?;
        }
        if first_epoch {
            self.state.accumulate_freq(rounds[0].context);
            self.state.accumulate_freq(rounds[1].context);
        } else {
            self.state.accumulate_freq(rounds[freq].context);
        }

        let lr = &rounds[loss];
        let keep = match (first_epoch, lr.keep) {
            (true, None) => false,
            (false, Some(k)) => k,
            _ => return Err(mismatch("keep flag", t + loss)),
        };
        let update = self.loss_round(t + loss, lr.context, lr.arm, keep, p_all, truth);
        self.state.apply_loss_update(&update);
        self.state.advance_rounds(2)
    }

    /// Accumulates the decomposition terms of one loss round and returns the
    /// learner's own update for it.
    fn loss_round(
        &mut self,
        t: usize,
        context: usize,
        arm: usize,
        keep: bool,
        p_all: &[SimplexVector],
        truth: &mut EpochTruth,
    ) -> LossUpdate {
        let (arms, contexts) = (self.state.arms(), self.state.contexts());
        let gamma = self.state.schedule().gamma;
        let eta = self.state.schedule().eta;
        let first_epoch = self.state.epoch() == 1;
        for c in 0..contexts {
            for a in 0..arms {
                self.loss[c * arms + a] = self.oracle.loss(t, c, a);
            }
        }
        let pi = self.pi;
        let x = self.loss[context * arms + arm] - self.loss[context * arms + pi.arm(context)];
        self.sums.used.add(2.0 * x);

        let row: Vec<f64> = (0..contexts).map(|c| self.loss[c * arms + arm]).collect();
        let used = keep && !first_epoch;
        let update = self.state.loss_estimate(arm, &row, used);

        let mut lin = CompensatedSum::default();
        let (mut ftrl, mut b3, mut b4, mut b5) = (0.0, 0.0, 0.0, 0.0);
        for c in 0..contexts {
            let w = self.nu[c];
            let p = p_all[c].as_slice();
            let l = &self.loss[c * arms..(c + 1) * arms];
            let pc = pi.arm(c);
            let hat = update.increments[c];
            let tilde = if used { tilde_increment(l[arm], truth.f[arm], gamma) } else { 0.0 };
            let p_dot_l: f64 = p.iter().zip(l).map(|(a, b)| a * b).sum();
            lin.add(w * (p_dot_l - l[pc]));
            let hat_pi = if pc == arm { hat } else { 0.0 };
            ftrl += w * (p[arm] * hat - hat_pi);
            b3 += w * (p_dot_l - p[arm] * tilde);
            b4 += w * p[arm] * (tilde - hat);
            b5 += w * (hat_pi - l[pc]);
        }
        let lin = lin.value();
        self.sums.linearized.add(2.0 * lin);
        self.sums.bias2.add(2.0 * (x - lin));
        self.sums.ftrl.add(2.0 * ftrl);
        self.sums.bias3.add(2.0 * b3);
        self.sums.bias4.add(2.0 * b4);
        self.sums.bias5.add(2.0 * b5);

        if !first_epoch {
            self.stability(p_all, eta, truth);
            if used {
                for c in 0..contexts {
                    let cell = &mut truth.tilde_sum[c * arms + arm];
                    *cell += tilde_increment(row[c], truth.f[arm], gamma);
                    truth.obs.max_tilde_sum = truth.obs.max_tilde_sum.max(*cell);
                }
            }
        }
        truth.obs.loss_rounds += 1;
        update
    }

    /// Mass and band checks of `p` and `p~` at a loss round.
    fn stability(&self, p_all: &[SimplexVector], eta: f64, truth: &mut EpochTruth) {
        let (arms, contexts) = (self.state.arms(), self.state.contexts());
        let mut mass = vec![0.0; arms];
        let mut tilde_mass = vec![0.0; arms];
        for c in 0..contexts {
            let s = self.state.snapshot(c).as_slice();
            let tilde = tilde_p(&truth.base[c], &truth.tilde_sum[c * arms..(c + 1) * arms], eta)
                .expect("FTRL distributions are strictly positive");
            let p = p_all[c].as_slice();
            for a in 0..arms {
                mass[a] += self.nu[c] * p[a];
                tilde_mass[a] += self.nu[c] * tilde[a];
                let outside = |x: f64| x < s[a] / 2.0 || x > 2.0 * s[a];
                truth.obs.p_band_violations += usize::from(outside(p[a]));
                truth.obs.tilde_p_band_violations += usize::from(outside(tilde[a]));
            }
        }
        let exceeds = |m: &[f64]| m.iter().zip(&truth.f).any(|(&x, &f)| x > 4.0 * f);
        truth.obs.mass_violations += usize::from(exceeds(&mass));
        truth.obs.tilde_mass_violations += usize::from(exceeds(&tilde_mass));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::{derive_schedule, run_episode};
    use crate::env::{build_oracle, EnvKind, EnvSpec};
    use crate::loss::TensorOracle;
    use crate::regret::best_fixed_policy;
    use crate::rng::RngStreams;

    fn spec(kind: &str, arms: usize, contexts: usize, horizon: usize) -> EnvSpec {
        EnvSpec {
            kind: EnvKind::with_defaults(kind, arms, contexts).unwrap(),
            arms,
            contexts,
            horizon,
            env_seed: 17,
            context_probs: None,
        }
    }

    fn run(spec: &EnvSpec, delta: f64, seed: u64) -> (Trace, crate::env::EnvOracle, ContextDistribution) {
        let (oracle, nu) = build_oracle(spec).unwrap();
        let schedule = derive_schedule(spec.arms, spec.horizon, delta).unwrap();
        let trace = run_episode(&oracle, &nu, &schedule, &mut RngStreams::new(seed)).unwrap();
        (trace, oracle, nu)
    }

    #[test]
    fn identity_holds_on_a_seeded_run() {
        let (trace, oracle, nu) = run(&spec("shifting", 3, 3, 2048), 0.1, 5);
        let pi = best_fixed_policy(&oracle, &trace.realized_contexts()).unwrap();
        let d = analyze(&trace, &oracle, &nu, &pi).unwrap();
        let l = d.ledger;
        assert!((l.sum - l.regret).abs() <= 1e-6 * 2048.0, "{l:?}");
        assert!((l.ftrl + l.bias3 + l.bias4 + l.bias5 - l.linearized).abs() <= 1e-6 * 2048.0);
        assert_eq!(d.epochs.len(), trace.epochs().len());
    }

    #[test]
    fn single_context_identity() {
        let (trace, oracle, nu) = run(&spec("shifting", 2, 1, 1500), 0.5, 2);
        let pi = best_fixed_policy(&oracle, &trace.realized_contexts()).unwrap();
        let l = decomposition(&trace, &oracle, &nu, &pi).unwrap();
        assert!((l.sum - l.regret).abs() <= 1e-6 * 1500.0);
    }

    #[test]
    fn zero_losses_give_zero_terms() {
        let (oracle, nu) = (TensorOracle::zeros(600, 2, 2), ContextDistribution::uniform(2));
        let schedule = derive_schedule(2, 600, 0.5).unwrap();
        let trace = run_episode(&oracle, &nu, &schedule, &mut RngStreams::new(1)).unwrap();
        let pi = Policy::new(vec![0, 1], 2).unwrap();
        let l = decomposition(&trace, &oracle, &nu, &pi).unwrap();
        for x in [l.bias1, l.bias2, l.ftrl, l.bias3, l.bias4, l.bias5, l.sum, l.regret] {
            assert_eq!(x, 0.0);
        }
        assert_eq!(pairing_gap(&trace, &oracle, &pi).unwrap(), 0.0);
    }

    #[test]
    fn constant_losses_give_zero_gap() {
        let oracle = TensorOracle::from_fn(600, 2, 3, |t, c, _| ((t * 7 + c) % 10) as f64 / 10.0).unwrap();
        let nu = ContextDistribution::uniform(2);
        let schedule = derive_schedule(3, 600, 0.5).unwrap();
        let trace = run_episode(&oracle, &nu, &schedule, &mut RngStreams::new(4)).unwrap();
        let pi = Policy::new(vec![2, 0], 3).unwrap();
        assert_eq!(pairing_gap(&trace, &oracle, &pi).unwrap(), 0.0);
    }

    #[test]
    fn tampered_trace_is_rejected() {
        let (trace, oracle, nu) = run(&spec("shifting", 3, 2, 1200), 0.5, 3);
        let pi = best_fixed_policy(&oracle, &trace.realized_contexts()).unwrap();
        let other = ContextDistribution::uniform(3);
        assert!(matches!(analyze(&trace, &oracle, &other, &pi), Err(Error::DimensionMismatch(_))));

        let mut rngs = RngStreams::new(0);
        let base = crate::baselines::run_baseline(
            crate::baselines::BaselineKind::Uniform,
            &oracle,
            &nu,
            1200,
            &mut rngs,
        )
        .unwrap();
        assert!(analyze(&base, &oracle, &nu, &pi).is_err());
    }
}
