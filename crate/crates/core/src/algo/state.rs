use rand::RngCore;

use super::ParamSchedule;
use crate::error::{Error, Result};
use crate::simplex::{softmax_into, SimplexVector};

/// Mutable state of the epoch learner.
///
/// Snapshots are indexed relative to the current epoch `e`: `snapshot(c)` is
/// `s_e` (drives rejection sampling and the keep coin) and `next_snapshot(c)`
/// is `s_{e+1}` (weights the frequency rounds that estimate `f_{e+1}`).
#[derive(Debug, Clone)]
pub struct AlgoState {
    arms: usize,
    contexts: usize,
    schedule: ParamSchedule,
    epoch: usize,
    rounds_in_epoch: usize,
    current: Vec<SimplexVector>,
    next: Vec<SimplexVector>,
    fhat: Vec<f64>,
    fhat_next: Vec<f64>,
    /// Cumulative loss estimates, `cumloss[c * arms + a]`.
    cumloss: Vec<f64>,
}

/// Loss-estimate increments for one arm across every context.
#[derive(Debug, Clone, PartialEq)]
pub struct LossUpdate {
    pub arm: usize,
    /// One entry per context; all zero when the keep coin failed.
    pub increments: Vec<f64>,
}

impl AlgoState {
    /// Epoch 1, uniform `s_1 = s_2`, zero estimates.
    pub fn new(arms: usize, contexts: usize, schedule: ParamSchedule) -> Self {
        let uniform = vec![SimplexVector::uniform(arms); contexts];
        Self {
            arms,
            contexts,
            schedule,
            epoch: 1,
            rounds_in_epoch: 0,
            current: uniform.clone(),
            next: uniform,
            fhat: vec![0.0; arms],
            fhat_next: vec![0.0; arms],
            cumloss: vec![0.0; arms * contexts],
        }
    }

    /// A state at the start of an epoch `e >= 2` with the given snapshots
    /// `s_e`, `s_{e+1}`, importance estimate `f_e`, and cumulative losses
    /// (`C` rows of `K`). Used to freeze a state for Monte Carlo checks.
    pub fn from_parts(
        schedule: ParamSchedule,
        current: Vec<SimplexVector>,
        next: Vec<SimplexVector>,
        fhat: Vec<f64>,
        cumloss: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let contexts = current.len();
        let arms = current.first().map_or(0, SimplexVector::len);
        let shapes_ok = contexts > 0
            && next.len() == contexts
            && cumloss.len() == contexts
            && fhat.len() == arms
            && current.iter().chain(&next).all(|s| s.len() == arms)
            && cumloss.iter().all(|row| row.len() == arms);
        if !shapes_ok {
            return Err(Error::DimensionMismatch("inconsistent state shapes".into()));
        }
        if fhat.iter().chain(cumloss.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("state contains non-finite values"));
        }
        Ok(Self {
            arms,
            contexts,
            schedule,
            epoch: 2,
            rounds_in_epoch: 0,
            current,
            next,
            fhat,
            fhat_next: vec![0.0; arms],
            cumloss: cumloss.into_iter().flatten().collect(),
        })
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn contexts(&self) -> usize {
        self.contexts
    }

    pub fn schedule(&self) -> &ParamSchedule {
        &self.schedule
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn rounds_in_epoch(&self) -> usize {
        self.rounds_in_epoch
    }

    /// `s_{e,c}`.
    pub fn snapshot(&self, c: usize) -> &SimplexVector {
        &self.current[c]
    }

    pub fn snapshots(&self) -> &[SimplexVector] {
        &self.current
    }

    /// `s_{e+1,c}`.
    pub fn next_snapshot(&self, c: usize) -> &SimplexVector {
        &self.next[c]
    }

    /// `f̂_e`; all zero during epoch 1.
    pub fn fhat(&self) -> &[f64] {
        &self.fhat
    }

    /// Running accumulator for `f̂_{e+1}`.
    pub fn fhat_next(&self) -> &[f64] {
        &self.fhat_next
    }

    pub fn cumloss(&self, c: usize) -> &[f64] {
        &self.cumloss[c * self.arms..(c + 1) * self.arms]
    }

    /// FTRL distribution for context `c` given the estimates so far.
    pub fn compute_p(&self, c: usize) -> SimplexVector {
        let mut out = vec![0.0; self.arms];
        softmax_into(self.cumloss(c), self.schedule.eta, None, &mut out);
        SimplexVector::from_normalized(out)
    }

    pub fn compute_p_all(&self) -> Vec<SimplexVector> {
        (0..self.contexts).map(|c| self.compute_p(c)).collect()
    }

    /// Adds `s_{e+1,c} / 2n` to the running importance estimate, where `n`
    /// is the number of frequency rounds in the epoch: `L` in epoch 1 (every
    /// round counts), `L / 2` afterwards.
    pub fn accumulate_freq(&mut self, c: usize) {
        let l = self.schedule.epoch_len as f64;
        let divisor = if self.epoch == 1 { 2.0 * l } else { 2.0 * (l / 2.0) };
        for (acc, &s) in self.fhat_next.iter_mut().zip(self.next[c].as_slice()) {
            *acc += s / divisor;
        }
    }

    /// `2 loss / (f̂_e(arm) + 3 gamma / 2)`: one context's increment when the
    /// loss of `arm` is used.
    pub fn loss_increment(&self, arm: usize, loss: f64) -> f64 {
        2.0 * loss / (self.fhat[arm] + 1.5 * self.schedule.gamma)
    }

    /// Importance-weighted loss estimate for every context from one
    /// loss-role round that played `arm`. Only `arm`'s coordinate is touched.
    pub fn loss_estimate(&self, arm: usize, loss_row: &[f64], keep: bool) -> LossUpdate {
        debug_assert_eq!(loss_row.len(), self.contexts);
        let increments = if keep {
            loss_row.iter().map(|&l| self.loss_increment(arm, l)).collect()
        } else {
            vec![0.0; self.contexts]
        };
        LossUpdate { arm, increments }
    }

    pub fn apply_loss_update(&mut self, update: &LossUpdate) {
        for (c, inc) in update.increments.iter().enumerate() {
            self.cumloss[c * self.arms + update.arm] += inc;
        }
    }

    /// [`Self::loss_estimate`] followed by [`Self::apply_loss_update`].
    pub fn make_loss_estimate(&mut self, loss_row: &[f64], arm: usize, keep: bool) -> LossUpdate {
        let update = self.loss_estimate(arm, loss_row, keep);
        if keep {
            self.apply_loss_update(&update);
        }
        update
    }

    /// Marks `n` more rounds of the current epoch as processed.
    pub fn advance_rounds(&mut self, n: usize) -> Result<()> {
        if self.rounds_in_epoch + n > self.schedule.epoch_len {
            return Err(Error::invalid(format!(
                "epoch {} would exceed {} rounds",
                self.epoch, self.schedule.epoch_len
            )));
        }
        self.rounds_in_epoch += n;
        Ok(())
    }

    /// Closes a complete epoch: `p_at_end` becomes `s_{e+2}`, the
    /// accumulated estimate becomes `f̂_{e+1}`, and the snapshot window
    /// shifts by one.
    ///
    /// Each context's cumulative losses are re-centered on their minimum,
    /// which leaves every future distribution unchanged up to rounding.
    pub fn finalize_epoch(&mut self, p_at_end: Vec<SimplexVector>) -> Result<()> {
        if self.rounds_in_epoch != self.schedule.epoch_len {
            return Err(Error::MidEpochFinalize {
                epoch: self.epoch,
                processed: self.rounds_in_epoch,
                epoch_len: self.schedule.epoch_len,
            });
        }
        if p_at_end.len() != self.contexts || p_at_end.iter().any(|p| p.len() != self.arms) {
            return Err(Error::DimensionMismatch("end-of-epoch snapshot has the wrong shape".into()));
        }
        self.current = std::mem::replace(&mut self.next, p_at_end);
        self.fhat = std::mem::replace(&mut self.fhat_next, vec![0.0; self.arms]);
        self.epoch += 1;
        self.rounds_in_epoch = 0;
        for row in self.cumloss.chunks_mut(self.arms) {
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            row.iter_mut().for_each(|g| *g -= min);
        }
        Ok(())
    }
}

/// Plays `p` unless some arm falls below half its snapshot weight, in which
/// case the snapshot itself is played. Returns `(q, fell_back)`.
pub fn reject_or_fallback(p: &SimplexVector, snapshot: &SimplexVector) -> (SimplexVector, bool) {
    let accept = p
        .as_slice()
        .iter()
        .zip(snapshot.as_slice())
        .all(|(&pa, &sa)| pa >= sa / 2.0);
    if accept {
        (p.clone(), false)
    } else {
        (snapshot.clone(), true)
    }
}

/// Probability `s(arm) / (2 q(arm))` of using the loss observed on `arm`.
pub fn keep_probability(snapshot: &SimplexVector, q: &SimplexVector, arm: usize) -> Result<f64> {
    let qa = q[arm];
    if qa <= 0.0 {
        return Err(Error::ZeroProbability(arm));
    }
    Ok(snapshot[arm] / (2.0 * qa))
}

/// Which round of a pair feeds the importance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairOrder {
    /// `(t_f, t_l) = (t, t + 1)`
    FreqFirst,
    /// `(t_f, t_l) = (t + 1, t)`
    LossFirst,
}

impl PairOrder {
    /// Offsets `(freq, loss)` within the pair.
    pub fn offsets(self) -> (usize, usize) {
        match self {
            PairOrder::FreqFirst => (0, 1),
            PairOrder::LossFirst => (1, 0),
        }
    }

    pub fn from_bit(bit: u64) -> Self {
        if bit & 1 == 0 {
            PairOrder::FreqFirst
        } else {
            PairOrder::LossFirst
        }
    }
}

/// Uniform random order of a pair; consumes one draw from the pairing stream.
pub fn assign_pair_roles<R: RngCore + ?Sized>(rng: &mut R) -> PairOrder {
    PairOrder::from_bit(rng.next_u64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schedule(epoch_len: usize, gamma: f64, eta: f64) -> ParamSchedule {
        ParamSchedule::new(1.0, epoch_len, gamma, eta, 0.1).unwrap()
    }

    fn sv(w: &[f64]) -> SimplexVector {
        SimplexVector::new(w.to_vec()).unwrap()
    }

    #[test]
    fn init_is_uniform_and_empty() {
        let st = AlgoState::new(4, 3, schedule(4, 0.1, 0.1));
        assert_eq!(st.epoch(), 1);
        for c in 0..3 {
            assert!(st.snapshot(c).as_slice().iter().all(|&x| x == 0.25));
            assert!(st.next_snapshot(c).as_slice().iter().all(|&x| x == 0.25));
            assert_eq!(st.compute_p(c), SimplexVector::uniform(4));
        }
        assert_eq!(st.fhat_next().iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn compute_p_closed_form() {
        let eta = 0.3;
        let st = AlgoState::from_parts(
            schedule(4, 0.1, eta),
            vec![SimplexVector::uniform(2)],
            vec![SimplexVector::uniform(2)],
            vec![0.25, 0.25],
            vec![vec![0.0, 2f64.ln() / eta]],
        )
        .unwrap();
        let p = st.compute_p(0);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn compute_p_matches_grid_search() {
        let eta = 0.7;
        let g = vec![0.4, 1.9, 1.1];
        let st = AlgoState::from_parts(
            schedule(4, 0.1, eta),
            vec![SimplexVector::uniform(3)],
            vec![SimplexVector::uniform(3)],
            vec![1.0 / 6.0; 3],
            vec![g.clone()],
        )
        .unwrap();
        let p = st.compute_p(0);
        let q = crate::oracle::grid_argmin_ftrl(&g, eta, 0.005).unwrap();
        let gap = p
            .as_slice()
            .iter()
            .zip(q.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 0.01, "{gap}");
    }

    #[test]
    fn rejection_rule() {
        let s = sv(&[0.5, 0.5]);
        let (q, fb) = reject_or_fallback(&sv(&[0.7, 0.3]), &s);
        assert_eq!((q.as_slice(), fb), (&[0.7, 0.3][..], false));
        let (q, fb) = reject_or_fallback(&sv(&[0.9, 0.1]), &s);
        assert_eq!((q.as_slice(), fb), (&[0.5, 0.5][..], true));
        let (q, fb) = reject_or_fallback(&sv(&[0.25, 0.75]), &s);
        assert_eq!((q.as_slice(), fb), (&[0.25, 0.75][..], false));
    }

    #[test]
    fn keep_probability_values() {
        let s = sv(&[0.5, 0.5]);
        let kp = keep_probability(&s, &sv(&[0.7, 0.3]), 0).unwrap();
        assert!((kp - 0.5 / 1.4).abs() < 1e-15);
        assert_eq!(keep_probability(&s, &s, 1).unwrap(), 0.5);
        assert_eq!(keep_probability(&s, &sv(&[0.25, 0.75]), 0).unwrap(), 1.0);
        assert!(keep_probability(&s, &sv(&[1.0, 0.0]), 1).is_err());
    }

    #[test]
    fn pair_roles_follow_bit_convention() {
        assert_eq!(PairOrder::from_bit(0).offsets(), (0, 1));
        assert_eq!(PairOrder::from_bit(1).offsets(), (1, 0));
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        let order = assign_pair_roles(&mut a);
        assert_eq!(order, PairOrder::from_bit(b.next_u64()));
        // Exactly one draw consumed.
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn pair_roles_are_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let first = (0..n)
            .filter(|_| assign_pair_roles(&mut rng) == PairOrder::FreqFirst)
            .count();
        let freq = first as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 3.0 * (0.25f64 / n as f64).sqrt(), "{freq}");
    }

    #[test]
    fn freq_accumulation_arithmetic() {
        // L = 4: two frequency rounds per epoch after the first.
        let mut st = AlgoState::from_parts(
            schedule(4, 0.1, 0.1),
            vec![SimplexVector::uniform(2); 2],
            vec![sv(&[0.4, 0.6]), sv(&[0.6, 0.4])],
            vec![0.25, 0.25],
            vec![vec![0.0; 2]; 2],
        )
        .unwrap();
        st.accumulate_freq(0);
        st.accumulate_freq(1);
        assert!((st.fhat_next()[0] - 0.25).abs() < 1e-15);
        assert!((st.fhat_next().iter().sum::<f64>() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn first_epoch_uses_all_rounds() {
        let l = 6;
        let mut st = AlgoState::new(3, 2, schedule(l, 0.1, 0.1));
        for t in 0..l {
            st.accumulate_freq(t % 2);
        }
        for &f in st.fhat_next() {
            assert!((f - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn loss_estimate_arithmetic() {
        let mut st = AlgoState::from_parts(
            schedule(4, 0.1, 0.1),
            vec![SimplexVector::uniform(2); 2],
            vec![SimplexVector::uniform(2); 2],
            vec![0.25, 0.25],
            vec![vec![0.0; 2]; 2],
        )
        .unwrap();
        let up = st.make_loss_estimate(&[0.8, 0.2], 1, true);
        assert!((up.increments[0] - 4.0).abs() < 1e-12);
        assert!((up.increments[1] - 1.0).abs() < 1e-12);
        assert_eq!(st.cumloss(0), &[0.0, up.increments[0]]);
        let none = st.make_loss_estimate(&[0.8, 0.2], 0, false);
        assert!(none.increments.iter().all(|&x| x == 0.0));
        assert_eq!(st.cumloss(1), &[0.0, up.increments[1]]);
    }

    #[test]
    fn finalize_rejects_partial_epoch() {
        let mut st = AlgoState::new(2, 1, schedule(4, 0.1, 0.1));
        st.advance_rounds(2).unwrap();
        assert!(matches!(
            st.finalize_epoch(vec![SimplexVector::uniform(2)]),
            Err(Error::MidEpochFinalize { .. })
        ));
        assert!(st.advance_rounds(3).is_err());
    }

    #[test]
    fn finalize_shifts_window() {
        let l = 4;
        let mut st = AlgoState::new(2, 1, schedule(l, 0.1, 0.1));
        for _ in 0..l {
            st.accumulate_freq(0);
        }
        st.advance_rounds(l).unwrap();
        let end = st.compute_p_all();
        st.finalize_epoch(end.clone()).unwrap();
        assert_eq!(st.epoch(), 2);
        assert_eq!(st.next_snapshot(0), &end[0]);
        assert_eq!(st.snapshot(0), &SimplexVector::uniform(2));
        assert!((st.fhat().iter().sum::<f64>() - 0.5).abs() < 1e-12);
        assert!(st.fhat_next().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn finalize_recenters_cumloss() {
        let mut st = AlgoState::from_parts(
            schedule(2, 0.1, 0.5),
            vec![SimplexVector::uniform(3)],
            vec![SimplexVector::uniform(3)],
            vec![1.0 / 6.0; 3],
            vec![vec![5.0, 7.5, 6.0]],
        )
        .unwrap();
        let before = st.compute_p(0);
        st.advance_rounds(2).unwrap();
        st.finalize_epoch(vec![before.clone()]).unwrap();
        assert_eq!(st.cumloss(0), &[0.0, 2.5, 1.0]);
        let after = st.compute_p(0);
        for a in 0..3 {
            assert!((after[a] - before[a]).abs() < 1e-15);
        }
    }
}
