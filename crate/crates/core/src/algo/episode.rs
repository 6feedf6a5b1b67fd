use rand::Rng;

use super::{assign_pair_roles, keep_probability, reject_or_fallback, AlgoState, ParamSchedule};
use crate::env::sample_context;
use crate::error::{Error, Result};
use crate::loss::LossOracle;
use crate::rng::RngStreams;
use crate::simplex::{sample_categorical, ContextDistribution, SimplexVector};
use crate::trace::{EpochRecord, Role, RoundRecord, Trace};

struct Play {
    context: usize,
    arm: usize,
    p: SimplexVector,
    q: SimplexVector,
    fallback: bool,
}

/// Runs the epoch learner for the oracle's full horizon.
///
/// Epoch 1 plays the uniform snapshot and only gathers the first importance
/// estimate. Later epochs walk the rounds in pairs that share one FTRL
/// distribution; one round of each pair (chosen at random) feeds the next
/// importance estimate and the other may produce a loss estimate for every
/// context. A trailing partial epoch is played the same way but never
/// snapshotted, and a final odd round is played without estimates.
pub fn run_episode(
    oracle: &impl LossOracle,
    nu: &ContextDistribution,
    schedule: &ParamSchedule,
    rngs: &mut RngStreams,
) -> Result<Trace> {
    let (horizon, contexts, arms) = (oracle.horizon(), oracle.num_contexts(), oracle.num_arms());
    if nu.len() != contexts {
        return Err(Error::DimensionMismatch(format!(
            "context distribution has {} entries, oracle has {contexts} contexts",
            nu.len()
        )));
    }
    let epoch_len = schedule.epoch_len;
    if epoch_len > horizon {
        return Err(Error::HorizonTooSmall { epoch_len, horizon });
    }

    let mut state = AlgoState::new(arms, contexts, *schedule);
    let mut trace = Trace::new(arms, contexts, horizon, Some(*schedule));
    let mut row = vec![0.0; contexts];

    let mut start = 0;
    while start < horizon {
        let len = epoch_len.min(horizon - start);
        let epoch = state.epoch();
        trace.push_epoch(EpochRecord {
            epoch,
            start,
            len,
            snapshot: state.snapshots().to_vec(),
            fhat: (epoch > 1).then(|| state.fhat().to_vec()),
            completed: len == epoch_len,
        });
        let end_snapshot = if epoch == 1 {
            play_first_epoch(&mut state, &mut trace, nu, rngs, start, len)?
        } else {
            play_epoch(&mut state, &mut trace, oracle, nu, rngs, start, len, &mut row)?
        };
        if len == epoch_len {
            let snapshot = end_snapshot.expect("complete epochs end with a pair");
            state.finalize_epoch(snapshot)?;
        }
        start += len;
    }
    Ok(trace)
}

fn play_first_epoch(
    state: &mut AlgoState,
    trace: &mut Trace,
    nu: &ContextDistribution,
    rngs: &mut RngStreams,
    start: usize,
    len: usize,
) -> Result<Option<Vec<SimplexVector>>> {
    for t in (start..start + len).step_by(2) {
        // Roles carry no meaning for the learner here; they are drawn so that
        // every pair of the horizon has one.
        let (freq, _) = assign_pair_roles(&mut rngs.pairing).offsets();
        for offset in 0..2 {
            let context = sample_context(nu, &mut rngs.context);
            let s = state.snapshot(context).clone();
            let arm = sample_categorical(&s, &mut rngs.action);
            state.accumulate_freq(context);
            let p = state.compute_p(context);
            let role = if offset == freq { Role::Freq } else { Role::Loss };
            trace.push_round(
                RoundRecord {
                    t: t + offset,
                    context,
                    arm,
                    fallback: false,
                    keep: None,
                    role,
                },
                p.as_slice(),
                s.as_slice(),
            )?;
        }
        state.advance_rounds(2)?;
    }
    Ok(Some(state.compute_p_all()))
}

fn play_round(state: &AlgoState, p: SimplexVector, context: usize, rngs: &mut RngStreams) -> Play {
    let (q, fallback) = reject_or_fallback(&p, state.snapshot(context));
    let arm = sample_categorical(&q, &mut rngs.action);
    Play {
        context,
        arm,
        p,
        q,
        fallback,
    }
}

#[allow(clippy::too_many_arguments)]
fn play_epoch(
    state: &mut AlgoState,
    trace: &mut Trace,
    oracle: &impl LossOracle,
    nu: &ContextDistribution,
    rngs: &mut RngStreams,
    start: usize,
    len: usize,
    row: &mut [f64],
) -> Result<Option<Vec<SimplexVector>>> {
    let complete = len == state.schedule().epoch_len;
    let end = start + len;
    let mut snapshot = None;
    let mut t = start;
    while t + 1 < end {
        let last_pair = complete && t + 2 == end;
        // Every context's distribution at the pair's start; the last pair of
        // a complete epoch keeps them as the next snapshot.
        let all_p = last_pair.then(|| state.compute_p_all());
        let p_for = |c: usize| match &all_p {
            Some(ps) => ps[c].clone(),
            None => state.compute_p(c),
        };

        let c0 = sample_context(nu, &mut rngs.context);
        let first = play_round(state, p_for(c0), c0, rngs);
        let c1 = sample_context(nu, &mut rngs.context);
        let p1 = if c1 == c0 { first.p.clone() } else { p_for(c1) };
        let second = play_round(state, p1, c1, rngs);
        let plays = [first, second];

        let (freq, loss) = assign_pair_roles(&mut rngs.pairing).offsets();
        state.accumulate_freq(plays[freq].context);

        let lp = &plays[loss];
        let kp = keep_probability(state.snapshot(lp.context), &lp.q, lp.arm)?;
        debug_assert!(kp > 0.0 && kp <= 1.0, "keep probability {kp}");
        let keep = rngs.keep.random::<f64>() < kp;
        if keep {
            oracle.loss_row_into(t + loss, lp.arm, row);
            state.make_loss_estimate(row, lp.arm, true);
        }

        for (offset, play) in plays.iter().enumerate() {
            let is_loss = offset == loss;
            trace.push_round(
                RoundRecord {
                    t: t + offset,
                    context: play.context,
                    arm: play.arm,
                    fallback: play.fallback,
                    keep: is_loss.then_some(keep),
                    role: if is_loss { Role::Loss } else { Role::Freq },
                },
                play.p.as_slice(),
                play.q.as_slice(),
            )?;
        }
        state.advance_rounds(2)?;
        if all_p.is_some() {
            snapshot = all_p;
        }
        t += 2;
    }
    if t < end {
        let context = sample_context(nu, &mut rngs.context);
        let play = play_round(state, state.compute_p(context), context, rngs);
        trace.push_round(
            RoundRecord {
                t,
                context,
                arm: play.arm,
                fallback: play.fallback,
                keep: None,
                role: Role::Unpaired,
            },
            play.p.as_slice(),
            play.q.as_slice(),
        )?;
        state.advance_rounds(1)?;
    }
    Ok(snapshot)
}
