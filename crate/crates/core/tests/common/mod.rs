#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlearn::algo::{derive_schedule, run_episode, AlgoState, ParamSchedule};
use xlearn::env::{build_oracle, EnvKind, EnvOracle, EnvSpec};
use xlearn::{softmax_weights, ContextDistribution, RngStreams, SimplexVector, Trace};

pub fn shifting(arms: usize, contexts: usize, horizon: usize, env_seed: u64) -> EnvSpec {
    EnvSpec {
        kind: EnvKind::with_defaults("shifting", arms, contexts).unwrap(),
        arms,
        contexts,
        horizon,
        env_seed,
        context_probs: None,
    }
}

/// One learner run at the default schedule; the environment seed equals the run seed.
pub fn crosslearn_run(spec: &EnvSpec, delta: f64, seed: u64) -> (Trace, EnvOracle, ContextDistribution) {
    let (oracle, nu) = build_oracle(spec).unwrap();
    let schedule = derive_schedule(spec.arms, spec.horizon, delta).unwrap();
    let trace = run_episode(&oracle, &nu, &schedule, &mut RngStreams::new(seed)).unwrap();
    (trace, oracle, nu)
}

/// A strictly interior distribution with log-weights spread over `[-spread, spread]`.
pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize, spread: f64) -> SimplexVector {
    let g: Vec<f64> = (0..k).map(|_| rng.random_range(-spread..spread)).collect();
    softmax_weights(&g, 1.0, None).unwrap()
}

pub fn random_context_distribution(rng: &mut ChaCha8Rng, c: usize) -> ContextDistribution {
    ContextDistribution::new(random_simplex(rng, c, 1.0).into_vec()).unwrap()
}

/// A frozen state at an epoch `>= 2` with random snapshots, estimate and losses.
pub fn random_state(seed: u64, arms: usize, contexts: usize, schedule: ParamSchedule) -> (AlgoState, ContextDistribution) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let current: Vec<SimplexVector> = (0..contexts).map(|_| random_simplex(&mut rng, arms, 1.0)).collect();
    let next: Vec<SimplexVector> = (0..contexts).map(|_| random_simplex(&mut rng, arms, 1.0)).collect();
    let fhat = random_simplex(&mut rng, arms, 0.5).as_slice().iter().map(|x| x / 2.0).collect();
    let cumloss = (0..contexts)
        .map(|_| (0..arms).map(|_| rng.random_range(0.0..2.0 / schedule.eta)).collect())
        .collect();
    let nu = random_context_distribution(&mut rng, contexts);
    (AlgoState::from_parts(schedule, current, next, fhat, cumloss).unwrap(), nu)
}
