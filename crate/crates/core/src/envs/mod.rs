//! Episodic simulated plants, the rollout loop with a mid-episode backup
//! switch, and brute-force ground truth over a parameter grid.

mod linear;
mod toy;

pub use linear::{LinearPlant, LinearPlantParams};
pub use toy::{Toy1d, Toy1dParams};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{euclidean, ParamGrid};

/// Discrete-time closed-loop plant. `step` applies the policy with parameter
/// `a` at state `x` and advances by one sampling interval.
pub trait Environment: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn n_constraints(&self) -> usize;
    /// Number of transitions per episode.
    fn horizon(&self) -> usize;
    fn dt(&self) -> f64;
    fn x0(&self) -> &[f64];
    /// Bound on the distance between consecutive sampled states.
    fn jump_bound(&self) -> f64;
    fn set_jump_bound(&mut self, xi: f64);
    fn is_stochastic(&self) -> bool;
    /// Box from which random parameters are drawn when probing.
    fn param_box(&self) -> Vec<(f64, f64)>;
    fn stage_reward(&self, x: &[f64]) -> f64;
    fn gbar(&self, x: &[f64]) -> Vec<f64>;
    fn step(&self, x: &[f64], a: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace {
    /// Sampled states `x(0), ..., x(T)`.
    pub states: Vec<Vec<f64>>,
    /// Stage reward of every sampled state.
    pub rewards: Vec<f64>,
    /// `ḡ_i` of every sampled state.
    pub constraint_values: Vec<Vec<f64>>,
    /// First transition driven by the backup parameter.
    pub switched_at: Option<usize>,
    /// Grid index in force for each transition.
    pub applied_params: Vec<usize>,
}

impl RolloutTrace {
    pub fn is_safe(&self) -> bool {
        self.constraint_values
            .iter()
            .all(|g| g.iter().all(|&v| v >= 0.0))
    }

    pub fn min_constraint(&self) -> f64 {
        self.constraint_values
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// State at which the backup took over.
    pub fn switch_state(&self) -> Option<&[f64]> {
        self.switched_at.map(|k| self.states[k].as_slice())
    }

    pub fn max_jump(&self) -> f64 {
        self.states
            .windows(2)
            .map(|w| euclidean(&w[0], &w[1]))
            .fold(0.0, f64::max)
    }
}

/// Called at each sampled state before the next transition; returning
/// `Some(backup)` switches the policy for the rest of the episode.
pub type Monitor<'a> = &'a mut dyn FnMut(usize, &[f64]) -> Option<usize>;

pub fn rollout(
    env: &dyn Environment,
    grid: &ParamGrid,
    param: usize,
    monitor: Option<Monitor<'_>>,
    rng: &mut dyn RngCore,
) -> Result<RolloutTrace> {
    rollout_from(env, grid, param, env.x0(), env.horizon(), monitor, rng)
}

pub fn rollout_from(
    env: &dyn Environment,
    grid: &ParamGrid,
    param: usize,
    start: &[f64],
    steps: usize,
    mut monitor: Option<Monitor<'_>>,
    rng: &mut dyn RngCore,
) -> Result<RolloutTrace> {
    if start.len() != env.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: env.state_dim(),
            got: start.len(),
        });
    }
    if grid.dim() != env.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: env.param_dim(),
            got: grid.dim(),
        });
    }
    let mut trace = RolloutTrace {
        states: Vec::with_capacity(steps + 1),
        rewards: Vec::with_capacity(steps + 1),
        constraint_values: Vec::with_capacity(steps + 1),
        switched_at: None,
        applied_params: Vec::with_capacity(steps),
    };
    let mut x = start.to_vec();
    let mut current = param;
    for k in 0..=steps {
        trace.rewards.push(env.stage_reward(&x));
        trace.constraint_values.push(env.gbar(&x));
        trace.states.push(x.clone());
        if k == steps {
            break;
        }
        if trace.switched_at.is_none() {
            if let Some(m) = monitor.as_mut() {
                if let Some(backup) = m(k, &x) {
                    trace.switched_at = Some(k);
                    current = backup;
                }
            }
        }
        trace.applied_params.push(current);
        x = env.step(&x, grid.point(current).coords(), rng);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: k + 1 });
        }
    }
    Ok(trace)
}

/// Noisy episode measurements: accumulated reward first, then the minimum
/// of each constraint over the trace. `noise_std[i]` belongs to output `i`.
pub fn episode_measurements<R: Rng + ?Sized>(
    trace: &RolloutTrace,
    noise_std: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let q = trace.constraint_values.first().map_or(0, Vec::len);
    let mut y = Vec::with_capacity(q + 1);
    y.push(trace.total_reward());
    for i in 0..q {
        y.push(
            trace
                .constraint_values
                .iter()
                .map(|g| g[i])
                .fold(f64::INFINITY, f64::min),
        );
    }
    for (v, &s) in y.iter_mut().zip(noise_std) {
        if s > 0.0 {
            *v += Normal::new(0.0, s).expect("finite std").sample(rng);
        }
    }
    y
}

/// Largest consecutive-state distance seen over `episodes` rollouts from
/// `x0` whose parameter is redrawn uniformly at random every few steps.
/// Only transitions leaving a state that satisfies every constraint count:
/// the jump bound is only ever applied at certified, hence safe, states.
pub fn probe_jump_bound(env: &dyn Environment, episodes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = env.param_box();
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..episodes {
        let mut x = env.x0().to_vec();
        let mut a = draw(&mut rng);
        for _ in 0..env.horizon() {
            if rng.random_bool(0.1) {
                a = draw(&mut rng);
            }
            let next = env.step(&x, &a, &mut rng);
            if next.iter().any(|v| !v.is_finite()) {
                break;
            }
            if env.gbar(&x).iter().all(|&g| g >= 0.0) {
                worst = worst.max(euclidean(&x, &next));
            }
            x = next;
        }
    }
    worst
}

/// Ground-truth objective and constraint values per grid point.
#[derive(Debug, Clone, Serialize)]
pub struct OracleTable {
    pub f: Vec<f64>,
    /// `g[a][i]` is the true value of constraint `i + 1` at grid point `a`.
    pub g: Vec<Vec<f64>>,
}

impl OracleTable {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn is_safe(&self, a: usize) -> bool {
        self.g[a].iter().all(|&v| v >= 0.0)
    }

    pub fn safe_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&a| self.is_safe(a)).collect()
    }

    /// Smallest and largest true objective over the safe points, falling
    /// back to the whole grid when nothing is safe.
    pub fn f_range(&self) -> (f64, f64) {
        let mut idx = self.safe_indices();
        if idx.is_empty() {
            idx = (0..self.len()).collect();
        }
        let lo = idx.iter().map(|&a| self.f[a]).fold(f64::INFINITY, f64::min);
        let hi = idx.iter().map(|&a| self.f[a]).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Objective rescaled so the safe points span [0, 1].
    pub fn normalized(&self, a: usize) -> f64 {
        let (lo, hi) = self.f_range();
        if hi > lo {
            (self.f[a] - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    /// Number of grid-connected safe regions containing at least one of
    /// `params`.
    pub fn regions_touched(&self, grid: &ParamGrid, params: &[usize]) -> usize {
        grid.components(&self.safe_indices())
            .iter()
            .filter(|c| params.iter().any(|p| c.contains(p)))
            .count()
    }

    /// Best true objective among the safe points.
    pub fn safe_optimum(&self) -> Option<usize> {
        self.safe_indices()
            .into_iter()
            .max_by(|&a, &b| self.f[a].total_cmp(&self.f[b]).then(b.cmp(&a)))
    }
}

/// Noise-free episode values for every grid point. Deterministic plants are
/// rolled out once; stochastic ones are averaged over `repeats` rollouts.
/// A diverging rollout scores `-inf` on every output.
pub fn oracle_truth(env: &dyn Environment, grid: &ParamGrid, repeats: usize, seed: u64) -> Result<OracleTable> {
    if repeats == 0 {
        return Err(Error::config("repeats", "must be at least 1"));
    }
    let runs = if env.is_stochastic() { repeats } else { 1 };
    let q = env.n_constraints();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Vec::with_capacity(grid.len());
    let mut g = Vec::with_capacity(grid.len());
    for a in 0..grid.len() {
        let mut fa = 0.0;
        let mut ga = vec![0.0; q];
        for _ in 0..runs {
            match rollout(env, grid, a, None, &mut rng) {
                Ok(trace) => {
                    let y = episode_measurements(&trace, &[], &mut rng);
                    fa += y[0];
                    for i in 0..q {
                        ga[i] += y[i + 1];
                    }
                }
                Err(Error::Diverged { .. }) => {
                    fa = f64::NEG_INFINITY;
                    ga.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
                }
                Err(e) => return Err(e),
            }
        }
        f.push(fa / runs as f64);
        g.push(ga.into_iter().map(|v| v / runs as f64).collect());
    }
    Ok(OracleTable { f, g })
}
