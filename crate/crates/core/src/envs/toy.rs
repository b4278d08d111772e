use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{probe_jump_bound, Environment};
use crate::error::{Error, Result};

/// Scalar system `s' = 1.01 √|s| − 0.2 √|a (s + w)| + v` started at zero,
/// with reward `−s²` and constraint `0.81 − s²`. Unstable for small `|a|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Toy1dParams {
    pub horizon: usize,
    /// Standard deviation of both process and measurement noise.
    pub noise_std: f64,
    pub deterministic: bool,
    pub probe_episodes: usize,
}

impl Default for Toy1dParams {
    fn default() -> Self {
        Toy1dParams {
            horizon: 100,
            noise_std: 0.01,
            deterministic: false,
            probe_episodes: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Toy1d {
    params: Toy1dParams,
    noise: Option<Normal<f64>>,
    x0: Vec<f64>,
    jump_bound: f64,
}

impl Toy1d {
    /// Builds the plant and sets the jump bound to 1.1 times the largest
    /// step seen while probing with seed `seed`.
    pub fn new(params: Toy1dParams, seed: u64) -> Result<Self> {
        if params.horizon == 0 {
            return Err(Error::config("env.horizon", "must be at least 1"));
        }
        if !(params.noise_std.is_finite() && params.noise_std >= 0.0) {
            return Err(Error::config("env.noise_std", "must be finite and non-negative"));
        }
        let noise = if params.deterministic || params.noise_std == 0.0 {
            None
        } else {
            Some(Normal::new(0.0, params.noise_std).expect("validated std"))
        };
        let mut env = Toy1d {
            params,
            noise,
            x0: vec![0.0],
            jump_bound: f64::INFINITY,
        };
        let probed = probe_jump_bound(&env, env.params.probe_episodes.max(1), seed);
        env.jump_bound = (1.1 * probed).max(1e-9);
        Ok(env)
    }

    pub fn params(&self) -> &Toy1dParams {
        &self.params
    }
}

impl Environment for Toy1d {
    fn name(&self) -> &str {
        "toy1d"
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn n_constraints(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn dt(&self) -> f64 {
        1.0
    }

    fn x0(&self) -> &[f64] {
        &self.x0
    }

    fn jump_bound(&self) -> f64 {
        self.jump_bound
    }

    fn set_jump_bound(&mut self, xi: f64) {
        self.jump_bound = xi;
    }

    fn is_stochastic(&self) -> bool {
        self.noise.is_some()
    }

    fn param_box(&self) -> Vec<(f64, f64)> {
        vec![(-6.0, 5.0)]
    }

    fn stage_reward(&self, x: &[f64]) -> f64 {
        -x[0] * x[0]
    }

    fn gbar(&self, x: &[f64]) -> Vec<f64> {
        vec![0.81 - x[0] * x[0]]
    }

    fn step(&self, x: &[f64], a: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let s = x[0];
        let (v, w) = match &self.noise {
            Some(n) => (n.sample(rng), n.sample(rng)),
            None => (0.0, 0.0),
        };
        let y = s + w;
        vec![1.01 * s.abs().sqrt() - 0.2 * (a[0] * y).abs().sqrt() + v]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{oracle_truth, rollout};
    use crate::grid::ParamGrid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn starts_at_zero() {
        let env = Toy1d::new(Toy1dParams::default(), 0).unwrap();
        assert_eq!(env.x0(), &[0.0]);
    }

    #[test]
    fn deterministic_step_matches_formula() {
        let env = Toy1d::new(
            Toy1dParams {
                deterministic: true,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let next = env.step(&[0.25], &[-4.0], &mut rng)[0];
        assert!((next - (1.01 * 0.5 - 0.2 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn stable_parameters_settle_near_fixed_point() {
        // fixed point of s = c √s is c², with c = 1.01 − 0.2 √|a|
        let env = Toy1d::new(Toy1dParams::default(), 0).unwrap();
        let grid = ParamGrid::uniform(&[(-6.0, 5.0, 56)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = rollout(&env, &grid, 0, None, &mut rng).unwrap();
        let c: f64 = 1.01 - 0.2 * 6f64.sqrt();
        let last = t.states.last().unwrap()[0];
        assert!((last - c * c).abs() < 0.05, "settled at {last}");
    }

    #[test]
    fn oracle_has_two_safe_regions_split_at_zero() {
        let env = Toy1d::new(Toy1dParams::default(), 0).unwrap();
        let grid = ParamGrid::uniform(&[(-6.0, 5.0, 56)]).unwrap();
        let truth = oracle_truth(&env, &grid, 20, 1).unwrap();
        let zero = grid.nearest(&[0.0]).unwrap();
        assert!(truth.g[zero][0] < 0.0);
        let comps = grid.components(&truth.safe_indices());
        assert!(comps.len() >= 2, "{comps:?}");
        assert_eq!(truth.safe_optimum(), Some(0));
    }
}
