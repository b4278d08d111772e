use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{probe_jump_bound, Environment};
use crate::error::{Error, Result};

/// Chain of decoupled, open-loop unstable double integrators in error
/// coordinates. Axis `j` has state `(p_j, v_j)` with
/// `p' = v`, `v' = alpha p + u` and policy `u = -kp p - kd v`, where
/// `kp = kp_max |a_{j mod 2}|`. Small gains diverge and large gains
/// overshoot, so the safe set `‖x‖ ≤ zeta` splits into one island per sign
/// pattern of the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearPlantParams {
    /// State dimension: 2, 4 or 6.
    pub dim: usize,
    pub alpha: f64,
    pub kp_max: f64,
    pub kd: f64,
    pub zeta: f64,
    pub dt: f64,
    pub horizon: usize,
    /// Standard deviation of additive process noise per step; zero disables.
    pub noise_std: f64,
    pub probe_episodes: usize,
}

impl Default for LinearPlantParams {
    fn default() -> Self {
        LinearPlantParams {
            dim: 4,
            alpha: 1.0,
            kp_max: 8.0,
            kd: 1.0,
            zeta: 2.6,
            dt: 0.02,
            horizon: 200,
            noise_std: 0.0,
            probe_episodes: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearPlant {
    params: LinearPlantParams,
    noise: Option<Normal<f64>>,
    x0: Vec<f64>,
    jump_bound: f64,
}

impl LinearPlant {
    pub fn new(params: LinearPlantParams, seed: u64) -> Result<Self> {
        if !matches!(params.dim, 2 | 4 | 6) {
            return Err(Error::config("env.dim", "must be 2, 4 or 6"));
        }
        for (key, v) in [
            ("env.kp_max", params.kp_max),
            ("env.zeta", params.zeta),
            ("env.dt", params.dt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, "must be finite and positive"));
            }
        }
        if !(params.kd.is_finite() && params.kd >= 0.0) {
            return Err(Error::config("env.kd", "must be finite and non-negative"));
        }
        if !params.alpha.is_finite() {
            return Err(Error::config("env.alpha", "must be finite"));
        }
        if params.horizon == 0 {
            return Err(Error::config("env.horizon", "must be at least 1"));
        }
        if !(params.noise_std.is_finite() && params.noise_std >= 0.0) {
            return Err(Error::config("env.noise_std", "must be finite and non-negative"));
        }
        let noise = (params.noise_std > 0.0).then(|| Normal::new(0.0, params.noise_std).expect("validated std"));
        let x0 = (0..params.dim).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let mut env = LinearPlant {
            params,
            noise,
            x0,
            jump_bound: f64::INFINITY,
        };
        let probed = probe_jump_bound(&env, env.params.probe_episodes.max(1), seed);
        env.jump_bound = (1.1 * probed).max(1e-9);
        Ok(env)
    }

    pub fn params(&self) -> &LinearPlantParams {
        &self.params
    }

    fn deriv(&self, x: &[f64], a: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; x.len()];
        for j in 0..x.len() / 2 {
            let (p, v) = (x[2 * j], x[2 * j + 1]);
            let kp = self.params.kp_max * a[j % 2].abs();
            let u = -kp * p - self.params.kd * v;
            dx[2 * j] = v;
            dx[2 * j + 1] = self.params.alpha * p + u;
        }
        dx
    }
}

fn axpy(x: &[f64], h: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(x, d)| x + h * d).collect()
}

impl Environment for LinearPlant {
    fn name(&self) -> &str {
        "linear_plant"
    }

    fn state_dim(&self) -> usize {
        self.params.dim
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn n_constraints(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn dt(&self) -> f64 {
        self.params.dt
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
        vec![(-1.0, 1.0); 2]
    }

    fn stage_reward(&self, x: &[f64]) -> f64 {
        -x.iter().map(|v| v * v).sum::<f64>()
    }

    fn gbar(&self, x: &[f64]) -> Vec<f64> {
        vec![self.params.zeta - x.iter().map(|v| v * v).sum::<f64>().sqrt()]
    }

    fn step(&self, x: &[f64], a: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let h = self.params.dt;
        let k1 = self.deriv(x, a);
        let k2 = self.deriv(&axpy(x, 0.5 * h, &k1), a);
        let k3 = self.deriv(&axpy(x, 0.5 * h, &k2), a);
        let k4 = self.deriv(&axpy(x, h, &k3), a);
        let mut next: Vec<f64> = (0..x.len())
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        if let Some(n) = &self.noise {
            for v in &mut next {
                *v += n.sample(rng);
            }
        }
        next
    }
}
