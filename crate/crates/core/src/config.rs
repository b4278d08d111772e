//! JSON run configuration: parsing, per-environment defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backups::TierSpec;
use crate::engine::{Algorithm, BoundaryMode, EngineConfig, StageBudget};
use crate::envs::{Environment, LinearPlant, LinearPlantParams, Toy1d, Toy1dParams};
use crate::error::{Error, Result};
use crate::grid::ParamGrid;
use crate::kernel::{KernelFamily, KernelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Toy1d(Toy1dParams),
    LinearPlant(LinearPlantParams),
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Toy1d(Toy1dParams::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Exact,
    Tiered,
}

/// Configuration as written by the user. Every field except the
/// environment has a default; several defaults depend on the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub env: EnvConfig,
    /// Seed for environment construction (jump-bound probing) and the oracle.
    #[serde(default)]
    pub env_seed: u64,
    #[serde(default)]
    pub grid: Option<Vec<AxisSpec>>,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub kernels: Option<Vec<KernelSpec>>,
    #[serde(default)]
    pub noise_std: Option<Vec<f64>>,
    #[serde(default = "default_beta_sqrt")]
    pub beta_sqrt: f64,
    #[serde(default)]
    pub lipschitz_a: Option<f64>,
    #[serde(default)]
    pub lipschitz_x: Option<f64>,
    /// Overrides the probed jump bound.
    #[serde(default)]
    pub jump_bound: Option<f64>,
    #[serde(default)]
    pub state_noise_margin: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_n_lse")]
    pub n_lse: usize,
    #[serde(default = "default_n_ge")]
    pub n_ge: usize,
    #[serde(default = "default_lse_reduction")]
    pub lse_reduction: f64,
    #[serde(default = "default_lse_min")]
    pub lse_min: usize,
    #[serde(default = "default_boundary")]
    pub boundary: BoundaryKind,
    #[serde(default = "default_eta_l")]
    pub eta_l: f64,
    #[serde(default = "default_eta_u")]
    pub eta_u: f64,
    #[serde(default = "default_kappa_l")]
    pub kappa_l: f64,
    #[serde(default = "default_kappa_u")]
    pub kappa_u: f64,
    /// Isotropic lengthscale of the state kernel that turns kappa into distances.
    #[serde(default = "default_state_lengthscale")]
    pub state_lengthscale: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_true")]
    pub subset_selection: bool,
    #[serde(default)]
    pub harvest_stride: Option<usize>,
    #[serde(default)]
    pub objective_scale: Option<f64>,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Coordinates of the initial safe parameters; snapped to the grid.
    #[serde(default)]
    pub seed_params: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_oracle_repeats")]
    pub oracle_repeats: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_algorithm() -> Algorithm {
    Algorithm::GoSafeOpt
}
fn default_beta_sqrt() -> f64 {
    3.0
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_n_lse() -> usize {
    5
}
fn default_n_ge() -> usize {
    10
}
fn default_lse_reduction() -> f64 {
    0.5
}
fn default_lse_min() -> usize {
    1
}
fn default_boundary() -> BoundaryKind {
    BoundaryKind::Exact
}
fn default_eta_l() -> f64 {
    0.4
}
fn default_eta_u() -> f64 {
    0.6
}
fn default_kappa_l() -> f64 {
    0.90
}
fn default_kappa_u() -> f64 {
    0.94
}
fn default_state_lengthscale() -> f64 {
    1.0
}
fn default_n_max() -> usize {
    1000
}
fn default_m() -> usize {
    500
}
fn default_true() -> bool {
    true
}
fn default_seeds() -> Vec<u64> {
    (0..20).collect()
}
fn default_oracle_repeats() -> usize {
    50
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn toy() -> Self {
        Self::default()
    }

    pub fn linear_plant() -> Self {
        RunConfig {
            env: EnvConfig::LinearPlant(LinearPlantParams::default()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_l < self.eta_u) {
            return Err(Error::config("eta_l", format!("eta_l ({}) must be below eta_u ({})", self.eta_l, self.eta_u)));
        }
        for (key, v) in [
            ("kappa_l", self.kappa_l),
            ("kappa_u", self.kappa_u),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(key, "must lie in (0, 1)"));
            }
        }
        if self.kappa_l == self.kappa_u {
            return Err(Error::config("kappa_u", "must differ from kappa_l"));
        }
        if !(self.state_lengthscale.is_finite() && self.state_lengthscale > 0.0) {
            return Err(Error::config("state_lengthscale", "must be finite and positive"));
        }
        if self.m == 0 || self.m > self.n_max {
            return Err(Error::config("m", "need 1 <= m <= n_max"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed required"));
        }
        if self.oracle_repeats == 0 {
            return Err(Error::config("oracle_repeats", "must be at least 1"));
        }
        if let Some(xi) = self.jump_bound {
            if !(xi.is_finite() && xi > 0.0) {
                return Err(Error::config("jump_bound", "must be finite and positive"));
            }
        }
        if !(self.state_noise_margin.is_finite() && self.state_noise_margin >= 0.0) {
            return Err(Error::config("state_noise_margin", "must be finite and non-negative"));
        }
        if let Some(axes) = &self.grid {
            if axes.is_empty() {
                return Err(Error::config("grid", "at least one axis required"));
            }
            for (i, a) in axes.iter().enumerate() {
                if a.count == 0 || !(a.lo.is_finite() && a.hi.is_finite()) || (a.count > 1 && a.hi <= a.lo) {
                    return Err(Error::config(format!("grid[{i}]"), "need finite lo < hi and count >= 1"));
                }
            }
        }
        if self.harvest_stride == Some(0) {
            return Err(Error::config("harvest_stride", "must be at least 1"));
        }
        // the remaining checks need the resolved environment
        let env = self.build_env()?;
        let grid = self.build_grid()?;
        if grid.dim() != env.param_dim() {
            return Err(Error::config(
                "grid",
                format!("{} axes given, the environment has {} parameters", grid.dim(), env.param_dim()),
            ));
        }
        self.engine_config(env.as_ref(), &grid)?.validate(env.n_constraints() + 1)?;
        Ok(())
    }

    pub fn build_env(&self) -> Result<Box<dyn Environment>> {
        let mut env: Box<dyn Environment> = match &self.env {
            EnvConfig::Toy1d(p) => Box::new(Toy1d::new(p.clone(), self.env_seed)?),
            EnvConfig::LinearPlant(p) => Box::new(LinearPlant::new(p.clone(), self.env_seed)?),
        };
        if let Some(xi) = self.jump_bound {
            env.set_jump_bound(xi);
        }
        Ok(env)
    }

    pub fn build_grid(&self) -> Result<ParamGrid> {
        match &self.grid {
            Some(axes) => ParamGrid::uniform(&axes.iter().map(|a| (a.lo, a.hi, a.count)).collect::<Vec<_>>()),
            None => match self.env {
                EnvConfig::Toy1d(_) => ParamGrid::uniform(&[(-6.0, 5.0, 56)]),
                EnvConfig::LinearPlant(_) => ParamGrid::uniform(&[(-1.0, 1.0, 21), (-1.0, 1.0, 21)]),
            },
        }
    }

    pub fn tiers(&self) -> Result<TierSpec> {
        let k = KernelSpec::squared_exponential(vec![self.state_lengthscale], 1.0)?;
        TierSpec::from_covariance(self.eta_l, self.eta_u, &k, self.kappa_l, self.kappa_u)
    }

    /// Resolves environment-dependent defaults into an engine configuration.
    pub fn engine_config(&self, env: &dyn Environment, grid: &ParamGrid) -> Result<EngineConfig> {
        let q = env.n_constraints();
        let toy = matches!(self.env, EnvConfig::Toy1d(_));
        let kernels = match &self.kernels {
            Some(k) => k.clone(),
            None => {
                let ls = if toy { 2.0 } else { 0.3 };
                vec![KernelSpec::new(KernelFamily::Matern32, vec![ls; grid.dim()], 1.0)?; q + 1]
            }
        };
        let noise_std = self.noise_std.clone().unwrap_or_else(|| vec![0.01; q + 1]);
        let seed_coords = match &self.seed_params {
            Some(s) => s.clone(),
            None if toy => vec![vec![1.0]],
            None => vec![vec![0.4, 0.4]],
        };
        let mut seed_params = Vec::with_capacity(seed_coords.len());
        for (i, c) in seed_coords.iter().enumerate() {
            if c.len() != grid.dim() {
                return Err(Error::config(
                    format!("seed_params[{i}]"),
                    format!("expected {} coordinates", grid.dim()),
                ));
            }
            let idx = grid.nearest(c).ok_or_else(|| Error::config(format!("seed_params[{i}]"), "no grid point"))?;
            if !seed_params.contains(&idx) {
                seed_params.push(idx);
            }
        }
        let boundary = match self.boundary {
            BoundaryKind::Exact => BoundaryMode::Exact,
            BoundaryKind::Tiered => BoundaryMode::Tiered(self.tiers()?),
        };
        Ok(EngineConfig {
            algorithm: self.algorithm,
            kernels,
            noise_std,
            beta_sqrt: self.beta_sqrt,
            lipschitz_a: self.lipschitz_a.unwrap_or(if toy { 1.0 } else { 10.0 }),
            lipschitz_x: self.lipschitz_x.unwrap_or(if toy { 0.8 } else { 1.0 }),
            epsilon: self.epsilon,
            budget: StageBudget {
                n_lse: self.n_lse,
                n_ge: self.n_ge,
                lse_reduction: self.lse_reduction,
                lse_min: self.lse_min,
            },
            boundary,
            state_noise_margin: self.state_noise_margin,
            subset_selection: self.subset_selection.then_some((self.n_max, self.m)),
            harvest_stride: self.harvest_stride,
            objective_scale: self.objective_scale.unwrap_or(env.horizon() as f64),
            iterations: self.iterations.unwrap_or(if toy { 20 } else { 100 }),
            seed_params,
        })
    }
}

/// Parses `a..b` (inclusive) or a comma-separated list of seeds.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::config("seeds", format!("cannot parse `{text}`; use `0..19` or `1,2,5`"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    let seeds = text
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_json(r#"{"env": {"kind": "toy1d"}, "seeds": [0, 1]}"#).unwrap();
        assert_eq!(c.beta_sqrt, 3.0);
        assert_eq!(c.epsilon, 0.1);
        assert_eq!((c.kappa_l, c.kappa_u), (0.90, 0.94));
        assert_eq!((c.n_max, c.m), (1000, 500));
        assert_eq!(c.seeds, vec![0, 1]);
        let env = c.build_env().unwrap();
        let grid = c.build_grid().unwrap();
        assert_eq!(grid.len(), 56);
        let e = c.engine_config(env.as_ref(), &grid).unwrap();
        assert_eq!(e.iterations, 20);
        assert_eq!(e.kernels.len(), 2);
    }

    #[test]
    fn eta_ordering_rejected_with_key() {
        let err = RunConfig::from_json(r#"{"eta_l": 0.9, "eta_u": 0.6}"#).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "eta_l"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"betta": 2.0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"env": {"kind": "toy1d", "horizn": 5}}"#).is_err());
    }

    #[test]
    fn env_params_parse() {
        let c = RunConfig::from_json(r#"{"env": {"kind": "linear_plant", "zeta": 3.0}}"#).unwrap();
        match &c.env {
            EnvConfig::LinearPlant(p) => {
                assert_eq!(p.zeta, 3.0);
                assert_eq!(p.dim, 4);
            }
            e => panic!("unexpected {e:?}"),
        }
        assert_eq!(c.build_grid().unwrap().len(), 441);
    }

    #[test]
    fn kernel_count_checked() {
        let err = RunConfig::from_json(
            r#"{"kernels": [{"family": "matern32", "lengthscales": [1.0], "output_scale": 1.0}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "kernels"));
    }

    #[test]
    fn invalid_values_name_their_key() {
        for (json, key) in [
            (r#"{"beta_sqrt": -1.0}"#, "beta_sqrt"),
            (r#"{"n_lse": 0}"#, "n_lse"),
            (r#"{"m": 2000}"#, "m"),
            (r#"{"seed_params": [[1.0, 2.0]]}"#, "seed_params[0]"),
            (r#"{"grid": [{"lo": 1.0, "hi": 0.0, "count": 3}]}"#, "grid[0]"),
        ] {
            match RunConfig::from_json(json) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key, "{json}"),
                other => panic!("{json}: {other:?}"),
            }
        }
    }

    #[test]
    fn seeds_parse() {
        assert_eq!(parse_seeds("0..19").unwrap().len(), 20);
        assert_eq!(parse_seeds("3").unwrap(), vec![3]);
        assert_eq!(parse_seeds("1, 4,9").unwrap(), vec![1, 4, 9]);
        assert!(parse_seeds("5..2").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn tiered_boundary_resolves_distances() {
        let c = RunConfig::from_json(r#"{"boundary": "tiered"}"#).unwrap();
        let t = c.tiers().unwrap();
        assert!(t.d_l < t.d_u);
    }
}
