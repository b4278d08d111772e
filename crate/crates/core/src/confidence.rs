//! Contained confidence intervals over (grid point, output index).
//!
//! Output index 0 is the objective; indices `1..=q` are the constraints. The
//! intervals are intersected across iterations, so lower bounds never
//! decrease and upper bounds never increase.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::grid::ParamGrid;

/// Constant confidence multiplier `β^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    beta_sqrt: f64,
}

impl BetaSchedule {
    pub fn constant(beta_sqrt: f64) -> Result<Self> {
        if !(beta_sqrt.is_finite() && beta_sqrt > 0.0) {
            return Err(Error::config("beta_sqrt", "must be finite and positive"));
        }
        Ok(BetaSchedule { beta_sqrt })
    }

    pub fn beta_sqrt(&self) -> f64 {
        self.beta_sqrt
    }
}

/// An entry where the new interval did not overlap the contained one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contradiction {
    pub point: usize,
    pub output: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsTable {
    n_points: usize,
    n_outputs: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoundsTable {
    /// Constraint lower bounds start at 0 on the safe seed and at `-∞`
    /// elsewhere; the objective has no floor and every upper bound is `+∞`.
    pub fn init(grid: &ParamGrid, safe_seed: &[usize], q: usize) -> Result<Self> {
        if safe_seed.is_empty() {
            return Err(Error::config("safe_seed", "at least one safe parameter is required"));
        }
        if q == 0 {
            return Err(Error::config("constraints", "at least one constraint is required"));
        }
        let n_points = grid.len();
        if let Some(&bad) = safe_seed.iter().find(|&&i| i >= n_points) {
            return Err(Error::config(
                "safe_seed",
                format!("index {bad} is outside the grid of {n_points} points"),
            ));
        }
        let n_outputs = q + 1;
        let mut table = BoundsTable {
            n_points,
            n_outputs,
            lower: vec![f64::NEG_INFINITY; n_points * n_outputs],
            upper: vec![f64::INFINITY; n_points * n_outputs],
        };
        for &a in safe_seed {
            for i in 1..n_outputs {
                table.lower[a * n_outputs + i] = 0.0;
            }
        }
        Ok(table)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    /// Number of constraints `q`.
    pub fn n_constraints(&self) -> usize {
        self.n_outputs - 1
    }

    pub fn lower(&self, point: usize, output: usize) -> f64 {
        self.lower[point * self.n_outputs + output]
    }

    pub fn upper(&self, point: usize, output: usize) -> f64 {
        self.upper[point * self.n_outputs + output]
    }

    /// `u - l`; infinite when either side is a sentinel.
    pub fn width(&self, point: usize, output: usize) -> f64 {
        let (l, u) = (self.lower(point, output), self.upper(point, output));
        if l.is_infinite() || u.is_infinite() {
            f64::INFINITY
        } else {
            u - l
        }
    }

    /// Largest width over every output index.
    pub fn max_width(&self, point: usize) -> f64 {
        (0..self.n_outputs)
            .map(|i| self.width(point, i))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest width over the constraint indices only.
    pub fn max_constraint_width(&self, point: usize) -> f64 {
        (1..self.n_outputs)
            .map(|i| self.width(point, i))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `min_i l(a, i)` over the constraints.
    pub fn min_constraint_lower(&self, point: usize) -> f64 {
        (1..self.n_outputs)
            .map(|i| self.lower(point, i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Intersects every entry with `[μ - β^{1/2}σ, μ + β^{1/2}σ]`, one model
    /// per output index. Entries whose intersection would be empty are set to
    /// the midpoint of the crossed bounds and reported.
    pub fn update(
        &mut self,
        grid: &ParamGrid,
        models: &[GpModel],
        beta: BetaSchedule,
    ) -> Result<Vec<Contradiction>> {
        if models.len() != self.n_outputs {
            return Err(Error::DimensionMismatch {
                expected: self.n_outputs,
                got: models.len(),
            });
        }
        if grid.len() != self.n_points {
            return Err(Error::DimensionMismatch {
                expected: self.n_points,
                got: grid.len(),
            });
        }
        for m in models {
            m.kernel().check_dim(grid.dim())?;
        }
        let b = beta.beta_sqrt();
        let mut contradictions = Vec::new();
        for (a, point) in grid.points().iter().enumerate() {
            for (i, model) in models.iter().enumerate() {
                let post = model.predict_unchecked(point.coords());
                let s = post.std();
                let k = a * self.n_outputs + i;
                let l = self.lower[k].max(post.mean - b * s);
                let u = self.upper[k].min(post.mean + b * s);
                if l > u {
                    let mid = 0.5 * (l + u);
                    warn!(
                        "confidence contradiction at point {a}, output {i}: l={l:.6} > u={u:.6}"
                    );
                    contradictions.push(Contradiction {
                        point: a,
                        output: i,
                        lower: l,
                        upper: u,
                    });
                    // keep monotone: never lower l or raise u
                    self.lower[k] = mid.max(self.lower[k]);
                    self.upper[k] = mid.min(self.upper[k]).max(self.lower[k]);
                } else {
                    self.lower[k] = l;
                    self.upper[k] = u;
                }
            }
        }
        Ok(contradictions)
    }

    /// Intersects the constraint intervals of `point` with `[0, ∞]`.
    pub fn ge_clamp(&mut self, point: usize) {
        for i in 1..self.n_outputs {
            let k = point * self.n_outputs + i;
            self.lower[k] = self.lower[k].max(0.0);
            if self.upper[k] < self.lower[k] {
                self.upper[k] = self.lower[k];
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn set(&mut self, point: usize, output: usize, lower: f64, upper: f64) {
        self.lower[point * self.n_outputs + output] = lower;
        self.upper[point * self.n_outputs + output] = upper;
    }

    /// Test and oracle hook for building arbitrary tables.
    pub fn from_raw(n_points: usize, n_outputs: usize, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if n_outputs < 2 || lower.len() != n_points * n_outputs || upper.len() != lower.len() {
            return Err(Error::config("bounds", "shape mismatch"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u || l.is_nan() || u.is_nan()) {
            return Err(Error::config("bounds", "lower bound exceeds upper bound"));
        }
        Ok(BoundsTable {
            n_points,
            n_outputs,
            lower,
            upper,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid3() -> ParamGrid {
        ParamGrid::uniform(&[(0.0, 2.0, 3)]).unwrap()
    }

    fn prior_models(n: usize) -> Vec<GpModel> {
        let k = KernelSpec::squared_exponential(vec![1.0], 1.0).unwrap();
        (0..n).map(|_| GpModel::prior(k.clone(), 0.1).unwrap()).collect()
    }

    #[test]
    fn init_seeds_constraint_floor() {
        let t = BoundsTable::init(&grid3(), &[1], 1).unwrap();
        assert_eq!(t.lower(0, 1), f64::NEG_INFINITY);
        assert_eq!(t.lower(1, 1), 0.0);
        assert_eq!(t.lower(2, 1), f64::NEG_INFINITY);
        for a in 0..3 {
            assert_eq!(t.lower(a, 0), f64::NEG_INFINITY);
            for i in 0..2 {
                assert_eq!(t.upper(a, i), f64::INFINITY);
            }
        }
    }

    #[test]
    fn init_rejects_empty_seed() {
        assert!(BoundsTable::init(&grid3(), &[], 1).is_err());
        assert!(BoundsTable::init(&grid3(), &[7], 1).is_err());
        assert!(BoundsTable::init(&grid3(), &[0], 0).is_err());
    }

    #[test]
    fn prior_update_keeps_seed_floor() {
        let mut t = BoundsTable::init(&grid3(), &[1], 1).unwrap();
        let beta = BetaSchedule::constant(2.0).unwrap();
        t.update(&grid3(), &prior_models(2), beta).unwrap();
        assert_eq!(t.lower(1, 1), 0.0);
        assert_abs_diff_eq!(t.lower(0, 1), -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.upper(0, 1), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn upper_bound_arithmetic() {
        // one output model with a confident observation: mu ≈ 1, sigma ≈ 0.1 at a=0
        let grid = ParamGrid::uniform(&[(0.0, 0.0, 1)]).unwrap();
        let k = KernelSpec::squared_exponential(vec![1.0], 1.0).unwrap();
        let m = GpModel::fit(k, 0.1, &[vec![0.0]], &[1.0 + 0.01]).unwrap();
        let p = m.predict(&[0.0]).unwrap();
        let mut t = BoundsTable::init(&grid, &[0], 1).unwrap();
        t.update(&grid, &[m.clone(), m], BetaSchedule::constant(3.0).unwrap())
            .unwrap();
        assert_abs_diff_eq!(t.upper(0, 0), p.mean + 3.0 * p.std(), epsilon = 1e-12);
    }

    #[test]
    fn widths_and_sentinels() {
        let mut t = BoundsTable::init(&grid3(), &[1], 1).unwrap();
        t.set(0, 1, 0.0, 1.0);
        assert_eq!(t.width(0, 1), 1.0);
        assert_eq!(t.width(2, 1), f64::INFINITY);
        t.set(2, 1, 0.2, f64::INFINITY);
        assert_eq!(t.width(2, 1), f64::INFINITY);
    }

    #[test]
    fn ge_clamp_touches_constraint_lower_only() {
        let mut t = BoundsTable::init(&grid3(), &[1], 1).unwrap();
        t.set(0, 0, -3.0, 2.0);
        t.ge_clamp(0);
        assert_eq!(t.lower(0, 1), 0.0);
        assert_eq!(t.upper(0, 1), f64::INFINITY);
        assert_eq!(t.lower(0, 0), -3.0);
        t.set(2, 1, 0.4, 0.9);
        t.ge_clamp(2);
        assert_eq!(t.lower(2, 1), 0.4);
        assert_eq!(t.upper(2, 1), 0.9);
    }

    #[test]
    fn contradiction_collapses_to_midpoint() {
        let grid = ParamGrid::uniform(&[(0.0, 0.0, 1)]).unwrap();
        let k = KernelSpec::squared_exponential(vec![1.0], 1.0).unwrap();
        let m = GpModel::fit(k, 0.01, &[vec![0.0]], &[-1.0]).unwrap();
        let mut t = BoundsTable::init(&grid, &[0], 1).unwrap();
        t.set(0, 1, 0.5, 2.0);
        let c = t
            .update(&grid, &[m.clone(), m], BetaSchedule::constant(2.0).unwrap())
            .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].output, 1);
        assert!(t.lower(0, 1) <= t.upper(0, 1));
        assert!(t.lower(0, 1) >= 0.5);
    }

    #[test]
    fn widths_never_increase_under_more_data() {
        let grid = ParamGrid::uniform(&[(-2.0, 2.0, 21)]).unwrap();
        let k = KernelSpec::matern32(vec![0.8], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut models = vec![GpModel::prior(k.clone(), 0.05).unwrap(); 2];
        let mut t = BoundsTable::init(&grid, &[10], 1).unwrap();
        let beta = BetaSchedule::constant(2.0).unwrap();
        t.update(&grid, &models, beta).unwrap();
        for _ in 0..15 {
            let prev = t.clone();
            let x = rng.random_range(-2.0..2.0);
            for (i, m) in models.iter_mut().enumerate() {
                let y = (x * (i as f64 + 1.0)).sin() + rng.random_range(-0.05..0.05);
                m.push(&[x], y).unwrap();
            }
            t.update(&grid, &models, beta).unwrap();
            for a in 0..grid.len() {
                for i in 0..2 {
                    assert!(t.width(a, i) <= prev.width(a, i));
                    assert!(t.lower(a, i) >= prev.lower(a, i));
                    assert!(t.upper(a, i) <= prev.upper(a, i));
                }
            }
        }
    }

    #[test]
    fn width_bounded_by_fresh_interval() {
        let grid = ParamGrid::uniform(&[(-1.0, 1.0, 9)]).unwrap();
        let k = KernelSpec::squared_exponential(vec![0.5], 1.0).unwrap();
        let xs: Vec<Vec<f64>> = grid.points().iter().map(|p| p.coords().to_vec()).collect();
        let ys = vec![0.3; xs.len()];
        let m = GpModel::fit(k, 1e-3, &xs, &ys).unwrap();
        let mut t = BoundsTable::init(&grid, &[4], 1).unwrap();
        let beta = BetaSchedule::constant(2.0).unwrap();
        t.update(&grid, &[m.clone(), m.clone()], beta).unwrap();
        for a in 0..grid.len() {
            let s = m.predict(grid.point(a).coords()).unwrap().std();
            assert!(t.width(a, 0) <= 2.0 * 2.0 * s + 1e-12);
        }
    }

    #[test]
    fn beta_must_be_positive() {
        assert!(BetaSchedule::constant(0.0).is_err());
        assert!(BetaSchedule::constant(f64::NAN).is_err());
    }
}
