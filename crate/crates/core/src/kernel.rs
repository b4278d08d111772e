//! Stationary covariance functions over a lengthscale-scaled Euclidean metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    SquaredExponential,
    Matern32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscales: Vec<f64>,
    /// Prior variance.
    pub output_scale: f64,
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

impl KernelSpec {
    pub fn new(family: KernelFamily, lengthscales: Vec<f64>, output_scale: f64) -> Result<Self> {
        let spec = KernelSpec {
            family,
            lengthscales,
            output_scale,
        };
        spec.validate("kernel")?;
        Ok(spec)
    }

    pub fn squared_exponential(lengthscales: Vec<f64>, output_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, lengthscales, output_scale)
    }

    pub fn matern32(lengthscales: Vec<f64>, output_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern32, lengthscales, output_scale)
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::config(
                format!("{key}.lengthscales"),
                "at least one lengthscale required",
            ));
        }
        if self
            .lengthscales
            .iter()
            .any(|l| !(l.is_finite() && *l > 0.0))
        {
            return Err(Error::config(
                format!("{key}.lengthscales"),
                "lengthscales must be finite and positive",
            ));
        }
        if !(self.output_scale.is_finite() && self.output_scale > 0.0) {
            return Err(Error::config(
                format!("{key}.output_scale"),
                "output scale must be finite and positive",
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// Lengthscale-scaled Euclidean distance.
    pub fn scaled_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Covariance as a function of scaled distance.
    pub fn profile(&self, r: f64) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => self.output_scale * (-0.5 * r * r).exp(),
            KernelFamily::Matern32 => {
                let s = SQRT3 * r;
                self.output_scale * (1.0 + s) * (-s).exp()
            }
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_dim(a.len())?;
        self.check_dim(b.len())?;
        Ok(self.eval_unchecked(a, b))
    }

    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        self.profile(self.scaled_distance(a, b))
    }

    /// Largest scaled distance `r` with `k(r) >= kappa`.
    ///
    /// Both profiles are strictly decreasing in `r`, so the answer is unique.
    /// Requires `0 < kappa <= output_scale`.
    pub fn distance_for_covariance(&self, kappa: f64) -> Result<f64> {
        if !(kappa > 0.0 && kappa <= self.output_scale) {
            return Err(Error::config(
                "kappa",
                format!(
                    "covariance threshold {kappa} must lie in (0, {}]",
                    self.output_scale
                ),
            ));
        }
        let ratio = kappa / self.output_scale;
        if ratio >= 1.0 {
            return Ok(0.0);
        }
        match self.family {
            KernelFamily::SquaredExponential => Ok((-2.0 * ratio.ln()).sqrt()),
            KernelFamily::Matern32 => {
                // (1 + s) e^{-s} = ratio, solved for s by bisection then s = sqrt(3) r
                let f = |s: f64| (1.0 + s) * (-s).exp() - ratio;
                let (mut lo, mut hi) = (0.0, 1.0);
                while f(hi) > 0.0 {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi) / SQRT3)
            }
        }
    }
}
