//! Exact Gaussian-process regression with a zero prior mean.
//!
//! The model keeps the lower Cholesky factor `L` of `K + σ²I` and the weight
//! vector `α = (K + σ²I)⁻¹ y`. Adding an observation extends `L` by one row
//! instead of refactorizing, so the optimizer can grow its datasets one
//! experiment at a time in `O(n²)`.

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// Relative diagonal jitter added before factorization.
const JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelSpec,
    noise_std: f64,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    /// Row `i` holds `L[i][0..=i]`.
    factor: Vec<Vec<f64>>,
    alpha: Vec<f64>,
}

impl GpModel {
    /// Model without data; predictions return the prior.
    pub fn prior(kernel: KernelSpec, noise_std: f64) -> Result<Self> {
        kernel.validate("kernel")?;
        if !(noise_std.is_finite() && noise_std >= 0.0) {
            return Err(Error::config("noise_std", "must be finite and non-negative"));
        }
        Ok(GpModel {
            kernel,
            noise_std,
            inputs: Vec::new(),
            targets: Vec::new(),
            factor: Vec::new(),
            alpha: Vec::new(),
        })
    }

    pub fn fit(
        kernel: KernelSpec,
        noise_std: f64,
        inputs: &[Vec<f64>],
        targets: &[f64],
    ) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        let mut model = GpModel::prior(kernel, noise_std)?;
        for x in inputs {
            model.kernel.check_dim(x.len())?;
        }
        model.inputs = inputs.to_vec();
        model.targets = targets.to_vec();
        model.factor = model.cholesky()?;
        model.alpha = model.solve_weights();
        Ok(model)
    }

    /// Returns a new model that also contains `(input, target)`.
    pub fn add(&self, input: &[f64], target: f64) -> Result<Self> {
        let mut next = self.clone();
        next.push(input, target)?;
        Ok(next)
    }

    /// In-place variant of [`GpModel::add`].
    pub fn push(&mut self, input: &[f64], target: f64) -> Result<()> {
        self.kernel.check_dim(input.len())?;
        let k: Vec<f64> = self
            .inputs
            .iter()
            .map(|x| self.kernel.eval_unchecked(x, input))
            .collect();
        let c = forward_substitute(&self.factor, &k);
        let pivot = self.diagonal_term() - c.iter().map(|v| v * v).sum::<f64>();
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite {
                pivot: self.inputs.len(),
                value: pivot,
            });
        }
        let mut row = c;
        row.push(pivot.sqrt());
        self.factor.push(row);
        self.inputs.push(input.to_vec());
        self.targets.push(target);
        self.alpha = self.solve_weights();
        Ok(())
    }

    pub fn predict(&self, a: &[f64]) -> Result<Posterior> {
        self.kernel.check_dim(a.len())?;
        Ok(self.predict_unchecked(a))
    }

    pub(crate) fn predict_unchecked(&self, a: &[f64]) -> Posterior {
        let prior = self.kernel.output_scale;
        if self.inputs.is_empty() {
            return Posterior {
                mean: 0.0,
                variance: prior,
            };
        }
        let k: Vec<f64> = self
            .inputs
            .iter()
            .map(|x| self.kernel.eval_unchecked(x, a))
            .collect();
        let mean = k.iter().zip(&self.alpha).map(|(x, y)| x * y).sum();
        let v = forward_substitute(&self.factor, &k);
        let variance = (prior - v.iter().map(|x| x * x).sum::<f64>()).clamp(0.0, prior);
        Posterior { mean, variance }
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Dense copy of the lower Cholesky factor, row-major.
    pub fn factor(&self) -> Vec<Vec<f64>> {
        let n = self.factor.len();
        self.factor
            .iter()
            .map(|row| {
                let mut full = row.clone();
                full.resize(n, 0.0);
                full
            })
            .collect()
    }

    /// `K + (σ² + jitter) I` over the training inputs.
    pub fn system_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.inputs.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.kernel.eval_unchecked(&self.inputs[i], &self.inputs[j]);
                m[i][j] = v;
                m[j][i] = v;
            }
            m[i][i] += self.diagonal_term() - self.kernel.output_scale;
        }
        m
    }

    fn diagonal_term(&self) -> f64 {
        let kappa = self.kernel.output_scale;
        kappa + self.noise_std * self.noise_std + JITTER * kappa
    }

    fn cholesky(&self) -> Result<Vec<Vec<f64>>> {
        let a = self.system_matrix();
        let n = a.len();
        let mut l: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = vec![0.0; i + 1];
            for j in 0..=i {
                if i == j {
                    let s: f64 = row[..j].iter().map(|v| v * v).sum();
                    let pivot = a[i][i] - s;
                    if !(pivot > 0.0) {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: pivot });
                    }
                    row[j] = pivot.sqrt();
                } else {
                    let s: f64 = (0..j).map(|k| row[k] * l[j][k]).sum();
                    row[j] = (a[i][j] - s) / l[j][j];
                }
            }
            l.push(row);
        }
        Ok(l)
    }

    fn solve_weights(&self) -> Vec<f64> {
        let z = forward_substitute(&self.factor, &self.targets);
        backward_substitute(&self.factor, &z)
    }
}

/// Solves `L z = b`.
fn forward_substitute(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(b.len());
    for (i, row) in l.iter().enumerate() {
        let s: f64 = row[..i].iter().zip(&z).map(|(a, b)| a * b).sum();
        z.push((b[i] - s) / row[i]);
    }
    z
}

/// Solves `Lᵀ x = z`.
fn backward_substitute(l: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (z[i] - s) / l[i][i];
    }
    x
}
