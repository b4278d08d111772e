//! Finite policy-parameter spaces.

use crate::error::{Error, Result};

/// A policy parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPoint(Vec<f64>);

impl ParamPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::config("param_point", "dimension must be at least 1"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("param_point", "coordinates must be finite"));
        }
        Ok(ParamPoint(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &ParamPoint) -> f64 {
        euclidean(&self.0, &other.0)
    }
}

impl From<f64> for ParamPoint {
    fn from(x: f64) -> Self {
        ParamPoint(vec![x])
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Ordered, finite set of candidate parameters. Grid indices are positions in
/// this list and are used everywhere as parameter identifiers.
#[derive(Debug, Clone)]
pub struct ParamGrid {
    points: Vec<ParamPoint>,
    dim: usize,
    spacing: f64,
}

impl ParamGrid {
    pub fn new(points: Vec<ParamPoint>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::config("grid", "grid must contain at least one point"));
        };
        let dim = first.dim();
        for p in &points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.dim(),
                });
            }
        }
        let mut spacing = f64::INFINITY;
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let d = points[i].distance(&points[j]);
                if d == 0.0 {
                    return Err(Error::config(
                        "grid",
                        format!("points {i} and {j} coincide"),
                    ));
                }
                spacing = spacing.min(d);
            }
        }
        Ok(ParamGrid {
            points,
            dim,
            spacing,
        })
    }

    /// Cartesian product of uniformly spaced axes, last axis varying fastest.
    /// Each axis is `(lower, upper, count)`.
    pub fn uniform(axes: &[(f64, f64, usize)]) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::config("grid.axes", "at least one axis required"));
        }
        let mut values = Vec::with_capacity(axes.len());
        for (k, &(lo, hi, n)) in axes.iter().enumerate() {
            if n == 0 || !(lo.is_finite() && hi.is_finite()) || (n > 1 && hi <= lo) {
                return Err(Error::config(
                    format!("grid.axes[{k}]"),
                    "need finite lower < upper and count >= 1",
                ));
            }
            let axis: Vec<f64> = if n == 1 {
                vec![lo]
            } else {
                (0..n)
                    .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                    .collect()
            };
            values.push(axis);
        }
        let total: usize = values.iter().map(Vec::len).product();
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; values.len()];
        for _ in 0..total {
            let coords = idx.iter().zip(&values).map(|(&i, v)| v[i]).collect();
            points.push(ParamPoint(coords));
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                if idx[k] < values[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        ParamGrid::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, index: usize) -> &ParamPoint {
        &self.points[index]
    }

    pub fn points(&self) -> &[ParamPoint] {
        &self.points
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.points[i].distance(&self.points[j])
    }

    /// Smallest pairwise distance; infinite for a single-point grid.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Index of the grid point closest to `coords` (lowest index on ties).
    pub fn nearest(&self, coords: &[f64]) -> Option<usize> {
        if coords.len() != self.dim {
            return None;
        }
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = euclidean(p.coords(), coords);
            if d < best_d {
                best_d = d;
                best = Some(i);
            }
        }
        best
    }

    /// Connected components of `members` under nearest-neighbour adjacency
    /// (two points touch when they are at most one grid spacing apart).
    /// Components are sorted by their smallest index.
    pub fn components(&self, members: &[usize]) -> Vec<Vec<usize>> {
        let tol = self.spacing * (1.0 + 1e-9);
        let mut seen = vec![false; members.len()];
        let mut out = Vec::new();
        for start in 0..members.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(k) = stack.pop() {
                comp.push(members[k]);
                for j in 0..members.len() {
                    if !seen[j] && self.distance(members[k], members[j]) <= tol {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out.sort_by_key(|c| c[0]);
        out
    }
}
