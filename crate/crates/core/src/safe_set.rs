//! Safe set, expanders and maximizers over the parameter grid, the local
//! acquisition rule, its convergence test, and the reachability closure used
//! as a ground-truth oracle.

use std::collections::BTreeSet;

use crate::confidence::BoundsTable;
use crate::grid::ParamGrid;

/// Grid indices certified safe. Membership only grows.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeSet {
    members: BTreeSet<usize>,
    lipschitz_a: f64,
}

impl SafeSet {
    pub fn new(seed: &[usize], lipschitz_a: f64) -> Self {
        SafeSet {
            members: seed.iter().copied().collect(),
            lipschitz_a,
        }
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members.contains(&index)
    }

    pub fn insert(&mut self, index: usize) -> bool {
        self.members.insert(index)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.members.iter().copied().collect()
    }

    pub fn lipschitz_a(&self) -> f64 {
        self.lipschitz_a
    }

    pub fn is_superset_of(&self, other: &SafeSet) -> bool {
        self.members.is_superset(&other.members)
    }

    /// One application of the Lipschitz expansion rule against the current
    /// members: `a` joins when, for every constraint `i`, some member `a'`
    /// has `l(a', i) - L_a ‖a - a'‖ ≥ 0`.
    pub fn expand(&self, table: &BoundsTable, grid: &ParamGrid) -> SafeSet {
        let prev: Vec<usize> = self.to_vec();
        let q = table.n_constraints();
        let mut next = self.clone();
        for a in 0..grid.len() {
            if self.contains(a) {
                continue;
            }
            let certified = (1..=q).all(|i| {
                prev.iter().any(|&s| {
                    table.lower(s, i) - self.lipschitz_a * grid.distance(a, s) >= 0.0
                })
            });
            if certified {
                next.members.insert(a);
            }
        }
        next
    }
}

/// Expanders `G` and maximizers `M`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LseSets {
    pub expanders: BTreeSet<usize>,
    pub maximizers: BTreeSet<usize>,
}

impl LseSets {
    pub fn compute(safe: &SafeSet, table: &BoundsTable, grid: &ParamGrid) -> Self {
        LseSets {
            expanders: compute_expanders(safe, table, grid),
            maximizers: compute_maximizers(safe, table),
        }
    }

    pub fn union(&self) -> BTreeSet<usize> {
        self.expanders.union(&self.maximizers).copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.expanders.is_empty() && self.maximizers.is_empty()
    }
}

/// Members whose optimistic bound on some constraint could certify at least
/// one point outside the safe set.
pub fn compute_expanders(safe: &SafeSet, table: &BoundsTable, grid: &ParamGrid) -> BTreeSet<usize> {
    let outside: Vec<usize> = (0..grid.len()).filter(|&a| !safe.contains(a)).collect();
    if outside.is_empty() {
        return BTreeSet::new();
    }
    let q = table.n_constraints();
    safe.members()
        .filter(|&a| {
            outside.iter().any(|&o| {
                let reach = safe.lipschitz_a * grid.distance(a, o);
                (1..=q).any(|i| table.upper(a, i) - reach >= 0.0)
            })
        })
        .collect()
}

/// Members whose optimistic objective is at least the best pessimistic one.
pub fn compute_maximizers(safe: &SafeSet, table: &BoundsTable) -> BTreeSet<usize> {
    let best = safe
        .members()
        .map(|a| table.lower(a, 0))
        .fold(f64::NEG_INFINITY, f64::max);
    safe.members().filter(|&a| table.upper(a, 0) >= best).collect()
}

/// Most uncertain member of `G ∪ M` (width maximized over all outputs), lowest
/// index on ties. `None` when the union is empty.
pub fn lse_acquire(sets: &LseSets, table: &BoundsTable) -> Option<usize> {
    argmax_lowest(sets.union().into_iter(), |a| table.max_width(a))
}

/// True when every width over `G ∪ M` is below `epsilon` and the safe set
/// did not change. An empty union counts as converged.
pub fn lse_converged(
    sets: &LseSets,
    table: &BoundsTable,
    prev: &SafeSet,
    now: &SafeSet,
    epsilon: f64,
) -> bool {
    let widest = sets
        .union()
        .into_iter()
        .map(|a| table.max_width(a))
        .fold(f64::NEG_INFINITY, f64::max);
    widest < epsilon && prev.members == now.members
}

pub(crate) fn argmax_lowest<I, F>(candidates: I, score: F) -> Option<usize>
where
    I: Iterator<Item = usize>,
    F: Fn(usize) -> f64,
{
    let mut best: Option<(usize, f64)> = None;
    for a in candidates {
        let s = score(a);
        match best {
            Some((b, bs)) if s > bs || (s == bs && a < b) => best = Some((a, s)),
            None => best = Some((a, s)),
            _ => {}
        }
    }
    best.map(|(a, _)| a)
}

/// Fixpoint of the ε-reachability operator given true constraint values:
/// `a` is reachable when, for every constraint `i`, some reached `a'`
/// satisfies `g_i(a') - ε - L_a ‖a - a'‖ ≥ 0`.
///
/// `truth[a][i]` holds `g_{i+1}(a)`.
pub fn reachability_closure(
    grid: &ParamGrid,
    truth: &[Vec<f64>],
    seed: &[usize],
    epsilon: f64,
    lipschitz_a: f64,
) -> BTreeSet<usize> {
    let mut reached: BTreeSet<usize> = seed.iter().copied().collect();
    let q = truth.first().map_or(0, Vec::len);
    loop {
        let current: Vec<usize> = reached.iter().copied().collect();
        let mut grew = false;
        for a in 0..grid.len() {
            if reached.contains(&a) {
                continue;
            }
            let ok = (0..q).all(|i| {
                current.iter().any(|&s| {
                    truth[s][i] - epsilon - lipschitz_a * grid.distance(a, s) >= 0.0
                })
            });
            if ok {
                reached.insert(a);
                grew = true;
            }
        }
        if !grew {
            return reached;
        }
    }
}
