//! Backup policies harvested from safe rollouts and the online boundary
//! condition that decides when a global-exploration rollout must hand over
//! to one of them.
//!
//! A stored pair `(a_s, x_s)` says: policy `a_s` was observed to be safe when
//! started from `x_s`. With the confidence lower bound `l(a_s, i)` on its
//! constraints and the state Lipschitz constant `L_x`, the pair certifies
//! every state within `min_i l(a_s, i) / L_x - Ξ` of `x_s`.

use rand::seq::index::sample_weighted;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::BoundsTable;
use crate::envs::RolloutTrace;
use crate::error::{Error, Result};
use crate::grid::euclidean;
use crate::kernel::KernelSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct BackupEntry {
    pub param_index: usize,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BackupStore {
    entries: Vec<BackupEntry>,
    state_dim: usize,
    lipschitz_x: f64,
    jump_bound: f64,
    noise_margin: f64,
}

/// Outcome of one boundary-condition evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryDecision {
    Continue,
    Trigger {
        backup_param: usize,
        /// Set by the tiered condition when the marginal set was empty.
        marginal_empty: bool,
    },
}

impl BoundaryDecision {
    pub fn is_continue(&self) -> bool {
        matches!(self, BoundaryDecision::Continue)
    }
}

/// Interior/marginal tolerances and the distances attached to them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierSpec {
    pub eta_l: f64,
    pub eta_u: f64,
    pub d_l: f64,
    pub d_u: f64,
}

impl TierSpec {
    pub fn new(eta_l: f64, eta_u: f64, d_l: f64, d_u: f64) -> Result<Self> {
        if !(eta_l < eta_u) {
            return Err(Error::config("eta_l", "eta_l must be strictly below eta_u"));
        }
        if !(0.0 <= d_l && d_l < d_u && d_u.is_finite()) {
            return Err(Error::config("d_l", "need 0 <= d_l < d_u"));
        }
        Ok(TierSpec {
            eta_l,
            eta_u,
            d_l,
            d_u,
        })
    }

    /// Derives both distances from covariance thresholds of an isotropic
    /// state-space kernel. The larger threshold yields the tighter distance,
    /// which goes to the marginal tier.
    pub fn from_covariance(
        eta_l: f64,
        eta_u: f64,
        state_kernel: &KernelSpec,
        kappa_l: f64,
        kappa_u: f64,
    ) -> Result<Self> {
        let ell = state_kernel.lengthscales[0];
        if state_kernel.lengthscales.iter().any(|&l| l != ell) {
            return Err(Error::config(
                "state_kernel.lengthscales",
                "tier distances need an isotropic state kernel",
            ));
        }
        let r_l = state_kernel.distance_for_covariance(kappa_l)? * ell;
        let r_u = state_kernel.distance_for_covariance(kappa_u)? * ell;
        TierSpec::new(eta_l, eta_u, r_l.min(r_u), r_l.max(r_u))
    }
}

/// Largest scaled distance at which the state kernel still reaches `kappa`.
pub fn distance_from_covariance(kernel: &KernelSpec, kappa: f64) -> Result<f64> {
    Ok(kernel.distance_for_covariance(kappa)? * kernel.lengthscales[0])
}

/// `max(1, horizon / 50)`, so a full episode contributes about fifty entries.
pub fn default_stride(horizon: usize) -> usize {
    (horizon / 50).max(1)
}

impl BackupStore {
    pub fn new(state_dim: usize, lipschitz_x: f64, jump_bound: f64, noise_margin: f64) -> Result<Self> {
        if !(lipschitz_x.is_finite() && lipschitz_x > 0.0) {
            return Err(Error::config("lipschitz_x", "must be finite and positive"));
        }
        if !(jump_bound.is_finite() && jump_bound > 0.0) {
            return Err(Error::config("jump_bound", "must be finite and positive"));
        }
        if !(noise_margin.is_finite() && noise_margin >= 0.0) {
            return Err(Error::config("state_noise_margin", "must be finite and non-negative"));
        }
        Ok(BackupStore {
            entries: Vec::new(),
            state_dim,
            lipschitz_x,
            jump_bound,
            noise_margin,
        })
    }

    pub fn entries(&self) -> &[BackupEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lipschitz_x(&self) -> f64 {
        self.lipschitz_x
    }

    pub fn jump_bound(&self) -> f64 {
        self.jump_bound
    }

    pub fn noise_margin(&self) -> f64 {
        self.noise_margin
    }

    pub fn push(&mut self, param_index: usize, state: Vec<f64>) -> Result<()> {
        if state.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                got: state.len(),
            });
        }
        self.entries.push(BackupEntry { param_index, state });
        Ok(())
    }

    /// Appends every `stride`-th sampled state of `trace` (starting at step 0)
    /// paired with `param_index`.
    pub fn harvest(&mut self, param_index: usize, trace: &RolloutTrace, stride: usize) -> Result<usize> {
        let stride = stride.max(1);
        let mut added = 0;
        for x in trace.states.iter().step_by(stride) {
            self.push(param_index, x.clone())?;
            added += 1;
        }
        Ok(added)
    }

    /// Exact boundary condition. Continues when some entry certifies every
    /// constraint at `x`; otherwise picks the entry with the largest margin
    /// `min_i l(a_s, i) - L_x ‖x - x_s‖` (lowest entry index on ties).
    pub fn boundary_check(&self, table: &BoundsTable, x: &[f64]) -> BoundaryDecision {
        let slack = self.jump_bound + self.noise_margin;
        let mut best: Option<(usize, f64)> = None;
        for e in &self.entries {
            let l = table.min_constraint_lower(e.param_index);
            let dist = euclidean(x, &e.state);
            if l >= self.lipschitz_x * (dist + slack) {
                return BoundaryDecision::Continue;
            }
            let margin = l - self.lipschitz_x * dist;
            if best.is_none_or(|(_, m)| margin > m) {
                best = Some((e.param_index, margin));
            }
        }
        match best {
            Some((backup_param, _)) => BoundaryDecision::Trigger {
                backup_param,
                marginal_empty: false,
            },
            // unreachable in the engine: global exploration needs a non-empty store
            None => BoundaryDecision::Trigger {
                backup_param: usize::MAX,
                marginal_empty: false,
            },
        }
    }

    /// Membership in the certified state set: some entry has
    /// `‖x - x_s‖ ≤ min_i l(a_s, i) / L_x - Ξ`.
    pub fn safe_state_contains(&self, table: &BoundsTable, x: &[f64]) -> bool {
        let slack = self.jump_bound + self.noise_margin;
        self.entries.iter().any(|e| {
            let radius = table.min_constraint_lower(e.param_index) / self.lipschitz_x - slack;
            euclidean(x, &e.state) <= radius
        })
    }

    /// Tiered condition. Continues when an interior entry lies within `d_u`
    /// and an interior or marginal entry lies within `d_l`. On a trigger the
    /// backup is the nearest interior-or-marginal entry, falling back to the
    /// exact rule's choice when both tiers are empty.
    pub fn boundary_check_tiered(&self, table: &BoundsTable, x: &[f64], tiers: &TierSpec) -> BoundaryDecision {
        let mut interior_within_du = false;
        let mut tiered_within_dl = false;
        let mut marginal_seen = false;
        let mut nearest: Option<(usize, f64)> = None;
        for e in &self.entries {
            let l = table.min_constraint_lower(e.param_index);
            let interior = l >= tiers.eta_u;
            let marginal = !interior && l >= tiers.eta_l;
            if !(interior || marginal) {
                continue;
            }
            marginal_seen |= marginal;
            let dist = euclidean(x, &e.state);
            if interior && dist <= tiers.d_u {
                interior_within_du = true;
            }
            if dist <= tiers.d_l {
                tiered_within_dl = true;
            }
            if nearest.is_none_or(|(_, d)| dist < d) {
                nearest = Some((e.param_index, dist));
            }
        }
        if interior_within_du && tiered_within_dl {
            return BoundaryDecision::Continue;
        }
        match nearest {
            Some((backup_param, _)) => BoundaryDecision::Trigger {
                backup_param,
                marginal_empty: !marginal_seen,
            },
            None => match self.boundary_check(table, x) {
                BoundaryDecision::Trigger { backup_param, .. } => BoundaryDecision::Trigger {
                    backup_param,
                    marginal_empty: true,
                },
                // without interior entries the tiered rule always triggers
                BoundaryDecision::Continue => {
                    let mut best: Option<(usize, f64)> = None;
                    for e in &self.entries {
                        let m = table.min_constraint_lower(e.param_index)
                            - self.lipschitz_x * euclidean(x, &e.state);
                        if best.is_none_or(|(_, bm)| m > bm) {
                            best = Some((e.param_index, m));
                        }
                    }
                    BoundaryDecision::Trigger {
                        backup_param: best.map_or(usize::MAX, |b| b.0),
                        marginal_empty: true,
                    }
                }
            },
        }
    }

    /// Once the store exceeds `n_max` entries, keeps `m` of them sampled
    /// without replacement with weights `exp(-(min_i l)²)`.
    pub fn subset_select<R: Rng + ?Sized>(&mut self, table: &BoundsTable, n_max: usize, m: usize, rng: &mut R) {
        if self.entries.len() <= n_max || m >= self.entries.len() {
            return;
        }
        let weights: Vec<f64> = self
            .entries
            .iter()
            .map(|e| {
                let l = table.min_constraint_lower(e.param_index);
                let w = (-(l * l)).exp();
                // keep every entry drawable; -inf bounds would otherwise weigh zero
                if w.is_finite() && w > f64::MIN_POSITIVE {
                    w
                } else {
                    f64::MIN_POSITIVE
                }
            })
            .collect();
        let picked = match sample_weighted(rng, weights.len(), |i| weights[i], m) {
            Ok(idx) => {
                let mut v = idx.into_vec();
                v.sort_unstable();
                v
            }
            Err(_) => (0..m).collect(),
        };
        self.entries = picked.into_iter().map(|i| self.entries[i].clone()).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Table over `n` params with one constraint whose lower bounds are given.
    fn table_with(lowers: &[f64]) -> BoundsTable {
        let n = lowers.len();
        let mut lower = vec![f64::NEG_INFINITY; 2 * n];
        for (a, &l) in lowers.iter().enumerate() {
            lower[2 * a + 1] = l;
        }
        BoundsTable::from_raw(n, 2, lower, vec![f64::INFINITY; 2 * n]).unwrap()
    }

    fn trace(states: Vec<Vec<f64>>) -> RolloutTrace {
        let n = states.len();
        RolloutTrace {
            states,
            rewards: vec![0.0; n],
            constraint_values: vec![vec![1.0]; n],
            switched_at: None,
            applied_params: vec![0; n],
        }
    }

    #[test]
    fn harvest_strides() {
        let mut s = BackupStore::new(1, 1.0, 0.1, 0.0).unwrap();
        let t = trace((0..10).map(|k| vec![k as f64]).collect());
        assert_eq!(s.harvest(0, &t, 1).unwrap(), 10);
        assert_eq!(s.len(), 10);
        let mut s2 = BackupStore::new(1, 1.0, 0.1, 0.0).unwrap();
        assert_eq!(s2.harvest(3, &t, 5).unwrap(), 2);
        assert_eq!(s2.entries()[1].state, vec![5.0]);
        // append-only
        let before = s.entries().to_vec();
        s.harvest(1, &t, 5).unwrap();
        assert_eq!(&s.entries()[..10], &before[..]);
        assert_eq!(s.len(), 12);
    }

    #[test]
    fn harvest_rejects_wrong_dimension() {
        let mut s = BackupStore::new(2, 1.0, 0.1, 0.0).unwrap();
        assert!(s.harvest(0, &trace(vec![vec![0.0]]), 1).is_err());
    }

    #[test]
    fn exact_condition_examples() {
        let t = table_with(&[1.0]);
        let mut s = BackupStore::new(1, 1.0, 0.1, 0.0).unwrap();
        s.push(0, vec![0.0]).unwrap();
        assert_eq!(s.boundary_check(&t, &[0.5]), BoundaryDecision::Continue);
        assert_eq!(
            s.boundary_check(&t, &[1.0]),
            BoundaryDecision::Trigger {
                backup_param: 0,
                marginal_empty: false
            }
        );
    }

    #[test]
    fn backup_choice_maximizes_margin() {
        // margins at x=2: entry0: 1.2 - 1.0 = 0.2, entry1: 1.5 - 1.0 = 0.5
        let t = table_with(&[1.2, 1.5]);
        let mut s = BackupStore::new(1, 1.0, 0.6, 0.0).unwrap();
        s.push(0, vec![1.0]).unwrap();
        s.push(1, vec![3.0]).unwrap();
        assert_eq!(
            s.boundary_check(&t, &[2.0]),
            BoundaryDecision::Trigger {
                backup_param: 1,
                marginal_empty: false
            }
        );
    }

    #[test]
    fn noise_margin_tightens() {
        let t = table_with(&[1.0]);
        let mut s = BackupStore::new(1, 1.0, 0.1, 0.3).unwrap();
        s.push(0, vec![0.0]).unwrap();
        assert!(s.boundary_check(&t, &[0.5]).is_continue());
        assert!(!s.boundary_check(&t, &[0.7]).is_continue());
    }

    #[test]
    fn safe_state_boundary_cases() {
        let mut s = BackupStore::new(1, 2.0, 0.25, 0.0).unwrap();
        s.push(0, vec![0.3]).unwrap();
        // min l = L_x * Xi -> radius 0
        let t = table_with(&[0.5]);
        assert!(s.safe_state_contains(&t, &[0.3]));
        assert!(!s.safe_state_contains(&t, &[0.31]));
        let t = table_with(&[0.4]);
        assert!(!s.safe_state_contains(&t, &[0.3]));
    }

    #[test]
    fn tiered_examples() {
        // param 0 interior (l=1.0), param 1 marginal (l=0.5)
        let t = table_with(&[1.0, 0.5]);
        let tiers = TierSpec::new(0.4, 0.8, 0.2, 0.5).unwrap();
        let mut s = BackupStore::new(1, 1.0, 0.1, 0.0).unwrap();
        s.push(0, vec![0.0]).unwrap();
        s.push(1, vec![0.5]).unwrap();
        // within d_u of interior (0.4) and d_l of marginal (0.1)
        assert!(s.boundary_check_tiered(&t, &[0.4], &tiers).is_continue());
        // nearest entry is the marginal one
        match s.boundary_check_tiered(&t, &[0.9], &tiers) {
            BoundaryDecision::Trigger { backup_param, .. } => assert_eq!(backup_param, 1),
            d => panic!("expected trigger, got {d:?}"),
        }
    }

    #[test]
    fn tiered_without_interior_always_triggers() {
        let t = table_with(&[0.5]);
        let tiers = TierSpec::new(0.4, 0.8, 0.2, 0.5).unwrap();
        let mut s = BackupStore::new(1, 1.0, 0.1, 0.0).unwrap();
        s.push(0, vec![0.0]).unwrap();
        assert!(!s.boundary_check_tiered(&t, &[0.0], &tiers).is_continue());
    }

    #[test]
    fn tiered_flags_empty_marginal_set() {
        let t = table_with(&[1.0]);
        let tiers = TierSpec::new(0.4, 0.8, 0.2, 0.5).unwrap();
        let mut s = BackupStore::new(1, 1.0, 0.1, 0.0).unwrap();
        s.push(0, vec![0.0]).unwrap();
        // interior within d_u but nothing within d_l
        assert_eq!(
            s.boundary_check_tiered(&t, &[0.3], &tiers),
            BoundaryDecision::Trigger {
                backup_param: 0,
                marginal_empty: true
            }
        );
        // an interior point within d_l satisfies both clauses
        assert!(s.boundary_check_tiered(&t, &[0.1], &tiers).is_continue());
    }

    #[test]
    fn tier_ordering_validated() {
        assert!(TierSpec::new(0.9, 0.6, 0.1, 0.2).is_err());
        assert!(TierSpec::new(0.4, 0.6, 0.3, 0.2).is_err());
    }

    #[test]
    fn tiers_from_covariance() {
        let k = KernelSpec::squared_exponential(vec![1.0], 1.0).unwrap();
        let t = TierSpec::from_covariance(0.4, 0.6, &k, 0.90, 0.94).unwrap();
        assert!((t.d_l - 0.351_782_3).abs() < 1e-6);
        assert!((t.d_u - 0.459_043_6).abs() < 1e-6);
        let k2 = KernelSpec::squared_exponential(vec![1.0, 2.0], 1.0).unwrap();
        assert!(TierSpec::from_covariance(0.4, 0.6, &k2, 0.90, 0.94).is_err());
    }

    #[test]
    fn covariance_distance_examples() {
        let k = KernelSpec::squared_exponential(vec![1.0], 1.0).unwrap();
        assert!((distance_from_covariance(&k, 0.94).unwrap() - 0.3518).abs() < 1e-4);
        assert_eq!(distance_from_covariance(&k, 1.0).unwrap(), 0.0);
        assert!((distance_from_covariance(&k, 0.90).unwrap() - 0.4590).abs() < 1e-4);
        assert!(distance_from_covariance(&k, 1.5).is_err());
    }

    #[test]
    fn subset_selection_threshold_and_size() {
        let t = table_with(&[0.5, 0.5]);
        let mut s = BackupStore::new(1, 1.0, 0.1, 0.0).unwrap();
        for k in 0..10 {
            s.push(k % 2, vec![k as f64]).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        s.subset_select(&t, 10, 4, &mut rng);
        assert_eq!(s.len(), 10);
        s.push(0, vec![10.0]).unwrap();
        s.subset_select(&t, 10, 4, &mut rng);
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn subset_selection_is_seeded() {
        let t = table_with(&[0.1, 2.0]);
        let build = || {
            let mut s = BackupStore::new(1, 1.0, 0.1, 0.0).unwrap();
            for k in 0..40 {
                s.push(k % 2, vec![k as f64]).unwrap();
            }
            s
        };
        let mut a = build();
        let mut b = build();
        a.subset_select(&t, 20, 10, &mut ChaCha8Rng::seed_from_u64(9));
        b.subset_select(&t, 20, 10, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.entries(), b.entries());
    }

    #[test]
    fn subset_selection_prefers_small_lower_bounds() {
        // weights exp(-0.01) vs exp(-9): the low-margin entries dominate
        let t = table_with(&[0.1, 3.0]);
        let mut s = BackupStore::new(1, 1.0, 0.1, 0.0).unwrap();
        for k in 0..200 {
            s.push(k % 2, vec![k as f64]).unwrap();
        }
        s.subset_select(&t, 100, 50, &mut ChaCha8Rng::seed_from_u64(1));
        let low = s.entries().iter().filter(|e| e.param_index == 0).count();
        assert!(low >= 45, "only {low} low-margin entries kept");
    }
}
