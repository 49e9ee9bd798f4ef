//! Closed-form estimates of human cleaning time.
//!
//! All costs are seconds. Sizes are real-valued because the split recursion
//! works on expected cluster sizes; the only roundings are the explicit
//! floors on split depth and iteration counts. Negative intermediate counts
//! (which appear on very short lists) are floored at zero term by term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Partition;

/// Lower clamp for purity, keeping logarithms finite.
pub const MIN_PURITY: f64 = 1e-6;

/// Per-user operation costs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UserParams {
    /// focus on an object
    pub rho_f: f64,
    /// select an object
    pub rho_s: f64,
    /// match two values, or a value against an entity held in memory
    pub rho_m: f64,
    /// memorize a value
    pub rho_z: f64,
    /// recall a value
    pub rho_r: f64,
    /// isPure slope, per examined value
    pub gamma: f64,
    /// isPure intercept
    pub gamma0: f64,
    /// findDom per value when the cluster fits in short-term memory
    pub eta1: f64,
    /// findDom quadratic coefficient for larger clusters
    pub eta2: f64,
    /// findDom intercept for larger clusters
    pub eta3: f64,
    pub stm_capacity: usize,
    /// Column values shown per global-merge grid.
    pub columns: usize,
    /// Fraction of rows examined per multi-user merge scan.
    pub mu: f64,
}

impl Default for UserParams {
    fn default() -> Self {
        let eta1 = 0.3;
        Self {
            rho_f: 0.5,
            rho_s: 0.5,
            rho_m: 1.0,
            rho_z: 0.4,
            rho_r: 0.4,
            gamma: 0.2,
            gamma0: 0.5,
            eta1,
            eta2: eta1 / 700.0,
            eta3: 0.99 * eta1 * 7.0,
            stm_capacity: 7,
            columns: 3,
            mu: 1.0,
        }
    }
}

impl UserParams {
    pub fn validate(&self) -> Result<()> {
        let times = [
            ("rho_f", self.rho_f),
            ("rho_s", self.rho_s),
            ("rho_m", self.rho_m),
            ("rho_z", self.rho_z),
            ("rho_r", self.rho_r),
            ("gamma", self.gamma),
            ("gamma0", self.gamma0),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("eta3", self.eta3),
        ];
        for (name, t) in times {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} = {t} must be a finite time >= 0")));
            }
        }
        if self.stm_capacity == 0 || self.columns == 0 {
            return Err(Error::InvalidParameter("stm_capacity and columns must be >= 1".into()));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::InvalidParameter(format!("mu = {} outside (0, 1]", self.mu)));
        }
        Ok(())
    }

    /// focus + select, the cost of pressing any button.
    pub fn click(&self) -> f64 {
        self.rho_f + self.rho_s
    }

    /// isPure on a cluster of size `psi` and purity `alpha`.
    pub fn is_pure(&self, psi: f64, alpha: f64) -> f64 {
        self.gamma * psi * alpha + self.gamma0
    }

    /// isPure when the user examined `scanned` values before answering.
    pub fn is_pure_scanned(&self, scanned: f64) -> f64 {
        self.gamma * scanned + self.gamma0
    }

    /// findDom on a cluster of size `psi`.
    pub fn find_dom(&self, psi: f64) -> f64 {
        if psi <= self.stm_capacity as f64 {
            self.eta1 * psi
        } else {
            self.eta2 * psi * psi + self.eta3
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalParams {
    /// Fraction of the list surviving local merging.
    pub tau: f64,
    /// Fraction of rows matching each global-merge column per iteration.
    pub xi: f64,
    pub mixed_threshold: f64,
    pub majority_threshold: f64,
}

impl Default for GlobalParams {
    fn default() -> Self {
        Self {
            tau: 0.98,
            xi: 0.1,
            mixed_threshold: 0.1,
            majority_threshold: 0.5,
        }
    }
}

impl GlobalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau", self.tau), ("xi", self.xi)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside (0, 1]")));
            }
        }
        if self.mixed_threshold.partial_cmp(&self.majority_threshold) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidParameter(
                "mixed threshold must be below majority threshold".into(),
            ));
        }
        Ok(())
    }

    /// Global-merge iterations, `floor(1 / (3 xi))`.
    pub fn global_iterations(&self) -> usize {
        (1.0 / (3.0 * self.xi) + 1e-9).floor() as usize
    }
}

/// Expected purity of HAC(λ) clusters, `a · λ^b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurityModel {
    pub a: f64,
    pub b: f64,
}

impl Default for PurityModel {
    fn default() -> Self {
        Self { a: 1.0, b: 0.0 }
    }
}

impl PurityModel {
    pub fn purity(&self, cap: usize) -> f64 {
        (self.a * (cap.max(1) as f64).powf(self.b)).clamp(MIN_PURITY, 1.0)
    }
}

/// Number of splits needed for a cluster of size `psi` and purity `alpha`.
pub fn split_depth(psi: usize, alpha: f64) -> usize {
    if psi <= 1 || alpha >= 1.0 - MIN_PURITY {
        return 0;
    }
    let alpha = alpha.max(MIN_PURITY);
    let depth = (-(psi as f64).ln() / (1.0 - alpha).ln() + 1e-9).floor();
    (depth.max(0.0) as usize).min(psi - 1)
}

fn check_purity(alpha: f64) -> Result<f64> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(alpha.max(MIN_PURITY))
    } else {
        Err(Error::InvalidPurity(alpha))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRegime {
    /// purity at or above the majority threshold
    Majority,
    /// purity between the mixed and majority thresholds
    Minority,
    /// purity below the mixed threshold; the cluster is merged instead
    Mixed,
}

pub fn regime(alpha: f64, g: &GlobalParams) -> SplitRegime {
    if alpha >= g.majority_threshold {
        SplitRegime::Majority
    } else if alpha >= g.mixed_threshold {
        SplitRegime::Minority
    } else {
        SplitRegime::Mixed
    }
}

/// Expected time to split a cluster of size `psi` and purity `alpha`.
pub fn cost_split_cluster(psi: usize, alpha: f64, u: &UserParams, g: &GlobalParams) -> Result<f64> {
    let alpha = check_purity(alpha)?;
    if psi <= 1 {
        return Ok(0.0);
    }
    let beta = split_depth(psi, alpha);
    let psi_f = psi as f64;
    let click = u.click();
    let cost = match regime(alpha, g) {
        r @ (SplitRegime::Majority | SplitRegime::Minority) => {
            let marked = if r == SplitRegime::Majority { 1.0 - alpha } else { alpha };
            (1..=beta)
                .map(|j| {
                    let s = (1.0 - alpha).powi(j as i32 - 1) * psi_f;
                    u.is_pure(s, alpha)
                        + click
                        + u.find_dom(s)
                        + click
                        + s * (u.rho_f + u.rho_m + marked * u.rho_s)
                        + click
                })
                .sum()
        }
        SplitRegime::Mixed => {
            let tau_psi = g.tau * psi_f;
            let head = u.is_pure(psi_f, alpha) + click + u.find_dom(psi_f) + click + cost_local_merge(psi_f, u, g);
            let tail: f64 = (1..=beta)
                .map(|j| {
                    let base = 3 * (j - 1);
                    let rows = 3.0 * (1.0 - alpha).powi(base as i32) * tau_psi - 3.0;
                    let checks: f64 = (1..=3)
                        .map(|k| alpha * (1.0 - alpha).powi((base + k) as i32) * tau_psi)
                        .sum::<f64>()
                        - 1.0;
                    3.0 * u.rho_z + rows.max(0.0) * u.rho_r + checks.max(0.0) * click + click
                })
                .sum();
            head + tail
        }
    };
    Ok(cost)
}

/// Expected time of local merging over a list of `r` values.
pub fn cost_local_merge(r: f64, u: &UserParams, g: &GlobalParams) -> f64 {
    let r = r.max(0.0);
    r * u.rho_z + r * (1.0 - g.tau) * (3.0 * u.rho_f + 2.0 * u.rho_s) + u.click()
}

/// Expected time of global merging over a list of `r_prime` values.
pub fn cost_global_merge(r_prime: f64, u: &UserParams, g: &GlobalParams) -> f64 {
    let r = r_prime.max(0.0);
    (1..=g.global_iterations())
        .map(|j| {
            let rows = r - 3.0 * (j as f64 - 1.0) * g.xi * r - 3.0;
            let checks = g.xi * r - 1.0;
            3.0 * u.rho_z + rows.max(0.0) * u.rho_r + 3.0 * checks.max(0.0) * u.click() + u.click()
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEstimate {
    pub cap: usize,
    pub purity: f64,
    pub estimated_seconds: f64,
    pub split_seconds: f64,
    pub local_merge_seconds: f64,
    pub global_merge_seconds: f64,
    /// Expected number of pure clusters after splitting, r_λ.
    pub split_output_count: f64,
    /// Expected list length after local merging, r′_λ = τ·r_λ.
    pub local_merge_output_count: f64,
    pub cluster_count: usize,
    pub max_cluster_size: usize,
    pub per_cluster_costs: Vec<f64>,
}

/// Estimated cost of a plan from its cluster sizes and purity.
pub fn cost_plan_sizes(sizes: &[usize], alpha: f64, cap: usize, u: &UserParams, g: &GlobalParams) -> Result<PlanEstimate> {
    let alpha = check_purity(alpha)?;
    let mut memo: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();
    let mut per_cluster_costs = Vec::with_capacity(sizes.len());
    let mut r = 0.0;
    for &psi in sizes {
        let c = match memo.get(&psi) {
            Some(&c) => c,
            None => {
                let c = cost_split_cluster(psi, alpha, u, g)?;
                memo.insert(psi, c);
                c
            }
        };
        per_cluster_costs.push(c);
        r += (split_depth(psi, alpha) + 1) as f64;
    }
    let r_prime = g.tau * r;
    let split_seconds: f64 = per_cluster_costs.iter().sum();
    let local_merge_seconds = cost_local_merge(r, u, g);
    let global_merge_seconds = cost_global_merge(r_prime, u, g);
    Ok(PlanEstimate {
        cap,
        purity: alpha,
        estimated_seconds: split_seconds + local_merge_seconds + global_merge_seconds,
        split_seconds,
        local_merge_seconds,
        global_merge_seconds,
        split_output_count: r,
        local_merge_output_count: r_prime,
        cluster_count: sizes.len(),
        max_cluster_size: sizes.iter().copied().max().unwrap_or(0),
        per_cluster_costs,
    })
}

/// Estimated cost of the plan that cleans `clusters`, the output of HAC(`cap`).
pub fn cost_plan(
    clusters: &Partition,
    model: &PurityModel,
    cap: usize,
    u: &UserParams,
    g: &GlobalParams,
) -> Result<PlanEstimate> {
    cost_plan_sizes(&clusters.sizes(), model.purity(cap), cap, u, g)
}

/// Estimated multi-user merge time for `k` representative lists, one user each.
///
/// Lists are processed longest first. Round `t` chunks list `D_t` over the
/// users; each user runs `floor(|D_t|(1 − R_{t−1}ξ) / 3k) + 1` grouped scans.
/// `R_t = R_{t−1} + 3(I_t + 1)` counts the entities settled so far, and every
/// remaining-fraction factor is floored at zero.
pub fn cost_multi_user_merge(list_sizes: &[f64], users: &[UserParams], g: &GlobalParams, mu: f64) -> f64 {
    let k = list_sizes.len().min(users.len());
    if k < 2 {
        return 0.0;
    }
    let mut lists: Vec<f64> = list_sizes[..k].to_vec();
    lists.sort_by(|a, b| b.total_cmp(a));
    let kf = k as f64;
    let mut settled = 0.0;
    let mut total = 0.0;
    for t in 1..k {
        let d_t = lists[t - 1];
        let scans = ((d_t * (1.0 - settled * g.xi)).max(0.0) / (3.0 * kf) + 1e-9).floor() as usize;
        let round = users[..k]
            .iter()
            .map(|u| {
                (0..=scans)
                    .map(|i| {
                        let rows: f64 = lists[t - 1..]
                            .iter()
                            .map(|&d_j| {
                                let left = (1.0 - (settled + 3.0 * i as f64) * g.xi).max(0.0);
                                (3.0 * g.xi + 1.0) * u.click() + mu * d_j * left * u.rho_r
                            })
                            .sum();
                        3.0 * u.rho_z + rows
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        total += round;
        settled += 3.0 * (scans as f64 + 1.0);
    }
    total
}

/// Multi-user total: the slowest user's own Split+Merge plus the merge rounds.
pub fn cost_cwinston(per_user_costs: &[f64], multi_user_merge: f64) -> f64 {
    per_user_costs.iter().copied().fold(0.0, f64::max) + multi_user_merge
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-9;

    #[test]
    fn purity_model() {
        assert_eq!(PurityModel { a: 1.0, b: 0.0 }.purity(50), 1.0);
        assert_eq!(PurityModel { a: 1.2, b: -0.1 }.purity(1), 1.0);
        let p = PurityModel { a: 1.0, b: -0.3 }.purity(10);
        assert!((p - 10f64.powf(-0.3)).abs() < EPS);
        assert_eq!(PurityModel { a: 1e-9, b: -1.0 }.purity(100), MIN_PURITY);
    }

    #[test]
    fn split_depth_examples() {
        assert_eq!(split_depth(1, 0.3), 0);
        assert_eq!(split_depth(10, 0.5), 3);
        assert_eq!(split_depth(4, 0.9), 0);
        assert_eq!(split_depth(8, 0.5), 3);
        assert_eq!(split_depth(10, 1.0), 0);
        assert_eq!(split_depth(3, 0.01), 2);
    }

    #[test]
    fn singleton_split_is_free() {
        let (u, g) = (UserParams::default(), GlobalParams::default());
        for a in [0.05, 0.3, 0.9] {
            assert_eq!(cost_split_cluster(1, a, &u, &g).unwrap(), 0.0);
        }
        assert_eq!(cost_split_cluster(5, 0.0, &u, &g), Err(Error::InvalidPurity(0.0)));
        assert!(cost_split_cluster(5, 1.5, &u, &g).is_err());
    }

    #[test]
    fn regime_boundaries_are_closed_on_the_left() {
        let g = GlobalParams::default();
        assert_eq!(regime(0.5, &g), SplitRegime::Majority);
        assert_eq!(regime(0.1, &g), SplitRegime::Minority);
        assert_eq!(regime(0.0999, &g), SplitRegime::Mixed);
    }

    #[test]
    fn local_merge_examples() {
        let (u, g) = (UserParams::default(), GlobalParams::default());
        assert_eq!(cost_local_merge(0.0, &u, &g), 1.0);
        assert!((cost_local_merge(100.0, &u, &g) - 46.0).abs() < EPS);
        let g1 = GlobalParams { tau: 1.0, ..g };
        assert!((cost_local_merge(10.0, &u, &g1) - 5.0).abs() < EPS);
    }

    #[test]
    fn global_merge_examples() {
        let (u, g) = (UserParams::default(), GlobalParams::default());
        assert_eq!(g.global_iterations(), 3);
        // r' = 0: three rounds of memorize + button.
        assert!((cost_global_merge(0.0, &u, &g) - 3.0 * (1.2 + 1.0)).abs() < EPS);
        // r' = 100: rows 97, 67, 37; 9 checks per round.
        let expected = 3.0 * 1.2 + (97.0 + 67.0 + 37.0) * 0.4 + 3.0 * 27.0 + 3.0;
        assert!((cost_global_merge(100.0, &u, &g) - expected).abs() < EPS);
        let g3 = GlobalParams { xi: 1.0 / 3.0, ..g };
        assert_eq!(g3.global_iterations(), 1);
    }

    #[test]
    fn merge_baseline_plan() {
        let (u, g) = (UserParams::default(), GlobalParams::default());
        let est = cost_plan(&Partition::singletons(50), &PurityModel::default(), 1, &u, &g).unwrap();
        assert_eq!(est.split_seconds, 0.0);
        let expected = cost_local_merge(50.0, &u, &g) + cost_global_merge(49.0, &u, &g);
        assert!((est.estimated_seconds - expected).abs() < EPS);
        assert!((est.local_merge_output_count - 0.98 * est.split_output_count).abs() < EPS);
    }

    #[test]
    fn multi_user_merge_vanishes_for_one_user() {
        let u = UserParams::default();
        assert_eq!(cost_multi_user_merge(&[10.0], &[u], &GlobalParams::default(), 1.0), 0.0);
        assert_eq!(cost_cwinston(&[3.0, 7.0, 5.0], 2.0), 9.0);
    }
}
