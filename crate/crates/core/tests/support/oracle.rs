//! Independent reference implementations used by tests.
//!
//! These are written from the operation sequences, not from the library's
//! formulas, and walk the work one value at a time where that is possible.
#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

use vnorm_core::costmodel::{GlobalParams, UserParams};

/// Walks one split of an idealized cluster of exact purity `alpha`.
///
/// Each iteration asks isPure and findDom on the current cluster, then the
/// user focuses and memorizes every value, selecting the marked ones, and
/// presses one button. Per-value operations are counted on whole values, so
/// every iteration may undercount by at most one value's worth.
pub fn split_walk(psi: usize, alpha: f64, u: &UserParams, g: &GlobalParams) -> (f64, usize) {
    if psi <= 1 {
        return (0.0, 0);
    }
    let click = u.rho_f + u.rho_s;
    // Iterations until fewer than one value of the non-dominating rest is left.
    let mut beta = 0;
    let mut rest = psi as f64;
    while beta < psi - 1 {
        rest *= 1.0 - alpha;
        if rest < 1.0 - 1e-9 {
            break;
        }
        beta += 1;
    }
    if alpha < g.mixed_threshold {
        return (mixed_walk(psi, alpha, beta, u, g), beta);
    }
    let marked_fraction = if alpha >= g.majority_threshold { 1.0 - alpha } else { alpha };
    let mut total = 0.0;
    let mut size = psi as f64;
    for _ in 0..beta {
        let is_pure = u.gamma0 + u.gamma * (alpha * size);
        let find_dom = if size <= u.stm_capacity as f64 {
            u.eta1 * size
        } else {
            u.eta3 + u.eta2 * size * size
        };
        total += is_pure + click + find_dom + click;
        let whole = size.floor() as usize;
        let marked = (marked_fraction * size + 1e-9).floor() as usize;
        for i in 0..whole {
            total += u.rho_f + u.rho_m;
            if i < marked {
                total += u.rho_s;
            }
        }
        total += click;
        size *= 1.0 - alpha;
    }
    (total, beta)
}

fn mixed_walk(psi: usize, alpha: f64, beta: usize, u: &UserParams, g: &GlobalParams) -> f64 {
    let click = u.rho_f + u.rho_s;
    let n = psi as f64;
    let find_dom = if n <= u.stm_capacity as f64 {
        u.eta1 * n
    } else {
        u.eta3 + u.eta2 * n * n
    };
    let mut total = u.gamma0 + u.gamma * alpha * n + click + find_dom + click;
    total += local_merge(n, u, g);
    let list = g.tau * n;
    for j in 0..beta {
        total += 3.0 * u.rho_z;
        let shown = 3.0 * (1.0 - alpha).powi(3 * j as i32) * list;
        total += (shown - 3.0).max(0.0) * u.rho_r;
        let mut hits = 0.0;
        for k in 1..=3 {
            hits += alpha * (1.0 - alpha).powi((3 * j + k) as i32) * list;
        }
        total += (hits - 1.0).max(0.0) * click;
        total += click;
    }
    total
}

/// Memorize every value, link the (1 − τ) share (three focuses, two selects
/// each), press "done".
pub fn local_merge(r: f64, u: &UserParams, g: &GlobalParams) -> f64 {
    let memorize = r * u.rho_z;
    let links = r * (1.0 - g.tau);
    memorize + links * (u.rho_f * 3.0 + u.rho_s * 2.0) + (u.rho_f + u.rho_s)
}

/// Grids of three columns; each grid removes a ξ share per column.
pub fn global_merge(r: f64, u: &UserParams, g: &GlobalParams) -> f64 {
    let iterations = (1.0 / (3.0 * g.xi) + 1e-9).floor() as usize;
    let mut total = 0.0;
    let mut remaining = r;
    for _ in 0..iterations {
        let rows = (remaining - 3.0).max(0.0);
        let checks = (g.xi * r - 1.0).max(0.0) * 3.0;
        total += 3.0 * u.rho_z + rows * u.rho_r + checks * (u.rho_f + u.rho_s) + (u.rho_f + u.rho_s);
        remaining -= 3.0 * g.xi * r;
    }
    total
}

/// Intra-cluster pairs by enumeration.
pub fn brute_match_count(labels: &[usize]) -> u64 {
    let mut count = 0;
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] == labels[j] {
                count += 1;
            }
        }
    }
    count
}

/// Whether the pair (a, b) with `want_match` follows from the assertions by
/// a path of matches with at most one non-match edge.
pub fn path_infers(n: usize, matches: &[(usize, usize)], non_matches: &[(usize, usize)], a: usize, b: usize, want_match: bool) -> bool {
    // State: (vertex, non-match edges used).
    let mut adj: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
    for &(x, y) in matches {
        adj[x].push((y, false));
        adj[y].push((x, false));
    }
    for &(x, y) in non_matches {
        adj[x].push((y, true));
        adj[y].push((x, true));
    }
    let target_used = usize::from(!want_match);
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([(a, 0usize)]);
    seen.insert((a, 0));
    while let Some((v, used)) = queue.pop_front() {
        if v == b && used == target_used && v != a {
            return true;
        }
        for &(w, neg) in &adj[v] {
            let next = used + usize::from(neg);
            if next <= 1 && seen.insert((w, next)) {
                queue.push_back((w, next));
            }
        }
    }
    false
}
