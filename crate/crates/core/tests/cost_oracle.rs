mod support;

use proptest::prelude::*;
use support::oracle;
use vnorm_core::costmodel::{
    cost_global_merge, cost_local_merge, cost_multi_user_merge, cost_plan_sizes, cost_split_cluster, split_depth,
    GlobalParams, UserParams,
};

const PSI: [usize; 6] = [1, 2, 5, 10, 50, 200];
const ALPHA: [f64; 6] = [0.05, 0.1, 0.3, 0.5, 0.7, 0.95];

#[test]
fn split_matches_step_walk_on_grid() {
    let u = UserParams::default();
    let g = GlobalParams::default();
    let slack = u.rho_f + u.rho_s + u.rho_m;
    for psi in PSI {
        for alpha in ALPHA {
            let formula = cost_split_cluster(psi, alpha, &u, &g).unwrap();
            let (walk, beta) = oracle::split_walk(psi, alpha, &u, &g);
            assert_eq!(beta, split_depth(psi, alpha), "psi {psi} alpha {alpha}");
            let diff = formula - walk;
            assert!(
                (-1e-9..=slack * beta as f64 + 1e-9).contains(&diff),
                "psi {psi} alpha {alpha}: formula {formula} walk {walk}"
            );
        }
    }
}

#[test]
fn merge_formulas_match_exactly() {
    let u = UserParams::default();
    for g in [
        GlobalParams::default(),
        GlobalParams {
            xi: 1.0 / 3.0,
            ..Default::default()
        },
        GlobalParams {
            tau: 0.9,
            xi: 0.05,
            ..Default::default()
        },
    ] {
        for r in [0.0, 1.0, 7.5, 100.0, 2000.0] {
            assert!((cost_local_merge(r, &u, &g) - oracle::local_merge(r, &u, &g)).abs() < 1e-9);
            assert!((cost_global_merge(r, &u, &g) - oracle::global_merge(r, &u, &g)).abs() < 1e-9);
        }
    }
}

#[test]
fn plan_is_the_sum_of_its_parts() {
    let u = UserParams::default();
    let g = GlobalParams::default();
    let sizes = [10, 5, 1];
    let alpha = 0.6;
    let e = cost_plan_sizes(&sizes, alpha, 10, &u, &g).unwrap();
    let r: f64 = sizes.iter().map(|&s| (split_depth(s, alpha) + 1) as f64).sum();
    let split: f64 = sizes.iter().map(|&s| cost_split_cluster(s, alpha, &u, &g).unwrap()).sum();
    let expected = split + oracle::local_merge(r, &u, &g) + oracle::global_merge(g.tau * r, &u, &g);
    assert!((e.estimated_seconds - expected).abs() < 1e-9);
    assert!((e.local_merge_output_count - g.tau * e.split_output_count).abs() < 1e-12);
}

#[test]
fn multi_user_merge_direct_evaluation() {
    let u = UserParams::default();
    let g = GlobalParams::default();
    // k = 3, lists (90, 60, 30): rounds over D1 then D2.
    // Round 1: I1 = floor(90/9) = 10 scans, each over rows of D1..D3.
    let click = u.click();
    let mut expected = 0.0;
    let mut settled = 0.0;
    for (t, d) in [(1usize, 90.0f64), (2, 60.0)] {
        let scans = ((d * (1.0 - settled * g.xi)).max(0.0) / 9.0 + 1e-9).floor() as usize;
        let lists = &[90.0, 60.0, 30.0][t - 1..];
        let mut round = 0.0;
        for i in 0..=scans {
            round += 3.0 * u.rho_z;
            for &dj in lists {
                let left = (1.0 - (settled + 3.0 * i as f64) * g.xi).max(0.0);
                round += (3.0 * g.xi + 1.0) * click + dj * left * u.rho_r;
            }
        }
        expected += round;
        settled += 3.0 * (scans as f64 + 1.0);
    }
    let got = cost_multi_user_merge(&[30.0, 90.0, 60.0], &[u, u, u], &g, 1.0);
    assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");

    // Without row reading only memorize and buttons remain.
    let no_rows = UserParams { rho_r: 0.0, ..u };
    let tiny_mu = cost_multi_user_merge(&[30.0, 90.0, 60.0], &[u, u, u], &g, 1e-12);
    let zero_r = cost_multi_user_merge(&[30.0, 90.0, 60.0], &[no_rows; 3], &g, 1.0);
    assert!((tiny_mu - zero_r).abs() < 1e-6);
}

#[test]
fn equal_users_make_every_branch_of_the_max_equal() {
    let u = UserParams::default();
    let slow = UserParams { rho_r: 0.8, ..u };
    let g = GlobalParams::default();
    let same = cost_multi_user_merge(&[40.0, 40.0], &[u, u], &g, 1.0);
    let mixed = cost_multi_user_merge(&[40.0, 40.0], &[u, slow], &g, 1.0);
    let both_slow = cost_multi_user_merge(&[40.0, 40.0], &[slow, slow], &g, 1.0);
    assert!(same < mixed);
    assert!((mixed - both_slow).abs() < 1e-9);
}

fn params() -> impl Strategy<Value = UserParams> {
    (0.05f64..2.0, 0.05f64..2.0, 0.05f64..3.0, 0.05f64..1.0, 0.05f64..1.0, 0.0f64..0.5).prop_map(|(f, s, m, z, r, gm)| {
        UserParams {
            rho_f: f,
            rho_s: s,
            rho_m: m,
            rho_z: z,
            rho_r: r,
            gamma: gm,
            ..Default::default()
        }
    })
}

proptest! {
    #[test]
    fn costs_grow_with_every_operation_time(
        u in params(),
        which in 0usize..5,
        bump in 0.01f64..1.0,
        psi in 1usize..300,
        alpha in 0.01f64..1.0,
        r in 0.0f64..3000.0,
    ) {
        let g = GlobalParams::default();
        let mut v = u;
        match which {
            0 => v.rho_f += bump,
            1 => v.rho_s += bump,
            2 => v.rho_m += bump,
            3 => v.rho_z += bump,
            _ => v.rho_r += bump,
        }
        prop_assert!(cost_split_cluster(psi, alpha, &v, &g).unwrap() >= cost_split_cluster(psi, alpha, &u, &g).unwrap() - 1e-9);
        prop_assert!(cost_local_merge(r, &v, &g) >= cost_local_merge(r, &u, &g) - 1e-9);
        prop_assert!(cost_global_merge(r, &v, &g) >= cost_global_merge(r, &u, &g) - 1e-9);
    }

    #[test]
    fn split_walk_bound_holds_off_grid(psi in 1usize..400, alpha in 0.01f64..0.999) {
        let u = UserParams::default();
        let g = GlobalParams::default();
        let (walk, beta) = oracle::split_walk(psi, alpha, &u, &g);
        let formula = cost_split_cluster(psi, alpha, &u, &g).unwrap();
        prop_assert_eq!(beta, split_depth(psi, alpha));
        prop_assert!(formula - walk >= -1e-9);
        prop_assert!(formula - walk <= (u.rho_f + u.rho_s + u.rho_m) * beta as f64 + 1e-9);
    }
}
