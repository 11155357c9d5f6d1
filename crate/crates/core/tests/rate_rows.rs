mod common;

use common::{one_type_model, traffic_model, truncated_chain_solution, two_type_model};
use proptest::prelude::*;
use qbd_core::model::ModelParams;
use qbd_core::rate_matrix::{
    compute_rate_rows, rate_map, rate_rows_at_depth, stationary_distribution,
};

fn ergodic_params() -> impl Strategy<Value = ModelParams> {
    (
        1usize..=5,
        0.05f64..3.0,
        0.2f64..2.0,
        0.05f64..=1.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.3f64..2.0,
    )
        .prop_flat_map(|(k, lam, mu, p, q, r, rate)| {
            (1..=k).prop_map(move |c| ModelParams::multiserver(lam, mu, p, q, r, c, k, rate))
        })
        .prop_filter("ergodic", |m| {
            m.check_ergodicity().map(|e| e.ergodic).unwrap_or(false)
        })
        .prop_filter("not too close to the stability boundary", |m| {
            m.check_ergodicity()
                .map(|e| e.rho < 0.9 || m.q < 1.0 || m.r < 1.0)
                .unwrap_or(false)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn row_sum_identity_holds(m in ergodic_params()) {
        let rows = compute_rate_rows(&m, 60, 1e-12).unwrap();
        for n in 1..=60 {
            prop_assert!(rows.row_sum_defect(&m, n) < 1e-9, "n={} defect={}", n, rows.row_sum_defect(&m, n));
        }
    }

    #[test]
    fn rows_grow_with_depth(m in ergodic_params(), d in 0usize..20) {
        let a = rate_rows_at_depth(&m, 10, d).unwrap();
        let b = rate_rows_at_depth(&m, 10, d + 1).unwrap();
        for n in 1..=10 {
            for (x, y) in a[n - 1].iter().zip(&b[n - 1]) {
                prop_assert!(*y >= *x - 1e-15);
                prop_assert!(*x >= 0.0);
            }
        }
    }

    #[test]
    fn only_last_row_is_nonzero(m in ergodic_params(), n in 1usize..30) {
        let rows = compute_rate_rows(&m, 30, 1e-12).unwrap();
        let r = rows.rate_matrix(n);
        for i in 0..m.capacity {
            prop_assert!(r.row(i).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn computed_rows_are_fixed_points(m in ergodic_params(), n in 1usize..20) {
        let rows = compute_rate_rows(&m, 21, 1e-13).unwrap();
        let mapped = rate_map(&m, n, &rows.rate_matrix(n + 1)).unwrap();
        let diff = (&mapped - rows.rate_matrix(n)).abs().max();
        prop_assert!(diff < 1e-10, "diff {}", diff);
    }

    #[test]
    fn level_ratios_follow_rate_rows(m in ergodic_params()) {
        let rows = compute_rate_rows(&m, 40, 1e-12).unwrap();
        let dist = stationary_distribution(&m, &rows).unwrap();
        let k = m.capacity;
        for n in 1..=40 {
            let full = dist.get(k, n);
            if full > 1e-250 {
                for i in 0..k {
                    let want = rows.row(n)[i] / rows.row(n)[k];
                    let got = dist.get(i, n) / full;
                    prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-12));
                }
            }
        }
    }
}

#[test]
fn stationary_matches_direct_chain_solve() {
    for p in [traffic_model(0.5), two_type_model(2.0), one_type_model(2.0)] {
        let levels = 120;
        let direct = truncated_chain_solution(&p, levels);
        let rows = compute_rate_rows(&p, levels, 1e-13).unwrap();
        let dist = stationary_distribution(&p, &rows).unwrap();
        for (n, level) in direct.iter().enumerate().take(60) {
            for (i, &b) in level.iter().enumerate() {
                let a = dist.get(i, n);
                assert!(
                    (a - b).abs() <= 1e-9 * b.max(1e-300) + 1e-15,
                    "n={n} i={i}: {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn balance_residual_is_tiny() {
    let p = traffic_model(0.9);
    let rows = compute_rate_rows(&p, 80, 1e-12).unwrap();
    let dist = stationary_distribution(&p, &rows).unwrap();
    for n in 0..80 {
        assert!(dist.balance_residual(&p, n) < 1e-12);
    }
    assert!((dist.total() - 1.0).abs() < 1e-12);
    assert!(!dist.tail_warning);
}

#[test]
fn tolerance_controls_doubling() {
    let p = traffic_model(0.5);
    let loose = compute_rate_rows(&p, 50, 1e-4).unwrap();
    let tight = compute_rate_rows(&p, 50, 1e-14).unwrap();
    assert!(tight.depth >= loose.depth);
    assert!(tight.iterations >= loose.iterations);
}
