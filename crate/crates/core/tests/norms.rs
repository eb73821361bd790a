use llab::lattice::{self, LatticeSet};
use llab::norms::{l1_estimate, l1_grid, l2_exact, linf_exact, L1Options};
use llab::grid;
use proptest::prelude::*;

#[test]
fn two_point_closed_form() {
    let a = LatticeSet::from_values([0, 1]).unwrap();
    let est = l1_estimate(&a, &L1Options::default()).unwrap();
    let exact = 4.0 / std::f64::consts::PI;
    assert!(est.target_met);
    assert!((est.value - exact).abs() <= est.error_bound);
    assert!((est.value - exact).abs() / exact <= 1e-4);
}

#[test]
fn cube_grid_l1_factorizes() {
    let one = grid::evaluate_fft(&lattice::gen_cube(8, 1).unwrap(), &[64]).unwrap();
    let v1 = l1_grid(&one);
    for d in [2usize, 3] {
        let f = grid::evaluate_fft(&lattice::gen_cube(8, d).unwrap(), &vec![64; d]).unwrap();
        assert!((l1_grid(&f) - v1.powi(d as i32)).abs() <= 1e-9 * v1.powi(d as i32));
    }
}

#[test]
fn dirichlet_values_increase() {
    let mut last = 0.0;
    for n in [4i64, 16, 64] {
        let est = l1_estimate(&lattice::gen_ap(1, 1, n).unwrap(), &L1Options::default().with_target(1e-3)).unwrap();
        assert!(est.value > last);
        last = est.value;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refinement_trace_is_consistent(values in proptest::collection::btree_set(-40i64..40, 1..12)) {
        let a = LatticeSet::from_values(values).unwrap();
        let est = l1_estimate(&a, &L1Options::default().with_target(1e-3)).unwrap();
        for w in est.trace.windows(2) {
            prop_assert!((w[0].value - w[1].value).abs() <= w[0].error_bound + w[1].error_bound + 1e-12);
        }
        // Sandwich between the L2 norm squared over L∞ and the L2 norm.
        let l2 = l2_exact(&a);
        prop_assert!(est.value <= l2 + est.error_bound);
        prop_assert!(est.value + est.error_bound >= l2 * l2 / linf_exact(&a));
    }
}
