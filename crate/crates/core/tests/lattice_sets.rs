use llab::lattice::{self, LatticeSet};
use proptest::prelude::*;

fn arb_set(dim: usize, max_len: usize, coord: i64) -> impl Strategy<Value = LatticeSet> {
    proptest::collection::vec(proptest::collection::vec(-coord..=coord, dim), 1..=max_len).prop_map(move |pts| {
        let pts: Vec<[i64; 3]> = pts
            .into_iter()
            .map(|p| {
                let mut q = [0; 3];
                q[..p.len()].copy_from_slice(&p);
                q
            })
            .collect();
        LatticeSet::collapsed(dim, pts).unwrap()
    })
}

#[test]
fn random_subset_golden() {
    let r = lattice::gen_random_subset(32, 0.5, 7).unwrap();
    assert_eq!(r.retries, 0);
    assert_eq!(
        r.set.values(),
        vec![1, 2, 6, 7, 9, 11, 12, 14, 15, 17, 18, 19, 20, 21, 23, 24, 25, 26, 28, 29, 32]
    );
}

#[test]
fn random_subset_size_is_binomial() {
    let (n, p) = (400i64, 0.3);
    let mean = n as f64 * p;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for seed in 0..100 {
        let size = lattice::gen_random_subset(n, p, seed).unwrap().set.len() as f64;
        assert!((size - mean).abs() <= 5.0 * sigma, "seed {seed}: {size}");
    }
}

#[test]
fn prism_slices() {
    let pts: Vec<Vec<i64>> = (1..=2)
        .flat_map(|x| (1..=3).flat_map(move |y| [4, 9].map(|z| vec![x, y, z])))
        .collect();
    let a = LatticeSet::from_coords(3, &pts).unwrap();
    let s = lattice::planar_slices(&a, 2).unwrap();
    assert_eq!(s.p, 2);
    assert!(s.slices.iter().all(|sl| sl.content.len() == 6));
    let two = LatticeSet::from_coords(3, &[vec![0, 0, 0], vec![0, 0, 5]]).unwrap();
    let s = lattice::planar_slices(&two, 2).unwrap();
    assert_eq!((s.p, s.slices[0].content.len(), s.slices[1].content.len()), (2, 1, 1));
}

#[test]
fn box_progression_examples() {
    let b = lattice::gen_box_progression(0, &[1, 10], &[3, 3]).unwrap();
    assert!(b.proper);
    assert_eq!(b.set.values(), vec![0, 1, 2, 10, 11, 12, 20, 21, 22]);
    assert!(!lattice::gen_box_progression(0, &[1, 1], &[3, 3]).unwrap().proper);
    assert_eq!(lattice::gen_box_progression(5, &[3], &[1]).unwrap().set.values(), vec![5]);
}

#[test]
fn cube_rows_both_axes() {
    for n in 1..=6 {
        let a = lattice::gen_cube(n, 2).unwrap();
        for axis in 0..2 {
            let r = lattice::rows(&a, axis).unwrap();
            assert_eq!((r.r, r.s), (n as usize, n as usize));
        }
    }
}

proptest! {
    #[test]
    fn rows_partition(a in arb_set(2, 40, 6), axis in 0usize..2) {
        let r = lattice::rows(&a, axis).unwrap();
        prop_assert_eq!(r.kept_points(), a.len());
        prop_assert!(r.rows.iter().all(|row| row.content.len() >= r.s));
    }

    #[test]
    fn slices_partition(a in arb_set(3, 40, 4), axis in 0usize..3) {
        let s = lattice::planar_slices(&a, axis).unwrap();
        prop_assert_eq!(s.slices.iter().map(|sl| sl.content.len()).sum::<usize>(), a.len());
        prop_assert!(s.slices.iter().all(|sl| !sl.content.is_empty()));
    }

    #[test]
    fn translation_preserves_differences(a in arb_set(3, 12, 50)) {
        let (b, v) = lattice::translate_to_positive(&a);
        prop_assert_eq!(b.len(), a.len());
        prop_assert!(b.coords().all(|c| c.iter().all(|&x| x >= 1)));
        for (p, q) in a.coords().zip(b.coords()) {
            for i in 0..3 {
                prop_assert_eq!(q[i] - p[i], v[i]);
            }
        }
    }

    #[test]
    fn json_roundtrip(a in arb_set(2, 30, 1000)) {
        prop_assert_eq!(LatticeSet::from_json(&a.to_json()).unwrap(), a);
    }

    #[test]
    fn lacunary_recurrence(n in 3u32..40) {
        let v = lattice::gen_lacunary(n).unwrap().values();
        for i in 1..v.len() - 1 {
            prop_assert_eq!(v[i + 1], v[i] + 2 * (v[i] - v[i - 1]));
        }
    }
}
