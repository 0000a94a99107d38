use defrauder::rank::dispersion;
use proptest::prelude::*;

fn members() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..5).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), 1..8))
}

fn disp(vs: &[Vec<f64>]) -> f64 {
    let refs: Vec<&[f64]> = vs.iter().map(Vec::as_slice).collect();
    dispersion(&refs)
}

proptest! {
    #[test]
    fn translation_invariant(vs in members(), shift in -100.0f64..100.0) {
        let moved: Vec<Vec<f64>> = vs.iter().map(|v| v.iter().map(|x| x + shift).collect()).collect();
        prop_assert!((disp(&vs) - disp(&moved)).abs() <= 1e-12 * (1.0 + shift * shift));
    }

    #[test]
    fn scales_quadratically(vs in members(), c in -5.0f64..5.0) {
        let scaled: Vec<Vec<f64>> = vs.iter().map(|v| v.iter().map(|x| x * c).collect()).collect();
        let want = c * c * disp(&vs);
        prop_assert!((disp(&scaled) - want).abs() <= 1e-9 * (1.0 + want));
    }

    #[test]
    fn zero_iff_identical(v in prop::collection::vec(-10.0f64..10.0, 1..6), n in 1usize..6, k in 0usize..6, bump in 0.01f64..1.0) {
        let same = vec![v.clone(); n];
        prop_assert_eq!(disp(&same), 0.0);
        let mut diff = same.clone();
        diff.push(v.clone());
        let idx = k % diff.len();
        diff[idx][0] += bump;
        prop_assert!(disp(&diff) > 0.0);
    }

    #[test]
    fn order_invariant(mut vs in members(), seed in any::<u64>()) {
        let before = disp(&vs);
        let n = vs.len();
        vs.rotate_left((seed as usize) % n);
        prop_assert!((disp(&vs) - before).abs() <= 1e-12 * (1.0 + before));
    }
}

#[test]
fn two_points_in_one_dimension() {
    assert_eq!(disp(&[vec![0.0], vec![2.0]]), 1.0);
}
