use proptest::prelude::*;
use wsc_core::ecdf::{standardize, wasserstein, Ecdf, TransactionBatch};

fn amounts(hi: f64) -> impl Strategy<Value = Vec<f64>> {
    // mix continuous values with a coarse integer grid so ties and shared
    // support points show up
    let grid = (0u32..=(hi as u32)).prop_map(f64::from);
    prop::collection::vec(prop_oneof![0.0..hi, grid], 1..30)
}

fn dyadic_amounts() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u32..=256).prop_map(|k| f64::from(k) / 16.0), 1..30)
}

/// Midpoint-rule integral of |Fa − Fb| over [0, hi], with both ECDFs
/// evaluated by counting.
fn grid_distance(a: &[f64], b: &[f64], hi: f64, steps: usize) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let h = hi / steps as f64;
    let (mut ia, mut ib) = (0, 0);
    let mut total = 0.0;
    for s in 0..steps {
        let x = (s as f64 + 0.5) * h;
        while ia < a.len() && a[ia] <= x {
            ia += 1;
        }
        while ib < b.len() && b[ib] <= x {
            ib += 1;
        }
        total += (ia as f64 / a.len() as f64 - ib as f64 / b.len() as f64).abs();
    }
    total * h
}

fn w(a: &[f64], b: &[f64]) -> f64 {
    wasserstein(&Ecdf::from_amounts(a), &Ecdf::from_amounts(b))
}

proptest! {
    #[test]
    fn metric_axioms(a in amounts(20.0), b in amounts(20.0), c in amounts(20.0)) {
        let (ea, eb, ec) = (Ecdf::from_amounts(&a), Ecdf::from_amounts(&b), Ecdf::from_amounts(&c));
        let ab = wasserstein(&ea, &eb);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab.to_bits(), wasserstein(&eb, &ea).to_bits());
        prop_assert_eq!(wasserstein(&ea, &ea), 0.0);
        prop_assert_eq!(ab == 0.0, ea == eb);
        let ac = wasserstein(&ea, &ec);
        let bc = wasserstein(&eb, &ec);
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn translation_invariance(a in amounts(10.0), b in amounts(10.0), shift in 0.0..10.0f64) {
        let sa: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let sb: Vec<f64> = b.iter().map(|x| x + shift).collect();
        prop_assert!((w(&sa, &sb) - w(&a, &b)).abs() <= 1e-12);
    }

    // amounts on a 1/16 grid keep nonzero support gaps away from zero, so
    // the rounding of c·x stays small relative to every gap
    #[test]
    fn scale_equivariance(a in dyadic_amounts(), b in dyadic_amounts(), c in 0.1..10.0f64) {
        let sa: Vec<f64> = a.iter().map(|x| x * c).collect();
        let sb: Vec<f64> = b.iter().map(|x| x * c).collect();
        let base = w(&a, &b);
        let scaled = w(&sa, &sb);
        prop_assert!((scaled - c * base).abs() <= 1e-12 * (c * base).max(f64::MIN_POSITIVE));
    }

    #[test]
    fn agrees_with_grid_integration(a in amounts(1.0), b in amounts(1.0)) {
        let exact = w(&a, &b);
        // each jump costs at most one cell width; total variation is ≤ 2
        let steps = 100_000;
        prop_assert!((exact - grid_distance(&a, &b, 1.0, steps)).abs() <= 2.0 / steps as f64);
    }

    #[test]
    fn ecdf_reproduces_ranks(a in amounts(50.0)) {
        let e = Ecdf::from_amounts(&a);
        let v = a.len();
        for &x in &a {
            let count = a.iter().filter(|&&y| y <= x).count();
            prop_assert_eq!(e.eval(x), count as f64 / v as f64);
        }
        prop_assert!(e.support().windows(2).all(|p| p[0] < p[1]));
        prop_assert_eq!(*e.cum_prob().last().unwrap(), 1.0);
    }

    #[test]
    fn standardized_supports_lie_in_unit_interval(sets in prop::collection::vec(amounts(1000.0), 1..6)) {
        let batches: Vec<TransactionBatch> = sets
            .into_iter()
            .enumerate()
            .map(|(i, a)| TransactionBatch::new(format!("e{i}"), a).unwrap())
            .collect();
        let ds = standardize(&batches, None).unwrap();
        for e in ds.ecdfs() {
            prop_assert!(e.support().iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
