use clarify_core::embedding::DistanceMetric;
use clarify_core::reward::bt_from_returns;
use clarify_core::selection::{DensityModel, DistanceHistogram};
use proptest::prelude::*;

fn masses(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("non-zero mass", |v| {
        let s: f64 = v.iter().sum();
        (s > 1e-6).then(|| v.into_iter().map(|x| x / s).collect())
    })
}

fn density_inputs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..40).prop_flat_map(|n| (masses(n), masses(n)))
}

proptest! {
    #[test]
    fn densities_are_valid((clr, amb) in density_inputs(), eps in prop_oneof![Just(0.0), Just(1e-6), 1e-9f64..1e-2]) {
        let n = clr.len();
        let edges = DistanceHistogram::edges(3.0, n).unwrap();
        let d = DensityModel::from_masses(edges, clr.clone(), amb.clone(), eps.max(1e-12)).unwrap();
        for v in [&d.rho1, &d.rho2, &d.rho] {
            prop_assert!(v.iter().all(|&x| x >= 0.0));
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for i in 0..n {
            prop_assert_eq!(d.rho[i], 0.5 * (d.rho1[i] + d.rho2[i]));
            if !d.rho1_fallback && clr[i] <= amb[i] {
                prop_assert_eq!(d.rho1[i], 0.0);
            }
        }
    }

    #[test]
    fn histogram_mass_sums_to_one(ds in prop::collection::vec(0.0f64..10.0, 1..200), max in 0.1f64..12.0, n in 1usize..64) {
        let h = DistanceHistogram::fit(&ds, DistanceHistogram::edges(max, n).unwrap()).unwrap();
        prop_assert!((h.mass.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(h.edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bt_complement(r0 in -200.0f64..200.0, r1 in -200.0f64..200.0) {
        let p = bt_from_returns(r0, r1) + bt_from_returns(r1, r0);
        prop_assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_symmetric(a in prop::collection::vec(-5.0f64..5.0, 3), b in prop::collection::vec(-5.0f64..5.0, 3)) {
        for m in [DistanceMetric::L2, DistanceMetric::SquaredL2] {
            prop_assert_eq!(m.distance(&a, &b), m.distance(&b, &a));
            prop_assert!(m.distance(&a, &b) >= 0.0);
        }
    }
}
