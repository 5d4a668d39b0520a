use proptest::prelude::*;

use krf_core::calabi::{Grid, Profile};
use krf_core::flow::{Flow, FlowConfig, Stepper};
use krf_core::fsgeom::{random_invertible, verify_lemma};
use krf_core::geometry::{class_volume, BundleGeometry, KahlerClassPath};
use krf_core::metricspace::{default_samples, triangle_audit, GraphMetric, Resolution};
use krf_core::scenario::Scenario;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn class_path_is_linear_and_hits_zero(k in 0u32..4, f0 in 0.1f64..5.0, c0 in 0.1f64..10.0, s in 0.0f64..1.0) {
        let geom = BundleGeometry::new(k);
        let path = KahlerClassPath::new(f0, c0);
        let t_sing = path.singular_time(&geom).t;
        prop_assert!(t_sing > 0.0 && t_sing <= f0 / 2.0 + 1e-12);
        let class = path.class_at(&geom, s * t_sing).unwrap();
        prop_assert!((class.fiber - (f0 - 2.0 * s * t_sing)).abs() < 1e-12);
        prop_assert!((class.section - (c0 + (k as f64 - 2.0) * s * t_sing)).abs() < 1e-12);
        let v = class_volume(class, &geom);
        let expected = (class.fiber * class.fiber * k as f64 + 2.0 * class.fiber * class.section) / 2.0;
        prop_assert!((v - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn pullback_dominates_bound(seed in any::<u64>(), r in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = random_invertible(&mut rng, r);
        let ratio = verify_lemma(&map, 50, seed).unwrap();
        prop_assert!(ratio >= 1.0 - 1e-9, "ratio {}", ratio);
    }

    #[test]
    fn scenario_ini_round_trips(
        k in 0u32..3,
        f0 in 0.5f64..4.0,
        extra in 0.5f64..8.0,
        split in 0.0f64..0.9,
        grid_n in 16usize..2048,
        fraction in 1e-4f64..1e-2,
        seed in any::<u64>(),
    ) {
        let mut s = Scenario::new("prop", k, f0, f0 + extra);
        s.s0_split = split;
        s.grid_n = grid_n;
        s.step_fraction = fraction;
        s.stepper = if seed % 2 == 0 { Stepper::Rosenbrock } else { Stepper::Rk4 };
        s.seed = seed;
        s.validate().unwrap();
        let back: Scenario = s.to_ini().parse().unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn flow_preserves_fiber_area(k in 0u32..3, f0 in 0.5f64..3.0, extra in 0.5f64..4.0, stop in 0.1f64..0.9) {
        let geom = BundleGeometry::new(k);
        let profile = Profile::fs_model(Grid::new(64).unwrap(), 0.0, f0, f0 + extra).unwrap();
        let config = FlowConfig::new(Stepper::Rosenbrock, 0.8, 5e-3, 1e-3).unwrap();
        let flow = Flow::new(geom, profile, config).unwrap();
        let t = stop * flow.singular_time();
        let state = flow.run(&[t]).unwrap().pop().unwrap();
        let area = state.profile.fiber_area_quadrature();
        prop_assert!((area - (f0 - 2.0 * t)).abs() <= 1e-9 * f0, "area {} vs {}", area, f0 - 2.0 * t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn graph_distances_form_a_metric(
        k in 0u32..3,
        h0 in 0.5f64..3.0,
        h1 in 0.0f64..2.0,
        q0 in 0.1f64..2.0,
        q1 in 0.0f64..1.0,
    ) {
        let graph = GraphMetric::from_coefficients(Resolution::uniform(8), k, |x| {
            (h0 + h1 * x, q0 + q1 * x * (1.0 - x))
        })
        .unwrap();
        let space = graph.space(0.0, &default_samples(graph.resolution())).unwrap();
        for i in 0..space.len() {
            prop_assert_eq!(space.dist[i][i], 0.0);
            for j in 0..space.len() {
                prop_assert_eq!(space.dist[i][j], space.dist[j][i]);
                if i != j {
                    prop_assert!(space.dist[i][j] > 0.0);
                }
            }
        }
        prop_assert!(triangle_audit(&space) <= 1e-12);
    }

    #[test]
    fn base_graph_scales_with_the_base_period(c in 0.1f64..10.0, n in 8usize..20) {
        let unit = GraphMetric::base_sphere(1.0, n).unwrap();
        let scaled = GraphMetric::base_sphere(c, n).unwrap();
        let labels = default_samples(Resolution::collapsed(n));
        let (a, b) = (unit.space(0.0, &labels).unwrap(), scaled.space(0.0, &labels).unwrap());
        for (ra, rb) in a.dist.iter().zip(&b.dist) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((y - c.sqrt() * x).abs() <= 1e-12 * (1.0 + y));
            }
        }
    }
}
