use foliamod::densities;
use foliamod::gallery::{self, expected};
use foliamod::modulus::{self, closed_form_extremal, modulus_base_formula, modulus_direct};
use foliamod::optimizer::{kkt_closed_leaf, solve_leaf, LeafProblem, SolverConfig};
use foliamod::quadrature::{build_quadrature, hat, integrate_manifold};
use foliamod::testfn::random_fields;
use proptest::prelude::*;

fn exponent() -> impl Strategy<Value = f64> {
    1.2f64..5.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn torus_extremal_is_normalized_and_positive(big_r in 1.5f64..4.0, ratio in 0.1f64..0.9, p in exponent()) {
        let chart = gallery::make_torus(big_r, ratio * big_r).unwrap();
        let quad = build_quadrature(&chart, &[16, 32]).unwrap();
        let bundle = densities(&chart, &quad).unwrap();
        let f0 = closed_form_extremal(&bundle, &quad, p).unwrap();
        prop_assert!(f0.min() > 0.0);
        prop_assert!(modulus::normalization_residual(&f0, &bundle, &quad).unwrap() <= 1e-12);
        let closed = modulus_base_formula(&bundle, &quad, p).unwrap();
        let direct = modulus_direct(&f0, &bundle, &quad, p).unwrap();
        prop_assert!((closed - direct).abs() <= 1e-10 * closed);
    }

    #[test]
    fn ring_modulus_matches_closed_form(r1 in 0.2f64..2.0, width in 0.1f64..3.0, p in exponent()) {
        let r2 = r1 + width;
        let chart = gallery::make_ring(2, r1, r2).unwrap();
        let quad = build_quadrature(&chart, &[48, 16]).unwrap();
        let bundle = densities(&chart, &quad).unwrap();
        let m = modulus_base_formula(&bundle, &quad, p).unwrap();
        let exact = expected::ring_modulus(2, r1, r2, p);
        prop_assert!((m - exact).abs() <= 1e-9 * exact, "{m} vs {exact}");
    }

    #[test]
    fn leaf_solver_matches_kkt(
        weights in prop::collection::vec((0.05f64..2.0, 0.05f64..2.0), 1..40),
        p in exponent(),
    ) {
        let (v, w): (Vec<f64>, Vec<f64>) = weights.into_iter().unzip();
        let prob = LeafProblem::new(v, w, p).unwrap();
        let sol = solve_leaf(&prob, &SolverConfig::default()).unwrap();
        let kkt = prob.objective(&kkt_closed_leaf(&prob));
        prop_assert!(sol.values.iter().all(|&f| f >= 0.0));
        prop_assert!((prob.constraint(&sol.values) - 1.0).abs() <= 1e-12);
        prop_assert!((sol.objective - kkt).abs() <= 1e-8 * kkt);
    }

    #[test]
    fn hat_is_linear(seed in any::<u64>(), a in -3.0f64..3.0) {
        let chart = gallery::make_ellipse_tube(2.0, 1.0, 0.1, 0.5, gallery::Side::Outward).unwrap();
        let quad = build_quadrature(&chart, &[8, 32]).unwrap();
        let bundle = densities(&chart, &quad).unwrap();
        let fields = random_fields(&chart, &quad, seed, 2);
        let combo = fields[0].zip_with(&fields[1], |x, y| a * x + y).unwrap();
        let lhs = hat(&combo, &bundle, &quad).unwrap();
        let h0 = hat(&fields[0], &bundle, &quad).unwrap();
        let h1 = hat(&fields[1], &bundle, &quad).unwrap();
        let rhs = h0.zip_with(&h1, |x, y| a * x + y).unwrap();
        let gap = lhs.zip_with(&rhs, |x, y| x - y).unwrap().sup_abs();
        prop_assert!(gap <= 1e-12 * (1.0 + rhs.sup_abs()));
    }

    #[test]
    fn integral_formula_holds_for_random_functions(seed in any::<u64>(), p in exponent()) {
        let chart = gallery::make_torus(2.0, 1.0).unwrap();
        let quad = build_quadrature(&chart, &[16, 16]).unwrap();
        let bundle = densities(&chart, &quad).unwrap();
        let f0 = closed_form_extremal(&bundle, &quad, p).unwrap();
        for phi in random_fields(&chart, &quad, seed, 3) {
            prop_assert!(modulus::integral_formula_residual(&f0, &phi, &bundle, &quad, p).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn base_rescaling_leaves_extremal_unchanged(amp in 0.0f64..0.9, p in exponent()) {
        let chart = gallery::make_torus(3.0, 1.0).unwrap();
        let scaled = chart.with_base_scale(move |y| 1.0 + amp * y[0].cos());
        let quad = build_quadrature(&chart, &[16, 16]).unwrap();
        let f0 = closed_form_extremal(&densities(&chart, &quad).unwrap(), &quad, p).unwrap();
        let f1 = closed_form_extremal(&densities(&scaled, &quad).unwrap(), &quad, p).unwrap();
        let gap = f0.zip_with(&f1, |a, b| (a - b).abs() / a).unwrap().max();
        prop_assert!(gap <= 1e-12);
    }

    #[test]
    fn coarea_holds_for_positive_fields(seed in any::<u64>()) {
        let chart = gallery::make_ring(3, 1.0, 2.0).unwrap();
        let quad = build_quadrature(&chart, &[6, 6, 8]).unwrap();
        let bundle = densities(&chart, &quad).unwrap();
        for phi in random_fields(&chart, &quad, seed, 2) {
            let f = phi.map(f64::exp);
            let residual = foliamod::quadrature::coarea_residual(&f, &bundle, &quad).unwrap();
            prop_assert!(residual <= 1e-12);
            prop_assert!(integrate_manifold(&f, &bundle, &quad).unwrap() > 0.0);
        }
    }
}
