use std::f64::consts::PI;

use heatlab::expr::bump;
use heatlab::heat::{content_series, geometric_grid};
use heatlab::spectral::{circle_spectrum, dual_norms_exact, interval_spectrum_below, spectrum_of, torus_spectrum, ExactGram};
use heatlab::tensor::{sample_point, PatchMetric};
use heatlab::{geometry_summary, Convention, HeatSeries, Interval, ManifoldSpec, PruferOptions};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

fn non_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0])
}

fn values(series: &HeatSeries, ts: &[f64]) -> Vec<f64> {
    series.evaluate_grid(ts, None).unwrap().into_iter().map(|v| v.value).collect()
}

fn unimodular(steps: &[(usize, i64)]) -> Vec<Vec<i64>> {
    let mut u = vec![vec![1i64, 0], vec![0, 1]];
    for &(kind, k) in steps {
        u = match kind {
            0 => vec![vec![u[0][0] + k * u[1][0], u[0][1] + k * u[1][1]], u[1].clone()],
            1 => vec![u[0].clone(), vec![u[1][0] + k * u[0][0], u[1][1] + k * u[0][1]]],
            _ => vec![u[1].clone(), vec![-u[0][0], -u[0][1]]],
        };
    }
    u
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interval_and_circle_series_decrease(length in 0.5f64..4.0, radius in 0.3f64..3.0, t0 in 0.01f64..0.5) {
        let ts = geometric_grid(t0, 20.0 * t0, 8).unwrap();
        let interval = interval_spectrum_below(length, 4000.0);
        prop_assert!(non_increasing(&values(&HeatSeries::trace(&interval, 1), &ts)));
        prop_assert!(non_increasing(&values(&HeatSeries::content(&interval, 1, length).unwrap(), &ts)));
        let circle = circle_spectrum(radius, 4000.0);
        prop_assert!(non_increasing(&values(&HeatSeries::trace(&circle, 1), &ts)));
    }

    #[test]
    fn interval_content_stays_below_volume(length in 0.2f64..6.0, t in 1e-4f64..10.0) {
        let series = content_series(&ManifoldSpec::Interval(Interval::new(0.0, length)), 4e5, Convention::Drift).unwrap();
        let b = series.evaluate(t).unwrap().value;
        prop_assert!(b >= 0.0 && b <= length);
    }

    #[test]
    fn product_trace_factorizes(length in 0.5f64..4.0, radius in 0.3f64..2.0, t in 0.05f64..5.0) {
        let cutoff = 2000.0;
        let spec = ManifoldSpec::Product {
            factors: vec![ManifoldSpec::Interval(Interval::new(0.0, length)), ManifoldSpec::Circle { radius }],
        };
        let product = spectrum_of(&spec, cutoff, Convention::Drift, &PruferOptions::default()).unwrap();
        let p = HeatSeries::trace(&product, 2).evaluate(t).unwrap().value;
        let a = HeatSeries::trace(&interval_spectrum_below(length, cutoff), 1).evaluate(t).unwrap().value;
        let b = HeatSeries::trace(&circle_spectrum(radius, cutoff), 1).evaluate(t).unwrap().value;
        prop_assert!((p - a * b).abs() <= 1e-10 * (a * b));
    }

    #[test]
    fn unimodular_change_of_basis_keeps_dual_norms(
        a in 1i64..6,
        b in -3i64..4,
        extra in 1i64..6,
        steps in proptest::collection::vec((0usize..3, -2i64..3), 1..5),
    ) {
        let c = (b * b) / a + extra;
        let g = ExactGram::from_integers(&[vec![a, b], vec![b, c]]);
        let u = unimodular(&steps);
        let radius = BigRational::from_integer(BigInt::from(12));
        let before = dual_norms_exact(&g, &radius).unwrap();
        let after = dual_norms_exact(&g.transformed(&u), &radius).unwrap();
        prop_assert!(!before.is_empty());
        prop_assert_eq!(before, after);
    }

    #[test]
    fn torus_spectrum_counts_are_basis_free(
        steps in proptest::collection::vec((0usize..3, -2i64..3), 1..4),
    ) {
        let g = ExactGram::from_integers(&[vec![2, 1], vec![1, 3]]);
        let moved = g.transformed(&unimodular(&steps));
        let cutoff = 60.0 * 4.0 * PI * PI;
        let x = torus_spectrum::<f64>(&g.to_f64(), cutoff).unwrap();
        let y = torus_spectrum::<f64>(&moved.to_f64(), cutoff).unwrap();
        prop_assert_eq!(x.multiplicities(), y.multiplicities());
        for (p, q) in x.values().iter().zip(y.values()) {
            prop_assert!((p - q).abs() <= 1e-9 * p.abs().max(1.0));
        }
    }

    #[test]
    fn tangential_rotation_preserves_invariants(
        c in -0.8f64..0.8,
        y1 in 0.0f64..1.0,
        y2 in 0.0f64..1.0,
        angle in 0.0f64..(2.0 * PI),
        top in proptest::bool::ANY,
    ) {
        let gram = vec![vec![1.0, 0.3], vec![0.3, 2.0]];
        let p = PatchMetric::warped(Interval::new(0.0, 1.0), &bump(c, 1.0), &gram).unwrap();
        let s = sample_point(&p, &[y1, y2, if top { 1.0 } else { 0.0 }]).unwrap();
        let (co, si) = (angle.cos(), angle.sin());
        let r = s.rotated_tangential(&[vec![co, -si], vec![si, co]]);
        let (b, rb) = (s.boundary.clone().unwrap(), r.boundary.clone().unwrap());
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * x.abs().max(1.0);
        prop_assert!(close(s.tau, r.tau));
        prop_assert!(close(s.riemann_squared(), r.riemann_squared()));
        prop_assert!(close(s.ricci_squared(), r.ricci_squared()));
        prop_assert!(close(b.l_aa, rb.l_aa));
        prop_assert!(close(b.l_ab_l_ab, rb.l_ab_l_ab));
        prop_assert!(close(b.l_cubed_trace(), rb.l_cubed_trace()));
        prop_assert!(close(b.r_ambm_l_ab(), rb.r_ambm_l_ab()));
        prop_assert!(close(b.r_amam, rb.r_amam));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn warped_content_is_monotone_and_below_volume(c in -0.4f64..0.4, radius in 0.5f64..2.0) {
        let spec = ManifoldSpec::warped(Interval::new(0.0, PI), bump(c, PI), ManifoldSpec::Circle { radius });
        let volume = geometry_summary(&spec).unwrap().volume;
        let ts = geometric_grid(0.05, 5.0, 6).unwrap();
        let content = values(&content_series(&spec, 100.0, Convention::Drift).unwrap(), &ts);
        prop_assert!(non_increasing(&content));
        prop_assert!(content.iter().all(|&b| b > 0.0 && b <= volume));
        let res = spectrum_of(&spec, 100.0, Convention::Drift, &PruferOptions::default()).unwrap();
        prop_assert!(non_increasing(&values(&HeatSeries::trace(&res, 2), &ts)));
    }
}
