use num_complex::Complex64 as C64;
use proptest::prelude::*;

use scatcalc::flow::{from_interior, switch_axis, to_interior, Chart};
use scatcalc::grid::{forward, inverse, make_grid, GridField};
use scatcalc::helmholtz::{free_scattering_matrix, SphereDensity};
use scatcalc::report::fmt_f64;
use scatcalc::runner::{parse_config, Experiment};
use scatcalc::scatter1d::square_barrier_coefficients;
use scatcalc::symbol::{quantize, Symbol};

fn cfg() -> ProptestConfig {
    ProptestConfig { cases: 48, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn printed_floats_round_trip(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn barrier_conserves_flux(height in -5.0f64..8.0, width in 0.1f64..4.0, lambda in 0.05f64..6.0) {
        let c = square_barrier_coefficients(height, width, lambda).unwrap();
        prop_assert!(c.unitarity_defect < 1e-12, "{:?}", c);
    }

    #[test]
    fn spectral_transform_is_unitary_and_invertible(seed in any::<u64>(), dim in 1usize..=2) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let spec = make_grid(dim, 6.0, 16).unwrap();
        let values = (0..spec.len()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let u = GridField::new(spec, values).unwrap();
        let v = forward(&u).unwrap();
        prop_assert!((v.l2_norm() - u.l2_norm()).abs() < 1e-12 * u.l2_norm());
        let back = inverse(&v).unwrap();
        let err = back.values.iter().zip(&u.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-13);
    }

    #[test]
    fn multiplication_symbols_quantize_to_diagonals(a in -2.0f64..2.0, b in -1.0f64..1.0) {
        let spec = make_grid(1, 5.0, 32).unwrap();
        let sym = Symbol::new(1, (0.0, 0.0), move |x, _| C64::new(a + b * (x[0] / 3.0).tanh(), 0.0));
        let op = quantize(&sym, &spec).unwrap();
        let u = GridField::from_fn(spec, |x| C64::new((-x[0] * x[0]).exp(), x[0]));
        let got = op.apply(&u).unwrap();
        let pts = spec.points();
        for (j, p) in pts.iter().enumerate() {
            let want = u.values[j] * (a + b * (p[0] / 3.0).tanh());
            prop_assert!((got.values[j] - want).norm() < 1e-11);
        }
    }

    #[test]
    fn chart_switching_round_trips(y in prop::collection::vec(-0.9f64..0.9, 2), xi in prop::collection::vec(-3.0f64..3.0, 3), rho in 0.01f64..0.5) {
        let mut coords = vec![rho];
        coords.extend(&y);
        coords.extend(&xi);
        let p = scatcalc::flow::PhasePointChart::new(Chart::SpatialFace { axis: 0, sign: 1 }, coords.clone()).unwrap();
        let q = switch_axis(&switch_axis(&p, 2).unwrap(), 0).unwrap();
        for (a, b) in q.coords.iter().zip(&coords) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        // and both charts name the same interior point
        let (x1, _) = to_interior(&p).unwrap();
        let (x2, _) = to_interior(&switch_axis(&p, 1).unwrap()).unwrap();
        for (a, b) in x1.iter().zip(&x2) {
            prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
        let back = from_interior(Chart::SpatialFace { axis: 0, sign: 1 }, &x1, &xi).unwrap();
        prop_assert!((back.coords[0] - rho).abs() < 1e-12);
    }

    #[test]
    fn scattering_matrix_preserves_norm(coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6), lambda in 0.2f64..4.0) {
        let terms: Vec<(usize, i64, C64)> = coeffs
            .iter()
            .enumerate()
            .map(|(k, (re, im))| {
                let l = k.div_ceil(2);
                let m = if k % 2 == 1 { l as i64 } else { -(l as i64) };
                (l, m, C64::new(*re, *im))
            })
            .collect();
        let f = SphereDensity::harmonics(2, &terms).unwrap();
        prop_assume!(f.norm() > 1e-3);
        let s = free_scattering_matrix(lambda, &f).unwrap();
        prop_assert!((s.norm() - f.norm()).abs() < 1e-10 * f.norm());
    }

    #[test]
    fn config_echo_round_trips(lambda in 0.1f64..5.0, seed in any::<u64>(), densities in 1usize..40) {
        let text = format!(r#"{{"lambda": {lambda}, "seed": {seed}, "densities": {densities}}}"#);
        let c = parse_config(&text, Experiment::Pairing).unwrap();
        let again = parse_config(&c.echo().to_string(), Experiment::Pairing).unwrap();
        prop_assert_eq!(c, again);
    }
}
