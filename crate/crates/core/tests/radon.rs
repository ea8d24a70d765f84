use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scatcalc::grid::make_grid;
use scatcalc::quad::gauss_legendre_on;
use scatcalc::radon::*;

fn random_bumps(rng: &mut ChaCha8Rng) -> impl Fn(&[f64]) -> C64 + Sync {
    let bumps: Vec<([f64; 2], f64, C64)> = (0..3)
        .map(|_| {
            let c = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let s = rng.gen_range(0.5..0.7);
            let a = C64::new(rng.gen_range(0.5..1.5), rng.gen_range(-0.5..0.5));
            (c, s, a)
        })
        .collect();
    move |p: &[f64]| {
        bumps
            .iter()
            .map(|(c, s, a)| {
                let r2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                a * (-r2 / (2.0 * s * s)).exp()
            })
            .sum()
    }
}

#[test]
fn adjointness_on_random_pairs() {
    let phi = LocalizerProfile::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let f = random_bumps(&mut rng);
        let grid = make_grid(2, 4.5, 24).unwrap();
        let dirs: Vec<(Vec<f64>, f64)> = direction_grid(2).unwrap().into_iter().step_by(2).map(|(d, w)| (d, 2.0 * w)).collect();
        let len = grid.len() * dirs.len();
        let values = (0..len).map(|_| C64::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))).collect();
        let v = RayData::new(grid, dirs, values).unwrap();
        let rep = adjointness_check(&f, &v, &phi).unwrap();
        worst = worst.max(rep.relative_gap);
    }
    assert!(worst < 1e-6, "worst gap {worst:e}");
}

#[test]
fn gaussian_line_integral_matches_one_dimensional_oracle() {
    let phi = LocalizerProfile::standard();
    let f = |p: &[f64]| C64::new((-p.iter().map(|v| v * v).sum::<f64>()).exp(), 0.0);
    // z = 0: ∫ e^{-t²} φ(t) dt independently of ω, by composite Gauss on [-2, 2]
    let oracle: f64 = (0..64)
        .flat_map(|k| gauss_legendre_on(10, -2.0 + k as f64 / 16.0, -2.0 + (k + 1) as f64 / 16.0))
        .map(|(t, w)| w * (-t * t).exp() * phi.phi(t))
        .sum();
    for omega in [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.48, 0.6, 0.64]] {
        let v = xray_transform(&f, &[0.0; 3], &omega, &phi).unwrap();
        assert!((v.re - oracle).abs() < 1e-10 && v.im == 0.0, "{v} {oracle}");
    }
}

#[test]
fn constant_data_backprojects_to_constant() {
    let phi = LocalizerProfile::standard();
    let grid = make_grid(2, 8.0, 32).unwrap();
    let v = RayData::from_fn(grid, direction_grid(2).unwrap(), |_, _| C64::new(1.0, 0.0)).unwrap();
    let lv = backproject(&v, &phi);
    let expected = phi.integral() * 2.0 * std::f64::consts::PI;
    for y in [[0.0, 0.0], [1.5, -2.0], [-3.0, 0.5]] {
        let got = lv.eval(&y).unwrap();
        assert!((got.re - expected).abs() < 1e-7 * expected, "{got} {expected}");
    }
    assert!(lv.eval(&[9.0, 0.0]).is_err());
}

#[test]
fn concentrated_data_stays_in_a_tube() {
    let phi = LocalizerProfile::standard();
    let grid = make_grid(2, 8.0, 32).unwrap();
    let dirs = vec![(vec![1.0, 0.0], 1.0)];
    let v = RayData::from_fn(grid, dirs, |p, _| {
        C64::new(if p[0].abs() < 1e-9 && p[1].abs() < 1e-9 { 1.0 } else { 0.0 }, 0.0)
    })
    .unwrap();
    let lv = backproject(&v, &phi);
    assert!(lv.eval(&[1.0, 0.0]).unwrap().norm() > 1e-3);
    assert!(lv.eval(&[0.0, 4.0]).unwrap().norm() < 1e-12);
    assert!(lv.eval(&[7.5, 0.0]).unwrap().norm() < 1e-12);
}

fn log_ladder(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64)).collect()
}

#[test]
fn kernel_symbol_is_positive_with_inverse_frequency_tail() {
    let phi = LocalizerProfile::standard();
    for n in [2, 3] {
        let tab = normal_kernel_symbol(n, &phi, &log_ladder(0.1, 100.0, 31)).unwrap();
        assert!(tab.min_value() > 0.0);
        let v = tab.top_decade_variation();
        assert!(v < 0.05, "n={n} variation {v}");
        assert!((tab.rows[0].value - tab.dc).abs() < 0.01 * tab.dc);
    }
}

#[test]
fn cone_floor_depends_on_dimension() {
    let phi = LocalizerProfile::standard();
    let mags = [1.0, 4.0, 16.0];
    let three = cone_ellipticity_check(3, &ConeCutoff::bump(0.3).unwrap(), &phi, &mags).unwrap();
    assert!(three.floors.iter().all(|f| *f > 0.0));
    assert!(three.margin > 1e-2, "{three:?}");
    let two = cone_ellipticity_check(2, &ConeCutoff::bump(0.3).unwrap(), &phi, &mags).unwrap();
    assert!(two.margin < 1e-3, "{two:?}");
    let full = cone_ellipticity_check(3, &ConeCutoff::full(), &phi, &mags).unwrap();
    assert!((full.margin - 1.0).abs() < 1e-12);
}

#[test]
fn injectivity_in_two_dimensions() {
    let phi = LocalizerProfile::standard();
    let f0 = |p: &[f64]| (-(p[0] * p[0] + 2.0 * p[1] * p[1])).exp() * (1.0 + 0.3 * p[0]);
    let rep = injectivity_probe(2, 20, 4.0, &phi, None, &f0).unwrap();
    assert!(!rep.singular && rep.sigma_min > 0.0);
    let ratio = rep.sigma_min_refined / rep.sigma_min;
    assert!((0.7..1.3).contains(&ratio), "{rep:?}");
    assert!(rep.reconstruction_error < 1e-3, "{rep:?}");
    let zero = injectivity_probe(2, 8, 4.0, &phi, None, &|_| 0.0).unwrap();
    assert_eq!(zero.reconstruction_error, 0.0);
}

#[test]
fn injectivity_survives_the_cone_in_three_dimensions() {
    let phi = LocalizerProfile::standard();
    let chi = ConeCutoff::bump(0.3).unwrap();
    let f0 = |p: &[f64]| (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])).exp();
    let rep = injectivity_probe(3, 8, 3.0, &phi, Some(&chi), &f0).unwrap();
    assert!(!rep.singular && rep.sigma_min > 0.0, "{rep:?}");
    let ratio = rep.sigma_min_refined / rep.sigma_min;
    assert!((0.7..1.3).contains(&ratio), "{rep:?}");
    assert!(rep.reconstruction_error < 1e-3, "{rep:?}");
}
