use num_complex::Complex64 as C64;
use scatcalc::helmholtz::{threshold_scan, MassRegime, SphereDensity};

#[test]
fn mass_ratio_over_the_last_doubling_separates_regimes() {
    let f = SphereDensity::constant(2, C64::new(1.0, 0.0)).unwrap();
    let radii = [10.0, 20.0, 40.0, 80.0, 160.0];
    let scan = threshold_scan(&f, 1.0, &[-0.75, -0.5, 0.0], &radii).unwrap();
    let by = |r: f64| scan.rows.iter().find(|row| row.r_order == r).unwrap();
    let bounded = by(-0.75);
    assert_eq!(bounded.regime, MassRegime::Bounded);
    assert!(bounded.ratio < 1.05, "{}", bounded.ratio);
    // R^{2r+1} growth doubles the mass per doubling of R at r = 0
    let growth = by(0.0);
    assert!((growth.ratio - 2.0).abs() < 0.05, "{}", growth.ratio);
    // logarithmic growth sits strictly between the two
    let log = by(-0.5);
    assert!(log.ratio > bounded.ratio && log.ratio < growth.ratio);
    assert!(bounded.masses.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn scan_rejects_short_radius_ranges() {
    let f = SphereDensity::constant(2, C64::new(1.0, 0.0)).unwrap();
    assert!(threshold_scan(&f, 1.0, &[0.0], &[10.0, 20.0, 40.0]).is_err());
    assert!(threshold_scan(&f, 1.0, &[0.0], &[10.0, 100.0]).is_err());
}
