use scatcalc::scatter1d::*;
use scatcalc::Complex64 as C;

type M2 = [[C; 2]; 2];

fn mul(a: M2, b: M2) -> M2 {
    let mut o = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            o[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    o
}

fn inv(a: M2) -> M2 {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
}

/// Plane-wave matrix: column amplitudes (A, B) of A e^{ikx} + B e^{-ikx} to (ψ, ψ').
fn waves(k: C, x: f64) -> M2 {
    let i = C::new(0.0, 1.0);
    let e = (i * k * x).exp();
    let f = (-i * k * x).exp();
    [[e, f], [i * k * e, -i * k * f]]
}

/// Piecewise-exponential matching across a square barrier.
fn barrier_oracle(height: f64, width: f64, lambda: f64) -> (C, C) {
    let k = C::new(lambda, 0.0);
    let q = C::new(lambda * lambda - height, 0.0).sqrt();
    let h = width / 2.0;
    let left = mul(inv(waves(q, -h)), waves(k, -h));
    let right = mul(inv(waves(k, h)), waves(q, h));
    let t = mul(right, left);
    let r = -t[1][0] / t[1][1];
    (r, t[0][0] + t[0][1] * r)
}

#[test]
fn square_barrier_matches_matching_oracle() {
    let v = Potential1D::square_barrier(2.0, 1.5).unwrap();
    let ladder: Vec<f64> = (1..=10).map(|k| 0.4 * k as f64).collect();
    for c in scatter_ladder(&v, &ladder).unwrap() {
        let (r, t) = barrier_oracle(2.0, 1.5, c.lambda);
        assert!((c.r - r).norm() < 1e-6, "{} {} {}", c.lambda, c.r, r);
        assert!((c.t - t).norm() < 1e-6);
        assert!(c.unitarity_defect < 1e-6);
    }
}

#[test]
fn wronskian_is_conserved_on_solver_paths() {
    let v = Potential1D::bumps(&[(3.0, 0.0, 1.2), (-1.0, 2.0, 0.5)]).unwrap();
    for lam in [0.3, 1.0, 4.0] {
        let (_, path) = solve_scatter_path(&v, lam).unwrap();
        assert!(wronskian_drift(&path) < 1e-8);
    }
}

#[test]
fn high_energy_transparency() {
    let v = Potential1D::smooth_bump(1.0, 0.0, 1.0).unwrap();
    let ladder = [1.0, 2.0, 4.0, 8.0];
    let cs = scatter_ladder(&v, &ladder).unwrap();
    for w in cs.windows(2) {
        assert!(w[1].r.norm() < w[0].r.norm());
        assert!((w[1].t.norm() - 1.0).abs() < (w[0].t.norm() - 1.0).abs());
    }
}

#[test]
fn lg_residuals_decay_for_both_signs() {
    for k in 3..=6 {
        for eps in [1i8, -1] {
            let rep = lg_profile_residual(k, eps, C::new(0.0, 1.0), (10.0, 100.0), 9).unwrap();
            assert!(rep.slope <= -0.9, "{k} {eps} {}", rep.slope);
        }
    }
}

#[test]
fn square_integrability_dichotomy() {
    let k2 = lg_profile_residual(2, -1, C::new(1.0, 0.0), (10.0, 100.0), 5).unwrap();
    assert!(!k2.square_integrable);
    // |u|² = x^{-1}: each decade adds ln 10
    let per_decade = k2.tail_masses[2] - k2.tail_masses[1];
    assert!((per_decade - 10f64.ln()).abs() < 1e-8);
    for k in 3..=6 {
        let rep = lg_profile_residual(k, -1, C::new(1.0, 0.0), (10.0, 100.0), 5).unwrap();
        assert!(rep.square_integrable);
        // ∫_{10}^{∞} x^{-k/2} dx = 10^{1-k/2}/(k/2 - 1)
        let e = k as f64 / 2.0;
        let limit = 10f64.powf(1.0 - e) / (e - 1.0);
        assert!(rep.tail_masses[2] < limit && rep.tail_masses[2] > 0.8 * limit);
    }
}

#[test]
fn boundary_term_persists_for_cubic_potential() {
    let terms: Vec<f64> = [50.0, 100.0, 200.0].iter().map(|&r| symmetry_boundary_term(r).unwrap().norm()).collect();
    let lo = terms.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = terms.iter().cloned().fold(0.0, f64::max);
    assert!(lo > 1.0, "{terms:?}");
    assert!((hi - lo) / lo < 0.5);
    // a Gaussian has no term at infinity
    let g = |x: f64| (C::new((-x * x).exp(), 0.0), C::new(-2.0 * x * (-x * x).exp(), 0.0));
    assert!(boundary_term(g, 20.0).norm() < 1e-100);
}

#[test]
fn closed_form_barrier_agrees_with_matching() {
    for (height, width) in [(2.0, 1.5), (-1.0, 0.7), (4.0, 0.5)] {
        for lambda in [0.3, 1.0, 1.9, 3.7] {
            let c = square_barrier_coefficients(height, width, lambda).unwrap();
            let (r, t) = barrier_oracle(height, width, lambda);
            assert!((c.r - r).norm() < 1e-12 && (c.t - t).norm() < 1e-12, "{height} {lambda} {} {r}", c.r);
        }
    }
    // at λ² = V the matching oracle degenerates; the closed form stays continuous
    let at = square_barrier_coefficients(2.0, 1.5, 2f64.sqrt()).unwrap();
    let near = square_barrier_coefficients(2.0, 1.5, 2f64.sqrt() + 1e-7).unwrap();
    assert!((at.t - near.t).norm() < 1e-6 && at.unitarity_defect < 1e-14);
}
