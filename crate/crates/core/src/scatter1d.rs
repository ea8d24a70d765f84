//! One-dimensional potential scattering and Liouville–Green probes.
//!
//! The equation is (D_x² + V - λ²)ψ = 0, i.e. ψ'' = (V - λ²)ψ.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::ode::dopri45;
use crate::quad::{gauss_legendre_on, loglog_slope};

const I: C64 = C64::new(0.0, 1.0);
/// |V| below this counts as switched off.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;
pub const LOCAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub enum Smoothness {
    Smooth,
    /// Jumps allowed at the listed points; the integrator restarts there.
    Piecewise(Vec<f64>),
}

#[derive(Clone)]
pub struct Potential1D {
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    support_radius: f64,
    smoothness: Smoothness,
}

impl std::fmt::Debug for Potential1D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Potential1D")
            .field("support_radius", &self.support_radius)
            .field("smoothness", &self.smoothness)
            .finish_non_exhaustive()
    }
}

impl Potential1D {
    /// Checks |V| < 1e-12 on a sample of |x| ∈ [L, 2L + 10].
    pub fn new(v: impl Fn(f64) -> f64 + Send + Sync + 'static, support_radius: f64, smoothness: Smoothness) -> Result<Self> {
        if !(support_radius >= 0.0 && support_radius.is_finite()) {
            return Err(invalid("support_radius", "must be finite and non-negative"));
        }
        let outer = 2.0 * support_radius + 10.0;
        for k in 0..=400 {
            let x = support_radius + (outer - support_radius) * k as f64 / 400.0;
            for s in [x, -x] {
                let val = v(s);
                if !val.is_finite() {
                    return Err(invalid("V", format!("non-finite value at {s}")));
                }
                if s.abs() > support_radius && val.abs() >= SUPPORT_THRESHOLD {
                    return Err(invalid("support_radius", format!("|V({s})| = {:.3e} beyond the declared support", val.abs())));
                }
            }
        }
        if let Smoothness::Piecewise(b) = &smoothness {
            if b.iter().any(|p| !p.is_finite()) {
                return Err(invalid("breakpoints", "must be finite"));
            }
        }
        Ok(Self { eval: Arc::new(v), support_radius, smoothness })
    }

    /// Smallest L on a 1e-3 grid of [0, probe_max] with |V| < 1e-12 beyond it.
    pub fn detect(v: impl Fn(f64) -> f64 + Send + Sync + 'static, probe_max: f64, smoothness: Smoothness) -> Result<Self> {
        let steps = (probe_max * 1000.0).ceil() as usize;
        let mut last = 0.0;
        for k in 0..=steps {
            let x = k as f64 / 1000.0;
            if v(x).abs() >= SUPPORT_THRESHOLD || v(-x).abs() >= SUPPORT_THRESHOLD {
                last = x + 1e-3;
            }
        }
        Self::new(v, last, smoothness)
    }

    pub fn zero() -> Self {
        Self { eval: Arc::new(|_| 0.0), support_radius: 0.0, smoothness: Smoothness::Smooth }
    }

    /// V₀ on |x| < width/2.
    pub fn square_barrier(height: f64, width: f64) -> Result<Self> {
        if !(width > 0.0 && height.is_finite()) {
            return Err(invalid("width", "must be positive"));
        }
        let half = width / 2.0;
        Self::new(
            move |x| if x.abs() < half { height } else { 0.0 },
            half,
            Smoothness::Piecewise(vec![-half, half]),
        )
    }

    /// h·exp(1 - 1/(1 - (x - c)²/w²)) on |x - c| < w.
    pub fn smooth_bump(height: f64, centre: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(invalid("width", "must be positive"));
        }
        Self::new(move |x| bump(height, centre, width, x), centre.abs() + width, Smoothness::Smooth)
    }

    /// Sum of smooth bumps (height, centre, width).
    pub fn bumps(list: &[(f64, f64, f64)]) -> Result<Self> {
        let list = list.to_vec();
        let reach = list.iter().map(|(_, c, w)| c.abs() + w).fold(0.0, f64::max);
        Self::new(move |x| list.iter().map(|(h, c, w)| bump(*h, *c, *w, x)).sum(), reach, Smoothness::Smooth)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn smoothness(&self) -> &Smoothness {
        &self.smoothness
    }
}

fn bump(h: f64, c: f64, w: f64, x: f64) -> f64 {
    let s = (x - c) / w;
    if s.abs() >= 1.0 {
        0.0
    } else {
        h * (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterCoeffs {
    pub lambda: f64,
    pub r: C64,
    pub t: C64,
    pub unitarity_defect: f64,
}

impl ScatterCoeffs {
    pub fn new(lambda: f64, r: C64, t: C64) -> Self {
        Self { lambda, r, t, unitarity_defect: (r.norm_sqr() + t.norm_sqr() - 1.0).abs() }
    }
}

/// Closed-form (r, t) for the square barrier of `height` on |x| < width/2.
pub fn square_barrier_coefficients(height: f64, width: f64, lambda: f64) -> Result<ScatterCoeffs> {
    if !(width > 0.0 && height.is_finite() && lambda > 0.0) {
        return Err(invalid("lambda", "needs width > 0 and lambda > 0"));
    }
    let k = lambda;
    let q = C64::new(k * k - height, 0.0).sqrt();
    // sin(qw)/q stays finite as q → 0
    let s = if q.norm() < 1e-8 { C64::new(width, 0.0) } else { (q * width).sin() / q };
    let c = (q * width).cos();
    let t = C64::from_polar(1.0, -k * width) / (c - I * (k * k + q * q) * s / (2.0 * k));
    let r = I * s * (q * q - k * k) / (2.0 * k) * t;
    Ok(ScatterCoeffs::new(lambda, r, t))
}

/// Samples (x, ψ, ψ') along the integration path, ordered from +L to -L.
#[derive(Clone, Debug, Default)]
pub struct SolutionPath {
    pub xs: Vec<f64>,
    pub psi: Vec<C64>,
    pub dpsi: Vec<C64>,
}

/// ψ with ψ = t e^{iλx} on x ≥ L and e^{iλx} + r e^{-iλx} on x ≤ -L.
pub fn solve_scatter(v: &Potential1D, lambda: f64) -> Result<ScatterCoeffs> {
    solve_scatter_path(v, lambda).map(|(c, _)| c)
}

pub fn solve_scatter_path(v: &Potential1D, lambda: f64) -> Result<(ScatterCoeffs, SolutionPath)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", "must be positive"));
    }
    let big_l = v.support_radius;
    let e = |x: f64| C64::from_polar(1.0, lambda * x);
    // unit transmitted wave; rescaled by t at the end
    let mut psi = e(big_l);
    let mut dpsi = I * lambda * e(big_l);
    let mut path = SolutionPath { xs: vec![big_l], psi: vec![psi], dpsi: vec![dpsi] };
    let mut cuts = vec![big_l];
    if let Smoothness::Piecewise(b) = &v.smoothness {
        let mut inner: Vec<f64> = b.iter().copied().filter(|p| p.abs() < big_l).collect();
        inner.sort_by(|a, b| b.partial_cmp(a).unwrap());
        cuts.extend(inner);
    }
    cuts.push(-big_l);
    let rhs = |x: f64, y: &[f64; 4]| -> [f64; 4] {
        let q = v.eval(x) - lambda * lambda;
        [y[2], y[3], q * y[0], q * y[1]]
    };
    for w in cuts.windows(2) {
        // evaluate V just inside each piece so jumps are seen from the correct side
        let (a, b) = (w[0], w[1]);
        if a == b {
            continue;
        }
        let pad = 1e-13 * (1.0 + a.abs());
        let inside = |x: f64, y: &[f64; 4]| rhs(x.clamp(b + pad, a - pad), y);
        let steps = dopri45(inside, a, [psi.re, psi.im, dpsi.re, dpsi.im], b, LOCAL_TOL)?;
        for (x, y) in steps.into_iter().skip(1) {
            path.xs.push(x);
            path.psi.push(C64::new(y[0], y[1]));
            path.dpsi.push(C64::new(y[2], y[3]));
        }
        psi = *path.psi.last().unwrap();
        dpsi = *path.dpsi.last().unwrap();
    }
    // split ψ(-L) into e^{iλx} and e^{-iλx} components
    let x0 = -big_l;
    let incoming = (psi + dpsi / (I * lambda)) / (e(x0) * 2.0);
    let reflected = (psi - dpsi / (I * lambda)) / (e(x0).conj() * 2.0);
    if incoming.norm() < 1e-300 {
        return Err(Error::Integrator("incident amplitude vanished".into()));
    }
    let t = C64::new(1.0, 0.0) / incoming;
    for (p, d) in path.psi.iter_mut().zip(path.dpsi.iter_mut()) {
        *p *= t;
        *d *= t;
    }
    Ok((ScatterCoeffs::new(lambda, reflected * t, t), path))
}

/// Coefficients over a λ ladder, one worker per value.
pub fn scatter_ladder(v: &Potential1D, lambdas: &[f64]) -> Result<Vec<ScatterCoeffs>> {
    std::thread::scope(|s| {
        let hs: Vec<_> = lambdas.iter().map(|&l| s.spawn(move || solve_scatter(v, l))).collect();
        hs.into_iter().map(|h| h.join().expect("scatter worker panicked")).collect()
    })
}

pub fn ladder_table(rows: &[ScatterCoeffs]) -> (Vec<String>, Vec<Vec<String>>) {
    use crate::report::fmt_f64;
    let header = ["lambda", "re_r", "im_r", "re_t", "im_t", "defect"].map(String::from).to_vec();
    let body = rows
        .iter()
        .map(|c| {
            [c.lambda, c.r.re, c.r.im, c.t.re, c.t.im, c.unitarity_defect]
                .iter()
                .map(|v| fmt_f64(*v))
                .collect()
        })
        .collect();
    (header, body)
}

/// J = ψ̄ψ' - ψψ̄'.
pub fn wronskian(psi: C64, dpsi: C64) -> C64 {
    psi.conj() * dpsi - psi * dpsi.conj()
}

/// max |J(x) - J(x₀)| over the samples.
pub fn wronskian_drift(path: &SolutionPath) -> f64 {
    let Some((p0, d0)) = path.psi.first().zip(path.dpsi.first()) else {
        return 0.0;
    };
    let j0 = wronskian(*p0, *d0);
    path.psi
        .iter()
        .zip(&path.dpsi)
        .map(|(p, d)| (wronskian(*p, *d) - j0).norm())
        .fold(0.0, f64::max)
}

/// Liouville–Green profile |x|^{-k/4}e^{φ} and its first two derivatives. Where εx^k < 0 the
/// phase is φ = ±iS(|x|) with S(s) = 2s^{(k+2)/2}/(k+2); elsewhere φ = -S(|x|) (decaying branch).
pub fn lg_profile(k: u32, eps: i8, branch: i8, x: f64) -> (C64, C64, C64) {
    let (log_u, d1, d2) = lg_log_derivatives(k, eps, branch, x);
    let u = log_u.exp();
    (u, u * d1, u * d2)
}

/// (log u, u'/u, u''/u) of the LG profile; the ratios stay finite where u underflows.
fn lg_log_derivatives(k: u32, eps: i8, branch: i8, x: f64) -> (C64, C64, C64) {
    let s = x.abs();
    let kf = k as f64;
    let a = kf / 4.0;
    let oscill = (eps as f64) * x.powi(k as i32) < 0.0;
    let big_s = 2.0 * s.powf((kf + 2.0) / 2.0) / (kf + 2.0);
    let sp = s.powf(kf / 2.0);
    let spp = kf / 2.0 * s.powf(kf / 2.0 - 1.0);
    let (phi, dphi, ddphi) = if oscill {
        let b = branch.signum() as f64;
        (I * (b * big_s), I * (b * sp), I * (b * spp))
    } else {
        (C64::new(-big_s, 0.0), C64::new(-sp, 0.0), C64::new(-spp, 0.0))
    };
    // derivatives in s, then d/dx = sign(x)·d/ds
    let log1 = dphi - a / s;
    let log2 = ddphi + a / (s * s);
    (phi - a * s.ln(), log1 * x.signum(), log1 * log1 + log2)
}

#[derive(Clone, Debug)]
pub struct LgReport {
    pub k: u32,
    pub eps: i8,
    pub lambda: C64,
    pub xs: Vec<f64>,
    /// |(D_x² + εx^k - λ)u| / |x^k u|.
    pub residuals: Vec<f64>,
    pub slope: f64,
    /// ∫_{10}^{X}|u|² at X = 10², 10³, 10⁴.
    pub tail_masses: [f64; 3],
    pub square_integrable: bool,
}

/// Residual of the leading LG profile on a log-spaced sample of `x_range`.
pub fn lg_profile_residual(k: u32, eps: i8, lambda: C64, x_range: (f64, f64), samples: usize) -> Result<LgReport> {
    if k == 0 {
        return Err(invalid("k", "must be positive"));
    }
    if eps != 1 && eps != -1 {
        return Err(invalid("eps", "must be +1 or -1"));
    }
    let (lo, hi) = x_range;
    if !(lo > 0.0 && hi > lo && lo.abs() >= 10.0 - 1e-12 && hi <= 1e3 + 1e-9) {
        return Err(invalid("x_range", "must lie in [10, 1000] with lo < hi"));
    }
    if samples < 3 {
        return Err(invalid("samples", "need at least three"));
    }
    let xs: Vec<f64> = (0..samples)
        .map(|i| lo * (hi / lo).powf(i as f64 / (samples - 1) as f64))
        .collect();
    let residuals: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let (_, _, ratio) = lg_log_derivatives(k, eps, 1, x);
            let xk = x.powi(k as i32);
            let res = -ratio + eps as f64 * xk - lambda;
            res.norm() / xk.abs()
        })
        .collect();
    let slope = loglog_slope(&xs, &residuals);
    let mut tail_masses = [0.0; 3];
    let mut acc = 0.0;
    let mut a: f64 = 10.0;
    for (slot, end) in tail_masses.iter_mut().zip([1e2, 1e3, 1e4]) {
        let panels = 64;
        let ratio: f64 = (end / a).powf(1.0 / panels as f64);
        let mut left = a;
        for _ in 0..panels {
            let right = left * ratio;
            acc += gauss_legendre_on(8, left, right)
                .into_iter()
                .map(|(x, w)| w * lg_profile(k, eps, 1, x).0.norm_sqr())
                .sum::<f64>();
            left = right;
        }
        *slot = acc;
        a = end;
    }
    // convergent tails add geometrically less per decade; x^{-1} adds a constant
    let d1 = tail_masses[1] - tail_masses[0];
    let d2 = tail_masses[2] - tail_masses[1];
    let square_integrable = d2 < 0.5 * d1;
    Ok(LgReport { k, eps, lambda, xs, residuals, slope, tail_masses, square_integrable })
}

/// [ū u' - ū' u] evaluated from -R to R.
pub fn boundary_term(u: impl Fn(f64) -> (C64, C64), radius: f64) -> C64 {
    let edge = |x: f64| {
        let (v, dv) = u(x);
        v.conj() * dv - dv.conj() * v
    };
    edge(radius) - edge(-radius)
}

/// Boundary term for D_x² + x³ with the decaying branch on the right and an oscillatory branch on the left.
pub fn symmetry_boundary_term(radius: f64) -> Result<C64> {
    if !(10.0..=1e3).contains(&radius) {
        return Err(invalid("R", "must lie in [10, 1000]"));
    }
    Ok(boundary_term(
        |x| {
            let (u, du, _) = lg_profile(3, 1, 1, x);
            (u, du)
        },
        radius,
    ))
}
