//! Commutant symbols for propagation and radial estimates.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{chart_field, Chart, PhasePointChart, SymbolHamiltonian};
use crate::error::{invalid, Error, Result};
use crate::quad::smooth_step;
use crate::symbol::Symbol;

/// e^{−ϝ/t} for t > 0, else 0.
pub(crate) fn chi0(t: f64, digamma: f64) -> f64 {
    if t > 0.0 {
        (-digamma / t).exp()
    } else {
        0.0
    }
}

/// Derivative of the smooth step built from e^{−1/t}.
pub(crate) fn smooth_step_deriv(t: f64) -> f64 {
    let f = |s: f64| chi0(s, 1.0);
    let df = |s: f64| if s > 0.0 { f(s) / (s * s) } else { 0.0 };
    let (a, b) = (f(t), f(1.0 - t));
    if a + b == 0.0 {
        return 0.0;
    }
    (df(t) * b + a * df(1.0 - t)) / ((a + b) * (a + b))
}

/// Central difference along one coordinate, Richardson-extrapolated twice.
fn richardson_derivative(f: &dyn Fn(f64) -> f64, z: f64, h: f64) -> f64 {
    let d = |s: f64| (f(z + s) - f(z - s)) / (2.0 * s);
    let (d1, d2, d4) = (d(h), d(h / 2.0), d(h / 4.0));
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d4 - d2) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

pub type P1Fn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Parameters of the propagation commutant for D_{x₁} on R².
#[derive(Clone)]
pub struct CommutantRequest {
    /// Length of the controlled bicharacteristic segment.
    pub s0: f64,
    pub eps: f64,
    /// ϝ; `None` picks 10× the competing terms and escalates if needed.
    pub digamma: Option<f64>,
    /// Sobolev orders (s, r) of the estimate.
    pub orders: (f64, f64),
    /// iσ(P* − P); zero when absent.
    pub p1: Option<P1Fn>,
    /// Frequency the segment is localized at.
    pub xi_centre: [f64; 2],
}

impl std::fmt::Debug for CommutantRequest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CommutantRequest")
            .field("s0", &self.s0)
            .field("eps", &self.eps)
            .field("digamma", &self.digamma)
            .field("orders", &self.orders)
            .field("p1", &self.p1.is_some())
            .finish()
    }
}

impl Default for CommutantRequest {
    fn default() -> Self {
        Self { s0: 1.0, eps: 0.25, digamma: None, orders: (0.0, 0.0), p1: None, xi_centre: [1.0, 0.0] }
    }
}

#[derive(Clone, Debug)]
pub struct CommutantBundle {
    pub a: Symbol,
    pub b: Symbol,
    pub e_prime: Symbol,
    pub g: Symbol,
    pub digamma: f64,
    pub s0: f64,
    pub eps: f64,
    pub orders: (f64, f64),
    /// sup |H_p a + p₁a + b² + ⟨ξ⟩^{2s}⟨x⟩^{2r}a₀² − e′| over the chart grid,
    /// where a = ⟨ξ⟩^{2s}⟨x⟩^{2r}a₀.
    pub residual_sup: f64,
    /// Smallest argument of the square root in b over the support.
    pub sqrt_margin: f64,
    /// e′ vanishes outside |z₁| ≤ ε on the grid.
    pub e_support_ok: bool,
    pub escalations: usize,
}

struct Pieces {
    s0: f64,
    eps: f64,
    digamma: f64,
    orders: (f64, f64),
    p1: Option<P1Fn>,
    centre: [f64; 2],
}

impl Pieces {
    fn zprime(&self, x: &[f64], xi: &[f64]) -> f64 {
        let (a, b, c) = (x[1], xi[0] - self.centre[0], xi[1] - self.centre[1]);
        (a * a + b * b + c * c).sqrt()
    }
    fn psi(&self, x: &[f64], xi: &[f64]) -> f64 {
        smooth_step((2.0 * self.eps - self.zprime(x, xi)) / self.eps)
    }
    fn turn_on(&self, z1: f64) -> f64 {
        smooth_step((z1 + self.eps) / (2.0 * self.eps))
    }
    fn turn_on_deriv(&self, z1: f64) -> f64 {
        smooth_step_deriv((z1 + self.eps) / (2.0 * self.eps)) / (2.0 * self.eps)
    }
    fn gap(&self, z1: f64) -> f64 {
        self.s0 + self.eps - z1
    }
    fn turn_off(&self, z1: f64) -> f64 {
        chi0(self.gap(z1), self.digamma)
    }
    fn weight(&self, x: &[f64], xi: &[f64]) -> f64 {
        let (s, r) = self.orders;
        let jx = 1.0 + x[0] * x[0] + x[1] * x[1];
        let jq = 1.0 + xi[0] * xi[0] + xi[1] * xi[1];
        jq.powf(s) * jx.powf(r)
    }
    fn p1(&self, x: &[f64], xi: &[f64]) -> f64 {
        self.p1.as_ref().map_or(0.0, |f| f(x, xi))
    }
    /// p₁ + W⁻¹H_pW with W = ⟨ξ⟩^{2s}⟨x⟩^{2r} and H_p = ∂_{x₁}.
    fn p1_eff(&self, x: &[f64], xi: &[f64]) -> f64 {
        let r = self.orders.1;
        self.p1(x, xi) + 2.0 * r * x[0] / (1.0 + x[0] * x[0] + x[1] * x[1])
    }
    fn a0(&self, x: &[f64], xi: &[f64]) -> f64 {
        let c1 = self.turn_on(x[0]);
        let ps = self.psi(x, xi);
        self.turn_off(x[0]) * c1 * c1 * ps * ps
    }
    fn sqrt_arg(&self, x: &[f64], xi: &[f64]) -> f64 {
        let t = self.gap(x[0]);
        let c1 = self.turn_on(x[0]);
        let ps = self.psi(x, xi);
        self.digamma - t * t * (self.p1_eff(x, xi) + self.turn_off(x[0]) * c1 * c1 * ps * ps)
    }
    fn b0(&self, x: &[f64], xi: &[f64]) -> f64 {
        let t = self.gap(x[0]);
        if t <= 0.0 {
            return 0.0;
        }
        let lead = (chi0(t, self.digamma) / (t * t)).sqrt() * self.turn_on(x[0]) * self.psi(x, xi);
        if lead == 0.0 {
            return 0.0;
        }
        lead * self.sqrt_arg(x, xi).max(0.0).sqrt()
    }
    fn e0(&self, x: &[f64], xi: &[f64]) -> f64 {
        let ps = self.psi(x, xi);
        2.0 * self.turn_on(x[0]) * self.turn_on_deriv(x[0]) * self.turn_off(x[0]) * ps * ps
    }
    fn g(&self, x: &[f64], xi: &[f64]) -> f64 {
        let e = self.eps;
        smooth_step((3.0 * e - self.zprime(x, xi)) / e)
            * smooth_step((x[0] + 2.0 * e) / e)
            * smooth_step((self.s0 + 3.0 * e - x[0]) / e)
    }
    fn in_support(&self, x: &[f64], xi: &[f64]) -> bool {
        x[0] >= -self.eps && x[0] <= self.s0 + self.eps && self.zprime(x, xi) <= 2.0 * self.eps
    }
}

fn chart_grid(p: &Pieces) -> Vec<([f64; 2], [f64; 2])> {
    let e = p.eps;
    let lin = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    };
    let mut out = Vec::new();
    for z1 in lin(-2.0 * e - 0.1, p.s0 + 2.0 * e + 0.1, 41) {
        for x2 in lin(-3.0 * e, 3.0 * e, 9) {
            for q1 in lin(p.centre[0] - 3.0 * e, p.centre[0] + 3.0 * e, 5) {
                for q2 in lin(p.centre[1] - 3.0 * e, p.centre[1] + 3.0 * e, 5) {
                    out.push(([z1, x2], [q1, q2]));
                }
            }
        }
    }
    out
}

fn sqrt_margin(p: &Pieces, grid: &[([f64; 2], [f64; 2])]) -> f64 {
    grid.iter()
        .filter(|(x, xi)| p.in_support(x, xi))
        .map(|(x, xi)| p.sqrt_arg(x, xi))
        .fold(f64::INFINITY, f64::min)
}

/// Builds a, b, e′, g with H_p a + p₁a = −b² − a² + e′ for P = D_{x₁} on R²,
/// the bicharacteristic segment being x₁ ∈ [0, s₀] through x₂ = 0 at the
/// requested frequency.
pub fn build_propagation_commutant(req: &CommutantRequest) -> Result<CommutantBundle> {
    if !(req.s0 > 0.0 && req.eps > 0.0 && req.eps <= 0.5 * req.s0) {
        return Err(invalid("eps", "need s0 > 0 and 0 < eps <= s0/2"));
    }
    let mut pieces = Pieces {
        s0: req.s0,
        eps: req.eps,
        digamma: 1.0,
        orders: req.orders,
        p1: req.p1.clone(),
        centre: req.xi_centre,
    };
    let grid = chart_grid(&pieces);
    let mut escalations = 0;
    match req.digamma {
        Some(f) => {
            if !(f > 0.0 && f.is_finite()) {
                return Err(invalid("digamma", "must be positive"));
            }
            pieces.digamma = f;
            let m = sqrt_margin(&pieces, &grid);
            if m < 1e-6 {
                return Err(Error::SqrtArgument(format!(
                    "argument of the square root in b reaches {m:.3e} on the support; increase digamma"
                )));
            }
        }
        None => {
            let competing = grid
                .iter()
                .filter(|(x, xi)| pieces.in_support(x, xi))
                .map(|(x, xi)| {
                    let t = pieces.gap(x[0]);
                    t * t * (pieces.p1_eff(x, xi).abs() + 1.0)
                })
                .fold(0.0f64, f64::max);
            pieces.digamma = 10.0 * competing;
            while sqrt_margin(&pieces, &grid) < 1e-6 {
                if escalations == 3 {
                    return Err(Error::SqrtArgument("digamma escalation exhausted; increase digamma".into()));
                }
                pieces.digamma *= 4.0;
                escalations += 1;
            }
        }
    }
    let margin = sqrt_margin(&pieces, &grid);

    let mut residual: f64 = 0.0;
    let mut e_support_ok = true;
    for (x, xi) in &grid {
        let a_of = |z1: f64| pieces.weight(&[z1, x[1]], xi) * pieces.a0(&[z1, x[1]], xi);
        let hpa = richardson_derivative(&a_of, x[0], 1e-3);
        let w = pieces.weight(x, xi);
        let a0 = pieces.a0(x, xi);
        let b0 = pieces.b0(x, xi);
        let e0 = pieces.e0(x, xi);
        let lhs = hpa + pieces.p1(x, xi) * w * a0;
        let rhs = -w * b0 * b0 - w * a0 * a0 + w * e0;
        residual = residual.max((lhs - rhs).abs());
        if x[0].abs() > req.eps && e0 != 0.0 {
            e_support_ok = false;
        }
    }

    let shared = Arc::new(pieces);
    let sym = |f: fn(&Pieces, &[f64], &[f64]) -> f64, order: (f64, f64)| {
        let p = shared.clone();
        Symbol::new(2, order, move |x, xi| C64::new(f(&p, x, xi), 0.0))
    };
    let (s, r) = req.orders;
    Ok(CommutantBundle {
        a: sym(|p, x, xi| p.weight(x, xi) * p.a0(x, xi), (2.0 * s, 2.0 * r)),
        b: sym(|p, x, xi| p.weight(x, xi).sqrt() * p.b0(x, xi), (s, r)),
        e_prime: sym(|p, x, xi| p.weight(x, xi) * p.e0(x, xi), (2.0 * s, 2.0 * r)),
        g: sym(|p, x, xi| p.g(x, xi), (0.0, 0.0)),
        digamma: shared.digamma,
        s0: req.s0,
        eps: req.eps,
        orders: req.orders,
        residual_sup: residual,
        sqrt_margin: margin,
        e_support_ok,
        escalations,
    })
}

/// Outcome of the model propagation inequality on random fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheck {
    /// ⟨bu, u⟩ per field.
    pub lhs: Vec<f64>,
    /// 2⟨eu, u⟩ + 36‖f‖² per field.
    pub rhs: Vec<f64>,
    /// |⟨bu,u⟩ − ⟨eu,u⟩ − 2 Im⟨au, f⟩| relative to ⟨bu,u⟩, per field.
    pub identity_defect: Vec<f64>,
    pub all_pass: bool,
}

fn cutoff(t: f64, flat_lo: f64, flat_hi: f64) -> (f64, f64) {
    let (u, v) = (smooth_step(t - flat_lo + 1.0), smooth_step(flat_hi + 1.0 - t));
    let du = smooth_step_deriv(t - flat_lo + 1.0);
    let dv = -smooth_step_deriv(flat_hi + 1.0 - t);
    (u * v, du * v + u * dv)
}

/// The D_{x₁} model on R²: a = χ₁(x₁)χ₂(x₂)e^{−x₁}, ∂_{x₁}a = −b + e, checked
/// against ⟨bu,u⟩ ≤ 2⟨eu,u⟩ + 36‖D_{x₁}u‖² for seeded random smooth fields.
pub fn propagation_model_check(fields: usize, seed: u64, points_per_axis: usize) -> Result<ModelCheck> {
    let spec = crate::grid::make_grid(2, 8.0, points_per_axis)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h2 = spec.cell_volume();
    let pts = spec.points();
    let coeff: Vec<(f64, f64, f64)> = pts
        .iter()
        .map(|x| {
            let (c1, d1) = cutoff(x[0], -1.0, 2.0);
            let (c2, _) = cutoff(x[1], -1.0, 1.0);
            let ex = (-x[0]).exp();
            let a = c1 * c2 * ex;
            let tail = d1 * ex * c2;
            let b = a - if x[0] >= 0.0 { tail } else { 0.0 };
            let e = if x[0] <= 0.0 { tail } else { 0.0 };
            (a, b, e)
        })
        .collect();
    let mut out = ModelCheck { lhs: vec![], rhs: vec![], identity_defect: vec![], all_pass: true };
    for _ in 0..fields {
        let packets: Vec<[f64; 7]> = (0..3)
            .map(|_| {
                [
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(0.5..1.5),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect();
        let (mut bu, mut eu, mut ff, mut auf) = (0.0, 0.0, 0.0, C64::new(0.0, 0.0));
        for (x, (a, b, e)) in pts.iter().zip(&coeff) {
            let mut u = C64::new(0.0, 0.0);
            let mut du = C64::new(0.0, 0.0);
            for p in &packets {
                let (dx, dy) = (x[0] - p[0], x[1] - p[1]);
                let env = (-(dx * dx + dy * dy) / (2.0 * p[2] * p[2])).exp();
                let v = C64::new(p[5], p[6]) * C64::from_polar(env, p[3] * x[0] + p[4] * x[1]);
                u += v;
                du += v * C64::new(-dx / (p[2] * p[2]), p[3]);
            }
            // f = D_{x₁}u = −i ∂₁u
            let f = C64::new(0.0, -1.0) * du;
            bu += b * u.norm_sqr() * h2;
            eu += e * u.norm_sqr() * h2;
            ff += f.norm_sqr() * h2;
            auf += *a * u * f.conj() * h2;
        }
        let rhs = 2.0 * eu + 36.0 * ff;
        out.identity_defect.push((bu - eu - 2.0 * auf.im).abs() / bu.max(1e-300));
        out.all_pass &= bu <= rhs;
        out.lhs.push(bu);
        out.rhs.push(rhs);
    }
    Ok(out)
}

/// Pointwise check of the radial commutant identity at 𝓡_out for Helmholtz.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialCommutantReport {
    pub r: f64,
    pub delta: f64,
    pub digamma: f64,
    /// true for r < −1/2.
    pub below_threshold: bool,
    pub residual_sup: f64,
    /// min over a neighbourhood of 𝓡_out of |b|ρ^r.
    pub b_floor: f64,
    pub samples: usize,
}

/// Radial cutoff ψ(ϱ) = S(2 − 2ϱ/w) from e^{−ϝ/t}: 1 for ϱ ≤ w/2, 0 for ϱ ≥ w.
fn radial_cutoff(t: f64, width: f64, digamma: f64) -> (f64, f64) {
    let s = 2.0 - 2.0 * t / width;
    let f = |u: f64| chi0(u, digamma);
    let df = |u: f64| if u > 0.0 { digamma * f(u) / (u * u) } else { 0.0 };
    let (a, b) = (f(s), f(1.0 - s));
    if a + b == 0.0 {
        return (0.0, 0.0);
    }
    let val = a / (a + b);
    let ds = (df(s) * b + a * df(1.0 - s)) / ((a + b) * (a + b));
    (val, ds * (-2.0 / width))
}

/// Builds a = ρ^{−(2r+1)}φ(𝗉)²ψ(ϱ)², b, e, h in the x₁-dominant chart over
/// 𝓡_out (λ = 1, n = 2) and checks H_p a = ∓2δρ^{2r+2}a² ∓ b² + e² + h𝗉
/// pointwise, upper signs below threshold.
pub fn radial_commutant_check(r: f64, delta: f64, digamma: f64) -> Result<RadialCommutantReport> {
    if (2.0 * r + 1.0).abs() < 1e-12 {
        return Err(Error::Threshold(
            "r = -1/2: the factor 2r+1 vanishes and the commutant has no sign".into(),
        ));
    }
    if !(delta > 0.0 && digamma > 0.0) {
        return Err(invalid("delta", "delta and digamma must be positive"));
    }
    let h = SymbolHamiltonian::helmholtz(2, 1.0)?;
    let chart = Chart::SpatialFace { axis: 0, sign: 1 };
    let below = r < -0.5;
    let (phi_w, psi_w) = (0.3, 0.2);
    // 𝗉 = (|ξ|² − 1)/(|ξ|² + 1); ϱ = (ξ₂/ξ₁ − y)²
    let sym_p = |c: &[f64]| {
        let q = c[2] * c[2] + c[3] * c[3];
        (q - 1.0) / (q + 1.0)
    };
    let varrho = |c: &[f64]| (c[3] / c[2] - c[1]).powi(2);
    let phi = |t: f64| smooth_step((phi_w - t.abs()) / (0.5 * phi_w));
    let phi_d = |t: f64| -t.signum() * smooth_step_deriv((phi_w - t.abs()) / (0.5 * phi_w)) / (0.5 * phi_w);
    let psi = |t: f64| radial_cutoff(t, psi_w, digamma);
    let a_of = |c: &[f64]| {
        let (ps, _) = psi(varrho(c));
        c[0].powf(-(2.0 * r + 1.0)) * phi(sym_p(c)).powi(2) * ps * ps
    };
    let field = |c: &[f64]| chart_field(&h, &PhasePointChart { chart, coords: c.to_vec() });

    let mut residual: f64 = 0.0;
    let mut b_floor = f64::INFINITY;
    let mut samples = 0;
    let lin = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    };
    for rho in lin(0.05, 0.5, 10) {
        for v in lin(-0.5, 0.5, 11) {
            for q1 in lin(0.75, 1.3, 7) {
                for q2 in lin(-0.3, 0.3, 5) {
                    let y = q2 / q1 - v;
                    let c = [rho, y, q1, q2];
                    let f = field(&c)?;
                    let beta0 = f[0] / rho;
                    let vr = varrho(&c);
                    // 𝖧ϱ from the field: ϱ depends on y and ξ
                    let w = q2 / q1 - y;
                    let dvr = 2.0 * w * (-f[1] + f[3] / q1 - q2 * f[2] / (q1 * q1));
                    let pv = sym_p(&c);
                    let qn = q1 * q1 + q2 * q2;
                    let dp = 4.0 * (q1 * f[2] + q2 * f[3]) / ((qn + 1.0) * (qn + 1.0));
                    let q_coef = if pv.abs() > 1e-14 { dp / pv } else { 0.0 };
                    let (ps, dps) = psi(vr);
                    let ph = phi(pv);
                    let scale = rho.powf(-r);
                    let sign = if below { 1.0 } else { -1.0 };
                    let b_arg = sign * beta0 * (2.0 * r + 1.0) - 2.0 * delta * ph * ph * ps * ps;
                    if ph * ps > 0.0 && b_arg < 1e-6 {
                        return Err(Error::SqrtArgument(format!(
                            "b argument {b_arg:.3e} at ρ={rho}, v={v}: shrink the supports or delta"
                        )));
                    }
                    let e_arg = 2.0 * dvr * dps * ps;
                    if e_arg < -1e-12 {
                        return Err(Error::SqrtArgument(format!("e argument {e_arg:.3e} is negative")));
                    }
                    let b = scale * ph * ps * b_arg.max(0.0).sqrt();
                    let e = scale * ph * e_arg.max(0.0).sqrt();
                    let hh = 2.0 * rho.powf(-2.0 * r) * q_coef * phi_d(pv) * ph * ps * ps;
                    let a = a_of(&c);
                    // H_p a = ρ 𝖧a, 𝖧a by differentiating along the field
                    let along = |s: f64| {
                        let cc: Vec<f64> = c.iter().zip(&f).map(|(ci, fi)| ci + s * fi).collect();
                        a_of(&cc)
                    };
                    let hpa = rho * richardson_derivative(&along, 0.0, 1e-3);
                    let rhs = if below {
                        -2.0 * delta * rho.powf(2.0 * r + 2.0) * a * a - b * b + e * e + hh * pv
                    } else {
                        2.0 * delta * rho.powf(2.0 * r + 2.0) * a * a + b * b + e * e + hh * pv
                    };
                    residual = residual.max((hpa - rhs).abs());
                    if rho <= 0.1 && v.abs() <= 0.1 && pv.abs() <= 0.05 {
                        b_floor = b_floor.min(b.abs() / scale);
                    }
                    samples += 1;
                }
            }
        }
    }
    Ok(RadialCommutantReport { r, delta, digamma, below_threshold: below, residual_sup: residual, b_floor, samples })
}

/// Cubic vanishing of the gluing defect of a quadratic defining function.
#[derive(Debug, Clone, PartialEq)]
pub struct GlueReport {
    pub distances: Vec<f64>,
    pub defects: Vec<f64>,
    /// Fitted exponent of defect against distance.
    pub exponent: f64,
}

/// Glues q_j = ρ_j² + |ω − y|² across the four spatial charts of R² with a
/// partition of unity and measures |𝖧q − β₁q| as 𝓡_out is approached, with
/// 𝖧 = ½|x|H_p and β₁ = −2λ.
pub fn quadratic_defining_glue(lambda: f64) -> Result<GlueReport> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda", "must be positive"));
    }
    let charts: [(usize, f64); 4] = [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)];
    let weight = |x: &[f64]| -> Vec<f64> {
        let n = (x[0] * x[0] + x[1] * x[1]).sqrt();
        charts.iter().map(|(j, s)| smooth_step((s * x[*j] / n - 0.3) / 0.3)).collect()
    };
    let q = |x: &[f64], xi: &[f64]| -> f64 {
        let w = weight(x);
        let total: f64 = w.iter().sum();
        let mut acc = 0.0;
        for ((j, _), wj) in charts.iter().zip(&w) {
            if *wj == 0.0 {
                continue;
            }
            let k = 1 - j;
            let rho = 1.0 / x[*j];
            let v = xi[k] / xi[*j] - x[k] / x[*j];
            acc += wj * (rho * rho + v * v);
        }
        acc / total
    };
    let theta0: f64 = 0.6;
    let mut distances = Vec::new();
    let mut defects = Vec::new();
    for t in [0.04, 0.02, 0.01, 0.005] {
        let rad = 1.0 / t;
        let th = theta0 + 0.7 * t;
        let x = [rad * th.cos(), rad * th.sin()];
        let ph = theta0 - 0.4 * t;
        let xi = [lambda * ph.cos(), lambda * ph.sin()];
        let n = rad;
        // 𝖧 = ½|x|·2ξ·∂_x moves x along ξ at speed |x|
        let along = |s: f64| {
            let xs = [x[0] + s * n * xi[0], x[1] + s * n * xi[1]];
            q(&xs, &xi)
        };
        let hq = richardson_derivative(&along, 0.0, 1e-3 * t);
        let qv = q(&x, &xi);
        distances.push(t);
        defects.push((hq + 2.0 * lambda * qv).abs());
    }
    let exponent = crate::quad::loglog_slope(&distances, &defects);
    Ok(GlueReport { distances, defects, exponent })
}
