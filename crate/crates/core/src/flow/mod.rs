//! Hamilton vector fields on compactified phase space.
//!
//! Points of the boundary are carried in explicit projective charts. Each
//! chart knows how to map to and from the interior and how to push forward
//! an interior velocity; the rescaled field at the boundary is either a closed
//! form for the named models or the Richardson limit of the rescaled interior
//! field along the chart ray.

mod commutant;
mod radial;

pub use commutant::{
    build_propagation_commutant, propagation_model_check, quadratic_defining_glue, radial_commutant_check,
    CommutantBundle, CommutantRequest, GlueReport, ModelCheck, RadialCommutantReport,
};
pub use radial::{
    analyze_radial_sets, classify_radial, find_radial_points, helmholtz_polar, threshold_data, RadialSetReport,
    ThresholdData, ThresholdOptions, Verdict, EPS_EIG,
};

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::symbol::{directions, Symbol, PROBE_SCALES};

/// Step used for the Richardson boundary limit.
const LIMIT_STEP: f64 = 1e-2;
/// Chart-switch hysteresis on the dominant-axis ratio.
pub const SWITCH_LOW: f64 = 0.45;
pub const SWITCH_HIGH: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    /// |ξ|² − λ² on R^n.
    Helmholtz { n: usize, lambda: f64 },
    /// τ² − ξ² − 1 on R^{1+1}.
    KleinGordon,
    /// τ² − ξ² on R^{1+1}.
    Wave,
    /// τ + ξ² on R^{1+1}.
    SchrodingerFree,
    /// x ξ on R.
    XDx,
    /// ξ₁ on R^n.
    Dx1 { n: usize },
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Helmholtz { .. } => "helmholtz",
            Model::KleinGordon => "klein_gordon",
            Model::Wave => "wave",
            Model::SchrodingerFree => "schrodinger_free",
            Model::XDx => "x_dx",
            Model::Dx1 { .. } => "d_x1",
        }
    }
}

/// A real principal symbol together with the normalization of its rescaled field.
#[derive(Clone, Debug)]
pub struct SymbolHamiltonian {
    p: Symbol,
    model: Option<Model>,
    kappa: f64,
}

fn polynomial_symbol(
    dim: usize,
    order: (f64, f64),
    f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    grad: impl Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync + 'static,
) -> Symbol {
    Symbol::new(dim, order, move |x, xi| C64::new(f(x, xi), 0.0)).with_derivative(move |a, b, x, xi| {
        let total: usize = a.iter().chain(b).sum();
        if total != 1 {
            return None;
        }
        let (gx, gxi) = grad(x, xi);
        let v = match a.iter().position(|k| *k == 1) {
            Some(j) => gx[j],
            None => gxi[b.iter().position(|k| *k == 1).unwrap()],
        };
        Some(C64::new(v, 0.0))
    })
}

impl SymbolHamiltonian {
    pub fn helmholtz(n: usize, lambda: f64) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(invalid("n", "dimension must be 1, 2 or 3"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", "must be positive"));
        }
        let p = polynomial_symbol(
            n,
            (2.0, 0.0),
            move |_, xi| xi.iter().map(|v| v * v).sum::<f64>() - lambda * lambda,
            move |x, xi| (vec![0.0; x.len()], xi.iter().map(|v| 2.0 * v).collect()),
        );
        Ok(Self { p, model: Some(Model::Helmholtz { n, lambda }), kappa: 0.5 })
    }

    pub fn klein_gordon() -> Self {
        let p = polynomial_symbol(
            2,
            (2.0, 0.0),
            |_, z| z[0] * z[0] - z[1] * z[1] - 1.0,
            |_, z| (vec![0.0; 2], vec![2.0 * z[0], -2.0 * z[1]]),
        );
        Self { p, model: Some(Model::KleinGordon), kappa: 1.0 }
    }

    pub fn wave() -> Self {
        let p = polynomial_symbol(
            2,
            (2.0, 0.0),
            |_, z| z[0] * z[0] - z[1] * z[1],
            |_, z| (vec![0.0; 2], vec![2.0 * z[0], -2.0 * z[1]]),
        );
        Self { p, model: Some(Model::Wave), kappa: 1.0 }
    }

    pub fn schrodinger_free() -> Self {
        let p = polynomial_symbol(
            2,
            (2.0, 0.0),
            |_, z| z[0] + z[1] * z[1],
            |_, z| (vec![0.0; 2], vec![1.0, 2.0 * z[1]]),
        );
        Self { p, model: Some(Model::SchrodingerFree), kappa: 1.0 }
    }

    pub fn x_dx() -> Self {
        let p = polynomial_symbol(1, (1.0, 1.0), |x, xi| x[0] * xi[0], |x, xi| (vec![xi[0]], vec![x[0]]));
        Self { p, model: Some(Model::XDx), kappa: 1.0 }
    }

    pub fn dx1(n: usize) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(invalid("n", "dimension must be 1, 2 or 3"));
        }
        let p = polynomial_symbol(
            n,
            (1.0, 0.0),
            |_, xi| xi[0],
            move |_, _| {
                let mut e = vec![0.0; n];
                e[0] = 1.0;
                (vec![0.0; n], e)
            },
        );
        Ok(Self { p, model: Some(Model::Dx1 { n }), kappa: 1.0 })
    }

    /// Wraps an arbitrary real symbol; its boundary field is computed as a limit.
    pub fn from_symbol(p: Symbol) -> Result<Self> {
        let dim = p.dim();
        for dx in directions(dim) {
            for dq in directions(dim) {
                for s in PROBE_SCALES.iter().take(3) {
                    let x: Vec<f64> = dx.iter().map(|c| c * s).collect();
                    let xi: Vec<f64> = dq.iter().map(|c| c * s).collect();
                    if p.eval(&x, &xi).im.abs() > 1e-12 {
                        return Err(invalid("p", "Hamiltonian symbol must be real-valued"));
                    }
                }
            }
        }
        Ok(Self { p, model: None, kappa: 1.0 })
    }

    pub fn symbol(&self) -> &Symbol {
        &self.p
    }
    pub fn model(&self) -> Option<Model> {
        self.model
    }
    pub fn dim(&self) -> usize {
        self.p.dim()
    }
    pub fn orders(&self) -> (f64, f64) {
        self.p.order()
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn value(&self, x: &[f64], xi: &[f64]) -> f64 {
        self.p.eval(x, xi).re
    }
}

/// (∂_ξ p, −∂_x p).
pub fn hamilton_field(h: &SymbolHamiltonian, x: &[f64], xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = h.dim();
    let mut dx = vec![0.0; d];
    let mut dxi = vec![0.0; d];
    for j in 0..d {
        let mut e = vec![0usize; d];
        e[j] = 1;
        let z = vec![0usize; d];
        dx[j] = h.p.partial(&z, &e, x, xi).re;
        dxi[j] = -h.p.partial(&e, &z, x, xi).re;
    }
    (dx, dxi)
}

/// Projective charts of compactified phase space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Chart {
    /// Coordinates (x, ξ).
    Interior,
    /// (ρ = σ/x_j, y_k = x_k/x_j for k ≠ j, ξ).
    SpatialFace { axis: usize, sign: i8 },
    /// (x, ρ_f = σ/ξ_j, ω_k = ξ_k/ξ_j for k ≠ j).
    FiberFace { axis: usize, sign: i8 },
    /// Spacetime chart over a timelike cap: (ρ = σ/t, v = xτ/t + ξ, τ, ξ).
    KgFace { sign: i8 },
    /// Parabolic chart over a timelike cap: (ρ_b = σ/t, y = x/t, τ, ξ).
    TimeCap { sign: i8 },
    /// Parabolic chart near the x-dominant corner:
    /// (ρ_b = 1/|x|, s̃ = 2t/x − sgn(ξ)/|ξ|, ρ_f = 1/|ξ|, τ/ξ²).
    XCap { sign_x: i8, sign_xi: i8 },
}

impl Chart {
    pub fn id(&self) -> String {
        match self {
            Chart::Interior => "interior".into(),
            Chart::SpatialFace { axis, sign } => format!("spatial[{axis}{}]", sgn_char(*sign)),
            Chart::FiberFace { axis, sign } => format!("fiber[{axis}{}]", sgn_char(*sign)),
            Chart::KgFace { sign } => format!("kg[{}]", sgn_char(*sign)),
            Chart::TimeCap { sign } => format!("timecap[{}]", sgn_char(*sign)),
            Chart::XCap { sign_x, sign_xi } => format!("xcap[{}{}]", sgn_char(*sign_x), sgn_char(*sign_xi)),
        }
    }

    /// Index of the boundary defining coordinate, if any.
    pub fn rho_index(&self, d: usize) -> Option<usize> {
        match self {
            Chart::Interior => None,
            Chart::FiberFace { .. } => Some(d),
            _ => Some(0),
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        let ok_sign = |s: i8| s == 1 || s == -1;
        let ok = match *self {
            Chart::Interior => true,
            Chart::SpatialFace { axis, sign } | Chart::FiberFace { axis, sign } => axis < d && ok_sign(sign),
            Chart::KgFace { sign } | Chart::TimeCap { sign } => d == 2 && ok_sign(sign),
            Chart::XCap { sign_x, sign_xi } => d == 2 && ok_sign(sign_x) && ok_sign(sign_xi),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Chart(format!("chart {} is not valid in dimension {d}", self.id())))
        }
    }
}

fn sgn_char(s: i8) -> char {
    if s > 0 {
        '+'
    } else {
        '-'
    }
}

/// A point of compactified phase space in a named chart.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePointChart {
    pub chart: Chart,
    pub coords: Vec<f64>,
}

impl PhasePointChart {
    pub fn new(chart: Chart, coords: Vec<f64>) -> Result<Self> {
        if !coords.len().is_multiple_of(2) || coords.is_empty() {
            return Err(invalid("coords", "phase space coordinates come in pairs"));
        }
        let d = coords.len() / 2;
        chart.validate(d)?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("coords", "coordinates must be finite"));
        }
        if let Some(i) = chart.rho_index(d) {
            if coords[i] < 0.0 {
                return Err(invalid("coords", "boundary defining coordinate must be nonnegative"));
            }
        }
        Ok(Self { chart, coords })
    }
    pub fn dim(&self) -> usize {
        self.coords.len() / 2
    }
    pub fn rho(&self) -> Option<f64> {
        self.chart.rho_index(self.dim()).map(|i| self.coords[i])
    }
    pub fn on_boundary(&self) -> bool {
        self.rho() == Some(0.0)
    }
    fn with_rho(&self, rho: f64) -> Self {
        let mut c = self.coords.clone();
        if let Some(i) = self.chart.rho_index(self.dim()) {
            c[i] = rho;
        }
        Self { chart: self.chart, coords: c }
    }
}

/// Maps a chart point with ρ > 0 to interior coordinates.
pub fn to_interior(pt: &PhasePointChart) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = pt.dim();
    let c = &pt.coords;
    let rho_err = || Error::Chart(format!("{} point at the boundary has no interior image", pt.chart.id()));
    match pt.chart {
        Chart::Interior => Ok((c[..d].to_vec(), c[d..].to_vec())),
        Chart::SpatialFace { axis, sign } => {
            if c[0] <= 0.0 {
                return Err(rho_err());
            }
            let xj = sign as f64 / c[0];
            let mut x = vec![0.0; d];
            let mut it = c[1..d].iter();
            for (k, xk) in x.iter_mut().enumerate() {
                *xk = if k == axis { xj } else { it.next().unwrap() * xj };
            }
            Ok((x, c[d..].to_vec()))
        }
        Chart::FiberFace { axis, sign } => {
            if c[d] <= 0.0 {
                return Err(rho_err());
            }
            let xij = sign as f64 / c[d];
            let mut xi = vec![0.0; d];
            let mut it = c[d + 1..].iter();
            for (k, v) in xi.iter_mut().enumerate() {
                *v = if k == axis { xij } else { it.next().unwrap() * xij };
            }
            Ok((c[..d].to_vec(), xi))
        }
        Chart::KgFace { sign } => {
            if c[0] <= 0.0 {
                return Err(rho_err());
            }
            let (rho, v, tau, xi) = (c[0], c[1], c[2], c[3]);
            if tau == 0.0 {
                return Err(Error::Chart("spacetime chart needs τ ≠ 0 to recover x".into()));
            }
            let t = sign as f64 / rho;
            Ok((vec![t, (v - xi) * t / tau], vec![tau, xi]))
        }
        Chart::TimeCap { sign } => {
            if c[0] <= 0.0 {
                return Err(rho_err());
            }
            let t = sign as f64 / c[0];
            Ok((vec![t, c[1] * t], vec![c[2], c[3]]))
        }
        Chart::XCap { sign_x, sign_xi } => {
            if c[0] <= 0.0 || c[2] <= 0.0 {
                return Err(rho_err());
            }
            let x = sign_x as f64 / c[0];
            let xi = sign_xi as f64 / c[2];
            let s = 0.5 * (c[1] + sign_xi as f64 * c[2]);
            Ok((vec![s * x, x], vec![c[3] * xi * xi, xi]))
        }
    }
}

/// Expresses an interior point in the given chart.
pub fn from_interior(chart: Chart, x: &[f64], xi: &[f64]) -> Result<PhasePointChart> {
    let d = x.len();
    chart.validate(d)?;
    let bad = || Error::Chart(format!("point lies outside chart {}", chart.id()));
    let coords = match chart {
        Chart::Interior => x.iter().chain(xi).copied().collect(),
        Chart::SpatialFace { axis, sign } => {
            if sign as f64 * x[axis] <= 0.0 {
                return Err(bad());
            }
            let mut c = vec![sign as f64 / x[axis]];
            c.extend((0..d).filter(|k| *k != axis).map(|k| x[k] / x[axis]));
            c.extend_from_slice(xi);
            c
        }
        Chart::FiberFace { axis, sign } => {
            if sign as f64 * xi[axis] <= 0.0 {
                return Err(bad());
            }
            let mut c = x.to_vec();
            c.push(sign as f64 / xi[axis]);
            c.extend((0..d).filter(|k| *k != axis).map(|k| xi[k] / xi[axis]));
            c
        }
        Chart::KgFace { sign } => {
            if sign as f64 * x[0] <= 0.0 {
                return Err(bad());
            }
            vec![sign as f64 / x[0], x[1] * xi[0] / x[0] + xi[1], xi[0], xi[1]]
        }
        Chart::TimeCap { sign } => {
            if sign as f64 * x[0] <= 0.0 {
                return Err(bad());
            }
            vec![sign as f64 / x[0], x[1] / x[0], xi[0], xi[1]]
        }
        Chart::XCap { sign_x, sign_xi } => {
            if sign_x as f64 * x[1] <= 0.0 || sign_xi as f64 * xi[1] <= 0.0 {
                return Err(bad());
            }
            let rho_f = 1.0 / xi[1].abs();
            vec![1.0 / x[1].abs(), 2.0 * x[0] / x[1] - sign_xi as f64 * rho_f, rho_f, xi[0] / (xi[1] * xi[1])]
        }
    };
    PhasePointChart::new(chart, coords)
}

/// Chart velocity of an interior velocity (ẋ, ξ̇) at (x, ξ).
fn push_forward(pt: &PhasePointChart, x: &[f64], xi: &[f64], dx: &[f64], dxi: &[f64]) -> Vec<f64> {
    let d = pt.dim();
    let c = &pt.coords;
    match pt.chart {
        Chart::Interior => dx.iter().chain(dxi).copied().collect(),
        Chart::SpatialFace { axis, sign } => {
            let s = sign as f64;
            let rho = c[0];
            let mut out = vec![-s * rho * rho * dx[axis]];
            let mut yi = 1;
            for k in (0..d).filter(|k| *k != axis) {
                out.push(s * rho * (dx[k] - c[yi] * dx[axis]));
                yi += 1;
            }
            out.extend_from_slice(dxi);
            out
        }
        Chart::FiberFace { axis, sign } => {
            let s = sign as f64;
            let rf = c[d];
            let mut out = dx.to_vec();
            out.push(-s * rf * rf * dxi[axis]);
            let mut wi = d + 1;
            for k in (0..d).filter(|k| *k != axis) {
                out.push(s * rf * (dxi[k] - c[wi] * dxi[axis]));
                wi += 1;
            }
            out
        }
        Chart::KgFace { sign } => {
            let s = sign as f64;
            let rho = c[0];
            let drho = -s * rho * rho * dx[0];
            let dv = s * (drho * x[1] * xi[0] + rho * dx[1] * xi[0] + rho * x[1] * dxi[0]) + dxi[1];
            vec![drho, dv, dxi[0], dxi[1]]
        }
        Chart::TimeCap { sign } => {
            let s = sign as f64;
            let rho = c[0];
            let drho = -s * rho * rho * dx[0];
            vec![drho, s * (drho * x[1] + rho * dx[1]), dxi[0], dxi[1]]
        }
        Chart::XCap { sign_x, sign_xi } => {
            let (sx, sq) = (sign_x as f64, sign_xi as f64);
            let (rb, rf) = (c[0], c[2]);
            let s = x[0] / x[1];
            let drb = -sx * rb * rb * dx[1];
            let ds = (dx[0] - s * dx[1]) / x[1];
            let drf = -sq * rf * rf * dxi[1];
            let dst = 2.0 * ds - sq * drf;
            let dsig = dxi[0] / (xi[1] * xi[1]) - 2.0 * xi[0] * dxi[1] / xi[1].powi(3);
            vec![drb, dst, drf, dsig]
        }
    }
}

/// The factor turning H_p into the field that extends to the boundary.
fn rescale_factor(h: &SymbolHamiltonian, pt: &PhasePointChart) -> f64 {
    let (m, l) = h.orders();
    let d = pt.dim();
    let c = &pt.coords;
    h.kappa
        * match pt.chart {
            Chart::Interior => return 1.0,
            Chart::SpatialFace { .. } | Chart::KgFace { .. } | Chart::TimeCap { .. } => c[0].powf(l - 1.0),
            Chart::FiberFace { .. } => c[d].powf(m - 1.0),
            Chart::XCap { .. } => c[0].powf(l - 1.0) * c[2].powf(m - 1.0),
        }
}

fn interior_chart_field(h: &SymbolHamiltonian, pt: &PhasePointChart) -> Result<Vec<f64>> {
    let (x, xi) = to_interior(pt)?;
    let (dx, dxi) = hamilton_field(h, &x, &xi);
    let f = rescale_factor(h, pt);
    Ok(push_forward(pt, &x, &xi, &dx, &dxi).into_iter().map(|v| v * f).collect())
}

/// Closed-form chart fields of the named models, valid on the whole chart.
fn closed_form_field(h: &SymbolHamiltonian, pt: &PhasePointChart) -> Option<Vec<f64>> {
    let d = pt.dim();
    let c = &pt.coords;
    match (h.model?, pt.chart) {
        (Model::Helmholtz { .. }, Chart::SpatialFace { axis, sign }) => {
            let s = sign as f64;
            let xi = &c[d..];
            let mut out = vec![-s * xi[axis] * c[0]];
            let mut yi = 1;
            for k in (0..d).filter(|k| *k != axis) {
                out.push(s * (xi[k] - c[yi] * xi[axis]));
                yi += 1;
            }
            out.extend(std::iter::repeat_n(0.0, d));
            Some(out)
        }
        (Model::KleinGordon | Model::Wave, Chart::KgFace { sign }) => {
            let k = -2.0 * sign as f64 * c[2];
            Some(vec![k * c[0], k * c[1], 0.0, 0.0])
        }
        (Model::SchrodingerFree, Chart::TimeCap { sign }) => {
            let s = sign as f64;
            Some(vec![-s * c[0], s * (2.0 * c[3] - c[1]), 0.0, 0.0])
        }
        (Model::SchrodingerFree, Chart::XCap { sign_x, sign_xi }) => {
            let s = (sign_x * sign_xi) as f64;
            Some(vec![-2.0 * s * c[0], -2.0 * s * c[1], 0.0, 0.0])
        }
        (Model::XDx, Chart::SpatialFace { .. }) => Some(vec![-c[0], -c[1]]),
        (Model::XDx, Chart::FiberFace { .. }) => Some(vec![c[0], c[1]]),
        (Model::Dx1 { .. }, Chart::SpatialFace { axis, sign }) => {
            let s = sign as f64;
            let e = |k: usize| if k == 0 { 1.0 } else { 0.0 };
            let mut out = vec![-s * c[0] * e(axis)];
            let mut yi = 1;
            for k in (0..d).filter(|k| *k != axis) {
                out.push(s * (e(k) - c[yi] * e(axis)));
                yi += 1;
            }
            out.extend(std::iter::repeat_n(0.0, d));
            Some(out)
        }
        _ => None,
    }
}

/// Richardson limit ρ → 0 of the rescaled interior field, with three ρ steps.
pub fn limit_field(h: &SymbolHamiltonian, pt: &PhasePointChart) -> Result<Vec<f64>> {
    let f1 = interior_chart_field(h, &pt.with_rho(LIMIT_STEP))?;
    let f2 = interior_chart_field(h, &pt.with_rho(LIMIT_STEP / 2.0))?;
    let f4 = interior_chart_field(h, &pt.with_rho(LIMIT_STEP / 4.0))?;
    Ok((0..f1.len()).map(|i| (8.0 * f4[i] - 6.0 * f2[i] + f1[i]) / 3.0).collect())
}

/// Rescaled Hamilton field in the coordinates of `pt`'s chart.
pub fn chart_field(h: &SymbolHamiltonian, pt: &PhasePointChart) -> Result<Vec<f64>> {
    if pt.dim() != h.dim() {
        return Err(invalid("pt", "chart point dimension does not match the Hamiltonian"));
    }
    if let Some(f) = closed_form_field(h, pt) {
        return Ok(f);
    }
    if pt.on_boundary() {
        return boundary_chart_field(h, pt);
    }
    interior_chart_field(h, pt)
}

/// The rescaled field at a boundary point; flags fields that leave the boundary.
pub fn boundary_chart_field(h: &SymbolHamiltonian, pt: &PhasePointChart) -> Result<Vec<f64>> {
    if !pt.on_boundary() {
        return Err(invalid("pt", "expected a boundary point (ρ = 0)"));
    }
    if matches!(pt.chart, Chart::XCap { .. }) && pt.coords[2] == 0.0 {
        return Err(Error::Chart("corner point: unclassified".into()));
    }
    let f = match closed_form_field(h, pt) {
        Some(f) => f,
        None => limit_field(h, pt)?,
    };
    let i = pt.chart.rho_index(pt.dim()).unwrap();
    let scale = f.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if f[i].abs() > 1e-9 * scale {
        return Err(Error::Chart(format!(
            "rescaled field is not tangent to the boundary: ∂ρ coefficient {:.3e}",
            f[i]
        )));
    }
    let mut f = f;
    f[i] = 0.0;
    Ok(f)
}

/// The rescaled principal symbol at a chart point (its zero set is Char(p)).
pub fn char_value(h: &SymbolHamiltonian, pt: &PhasePointChart) -> Result<f64> {
    let d = pt.dim();
    let c = &pt.coords;
    if let Some(model) = h.model {
        let v = match (model, pt.chart) {
            (_, Chart::Interior) => None,
            (Model::Helmholtz { lambda, .. }, Chart::SpatialFace { .. }) => {
                Some(c[d..].iter().map(|v| v * v).sum::<f64>() - lambda * lambda)
            }
            (Model::KleinGordon, Chart::KgFace { .. }) => Some(c[2] * c[2] - c[3] * c[3] - 1.0),
            (Model::Wave, Chart::KgFace { .. }) => Some(c[2] * c[2] - c[3] * c[3]),
            (Model::SchrodingerFree, Chart::TimeCap { .. }) => Some(c[2] + c[3] * c[3]),
            (Model::SchrodingerFree, Chart::XCap { .. }) => Some(c[3] + 1.0),
            (Model::XDx, Chart::SpatialFace { sign, .. }) => Some(sign as f64 * c[1]),
            (Model::XDx, Chart::FiberFace { sign, .. }) => Some(sign as f64 * c[0]),
            (Model::Dx1 { .. }, Chart::SpatialFace { .. }) => Some(c[d]),
            _ => None,
        };
        if let Some(v) = v {
            return Ok(v);
        }
    }
    let weighted = |q: &PhasePointChart| -> Result<f64> {
        let (x, xi) = to_interior(q)?;
        let (m, l) = h.orders();
        let qc = &q.coords;
        let w = match q.chart {
            Chart::Interior => 1.0,
            Chart::SpatialFace { .. } | Chart::KgFace { .. } | Chart::TimeCap { .. } => qc[0].powf(l),
            Chart::FiberFace { .. } => qc[d].powf(m),
            Chart::XCap { .. } => qc[0].powf(l) * qc[2].powf(m),
        };
        Ok(w * h.value(&x, &xi))
    };
    if !pt.on_boundary() {
        return weighted(pt);
    }
    let f1 = weighted(&pt.with_rho(LIMIT_STEP))?;
    let f2 = weighted(&pt.with_rho(LIMIT_STEP / 2.0))?;
    let f4 = weighted(&pt.with_rho(LIMIT_STEP / 4.0))?;
    Ok((8.0 * f4 - 6.0 * f2 + f1) / 3.0)
}

/// Ratio |x_j| / max_k |x_k| for spatial charts (fiber analog for fiber charts).
fn dominance(pt: &PhasePointChart) -> Option<(f64, usize)> {
    let d = pt.dim();
    let (ys, axis) = match pt.chart {
        Chart::SpatialFace { axis, .. } => (&pt.coords[1..d], axis),
        Chart::FiberFace { axis, .. } => (&pt.coords[d + 1..], axis),
        _ => return None,
    };
    let (mut big, mut at) = (1.0f64, axis);
    let mut yi = 0;
    for k in 0..d {
        if k == axis {
            continue;
        }
        if ys[yi].abs() > big {
            big = ys[yi].abs();
            at = k;
        }
        yi += 1;
    }
    Some((1.0 / big, at))
}

/// Re-expresses a spatial or fiber chart point with a new dominant axis.
pub fn switch_axis(pt: &PhasePointChart, new_axis: usize) -> Result<PhasePointChart> {
    let d = pt.dim();
    let c = &pt.coords;
    let (old_axis, sign, start) = match pt.chart {
        Chart::SpatialFace { axis, sign } => (axis, sign, 0),
        Chart::FiberFace { axis, sign } => (axis, sign, d),
        _ => return Err(Error::Chart("axis switching applies to spatial and fiber charts".into())),
    };
    // direction vector proportional to x (or ξ): entries σ and σ y_k
    let s = sign as f64;
    let mut dir = vec![0.0; d];
    let mut yi = start + 1;
    for (k, v) in dir.iter_mut().enumerate() {
        if k == old_axis {
            *v = s;
        } else {
            *v = s * c[yi];
            yi += 1;
        }
    }
    let a = dir[new_axis];
    if a.abs() < 1e-12 {
        return Err(Error::Chart("new dominant axis has a vanishing component".into()));
    }
    let new_sign: i8 = if a > 0.0 { 1 } else { -1 };
    let rho = c[start] / a.abs();
    let rest: Vec<f64> = (0..d).filter(|k| *k != new_axis).map(|k| dir[k] / a).collect();
    let mut coords = Vec::with_capacity(2 * d);
    match pt.chart {
        Chart::SpatialFace { .. } => {
            coords.push(rho);
            coords.extend(rest);
            coords.extend_from_slice(&c[d..]);
            PhasePointChart::new(Chart::SpatialFace { axis: new_axis, sign: new_sign }, coords)
        }
        _ => {
            coords.extend_from_slice(&c[..d]);
            coords.push(rho);
            coords.extend(rest);
            PhasePointChart::new(Chart::FiberFace { axis: new_axis, sign: new_sign }, coords)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub t_final: f64,
    pub dt: f64,
    /// Require the start to lie on Char(p) within 1e−8.
    pub require_null: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub step: usize,
    pub param: f64,
    pub point: PhasePointChart,
    pub char_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<PathSample>,
    pub chart_switches: usize,
}

impl Trajectory {
    pub fn last(&self) -> &PhasePointChart {
        &self.samples.last().expect("trajectory has a start").point
    }
    pub fn max_char(&self) -> f64 {
        self.samples.iter().map(|s| s.char_abs).fold(0.0, f64::max)
    }
    /// Header and rows for CSV export: step, param, chart, coords…, |p|.
    pub fn table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let width = self.samples.first().map_or(0, |s| s.point.coords.len());
        let mut header = vec!["step".to_string(), "param".into(), "chart".into()];
        header.extend((0..width).map(|i| format!("c{i}")));
        header.push("char_abs".into());
        let rows = self
            .samples
            .iter()
            .map(|s| {
                let mut r = vec![s.step.to_string(), crate::report::fmt_f64(s.param), s.point.chart.id()];
                r.extend(s.point.coords.iter().map(|v| crate::report::fmt_f64(*v)));
                r.push(crate::report::fmt_f64(s.char_abs));
                r
            })
            .collect();
        (header, rows)
    }
}

fn axpy(base: &[f64], k: &[f64], a: f64) -> Vec<f64> {
    base.iter().zip(k).map(|(b, v)| b + a * v).collect()
}

/// RK4 on the rescaled field with chart switching by dominant-axis ratio.
pub fn flow_trajectory(h: &SymbolHamiltonian, start: &PhasePointChart, opts: FlowOptions) -> Result<Trajectory> {
    let FlowOptions { t_final, dt, require_null } = opts;
    if !(dt.abs() > 0.0 && dt.abs() <= 0.01) {
        return Err(invalid("dt", "step size must satisfy 0 < |dt| <= 0.01"));
    }
    if !t_final.is_finite() {
        return Err(invalid("t_final", "must be finite"));
    }
    let first_char = char_value(h, start)?.abs();
    if require_null && first_char > 1e-8 {
        return Err(invalid("start", format!("not on the characteristic set: |p| = {first_char:.3e}")));
    }
    let boundary = start.on_boundary();
    let steps = (t_final.abs() / dt.abs()).round() as usize;
    let dt = dt.abs() * t_final.signum();
    let mut pt = start.clone();
    let mut samples = vec![PathSample { step: 0, param: 0.0, point: pt.clone(), char_abs: first_char }];
    let mut switches = 0;
    let field_at = |q: &PhasePointChart, c: Vec<f64>| -> Result<Vec<f64>> {
        let mut q2 = PhasePointChart { chart: q.chart, coords: c };
        if let Some(i) = q2.chart.rho_index(q2.dim()) {
            if boundary {
                q2.coords[i] = 0.0;
            } else if q2.coords[i] <= 0.0 {
                return Err(Error::Integrator("step crossed the boundary".into()));
            }
        }
        chart_field(h, &q2)
    };
    for step in 1..=steps {
        let c = &pt.coords;
        let k1 = field_at(&pt, c.clone())?;
        let k2 = field_at(&pt, axpy(c, &k1, dt / 2.0))?;
        let k3 = field_at(&pt, axpy(c, &k2, dt / 2.0))?;
        let k4 = field_at(&pt, axpy(c, &k3, dt))?;
        let mut next: Vec<f64> = (0..c.len())
            .map(|i| c[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integrator(format!("non-finite state at step {step}")));
        }
        if boundary {
            if let Some(i) = pt.chart.rho_index(pt.dim()) {
                next[i] = 0.0;
            }
        }
        pt = PhasePointChart { chart: pt.chart, coords: next };
        if let Some((ratio, axis)) = dominance(&pt) {
            if ratio < SWITCH_LOW {
                let q = switch_axis(&pt, axis)?;
                match dominance(&q) {
                    Some((r, _)) if r >= SWITCH_HIGH => {}
                    _ => return Err(Error::Chart(format!("chart transition failed at step {step}"))),
                }
                pt = q;
                switches += 1;
            }
        }
        let char_abs = char_value(h, &pt)?.abs();
        samples.push(PathSample { step, param: step as f64 * dt, point: pt.clone(), char_abs });
    }
    Ok(Trajectory { samples, chart_switches: switches })
}

/// Runs independent trajectories on scoped threads; results keep input order.
pub fn flow_batch(
    h: &SymbolHamiltonian,
    starts: &[PhasePointChart],
    opts: FlowOptions,
) -> Vec<Result<Trajectory>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).clamp(1, 8);
    let chunk = starts.len().div_ceil(workers).max(1);
    let h = Arc::new(h.clone());
    std::thread::scope(|scope| {
        let handles: Vec<_> = starts
            .chunks(chunk)
            .map(|part| {
                let h = h.clone();
                scope.spawn(move || part.iter().map(|s| flow_trajectory(&h, s, opts)).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|hd| hd.join().expect("flow worker panicked")).collect()
    })
}

/// Mass history of the free Schrödinger evolution e^{−it|ξ|²} on a grid.
pub fn schrodinger_mass_history(u0: &crate::grid::GridField, times: &[f64]) -> Result<Vec<f64>> {
    let spec = u0.spec;
    let hat = crate::grid::forward(u0)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let mut v = hat.clone();
        for (k, val) in v.values.iter_mut().enumerate() {
            let q: f64 = spec.frequency(k).iter().map(|s| s * s).sum();
            *val *= C64::from_polar(1.0, -t * q);
        }
        let u = crate::grid::inverse(&v)?;
        out.push(u.l2_norm());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(axis: usize, sign: i8, c: Vec<f64>) -> PhasePointChart {
        PhasePointChart::new(Chart::SpatialFace { axis, sign }, c).unwrap()
    }

    #[test]
    fn interior_fields_of_examples() {
        let h = SymbolHamiltonian::helmholtz(2, 1.5).unwrap();
        let (dx, dxi) = hamilton_field(&h, &[0.3, -1.0], &[0.7, 2.0]);
        assert_eq!(dx, vec![1.4, 4.0]);
        assert_eq!(dxi, vec![0.0, 0.0]);
        let (dx, dxi) = hamilton_field(&SymbolHamiltonian::dx1(2).unwrap(), &[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!((dx, dxi), (vec![1.0, 0.0], vec![0.0, 0.0]));
        let (dx, dxi) = hamilton_field(&SymbolHamiltonian::x_dx(), &[2.5], &[-0.5]);
        assert_eq!((dx, dxi), (vec![2.5], vec![0.5]));
    }

    #[test]
    fn generic_symbol_matches_named_model() {
        let named = SymbolHamiltonian::helmholtz(2, 1.0).unwrap();
        let generic = SymbolHamiltonian::from_symbol(
            Symbol::new(2, (2.0, 0.0), |_, xi| C64::new(xi[0] * xi[0] + xi[1] * xi[1] - 1.0, 0.0)),
        )
        .unwrap();
        let mut generic = generic;
        generic.kappa = 0.5;
        let pt = sp(0, 1, vec![0.0, 0.4, 0.8, -0.3]);
        let a = boundary_chart_field(&named, &pt).unwrap();
        let b = boundary_chart_field(&generic, &pt).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-6, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn closed_forms_match_limits() {
        let cases: Vec<(SymbolHamiltonian, PhasePointChart)> = vec![
            (SymbolHamiltonian::helmholtz(3, 2.0).unwrap(), sp(2, -1, vec![0.0, 0.3, -0.2, 0.5, 1.0, -1.5])),
            (SymbolHamiltonian::klein_gordon(), PhasePointChart::new(Chart::KgFace { sign: 1 }, vec![0.0, 0.3, 1.2, 0.4]).unwrap()),
            (SymbolHamiltonian::schrodinger_free(), PhasePointChart::new(Chart::TimeCap { sign: -1 }, vec![0.0, 0.3, -0.6, 0.4]).unwrap()),
            (SymbolHamiltonian::schrodinger_free(), PhasePointChart::new(Chart::XCap { sign_x: 1, sign_xi: -1 }, vec![0.0, 0.3, 0.5, -1.0]).unwrap()),
            (SymbolHamiltonian::x_dx(), sp(0, -1, vec![0.0, 0.7])),
            (SymbolHamiltonian::x_dx(), PhasePointChart::new(Chart::FiberFace { axis: 0, sign: 1 }, vec![0.4, 0.0]).unwrap()),
            (SymbolHamiltonian::dx1(2).unwrap(), sp(1, 1, vec![0.0, 0.5, 0.2, 0.1])),
        ];
        for (h, pt) in cases {
            let closed = closed_form_field(&h, &pt).unwrap();
            let lim = limit_field(&h, &pt).unwrap();
            for (a, b) in closed.iter().zip(&lim) {
                assert!((a - b).abs() < 1e-6, "{:?}: {closed:?} vs {lim:?}", pt.chart);
            }
            let i = pt.chart.rho_index(pt.dim()).unwrap();
            assert!(closed[i].abs() < 1e-9);
        }
    }

    #[test]
    fn closed_forms_match_interior_field_off_boundary() {
        let h = SymbolHamiltonian::schrodinger_free();
        let pt = PhasePointChart::new(Chart::XCap { sign_x: -1, sign_xi: 1 }, vec![0.2, 0.1, 0.3, -0.7]).unwrap();
        let a = closed_form_field(&h, &pt).unwrap();
        let b = interior_chart_field(&h, &pt).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn chart_round_trips() {
        let x = [1.3, -0.4];
        let xi = [0.5, -2.0];
        for chart in [
            Chart::SpatialFace { axis: 0, sign: 1 },
            Chart::SpatialFace { axis: 1, sign: -1 },
            Chart::FiberFace { axis: 1, sign: -1 },
            Chart::KgFace { sign: 1 },
            Chart::TimeCap { sign: 1 },
            Chart::XCap { sign_x: -1, sign_xi: -1 },
        ] {
            let pt = from_interior(chart, &x, &xi).unwrap();
            let (x2, xi2) = to_interior(&pt).unwrap();
            for (a, b) in x.iter().chain(&xi).zip(x2.iter().chain(&xi2)) {
                assert!((a - b).abs() < 1e-12, "{chart:?}");
            }
        }
    }

    #[test]
    fn axis_switch_is_involutive() {
        let pt = sp(0, 1, vec![0.25, -3.0, 0.5, 0.1]);
        let q = switch_axis(&pt, 1).unwrap();
        assert_eq!(q.chart, Chart::SpatialFace { axis: 1, sign: -1 });
        let back = switch_axis(&q, 0).unwrap();
        for (a, b) in pt.coords.iter().zip(&back.coords) {
            assert!((a - b).abs() < 1e-12);
        }
        let (x, _) = to_interior(&pt).unwrap();
        let (y, _) = to_interior(&q).unwrap();
        assert!((x[0] - y[0]).abs() < 1e-10 && (x[1] - y[1]).abs() < 1e-10);
    }

    #[test]
    fn interior_helmholtz_trajectory_is_straight() {
        let h = SymbolHamiltonian::helmholtz(2, 1.0).unwrap();
        let start = PhasePointChart::new(Chart::Interior, vec![0.5, -1.0, 0.3, 0.8]).unwrap();
        let opts = FlowOptions { t_final: 2.0, dt: 0.01, require_null: false };
        let tr = flow_trajectory(&h, &start, opts).unwrap();
        for s in &tr.samples {
            let t = s.param;
            assert!((s.point.coords[0] - (0.5 + 0.6 * t)).abs() < 1e-8);
            assert!((s.point.coords[1] - (-1.0 + 1.6 * t)).abs() < 1e-8);
            assert_eq!(&s.point.coords[2..], &[0.3, 0.8]);
        }
    }

    #[test]
    fn boundary_trajectory_switches_charts_and_stays_null() {
        let h = SymbolHamiltonian::helmholtz(2, 1.0).unwrap();
        let a = 2.0f64;
        // x̂ along e₁, ξ pointing mostly along e₂
        let start = sp(0, 1, vec![0.0, 0.0, a.cos(), a.sin()]);
        let opts = FlowOptions { t_final: 20.0, dt: 0.01, require_null: true };
        let tr = flow_trajectory(&h, &start, opts).unwrap();
        assert!(tr.chart_switches >= 1);
        assert!(tr.max_char() < 1e-12);
        assert!(tr.samples.iter().all(|s| s.point.coords[0] == 0.0));
    }

    #[test]
    fn null_start_is_enforced() {
        let h = SymbolHamiltonian::helmholtz(2, 1.0).unwrap();
        let start = sp(0, 1, vec![0.0, 0.0, 2.0, 0.0]);
        let opts = FlowOptions { t_final: 1.0, dt: 0.01, require_null: true };
        assert!(flow_trajectory(&h, &start, opts).is_err());
        let opts = FlowOptions { t_final: 1.0, dt: 0.05, require_null: false };
        assert!(flow_trajectory(&h, &start, opts).is_err());
    }

    #[test]
    fn schrodinger_mass_is_constant() {
        let spec = crate::grid::make_grid(1, 40.0, 512).unwrap();
        let u = crate::grid::GridField::from_fn(spec, |x| C64::from_polar((-x[0] * x[0]).exp(), 2.0 * x[0]));
        let m = schrodinger_mass_history(&u, &[0.0, 0.5, 1.0, 3.0]).unwrap();
        for v in &m {
            assert!((v - m[0]).abs() < 1e-12 * m[0]);
        }
    }
}
