//! Truncated grids on R^n, the 2π Fourier convention and weighted Sobolev norms.
//!
//! Grid points are x_j = -L + j h with h = 2L/N, frequencies are
//! ξ_k = (k - N/2) π/L. The forward transform is û(ξ) = Σ e^{-ix·ξ} u(x) h^n and the
//! inverse carries the (2π)^{-n} factor.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::quad::{gauss_legendre, gauss_legendre_on, jbracket};

/// Largest number of grid points accepted by `make_grid`.
pub const MAX_GRID_POINTS: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    half_width: f64,
    points_per_axis: usize,
}

pub fn make_grid(n: usize, half_width: f64, points_per_axis: usize) -> Result<GridSpec> {
    if !(1..=3).contains(&n) {
        return Err(invalid("dimension", format!("{n} not in 1..=3")));
    }
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(invalid("half_width", format!("{half_width} must be positive")));
    }
    if points_per_axis < 8 || !points_per_axis.is_multiple_of(2) {
        return Err(invalid(
            "points_per_axis",
            format!("{points_per_axis} must be even and at least 8"),
        ));
    }
    let total = (points_per_axis as u128).pow(n as u32);
    if total > MAX_GRID_POINTS as u128 {
        return Err(invalid(
            "points_per_axis",
            format!("{points_per_axis}^{n} points exceed 2^24"),
        ));
    }
    Ok(GridSpec {
        dim: n,
        half_width,
        points_per_axis,
    })
}

impl GridSpec {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn half_width(&self) -> f64 {
        self.half_width
    }
    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }
    pub fn freq_spacing(&self) -> f64 {
        std::f64::consts::PI / self.half_width
    }
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }
    pub fn dual_cell_volume(&self) -> f64 {
        self.freq_spacing().powi(self.dim as i32)
    }
    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }
    pub fn axis_freq(&self, k: usize) -> f64 {
        (k as f64 - (self.points_per_axis / 2) as f64) * self.freq_spacing()
    }
    /// Multi-index of a flat index, axis 0 slowest.
    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let n = self.points_per_axis;
        let mut idx = vec![0; self.dim];
        let mut rem = flat;
        for a in (0..self.dim).rev() {
            idx[a] = rem % n;
            rem /= n;
        }
        idx
    }
    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .map(|i| self.axis_coord(i))
            .collect()
    }
    pub fn frequency(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .map(|k| self.axis_freq(k))
            .collect()
    }
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
    pub fn frequencies(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.frequency(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub spec: GridSpec,
    pub values: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub spec: GridSpec,
    pub values: Vec<C64>,
}

fn check_values(spec: &GridSpec, values: &[C64]) -> Result<()> {
    if values.len() != spec.len() {
        return Err(Error::GridMismatch(format!(
            "{} values for a grid of {} points",
            values.len(),
            spec.len()
        )));
    }
    if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::GridMismatch("non-finite entry".into()));
    }
    Ok(())
}

impl GridField {
    pub fn new(spec: GridSpec, values: Vec<C64>) -> Result<Self> {
        check_values(&spec, &values)?;
        Ok(Self { spec, values })
    }
    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> C64) -> Self {
        let values = (0..spec.len()).map(|i| f(&spec.point(i))).collect();
        Self { spec, values }
    }
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            values: vec![C64::new(0.0, 0.0); spec.len()],
        }
    }
    /// Discrete L² norm (Σ|u|² h^n)^{1/2}.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.spec.cell_volume()).sqrt()
    }
}

impl SpectralField {
    pub fn new(spec: GridSpec, values: Vec<C64>) -> Result<Self> {
        check_values(&spec, &values)?;
        Ok(Self { spec, values })
    }
    /// L² norm of the inverse transform, computed on the frequency side.
    pub fn l2_norm(&self) -> f64 {
        let scale = self.spec.dual_cell_volume() / (2.0 * std::f64::consts::PI).powi(self.spec.dim as i32);
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * scale).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Grid(GridField),
    Spectral(SpectralField),
}

fn sign(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// In-place transform along every axis. Forward uses e^{-ixξ} h, inverse e^{ixξ}/(N h).
fn transform_axes(spec: &GridSpec, data: &mut [C64], dir: Direction) {
    let n = spec.points_per_axis;
    let half = n / 2;
    let h = spec.spacing();
    let mut planner = FftPlanner::<f64>::new();
    let fft = match dir {
        Direction::Forward => planner.plan_fft_forward(n),
        Direction::Inverse => planner.plan_fft_inverse(n),
    };
    let mut line = vec![C64::new(0.0, 0.0); n];
    for axis in 0..spec.dim {
        let stride = n.pow((spec.dim - 1 - axis) as u32);
        let block = stride * n;
        for start in (0..data.len()).step_by(block) {
            for offset in 0..stride {
                let base = start + offset;
                match dir {
                    Direction::Forward => {
                        for j in 0..n {
                            line[j] = data[base + j * stride] * sign(j);
                        }
                        fft.process(&mut line);
                        for k in 0..n {
                            let s = sign(k + n - half);
                            data[base + k * stride] = line[k] * (s * h);
                        }
                    }
                    Direction::Inverse => {
                        for k in 0..n {
                            line[k] = data[base + k * stride] * sign(k + n - half);
                        }
                        fft.process(&mut line);
                        let scale = 1.0 / (n as f64 * h);
                        for j in 0..n {
                            data[base + j * stride] = line[j] * (sign(j) * scale);
                        }
                    }
                }
            }
        }
    }
}

pub fn forward(u: &GridField) -> Result<SpectralField> {
    check_values(&u.spec, &u.values)?;
    let mut data = u.values.clone();
    transform_axes(&u.spec, &mut data, Direction::Forward);
    Ok(SpectralField {
        spec: u.spec,
        values: data,
    })
}

pub fn inverse(v: &SpectralField) -> Result<GridField> {
    check_values(&v.spec, &v.values)?;
    let mut data = v.values.clone();
    transform_axes(&v.spec, &mut data, Direction::Inverse);
    Ok(GridField {
        spec: v.spec,
        values: data,
    })
}

/// Direction-dispatched transform: forward takes a grid field, inverse a spectral one.
pub fn spectral_transform(field: &Field, direction: Direction) -> Result<Field> {
    match (field, direction) {
        (Field::Grid(u), Direction::Forward) => forward(u).map(Field::Spectral),
        (Field::Spectral(v), Direction::Inverse) => inverse(v).map(Field::Grid),
        _ => Err(Error::GridMismatch(
            "forward expects a grid field, inverse a spectral field".into(),
        )),
    }
}

pub type OrderFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum SpatialOrder {
    Constant(f64),
    Variable(OrderFn),
}

impl std::fmt::Debug for SpatialOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpatialOrder::Constant(r) => write!(f, "Constant({r})"),
            SpatialOrder::Variable(_) => write!(f, "Variable(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SobolevOrder {
    pub s: f64,
    pub r: SpatialOrder,
}

impl SobolevOrder {
    pub fn constant(s: f64, r: f64) -> Self {
        Self {
            s,
            r: SpatialOrder::Constant(r),
        }
    }
    pub fn variable(s: f64, r: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            s,
            r: SpatialOrder::Variable(Arc::new(r)),
        }
    }
    pub fn spatial_at(&self, x: &[f64], xi: &[f64]) -> f64 {
        match &self.r {
            SpatialOrder::Constant(r) => *r,
            SpatialOrder::Variable(f) => f(x, xi),
        }
    }
    pub fn constant_r(&self) -> Option<f64> {
        match self.r {
            SpatialOrder::Constant(r) => Some(r),
            SpatialOrder::Variable(_) => None,
        }
    }
}

/// ‖⟨D⟩^s(⟨x⟩^r u)‖ for constant orders.
pub fn sobolev_norm(u: &GridField, ord: &SobolevOrder) -> Result<f64> {
    let r = ord
        .constant_r()
        .ok_or_else(|| invalid("order", "sobolev_norm needs a constant spatial order"))?;
    weighted_norm(u, ord.s, r)
}

fn weighted_norm(u: &GridField, s: f64, r: f64) -> Result<f64> {
    check_values(&u.spec, &u.values)?;
    if s == 0.0 && r == 0.0 {
        return Ok(u.l2_norm());
    }
    let spec = u.spec;
    let weighted: Vec<C64> = u
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v * jbracket(&spec.point(i)).powf(r))
        .collect();
    let w = GridField {
        spec,
        values: weighted,
    };
    if s == 0.0 {
        return Ok(w.l2_norm());
    }
    let mut hat = forward(&w)?;
    for (k, v) in hat.values.iter_mut().enumerate() {
        *v *= jbracket(&spec.frequency(k)).powf(s);
    }
    Ok(hat.l2_norm())
}

/// Variable-order norm: max of ‖⟨D⟩^s Op(⟨x⟩^{r(x,ξ)}) u‖ and the fixed-order floor
/// ‖u‖_{H^{s, min r - 1}}.
pub fn var_sobolev_norm(u: &GridField, ord: &SobolevOrder) -> Result<f64> {
    check_values(&u.spec, &u.values)?;
    let spec = u.spec;
    let pts = spec.points();
    let freqs = spec.frequencies();
    let mut rmin = f64::INFINITY;
    for x in &pts {
        for xi in &freqs {
            let r = ord.spatial_at(x, xi);
            if !r.is_finite() || r.abs() > 1e6 {
                return Err(invalid("variable_r", "unbounded variable order on the grid"));
            }
            rmin = rmin.min(r);
        }
    }
    if u.values.iter().all(|v| *v == C64::new(0.0, 0.0)) {
        return Ok(0.0);
    }
    let floor = weighted_norm(u, ord.s, rmin - 1.0)?;
    let ord_c = ord.clone();
    let weight = crate::symbol::Symbol::new(spec.dim(), (0.0, 0.0), move |x: &[f64], xi: &[f64]| {
        C64::new(jbracket(x).powf(ord_c.spatial_at(x, xi)), 0.0)
    });
    let op = crate::symbol::quantize(&weight, &spec)?;
    let au = op.apply(u)?;
    let main = weighted_norm(&au, ord.s, 0.0)?;
    Ok(main.max(floor))
}

/// Angular quadrature on S^{n-1}: nodes and weights.
pub(crate) fn sphere_rule(n: usize, m: usize) -> Vec<(Vec<f64>, f64)> {
    use std::f64::consts::PI;
    match n {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => (0..m)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / m as f64;
                (vec![t.cos(), t.sin()], 2.0 * PI / m as f64)
            })
            .collect(),
        _ => {
            let gl = gauss_legendre((m / 2).max(2));
            let mut out = Vec::with_capacity(gl.len() * m);
            for (c, wc) in gl {
                let s = (1.0 - c * c).sqrt();
                for k in 0..m {
                    let p = 2.0 * PI * k as f64 / m as f64;
                    out.push((vec![s * p.cos(), s * p.sin(), c], wc * 2.0 * PI / m as f64));
                }
            }
            out
        }
    }
}

/// Panel end and its nodes (ρ, weight, angular integral).
type Panel = (f64, Vec<(f64, f64, f64)>);

/// Radial samples of the spherical mean ∫_{S^{n-1}} |u(ρω)|² dω on adaptive Gauss–Legendre panels.
pub struct RadialProfile {
    dim: usize,
    /// In increasing order of radius.
    panels: Vec<Panel>,
}

const PANEL_DEGREE: usize = 10;
const MAX_DEPTH: usize = 14;

impl RadialProfile {
    /// Build the profile on [0, R] with panel boundaries at every integer and at each breakpoint.
    pub fn build(
        u: &(dyn Fn(&[f64]) -> C64 + Sync),
        n: usize,
        radius: f64,
        breakpoints: &[f64],
        tol: f64,
    ) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(invalid("dimension", "must be 1, 2 or 3"));
        }
        if !(radius >= 1.0 && radius.is_finite()) {
            return Err(invalid("R", "must be at least 1"));
        }
        let m = Self::angular_count(u, n, radius, tol)?;
        let rule = sphere_rule(n, m);
        let ang = |rho: f64| -> f64 {
            rule.iter()
                .map(|(w, wt)| {
                    let x: Vec<f64> = w.iter().map(|c| c * rho).collect();
                    u(&x).norm_sqr() * wt
                })
                .sum()
        };
        let mut cuts: Vec<f64> = (0..=radius.floor() as usize).map(|k| k as f64).collect();
        cuts.extend(breakpoints.iter().copied().filter(|b| *b > 0.0 && *b < radius));
        cuts.push(radius);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let nd = n as i32 - 1;
        let panel = |a: f64, b: f64| -> Vec<(f64, f64, f64)> {
            gauss_legendre_on(PANEL_DEGREE, a, b)
                .into_iter()
                .map(|(r, w)| (r, w * r.powi(nd), ang(r)))
                .collect()
        };
        let sum = |p: &[(f64, f64, f64)]| p.iter().map(|(_, w, a)| w * a).sum::<f64>();
        let coarse: Vec<Vec<(f64, f64, f64)>> =
            cuts.windows(2).map(|c| panel(c[0], c[1])).collect();
        let scale = coarse.iter().map(|p| sum(p).abs()).sum::<f64>() / coarse.len() as f64;
        let mut panels = Vec::new();
        for (c, first) in cuts.windows(2).zip(coarse) {
            let mut stack = vec![(c[0], c[1], first, 0usize)];
            let mut done: Vec<Panel> = Vec::new();
            while let Some((a, b, whole, depth)) = stack.pop() {
                let mid = 0.5 * (a + b);
                let left = panel(a, mid);
                let right = panel(mid, b);
                let fine = sum(&left) + sum(&right);
                let err = (sum(&whole) - fine).abs();
                if err <= tol * fine.abs().max(scale * 1e-3) {
                    done.push((mid, left));
                    done.push((b, right));
                } else if depth >= MAX_DEPTH {
                    return Err(Error::Quadrature(format!(
                        "radial panel [{a}, {b}] unresolved after {MAX_DEPTH} bisections"
                    )));
                } else {
                    stack.push((mid, b, right, depth + 1));
                    stack.push((a, mid, left, depth + 1));
                }
            }
            done.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            panels.extend(done);
        }
        Ok(Self { dim: n, panels })
    }

    fn angular_count(
        u: &(dyn Fn(&[f64]) -> C64 + Sync),
        n: usize,
        radius: f64,
        tol: f64,
    ) -> Result<usize> {
        if n == 1 {
            return Ok(2);
        }
        let probe = |m: usize| -> f64 {
            [0.37, 0.71, 1.0]
                .iter()
                .map(|f| {
                    sphere_rule(n, m)
                        .iter()
                        .map(|(w, wt)| {
                            let x: Vec<f64> = w.iter().map(|c| c * radius * f).collect();
                            u(&x).norm_sqr() * wt
                        })
                        .sum::<f64>()
                })
                .sum()
        };
        let mut m = 16;
        let mut prev = probe(m);
        while m <= 4096 {
            let next = probe(2 * m);
            if (next - prev).abs() <= tol * next.abs().max(1e-300) {
                return Ok(m);
            }
            m *= 2;
            prev = next;
        }
        Err(Error::Quadrature("angular rule did not converge".into()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// ∫_{|x| ≤ R} ⟨x⟩^{2r}|u|² dx using panels up to R (R must be a panel boundary).
    pub fn mass(&self, r: f64, radius: f64) -> f64 {
        let mut total = 0.0;
        for (end, nodes) in &self.panels {
            if *end > radius + 1e-9 {
                break;
            }
            total += nodes
                .iter()
                .map(|(rho, w, a)| w * a * (1.0 + rho * rho).powf(r))
                .sum::<f64>();
        }
        total
    }
}

/// ∫_{|x| ≤ R} ⟨x⟩^{2r}|u|² dx by composite Gauss–Legendre in ρ and a uniform angular rule.
pub fn truncated_weighted_mass(
    u: &(dyn Fn(&[f64]) -> C64 + Sync),
    n: usize,
    r: f64,
    radius: f64,
) -> Result<f64> {
    let profile = RadialProfile::build(u, n, radius, &[], 1e-8)?;
    Ok(profile.mass(r, radius))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian(spec: GridSpec) -> GridField {
        GridField::from_fn(spec, |x| C64::new((-0.5 * x.iter().map(|t| t * t).sum::<f64>()).exp(), 0.0))
    }

    #[test]
    fn make_grid_examples() {
        let g = make_grid(1, 20.0, 256).unwrap();
        assert_eq!(g.spacing(), 0.15625);
        assert_eq!(make_grid(2, 10.0, 64).unwrap().len(), 4096);
        assert!(make_grid(1, 20.0, 257).is_err());
        assert!(make_grid(1, 0.0, 256).is_err());
        assert!(make_grid(3, 1.0, 512).is_err());
        assert!(make_grid(4, 1.0, 8).is_err());
    }

    #[test]
    fn gaussian_fourier_pair() {
        let spec = make_grid(1, 20.0, 256).unwrap();
        let hat = forward(&gaussian(spec)).unwrap();
        for k in 0..spec.len() {
            let xi = spec.axis_freq(k);
            let expect = (2.0 * PI).sqrt() * (-0.5 * xi * xi).exp();
            assert!((hat.values[k] - expect).norm() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn spike_has_flat_spectrum() {
        let spec = make_grid(2, 4.0, 16).unwrap();
        let mut u = GridField::zeros(spec);
        u.values[37] = C64::new(1.0, 0.0);
        let hat = forward(&u).unwrap();
        let m0 = hat.values[0].norm();
        assert!(hat.values.iter().all(|v| (v.norm() - m0).abs() < 1e-14));
    }

    #[test]
    fn round_trip_and_parseval_3d() {
        let spec = make_grid(3, 3.0, 8).unwrap();
        let u = GridField::from_fn(spec, |x| C64::new(x[0].sin() + x[2], x[1] * x[1]));
        let hat = forward(&u).unwrap();
        let back = inverse(&hat).unwrap();
        let err: f64 = u.values.iter().zip(&back.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        assert!((u.l2_norm() - hat.l2_norm()).abs() / u.l2_norm() < 1e-12);
        let f = spectral_transform(&Field::Grid(u.clone()), Direction::Forward).unwrap();
        assert!(spectral_transform(&f, Direction::Forward).is_err());
    }

    #[test]
    fn sobolev_norm_zero_orders_is_l2() {
        let spec = make_grid(1, 10.0, 128).unwrap();
        let u = gaussian(spec);
        let n = sobolev_norm(&u, &SobolevOrder::constant(0.0, 0.0)).unwrap();
        assert_eq!(n, u.l2_norm());
        // ∫ e^{-x²} dx = √π
        assert!((n - PI.sqrt().sqrt()).abs() < 1e-10);
    }

    #[test]
    fn sobolev_weight_on_modulated_bump() {
        let spec = make_grid(1, 40.0, 512).unwrap();
        let mut prev = 0.0;
        for lam in [2.0, 4.0, 8.0] {
            let u = GridField::from_fn(spec, |x| {
                C64::from_polar((-x[0] * x[0] / 50.0).exp(), lam * x[0])
            });
            let n2 = sobolev_norm(&u, &SobolevOrder::constant(2.0, 0.0)).unwrap();
            let n0 = sobolev_norm(&u, &SobolevOrder::constant(0.0, 0.0)).unwrap();
            let ratio = n2 / n0 / (1.0 + lam * lam);
            assert!((ratio - 1.0).abs() < 0.05, "lam={lam} ratio={ratio}");
            assert!(n2 / n0 > prev);
            prev = n2 / n0;
        }
    }

    #[test]
    fn var_norm_constant_matches_fixed() {
        let spec = make_grid(1, 10.0, 64).unwrap();
        let u = gaussian(spec);
        let fixed = sobolev_norm(&u, &SobolevOrder::constant(1.0, -1.0)).unwrap();
        let var = var_sobolev_norm(&u, &SobolevOrder::variable(1.0, |_, _| -1.0)).unwrap();
        assert!((fixed - var).abs() / fixed < 1e-6);
        let z = GridField::zeros(spec);
        assert_eq!(var_sobolev_norm(&z, &SobolevOrder::variable(1.0, |_, _| -1.0)).unwrap(), 0.0);
        assert!(var_sobolev_norm(&u, &SobolevOrder::variable(0.0, |_, _| f64::NAN)).is_err());
    }

    #[test]
    fn var_norm_localizes_to_support() {
        let spec = make_grid(1, 16.0, 128).unwrap();
        let eps = 0.5;
        let u = GridField::from_fn(spec, |x| C64::new((-(x[0] + 8.0).powi(2)).exp(), 0.0));
        let order = SobolevOrder::variable(0.0, move |x, _| -eps * (2.0 * x[0]).tanh());
        let var = var_sobolev_norm(&u, &order).unwrap();
        // direct weighted quadrature of ⟨x⟩^{2ε}|u|²
        let direct: f64 = crate::quad::gauss_legendre_on(80, -14.0, -2.0)
            .iter()
            .map(|(x, w)| w * (1.0 + x * x).powf(eps) * (-2.0 * (x + 8.0).powi(2)).exp())
            .sum::<f64>()
            .sqrt();
        assert!((var - direct).abs() / direct < 0.02, "var={var} direct={direct}");
    }

    #[test]
    fn mass_of_shell_profile_is_linear() {
        // |u|² = 1/ρ in n = 2 far out; mass increments over [R, 2R] scale like R.
        let u = |x: &[f64]| C64::new((1.0 + x[0] * x[0] + x[1] * x[1]).powf(-0.25), 0.0);
        let p = RadialProfile::build(&u, 2, 64.0, &[], 1e-8).unwrap();
        let d1 = p.mass(0.0, 32.0) - p.mass(0.0, 16.0);
        let d2 = p.mass(0.0, 64.0) - p.mass(0.0, 32.0);
        assert!((d2 / d1 - 2.0).abs() < 0.01);
        // oracle: 2π ∫ ρ/⟨ρ⟩ dρ = 2π(⟨R⟩ - 1)
        let exact = 2.0 * PI * ((1.0f64 + 64.0 * 64.0).sqrt() - 1.0);
        assert!((p.mass(0.0, 64.0) - exact).abs() / exact < 1e-8);
    }

    #[test]
    fn mass_of_compact_function_is_constant() {
        let u = |x: &[f64]| {
            let r2: f64 = x.iter().map(|t| t * t).sum();
            C64::new(crate::quad::plateau(r2.sqrt(), 1.0, 2.0), 0.0)
        };
        let a = truncated_weighted_mass(&u, 3, 0.7, 3.0).unwrap();
        let b = truncated_weighted_mass(&u, 3, 0.7, 6.0).unwrap();
        assert!((a - b).abs() < 1e-9 * a);
        assert!(truncated_weighted_mass(&u, 2, 0.0, 0.5).is_err());
    }
}
