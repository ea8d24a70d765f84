//! Free Helmholtz generalized eigenfunctions synthesized from sphere data.
//!
//! A density f on S^{n-1} produces u(x) = (2π)^{-n} λ^{n-1} ∫ e^{iλx·θ} f(θ) dθ, which solves
//! (Δ - λ²)u = 0 with the positive Laplacian Δ = -Σ∂². Far away u splits into outgoing and
//! incoming spherical waves whose angular profiles are read off in closed form.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::grid::{sphere_rule, RadialProfile};
use crate::quad::{chebyshev, linear_fit, loglog_slope, smooth_step};

const I: C64 = C64::new(0.0, 1.0);

/// Cap on nodes per great circle before evaluation is declared under-resolved.
pub const MAX_CIRCLE_NODES_2D: usize = 1 << 15;
pub const MAX_CIRCLE_NODES_3D: usize = 2048;
/// Extra nodes beyond the 2λ|x| sampling criterion; drives the Bessel tail below 1e-16.
const NODE_MARGIN: usize = 16;
const MAX_DEGREE: usize = 96;

fn check_dim(n: usize) -> Result<()> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        Err(invalid("n", "sphere data is supported for n = 2 and n = 3"))
    }
}

fn sphere_area(n: usize) -> f64 {
    if n == 2 {
        2.0 * PI
    } else {
        4.0 * PI
    }
}

/// Nodes per great circle for a rule exact on products of degree `d` harmonics.
fn circle_count(d: usize) -> usize {
    let m = d + 2;
    m + m % 2
}

fn rule_for_degree(n: usize, d: usize) -> Vec<(Vec<f64>, f64)> {
    sphere_rule(n, circle_count(d))
}

/// Spherical harmonic label. On S¹ the degree is |order| and the function is e^{imφ}/√(2π).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Harmonic {
    pub degree: usize,
    pub order: i64,
}

impl Harmonic {
    pub fn new(n: usize, degree: usize, order: i64) -> Result<Self> {
        check_dim(n)?;
        let ok = if n == 2 {
            order.unsigned_abs() as usize == degree
        } else {
            order.unsigned_abs() as usize <= degree
        };
        if !ok || degree > MAX_DEGREE {
            return Err(invalid("harmonic", format!("no harmonic of degree {degree} and order {order} on S^{}", n - 1)));
        }
        Ok(Self { degree, order })
    }

    /// Eigenvalue of the positive sphere Laplacian.
    pub fn sphere_eigenvalue(&self, n: usize) -> f64 {
        let l = self.degree as f64;
        l * (l + n as f64 - 2.0)
    }

    /// L²-normalized value at a unit vector.
    pub fn eval(&self, n: usize, theta: &[f64]) -> C64 {
        if n == 2 {
            let phi = theta[1].atan2(theta[0]);
            return C64::from_polar(1.0 / (2.0 * PI).sqrt(), self.order as f64 * phi);
        }
        let m = self.order.unsigned_abs() as usize;
        let z = theta[2].clamp(-1.0, 1.0);
        let phi = theta[1].atan2(theta[0]);
        let p = assoc_legendre(self.degree, m, z);
        let mut ratio = 1.0;
        for k in (self.degree - m + 1)..=(self.degree + m) {
            ratio /= k as f64;
        }
        let norm = ((2 * self.degree + 1) as f64 / (4.0 * PI) * ratio).sqrt();
        let y = C64::from_polar(norm * p, m as f64 * phi);
        if self.order < 0 {
            let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
            y.conj() * sign
        } else {
            y
        }
    }

    fn all(n: usize, max_degree: usize) -> Vec<Harmonic> {
        let mut out = Vec::new();
        for l in 0..=max_degree {
            if n == 2 {
                out.push(Harmonic { degree: l, order: l as i64 });
                if l > 0 {
                    out.push(Harmonic { degree: l, order: -(l as i64) });
                }
            } else {
                for m in -(l as i64)..=(l as i64) {
                    out.push(Harmonic { degree: l, order: m });
                }
            }
        }
        out
    }
}

/// Associated Legendre P_l^m(z), m ≥ 0, with the Condon–Shortley phase.
fn assoc_legendre(l: usize, m: usize, z: f64) -> f64 {
    let s = (1.0 - z * z).max(0.0).sqrt();
    let mut pmm = 1.0;
    for k in 0..m {
        pmm *= -((2 * k + 1) as f64) * s;
    }
    if l == m {
        return pmm;
    }
    let mut prev = pmm;
    let mut cur = z * (2 * m + 1) as f64 * pmm;
    for ll in (m + 2)..=l {
        let next = (z * (2 * ll - 1) as f64 * cur - (ll + m - 1) as f64 * prev) / (ll - m) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

type DensityFn = Arc<dyn Fn(&[f64]) -> C64 + Send + Sync>;

#[derive(Clone)]
enum Repr {
    Harmonics(Vec<(Harmonic, C64)>),
    Function(DensityFn),
}

/// Complex density on S^{n-1} with a declared band limit.
#[derive(Clone)]
pub struct SphereDensity {
    dim: usize,
    degree: usize,
    repr: Repr,
}

impl std::fmt::Debug for SphereDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SphereDensity")
            .field("dim", &self.dim)
            .field("degree", &self.degree)
            .finish_non_exhaustive()
    }
}

impl SphereDensity {
    /// Finite harmonic sum from (degree, order, coefficient) triples.
    pub fn harmonics(n: usize, terms: &[(usize, i64, C64)]) -> Result<Self> {
        check_dim(n)?;
        let mut list = Vec::with_capacity(terms.len());
        for (l, m, c) in terms {
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(invalid("coefficient", "must be finite"));
            }
            list.push((Harmonic::new(n, *l, *m)?, *c));
        }
        let degree = list.iter().map(|(h, _)| h.degree).max().unwrap_or(0);
        Ok(Self { dim: n, degree, repr: Repr::Harmonics(list) })
    }

    pub fn constant(n: usize, c: C64) -> Result<Self> {
        check_dim(n)?;
        Self::harmonics(n, &[(0, 0, c * sphere_area(n).sqrt())])
    }

    /// Arbitrary density; `degree` is the band limit used to size quadratures.
    pub fn from_fn(n: usize, degree: usize, f: impl Fn(&[f64]) -> C64 + Send + Sync + 'static) -> Result<Self> {
        check_dim(n)?;
        if degree > MAX_DEGREE {
            return Err(invalid("degree", format!("at most {MAX_DEGREE}")));
        }
        Ok(Self { dim: n, degree, repr: Repr::Function(Arc::new(f)) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn eval(&self, theta: &[f64]) -> C64 {
        match &self.repr {
            Repr::Harmonics(list) => list.iter().map(|(h, c)| c * h.eval(self.dim, theta)).sum(),
            Repr::Function(f) => f(theta),
        }
    }

    /// Nodes and weights exact for products of two densities of this degree.
    pub fn quadrature(&self) -> Vec<(Vec<f64>, f64)> {
        rule_for_degree(self.dim, 2 * self.degree)
    }

    /// Projection onto harmonics up to the declared degree.
    pub fn coefficients(&self) -> Vec<(Harmonic, C64)> {
        if let Repr::Harmonics(list) = &self.repr {
            let mut merged: HashMap<Harmonic, C64> = HashMap::new();
            for (h, c) in list {
                *merged.entry(*h).or_default() += c;
            }
            let mut out: Vec<_> = merged.into_iter().collect();
            out.sort_by_key(|(h, _)| *h);
            return out;
        }
        let rule = self.quadrature();
        let vals: Vec<C64> = rule.iter().map(|(w, _)| self.eval(w)).collect();
        Harmonic::all(self.dim, self.degree)
            .into_iter()
            .map(|h| {
                let c = rule
                    .iter()
                    .zip(&vals)
                    .map(|((w, wt), v)| v * h.eval(self.dim, w).conj() * *wt)
                    .sum();
                (h, c)
            })
            .collect()
    }

    /// Relative sup-distance between the density and its harmonic projection on an offset rule.
    pub fn expansion_defect(&self) -> f64 {
        let coeffs = self.coefficients();
        let rule = rule_for_degree(self.dim, 2 * self.degree + 7);
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (w, _) in &rule {
            let v = self.eval(w);
            let s: C64 = coeffs.iter().map(|(h, c)| c * h.eval(self.dim, w)).sum();
            worst = worst.max((v - s).norm());
            scale = scale.max(v.norm());
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// ∫ f ḡ over the sphere.
    pub fn inner(&self, other: &SphereDensity) -> Result<C64> {
        if self.dim != other.dim {
            return Err(Error::GridMismatch("densities live on different spheres".into()));
        }
        let rule = rule_for_degree(self.dim, self.degree + other.degree);
        Ok(rule.iter().map(|(w, wt)| self.eval(w) * other.eval(w).conj() * *wt).sum())
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).map(|v| v.re.max(0.0).sqrt()).unwrap_or(f64::NAN)
    }

    pub fn scaled(&self, c: C64) -> SphereDensity {
        match &self.repr {
            Repr::Harmonics(list) => SphereDensity {
                repr: Repr::Harmonics(list.iter().map(|(h, v)| (*h, v * c)).collect()),
                ..self.clone()
            },
            Repr::Function(f) => {
                let f = f.clone();
                SphereDensity { repr: Repr::Function(Arc::new(move |w| f(w) * c)), ..self.clone() }
            }
        }
    }

    pub fn sum(&self, other: &SphereDensity) -> Result<SphereDensity> {
        if self.dim != other.dim {
            return Err(Error::GridMismatch("densities live on different spheres".into()));
        }
        let degree = self.degree.max(other.degree);
        if let (Repr::Harmonics(a), Repr::Harmonics(b)) = (&self.repr, &other.repr) {
            let list = a.iter().chain(b).copied().collect();
            return Ok(SphereDensity { dim: self.dim, degree, repr: Repr::Harmonics(list) });
        }
        let (p, q) = (self.clone(), other.clone());
        Ok(SphereDensity {
            dim: self.dim,
            degree,
            repr: Repr::Function(Arc::new(move |w| p.eval(w) + q.eval(w))),
        })
    }

    /// θ ↦ f(-θ).
    pub fn antipodal(&self) -> SphereDensity {
        match &self.repr {
            Repr::Harmonics(list) => SphereDensity {
                repr: Repr::Harmonics(
                    list.iter()
                        .map(|(h, c)| (*h, if h.degree % 2 == 0 { *c } else { -c }))
                        .collect(),
                ),
                ..self.clone()
            },
            Repr::Function(f) => {
                let f = f.clone();
                SphereDensity {
                    repr: Repr::Function(Arc::new(move |w| {
                        let neg: Vec<f64> = w.iter().map(|t| -t).collect();
                        f(&neg)
                    })),
                    ..self.clone()
                }
            }
        }
    }

    /// (R·f)(ω) = f(Rᵀω); for n = 2 the upper-left 2×2 block is used.
    pub fn rotated(&self, rot: [[f64; 3]; 3]) -> SphereDensity {
        let n = self.dim;
        let base = self.clone();
        SphereDensity {
            dim: n,
            degree: self.degree,
            repr: Repr::Function(Arc::new(move |w| {
                let back: Vec<f64> = (0..n).map(|j| (0..n).map(|i| rot[i][j] * w[i]).sum()).collect();
                base.eval(&back)
            })),
        }
    }

    /// Apply a multiplier diagonal in the harmonic basis.
    pub fn map_harmonics(&self, g: impl Fn(Harmonic) -> C64) -> Result<SphereDensity> {
        if matches!(self.repr, Repr::Function(_)) {
            let defect = self.expansion_defect();
            if defect > 1e-10 {
                return Err(invalid(
                    "density",
                    format!("not band-limited to degree {} (projection defect {defect:.2e})", self.degree),
                ));
            }
        }
        let list = self.coefficients().into_iter().map(|(h, c)| (h, c * g(h))).collect();
        Ok(SphereDensity { dim: self.dim, degree: self.degree, repr: Repr::Harmonics(list) })
    }
}

/// Positive-Laplacian Helmholtz operator (Δ - λ²) of `u` at the tensor Chebyshev nodes of a cube patch.
pub fn helmholtz_patch(
    u: &(dyn Fn(&[f64]) -> C64 + Sync),
    center: &[f64],
    half_width: f64,
    points: usize,
    lambda: f64,
) -> Result<Vec<(Vec<f64>, C64)>> {
    let n = center.len();
    if !(1..=3).contains(&n) {
        return Err(invalid("center", "patch dimension must be 1, 2 or 3"));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(invalid("half_width", "must be positive"));
    }
    if !(4..=40).contains(&points) {
        return Err(invalid("points", "between 4 and 40 per axis"));
    }
    let (nodes, d) = chebyshev(points);
    let d2: Vec<Vec<f64>> = (0..points)
        .map(|i| {
            (0..points)
                .map(|j| (0..points).map(|k| d[i][k] * d[k][j]).sum::<f64>() / (half_width * half_width))
                .collect()
        })
        .collect();
    let total = points.pow(n as u32);
    let coords = |flat: usize| -> Vec<f64> {
        let mut rem = flat;
        (0..n)
            .map(|a| {
                let i = rem % points;
                rem /= points;
                center[a] + half_width * nodes[i]
            })
            .collect()
    };
    let pts: Vec<Vec<f64>> = (0..total).map(coords).collect();
    let vals: Vec<C64> = pts.iter().map(|x| u(x)).collect();
    let mut out = Vec::with_capacity(total);
    for (flat, x) in pts.into_iter().enumerate() {
        let mut lap = C64::new(0.0, 0.0);
        let mut stride = 1;
        for _ in 0..n {
            let i = (flat / stride) % points;
            let base = flat - i * stride;
            for (k, w) in d2[i].iter().enumerate() {
                lap += vals[base + k * stride] * *w;
            }
            stride *= points;
        }
        out.push((x, -lap - vals[flat] * (lambda * lambda)));
    }
    Ok(out)
}

type NodeSet = Arc<Vec<([f64; 3], C64)>>;

/// Quadrature synthesis of the eigenfunction attached to a density.
pub struct Eigenfunction {
    density: SphereDensity,
    lambda: f64,
    cache: Mutex<HashMap<usize, NodeSet>>,
}

impl Eigenfunction {
    pub fn new(density: SphereDensity, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", "must be positive"));
        }
        Ok(Self { density, lambda, cache: Mutex::new(HashMap::new()) })
    }

    pub fn density(&self) -> &SphereDensity {
        &self.density
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Nodes per great circle needed at distance `radius` from the origin.
    pub fn circle_nodes(&self, radius: f64) -> usize {
        let m = 4 + 2 * (self.lambda * radius).ceil() as usize + self.density.degree + NODE_MARGIN;
        m.div_ceil(8) * 8
    }

    fn check_resolution(&self, m: usize) -> Result<()> {
        let cap = if self.density.dim == 2 { MAX_CIRCLE_NODES_2D } else { MAX_CIRCLE_NODES_3D };
        if m > cap {
            return Err(Error::Quadrature(format!(
                "sphere rule needs {m} nodes per circle, above the cap {cap}"
            )));
        }
        Ok(())
    }

    fn nodes(&self, m: usize) -> NodeSet {
        if let Some(set) = self.cache.lock().unwrap().get(&m) {
            return set.clone();
        }
        let n = self.density.dim;
        let pref = (2.0 * PI).powi(-(n as i32)) * self.lambda.powi(n as i32 - 1);
        let set: Vec<([f64; 3], C64)> = sphere_rule(n, m)
            .into_iter()
            .map(|(w, wt)| {
                let mut p = [0.0; 3];
                p[..n].copy_from_slice(&w);
                (p, self.density.eval(&w) * (wt * pref))
            })
            .collect();
        let set = Arc::new(set);
        self.cache.lock().unwrap().insert(m, set.clone());
        set
    }

    /// u(x) using `m` nodes per great circle.
    pub fn eval_at_resolution(&self, x: &[f64], m: usize) -> C64 {
        let set = self.nodes(m);
        let lx: Vec<f64> = x.iter().map(|t| t * self.lambda).collect();
        set.iter()
            .map(|(p, c)| {
                let phase: f64 = lx.iter().zip(p).map(|(a, b)| a * b).sum();
                let (s, co) = phase.sin_cos();
                c * C64::new(co, s)
            })
            .sum()
    }

    pub fn eval(&self, x: &[f64]) -> Result<C64> {
        self.check_point(x)?;
        let m = self.circle_nodes(norm(x));
        self.check_resolution(m)?;
        Ok(self.eval_at_resolution(x, m))
    }

    /// (u, ∂_r u) at x ≠ 0.
    pub fn eval_with_radial(&self, x: &[f64]) -> Result<(C64, C64)> {
        self.check_point(x)?;
        let r = norm(x);
        if r == 0.0 {
            return Err(invalid("x", "radial derivative needs x ≠ 0"));
        }
        let m = self.circle_nodes(r);
        self.check_resolution(m)?;
        let set = self.nodes(m);
        let dir: Vec<f64> = x.iter().map(|t| t / r).collect();
        let mut u = C64::new(0.0, 0.0);
        let mut du = C64::new(0.0, 0.0);
        for (p, c) in set.iter() {
            let along: f64 = dir.iter().zip(p).map(|(a, b)| a * b).sum();
            let (s, co) = (self.lambda * r * along).sin_cos();
            let term = c * C64::new(co, s);
            u += term;
            du += term * I * (self.lambda * along);
        }
        Ok((u, du))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.density.dim {
            return Err(invalid("x", format!("expected {} coordinates", self.density.dim)));
        }
        if x.iter().any(|t| !t.is_finite()) {
            return Err(invalid("x", "must be finite"));
        }
        Ok(())
    }

    /// Largest |(Δ - λ²)u| on a Chebyshev patch, all nodes sharing one quadrature rule.
    pub fn patch_residual(&self, center: &[f64], half_width: f64, points: usize) -> Result<f64> {
        self.check_point(center)?;
        let reach = norm(center) + half_width * (center.len() as f64).sqrt();
        let m = self.circle_nodes(reach);
        self.check_resolution(m)?;
        let u = |x: &[f64]| self.eval_at_resolution(x, m);
        let res = helmholtz_patch(&u, center, half_width, points, self.lambda)?;
        Ok(res.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max))
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|t| t * t).sum::<f64>().sqrt()
}

/// u(x) for the density f at frequency λ.
pub fn eigenfunction(f: &SphereDensity, lambda: f64, x: &[f64]) -> Result<C64> {
    Eigenfunction::new(f.clone(), lambda)?.eval(x)
}

/// Outgoing and incoming angular profiles of the spherical-wave expansion.
#[derive(Clone, Debug)]
pub struct AsymptoticProfile {
    pub f_plus: SphereDensity,
    pub f_minus: SphereDensity,
    pub lambda: f64,
}

/// Radial prefactor (2π)^{-n}(2π/λ)^{(n-1)/2}λ^{n-1} shared by both profiles.
pub fn profile_prefactor(n: usize, lambda: f64) -> f64 {
    let k = (n as f64 - 1.0) / 2.0;
    (2.0 * PI).powi(-(n as i32)) * (2.0 * PI / lambda).powf(k) * lambda.powi(n as i32 - 1)
}

/// Unit phase e^{∓iπ(n-1)/4} carried by the outgoing (`sign` = +1) or incoming (-1) wave.
pub fn profile_phase(n: usize, sign: i8) -> C64 {
    C64::from_polar(1.0, -(sign as f64) * PI * (n as f64 - 1.0) / 4.0)
}

/// Stationary points θ = ±x̂ give u ~ |x|^{-(n-1)/2}(e^{iλ|x|}f₊(x̂) + e^{-iλ|x|}f₋(x̂)).
pub fn asymptotic_profile(f: &SphereDensity, lambda: f64) -> Result<AsymptoticProfile> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", "must be positive"));
    }
    let n = f.dim();
    let c = profile_prefactor(n, lambda);
    Ok(AsymptoticProfile {
        f_plus: f.scaled(profile_phase(n, 1) * c),
        f_minus: f.antipodal().scaled(profile_phase(n, -1) * c),
        lambda,
    })
}

/// Leading stationary-phase term of the eigenfunction; needs |x| ≥ 5/λ.
pub fn stationary_phase_leading(f: &SphereDensity, lambda: f64, x: &[f64]) -> Result<C64> {
    if x.len() != f.dim() {
        return Err(invalid("x", format!("expected {} coordinates", f.dim())));
    }
    let r = norm(x);
    if !(lambda > 0.0) || r < 5.0 / lambda {
        return Err(invalid("x", "leading term needs |x| ≥ 5/λ"));
    }
    let prof = asymptotic_profile(f, lambda)?;
    let dir: Vec<f64> = x.iter().map(|t| t / r).collect();
    let decay = r.powf(-(f.dim() as f64 - 1.0) / 2.0);
    let e = C64::from_polar(1.0, lambda * r);
    Ok((e * prof.f_plus.eval(&dir) + e.conj() * prof.f_minus.eval(&dir)) * decay)
}

/// Reads (f₊, f₋)(ω) from samples at R and R + π/(2λ); an O(1/R) cross-check of the closed form.
pub fn fit_profiles(u: &Eigenfunction, radius: f64, direction: &[f64]) -> Result<(C64, C64)> {
    let lam = u.lambda();
    let k = (u.density().dim() as f64 - 1.0) / 2.0;
    let dn = norm(direction);
    if dn == 0.0 {
        return Err(invalid("direction", "must be nonzero"));
    }
    let sample = |r: f64| -> Result<C64> {
        let x: Vec<f64> = direction.iter().map(|t| t / dn * r).collect();
        Ok(u.eval(&x)? * r.powf(k))
    };
    let r2 = radius + PI / (2.0 * lam);
    let (v1, v2) = (sample(radius)?, sample(r2)?);
    let a = C64::from_polar(1.0, lam * radius);
    Ok(((v1 - I * v2) / (a * 2.0), (v1 + I * v2) / (a.conj() * 2.0)))
}

#[derive(Clone, Debug)]
pub struct LadderRow {
    pub radius: f64,
    pub abs_u: f64,
    pub abs_leading: f64,
    pub error: f64,
}

/// Envelope of |u - leading| over one oscillation window per radius, with the fitted log-log slope.
#[derive(Clone, Debug)]
pub struct AsymptoticLadder {
    pub rows: Vec<LadderRow>,
    pub slope: f64,
}

impl AsymptoticLadder {
    pub fn table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        use crate::report::fmt_f64;
        let header = ["radius", "abs_u", "abs_leading", "error"].map(String::from).to_vec();
        let rows = self
            .rows
            .iter()
            .map(|r| vec![fmt_f64(r.radius), fmt_f64(r.abs_u), fmt_f64(r.abs_leading), fmt_f64(r.error)])
            .collect();
        (header, rows)
    }
}

const WINDOW_SAMPLES: usize = 8;

pub fn asymptotic_error_ladder(
    f: &SphereDensity,
    lambda: f64,
    direction: &[f64],
    radii: &[f64],
) -> Result<AsymptoticLadder> {
    if radii.len() < 2 {
        return Err(invalid("radii", "need at least two radii"));
    }
    let dn = norm(direction);
    if direction.len() != f.dim() || dn == 0.0 {
        return Err(invalid("direction", "nonzero vector of the sphere's ambient dimension"));
    }
    let dir: Vec<f64> = direction.iter().map(|t| t / dn).collect();
    let u = Eigenfunction::new(f.clone(), lambda)?;
    let period = 2.0 * PI / lambda;
    let rows: Vec<Result<LadderRow>> = std::thread::scope(|s| {
        let handles: Vec<_> = radii
            .iter()
            .map(|&radius| {
                let (u, dir) = (&u, &dir);
                s.spawn(move || -> Result<LadderRow> {
                    let m = u.circle_nodes(radius + period);
                    u.check_resolution(m)?;
                    let mut row = LadderRow { radius, abs_u: 0.0, abs_leading: 0.0, error: 0.0 };
                    for k in 0..WINDOW_SAMPLES {
                        let r = radius + period * k as f64 / WINDOW_SAMPLES as f64;
                        let x: Vec<f64> = dir.iter().map(|t| t * r).collect();
                        let v = u.eval_at_resolution(&x, m);
                        let lead = stationary_phase_leading(f, lambda, &x)?;
                        row.abs_u = row.abs_u.max(v.norm());
                        row.abs_leading = row.abs_leading.max(lead.norm());
                        row.error = row.error.max((v - lead).norm());
                    }
                    Ok(row)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ladder worker panicked")).collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.radius).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.error).collect();
    Ok(AsymptoticLadder { slope: loglog_slope(&xs, &ys), rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassRegime {
    Growth,
    Logarithmic,
    Bounded,
}

impl MassRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            MassRegime::Growth => "growth",
            MassRegime::Logarithmic => "logarithmic",
            MassRegime::Bounded => "bounded",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ThresholdRow {
    pub r_order: f64,
    pub regime: MassRegime,
    /// Truncated weighted mass at each scan radius.
    pub masses: Vec<f64>,
    /// Log-log slope of mass increments between consecutive radii.
    pub exponent: f64,
    /// R² of mass against log R.
    pub log_fit_r2: f64,
    /// Mass at the largest radius over mass at the next one down; tends to 1
    /// exactly when the mass stays bounded, independent of the smallest radius.
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct ThresholdTable {
    pub radii: Vec<f64>,
    pub rows: Vec<ThresholdRow>,
}

impl ThresholdTable {
    pub fn mass_at(&self, row: usize, radius: f64) -> Option<f64> {
        let k = self.radii.iter().position(|r| (r - radius).abs() < 1e-9)?;
        Some(self.rows.get(row)?.masses[k])
    }

    pub fn table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        use crate::report::fmt_f64;
        let header = ["r_order", "regime", "exponent", "log_fit_r2", "ratio"].map(String::from).to_vec();
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    fmt_f64(r.r_order),
                    r.regime.as_str().into(),
                    fmt_f64(r.exponent),
                    fmt_f64(r.log_fit_r2),
                    fmt_f64(r.ratio),
                ]
            })
            .collect();
        (header, rows)
    }
}

/// Growth of ∫_{|x|≤R}⟨x⟩^{2r}|u|² across radii; a clean R^{2r+1} law needs geometric radii.
pub fn threshold_scan(f: &SphereDensity, lambda: f64, r_orders: &[f64], radii: &[f64]) -> Result<ThresholdTable> {
    let mut radii = radii.to_vec();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if radii.len() < 3 || radii[0] < 1.0 {
        return Err(invalid("radii", "need at least three radii, all ≥ 1"));
    }
    if radii[radii.len() - 1] < 10.0 * radii[0] {
        return Err(invalid("radii", "must span at least one decade"));
    }
    if r_orders.iter().any(|r| !r.is_finite()) {
        return Err(invalid("r_orders", "must be finite"));
    }
    let u = Eigenfunction::new(f.clone(), lambda)?;
    let rmax = radii[radii.len() - 1];
    u.check_resolution(u.circle_nodes(rmax))?;
    let eval = |x: &[f64]| u.eval_at_resolution(x, u.circle_nodes(norm(x)));
    let profile = RadialProfile::build(&eval, f.dim(), rmax, &radii, 1e-8)?;
    let logs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let rows = r_orders
        .iter()
        .map(|&r| {
            let masses: Vec<f64> = radii.iter().map(|&big| profile.mass(r, big)).collect();
            let mid: Vec<f64> = logs.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            let inc: Vec<f64> = masses
                .windows(2)
                .zip(logs.windows(2))
                .map(|(m, l)| ((m[1] - m[0]) / (l[1] - l[0])).abs().max(1e-300).ln())
                .collect();
            let regime = if (r + 0.5).abs() < 1e-9 {
                MassRegime::Logarithmic
            } else if r > -0.5 {
                MassRegime::Growth
            } else {
                MassRegime::Bounded
            };
            ThresholdRow {
                r_order: r,
                regime,
                exponent: linear_fit(&mid, &inc).0,
                log_fit_r2: linear_fit(&logs, &masses).2,
                ratio: masses[masses.len() - 1] / masses[masses.len() - 2],
                masses,
            }
        })
        .collect();
    Ok(ThresholdTable { radii, rows })
}

/// Oscillation e^{+iλr} (outgoing) or e^{-iλr} (incoming) of a formal series.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesPhase {
    Outgoing,
    Incoming,
}

impl SeriesPhase {
    fn sign(self) -> f64 {
        match self {
            SeriesPhase::Outgoing => 1.0,
            SeriesPhase::Incoming => -1.0,
        }
    }
}

/// Coefficient of r^{-p-1}e^{±iλr}a in (Δ - λ²)(r^{-p}e^{±iλr}a): ±iλ(2p - n + 1).
pub fn obstruction_coefficient(p: f64, n: usize, lambda: f64, phase: SeriesPhase) -> C64 {
    I * (phase.sign() * lambda * (2.0 * p - n as f64 + 1.0))
}

/// a_{j+1} cancelling the r^{-(n-1)/2-j-2} error left by the term r^{-(n-1)/2-j}e^{±iλr}a_j.
pub fn poisson_series_step(a: &SphereDensity, j: usize, lambda: f64, phase: SeriesPhase) -> Result<SphereDensity> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", "must be positive"));
    }
    let n = a.dim();
    let p = (n as f64 - 1.0) / 2.0 + j as f64;
    let next = obstruction_coefficient(p + 1.0, n, lambda, phase);
    let zeroth = p * (n as f64 - 2.0 - p);
    a.map_harmonics(|h| -(zeroth + h.sphere_eigenvalue(n)) / next)
}

/// Σ_j r^{-(n-1)/2-j} e^{±iλr} a_j(ω).
#[derive(Clone, Debug)]
pub struct ExpansionCoeffs {
    pub terms: Vec<SphereDensity>,
    pub lambda: f64,
    pub phase: SeriesPhase,
}

/// Builds a₀..a_J for the radial power p; any p other than (n-1)/2 is an obstruction.
pub fn formal_series(a0: &SphereDensity, lambda: f64, big_j: usize, p: f64, phase: SeriesPhase) -> Result<ExpansionCoeffs> {
    let n = a0.dim();
    let coef = obstruction_coefficient(p, n, lambda, phase);
    if coef.norm() > 1e-12 * lambda.max(1.0) {
        return Err(Error::Obstruction(format!(
            "radial power {p} leaves leading coefficient {} + {}i; only (n-1)/2 = {} cancels",
            coef.re,
            coef.im,
            (n as f64 - 1.0) / 2.0
        )));
    }
    let mut terms = vec![a0.map_harmonics(|_| C64::new(1.0, 0.0))?];
    for j in 0..big_j {
        let next = poisson_series_step(&terms[j], j, lambda, phase)?;
        terms.push(next);
    }
    Ok(ExpansionCoeffs { terms, lambda, phase })
}

impl ExpansionCoeffs {
    fn base_power(&self) -> f64 {
        (self.terms[0].dim() as f64 - 1.0) / 2.0
    }

    /// Partial sum through a_J and its radial derivative at x ≠ 0.
    pub fn eval_with_radial(&self, x: &[f64], big_j: usize) -> (C64, C64) {
        let r = norm(x);
        let dir: Vec<f64> = x.iter().map(|t| t / r).collect();
        let k = self.phase.sign() * self.lambda;
        let e = C64::from_polar(1.0, k * r);
        let mut u = C64::new(0.0, 0.0);
        let mut du = C64::new(0.0, 0.0);
        for (j, a) in self.terms.iter().take(big_j + 1).enumerate() {
            let p = self.base_power() + j as f64;
            let v = a.eval(&dir) * e * r.powf(-p);
            u += v;
            du += v * (I * k - p / r);
        }
        (u, du)
    }

    pub fn eval(&self, x: &[f64], big_j: usize) -> C64 {
        self.eval_with_radial(x, big_j).0
    }

    /// Closed-form (Δ - λ²) of the partial sum: only the last term's r^{-p_J-2} remainder survives.
    pub fn exact_residual(&self, x: &[f64], big_j: usize) -> Result<C64> {
        let big_j = big_j.min(self.terms.len() - 1);
        let n = self.terms[0].dim();
        let r = norm(x);
        let dir: Vec<f64> = x.iter().map(|t| t / r).collect();
        let p = self.base_power() + big_j as f64;
        let rest = self.terms[big_j].map_harmonics(|h| C64::new(p * (n as f64 - 2.0 - p) + h.sphere_eigenvalue(n), 0.0))?;
        Ok(rest.eval(&dir) * C64::from_polar(1.0, self.phase.sign() * self.lambda * r) * r.powf(-p - 2.0))
    }
}

/// A free eigenfunction, optionally plus an outgoing series cut off near the origin.
#[derive(Clone, Debug)]
pub struct PairingSolution {
    pub density: SphereDensity,
    pub tail: Option<ExpansionCoeffs>,
}

const TAIL_TERMS: usize = 2;

impl PairingSolution {
    pub fn free(density: SphereDensity) -> Self {
        Self { density, tail: None }
    }

    /// Adds (1 - χ(r)) Σ_{j≤2} r^{-(n-1)/2-j}e^{iλr}a_j with χ = 1 on r ≤ 1 and 0 on r ≥ 2.
    pub fn with_outgoing_tail(density: SphereDensity, a0: &SphereDensity, lambda: f64) -> Result<Self> {
        if a0.dim() != density.dim() {
            return Err(Error::GridMismatch("tail and density live on different spheres".into()));
        }
        let p = (a0.dim() as f64 - 1.0) / 2.0;
        let tail = formal_series(a0, lambda, TAIL_TERMS, p, SeriesPhase::Outgoing)?;
        Ok(Self { density, tail: Some(tail) })
    }

    pub fn eval(&self, free: &Eigenfunction, x: &[f64]) -> Result<C64> {
        let mut v = free.eval(x)?;
        if let Some(t) = &self.tail {
            let r = norm(x);
            if r > 1.0 {
                v += t.eval(x, TAIL_TERMS) * smooth_step(r - 1.0);
            }
        }
        Ok(v)
    }

    fn value_and_radial(&self, free: &Eigenfunction, x: &[f64]) -> Result<(C64, C64)> {
        let (mut u, mut du) = free.eval_with_radial(x)?;
        if let Some(t) = &self.tail {
            let (a, b) = t.eval_with_radial(x, TAIL_TERMS);
            u += a;
            du += b;
        }
        Ok((u, du))
    }

    pub fn profile(&self, lambda: f64) -> Result<AsymptoticProfile> {
        let mut prof = asymptotic_profile(&self.density, lambda)?;
        if let Some(t) = &self.tail {
            prof.f_plus = prof.f_plus.sum(&t.terms[0])?;
        }
        Ok(prof)
    }
}

#[derive(Clone, Debug)]
pub struct PairingReport {
    pub radius: f64,
    /// ∫_{B_R}(u₁ conj(Pu₂) - Pu₁ conj(u₂)) evaluated as the Green flux through |x| = R.
    pub lhs: C64,
    /// 2iλ∫(f₁₊ conj(f₂₊) - f₁₋ conj(f₂₋)).
    pub rhs: C64,
    pub gap: f64,
    /// gap / |rhs|, or gap / (2λ Σ‖f‖‖f‖) when rhs vanishes.
    pub relative_gap: f64,
}

pub fn boundary_pairing_check(u1: &PairingSolution, u2: &PairingSolution, lambda: f64, radius: f64) -> Result<PairingReport> {
    let n = u1.density.dim();
    if u2.density.dim() != n {
        return Err(Error::GridMismatch("solutions live in different dimensions".into()));
    }
    if radius < 2.0 || radius < 5.0 / lambda {
        return Err(invalid("R", "must be at least max(2, 5/λ)"));
    }
    let e1 = Eigenfunction::new(u1.density.clone(), lambda)?;
    let e2 = Eigenfunction::new(u2.density.clone(), lambda)?;
    let tail_degree = |u: &PairingSolution| u.tail.as_ref().map_or(0, |t| t.terms[0].degree());
    let degree = u1.density.degree().max(u2.density.degree()).max(tail_degree(u1)).max(tail_degree(u2));
    let rule = rule_for_degree(n, 2 * degree + 16);
    let area = radius.powi(n as i32 - 1);
    let mut lhs = C64::new(0.0, 0.0);
    for (w, wt) in &rule {
        let x: Vec<f64> = w.iter().map(|t| t * radius).collect();
        let (a, da) = u1.value_and_radial(&e1, &x)?;
        let (b, db) = u2.value_and_radial(&e2, &x)?;
        lhs -= (a * db.conj() - da * b.conj()) * (wt * area);
    }
    let p1 = u1.profile(lambda)?;
    let p2 = u2.profile(lambda)?;
    let rhs = I * (2.0 * lambda) * (p1.f_plus.inner(&p2.f_plus)? - p1.f_minus.inner(&p2.f_minus)?);
    let gap = (lhs - rhs).norm();
    let scale = 2.0 * lambda * (p1.f_plus.norm() * p2.f_plus.norm() + p1.f_minus.norm() * p2.f_minus.norm());
    let denom = if rhs.norm() > 1e-9 * scale { rhs.norm() } else { scale };
    Ok(PairingReport { radius, lhs, rhs, gap, relative_gap: if denom > 0.0 { gap / denom } else { gap } })
}

/// Free scattering matrix f₋ ↦ f₊: an antipodal map times a fixed unit phase.
pub fn free_scattering_matrix(lambda: f64, f_minus: &SphereDensity) -> Result<SphereDensity> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", "must be positive"));
    }
    let n = f_minus.dim();
    let ratio = profile_phase(n, 1) / profile_phase(n, -1);
    Ok(f_minus.antipodal().scaled(ratio))
}

/// The S-matrix phase recovered from synthesized profiles: ⟨f₊, f₋∘(-1)⟩/‖f₋‖² on a rule of the given degree.
pub fn derive_smatrix_constant(n: usize, lambda: f64, rule_degree: usize) -> Result<C64> {
    check_dim(n)?;
    let probe: Vec<(usize, i64, C64)> = if n == 2 {
        vec![(0, 0, C64::new(0.7, 0.1)), (1, 1, C64::new(0.2, -0.4)), (3, -3, C64::new(-0.3, 0.25))]
    } else {
        vec![(0, 0, C64::new(0.7, 0.1)), (1, -1, C64::new(0.2, -0.4)), (3, 2, C64::new(-0.3, 0.25))]
    };
    let f = SphereDensity::harmonics(n, &probe)?;
    let prof = asymptotic_profile(&f, lambda)?;
    let flipped = prof.f_minus.antipodal();
    let rule = rule_for_degree(n, rule_degree.max(2 * f.degree()));
    let num: C64 = rule.iter().map(|(w, wt)| prof.f_plus.eval(w) * flipped.eval(w).conj() * *wt).sum();
    let den: f64 = rule.iter().map(|(w, wt)| prof.f_minus.eval(w).norm_sqr() * wt).sum();
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth_2d() -> SphereDensity {
        SphereDensity::harmonics(
            2,
            &[(0, 0, C64::new(1.0, 0.0)), (1, 1, C64::new(0.3, 0.2)), (2, -2, C64::new(-0.2, 0.1))],
        )
        .unwrap()
    }

    /// J_k(z) = (1/π)∫₀^π cos(kτ - z sin τ)dτ by composite Gauss–Legendre.
    fn bessel_j(k: i64, z: f64) -> f64 {
        let mut s = 0.0;
        let panels = 64;
        for p in 0..panels {
            let a = PI * p as f64 / panels as f64;
            let b = PI * (p + 1) as f64 / panels as f64;
            for (t, w) in crate::quad::gauss_legendre_on(12, a, b) {
                s += w * (k as f64 * t - z * t.sin()).cos();
            }
        }
        s / PI
    }

    #[test]
    fn harmonics_are_orthonormal_under_their_rule() {
        for n in [2, 3] {
            let hs = Harmonic::all(n, 4);
            let rule = rule_for_degree(n, 8);
            for a in &hs {
                for b in &hs {
                    let v: C64 = rule.iter().map(|(w, wt)| a.eval(n, w) * b.eval(n, w).conj() * *wt).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((v - want).norm() < 1e-12, "{n} {a:?} {b:?} {v}");
                }
            }
        }
    }

    #[test]
    fn constant_density_in_three_dimensions_gives_sinc() {
        let f = SphereDensity::constant(3, C64::new(1.0, 0.0)).unwrap();
        let lam = 1.7;
        let u = Eigenfunction::new(f, lam).unwrap();
        for r in [0.0, 0.3, 2.0, 11.0] {
            let x = [r * 0.6, -r * 0.8, 0.0];
            let v = u.eval(&x).unwrap();
            let sinc = if r == 0.0 { 1.0 } else { (lam * r).sin() / (lam * r) };
            let want = (2.0 * PI).powi(-3) * lam * lam * 4.0 * PI * sinc;
            assert!((v - want).norm() < 1e-13, "{r} {v} {want}");
        }
    }

    #[test]
    fn circle_eigenfunction_matches_bessel_series() {
        let f = smooth_2d();
        let lam = 1.3;
        let u = Eigenfunction::new(f.clone(), lam).unwrap();
        let (r, phi) = (7.5f64, 0.4f64);
        let x = [r * phi.cos(), r * phi.sin()];
        let want: C64 = f
            .coefficients()
            .iter()
            .map(|(h, c)| {
                let m = h.order;
                c * I.powi(m as i32) * bessel_j(m, lam * r) * C64::from_polar(1.0 / (2.0 * PI).sqrt(), m as f64 * phi)
            })
            .sum::<C64>()
            * (2.0 * PI).powi(-2)
            * (2.0 * PI)
            * lam;
        assert!((u.eval(&x).unwrap() - want).norm() < 1e-13);
    }

    #[test]
    fn origin_value_is_the_sphere_average() {
        let f = smooth_2d();
        let v = eigenfunction(&f, 2.0, &[0.0, 0.0]).unwrap();
        let mean: C64 = f.quadrature().iter().map(|(w, wt)| f.eval(w) * *wt).sum();
        assert!((v - mean * (2.0 * PI).powi(-2) * 2.0).norm() < 1e-14);
    }

    #[test]
    fn patch_residual_is_tiny() {
        let u = Eigenfunction::new(smooth_2d(), 1.0).unwrap();
        assert!(u.patch_residual(&[3.0, -1.0], 0.5, 16).unwrap() < 1e-8);
        let f3 = SphereDensity::harmonics(3, &[(0, 0, C64::new(1.0, 0.0)), (2, 1, C64::new(0.0, 0.5))]).unwrap();
        let u3 = Eigenfunction::new(f3, 1.0).unwrap();
        assert!(u3.patch_residual(&[1.0, 2.0, -0.5], 0.5, 16).unwrap() < 1e-8);
    }

    #[test]
    fn under_resolved_evaluation_is_flagged() {
        let f = SphereDensity::constant(3, C64::new(1.0, 0.0)).unwrap();
        let u = Eigenfunction::new(f, 1.0).unwrap();
        assert!(matches!(u.eval(&[5000.0, 0.0, 0.0]), Err(Error::Quadrature(_))));
    }

    #[test]
    fn incoming_only_when_forward_profile_vanishes() {
        // f = 1 + cos φ vanishes at φ = π, so along -e₁ only e^{-iλr} survives at leading order
        let f = SphereDensity::from_fn(2, 1, |w| C64::new(1.0 + w[0], 0.0)).unwrap();
        let r = 40.0;
        let lead = stationary_phase_leading(&f, 1.0, &[-r, 0.0]).unwrap();
        let prof = asymptotic_profile(&f, 1.0).unwrap();
        assert!(prof.f_plus.eval(&[-1.0, 0.0]).norm() < 1e-15);
        let want = prof.f_minus.eval(&[-1.0, 0.0]) * C64::from_polar(1.0, -r) / r.sqrt();
        assert!((lead - want).norm() < 1e-15);
    }

    #[test]
    fn fitted_profiles_agree_with_closed_form() {
        let f = smooth_2d();
        let u = Eigenfunction::new(f.clone(), 1.0).unwrap();
        let prof = asymptotic_profile(&f, 1.0).unwrap();
        let w = [0.6, 0.8];
        let (a, b) = fit_profiles(&u, 200.0, &w).unwrap();
        let scale = prof.f_plus.eval(&w).norm();
        assert!((a - prof.f_plus.eval(&w)).norm() < 1e-2 * scale);
        assert!((b - prof.f_minus.eval(&w)).norm() < 1e-2 * scale);
    }

    #[test]
    fn error_slope_in_two_dimensions() {
        let radii: Vec<f64> = (0..6).map(|k| 20.0 * 10f64.powf(k as f64 / 5.0)).collect();
        let ladder = asymptotic_error_ladder(&smooth_2d(), 1.0, &[0.6, 0.8], &radii).unwrap();
        assert!((ladder.slope + 1.5).abs() < 0.2, "{}", ladder.slope);
    }

    #[test]
    fn no_stationary_point_means_fast_decay() {
        // support kept in |φ - π/2| < 0.6, away from ±e₁
        let bump = |w: &[f64]| {
            let d = (w[0]).asin().abs();
            C64::new(crate::quad::smooth_step((0.6 - d) / 0.3), 0.0)
        };
        let f = SphereDensity::from_fn(2, 48, move |w| if w[1] > 0.0 { bump(w) } else { C64::new(0.0, 0.0) }).unwrap();
        let u = Eigenfunction::new(f.clone(), 1.0).unwrap();
        let lead = stationary_phase_leading(&f, 1.0, &[60.0, 0.0]).unwrap();
        assert_eq!(lead, C64::new(0.0, 0.0));
        let a = u.eval(&[30.0, 0.0]).unwrap().norm() * 30f64.sqrt();
        let b = u.eval(&[120.0, 0.0]).unwrap().norm() * 120f64.sqrt();
        assert!(b < 0.25 * a.max(1e-300) || b < 1e-10, "{a} {b}");
    }

    #[test]
    fn obstruction_is_reported_for_wrong_power() {
        let a0 = SphereDensity::constant(3, C64::new(1.0, 0.0)).unwrap();
        let err = formal_series(&a0, 1.0, 2, 1.3, SeriesPhase::Outgoing).unwrap_err();
        assert!(matches!(err, Error::Obstruction(_)));
        let c = obstruction_coefficient(1.3, 3, 1.0, SeriesPhase::Outgoing);
        assert!((c - C64::new(0.0, 0.6)).norm() < 1e-15);
    }

    #[test]
    fn constant_amplitude_in_three_dimensions_terminates() {
        // e^{iλr}/r is exact, so the step from a constant vanishes
        let a0 = SphereDensity::constant(3, C64::new(2.0, 0.0)).unwrap();
        let a1 = poisson_series_step(&a0, 0, 1.0, SeriesPhase::Outgoing).unwrap();
        assert!(a1.norm() < 1e-15);
        // degree-one data: a₁ = -2/(2iλ) a₀
        let b0 = SphereDensity::harmonics(3, &[(1, 0, C64::new(1.0, 0.0))]).unwrap();
        let b1 = poisson_series_step(&b0, 0, 2.0, SeriesPhase::Outgoing).unwrap();
        let w = [0.0, 0.6, 0.8];
        assert!((b1.eval(&w) - b0.eval(&w) * (I * 0.5)).norm() < 1e-14);
    }

    #[test]
    fn series_residual_matches_closed_form() {
        let a0 = SphereDensity::harmonics(2, &[(0, 0, C64::new(1.0, 0.0)), (1, 1, C64::new(0.5, 0.0))]).unwrap();
        let s = formal_series(&a0, 1.0, 2, 0.5, SeriesPhase::Outgoing).unwrap();
        for big_j in 0..=2 {
            let x = [9.0, 4.0];
            let u = |y: &[f64]| s.eval(y, big_j);
            let res = helmholtz_patch(&u, &x, 0.5, 17, 1.0).unwrap();
            let (_, centre) = &res[17 * 8 + 8];
            let want = s.exact_residual(&x, big_j).unwrap();
            assert!((centre - want).norm() < 1e-6 * want.norm() + 1e-12, "{big_j} {centre} {want}");
        }
    }

    #[test]
    fn self_pairing_of_a_free_wave_vanishes() {
        let u = PairingSolution::free(smooth_2d());
        let rep = boundary_pairing_check(&u, &u, 1.0, 50.0).unwrap();
        assert!(rep.rhs.norm() < 1e-12 && rep.lhs.norm() < 1e-10, "{rep:?}");
    }

    #[test]
    fn scattering_matrix_on_harmonics() {
        let f = SphereDensity::harmonics(3, &[(2, 1, C64::new(1.0, 0.0))]).unwrap();
        let s = free_scattering_matrix(1.0, &f).unwrap();
        let w = [0.48, 0.6, 0.64];
        let neg = [-0.48, -0.6, -0.64];
        assert!((s.eval(&w) + f.eval(&neg)).norm() < 1e-14);
        assert!((s.norm() - f.norm()).abs() < 1e-13);
    }
}
