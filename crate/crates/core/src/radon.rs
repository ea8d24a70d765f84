//! Flat localized X-ray transform: forward map, backprojection, normal-operator symbol and an
//! injectivity probe on small grids.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::grid::{make_grid, GridSpec};
use crate::quad::{bessel_j0, gauss_legendre, gauss_legendre_on, plateau};

/// Nodes on the flat part |t| ≤ 1 and on each transition piece of the line integrals.
const LINE_NODES: usize = 16;
const TRANSITION_NODES: usize = 32;
/// Quasi-interpolation stencil reach in units of the Gaussian width.
const STENCIL_SIGMAS: f64 = 7.0;

type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Even, nonnegative line weight φ with φ > 0 on |t| ≤ 1 and φ = 0 on |t| ≥ 2.
#[derive(Clone)]
pub struct LocalizerProfile {
    phi: Profile,
}

impl std::fmt::Debug for LocalizerProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("LocalizerProfile")
    }
}

impl LocalizerProfile {
    /// Smooth plateau: 1 on |t| ≤ 1, e^{-1/s}-type transition, 0 on |t| ≥ 2.
    pub fn standard() -> Self {
        Self { phi: Arc::new(|t| plateau(t, 1.0, 2.0)) }
    }

    pub fn new(phi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        for k in 0..=800 {
            let t = -3.0 + 6.0 * k as f64 / 800.0;
            let v = phi(t);
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid("phi", format!("must be finite and nonnegative (φ({t}) = {v})")));
            }
            if (v - phi(-t)).abs() > 1e-12 * (1.0 + v.abs()) {
                return Err(invalid("phi", "must be even"));
            }
            if t.abs() <= 1.0 && v <= 0.0 {
                return Err(invalid("phi", "must be positive on |t| ≤ 1"));
            }
            if t.abs() >= 2.0 && v != 0.0 {
                return Err(invalid("phi", "must vanish on |t| ≥ 2"));
            }
        }
        Ok(Self { phi: Arc::new(phi) })
    }

    pub fn phi(&self, t: f64) -> f64 {
        (self.phi)(t)
    }

    /// Line rule for ∫ g(t)φ(t) dt with breaks at ±1.
    pub fn line_rule(&self) -> Vec<(f64, f64)> {
        [(-2.0, -1.0, TRANSITION_NODES), (-1.0, 1.0, LINE_NODES), (1.0, 2.0, TRANSITION_NODES)]
            .iter()
            .flat_map(|&(a, b, m)| gauss_legendre_on(m, a, b))
            .map(|(t, w)| (t, w * self.phi(t)))
            .filter(|(_, w)| *w != 0.0)
            .collect()
    }

    pub fn integral(&self) -> f64 {
        self.line_rule().iter().map(|(_, w)| w).sum()
    }

    /// φ̃ = φ * φ, supported in |s| ≤ 4.
    pub fn phi_tilde(&self, s: f64) -> f64 {
        let lo = (-2.0f64).max(s - 2.0);
        let hi = 2.0f64.min(s + 2.0);
        if hi <= lo {
            return 0.0;
        }
        let mut cuts = vec![lo, hi];
        for c in [-1.0, 1.0, s - 1.0, s + 1.0] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.windows(2)
            .map(|w| {
                gauss_legendre_on(LINE_NODES, w[0], w[1])
                    .into_iter()
                    .map(|(t, wt)| wt * self.phi(t) * self.phi(s - t))
                    .sum::<f64>()
            })
            .sum()
    }

    /// φ̂(s) = ∫ φ(t)e^{-its} dt, real since φ is even.
    pub fn phi_hat(&self, s: f64) -> f64 {
        let panels = 4 + (s.abs() * 2.0 / PI).ceil() as usize;
        let mut acc = 0.0;
        for p in 0..panels {
            let a = 2.0 * p as f64 / panels as f64;
            let b = 2.0 * (p + 1) as f64 / panels as f64;
            acc += gauss_legendre_on(LINE_NODES, a, b)
                .into_iter()
                .map(|(t, w)| w * self.phi(t) * (s * t).cos())
                .sum::<f64>();
        }
        2.0 * acc
    }
}

/// Direction weight χ(ω₁) with χ ≥ 0 and χ(0) ≥ 1/2.
#[derive(Clone)]
pub struct ConeCutoff {
    chi: Profile,
}

impl std::fmt::Debug for ConeCutoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ConeCutoff")
    }
}

impl ConeCutoff {
    pub fn new(chi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if chi(0.0) < 0.5 {
            return Err(invalid("chi", "χ(0) must be at least 1/2"));
        }
        for k in 0..=400 {
            let c = -1.0 + 2.0 * k as f64 / 400.0;
            let v = chi(c);
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid("chi", format!("must be finite and nonnegative (χ({c}) = {v})")));
            }
        }
        Ok(Self { chi: Arc::new(chi) })
    }

    pub fn full() -> Self {
        Self { chi: Arc::new(|_| 1.0) }
    }

    /// 1 on |ω₁| ≤ width/2, 0 on |ω₁| ≥ width.
    pub fn bump(width: f64) -> Result<Self> {
        if !(width > 0.0 && width <= 1.0) {
            return Err(invalid("width", "must lie in (0, 1]"));
        }
        Self::new(move |c| plateau(c, width / 2.0, width))
    }

    pub fn chi(&self, c: f64) -> f64 {
        (self.chi)(c)
    }

    /// ½(χ(c) + χ(-c)): the weight seen by the unoriented line.
    pub fn symmetric(&self, c: f64) -> f64 {
        0.5 * (self.chi(c) + self.chi(-c))
    }
}

/// Direction rule on S^{n-1}: 64 equal angles for n = 2, 10 Gauss–Legendre latitudes × 59 longitudes for n = 3.
pub fn direction_grid(n: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    match n {
        2 => Ok((0..64)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / 64.0;
                (vec![a.cos(), a.sin()], 2.0 * PI / 64.0)
            })
            .collect()),
        3 => {
            let mut out = Vec::with_capacity(590);
            for (c, wc) in gauss_legendre(10) {
                let s = (1.0 - c * c).sqrt();
                for k in 0..59 {
                    let a = 2.0 * PI * k as f64 / 59.0;
                    out.push((vec![s * a.cos(), s * a.sin(), c], wc * 2.0 * PI / 59.0));
                }
            }
            Ok(out)
        }
        _ => Err(invalid("n", "direction grids exist for n = 2 and n = 3")),
    }
}

/// I₀f(z, ω) = ∫ f(z + tω)φ(t) dt.
pub fn xray_transform(f: &dyn Fn(&[f64]) -> C64, z: &[f64], omega: &[f64], phi: &LocalizerProfile) -> Result<C64> {
    if z.len() != omega.len() || z.is_empty() {
        return Err(invalid("z", "point and direction dimensions differ"));
    }
    let mut p = vec![0.0; z.len()];
    let mut acc = C64::new(0.0, 0.0);
    for (t, w) in phi.line_rule() {
        for (i, v) in p.iter_mut().enumerate() {
            *v = z[i] + t * omega[i];
        }
        acc += f(&p) * w;
    }
    Ok(acc)
}

/// Line data sampled on a product of a point grid and a direction rule; index `dir * grid.len() + point`.
#[derive(Clone, Debug)]
pub struct RayData {
    pub grid: GridSpec,
    pub dirs: Vec<(Vec<f64>, f64)>,
    pub values: Vec<C64>,
}

impl RayData {
    pub fn new(grid: GridSpec, dirs: Vec<(Vec<f64>, f64)>, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() * dirs.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for {} points × {} directions",
                values.len(),
                grid.len(),
                dirs.len()
            )));
        }
        if dirs.iter().any(|(d, _)| d.len() != grid.dim()) {
            return Err(Error::GridMismatch("direction dimension differs from the grid".into()));
        }
        Ok(Self { grid, dirs, values })
    }

    pub fn from_fn(grid: GridSpec, dirs: Vec<(Vec<f64>, f64)>, v: impl Fn(&[f64], &[f64]) -> C64) -> Result<Self> {
        let points = grid.points();
        let values = dirs
            .iter()
            .flat_map(|(d, _)| points.iter().map(|p| v(p, d)).collect::<Vec<_>>())
            .collect();
        Self::new(grid, dirs, values)
    }

    /// Samples of I₀f.
    pub fn forward(f: &(dyn Fn(&[f64]) -> C64 + Sync), grid: GridSpec, dirs: Vec<(Vec<f64>, f64)>, phi: &LocalizerProfile) -> Result<Self> {
        let points = grid.points();
        let mut values = Vec::with_capacity(points.len() * dirs.len());
        for (d, _) in &dirs {
            for p in &points {
                values.push(xray_transform(f, p, d, phi)?);
            }
        }
        Self::new(grid, dirs, values)
    }
}

/// L v(y) = Σ_ω w_ω ∫ v(y - tω, ω)φ(t) dt with v read through a Gaussian quasi-interpolant of width h.
/// Samples outside the grid box count as zero.
pub struct Backprojection<'a> {
    data: &'a RayData,
    rule: Vec<(f64, f64)>,
}

pub fn backproject<'a>(v: &'a RayData, phi: &LocalizerProfile) -> Backprojection<'a> {
    Backprojection { data: v, rule: phi.line_rule() }
}

impl Backprojection<'_> {
    /// Quasi-interpolated sample at z for direction index d.
    pub fn smoothed(&self, z: &[f64], d: usize) -> C64 {
        let g = &self.data.grid;
        let n = g.dim();
        let h = g.spacing();
        let sigma = h;
        let reach = STENCIL_SIGMAS * sigma;
        let m = g.points_per_axis();
        let norm = h / ((2.0 * PI).sqrt() * sigma);
        let mut axes: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        for &c in z.iter().take(n) {
            let lo = (((c - reach + g.half_width()) / h).ceil().max(0.0)) as usize;
            let hi_f = ((c + reach + g.half_width()) / h).floor();
            if hi_f < 0.0 || lo >= m {
                return C64::new(0.0, 0.0);
            }
            let hi = (hi_f as usize).min(m - 1);
            axes.push(
                (lo..=hi)
                    .map(|i| {
                        let s = c - g.axis_coord(i);
                        (i, norm * (-s * s / (2.0 * sigma * sigma)).exp())
                    })
                    .collect(),
            );
        }
        let base = d * g.len();
        let vals = &self.data.values;
        match n {
            1 => axes[0].iter().map(|(i, w)| vals[base + i] * *w).sum(),
            2 => {
                let mut acc = C64::new(0.0, 0.0);
                for (i, wi) in &axes[0] {
                    for (j, wj) in &axes[1] {
                        acc += vals[base + i * m + j] * (wi * wj);
                    }
                }
                acc
            }
            _ => {
                let mut acc = C64::new(0.0, 0.0);
                for (i, wi) in &axes[0] {
                    for (j, wj) in &axes[1] {
                        for (k, wk) in &axes[2] {
                            acc += vals[base + (i * m + j) * m + k] * (wi * wj * wk);
                        }
                    }
                }
                acc
            }
        }
    }

    pub fn eval(&self, y: &[f64]) -> Result<C64> {
        let g = &self.data.grid;
        if y.len() != g.dim() {
            return Err(invalid("y", "dimension differs from the sample grid"));
        }
        if y.iter().any(|c| c.abs() > g.half_width()) {
            return Err(invalid("y", "outside the sampled box"));
        }
        let mut p = vec![0.0; y.len()];
        let mut acc = C64::new(0.0, 0.0);
        for (d, (omega, wd)) in self.data.dirs.iter().enumerate() {
            for (t, wt) in &self.rule {
                for (i, v) in p.iter_mut().enumerate() {
                    *v = y[i] - t * omega[i];
                }
                acc += self.smoothed(&p, d) * (wt * wd);
            }
        }
        Ok(acc)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdjointnessReport {
    /// Σ_ω w_ω ∫ I₀f(z, ω) ṽ(z, ω) dz
    pub forward_pairing: C64,
    /// ∫ f(y) L v(y) dy
    pub adjoint_pairing: C64,
    pub relative_gap: f64,
}

/// Both sides of ⟨I₀f, v⟩ = ⟨f, Lv⟩ with v read through the same quasi-interpolant, each by its own
/// trapezoid rule on the sample lattice. `f` must be negligible outside the sampled box.
pub fn adjointness_check(f: &(dyn Fn(&[f64]) -> C64 + Sync), v: &RayData, phi: &LocalizerProfile) -> Result<AdjointnessReport> {
    let g = &v.grid;
    let n = g.dim();
    let h = g.spacing();
    let vol = h.powi(n as i32);
    let lp = backproject(v, phi);
    let adjoint_pairing: C64 = g.points().iter().map(|y| Ok(f(y) * lp.eval(y)?)).sum::<Result<C64>>()? * vol;

    // z ranges over the lattice extended by the stencil reach so the smoothed data is fully covered
    let pad = (STENCIL_SIGMAS).ceil() as i64 + 1;
    let m = g.points_per_axis() as i64;
    let span = (m + 2 * pad) as usize;
    let count = span.pow(n as u32);
    let mut forward_pairing = C64::new(0.0, 0.0);
    let mut z = vec![0.0; n];
    for (d, (omega, wd)) in v.dirs.iter().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for flat in 0..count {
            let mut r = flat;
            for c in z.iter_mut() {
                *c = -g.half_width() + ((r % span) as i64 - pad) as f64 * h;
                r /= span;
            }
            let sv = lp.smoothed(&z, d);
            if sv == C64::new(0.0, 0.0) {
                continue;
            }
            acc += xray_transform(f, &z, omega, phi)? * sv;
        }
        forward_pairing += acc * (wd * vol);
    }
    let scale = forward_pairing.norm().max(adjoint_pairing.norm());
    let relative_gap = if scale == 0.0 { 0.0 } else { (forward_pairing - adjoint_pairing).norm() / scale };
    Ok(AdjointnessReport { forward_pairing, adjoint_pairing, relative_gap })
}

/// |S^{n-1}| dω-weighted radial profile of the plane wave: Θ₂(s) = 2πJ₀(s), Θ₃(s) = 4π sin s / s.
fn sphere_plane_wave(n: usize, s: f64) -> f64 {
    if n == 2 {
        2.0 * PI * bessel_j0(s)
    } else if s.abs() < 1e-8 {
        4.0 * PI * (1.0 - s * s / 6.0)
    } else {
        4.0 * PI * s.sin() / s
    }
}

#[derive(Clone, Debug)]
pub struct SymbolRow {
    pub xi: f64,
    pub value: f64,
    pub scaled: f64,
}

#[derive(Clone, Debug)]
pub struct SymbolTable {
    pub n: usize,
    pub rows: Vec<SymbolRow>,
    /// ∫K, the zero-frequency value.
    pub dc: f64,
}

impl SymbolTable {
    pub fn min_value(&self) -> f64 {
        self.rows.iter().map(|r| r.value).fold(f64::INFINITY, f64::min)
    }

    /// (max - min)/mean of value·|ξ| over |ξ| ∈ [ξ_max/10, ξ_max].
    pub fn top_decade_variation(&self) -> f64 {
        let top = self.rows.iter().map(|r| r.xi).fold(0.0, f64::max);
        let sel: Vec<f64> = self.rows.iter().filter(|r| r.xi >= top / 10.0 - 1e-12).map(|r| r.scaled).collect();
        let lo = sel.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sel.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / (sel.iter().sum::<f64>() / sel.len() as f64)
    }

    pub fn table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        use crate::report::fmt_f64;
        let header = ["xi", "symbol", "symbol_times_xi"].map(String::from).to_vec();
        let rows = self.rows.iter().map(|r| vec![fmt_f64(r.xi), fmt_f64(r.value), fmt_f64(r.scaled)]).collect();
        (header, rows)
    }
}

const RADIAL_PANELS: usize = 160;

/// Fourier transform of K(w) = φ̃(|w|)|w|^{-(n-1)} by radial quadrature on a mesh graded quadratically toward 0.
pub fn normal_kernel_symbol(n: usize, phi: &LocalizerProfile, xis: &[f64]) -> Result<SymbolTable> {
    if n != 2 && n != 3 {
        return Err(invalid("n", "must be 2 or 3"));
    }
    if xis.is_empty() || xis.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(invalid("xi", "need nonnegative finite frequencies"));
    }
    let nodes: Vec<(f64, f64)> = (0..RADIAL_PANELS)
        .flat_map(|k| {
            let a = 4.0 * (k as f64 / RADIAL_PANELS as f64).powi(2);
            let b = 4.0 * ((k + 1) as f64 / RADIAL_PANELS as f64).powi(2);
            gauss_legendre_on(12, a, b)
        })
        .map(|(r, w)| (r, w * phi.phi_tilde(r)))
        .collect();
    let transform = |xi: f64| -> f64 { nodes.iter().map(|(r, w)| w * sphere_plane_wave(n, r * xi)).sum() };
    let dc = transform(0.0);
    let rows = xis
        .iter()
        .map(|&xi| {
            let value = transform(xi);
            SymbolRow { xi, value, scaled: value * xi }
        })
        .collect::<Vec<_>>();
    if rows.iter().any(|r| !r.value.is_finite()) {
        return Err(Error::Quadrature("kernel transform produced a non-finite value".into()));
    }
    Ok(SymbolTable { n, rows, dc })
}

/// Breakpoints on [0, end] graded geometrically from `first` and capped at `cap` per panel.
fn graded_cuts(end: f64, first: f64, cap: f64) -> Vec<f64> {
    let mut cuts = vec![0.0];
    let mut b: f64 = 0.0;
    while b < end {
        b = (b + b.max(first).min(cap)).min(end);
        cuts.push(b);
    }
    cuts
}

/// ½∫_{S^{n-1}} χ(ω₁)|φ̂(ω·ξ)|² dω in coordinates adapted to ξ̂, resolving the ω·ξ̂ ≈ 0 ridge.
pub fn cone_symbol(n: usize, phi: &LocalizerProfile, chi: &ConeCutoff, xi: &[f64]) -> Result<f64> {
    if xi.len() != n || (n != 2 && n != 3) {
        return Err(invalid("xi", "frequency must have n = 2 or 3 components"));
    }
    let mag = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if mag == 0.0 {
        return Err(invalid("xi", "must be nonzero"));
    }
    let dir: Vec<f64> = xi.iter().map(|v| v / mag).collect();
    let first = 0.25 / mag;
    let ridge = |s: f64| {
        let v = phi.phi_hat(mag * s);
        v * v
    };
    if n == 2 {
        // ω = sin θ ξ̂ ± cos θ ξ̂^⊥, θ ∈ [-π/2, π/2]
        let perp = [-dir[1], dir[0]];
        let cuts = graded_cuts(PI / 2.0, first, 0.05);
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            for (th, wt) in gauss_legendre_on(16, w[0], w[1]) {
                for sgn_t in [1.0, -1.0] {
                    let t = sgn_t * th;
                    let r = ridge(t.sin());
                    for sgn_p in [1.0, -1.0] {
                        let w1 = t.sin() * dir[0] + sgn_p * t.cos() * perp[0];
                        acc += wt * r * chi.chi(w1);
                    }
                }
            }
        }
        return Ok(0.5 * acc);
    }
    // ω = s ξ̂ + √(1-s²)(cos ψ e + sin ψ f), with (e, f) spanning ξ̂^⊥
    let seed = if dir[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let dot = seed.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>();
    let mut e: Vec<f64> = seed.iter().zip(&dir).map(|(a, b)| a - dot * b).collect();
    let en = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    e.iter_mut().for_each(|v| *v /= en);
    let f = [dir[1] * e[2] - dir[2] * e[1], dir[2] * e[0] - dir[0] * e[2], dir[0] * e[1] - dir[1] * e[0]];
    let m = 256;
    let cuts = graded_cuts(1.0, first, 0.05);
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        for (sa, wt) in gauss_legendre_on(16, w[0], w[1]) {
            for s in [sa, -sa] {
                let r = ridge(s);
                let c = (1.0 - s * s).max(0.0).sqrt();
                let ring: f64 = (0..m)
                    .map(|k| {
                        let psi = 2.0 * PI * k as f64 / m as f64;
                        chi.chi(s * dir[0] + c * (psi.cos() * e[0] + psi.sin() * f[0]))
                    })
                    .sum::<f64>()
                    * (2.0 * PI / m as f64);
                acc += wt * r * ring;
            }
        }
    }
    Ok(0.5 * acc)
}

#[derive(Clone, Debug)]
pub struct ConeReport {
    pub n: usize,
    pub magnitudes: Vec<f64>,
    /// min over sampled directions of symbol·|ξ|, per magnitude.
    pub floors: Vec<f64>,
    /// The same floors with χ ≡ 1.
    pub baseline: Vec<f64>,
    /// min floor / min baseline.
    pub margin: f64,
    /// Direction attaining the smallest floor.
    pub worst_direction: Vec<f64>,
}

/// Symbol·|ξ| minimized over a direction sample, for each |ξ|.
pub fn cone_ellipticity_check(n: usize, chi: &ConeCutoff, phi: &LocalizerProfile, magnitudes: &[f64]) -> Result<ConeReport> {
    if n != 2 && n != 3 {
        return Err(invalid("n", "must be 2 or 3"));
    }
    let dirs: Vec<Vec<f64>> = if n == 2 {
        (0..32).map(|k| {
            let a = PI * k as f64 / 32.0;
            vec![a.cos(), a.sin()]
        })
        .collect()
    } else {
        let mut d = Vec::new();
        for i in 0..=8 {
            let polar = PI / 2.0 * i as f64 / 8.0;
            for k in 0..8 {
                let az = PI * k as f64 / 8.0;
                d.push(vec![polar.cos(), polar.sin() * az.cos(), polar.sin() * az.sin()]);
            }
        }
        d
    };
    let full = ConeCutoff::full();
    let mut floors = Vec::new();
    let mut baseline = Vec::new();
    let mut worst = (f64::INFINITY, dirs[0].clone());
    for &mag in magnitudes {
        if !(mag > 0.0 && mag.is_finite()) {
            return Err(invalid("magnitudes", "must be positive"));
        }
        let vals: Vec<(f64, f64)> = std::thread::scope(|s| {
            let hs: Vec<_> = dirs
                .iter()
                .map(|d| {
                    let (full, phi) = (&full, phi);
                    s.spawn(move || -> Result<(f64, f64)> {
                        let xi: Vec<f64> = d.iter().map(|v| v * mag).collect();
                        Ok((cone_symbol(n, phi, chi, &xi)? * mag, cone_symbol(n, phi, full, &xi)? * mag))
                    })
                })
                .collect();
            hs.into_iter().map(|h| h.join().expect("cone worker panicked")).collect::<Result<Vec<_>>>()
        })?;
        let mut f = f64::INFINITY;
        for (d, (v, _)) in dirs.iter().zip(&vals) {
            if *v < f {
                f = *v;
            }
            if *v < worst.0 {
                worst = (*v, d.clone());
            }
        }
        floors.push(f);
        baseline.push(vals.iter().map(|(_, b)| *b).fold(f64::INFINITY, f64::min));
    }
    let min_floor = floors.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_base = baseline.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ConeReport { n, magnitudes: magnitudes.to_vec(), floors, baseline, margin: min_floor / min_base, worst_direction: worst.1 })
}

#[derive(Clone, Debug)]
pub struct InjectivityReport {
    pub n: usize,
    pub points_per_axis: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub refined_points: usize,
    pub sigma_min_refined: f64,
    /// ‖f - f₀‖/‖f₀‖ after solving A f = A f₀; NaN when the matrix is singular.
    pub reconstruction_error: f64,
    pub singular: bool,
}

/// Dense matrix of A = L∘I₀ on cell-averaged unknowns: A_ij = 2∫_{cell j} K_χ(y_i - w) dw.
pub fn normal_matrix(spec: &GridSpec, phi: &LocalizerProfile, chi: &ConeCutoff) -> Result<DMatrix<f64>> {
    let n = spec.dim();
    if n != 2 && n != 3 {
        return Err(invalid("n", "must be 2 or 3"));
    }
    let m = spec.points_per_axis();
    let h = spec.spacing();
    let span = 2 * m - 1;
    let offsets = span.pow(n as u32);
    let idx_to_offset = |flat: usize| -> Vec<i64> {
        let mut r = flat;
        (0..n)
            .map(|_| {
                let o = (r % span) as i64 - (m as i64 - 1);
                r /= span;
                o
            })
            .collect()
    };
    let kernel = |w: &[f64]| -> f64 {
        let r = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r >= 4.0 || r == 0.0 {
            return 0.0;
        }
        phi.phi_tilde(r) * r.powi(1 - n as i32) * chi.symmetric(w[0] / r)
    };
    let table: Vec<f64> = std::thread::scope(|s| {
        let workers = std::thread::available_parallelism().map(|v| v.get()).unwrap_or(4).min(16);
        let hs: Vec<_> = (0..workers)
            .map(|wk| {
                let kernel = &kernel;
                let idx_to_offset = &idx_to_offset;
                s.spawn(move || {
                    (wk..offsets)
                        .step_by(workers)
                        .map(|flat| {
                            let o = idx_to_offset(flat);
                            (flat, 2.0 * cell_integral(n, &o, h, phi, chi, kernel))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut t = vec![0.0; offsets];
        for hnd in hs {
            for (k, v) in hnd.join().expect("matrix worker panicked") {
                t[k] = v;
            }
        }
        t
    });
    let len = spec.len();
    let mut a = DMatrix::<f64>::zeros(len, len);
    for i in 0..len {
        let mi = spec.multi_index(i);
        for j in 0..len {
            let mj = spec.multi_index(j);
            let mut flat = 0;
            for ax in (0..n).rev() {
                flat = flat * span + (mi[ax] as i64 - mj[ax] as i64 + m as i64 - 1) as usize;
            }
            a[(i, j)] = table[flat];
        }
    }
    Ok(a)
}

fn cell_integral(n: usize, o: &[i64], h: f64, phi: &LocalizerProfile, chi: &ConeCutoff, kernel: &dyn Fn(&[f64]) -> f64) -> f64 {
    let centre: Vec<f64> = o.iter().map(|v| *v as f64 * h).collect();
    let near = o.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0);
    let dist = centre.iter().map(|v| v * v).sum::<f64>().sqrt();
    if dist - h * (n as f64).sqrt() / 2.0 >= 4.0 {
        return 0.0;
    }
    if near == 0 {
        return singular_cell(n, h, phi, chi);
    }
    let (sub, deg): (usize, usize) = if near == 1 { (4, 6) } else { (1, 4) };
    let g = gauss_legendre(deg);
    let sh = h / sub as f64;
    let mut acc = 0.0;
    let mut p = vec![0.0; n];
    let cells = sub.pow(n as u32);
    let nodes = deg.pow(n as u32);
    for c in 0..cells {
        for q in 0..nodes {
            let (mut cr, mut qr) = (c, q);
            let mut w = 1.0;
            for ax in 0..n {
                let ci = cr % sub;
                cr /= sub;
                let (x, wx) = g[qr % deg];
                qr /= deg;
                p[ax] = centre[ax] - h / 2.0 + (ci as f64 + 0.5) * sh + x * sh / 2.0;
                w *= wx * sh / 2.0;
            }
            acc += w * kernel(&p);
        }
    }
    acc
}

/// ∫ over the centred cell in polar form: ∫ χ̄(ω₁) ∫₀^{ρ(ω)} φ̃(r) dr dω.
fn singular_cell(n: usize, h: f64, phi: &LocalizerProfile, chi: &ConeCutoff) -> f64 {
    let cum = |rho: f64| -> f64 { gauss_legendre_on(12, 0.0, rho).into_iter().map(|(r, w)| w * phi.phi_tilde(r)).sum() };
    if n == 2 {
        let mut acc = 0.0;
        for k in 0..8 {
            let a = -PI / 4.0 + PI / 4.0 * k as f64;
            for (th, w) in gauss_legendre_on(16, a, a + PI / 4.0) {
                let rho = (h / 2.0) / th.cos().abs().max(th.sin().abs());
                acc += w * chi.symmetric(th.cos()) * cum(rho);
            }
        }
        return acc;
    }
    let g = gauss_legendre(12);
    let mut acc = 0.0;
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            for (u, wu) in &g {
                for (v, wv) in &g {
                    let q = (1.0 + u * u + v * v).sqrt();
                    let mut d = [0.0; 3];
                    d[axis] = sign / q;
                    d[(axis + 1) % 3] = u / q;
                    d[(axis + 2) % 3] = v / q;
                    acc += wu * wv / (q * q * q) * chi.symmetric(d[0]) * cum(h / 2.0 * q);
                }
            }
        }
    }
    acc
}

fn smallest_and_largest(a: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(a.clone());
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    (
        abs.iter().cloned().fold(f64::INFINITY, f64::min),
        abs.iter().cloned().fold(0.0, f64::max),
    )
}

/// σ_min of the discretized normal operator on a cube of half-width `half_width`, one refinement
/// step (`points + 2`), and a reconstruction of `f0` from A f₀.
pub fn injectivity_probe(
    n: usize,
    points: usize,
    half_width: f64,
    phi: &LocalizerProfile,
    chi: Option<&ConeCutoff>,
    f0: &dyn Fn(&[f64]) -> f64,
) -> Result<InjectivityReport> {
    if !(4..=24).contains(&points) {
        return Err(invalid("points", "between 4 and 24 per axis"));
    }
    if n == 3 && points > 10 {
        return Err(invalid("points", "at most 10 per axis in three dimensions"));
    }
    let full = ConeCutoff::full();
    let chi = chi.unwrap_or(&full);
    let spec = make_grid(n, half_width, points)?;
    let a = normal_matrix(&spec, phi, chi)?;
    let (sigma_min, sigma_max) = smallest_and_largest(&a);
    let refined_points = points + 2;
    let fine = make_grid(n, half_width, refined_points)?;
    let (sigma_min_refined, _) = smallest_and_largest(&normal_matrix(&fine, phi, chi)?);
    let f0v = DVector::from_iterator(spec.len(), spec.points().iter().map(|p| f0(p)));
    let rhs = &a * &f0v;
    let singular = sigma_min <= 1e-13 * sigma_max;
    let reconstruction_error = if singular {
        f64::NAN
    } else {
        match a.clone().lu().solve(&rhs) {
            Some(f) => {
                let scale = f0v.norm();
                if scale == 0.0 {
                    f.norm()
                } else {
                    (f - &f0v).norm() / scale
                }
            }
            None => f64::NAN,
        }
    };
    Ok(InjectivityReport {
        n,
        points_per_axis: points,
        sigma_min,
        sigma_max,
        refined_points,
        sigma_min_refined,
        reconstruction_error,
        singular: singular || reconstruction_error.is_nan(),
    })
}
