//! Radial set detection, linearization and threshold quantities.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::{chart_field, char_value, Chart, Model, PhasePointChart, SymbolHamiltonian};
use crate::error::{invalid, Error, Result};

/// Eigenvalues with |Re| at or below this are treated as zero.
pub const EPS_EIG: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Source,
    Sink,
    Saddle,
    Degenerate,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Source => "source",
            Verdict::Sink => "sink",
            Verdict::Saddle => "saddle",
            Verdict::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdData {
    pub beta0: f64,
    /// Absent when the radial set has no normal directions inside the face.
    pub beta1: Option<f64>,
    pub threshold_order: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdOptions {
    /// Replaces ρ by c·ρ in the logarithmic derivative.
    pub rho_scale: f64,
    /// Displacement off the radial point used for the fit.
    pub displacement: f64,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self { rho_scale: 1.0, displacement: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RadialSetReport {
    pub points: Vec<PhasePointChart>,
    pub jacobian_eigenvalues: Vec<Vec<C64>>,
    pub verdicts: Vec<Verdict>,
    pub thresholds: Vec<Option<ThresholdData>>,
    /// Corner hits, reported without classification.
    pub unclassified: Vec<PhasePointChart>,
}

fn search_charts(h: &SymbolHamiltonian) -> Vec<Chart> {
    let d = h.dim();
    let spatial = (0..d).flat_map(|axis| [1, -1].map(|sign| Chart::SpatialFace { axis, sign }));
    let fiber = (0..d).flat_map(|axis| [1, -1].map(|sign| Chart::FiberFace { axis, sign }));
    match h.model() {
        Some(Model::Helmholtz { .. }) | Some(Model::Dx1 { .. }) => spatial.collect(),
        Some(Model::KleinGordon) | Some(Model::Wave) => vec![Chart::KgFace { sign: 1 }, Chart::KgFace { sign: -1 }],
        Some(Model::SchrodingerFree) => {
            let mut v = vec![Chart::TimeCap { sign: 1 }, Chart::TimeCap { sign: -1 }];
            for sx in [1, -1] {
                for sq in [1, -1] {
                    v.push(Chart::XCap { sign_x: sx, sign_xi: sq });
                }
            }
            v
        }
        Some(Model::XDx) | None => spatial.chain(fiber).collect(),
    }
}

/// Seed interval for each non-ρ coordinate of a chart.
fn seed_ranges(h: &SymbolHamiltonian, chart: Chart) -> Vec<(f64, f64)> {
    let d = h.dim();
    let fib = match h.model() {
        Some(Model::Helmholtz { lambda, .. }) => 1.5 * lambda,
        _ => 2.0,
    };
    match chart {
        Chart::SpatialFace { .. } => {
            let mut r = vec![(-1.0, 1.0); d - 1];
            r.extend(vec![(-fib, fib); d]);
            r
        }
        Chart::FiberFace { .. } => {
            let mut r = vec![(-2.0, 2.0); d];
            r.extend(vec![(-1.0, 1.0); d - 1]);
            r
        }
        Chart::XCap { .. } => vec![(-1.0, 1.0), (0.1, 1.0), (-2.0, 2.0)],
        _ => vec![(-2.0, 2.0); 2 * d - 1],
    }
}

fn assemble(chart: Chart, rho_at: usize, u: &[f64]) -> PhasePointChart {
    let mut c = u.to_vec();
    c.insert(rho_at, 0.0);
    PhasePointChart { chart, coords: c }
}

fn residual(h: &SymbolHamiltonian, chart: Chart, rho_at: usize, u: &[f64]) -> Result<Vec<f64>> {
    let pt = assemble(chart, rho_at, u);
    let f = chart_field(h, &pt)?;
    let mut r: Vec<f64> = f.iter().enumerate().filter(|(i, _)| *i != rho_at).map(|(_, v)| *v).collect();
    r.push(char_value(h, &pt)?);
    Ok(r)
}

fn gauss_newton(h: &SymbolHamiltonian, chart: Chart, rho_at: usize, seed: &[f64]) -> Option<Vec<f64>> {
    let mut u = seed.to_vec();
    let k = u.len();
    for _ in 0..60 {
        let r = residual(h, chart, rho_at, &u).ok()?;
        let norm = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if norm < 1e-13 {
            return Some(u);
        }
        let step = 1e-6;
        let mut jac = DMatrix::<f64>::zeros(r.len(), k);
        for j in 0..k {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[j] += step;
            dn[j] -= step;
            let rp = residual(h, chart, rho_at, &up).ok()?;
            let rm = residual(h, chart, rho_at, &dn).ok()?;
            for i in 0..r.len() {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * step);
            }
        }
        let pinv = jac.pseudo_inverse(1e-10).ok()?;
        let delta = pinv * DVector::from_vec(r);
        for j in 0..k {
            u[j] -= delta[j];
        }
        if u.iter().any(|v| !v.is_finite() || v.abs() > 1e6) {
            return None;
        }
    }
    let r = residual(h, chart, rho_at, &u).ok()?;
    (r.iter().fold(0.0f64, |a, v| a.max(v.abs())) < 1e-10).then_some(u)
}

/// Chart-independent description used to merge duplicates.
fn canonical(pt: &PhasePointChart) -> (String, Vec<f64>) {
    let d = pt.dim();
    let c = &pt.coords;
    let unit = |axis: usize, sign: i8, ys: &[f64]| -> Vec<f64> {
        let mut v = Vec::with_capacity(d);
        let mut it = ys.iter();
        for k in 0..d {
            v.push(if k == axis { sign as f64 } else { sign as f64 * it.next().unwrap() });
        }
        let n = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        v.into_iter().map(|t| t / n).collect()
    };
    match pt.chart {
        Chart::SpatialFace { axis, sign } => {
            let mut v = unit(axis, sign, &c[1..d]);
            v.extend_from_slice(&c[d..]);
            ("spatial".into(), v)
        }
        Chart::FiberFace { axis, sign } => {
            let mut v = c[..d].to_vec();
            v.extend(unit(axis, sign, &c[d + 1..]));
            ("fiber".into(), v)
        }
        other => (other.id(), c.clone()),
    }
}

fn in_home_region(pt: &PhasePointChart) -> bool {
    let d = pt.dim();
    match pt.chart {
        Chart::SpatialFace { .. } => pt.coords[1..d].iter().all(|y| y.abs() <= 1.0 + 1e-9),
        Chart::FiberFace { .. } => pt.coords[d + 1..].iter().all(|y| y.abs() <= 1.0 + 1e-9),
        Chart::XCap { .. } => pt.coords[2] > 0.0,
        _ => true,
    }
}

/// Coarse seed grid over each search chart, Gauss–Newton polish, deduplication.
pub fn find_radial_points(h: &SymbolHamiltonian, resolution: usize) -> Result<RadialSetReport> {
    if !(2..=12).contains(&resolution) {
        return Err(invalid("resolution", "seed grid resolution must be in 2..=12"));
    }
    let d = h.dim();
    let mut found: BTreeMap<(String, Vec<i64>), PhasePointChart> = BTreeMap::new();
    let mut corners = Vec::new();
    for chart in search_charts(h) {
        let rho_at = chart.rho_index(d).unwrap();
        let ranges = seed_ranges(h, chart);
        let k = ranges.len();
        let total = resolution.pow(k as u32);
        for flat in 0..total {
            let mut rem = flat;
            let seed: Vec<f64> = ranges
                .iter()
                .map(|(lo, hi)| {
                    let i = rem % resolution;
                    rem /= resolution;
                    lo + (hi - lo) * (i as f64 + 0.5) / resolution as f64
                })
                .collect();
            let Some(u) = gauss_newton(h, chart, rho_at, &seed) else { continue };
            let pt = assemble(chart, rho_at, &u);
            if matches!(chart, Chart::XCap { .. }) && pt.coords[2] <= 1e-12 {
                corners.push(pt);
                continue;
            }
            if !in_home_region(&pt) {
                continue;
            }
            let (tag, key) = canonical(&pt);
            let q: Vec<i64> = key.iter().map(|v| (v * 1e7).round() as i64).collect();
            found.entry((tag, q)).or_insert(pt);
        }
    }
    Ok(RadialSetReport { points: found.into_values().collect(), unclassified: corners, ..Default::default() })
}

fn jacobian(h: &SymbolHamiltonian, pt: &PhasePointChart) -> Result<DMatrix<f64>> {
    let n = pt.coords.len();
    let rho_at = pt.chart.rho_index(pt.dim());
    let mut jac = DMatrix::<f64>::zeros(n, n);
    let step = 1e-5;
    let eval = |c: Vec<f64>| chart_field(h, &PhasePointChart { chart: pt.chart, coords: c });
    for j in 0..n {
        let at_edge = rho_at == Some(j) && pt.coords[j] < 2.0 * step;
        let col: Vec<f64> = if at_edge {
            let mut c1 = pt.coords.clone();
            let mut c2 = pt.coords.clone();
            c1[j] += step;
            c2[j] += 2.0 * step;
            let (f0, f1, f2) = (eval(pt.coords.clone())?, eval(c1)?, eval(c2)?);
            (0..n).map(|i| (-3.0 * f0[i] + 4.0 * f1[i] - f2[i]) / (2.0 * step)).collect()
        } else {
            let mut up = pt.coords.clone();
            let mut dn = pt.coords.clone();
            up[j] += step;
            dn[j] -= step;
            let (fp, fm) = (eval(up)?, eval(dn)?);
            (0..n).map(|i| (fp[i] - fm[i]) / (2.0 * step)).collect()
        };
        for i in 0..n {
            jac[(i, j)] = col[i];
        }
    }
    Ok(jac)
}

/// Coordinates whose field component is not identically zero near `pt`.
fn normal_coordinates(h: &SymbolHamiltonian, pt: &PhasePointChart) -> Result<Vec<usize>> {
    let n = pt.coords.len();
    let rho_at = pt.chart.rho_index(pt.dim());
    let pattern = [0.7, -0.4, 0.9, -0.2, 0.5, -0.8];
    let mut active = vec![false; n];
    for k in 0..4 {
        let mut c = pt.coords.clone();
        if k > 0 {
            let sgn = if k % 2 == 0 { -1.0 } else { 1.0 };
            for (i, v) in c.iter_mut().enumerate() {
                if Some(i) == rho_at {
                    *v += 0.05 * k as f64;
                } else {
                    *v += 0.1 * sgn * pattern[(i + k) % pattern.len()];
                }
            }
        }
        let q = PhasePointChart { chart: pt.chart, coords: c };
        let jac = jacobian(h, &q)?;
        for (i, a) in active.iter_mut().enumerate() {
            if jac.row(i).iter().any(|v| v.abs() > 1e-8) {
                *a = true;
            }
        }
    }
    Ok((0..n).filter(|i| active[*i]).collect())
}

/// Linearization of the boundary field at a radial point, restricted to the
/// directions the flow actually moves.
pub fn classify_radial(h: &SymbolHamiltonian, pt: &PhasePointChart) -> Result<(Verdict, Vec<C64>)> {
    let f = chart_field(h, pt)?;
    let scale = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale > 1e-8 {
        return Err(invalid("pt", format!("not a radial point: |field| = {scale:.3e}")));
    }
    let idx = normal_coordinates(h, pt)?;
    if idx.is_empty() {
        return Ok((Verdict::Degenerate, Vec::new()));
    }
    let jac = jacobian(h, pt)?;
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| jac[(idx[i], idx[j])]);
    let mut eig: Vec<C64> = sub.complex_eigenvalues().iter().map(|z| C64::new(z.re, z.im)).collect();
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let verdict = if eig.iter().any(|z| z.re.abs() <= EPS_EIG) {
        Verdict::Degenerate
    } else if eig.iter().all(|z| z.re > EPS_EIG) {
        Verdict::Source
    } else if eig.iter().all(|z| z.re < -EPS_EIG) {
        Verdict::Sink
    } else {
        Verdict::Saddle
    };
    Ok((verdict, eig))
}

/// β₀ = ρ⁻¹𝖧ρ and β₁ = ϱ⁻¹𝖧ϱ at a radial point, as Richardson-extrapolated
/// logarithmic derivatives; ϱ is the squared distance in the normal
/// coordinates of the face.
pub fn threshold_data(h: &SymbolHamiltonian, pt: &PhasePointChart, opts: ThresholdOptions) -> Result<ThresholdData> {
    if !(opts.rho_scale > 0.0) || !(opts.displacement > 0.0 && opts.displacement < 0.1) {
        return Err(invalid("opts", "rho_scale must be positive and displacement in (0, 0.1)"));
    }
    let (verdict, _) = classify_radial(h, pt)?;
    if verdict == Verdict::Degenerate {
        return Err(Error::Degenerate(
            "β₀ vanishes here (the zero-section pathology of the wave operator); \
             radial estimates of this calculus do not apply"
                .into(),
        ));
    }
    let rho_at = pt
        .chart
        .rho_index(pt.dim())
        .ok_or_else(|| invalid("pt", "radial points live on the boundary"))?;
    let c = opts.rho_scale;
    let beta0_at = |delta: f64| -> Result<f64> {
        let mut q = pt.clone();
        q.coords[rho_at] = delta;
        let f = chart_field(h, &q)?;
        Ok(c * f[rho_at] / (c * delta))
    };
    let delta = opts.displacement;
    let beta0 = 2.0 * beta0_at(delta / 2.0)? - beta0_at(delta)?;
    let normal: Vec<usize> = normal_coordinates(h, pt)?.into_iter().filter(|i| *i != rho_at).collect();
    let beta1 = if normal.is_empty() {
        None
    } else {
        let w = 1.0 / (normal.len() as f64).sqrt();
        let beta1_at = |delta: f64| -> Result<f64> {
            let mut q = pt.clone();
            for &i in &normal {
                q.coords[i] += w * delta;
            }
            let f = chart_field(h, &q)?;
            let dot: f64 = normal.iter().map(|&i| w * delta * f[i]).sum();
            Ok(2.0 * dot / (delta * delta))
        };
        Some(2.0 * beta1_at(delta / 2.0)? - beta1_at(delta)?)
    };
    let (_, l) = h.orders();
    Ok(ThresholdData { beta0, beta1, threshold_order: (l - 1.0) / 2.0 })
}

/// Detection plus classification and threshold data for every point found.
pub fn analyze_radial_sets(h: &SymbolHamiltonian, resolution: usize) -> Result<RadialSetReport> {
    let mut rep = find_radial_points(h, resolution)?;
    for pt in &rep.points {
        let (v, eig) = classify_radial(h, pt)?;
        rep.verdicts.push(v);
        rep.jacobian_eigenvalues.push(eig);
        rep.thresholds.push(match v {
            Verdict::Degenerate => None,
            _ => Some(threshold_data(h, pt, ThresholdOptions::default())?),
        });
    }
    Ok(rep)
}

/// (x̂, τ = −x̂·ξ, μ = ξ − (x̂·ξ)x̂) of a spatial-face point.
pub fn helmholtz_polar(pt: &PhasePointChart) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let (tag, v) = canonical(pt);
    if tag != "spatial" {
        return Err(invalid("pt", "expected a spatial-face point"));
    }
    let d = pt.dim();
    let (xh, xi) = v.split_at(d);
    let dot: f64 = xh.iter().zip(xi).map(|(a, b)| a * b).sum();
    let mu = xi.iter().zip(xh).map(|(q, a)| q - dot * a).collect();
    Ok((xh.to_vec(), -dot, mu))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helmholtz_radial_sets_in_two_dimensions() {
        let h = SymbolHamiltonian::helmholtz(2, 1.0).unwrap();
        let rep = analyze_radial_sets(&h, 5).unwrap();
        assert!(rep.points.len() >= 8);
        for (pt, v) in rep.points.iter().zip(&rep.verdicts) {
            let (_, tau, mu) = helmholtz_polar(pt).unwrap();
            assert!((tau.abs() - 1.0).abs() < 1e-8);
            assert!(mu.iter().all(|m| m.abs() < 1e-8));
            // τ = +λ is incoming (source), τ = −λ outgoing (sink)
            let expect = if tau > 0.0 { Verdict::Source } else { Verdict::Sink };
            assert_eq!(*v, expect);
        }
    }

    #[test]
    fn helmholtz_betas_in_dominant_chart() {
        let h = SymbolHamiltonian::helmholtz(2, 1.0).unwrap();
        let pt = PhasePointChart::new(Chart::SpatialFace { axis: 0, sign: 1 }, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let t = threshold_data(&h, &pt, ThresholdOptions::default()).unwrap();
        assert!((t.beta0 + 1.0).abs() < 1e-9);
        assert!((t.beta1.unwrap() + 2.0).abs() < 1e-9);
        assert_eq!(t.threshold_order, -0.5);
        let scaled = threshold_data(&h, &pt, ThresholdOptions { rho_scale: 3.0, ..Default::default() }).unwrap();
        assert!((scaled.beta0 - t.beta0).abs() < 1e-12);
        let pin = PhasePointChart::new(Chart::SpatialFace { axis: 0, sign: 1 }, vec![0.0, 0.0, -1.0, 0.0]).unwrap();
        let t = threshold_data(&h, &pin, ThresholdOptions::default()).unwrap();
        assert!(t.beta0 > 0.0 && t.beta1.unwrap() > 0.0);
    }

    #[test]
    fn klein_gordon_future_cap_is_a_sink() {
        let h = SymbolHamiltonian::klein_gordon();
        let tau = 2f64.sqrt();
        let pt = PhasePointChart::new(Chart::KgFace { sign: 1 }, vec![0.0, 0.0, tau, 1.0]).unwrap();
        let (v, eig) = classify_radial(&h, &pt).unwrap();
        assert_eq!(v, Verdict::Sink);
        assert_eq!(eig.len(), 2);
        for z in eig {
            assert!((z.re + 2.0 * tau).abs() < 1e-6 && z.im.abs() < 1e-9);
        }
        let rep = find_radial_points(&h, 5).unwrap();
        let future: Vec<_> = rep.points.iter().filter(|p| p.chart == Chart::KgFace { sign: 1 } && p.coords[2] > 0.0).collect();
        assert!(!future.is_empty());
        for p in future {
            assert!(p.coords[1].abs() < 1e-10);
            assert!((p.coords[2].powi(2) - p.coords[3].powi(2) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn wave_zero_section_is_degenerate() {
        let h = SymbolHamiltonian::wave();
        let pt = PhasePointChart::new(Chart::KgFace { sign: 1 }, vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let (v, _) = classify_radial(&h, &pt).unwrap();
        assert_eq!(v, Verdict::Degenerate);
        assert!(matches!(threshold_data(&h, &pt, ThresholdOptions::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn x_dx_has_four_radial_points() {
        let rep = analyze_radial_sets(&SymbolHamiltonian::x_dx(), 6).unwrap();
        assert_eq!(rep.points.len(), 4);
        for (p, v) in rep.points.iter().zip(&rep.verdicts) {
            match p.chart {
                Chart::SpatialFace { .. } => assert_eq!(*v, Verdict::Sink),
                _ => assert_eq!(*v, Verdict::Source),
            }
        }
    }

    #[test]
    fn dx1_radial_points_sit_over_the_axis() {
        let rep = analyze_radial_sets(&SymbolHamiltonian::dx1(2).unwrap(), 4).unwrap();
        assert!(!rep.points.is_empty());
        for (p, v) in rep.points.iter().zip(&rep.verdicts) {
            let Chart::SpatialFace { axis, sign } = p.chart else { panic!() };
            assert_eq!(axis, 0);
            assert!(p.coords[1].abs() < 1e-10 && p.coords[2].abs() < 1e-10);
            assert_eq!(*v, if sign > 0 { Verdict::Sink } else { Verdict::Source });
        }
    }

    #[test]
    fn schrodinger_parabolic_radial_sets() {
        let h = SymbolHamiltonian::schrodinger_free();
        let rep = analyze_radial_sets(&h, 4).unwrap();
        let caps: Vec<_> = rep.points.iter().filter(|p| matches!(p.chart, Chart::TimeCap { .. })).collect();
        assert!(!caps.is_empty());
        for p in caps {
            assert!((p.coords[1] - 2.0 * p.coords[3]).abs() < 1e-10);
        }
        for (p, v) in rep.points.iter().zip(&rep.verdicts) {
            if let Chart::TimeCap { sign } = p.chart {
                assert_eq!(*v, if sign > 0 { Verdict::Sink } else { Verdict::Source });
            }
        }
    }
}
