//! Quadrature rules and small numerical helpers.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::GaussLegendre;

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(deg: usize) -> Vec<(f64, f64)> {
    static RULES: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let deg = deg.max(2);
    let cache = RULES.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&deg) {
        return rule.to_vec();
    }
    let rule = Arc::new(
        GaussLegendre::new(deg)
            .expect("degree at least 2")
            .into_node_weight_pairs(),
    );
    cache.lock().unwrap().insert(deg, rule.clone());
    rule.to_vec()
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(deg: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre(deg)
        .into_iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .collect()
}

/// Japanese bracket (1 + |v|^2)^{1/2}.
pub fn jbracket(v: &[f64]) -> f64 {
    (1.0 + v.iter().map(|t| t * t).sum::<f64>()).sqrt()
}

pub fn jbracket1(t: f64) -> f64 {
    (1.0 + t * t).sqrt()
}

/// Ordinary least squares slope and intercept of y against x, with R^2.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// Slope of log|y| against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    linear_fit(&lx, &ly).0
}

/// Smooth step built from t -> exp(-1/t): 0 for t <= 0, 1 for t >= 1.
pub fn smooth_step(t: f64) -> f64 {
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let a = f(t);
    let b = f(1.0 - t);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Smooth plateau: 1 on [-inner, inner], 0 outside [-outer, outer].
pub fn plateau(t: f64, inner: f64, outer: f64) -> f64 {
    let s = (outer - t.abs()) / (outer - inner);
    smooth_step(s)
}

/// Bessel J₀(x) = (1/π)∫₀^π cos(x sin τ) dτ by composite Gauss–Legendre.
pub fn bessel_j0(x: f64) -> f64 {
    let panels = 4 + (x.abs() / 2.0).ceil() as usize;
    let mut s = 0.0;
    for p in 0..panels {
        let a = std::f64::consts::PI * p as f64 / panels as f64;
        let b = std::f64::consts::PI * (p + 1) as f64 / panels as f64;
        s += gauss_legendre_on(16, a, b)
            .into_iter()
            .map(|(t, w)| w * (x * t.sin()).cos())
            .sum::<f64>();
    }
    s / std::f64::consts::PI
}

/// Chebyshev–Lobatto points on [-1, 1] (descending) and the first-derivative matrix.
pub fn chebyshev(points: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = points.max(2) - 1;
    let x: Vec<f64> = (0..=n)
        .map(|j| (std::f64::consts::PI * j as f64 / n as f64).cos())
        .collect();
    let c = |j: usize| -> f64 {
        let edge = if j == 0 || j == n { 2.0 } else { 1.0 };
        edge * if j.is_multiple_of(2) { 1.0 } else { -1.0 }
    };
    let mut d = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..=n {
        for j in 0..=n {
            if i != j {
                d[i][j] = c(i) / c(j) / (x[i] - x[j]);
            }
        }
        // negative-sum trick keeps constants in the kernel to rounding
        d[i][i] = -d[i].iter().sum::<f64>();
    }
    (x, d)
}
