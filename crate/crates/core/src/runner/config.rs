//! Strict JSON configuration: one flat object per run, defaults for every field.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Flow,
    Radial,
    QuantizeCheck,
    Commutant,
    Helmholtz,
    Threshold,
    Pairing,
    Scatter1d,
    Radon,
    VarOrder,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Flow,
        Experiment::Radial,
        Experiment::QuantizeCheck,
        Experiment::Commutant,
        Experiment::Helmholtz,
        Experiment::Threshold,
        Experiment::Pairing,
        Experiment::Scatter1d,
        Experiment::Radon,
        Experiment::VarOrder,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Flow => "flow",
            Experiment::Radial => "radial",
            Experiment::QuantizeCheck => "quantize-check",
            Experiment::Commutant => "commutant",
            Experiment::Helmholtz => "helmholtz",
            Experiment::Threshold => "threshold",
            Experiment::Pairing => "pairing",
            Experiment::Scatter1d => "scatter1d",
            Experiment::Radon => "radon",
            Experiment::VarOrder => "var-order",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
            format!("unknown experiment `{s}`{}", suggestion(s, &names))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    /// Unreadable file.
    Io(String),
    /// Not JSON, or not an object.
    Parse(String),
    /// Every schema and range violation found.
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Parse(m) => write!(f, "config is not valid JSON: {m}"),
            ConfigError::Invalid(v) => write!(f, "invalid config:\n  {}", v.join("\n  ")),
        }
    }
}

impl std::error::Error for ConfigError {}

fn suggestion(key: &str, candidates: &[&str]) -> String {
    candidates
        .iter()
        .map(|c| (strsim::normalized_damerau_levenshtein(key, c), *c))
        .filter(|(score, _)| *score >= 0.5)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map_or(String::new(), |(_, c)| format!("; did you mean `{c}`?"))
}

// ---- per-experiment parameters ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridParams {
    pub half_width: f64,
    pub points: usize,
}

impl GridParams {
    fn check(&self, field: &str, max_points: usize, v: &mut Vec<String>) {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            v.push(format!("{field}.half_width: must be positive, got {}", self.half_width));
        }
        if !self.points.is_multiple_of(2) || self.points < 8 {
            v.push(format!("{field}.points: must be even and at least 8, got {}", self.points));
        }
        if self.points > max_points {
            v.push(format!("{field}.points: at most {max_points} here, got {}", self.points));
        }
    }
}

impl Default for GridParams {
    fn default() -> Self {
        Self { half_width: 16.0, points: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantizeParams {
    pub grid: GridParams,
    pub identity_tol: f64,
    pub composition_tol: f64,
    /// (spatial, frequency) scale of the bracket test pairs.
    pub pair_scale: [f64; 2],
    /// Factor applied to the spatial scale for the refinement run.
    pub refine_factor: f64,
    pub bracket_tol: f64,
    pub parametrix_terms: usize,
    pub parametrix_step: f64,
}

impl Default for QuantizeParams {
    fn default() -> Self {
        Self {
            grid: GridParams::default(),
            identity_tol: 1e-10,
            composition_tol: 1e-9,
            pair_scale: [4.0, 2.0],
            refine_factor: 2.0,
            bracket_tol: 0.15,
            parametrix_terms: 3,
            parametrix_step: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommutantParams {
    pub fields: usize,
    pub points: usize,
    pub digamma: f64,
    pub s0: f64,
    pub eps: f64,
    pub identity_tol: f64,
    pub radial_orders: Vec<f64>,
    pub delta: f64,
    pub radial_digamma: f64,
}

impl Default for CommutantParams {
    fn default() -> Self {
        Self {
            fields: 20,
            points: 256,
            digamma: 10.0,
            s0: 1.0,
            eps: 0.25,
            identity_tol: 1e-8,
            radial_orders: vec![-1.0, 0.0],
            delta: 0.05,
            radial_digamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadialParams {
    /// helmholtz, klein-gordon, wave, schrodinger, x-dx or dx1.
    pub model: String,
    pub dim: usize,
    pub lambda: f64,
    pub resolution: usize,
    pub location_tol: f64,
    pub beta_ratio_tol: f64,
    /// Angle of the second radial point, inside the overlap of two charts.
    pub overlap_angle_deg: f64,
    /// Also run the wave-operator degeneracy gate.
    pub wave_gate: bool,
}

impl Default for RadialParams {
    fn default() -> Self {
        Self {
            model: "helmholtz".into(),
            dim: 2,
            lambda: 1.0,
            resolution: 5,
            location_tol: 1e-8,
            beta_ratio_tol: 1e-6,
            overlap_angle_deg: 30.0,
            wave_gate: true,
        }
    }
}

pub const MODELS: [&str; 6] = ["helmholtz", "klein-gordon", "wave", "schrodinger", "x-dx", "dx1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowParams {
    pub dim: usize,
    pub lambda: f64,
    pub trajectories: usize,
    pub t_final: f64,
    pub dt: f64,
    pub sink_tol: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self { dim: 2, lambda: 1.0, trajectories: 50, t_final: 20.0, dt: 0.01, sink_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HelmholtzParams {
    pub lambda: f64,
    pub dims: Vec<usize>,
    pub r_min: f64,
    pub r_max: f64,
    pub radii: usize,
    pub slope_tol: f64,
    /// A radial power other than (n-1)/2, used to exhibit the obstruction.
    pub wrong_power: f64,
    pub series_terms: usize,
    pub series_radii: Vec<f64>,
    pub series_gain: f64,
}

impl Default for HelmholtzParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            dims: vec![2, 3],
            r_min: 20.0,
            r_max: 200.0,
            radii: 6,
            slope_tol: 0.2,
            wrong_power: 1.3,
            series_terms: 2,
            series_radii: vec![10.0, 20.0, 40.0, 80.0],
            series_gain: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdParams {
    pub dim: usize,
    pub lambda: f64,
    pub orders: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub radii: usize,
    pub exponent_tol: f64,
    pub log_r2: f64,
    pub bounded_ratio: f64,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self {
            dim: 2,
            lambda: 1.0,
            orders: vec![-0.75, -0.5, -0.25, 0.0],
            r_min: 10.0,
            r_max: 640.0,
            radii: 7,
            exponent_tol: 0.05,
            log_r2: 0.99,
            bounded_ratio: 1.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairingParams {
    pub lambda: f64,
    pub radii: Vec<f64>,
    pub gap_tol: f64,
    pub self_pairing_tol: f64,
    pub densities: usize,
    pub unitarity_tol: f64,
    pub equivariance_tol: f64,
    pub rule_degrees: [usize; 2],
    pub refinement_tol: f64,
}

impl Default for PairingParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            radii: vec![100.0, 200.0, 400.0],
            gap_tol: 0.1,
            self_pairing_tol: 1e-6,
            densities: 10,
            unitarity_tol: 1e-6,
            equivariance_tol: 1e-8,
            rule_degrees: [16, 32],
            refinement_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialParams {
    /// free, square_barrier or smooth_bump.
    pub name: String,
    pub height: f64,
    pub width: f64,
    pub centre: f64,
}

impl Default for PotentialParams {
    fn default() -> Self {
        Self { name: "square_barrier".into(), height: 2.0, width: 1.5, centre: 0.0 }
    }
}

pub const POTENTIALS: [&str; 3] = ["free", "square_barrier", "smooth_bump"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scatter1dParams {
    pub potentials: Vec<PotentialParams>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub ladder: usize,
    pub unitarity_tol: f64,
    pub oracle_tol: f64,
    pub wronskian_tol: f64,
    pub lg_powers: Vec<u32>,
    pub boundary_radii: Vec<f64>,
    pub boundary_floor: f64,
    pub boundary_variation: f64,
}

impl Default for Scatter1dParams {
    fn default() -> Self {
        Self {
            potentials: vec![
                PotentialParams::default(),
                PotentialParams { name: "smooth_bump".into(), height: 1.0, width: 1.0, centre: 0.0 },
                PotentialParams { name: "smooth_bump".into(), height: -1.5, width: 0.8, centre: 0.5 },
            ],
            lambda_min: 0.4,
            lambda_max: 4.0,
            ladder: 10,
            unitarity_tol: 1e-6,
            oracle_tol: 1e-6,
            wronskian_tol: 1e-8,
            lg_powers: vec![2, 3, 4, 5, 6],
            boundary_radii: vec![50.0, 100.0, 200.0],
            boundary_floor: 1.0,
            boundary_variation: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadonParams {
    pub pairs: usize,
    pub grid: GridParams,
    /// Keep every k-th of the 64 planar directions in the adjointness check.
    pub direction_stride: usize,
    pub adjoint_tol: f64,
    pub xi_min: f64,
    pub xi_max: f64,
    pub xi_points: usize,
    pub plateau_tol: f64,
    pub cone_width: f64,
    pub cone_magnitudes: Vec<f64>,
    pub collapse_ratio: f64,
    pub injectivity_2d: GridParams,
    pub injectivity_3d: GridParams,
    pub reconstruction_tol: f64,
}

impl Default for RadonParams {
    fn default() -> Self {
        Self {
            pairs: 20,
            grid: GridParams { half_width: 4.5, points: 24 },
            direction_stride: 2,
            adjoint_tol: 1e-6,
            xi_min: 0.1,
            xi_max: 100.0,
            xi_points: 31,
            plateau_tol: 0.05,
            cone_width: 0.3,
            cone_magnitudes: vec![1.0, 4.0, 16.0],
            collapse_ratio: 1e-3,
            injectivity_2d: GridParams { half_width: 4.0, points: 20 },
            injectivity_3d: GridParams { half_width: 3.0, points: 8 },
            reconstruction_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarOrderParams {
    pub grid: GridParams,
    /// Amplitude of the frequency-dependent spatial order.
    pub amplitude: f64,
    pub seminorm_order: usize,
    pub sobolev_s: f64,
    pub sobolev_r: f64,
    pub consistency_tol: f64,
}

impl Default for VarOrderParams {
    fn default() -> Self {
        Self {
            grid: GridParams { half_width: 10.0, points: 64 },
            amplitude: 0.25,
            seminorm_order: 1,
            sobolev_s: 1.0,
            sobolev_r: -1.0,
            consistency_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Flow(FlowParams),
    Radial(RadialParams),
    QuantizeCheck(QuantizeParams),
    Commutant(CommutantParams),
    Helmholtz(HelmholtzParams),
    Threshold(ThresholdParams),
    Pairing(PairingParams),
    Scatter1d(Scatter1dParams),
    Radon(RadonParams),
    VarOrder(VarOrderParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub params: Params,
}

pub const DEFAULT_SEED: u64 = 7;
const COMMON_KEYS: [&str; 3] = ["experiment", "seed", "output_dir"];

fn positive(v: &mut Vec<String>, field: &str, x: f64) {
    if !(x > 0.0 && x.is_finite()) {
        v.push(format!("{field}: must be positive and finite, got {x}"));
    }
}

fn at_least(v: &mut Vec<String>, field: &str, x: usize, lo: usize) {
    if x < lo {
        v.push(format!("{field}: must be at least {lo}, got {x}"));
    }
}

impl Params {
    fn default_for(e: Experiment) -> Params {
        match e {
            Experiment::Flow => Params::Flow(Default::default()),
            Experiment::Radial => Params::Radial(Default::default()),
            Experiment::QuantizeCheck => Params::QuantizeCheck(Default::default()),
            Experiment::Commutant => Params::Commutant(Default::default()),
            Experiment::Helmholtz => Params::Helmholtz(Default::default()),
            Experiment::Threshold => Params::Threshold(Default::default()),
            Experiment::Pairing => Params::Pairing(Default::default()),
            Experiment::Scatter1d => Params::Scatter1d(Default::default()),
            Experiment::Radon => Params::Radon(Default::default()),
            Experiment::VarOrder => Params::VarOrder(Default::default()),
        }
    }

    pub fn to_value(&self) -> Value {
        let v = match self {
            Params::Flow(p) => serde_json::to_value(p),
            Params::Radial(p) => serde_json::to_value(p),
            Params::QuantizeCheck(p) => serde_json::to_value(p),
            Params::Commutant(p) => serde_json::to_value(p),
            Params::Helmholtz(p) => serde_json::to_value(p),
            Params::Threshold(p) => serde_json::to_value(p),
            Params::Pairing(p) => serde_json::to_value(p),
            Params::Scatter1d(p) => serde_json::to_value(p),
            Params::Radon(p) => serde_json::to_value(p),
            Params::VarOrder(p) => serde_json::to_value(p),
        };
        v.expect("parameter structs always serialize")
    }

    fn from_value(e: Experiment, v: Value) -> Result<Params, String> {
        fn de<T: DeserializeOwned>(v: Value) -> Result<T, String> {
            serde_json::from_value(v).map_err(|err| err.to_string())
        }
        Ok(match e {
            Experiment::Flow => Params::Flow(de(v)?),
            Experiment::Radial => Params::Radial(de(v)?),
            Experiment::QuantizeCheck => Params::QuantizeCheck(de(v)?),
            Experiment::Commutant => Params::Commutant(de(v)?),
            Experiment::Helmholtz => Params::Helmholtz(de(v)?),
            Experiment::Threshold => Params::Threshold(de(v)?),
            Experiment::Pairing => Params::Pairing(de(v)?),
            Experiment::Scatter1d => Params::Scatter1d(de(v)?),
            Experiment::Radon => Params::Radon(de(v)?),
            Experiment::VarOrder => Params::VarOrder(de(v)?),
        })
    }

    fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        match self {
            Params::Flow(p) => {
                if p.dim != 2 && p.dim != 3 {
                    v.push(format!("dim: must be 2 or 3, got {}", p.dim));
                }
                positive(&mut v, "lambda", p.lambda);
                at_least(&mut v, "trajectories", p.trajectories, 1);
                positive(&mut v, "t_final", p.t_final);
                if !(p.dt > 0.0 && p.dt <= 0.01) {
                    v.push(format!("dt: must lie in (0, 0.01], got {}", p.dt));
                }
                positive(&mut v, "sink_tol", p.sink_tol);
            }
            Params::Radial(p) => {
                if !MODELS.contains(&p.model.as_str()) {
                    v.push(format!("model: unknown `{}`{}", p.model, suggestion(&p.model, &MODELS)));
                }
                if p.dim != 2 && p.dim != 3 {
                    v.push(format!("dim: must be 2 or 3, got {}", p.dim));
                }
                positive(&mut v, "lambda", p.lambda);
                if !(2..=12).contains(&p.resolution) {
                    v.push(format!("resolution: must lie in 2..=12, got {}", p.resolution));
                }
                positive(&mut v, "location_tol", p.location_tol);
                positive(&mut v, "beta_ratio_tol", p.beta_ratio_tol);
                if !(p.overlap_angle_deg > 0.0 && p.overlap_angle_deg < 45.0) {
                    v.push(format!("overlap_angle_deg: must lie in (0, 45), got {}", p.overlap_angle_deg));
                }
            }
            Params::QuantizeCheck(p) => {
                p.grid.check("grid", crate::symbol::quantize_budget(1), &mut v);
                positive(&mut v, "identity_tol", p.identity_tol);
                positive(&mut v, "composition_tol", p.composition_tol);
                positive(&mut v, "pair_scale[0]", p.pair_scale[0]);
                positive(&mut v, "pair_scale[1]", p.pair_scale[1]);
                if !(p.refine_factor > 1.0) {
                    v.push(format!("refine_factor: must exceed 1, got {}", p.refine_factor));
                }
                let top = p.pair_scale[0] * p.refine_factor * p.pair_scale[1];
                if 50.0 * top / std::f64::consts::PI > crate::symbol::quantize_budget(1) as f64 {
                    v.push(format!(
                        "pair_scale: refined pair needs more than {} points",
                        crate::symbol::quantize_budget(1)
                    ));
                }
                positive(&mut v, "bracket_tol", p.bracket_tol);
                at_least(&mut v, "parametrix_terms", p.parametrix_terms, 1);
                positive(&mut v, "parametrix_step", p.parametrix_step);
            }
            Params::Commutant(p) => {
                at_least(&mut v, "fields", p.fields, 1);
                if p.points % 2 != 0 || p.points < 16 {
                    v.push(format!("points: must be even and at least 16, got {}", p.points));
                }
                positive(&mut v, "digamma", p.digamma);
                positive(&mut v, "s0", p.s0);
                positive(&mut v, "eps", p.eps);
                positive(&mut v, "identity_tol", p.identity_tol);
                if p.radial_orders.iter().any(|r| !r.is_finite()) {
                    v.push("radial_orders: must be finite".into());
                }
                positive(&mut v, "delta", p.delta);
                positive(&mut v, "radial_digamma", p.radial_digamma);
            }
            Params::Helmholtz(p) => {
                positive(&mut v, "lambda", p.lambda);
                if p.dims.is_empty() || p.dims.iter().any(|n| *n != 2 && *n != 3) {
                    v.push(format!("dims: entries must be 2 or 3, got {:?}", p.dims));
                }
                positive(&mut v, "r_min", p.r_min);
                if !(p.r_max > p.r_min) {
                    v.push(format!("r_max: must exceed r_min, got {}", p.r_max));
                }
                at_least(&mut v, "radii", p.radii, 2);
                positive(&mut v, "slope_tol", p.slope_tol);
                at_least(&mut v, "series_terms", p.series_terms, 1);
                if p.series_radii.len() < 2 || p.series_radii.iter().any(|r| !(*r > 1.0)) {
                    v.push("series_radii: need at least two radii above 1".into());
                }
                positive(&mut v, "series_gain", p.series_gain);
            }
            Params::Threshold(p) => {
                if p.dim != 2 && p.dim != 3 {
                    v.push(format!("dim: must be 2 or 3, got {}", p.dim));
                }
                positive(&mut v, "lambda", p.lambda);
                if p.orders.is_empty() || p.orders.iter().any(|r| !r.is_finite()) {
                    v.push("orders: need at least one finite order".into());
                }
                if !(p.r_min >= 1.0) {
                    v.push(format!("r_min: must be at least 1, got {}", p.r_min));
                }
                if !(p.r_max >= 10.0 * p.r_min) {
                    v.push(format!("r_max: must be at least 10·r_min, got {}", p.r_max));
                }
                at_least(&mut v, "radii", p.radii, 3);
                positive(&mut v, "exponent_tol", p.exponent_tol);
                positive(&mut v, "log_r2", p.log_r2);
                positive(&mut v, "bounded_ratio", p.bounded_ratio);
            }
            Params::Pairing(p) => {
                positive(&mut v, "lambda", p.lambda);
                if p.radii.is_empty() || p.radii.iter().any(|r| !(*r >= 2.0 && *r >= 5.0 / p.lambda)) {
                    v.push("radii: each must be at least max(2, 5/lambda)".into());
                }
                positive(&mut v, "gap_tol", p.gap_tol);
                positive(&mut v, "self_pairing_tol", p.self_pairing_tol);
                at_least(&mut v, "densities", p.densities, 1);
                positive(&mut v, "unitarity_tol", p.unitarity_tol);
                positive(&mut v, "equivariance_tol", p.equivariance_tol);
                if !(p.rule_degrees[0] >= 8 && p.rule_degrees[1] > p.rule_degrees[0]) {
                    v.push(format!("rule_degrees: need 8 <= first < second, got {:?}", p.rule_degrees));
                }
                positive(&mut v, "refinement_tol", p.refinement_tol);
            }
            Params::Scatter1d(p) => {
                at_least(&mut v, "potentials", p.potentials.len(), 1);
                for (i, q) in p.potentials.iter().enumerate() {
                    if !POTENTIALS.contains(&q.name.as_str()) {
                        v.push(format!(
                            "potentials[{i}].name: unknown `{}`{}",
                            q.name,
                            suggestion(&q.name, &POTENTIALS)
                        ));
                    }
                    if q.name != "free" {
                        positive(&mut v, &format!("potentials[{i}].width"), q.width);
                    }
                    if !q.height.is_finite() || !q.centre.is_finite() {
                        v.push(format!("potentials[{i}]: height and centre must be finite"));
                    }
                }
                positive(&mut v, "lambda_min", p.lambda_min);
                if !(p.lambda_max > p.lambda_min) {
                    v.push(format!("lambda_max: must exceed lambda_min, got {}", p.lambda_max));
                }
                at_least(&mut v, "ladder", p.ladder, 2);
                positive(&mut v, "unitarity_tol", p.unitarity_tol);
                positive(&mut v, "oracle_tol", p.oracle_tol);
                positive(&mut v, "wronskian_tol", p.wronskian_tol);
                if p.lg_powers.iter().any(|k| *k == 0 || *k > 12) {
                    v.push(format!("lg_powers: entries must lie in 1..=12, got {:?}", p.lg_powers));
                }
                if p.boundary_radii.iter().any(|r| !(*r >= 10.0 && *r <= 1e3)) {
                    v.push("boundary_radii: each must lie in [10, 1000]".into());
                }
                positive(&mut v, "boundary_floor", p.boundary_floor);
                positive(&mut v, "boundary_variation", p.boundary_variation);
            }
            Params::Radon(p) => {
                at_least(&mut v, "pairs", p.pairs, 1);
                p.grid.check("grid", 64, &mut v);
                if !(1..=8).contains(&p.direction_stride) {
                    v.push(format!("direction_stride: must lie in 1..=8, got {}", p.direction_stride));
                }
                positive(&mut v, "adjoint_tol", p.adjoint_tol);
                positive(&mut v, "xi_min", p.xi_min);
                if !(p.xi_max > p.xi_min) {
                    v.push(format!("xi_max: must exceed xi_min, got {}", p.xi_max));
                }
                at_least(&mut v, "xi_points", p.xi_points, 3);
                positive(&mut v, "plateau_tol", p.plateau_tol);
                if !(p.cone_width > 0.0 && p.cone_width <= 1.0) {
                    v.push(format!("cone_width: must lie in (0, 1], got {}", p.cone_width));
                }
                if p.cone_magnitudes.is_empty() || p.cone_magnitudes.iter().any(|m| !(*m > 0.0)) {
                    v.push("cone_magnitudes: need positive magnitudes".into());
                }
                positive(&mut v, "collapse_ratio", p.collapse_ratio);
                p.injectivity_2d.check("injectivity_2d", 24, &mut v);
                p.injectivity_3d.check("injectivity_3d", 10, &mut v);
                positive(&mut v, "reconstruction_tol", p.reconstruction_tol);
            }
            Params::VarOrder(p) => {
                p.grid.check("grid", 1 << 12, &mut v);
                positive(&mut v, "amplitude", p.amplitude);
                at_least(&mut v, "seminorm_order", p.seminorm_order, 1);
                if !p.sobolev_s.is_finite() || !p.sobolev_r.is_finite() {
                    v.push("sobolev_s, sobolev_r: must be finite".into());
                }
                positive(&mut v, "consistency_tol", p.consistency_tol);
            }
        }
        v
    }
}

/// Reports keys of `given` absent from `schema`, recursing into objects and arrays of objects.
fn unknown_keys(given: &Map<String, Value>, schema: &Map<String, Value>, prefix: &str, out: &mut Vec<String>) {
    let known: Vec<&str> = schema.keys().map(|k| k.as_str()).collect();
    for (k, v) in given {
        let path = format!("{prefix}{k}");
        match schema.get(k) {
            None => out.push(format!("{path}: unknown key{}", suggestion(k, &known))),
            Some(Value::Object(inner)) => {
                if let Value::Object(g) = v {
                    unknown_keys(g, inner, &format!("{path}."), out);
                }
            }
            Some(Value::Array(items)) => {
                if let (Some(Value::Object(inner)), Value::Array(given_items)) = (items.first(), v) {
                    for (i, item) in given_items.iter().enumerate() {
                        if let Value::Object(g) = item {
                            unknown_keys(g, inner, &format!("{path}[{i}]."), out);
                        }
                    }
                }
            }
            Some(_) => {}
        }
    }
}

/// Parses and validates a config body for `experiment`, collecting every violation.
pub fn parse_config(text: &str, experiment: Experiment) -> Result<ExperimentConfig, ConfigError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let Value::Object(mut map) = value else {
        return Err(ConfigError::Parse("top level must be an object".into()));
    };
    let mut violations = Vec::new();
    match map.remove("experiment") {
        None => {}
        Some(Value::String(s)) if s == experiment.name() => {}
        Some(other) => violations.push(format!("experiment: config names {other} but `{experiment}` was requested")),
    }
    let seed = match map.remove("seed") {
        None => DEFAULT_SEED,
        Some(v) => v.as_u64().unwrap_or_else(|| {
            violations.push(format!("seed: must be a non-negative integer, got {v}"));
            DEFAULT_SEED
        }),
    };
    let output_dir = match map.remove("output_dir") {
        None => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(v) => {
            violations.push(format!("output_dir: must be a string, got {v}"));
            None
        }
    };
    let Value::Object(schema) = Params::default_for(experiment).to_value() else {
        unreachable!("parameter structs serialize to objects")
    };
    let mut keys = schema.clone();
    for k in COMMON_KEYS {
        keys.insert(k.into(), Value::Null);
    }
    unknown_keys(&map, &keys, "", &mut violations);
    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations));
    }
    let params = Params::from_value(experiment, Value::Object(map)).map_err(|e| ConfigError::Invalid(vec![e]))?;
    let violations = params.validate();
    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations));
    }
    Ok(ExperimentConfig { experiment, seed, output_dir, params })
}

pub fn load_config(path: &Path, experiment: Experiment) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text, experiment)
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        Self { experiment, seed: DEFAULT_SEED, output_dir: None, params: Params::default_for(experiment) }
    }

    /// Experiment, seed and every parameter; feeding it back reproduces the run.
    pub fn echo(&self) -> Value {
        let mut v = self.params.to_value();
        if let Value::Object(m) = &mut v {
            m.insert("experiment".into(), Value::String(self.experiment.name().into()));
            m.insert("seed".into(), Value::from(self.seed));
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invalid(text: &str, e: Experiment) -> Vec<String> {
        match parse_config(text, e) {
            Err(ConfigError::Invalid(v)) => v,
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse_config(r#"{"experiment": "helmholtz"}"#, Experiment::Helmholtz).unwrap();
        assert_eq!(c.params, Params::Helmholtz(HelmholtzParams::default()));
        assert_eq!(c.seed, DEFAULT_SEED);
        let c = parse_config(r#"{"lambda": 2.0, "seed": 11}"#, Experiment::Helmholtz).unwrap();
        let Params::Helmholtz(p) = c.params else { panic!() };
        assert_eq!((p.lambda, p.dims, c.seed), (2.0, vec![2, 3], 11));
    }

    #[test]
    fn unknown_key_gets_a_suggestion() {
        let v = invalid(r#"{"lamda": 1.0}"#, Experiment::Helmholtz);
        assert_eq!(v, vec!["lamda: unknown key; did you mean `lambda`?".to_string()]);
        let v = invalid(r#"{"grid": {"pionts": 64}}"#, Experiment::QuantizeCheck);
        assert!(v[0].starts_with("grid.pionts") && v[0].contains("`points`"), "{v:?}");
        let v = invalid(r#"{"potentials": [{"name": "free", "hieght": 1}]}"#, Experiment::Scatter1d);
        assert!(v[0].contains("potentials[0].hieght") && v[0].contains("`height`"), "{v:?}");
    }

    #[test]
    fn odd_grid_names_the_field() {
        let v = invalid(r#"{"grid": {"points": 63}}"#, Experiment::QuantizeCheck);
        assert!(v.iter().any(|m| m.starts_with("grid.points")), "{v:?}");
    }

    #[test]
    fn all_violations_are_collected() {
        let v = invalid(r#"{"lambda": -1, "dt": 0.5, "trajectories": 0}"#, Experiment::Flow);
        assert_eq!(v.len(), 3, "{v:?}");
    }

    #[test]
    fn mismatched_experiment_and_bad_json() {
        assert!(!invalid(r#"{"experiment": "radon"}"#, Experiment::Flow).is_empty());
        assert!(matches!(parse_config("{", Experiment::Flow), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_config("[1]", Experiment::Flow), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_config(r#"{"lambda": "one"}"#, Experiment::Flow), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn echo_round_trips() {
        for e in Experiment::ALL {
            let c = ExperimentConfig::defaults(e);
            let back = parse_config(&c.echo().to_string(), e).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn experiment_names_parse() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("quantise-check".parse::<Experiment>().unwrap_err().contains("quantize-check"));
    }
}
