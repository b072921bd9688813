//! Run configuration: TOML schema, defaults and exhaustive validation.

use std::path::{Path, PathBuf};

use gaussvol::calibration::Param;
use gaussvol::kernels::{InputCurveSpec, KernelSpec, ModelConfig};
use gaussvol::montecarlo::SimulationPlan;
use gaussvol::pricing::{CosOptions, DEFAULT_SKEW_STEP};
use serde::Deserialize;

use crate::error::CliError;
use crate::table;

pub const DEFAULT_N: usize = 512;
pub const DEFAULT_N_COS: usize = 256;
pub const DEFAULT_WIDTH: f64 = 12.0;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<RawModel>,
    #[serde(default)]
    numerics: RawNumerics,
    #[serde(default)]
    mc: RawMc,
    transform: Option<TransformSection>,
    price: Option<PriceSection>,
    smile: Option<SmileSection>,
    skew: Option<SkewSection>,
    simulate: Option<SimulateSection>,
    calibrate: Option<CalibrateSection>,
    selftest: Option<SelftestSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    s0: f64,
    #[serde(default)]
    kappa: f64,
    nu: f64,
    rho: f64,
    #[serde(rename = "T", default = "one")]
    maturity: f64,
    kernel: RawKernel,
    curve: RawCurve,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KernelKind {
    Constant,
    RiemannLiouville,
    BrownianBridge,
    Tabulated,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    #[serde(rename = "type")]
    kind: KernelKind,
    h: Option<f64>,
    t1: Option<f64>,
    samples_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CurveKind {
    Affine,
    FractionalAffine,
    Tabulated,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCurve {
    #[serde(rename = "type")]
    kind: CurveKind,
    x0: Option<f64>,
    theta: Option<f64>,
    values_path: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNumerics {
    n: Option<usize>,
    n_cos: Option<usize>,
    #[serde(rename = "L")]
    width: Option<f64>,
    skew_step: Option<f64>,
    trace_nodes: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMc {
    n_steps: Option<usize>,
    n_paths: Option<usize>,
    seed: Option<u64>,
    antithetic: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSection {
    /// Frequencies `z` with `u = i z`.
    pub z: Vec<f64>,
    /// `[re, im]` of the weight on `int X^2`.
    #[serde(default)]
    pub w: [f64; 2],
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSection {
    pub strikes: Option<Vec<f64>>,
    #[serde(default)]
    pub monte_carlo: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmileSection {
    pub maturities: Option<Vec<f64>>,
    pub log_moneyness: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewSection {
    pub maturities: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "one_path")]
    pub paths: usize,
}

fn one_path() -> usize {
    1
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { paths: 1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    pub targets_path: PathBuf,
    pub free: Vec<String>,
    pub init: Option<Vec<f64>>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    pub trace_path: Option<PathBuf>,
}

fn default_budget() -> usize {
    500
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelftestSection {
    /// Criterion ids to run; empty means all.
    #[serde(default)]
    pub criteria: Vec<usize>,
    #[serde(default = "yes")]
    pub golden: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    pub n: usize,
    pub n_cos: usize,
    pub width: f64,
    pub skew_step: f64,
    pub trace_nodes: Option<usize>,
}

impl Numerics {
    pub fn cos(&self) -> CosOptions {
        CosOptions {
            n_terms: self.n_cos,
            width: self.width,
            ..CosOptions::default()
        }
    }
}

/// Validated configuration. Command sections are present only when given
/// in the file (or defaulted where the command has sensible defaults).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: Option<ModelConfig>,
    pub numerics: Numerics,
    pub mc: SimulationPlan,
    pub transform: Option<TransformSection>,
    pub price: Option<PriceSection>,
    pub smile: Option<SmileSection>,
    pub skew: Option<SkewSection>,
    pub simulate: Option<SimulateSection>,
    pub calibrate: Option<CalibrateSection>,
    pub calibration_free: Vec<Param>,
    pub selftest: Option<SelftestSection>,
}

impl RunConfig {
    pub fn model(&self) -> Result<&ModelConfig, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config(vec!["missing [model] section".into()]))
    }
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

pub fn parse_config(path: &Path, overrides: Overrides) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_str(&text, base, overrides)
}

/// Parses `text`; relative data paths are resolved against `base`.
pub fn parse_str(text: &str, base: &Path, overrides: Overrides) -> Result<RunConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    build(raw, base, overrides)
}

/// Configuration with every default and no model, for `selftest` without a file.
pub fn defaults(overrides: Overrides) -> RunConfig {
    build(RawConfig::default(), Path::new("."), overrides).expect("defaults are valid")
}

fn build(raw: RawConfig, base: &Path, overrides: Overrides) -> Result<RunConfig, CliError> {
    let mut errs = Vec::new();

    let model = raw.model.and_then(|m| model_config(m, base, &mut errs));

    let numerics = Numerics {
        n: overrides.n.or(raw.numerics.n).unwrap_or(DEFAULT_N),
        n_cos: raw.numerics.n_cos.unwrap_or(DEFAULT_N_COS),
        width: raw.numerics.width.unwrap_or(DEFAULT_WIDTH),
        skew_step: raw.numerics.skew_step.unwrap_or(DEFAULT_SKEW_STEP),
        trace_nodes: raw.numerics.trace_nodes,
    };
    if numerics.n < 2 {
        errs.push(format!("numerics.n must be at least 2, got {}", numerics.n));
    }
    if numerics.n_cos < 2 {
        errs.push(format!("numerics.n_cos must be at least 2, got {}", numerics.n_cos));
    }
    if !(numerics.width > 0.0 && numerics.width.is_finite()) {
        errs.push(format!("numerics.L must be positive, got {}", numerics.width));
    }
    if !(numerics.skew_step > 1e-4 && numerics.skew_step <= 0.05) {
        errs.push(format!("numerics.skew_step must lie in (1e-4, 0.05], got {}", numerics.skew_step));
    }
    if let Some(m) = numerics.trace_nodes {
        if m < 10 {
            errs.push(format!("numerics.trace_nodes must be at least 10, got {m}"));
        }
    }

    let mc = SimulationPlan {
        n_steps: raw.mc.n_steps.unwrap_or(500),
        n_paths: raw.mc.n_paths.unwrap_or(100_000),
        seed: overrides.seed.or(raw.mc.seed).unwrap_or(0),
        antithetic: raw.mc.antithetic.unwrap_or(true),
    };
    if mc.n_steps < 2 {
        errs.push(format!("mc.n_steps must be at least 2, got {}", mc.n_steps));
    }
    if mc.n_paths < 2 {
        errs.push(format!("mc.n_paths must be at least 2, got {}", mc.n_paths));
    }
    if mc.antithetic && mc.n_paths % 2 != 0 {
        errs.push(format!("mc.n_paths must be even with antithetic sampling, got {}", mc.n_paths));
    }

    if let Some(t) = &raw.transform {
        if t.z.is_empty() {
            errs.push("transform.z must not be empty".into());
        }
        if t.z.iter().chain(&t.w).any(|v| !v.is_finite()) {
            errs.push("transform.z and transform.w must be finite".into());
        }
        if t.w[0] > 0.0 {
            errs.push(format!("transform.w must have a nonpositive real part, got {}", t.w[0]));
        }
    }
    if let Some(p) = &raw.price {
        if let Some(strikes) = &p.strikes {
            if strikes.is_empty() {
                errs.push("price.strikes must not be empty".into());
            }
            if strikes.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
                errs.push("price.strikes must be positive".into());
            }
        }
    }
    if let Some(s) = &raw.smile {
        if s.log_moneyness.is_empty() {
            errs.push("smile.log_moneyness must not be empty".into());
        }
        if s.log_moneyness.iter().any(|k| !k.is_finite()) {
            errs.push("smile.log_moneyness must be finite".into());
        }
        if let Some(ts) = &s.maturities {
            check_maturities("smile.maturities", ts, &mut errs);
        }
    }
    if let Some(s) = &raw.skew {
        check_maturities("skew.maturities", &s.maturities, &mut errs);
    }
    if let Some(s) = &raw.simulate {
        if s.paths == 0 {
            errs.push("simulate.paths must be at least 1".into());
        }
    }
    let mut calibration_free = Vec::new();
    if let Some(c) = &raw.calibrate {
        for name in &c.free {
            match Param::parse(name) {
                Some(p) if calibration_free.contains(&p) => {
                    errs.push(format!("calibrate.free lists {name} twice"))
                }
                Some(p) => calibration_free.push(p),
                None => errs.push(format!("calibrate.free: unknown parameter {name:?}")),
            }
        }
        if c.free.is_empty() {
            errs.push("calibrate.free must name at least one parameter".into());
        }
        if let Some(init) = &c.init {
            if init.len() != c.free.len() {
                errs.push(format!(
                    "calibrate.init has {} values for {} free parameters",
                    init.len(),
                    c.free.len()
                ));
            }
            for (p, v) in calibration_free.iter().zip(init) {
                if !p.in_bounds(*v) {
                    errs.push(format!("calibrate.init: {p} = {v} is out of bounds"));
                }
            }
        }
        if c.budget == 0 {
            errs.push("calibrate.budget must be positive".into());
        }
    }
    if let Some(s) = &raw.selftest {
        for id in &s.criteria {
            if !(1..=10).contains(id) {
                errs.push(format!("selftest.criteria: no criterion #{id}"));
            }
        }
    }

    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
    Ok(RunConfig {
        model,
        numerics,
        mc,
        transform: raw.transform,
        price: raw.price,
        smile: raw.smile,
        skew: raw.skew,
        simulate: raw.simulate,
        calibrate: raw.calibrate.map(|c| CalibrateSection {
            targets_path: resolve(&c.targets_path),
            trace_path: c.trace_path.as_ref().map(resolve),
            ..c
        }),
        calibration_free,
        selftest: raw.selftest,
    })
}

fn check_maturities(key: &str, ts: &[f64], errs: &mut Vec<String>) {
    if ts.is_empty() {
        errs.push(format!("{key} must not be empty"));
    }
    if ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        errs.push(format!("{key} must be positive"));
    }
}

fn model_config(m: RawModel, base: &Path, errs: &mut Vec<String>) -> Option<ModelConfig> {
    let before = errs.len();
    let k = &m.kernel;
    let unused = |field: &str, present: bool, errs: &mut Vec<String>| {
        if present {
            errs.push(format!("model.kernel.{field} is not used by this kernel type"));
        }
    };
    let kernel = match k.kind {
        KernelKind::Constant => {
            unused("h", k.h.is_some(), errs);
            unused("t1", k.t1.is_some(), errs);
            unused("samples_path", k.samples_path.is_some(), errs);
            Some(KernelSpec::Constant)
        }
        KernelKind::RiemannLiouville => {
            unused("t1", k.t1.is_some(), errs);
            unused("samples_path", k.samples_path.is_some(), errs);
            match k.h {
                Some(h) => Some(KernelSpec::RiemannLiouville { h }),
                None => {
                    errs.push("model.kernel.h is required for riemann_liouville".into());
                    None
                }
            }
        }
        KernelKind::BrownianBridge => {
            unused("h", k.h.is_some(), errs);
            unused("samples_path", k.samples_path.is_some(), errs);
            match k.t1 {
                Some(t1) => Some(KernelSpec::BrownianBridge { t1 }),
                None => {
                    errs.push("model.kernel.t1 is required for brownian_bridge".into());
                    None
                }
            }
        }
        KernelKind::Tabulated => {
            unused("h", k.h.is_some(), errs);
            unused("t1", k.t1.is_some(), errs);
            match &k.samples_path {
                None => {
                    errs.push("model.kernel.samples_path is required for tabulated".into());
                    None
                }
                Some(p) => match table::read_columns(&base.join(p), &["lag", "value"]) {
                    Err(e) => {
                        errs.push(format!("model.kernel.samples_path: {e}"));
                        None
                    }
                    Ok(cols) => kernel_from_samples(&cols[0], &cols[1], errs),
                },
            }
        }
    };

    let c = &m.curve;
    let affine_params = |errs: &mut Vec<String>| match (c.x0, c.theta) {
        (Some(x0), Some(theta)) => Some((x0, theta)),
        _ => {
            errs.push("model.curve.x0 and model.curve.theta are required for affine curves".into());
            None
        }
    };
    let curve = match c.kind {
        CurveKind::Affine | CurveKind::FractionalAffine => {
            if c.values_path.is_some() {
                errs.push("model.curve.values_path is only used by tabulated curves".into());
            }
            affine_params(errs).map(|(x0, theta)| match c.kind {
                CurveKind::Affine => InputCurveSpec::Affine { x0, theta },
                _ => InputCurveSpec::FractionalAffine { x0, theta },
            })
        }
        CurveKind::Tabulated => {
            if c.x0.is_some() || c.theta.is_some() {
                errs.push("model.curve.x0/theta are not used by tabulated curves".into());
            }
            match &c.values_path {
                None => {
                    errs.push("model.curve.values_path is required for tabulated".into());
                    None
                }
                Some(p) => match table::read_columns(&base.join(p), &["t", "value"]) {
                    Err(e) => {
                        errs.push(format!("model.curve.values_path: {e}"));
                        None
                    }
                    Ok(mut cols) => {
                        let values = cols.pop().unwrap();
                        let times = cols.pop().unwrap();
                        Some(InputCurveSpec::Tabulated { times, values })
                    }
                },
            }
        }
    };
    let (kernel, curve) = (kernel?, curve?);
    let model = ModelConfig {
        s0: m.s0,
        kernel,
        curve,
        kappa: m.kappa,
        nu: m.nu,
        rho: m.rho,
        maturity: m.maturity,
    };
    errs.extend(model.violations().into_iter().map(|v| format!("model: {v}")));
    (errs.len() == before).then_some(model)
}

fn kernel_from_samples(lags: &[f64], values: &[f64], errs: &mut Vec<String>) -> Option<KernelSpec> {
    if lags.len() < 2 {
        errs.push("model.kernel.samples_path needs at least two rows".into());
        return None;
    }
    let step = lags[1] - lags[0];
    let uniform = lags
        .iter()
        .enumerate()
        .all(|(j, &l)| (l - j as f64 * step).abs() <= 1e-9 * step.abs().max(1.0));
    if lags[0] != 0.0 || !uniform {
        errs.push("model.kernel.samples_path lags must be uniform and start at 0".into());
        return None;
    }
    Some(KernelSpec::TabulatedConvolution {
        step,
        values: values.to_vec(),
    })
}
