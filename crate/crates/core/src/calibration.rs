//! Least-squares calibration of model parameters to implied-vol smiles or
//! ATM skew term structures with a restarted Nelder-Mead simplex.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{InputCurveSpec, KernelSpec, ModelConfig};
use crate::pricing::{skew_from_pricer, CosOptions, CosPricer, SkewPoint, SmilePoint, DEFAULT_SKEW_STEP};

/// Objective value assigned to candidates that cannot be priced.
pub const PENALTY: f64 = 1e6;
const SIMPLEX_TOL: f64 = 1e-6;
const INITIAL_STEP: f64 = 0.25;
const RESTARTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    X0,
    Theta,
    Kappa,
    Nu,
    Rho,
    Hurst,
}

impl Param {
    pub fn name(&self) -> &'static str {
        match self {
            Param::X0 => "x0",
            Param::Theta => "theta",
            Param::Kappa => "kappa",
            Param::Nu => "nu",
            Param::Rho => "rho",
            Param::Hurst => "hurst",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "x0" => Param::X0,
            "theta" => Param::Theta,
            "kappa" => Param::Kappa,
            "nu" => Param::Nu,
            "rho" => Param::Rho,
            "h" | "hurst" => Param::Hurst,
            _ => return None,
        })
    }

    pub fn in_bounds(&self, v: f64) -> bool {
        match self {
            Param::Nu => v > 0.0 && v.is_finite(),
            Param::Rho => v > -1.0 && v < 1.0,
            Param::Hurst => v > 0.0 && v < 1.0,
            _ => v.is_finite(),
        }
    }

    /// Unconstrained coordinate for a parameter value.
    pub fn to_free(&self, v: f64) -> f64 {
        match self {
            Param::Nu => v.ln(),
            Param::Rho => v.atanh(),
            Param::Hurst => (v / (1.0 - v)).ln(),
            _ => v,
        }
    }

    pub fn from_free(&self, x: f64) -> f64 {
        match self {
            Param::Nu => x.exp(),
            Param::Rho => x.tanh(),
            Param::Hurst => 1.0 / (1.0 + (-x).exp()),
            _ => x,
        }
    }

    pub fn get(&self, model: &ModelConfig) -> Option<f64> {
        match (self, &model.curve, &model.kernel) {
            (Param::X0, InputCurveSpec::Affine { x0, .. } | InputCurveSpec::FractionalAffine { x0, .. }, _) => Some(*x0),
            (Param::Theta, InputCurveSpec::Affine { theta, .. } | InputCurveSpec::FractionalAffine { theta, .. }, _) => {
                Some(*theta)
            }
            (Param::Kappa, ..) => Some(model.kappa),
            (Param::Nu, ..) => Some(model.nu),
            (Param::Rho, ..) => Some(model.rho),
            (Param::Hurst, _, KernelSpec::RiemannLiouville { h }) => Some(*h),
            _ => None,
        }
    }

    pub fn set(&self, model: &mut ModelConfig, v: f64) -> Result<()> {
        match (self, &mut model.curve, &mut model.kernel) {
            (Param::X0, InputCurveSpec::Affine { x0, .. } | InputCurveSpec::FractionalAffine { x0, .. }, _) => *x0 = v,
            (Param::Theta, InputCurveSpec::Affine { theta, .. } | InputCurveSpec::FractionalAffine { theta, .. }, _) => {
                *theta = v
            }
            (Param::Kappa, ..) => model.kappa = v,
            (Param::Nu, ..) => model.nu = v,
            (Param::Rho, ..) => model.rho = v,
            (Param::Hurst, _, KernelSpec::RiemannLiouville { h }) => *h = v,
            _ => {
                return Err(Error::Config(format!(
                    "parameter {} does not apply to this kernel/curve",
                    self.name()
                )))
            }
        }
        Ok(())
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Smile(Vec<SmilePoint>),
    Skew(Vec<SkewPoint>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Smile(v) => v.len(),
            Targets::Skew(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationProblem {
    /// Model holding the fixed values; free parameters are overwritten.
    pub base: ModelConfig,
    pub targets: Targets,
    pub free: Vec<Param>,
    pub init: Vec<f64>,
    pub budget: usize,
    /// Grid size used for every pricing call.
    pub n: usize,
    pub cos: CosOptions,
    pub skew_step: f64,
}

impl CalibrationProblem {
    pub fn new(base: ModelConfig, targets: Targets, free: Vec<Param>, init: Vec<f64>, budget: usize, n: usize) -> Self {
        Self {
            base,
            targets,
            free,
            init,
            budget,
            n,
            cos: CosOptions {
                check_convergence: false,
                ..CosOptions::default()
            },
            skew_step: DEFAULT_SKEW_STEP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Config("calibration needs at least one target".into()));
        }
        if self.free.is_empty() {
            return Err(Error::Config("calibration needs at least one free parameter".into()));
        }
        if self.free.len() != self.init.len() {
            return Err(Error::Config(format!(
                "{} free parameters but {} initial values",
                self.free.len(),
                self.init.len()
            )));
        }
        for (i, p) in self.free.iter().enumerate() {
            if self.free[..i].contains(p) {
                return Err(Error::Config(format!("parameter {p} listed twice")));
            }
            if p.get(&self.base).is_none() {
                return Err(Error::Config(format!("parameter {p} does not apply to this kernel/curve")));
            }
        }
        for (p, &v) in self.free.iter().zip(&self.init) {
            if !p.in_bounds(v) {
                return Err(Error::Config(format!("initial {p} = {v} is out of bounds")));
            }
        }
        if self.budget == 0 {
            return Err(Error::Config("evaluation budget must be positive".into()));
        }
        self.model_at(&self.init)?.validate()
    }

    pub fn model_at(&self, values: &[f64]) -> Result<ModelConfig> {
        let mut m = self.base.clone();
        for (p, &v) in self.free.iter().zip(values) {
            p.set(&mut m, v)?;
        }
        Ok(m)
    }

    fn residuals(&self, model: &ModelConfig) -> Result<Vec<f64>> {
        model.validate()?;
        let mut maturities: Vec<f64> = match &self.targets {
            Targets::Smile(v) => v.iter().map(|p| p.maturity).collect(),
            Targets::Skew(v) => v.iter().map(|p| p.maturity).collect(),
        };
        maturities.sort_by(f64::total_cmp);
        maturities.dedup();
        let pricers: Vec<CosPricer> = maturities
            .iter()
            .map(|&t| CosPricer::from_model(model, self.n, t, &self.cos))
            .collect::<Result<_>>()?;
        let pricer_for = |t: f64| &pricers[maturities.partition_point(|&m| m < t)];
        match &self.targets {
            Targets::Smile(points) => points
                .iter()
                .map(|p| {
                    let pr = pricer_for(p.maturity);
                    Ok(pr.implied_vol(pr.s0() * p.k.exp())? - p.iv)
                })
                .collect(),
            Targets::Skew(points) => points
                .iter()
                .map(|p| Ok(skew_from_pricer(pricer_for(p.maturity), self.skew_step)?.skew - p.skew))
                .collect(),
        }
    }

    /// RMSE in vol (or skew) units; `PENALTY` for candidates that are out
    /// of bounds or fail to price.
    pub fn objective(&self, values: &[f64]) -> f64 {
        if values.len() != self.free.len() || self.free.iter().zip(values).any(|(p, &v)| !p.in_bounds(v)) {
            return PENALTY;
        }
        let model = match self.model_at(values) {
            Ok(m) => m,
            Err(_) => return PENALTY,
        };
        match self.residuals(&model) {
            Ok(r) => {
                let rmse = (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt();
                if rmse.is_finite() {
                    rmse
                } else {
                    PENALTY
                }
            }
            Err(e) => {
                log::debug!("candidate {values:?} penalized: {e}");
                PENALTY
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub evaluation: usize,
    pub params: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub params: Vec<f64>,
    pub objective: f64,
    pub evaluations: usize,
    pub budget_exhausted: bool,
    pub trace: Vec<TraceEntry>,
}

struct Evaluator<'a> {
    problem: &'a CalibrationProblem,
    count: usize,
    best: (Vec<f64>, f64),
    trace: Vec<TraceEntry>,
}

impl Evaluator<'_> {
    fn remaining(&self) -> usize {
        self.problem.budget.saturating_sub(self.count)
    }

    fn values(&self, free: &[f64]) -> Vec<f64> {
        self.problem.free.iter().zip(free).map(|(p, &x)| p.from_free(x)).collect()
    }

    fn record(&mut self, values: Vec<f64>, f: f64) -> f64 {
        self.count += 1;
        if f < self.best.1 {
            self.best = (values.clone(), f);
        }
        self.trace.push(TraceEntry {
            evaluation: self.count,
            params: values,
            objective: f,
        });
        f
    }

    fn eval(&mut self, free: &[f64]) -> f64 {
        let values = self.values(free);
        let f = self.problem.objective(&values);
        self.record(values, f)
    }

    /// Evaluates several points concurrently, truncated to the budget.
    fn eval_many(&mut self, points: &[Vec<f64>]) -> Vec<f64> {
        let take = points.len().min(self.remaining());
        let values: Vec<Vec<f64>> = points[..take].iter().map(|p| self.values(p)).collect();
        let fs: Vec<f64> = values.par_iter().map(|v| self.problem.objective(v)).collect();
        values.into_iter().zip(fs).map(|(v, f)| self.record(v, f)).collect()
    }
}

fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let mut d: f64 = 0.0;
    for a in simplex {
        for b in simplex {
            let dist = a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            d = d.max(dist);
        }
    }
    d
}

/// One Nelder-Mead run from `start` in free coordinates.
fn nelder_mead(ev: &mut Evaluator, start: &[f64], f_start: f64, step: f64) {
    let dim = start.len();
    let mut vertices: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            let mut v = start.to_vec();
            v[i] += step;
            v
        })
        .collect();
    let fs = ev.eval_many(&vertices);
    if fs.len() < dim {
        return;
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = std::iter::once((start.to_vec(), f_start))
        .chain(vertices.drain(..).zip(fs))
        .collect();
    let centroid = |s: &[(Vec<f64>, f64)]| -> Vec<f64> {
        let mut c = vec![0.0; dim];
        for (v, _) in &s[..dim] {
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci += vi / dim as f64;
            }
        }
        c
    };
    let along = |c: &[f64], v: &[f64], t: f64| -> Vec<f64> { c.iter().zip(v).map(|(ci, vi)| ci + t * (vi - ci)).collect() };
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if diameter(&simplex) < SIMPLEX_TOL || ev.remaining() == 0 {
            return;
        }
        let c = centroid(&simplex);
        let worst = simplex[dim].clone();
        let xr = along(&c, &worst.0, -1.0);
        let fr = ev.eval(&xr);
        if fr < simplex[0].1 {
            if ev.remaining() == 0 {
                simplex[dim] = (xr, fr);
                return;
            }
            let xe = along(&c, &worst.0, -2.0);
            let fe = ev.eval(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        if ev.remaining() == 0 {
            return;
        }
        // contraction, outside when the reflection improved on the worst
        let (xc, fc) = if fr < worst.1 {
            let x = along(&c, &worst.0, -0.5);
            let f = ev.eval(&x);
            (x, f)
        } else {
            let x = along(&c, &worst.0, 0.5);
            let f = ev.eval(&x);
            (x, f)
        };
        if fc < worst.1.min(fr) {
            simplex[dim] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        let shrunk: Vec<Vec<f64>> = simplex[1..].iter().map(|(v, _)| along(&best, v, 0.5)).collect();
        let fs = ev.eval_many(&shrunk);
        if fs.len() < shrunk.len() {
            return;
        }
        for (slot, (v, f)) in simplex[1..].iter_mut().zip(shrunk.into_iter().zip(fs)) {
            *slot = (v, f);
        }
    }
}

/// Nelder-Mead in unconstrained coordinates (`nu = exp`, `rho = tanh`,
/// `H = logistic`), restarted twice from the best point with a smaller
/// simplex. Returns the best point seen.
pub fn calibrate(problem: &CalibrationProblem) -> Result<CalibrationResult> {
    problem.validate()?;
    let mut ev = Evaluator {
        problem,
        count: 0,
        best: (problem.init.clone(), f64::INFINITY),
        trace: Vec::new(),
    };
    let start: Vec<f64> = problem.free.iter().zip(&problem.init).map(|(p, &v)| p.to_free(v)).collect();
    let f0 = ev.eval(&start);
    let mut step = INITIAL_STEP;
    for round in 0..=RESTARTS {
        if ev.remaining() == 0 || (round > 0 && ev.best.1 == 0.0) {
            break;
        }
        let (best, fbest) = ev.best.clone();
        let from: Vec<f64> = problem.free.iter().zip(&best).map(|(p, &v)| p.to_free(v)).collect();
        nelder_mead(&mut ev, &from, if round == 0 { f0 } else { fbest }, step);
        step *= 0.25;
    }
    let budget_exhausted = ev.remaining() == 0;
    Ok(CalibrationResult {
        params: ev.best.0,
        objective: ev.best.1,
        evaluations: ev.count,
        budget_exhausted,
        trace: ev.trace,
    })
}

/// Smile targets generated by a model on a strike grid (log-moneyness).
pub fn synthetic_smile(model: &ModelConfig, n: usize, maturities: &[f64], log_moneyness: &[f64]) -> Result<Vec<SmilePoint>> {
    let opts = CosOptions {
        check_convergence: false,
        ..CosOptions::default()
    };
    let mut out = Vec::new();
    for &t in maturities {
        let pricer = CosPricer::from_model(model, n, t, &opts)?;
        for &k in log_moneyness {
            out.push(SmilePoint {
                k,
                maturity: t,
                iv: pricer.implied_vol(model.s0 * k.exp())?,
            });
        }
    }
    Ok(out)
}

/// Skew targets generated by a model.
pub fn synthetic_skews(model: &ModelConfig, n: usize, maturities: &[f64], h: f64) -> Result<Vec<SkewPoint>> {
    let opts = CosOptions {
        check_convergence: false,
        ..CosOptions::default()
    };
    maturities
        .iter()
        .map(|&t| skew_from_pricer(&CosPricer::from_model(model, n, t, &opts)?, h))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rough(nu: f64, rho: f64, h: f64) -> ModelConfig {
        ModelConfig {
            s0: 1.0,
            kernel: KernelSpec::RiemannLiouville { h },
            curve: InputCurveSpec::FractionalAffine { x0: 0.1, theta: 0.1 },
            kappa: 0.0,
            nu,
            rho,
            maturity: 1.0,
        }
    }

    fn flat(vol: f64) -> ModelConfig {
        ModelConfig {
            s0: 1.0,
            kernel: KernelSpec::Constant,
            curve: InputCurveSpec::Affine { x0: vol, theta: 0.0 },
            kappa: 0.0,
            nu: 0.0,
            rho: 0.0,
            maturity: 1.0,
        }
    }

    const N: usize = 24;

    proptest! {
        #[test]
        fn transforms_invert(nu in 1e-3f64..5.0, rho in -0.999f64..0.999, h in 1e-3f64..0.999, x in -2.0f64..2.0) {
            for (p, v) in [(Param::Nu, nu), (Param::Rho, rho), (Param::Hurst, h), (Param::X0, x), (Param::Kappa, x)] {
                let back = p.from_free(p.to_free(v));
                prop_assert!((back - v).abs() <= 1e-14 * v.abs().max(1.0), "{p}: {v} -> {back}");
                let there = p.to_free(p.from_free(x));
                prop_assert!((there - x).abs() <= 1e-13, "{p}: {x} -> {there}");
            }
        }
    }

    #[test]
    fn objective_is_zero_at_truth() {
        let truth = rough(0.25, -0.7, 0.3);
        let targets = synthetic_smile(&truth, N, &[0.1, 0.5], &[-0.1, 0.0, 0.1]).unwrap();
        let problem = CalibrationProblem::new(
            truth.clone(),
            Targets::Smile(targets),
            vec![Param::Nu, Param::Rho, Param::Hurst],
            vec![0.25, -0.7, 0.3],
            10,
            N,
        );
        assert!(problem.objective(&[0.25, -0.7, 0.3]) < 1e-10);
        let off = problem.objective(&[0.30, -0.7, 0.3]);
        assert!(off > 0.0 && off > problem.objective(&[0.25, -0.7, 0.3]));
        assert_eq!(problem.objective(&[-0.1, -0.7, 0.3]), PENALTY);
    }

    #[test]
    fn single_residual_objective() {
        let target = SmilePoint {
            k: 0.0,
            maturity: 0.5,
            iv: 0.25,
        };
        let problem = CalibrationProblem::new(flat(0.2), Targets::Smile(vec![target]), vec![Param::X0], vec![0.2], 10, 8);
        assert!((problem.objective(&[0.2]) - 0.05).abs() < 1e-6);
    }

    #[test]
    fn failed_pricing_is_penalized() {
        let target = SmilePoint {
            k: 3.0,
            maturity: 0.01,
            iv: 0.2,
        };
        let problem = CalibrationProblem::new(flat(0.2), Targets::Smile(vec![target]), vec![Param::X0], vec![0.2], 10, 8);
        assert_eq!(problem.objective(&[0.2]), PENALTY);
    }

    #[test]
    fn start_at_truth_stays() {
        let truth = rough(0.25, -0.7, 0.3);
        let targets = synthetic_smile(&truth, N, &[0.25], &[-0.1, 0.0, 0.1]).unwrap();
        let problem = CalibrationProblem::new(
            truth.clone(),
            Targets::Smile(targets),
            vec![Param::Nu, Param::Rho],
            vec![0.25, -0.7],
            60,
            N,
        );
        let res = calibrate(&problem).unwrap();
        assert!(res.objective < 1e-8);
        assert_eq!(res.params, vec![0.25, -0.7]);
        assert!(res.evaluations <= 60);
    }

    #[test]
    fn never_worse_than_start_and_respects_budget() {
        let truth = rough(0.25, -0.7, 0.3);
        let targets = synthetic_smile(&truth, N, &[0.25], &[-0.1, 0.0, 0.1]).unwrap();
        let problem = CalibrationProblem::new(
            truth,
            Targets::Smile(targets),
            vec![Param::Nu, Param::Rho],
            vec![0.5, 0.2],
            15,
            N,
        );
        let f0 = problem.objective(&[0.5, 0.2]);
        let res = calibrate(&problem).unwrap();
        assert!(res.objective <= f0);
        assert_eq!(res.evaluations, 15);
        assert!(res.budget_exhausted);
        assert_eq!(res.trace.len(), 15);
    }

    #[test]
    fn recovers_two_parameters() {
        let truth = rough(0.25, -0.7, 0.3);
        let targets = synthetic_smile(&truth, N, &[0.25, 1.0], &[-0.15, -0.05, 0.0, 0.05, 0.15]).unwrap();
        let problem = CalibrationProblem::new(
            truth,
            Targets::Smile(targets),
            vec![Param::Nu, Param::Rho],
            vec![0.4, -0.3],
            300,
            N,
        );
        let res = calibrate(&problem).unwrap();
        assert!((res.params[0] - 0.25).abs() < 0.0125, "{:?}", res.params);
        assert!((res.params[1] + 0.7).abs() < 0.05, "{:?}", res.params);
    }

    #[test]
    fn problem_validation() {
        let truth = rough(0.25, -0.7, 0.3);
        let pts = vec![SkewPoint {
            maturity: 0.5,
            skew: -0.3,
        }];
        let mk = |free: Vec<Param>, init: Vec<f64>| {
            CalibrationProblem::new(truth.clone(), Targets::Skew(pts.clone()), free, init, 10, N)
        };
        assert!(mk(vec![], vec![]).validate().is_err());
        assert!(mk(vec![Param::Nu], vec![0.2, 0.3]).validate().is_err());
        assert!(mk(vec![Param::Rho], vec![1.2]).validate().is_err());
        assert!(mk(vec![Param::Nu, Param::Nu], vec![0.2, 0.3]).validate().is_err());
        assert!(mk(vec![Param::Hurst], vec![0.3]).validate().is_ok());
        let mut constant = truth.clone();
        constant.kernel = KernelSpec::Constant;
        let p = CalibrationProblem::new(constant, Targets::Skew(pts), vec![Param::Hurst], vec![0.3], 10, N);
        assert!(p.validate().is_err());
        assert_eq!(Param::parse("H"), Some(Param::Hurst));
        assert_eq!(Param::parse("sigma"), None);
    }
}
