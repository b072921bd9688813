//! End-to-end acceptance checks against the independent oracles, shared by
//! the acceptance test target and the command-line self test.

use std::fmt;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::calibration::{calibrate, synthetic_smile, CalibrationProblem, Param, Targets};
use crate::charfn::{
    joint_transform, markovian_transform, symmetric_operator_transform, symmetric_spectral_transform, CurveOptions,
    MarkovianParams, TransformEngine, TransformQuery,
};
use crate::error::Result;
use crate::kernels::{
    build_sigma0_matrix, rl_sigma0_diagonal, rl_sigma0_hypergeometric, DiscretizedModel, InputCurveSpec, KernelSpec,
    ModelConfig,
};
use crate::linalg::{cholesky_lower, RealMatrix};
use crate::montecarlo::{PathSimulator, SimulationPlan};
use crate::operators::{build_psi_matrix, phi_exponent_via_trace, OperatorCache, RiccatiCoefficients};
use crate::pricing::{
    bs_call_price, fit_power_law, implied_vol_otm, skew_from_pricer, CosOptions, CosPricer, SkewPoint,
    DEFAULT_SKEW_STEP,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub limit: Duration,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] #{} {}: {} ({:.1} s, limit {} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.limit.as_secs()
        )
    }
}

pub const CRITERIA: [(usize, &str, u64); 10] = [
    (1, "trivial transform anchors", 1),
    (2, "Black-Scholes degeneration", 5),
    (3, "Markovian agreement", 120),
    (4, "symmetric-kernel oracle", 30),
    (5, "rough Monte Carlo bracketing", 600),
    (6, "Riemann-Liouville covariance closed form", 1),
    (7, "determinant vs trace integral", 120),
    (8, "property suite", 60),
    (9, "calibration round trip", 1200),
    (10, "ATM skew regime", 300),
];

/// Runs the selected criteria (all when `select` is empty) in order.
pub fn run(select: &[usize]) -> Vec<CriterionReport> {
    let mut suite = Suite::default();
    CRITERIA
        .iter()
        .filter(|(id, ..)| select.is_empty() || select.contains(id))
        .map(|&(id, title, limit)| {
            let start = Instant::now();
            let outcome = suite.criterion(id);
            let elapsed = start.elapsed();
            let limit = Duration::from_secs(limit);
            let (passed, detail) = match outcome {
                Ok((ok, detail)) if elapsed <= limit => (ok, detail),
                Ok((_, detail)) => (false, format!("{detail}; runtime limit exceeded")),
                Err(e) => (false, format!("error: {e}")),
            };
            CriterionReport {
                id,
                title,
                passed,
                detail,
                elapsed,
                limit,
            }
        })
        .collect()
}

/// Largest determinant phase step seen on each COS grid.
#[derive(Default)]
struct Suite {
    phase_jumps: Vec<(String, f64)>,
}

type Outcome = Result<(bool, String)>;

fn benchmark_model(hurst: f64) -> ModelConfig {
    let (kernel, curve) = if hurst == 0.5 {
        (KernelSpec::Constant, InputCurveSpec::Affine { x0: 0.1, theta: 0.1 })
    } else {
        (
            KernelSpec::RiemannLiouville { h: hurst },
            InputCurveSpec::FractionalAffine { x0: 0.1, theta: 0.1 },
        )
    };
    ModelConfig {
        s0: 1.0,
        kernel,
        curve,
        kappa: 0.0,
        nu: 0.25,
        rho: -0.7,
        maturity: 1.0,
    }
}

/// Calibrated rough parameters used for the skew regime.
pub fn calibrated_rough() -> ModelConfig {
    ModelConfig {
        s0: 1.0,
        kernel: KernelSpec::RiemannLiouville { h: 0.2234273 },
        curve: InputCurveSpec::FractionalAffine { x0: 0.44, theta: 0.3 },
        kappa: 0.0,
        nu: 0.5231458,
        rho: -0.9436174,
        maturity: 1.0,
    }
}

fn fast_cos() -> CosOptions {
    CosOptions {
        check_convergence: false,
        ..CosOptions::default()
    }
}

/// Out-of-the-money prices below this level are not resolved by a cosine
/// series in double precision and are left out of smile comparisons.
const RESOLVABLE_PRICE: f64 = 1e-12;

impl Suite {
    fn criterion(&mut self, id: usize) -> Outcome {
        match id {
            1 => trivial_anchors(),
            2 => self.black_scholes(),
            3 => self.markovian(),
            4 => symmetric_oracle(),
            5 => self.monte_carlo(),
            6 => covariance_closed_form(),
            7 => determinant_vs_trace(),
            8 => self.properties(),
            9 => calibration_round_trip(),
            10 => self.skew_regime(),
            _ => unreachable!("unknown criterion"),
        }
    }

    fn pricer(&mut self, label: String, model: &ModelConfig, n: usize, maturity: f64) -> Result<CosPricer> {
        let p = CosPricer::from_model(model, n, maturity, &fast_cos())?;
        self.phase_jumps.push((label, p.diagnostics().max_phase_jump));
        Ok(p)
    }

    fn black_scholes(&mut self) -> Outcome {
        let model = ModelConfig {
            s0: 1.0,
            kernel: KernelSpec::Constant,
            curve: InputCurveSpec::Affine { x0: 0.2, theta: 0.0 },
            kappa: 0.0,
            nu: 0.0,
            rho: 0.0,
            maturity: 1.0,
        };
        let pricer = self.pricer("deterministic T=1".into(), &model, 16, 1.0)?;
        let worst = [0.8, 0.9, 1.0, 1.1, 1.2]
            .iter()
            .map(|&k| {
                let bs = bs_call_price(1.0, k, 1.0, 0.2);
                (pricer.call(k) - bs).abs() / bs
            })
            .fold(0.0, f64::max);
        Ok((worst < 1e-6, format!("max relative error {worst:.2e} (tol 1e-6)")))
    }

    fn markovian(&mut self) -> Outcome {
        let model = benchmark_model(0.5);
        let ks: Vec<f64> = (0..11).map(|i| -0.3 + 0.06 * i as f64).collect();
        let mut parts = Vec::new();
        let mut ok = true;
        for t in [0.05, 1.0] {
            let params = MarkovianParams::from_model(&model.with_maturity(t))?;
            let oracle = CosPricer::from_charfn(
                1.0,
                t,
                |z| markovian_transform(&params, Complex64::new(0.0, z), ZERO),
                &fast_cos(),
            )?;
            // compare only where the oracle's out-of-the-money price is resolvable
            let mut points = Vec::new();
            for &k in &ks {
                let strike = k.exp();
                let otm = if strike >= 1.0 { oracle.call(strike) } else { oracle.put(strike) };
                if otm >= RESOLVABLE_PRICE {
                    points.push((strike, oracle.implied_vol(strike)?));
                }
            }
            let mut errs = Vec::new();
            for n in [128, 512] {
                let pr = self.pricer(format!("H=0.5 T={t} n={n}"), &model, n, t)?;
                let mut worst: f64 = 0.0;
                for &(strike, iv) in &points {
                    worst = worst.max((pr.implied_vol(strike)? - iv).abs());
                }
                errs.push(worst);
            }
            let pass = points.len() * 2 >= ks.len() && errs[1] < 1e-2 && errs[1] < errs[0];
            ok &= pass;
            parts.push(format!(
                "T={t}: {}/{} strikes resolvable, max vol error n=128 {:.2e}, n=512 {:.2e}",
                points.len(),
                ks.len(),
                errs[0],
                errs[1]
            ));
        }
        Ok((ok, parts.join("; ")))
    }

    fn monte_carlo(&mut self) -> Outcome {
        let model = benchmark_model(0.2);
        let mut ok = true;
        let mut parts = Vec::new();
        let ladders: [(f64, [f64; 7]); 2] = [
            (0.05, [-0.09, -0.06, -0.03, 0.0, 0.03, 0.06, 0.09]),
            (1.0, [-0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3]),
        ];
        for (t, ks) in ladders {
            let strikes: Vec<f64> = ks.iter().map(|k| k.exp()).collect();
            let pricer = self.pricer(format!("H=0.2 T={t} n=512"), &model, 512, t)?;
            let plan = SimulationPlan {
                n_steps: 500,
                n_paths: 100_000,
                seed: 20_240_601 + (t * 1000.0) as u64,
                antithetic: true,
            };
            let sim = PathSimulator::new(&model.with_maturity(t), plan.n_steps)?;
            let est = sim.estimate(&plan, strikes.len(), |v, out| {
                let s = v.log_s.exp();
                for (o, &k) in out.iter_mut().zip(&strikes) {
                    *o = if k >= 1.0 { (s - k).max(0.0) } else { (k - s).max(0.0) };
                }
            })?;
            let mut inside = 0;
            let mut worst = String::new();
            let mut worst_gap = f64::NEG_INFINITY;
            for ((&k, &strike), e) in ks.iter().zip(&strikes).zip(&est) {
                let (lo, hi) = e.ci95();
                let to_vol = |p: f64| {
                    let (c, put) = if strike >= 1.0 { (p, 0.0) } else { (0.0, p) };
                    implied_vol_otm(c, put, 1.0, strike, t)
                };
                let vol_lo = to_vol(lo.max(1e-300)).unwrap_or(0.0);
                let vol_hi = to_vol(hi)?;
                let iv = pricer.implied_vol(strike)?;
                let gap = (vol_lo - iv).max(iv - vol_hi);
                if gap <= 0.0 {
                    inside += 1;
                }
                if gap > worst_gap {
                    worst_gap = gap;
                    worst = format!("k={k}: cos {iv:.5} in [{vol_lo:.5}, {vol_hi:.5}]");
                }
            }
            ok &= inside == ks.len();
            parts.push(format!("T={t}: {inside}/{} inside (tightest {worst})", ks.len()));
        }
        Ok((ok, parts.join("; ")))
    }

    fn properties(&mut self) -> Outcome {
        let mut failures = Vec::new();
        let rough = benchmark_model(0.2);

        let disc = DiscretizedModel::new(&rough, 64)?;
        let mut psi_asym: f64 = 0.0;
        for (u, w) in [(Complex64::new(0.0, 3.0), ZERO), (Complex64::new(0.3, -2.0), Complex64::new(-0.5, 1.0))] {
            let coeff = RiccatiCoefficients::new(u, w, rough.kappa, rough.nu, rough.rho);
            let psi = build_psi_matrix(&disc, &coeff)?;
            psi_asym = psi_asym.max(psi.transpose_asymmetry());
        }
        if psi_asym > 1e-10 {
            failures.push("Psi symmetry");
        }

        let engine = TransformEngine::new(&rough, 64)?;
        let grid: Vec<f64> = (0..60).map(|k| 0.8 * k as f64).collect();
        let mirrored: Vec<f64> = grid.iter().map(|z| -z).collect();
        let plus = engine.curve(&grid, ZERO, &CurveOptions::default())?;
        let minus = engine.curve(&mirrored, ZERO, &CurveOptions::default())?;
        let herm = plus
            .values
            .iter()
            .zip(&minus.values)
            .map(|(p, m)| (p - m.conj()).norm())
            .fold(0.0, f64::max);
        if herm > 1e-10 {
            failures.push("Hermitian symmetry");
        }
        let modulus = plus.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if modulus > 1.0 + 1e-8 {
            failures.push("modulus bound");
        }

        let mut psd_worst: f64 = 0.0;
        for kernel in [
            KernelSpec::Constant,
            KernelSpec::RiemannLiouville { h: 0.1 },
            KernelSpec::RiemannLiouville { h: 0.75 },
            KernelSpec::BrownianBridge { t1: 1.5 },
        ] {
            let sigma = build_sigma0_matrix(&kernel, 100, 1.0, 0.3)?;
            psd_worst = psd_worst.max(psd_defect(&sigma));
        }
        if psd_worst > 1e-8 {
            failures.push("covariance PSD");
        }

        // grids already priced by earlier criteria are in the log too
        for h in [0.5, 0.2] {
            for t in [0.05, 1.0] {
                self.pricer(format!("H={h} T={t} n=128"), &benchmark_model(h), 128, t)?;
            }
        }
        let (label, jump) = self
            .phase_jumps
            .iter()
            .cloned()
            .fold((String::new(), 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if jump >= std::f64::consts::PI {
            failures.push("phase jumps");
        }
        let detail = format!(
            "Psi asymmetry {psi_asym:.1e}, Hermitian gap {herm:.1e}, max |psi| {modulus:.12}, PSD defect {psd_worst:.1e}, \
             max phase step {jump:.3} on {} grids ({label})",
            self.phase_jumps.len()
        );
        if failures.is_empty() {
            Ok((true, detail))
        } else {
            Ok((false, format!("{detail}; failed: {}", failures.join(", "))))
        }
    }

    fn skew_regime(&mut self) -> Outcome {
        let model = calibrated_rough();
        let mut points = Vec::new();
        for t in [0.05, 0.1, 0.25, 0.5, 1.0] {
            let pricer = self.pricer(format!("calibrated T={t} n=512"), &model, 512, t)?;
            points.push(skew_from_pricer(&pricer, DEFAULT_SKEW_STEP)?);
        }
        let increasing = points.windows(2).all(|p| p[0].skew < p[1].skew) && points.iter().all(|p| p.skew < 0.0);
        let (c, p) = fit_power_law(&points)?;
        let in_band = (-0.55..=-0.25).contains(&p);
        let skews: Vec<String> = points.iter().map(|s: &SkewPoint| format!("{:.4}", s.skew)).collect();
        Ok((
            increasing && in_band,
            format!("skews [{}], fit {c:.3} T^{p:.3}", skews.join(", ")),
        ))
    }
}

/// Smallest `eps` (relative to the largest diagonal entry) such that
/// `sigma + eps I` admits a Cholesky factor, probed on a decade ladder.
fn psd_defect(sigma: &RealMatrix) -> f64 {
    let n = sigma.rows();
    let scale = (0..n).map(|i| sigma[(i, i)]).fold(0.0f64, f64::max);
    for e in [0.0, 1e-14, 1e-12, 1e-10, 1e-8, 1e-6] {
        let mut m = sigma.clone();
        for i in 0..n {
            m[(i, i)] += e * scale;
        }
        if cholesky_lower(&m).is_ok() {
            return e;
        }
    }
    f64::INFINITY
}

fn trivial_anchors() -> Outcome {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        let maturity = rng.gen_range(0.1..2.0);
        let kernel = match i % 4 {
            0 => KernelSpec::Constant,
            1 => KernelSpec::RiemannLiouville {
                h: rng.gen_range(0.05..0.95),
            },
            2 => KernelSpec::BrownianBridge {
                t1: maturity + rng.gen_range(0.1..2.0),
            },
            _ => KernelSpec::TabulatedConvolution {
                step: 0.25,
                values: (0..=12).map(|j| (-0.3 * j as f64).exp()).collect(),
            },
        };
        let curve = if matches!(kernel, KernelSpec::RiemannLiouville { .. }) {
            InputCurveSpec::FractionalAffine {
                x0: rng.gen_range(0.05..0.5),
                theta: rng.gen_range(-0.2..0.4),
            }
        } else {
            InputCurveSpec::Affine {
                x0: rng.gen_range(0.05..0.5),
                theta: rng.gen_range(-0.2..0.4),
            }
        };
        let model = ModelConfig {
            s0: rng.gen_range(0.5..2.0),
            kernel,
            curve,
            kappa: rng.gen_range(-1.0..1.0),
            nu: rng.gen_range(0.05..1.0),
            rho: rng.gen_range(-0.95..0.95),
            maturity,
        };
        let one = joint_transform(&model, 32, TransformQuery::new(ZERO, ZERO))?.value;
        let spot = joint_transform(&model, 32, TransformQuery::new(Complex64::new(1.0, 0.0), ZERO))?.value;
        worst = worst.max((one - 1.0).norm()).max((spot - model.s0).norm() / model.s0);
    }
    Ok((worst <= 1e-12, format!("max deviation {worst:.1e} over 5 random models (tol 1e-12)")))
}

/// Rank-3 cosine-basis kernel on `[0, 1]` with eigenvalues `LAMBDAS`.
const LAMBDAS: [f64; 3] = [0.4, 0.2, 0.1];
const COEFFS: [f64; 3] = [0.3, -0.2, 0.25];

fn symmetric_oracle() -> Outcome {
    let (nu, rho) = (0.8, -0.6);
    let n = 400;
    let dt = 1.0 / n as f64;
    let t: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * dt).collect();
    let e = |k: usize, x: f64| 2f64.sqrt() * ((k + 1) as f64 * std::f64::consts::PI * x).cos();
    let k_op = RealMatrix::from_fn(n, n, |i, j| {
        dt * (0..3).map(|k| LAMBDAS[k].sqrt() * e(k, t[i]) * e(k, t[j])).sum::<f64>()
    });
    let g: Vec<f64> = t.iter().map(|&x| (0..3).map(|k| COEFFS[k] * e(k, x)).sum()).collect();
    let queries = [
        (0.0, 0.0, 0.0),
        (1.0, 0.0, 0.0),
        (-2.5, -0.3, 0.0),
        (4.0, -1.0, 2.0),
        (0.0, -2.0, -1.0),
        (0.3, 0.0, 3.0),
        (-7.0, -0.1, 0.0),
        (2.0, -4.0, -3.0),
        (10.0, 0.0, 0.0),
        (-0.5, -0.8, 0.7),
    ];
    let mut worst: f64 = 0.0;
    for (z, wr, wi) in queries {
        let (u, w) = (Complex64::new(0.0, z), Complex64::new(wr, wi));
        let spectral = symmetric_spectral_transform(&LAMBDAS, &COEFFS, nu, rho, u, w)?;
        let op = symmetric_operator_transform(&k_op, &g, dt, nu, rho, u, w)?;
        worst = worst.max((spectral - op).norm() / spectral.norm());
    }
    Ok((worst <= 1e-8, format!("max relative gap {worst:.1e} over 10 (u, w) (tol 1e-8)")))
}

fn covariance_closed_form() -> Outcome {
    let mut worst: f64 = 0.0;
    for h in [0.1, 0.25, 0.5, 0.75] {
        for s in [0.1, 0.5, 1.0] {
            let closed = rl_sigma0_diagonal(h, 1.0, s)?;
            let series = rl_sigma0_hypergeometric(h, 1.0, s, s)?;
            worst = worst.max((closed - series).abs() / closed);
        }
    }
    Ok((worst <= 1e-10, format!("max relative gap {worst:.1e} (tol 1e-10)")))
}

fn determinant_vs_trace() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for h in [0.2, 0.5] {
        let model = if h == 0.5 {
            ModelConfig {
                kernel: KernelSpec::RiemannLiouville { h: 0.5 },
                curve: InputCurveSpec::FractionalAffine { x0: 0.1, theta: 0.1 },
                ..benchmark_model(0.5)
            }
        } else {
            benchmark_model(h)
        };
        let n = 200;
        let coeff = RiccatiCoefficients::new(ZERO, Complex64::new(-1.0, 0.0), model.kappa, model.nu, model.rho);
        let cache = OperatorCache::new(&DiscretizedModel::new(&model, n)?)?;
        let det_side = -0.5 * cache.log_value(&coeff)?.1;
        let trace_side = phi_exponent_via_trace(&model, n, 100, &coeff)?;
        let rel = (det_side - trace_side).norm() / det_side.norm();
        ok &= rel <= 1e-2;
        parts.push(format!("H={h}: {:.6e} vs {:.6e} (rel {rel:.1e})", det_side.re, trace_side.re));
    }
    Ok((ok, parts.join("; ")))
}

fn calibration_round_trip() -> Outcome {
    let truth = benchmark_model(0.3);
    let n = 64;
    let ks = [-0.15, -0.1, -0.05, 0.0, 0.05, 0.1, 0.15];
    let targets = synthetic_smile(&truth, n, &[0.25, 1.0], &ks)?;
    let problem = CalibrationProblem::new(
        truth,
        Targets::Smile(targets),
        vec![Param::Nu, Param::Rho, Param::Hurst],
        vec![0.4, -0.3, 0.45],
        500,
        n,
    );
    let res = calibrate(&problem)?;
    let (nu, rho, h) = (res.params[0], res.params[1], res.params[2]);
    let ok = (nu - 0.25).abs() / 0.25 <= 0.05 && (rho + 0.7).abs() <= 0.05 && (h - 0.3).abs() <= 0.03;
    Ok((
        ok,
        format!(
            "recovered nu={nu:.5}, rho={rho:.5}, H={h:.5} with RMSE {:.1e} after {} evaluations",
            res.objective, res.evaluations
        ),
    ))
}
