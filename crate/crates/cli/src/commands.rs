use std::path::Path;

use clap::ValueEnum;
use gaussvol::calibration::{calibrate as fit, CalibrationProblem, Param, Targets};
use gaussvol::charfn::{CurveOptions, TransformEngine, TransformQuery};
use gaussvol::kernels::ModelConfig;
use gaussvol::montecarlo::{mc_call_prices, simulate_paths, SimulationPlan};
use gaussvol::operators::{phi_exponent_via_trace, RiccatiCoefficients};
use gaussvol::pricing::{fit_power_law, skew_from_pricer, smile_from_pricer, CosPricer, SkewPoint, SmilePoint};
use gaussvol::validation;
use num_complex::Complex64;

use crate::config::{PriceSection, RunConfig};
use crate::error::CliError;
use crate::golden;
use crate::table::{self, num, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Transform,
    Price,
    Smile,
    Skew,
    Simulate,
    Calibrate,
    Selftest,
}

pub fn run(command: Command, cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    match command {
        Command::Transform => transform(cfg, out),
        Command::Price => price(cfg, out),
        Command::Smile => smile(cfg, out),
        Command::Skew => skew(cfg, out),
        Command::Simulate => simulate(cfg, out),
        Command::Calibrate => calibrate(cfg, out),
        Command::Selftest => selftest(cfg, out),
    }
}

fn missing(section: &str) -> CliError {
    CliError::Config(vec![format!("missing [{section}] section")])
}

fn transform(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let model = cfg.model()?;
    let section = cfg.transform.as_ref().ok_or_else(|| missing("transform"))?;
    let n = cfg.numerics.n;
    let w = Complex64::new(section.w[0], section.w[1]);
    let z = &section.z;
    let engine = TransformEngine::new(model, n)?;
    let increasing = z.windows(2).all(|p| p[1] > p[0]);
    let decreasing = z.windows(2).all(|p| p[1] < p[0]);
    let values: Vec<Complex64> = if z[0] == 0.0 && (increasing || decreasing) {
        engine.curve(z, w, &CurveOptions::default())?.values
    } else {
        // no common anchor: continue each point along its own ray
        z.iter()
            .map(|&zi| engine.evaluate(TransformQuery::new(Complex64::new(0.0, zi), w)).map(|v| v.value))
            .collect::<Result<_, _>>()?
    };

    let mut header = vec!["z", "re", "im"];
    if cfg.numerics.trace_nodes.is_some() {
        header.extend(["phi_det_re", "phi_det_im", "phi_trace_re", "phi_trace_im"]);
    }
    let mut table = Table::create(out, &header)?;
    for (&zi, v) in z.iter().zip(&values) {
        let mut row = vec![num(zi), num(v.re), num(v.im)];
        if let Some(m) = cfg.numerics.trace_nodes {
            let u = Complex64::new(0.0, zi);
            let coeff = RiccatiCoefficients::new(u, w, model.kappa, model.nu, model.rho);
            // principal branch of the determinant path
            let det = -0.5 * engine.raw(u, w)?.1;
            let trace = phi_exponent_via_trace(model, n, m, &coeff)?;
            row.extend([num(det.re), num(det.im), num(trace.re), num(trace.im)]);
        }
        table.row(row)?;
    }
    table.finish()
}

fn price(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let model = cfg.model()?;
    let section = cfg.price.clone().unwrap_or(PriceSection::default());
    let strikes = section.strikes.unwrap_or_else(|| vec![model.s0]);
    let t = model.maturity;
    let pricer = CosPricer::from_model(model, cfg.numerics.n, t, &cfg.numerics.cos())?;
    let d = pricer.diagnostics().clone();
    let mc = if section.monte_carlo {
        Some(mc_call_prices(model, &cfg.mc, &strikes, t)?)
    } else {
        None
    };

    let mut header = vec!["strike", "maturity", "call", "put", "implied_vol", "doubling_gap"];
    if mc.is_some() {
        header.extend(["mc_call", "mc_stderr"]);
    }
    header.extend([
        "cumulant_1",
        "cumulant_2",
        "interval_lo",
        "interval_hi",
        "terms_evaluated",
        "tail_modulus",
        "max_phase_jump",
        "refinements",
    ]);
    let mut table = Table::create(out, &header)?;
    for (i, &strike) in strikes.iter().enumerate() {
        let iv = match pricer.implied_vol(strike) {
            Ok(v) => num(v),
            Err(e) => {
                log::warn!("strike {strike}: no implied vol: {e}");
                String::new()
            }
        };
        let mut row = vec![
            num(strike),
            num(t),
            num(pricer.call(strike)),
            num(pricer.put(strike)),
            iv,
            pricer.doubling_gap(strike).map(num).unwrap_or_default(),
        ];
        if let Some(est) = &mc {
            row.extend([num(est[i].mean), num(est[i].stderr)]);
        }
        row.extend([
            num(d.cumulants.0),
            num(d.cumulants.1),
            num(d.interval.0),
            num(d.interval.1),
            d.evaluated.to_string(),
            num(d.tail_modulus),
            num(d.max_phase_jump),
            d.refinements.to_string(),
        ]);
        table.row(row)?;
    }
    table.finish()
}

fn smile(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let model = cfg.model()?;
    let section = cfg.smile.as_ref().ok_or_else(|| missing("smile"))?;
    let maturities = section.maturities.clone().unwrap_or_else(|| vec![model.maturity]);
    let strikes: Vec<f64> = section.log_moneyness.iter().map(|k| model.s0 * k.exp()).collect();
    let mut table = Table::create(out, &golden::HEADER)?;
    for t in maturities {
        let pricer = CosPricer::from_model(model, cfg.numerics.n, t, &cfg.numerics.cos())?;
        let smile = smile_from_pricer(&pricer, &strikes)?;
        for (strike, e) in &smile.failures {
            log::warn!("T={t} strike {strike}: no implied vol: {e}");
        }
        for p in &smile.points {
            table.row([num(p.maturity), num(p.k), num(p.iv)])?;
        }
    }
    table.finish()
}

fn skew(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let model = cfg.model()?;
    let section = cfg.skew.as_ref().ok_or_else(|| missing("skew"))?;
    let mut points = Vec::new();
    let mut table = Table::create(out, &["maturity", "skew"])?;
    for &t in &section.maturities {
        let pricer = CosPricer::from_model(model, cfg.numerics.n, t, &cfg.numerics.cos())?;
        let p = skew_from_pricer(&pricer, cfg.numerics.skew_step)?;
        table.row([num(p.maturity), num(p.skew)])?;
        points.push(p);
    }
    table.finish()?;
    if points.len() >= 3 {
        match fit_power_law(&points) {
            Ok((c, p)) => eprintln!("power-law fit: |skew| = {c:.6} * T^{p:.6}"),
            Err(e) => log::warn!("power-law fit: {e}"),
        }
    }
    Ok(())
}

fn simulate(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let model = cfg.model()?;
    let wanted = cfg.simulate.clone().unwrap_or_default().paths;
    // the plan needs at least two paths, and an even count when antithetic
    let plan = SimulationPlan {
        n_paths: (wanted.max(2) + 1) & !1,
        ..cfg.mc
    };
    let paths = simulate_paths(model, &plan)?;
    let n = plan.n_steps;
    let dt = model.maturity / n as f64;
    let mut table = Table::create(out, &["path", "t", "X", "X2", "S"])?;
    for (j, p) in paths.iter().take(wanted).enumerate() {
        for r in 0..n {
            let x = p.x[r];
            table.row([
                j.to_string(),
                num(r as f64 * dt),
                num(x),
                num(x * x),
                num(p.log_s_path[r].exp()),
            ])?;
        }
    }
    table.finish()
}

fn read_targets(path: &Path) -> Result<Targets, CliError> {
    let headers = table::read_headers(path)?;
    let has = |name: &str| headers.iter().any(|h| h == name);
    if has("implied_vol") {
        let cols = table::read_columns(path, &golden::HEADER)?;
        Ok(Targets::Smile(
            (0..cols[0].len())
                .map(|i| SmilePoint {
                    maturity: cols[0][i],
                    k: cols[1][i],
                    iv: cols[2][i],
                })
                .collect(),
        ))
    } else if has("skew") {
        let cols = table::read_columns(path, &["maturity", "skew"])?;
        Ok(Targets::Skew(
            cols[0]
                .iter()
                .zip(&cols[1])
                .map(|(&maturity, &skew)| SkewPoint { maturity, skew })
                .collect(),
        ))
    } else {
        Err(CliError::Input(format!(
            "{}: expected columns maturity,log_moneyness,implied_vol or maturity,skew",
            path.display()
        )))
    }
}

fn initial_values(model: &ModelConfig, free: &[Param]) -> Result<Vec<f64>, CliError> {
    free.iter()
        .map(|p| {
            p.get(model)
                .ok_or_else(|| CliError::Config(vec![format!("calibrate.free: {p} is not a parameter of this model")]))
        })
        .collect()
}

fn calibrate(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let model = cfg.model()?;
    let section = cfg.calibrate.as_ref().ok_or_else(|| missing("calibrate"))?;
    let targets = read_targets(&section.targets_path)?;
    let free = cfg.calibration_free.clone();
    let init = match &section.init {
        Some(v) => v.clone(),
        None => initial_values(model, &free)?,
    };
    let mut problem = CalibrationProblem::new(model.clone(), targets, free.clone(), init, section.budget, cfg.numerics.n);
    problem.cos = gaussvol::pricing::CosOptions {
        check_convergence: false,
        ..cfg.numerics.cos()
    };
    problem.skew_step = cfg.numerics.skew_step;
    problem.validate()?;
    let result = fit(&problem)?;
    if result.budget_exhausted {
        log::warn!("evaluation budget of {} exhausted", section.budget);
    }

    let mut table = Table::create(out, &["name", "value"])?;
    for (p, v) in free.iter().zip(&result.params) {
        table.row([p.name().to_string(), num(*v)])?;
    }
    table.row(["objective".to_string(), num(result.objective)])?;
    table.row(["evaluations".to_string(), result.evaluations.to_string()])?;
    table.row(["budget_exhausted".to_string(), u8::from(result.budget_exhausted).to_string()])?;
    table.finish()?;

    if let Some(path) = &section.trace_path {
        let mut header = vec!["evaluation", "objective"];
        header.extend(free.iter().map(|p| p.name()));
        let mut trace = Table::create(Some(path), &header)?;
        for e in &result.trace {
            let mut row = vec![e.evaluation.to_string(), num(e.objective)];
            row.extend(e.params.iter().map(|&v| num(v)));
            trace.row(row)?;
        }
        trace.finish()?;
    }
    Ok(())
}

fn selftest(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let section = cfg.selftest.clone().unwrap_or_default();
    let mut rows: Vec<(String, String, bool, String)> = Vec::new();
    if section.golden {
        let n = cfg.numerics.n;
        let (passed, detail) = match golden::compare(n) {
            Ok((diff, count)) => (
                diff < golden::TOLERANCE,
                format!("max abs vol diff {diff:.3e} over {count} points at n={n}"),
            ),
            Err(e) => (false, format!("error: {e}")),
        };
        println!("[{}] golden ODE smile: {detail}", if passed { "PASS" } else { "FAIL" });
        rows.push(("golden".into(), "golden ODE smile".into(), passed, detail));
    }
    for report in validation::run(&section.criteria) {
        println!("{report}");
        rows.push((
            report.id.to_string(),
            report.title.to_string(),
            report.passed,
            format!("{} ({:.1} s)", report.detail, report.elapsed.as_secs_f64()),
        ));
    }
    if let Some(path) = out {
        let mut table = Table::create(Some(path), &["id", "title", "passed", "detail"])?;
        for (id, title, passed, detail) in &rows {
            table.row([id.as_str(), title.as_str(), if *passed { "true" } else { "false" }, detail.as_str()])?;
        }
        table.finish()?;
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.2).map(|r| r.0.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Acceptance(format!("failed: {}", failed.join(", "))))
    }
}
