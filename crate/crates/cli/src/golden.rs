//! Bundled Riccati-ODE smile for the classical Stein-Stein model, used by
//! `selftest`. Regenerate with `gaussvol selftest --regenerate-golden`.

use std::path::Path;

use gaussvol::charfn::{markovian_transform, MarkovianParams};
use gaussvol::kernels::{InputCurveSpec, KernelSpec, ModelConfig};
use gaussvol::pricing::{CosOptions, CosPricer, SmilePoint};
use num_complex::Complex64;

use crate::error::CliError;
use crate::table::{self, num, Table};

pub const GOLDEN: &str = include_str!("../golden/ode_smile.csv");
pub const DEFAULT_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/golden/ode_smile.csv");
pub const HEADER: [&str; 3] = ["maturity", "log_moneyness", "implied_vol"];

const MATURITIES: [f64; 2] = [0.05, 1.0];
/// Out-of-the-money prices below this are not resolved by the cosine series.
const RESOLVABLE_PRICE: f64 = 1e-12;
pub const TOLERANCE: f64 = 1e-2;

pub fn reference_model() -> ModelConfig {
    ModelConfig {
        s0: 1.0,
        kernel: KernelSpec::Constant,
        curve: InputCurveSpec::Affine { x0: 0.1, theta: 0.1 },
        kappa: 0.0,
        nu: 0.25,
        rho: -0.7,
        maturity: 1.0,
    }
}

fn cos_options() -> CosOptions {
    CosOptions {
        check_convergence: false,
        ..CosOptions::default()
    }
}

fn log_moneyness() -> Vec<f64> {
    (0..11).map(|i| -0.3 + 0.06 * i as f64).collect()
}

/// ODE-oracle smile on the reference grid, resolvable strikes only.
pub fn generate() -> Result<Vec<SmilePoint>, CliError> {
    let model = reference_model();
    let mut out = Vec::new();
    for t in MATURITIES {
        let params = MarkovianParams::from_model(&model.with_maturity(t))?;
        let zero = Complex64::new(0.0, 0.0);
        let oracle = CosPricer::from_charfn(
            model.s0,
            t,
            |z| markovian_transform(&params, Complex64::new(0.0, z), zero),
            &cos_options(),
        )?;
        for k in log_moneyness() {
            let strike = model.s0 * k.exp();
            let otm = if strike >= model.s0 { oracle.call(strike) } else { oracle.put(strike) };
            if otm >= RESOLVABLE_PRICE * model.s0 {
                out.push(SmilePoint {
                    k,
                    maturity: t,
                    iv: oracle.implied_vol(strike)?,
                });
            }
        }
    }
    Ok(out)
}

pub fn write(path: &Path) -> Result<usize, CliError> {
    let points = generate()?;
    let mut table = Table::create(Some(path), &HEADER)?;
    for p in &points {
        table.row([num(p.maturity), num(p.k), num(p.iv)])?;
    }
    table.finish()?;
    Ok(points.len())
}

pub fn load() -> Result<Vec<SmilePoint>, CliError> {
    let cols = table::parse_columns(GOLDEN.as_bytes(), &HEADER)
        .map_err(|e| CliError::Input(format!("bundled golden smile: {e}")))?;
    Ok((0..cols[0].len())
        .map(|i| SmilePoint {
            maturity: cols[0][i],
            k: cols[1][i],
            iv: cols[2][i],
        })
        .collect())
}

/// Largest absolute vol difference between the operator smile at grid size
/// `n` and the bundled oracle, with the number of points compared.
pub fn compare(n: usize) -> Result<(f64, usize), CliError> {
    let golden = load()?;
    if golden.is_empty() {
        return Err(CliError::Input("bundled golden smile is empty".into()));
    }
    let model = reference_model();
    let mut worst: f64 = 0.0;
    for t in MATURITIES {
        let points: Vec<&SmilePoint> = golden.iter().filter(|p| p.maturity == t).collect();
        if points.is_empty() {
            continue;
        }
        let pricer = CosPricer::from_model(&model, n, t, &cos_options())?;
        for p in points {
            let iv = pricer.implied_vol(model.s0 * p.k.exp())?;
            worst = worst.max((iv - p.iv).abs());
        }
    }
    Ok((worst, golden.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_file_matches_regeneration() {
        let fresh = generate().unwrap();
        let bundled = load().unwrap();
        assert_eq!(fresh.len(), bundled.len());
        for (a, b) in fresh.iter().zip(&bundled) {
            assert_eq!(num(a.maturity), num(b.maturity));
            assert_eq!(num(a.k), num(b.k));
            assert_eq!(num(a.iv), num(b.iv));
        }
    }
}
