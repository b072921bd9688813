//! European call pricing by cosine expansion of the transform, Black-Scholes
//! utilities, implied-volatility smiles and ATM skew term structures.
//!
//! Rates and dividends are zero; strikes and prices are in spot units.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::charfn::{CurveOptions, TransformEngine};
use crate::error::{Error, Result};
use crate::kernels::ModelConfig;
use crate::specfun::norm_cdf;

pub const IV_MIN: f64 = 1e-4;
pub const IV_MAX: f64 = 5.0;
pub const DEFAULT_SKEW_STEP: f64 = 5e-3;
/// Finite-difference step for the cumulants of the log-price.
const CUMULANT_STEP: f64 = 1e-4;
/// Tail modulus above which the truncated series is flagged.
const TAIL_REPORT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmilePoint {
    /// Log-moneyness `ln(K / S0)`.
    pub k: f64,
    pub maturity: f64,
    pub iv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewPoint {
    pub maturity: f64,
    pub skew: f64,
}

/// Undiscounted Black-Scholes call.
pub fn bs_call_price(s0: f64, strike: f64, maturity: f64, sigma: f64) -> f64 {
    let intrinsic = (s0 - strike).max(0.0);
    let sd = sigma * maturity.sqrt();
    if !(sd > 0.0) || strike <= 0.0 {
        return if strike <= 0.0 { s0 } else { intrinsic };
    }
    let d1 = (s0 / strike).ln() / sd + 0.5 * sd;
    let d2 = d1 - sd;
    s0 * norm_cdf(d1) - strike * norm_cdf(d2)
}

/// Black-Scholes vega, used only for diagnostics and tolerances.
pub fn bs_vega(s0: f64, strike: f64, maturity: f64, sigma: f64) -> f64 {
    let sd = sigma * maturity.sqrt();
    let d1 = (s0 / strike).ln() / sd + 0.5 * sd;
    s0 * maturity.sqrt() * (-0.5 * d1 * d1).exp() / (2.0 * PI).sqrt()
}

/// Undiscounted Black-Scholes put, evaluated directly so deep
/// out-of-the-money values keep their relative accuracy.
pub fn bs_put_price(s0: f64, strike: f64, maturity: f64, sigma: f64) -> f64 {
    let intrinsic = (strike - s0).max(0.0);
    let sd = sigma * maturity.sqrt();
    if !(sd > 0.0) || strike <= 0.0 {
        return intrinsic;
    }
    let d1 = (s0 / strike).ln() / sd + 0.5 * sd;
    let d2 = d1 - sd;
    strike * norm_cdf(-d2) - s0 * norm_cdf(-d1)
}

fn check_iv_inputs(s0: f64, strike: f64, maturity: f64) -> Result<()> {
    if !(s0 > 0.0 && strike > 0.0 && maturity > 0.0) {
        return Err(Error::Domain(format!(
            "implied vol needs positive s0, strike, maturity; got ({s0}, {strike}, {maturity})"
        )));
    }
    Ok(())
}

/// Bisection of an increasing price function on `[IV_MIN, IV_MAX]`.
fn invert(price: f64, tol: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let (p_lo, p_hi) = (f(IV_MIN), f(IV_MAX));
    if price < p_lo || price > p_hi {
        return Err(Error::Bounds {
            price,
            lower: p_lo,
            upper: p_hi,
        });
    }
    let (mut lo, mut hi) = (IV_MIN, IV_MAX);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let p = f(mid);
        if (p - price).abs() <= tol {
            return Ok(mid);
        }
        if p < price {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Implied volatility of a call by bisection on `[IV_MIN, IV_MAX]`.
pub fn implied_vol(price: f64, s0: f64, strike: f64, maturity: f64) -> Result<f64> {
    check_iv_inputs(s0, strike, maturity)?;
    let lower = (s0 - strike).max(0.0);
    if !(price > lower && price < s0) {
        return Err(Error::Bounds {
            price,
            lower,
            upper: s0,
        });
    }
    invert(price, 1e-12 * s0, |v| bs_call_price(s0, strike, maturity, v))
}

/// Implied volatility of a put; the tolerance is relative to the price so
/// far out-of-the-money quotes are still resolved.
pub fn implied_vol_put(price: f64, s0: f64, strike: f64, maturity: f64) -> Result<f64> {
    check_iv_inputs(s0, strike, maturity)?;
    let lower = (strike - s0).max(0.0);
    if !(price > lower && price < strike) {
        return Err(Error::Bounds {
            price,
            lower,
            upper: strike,
        });
    }
    invert(price, (1e-12 * s0).min(1e-10 * price), |v| bs_put_price(s0, strike, maturity, v))
}

/// Implied volatility from the out-of-the-money option: the call for
/// `K >= S0`, the put below.
pub fn implied_vol_otm(call: f64, put: f64, s0: f64, strike: f64, maturity: f64) -> Result<f64> {
    if strike >= s0 {
        check_iv_inputs(s0, strike, maturity)?;
        if !(call > 0.0 && call < s0) {
            return Err(Error::Bounds {
                price: call,
                lower: 0.0,
                upper: s0,
            });
        }
        invert(call, (1e-12 * s0).min(1e-10 * call), |v| bs_call_price(s0, strike, maturity, v))
    } else {
        implied_vol_put(put, s0, strike, maturity)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CosOptions {
    pub n_terms: usize,
    /// Truncation half-width in standard deviations.
    pub width: f64,
    /// Also evaluate `2 n_terms` terms so the doubling gap can be reported.
    pub check_convergence: bool,
    /// Transform values are dropped once three consecutive moduli fall
    /// below this level.
    pub tail_cutoff: f64,
    /// Bisection depth for carrying the determinant phase across a step.
    pub refine_depth: usize,
}

impl Default for CosOptions {
    fn default() -> Self {
        Self {
            n_terms: 256,
            width: 12.0,
            check_convergence: true,
            tail_cutoff: 1e-12,
            refine_depth: 8,
        }
    }
}

impl CosOptions {
    fn check(&self) -> Result<()> {
        if self.n_terms < 16 {
            return Err(Error::Config(format!("COS needs at least 16 terms, got {}", self.n_terms)));
        }
        if !(self.width >= 6.0) {
            return Err(Error::Config(format!("COS truncation width must be >= 6, got {}", self.width)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosDiagnostics {
    /// Mean and variance of `ln(S_T / S0)`.
    pub cumulants: (f64, f64),
    pub interval: (f64, f64),
    /// Transform values actually computed (the rest were below the cutoff).
    pub evaluated: usize,
    /// Modulus of the last computed transform value.
    pub tail_modulus: f64,
    pub max_phase_jump: f64,
    pub refinements: usize,
}

/// Cosine-series pricer for one maturity; strikes are post-processing.
#[derive(Debug, Clone)]
pub struct CosPricer {
    s0: f64,
    maturity: f64,
    n_terms: usize,
    a: f64,
    b: f64,
    /// `Re(psi(u_j) exp(-i u_j a))`, zero beyond the evaluated prefix.
    coeffs: Vec<f64>,
    diagnostics: CosDiagnostics,
}

fn truncation(c1: f64, c2: f64, width: f64) -> Result<(f64, f64)> {
    if !(c2 > 0.0 && c1.is_finite() && c2.is_finite()) {
        return Err(Error::Domain(format!("log-price cumulants ({c1}, {c2}) are unusable")));
    }
    let half = width * c2.sqrt();
    Ok((c1 - half, c1 + half))
}

/// Cumulants from the log-transform `l(h) = ln E[exp(i h X)]` at a small `h`.
fn cumulants_from_log(l: Complex64, h: f64) -> (f64, f64) {
    (l.im / h, -2.0 * l.re / (h * h))
}

impl CosPricer {
    /// Pricer driven by the operator transform of `model` at `maturity`.
    pub fn from_model(model: &ModelConfig, n: usize, maturity: f64, opts: &CosOptions) -> Result<Self> {
        opts.check()?;
        let model = model.with_maturity(maturity);
        let engine = TransformEngine::new(&model, n)?;
        let (quad, logdet) = engine.raw(Complex64::new(0.0, CUMULANT_STEP), Complex64::new(0.0, 0.0))?;
        let (c1, c2) = cumulants_from_log(quad - 0.5 * logdet, CUMULANT_STEP);
        let (a, b) = truncation(c1, c2, opts.width)?;
        let total = if opts.check_convergence { 2 * opts.n_terms } else { opts.n_terms };
        let grid: Vec<f64> = (0..total).map(|j| j as f64 * PI / (b - a)).collect();
        let curve = engine.curve(
            &grid,
            Complex64::new(0.0, 0.0),
            &CurveOptions {
                refine_depth: opts.refine_depth,
                tail_cutoff: Some(opts.tail_cutoff),
                ..CurveOptions::default()
            },
        )?;
        let ln_s0 = model.s0.ln();
        let values: Vec<Complex64> = curve
            .values
            .iter()
            .zip(&grid)
            .map(|(v, &z)| v * Complex64::new(0.0, -z * ln_s0).exp())
            .collect();
        let mut pricer = Self::assemble(model.s0, maturity, opts, (c1, c2), (a, b), &values, total);
        pricer.diagnostics.max_phase_jump = curve.max_jump;
        pricer.diagnostics.refinements = curve.refinements;
        Ok(pricer)
    }

    /// Pricer driven by an arbitrary characteristic function
    /// `z -> E[exp(i z ln(S_T / S0))]`.
    pub fn from_charfn<F>(s0: f64, maturity: f64, charfn: F, opts: &CosOptions) -> Result<Self>
    where
        F: Fn(f64) -> Result<Complex64>,
    {
        opts.check()?;
        let (c1, c2) = cumulants_from_log(charfn(CUMULANT_STEP)?.ln(), CUMULANT_STEP);
        let (a, b) = truncation(c1, c2, opts.width)?;
        let total = if opts.check_convergence { 2 * opts.n_terms } else { opts.n_terms };
        let mut values = Vec::with_capacity(total);
        let mut quiet = 0;
        for j in 0..total {
            let v = charfn(j as f64 * PI / (b - a))?;
            values.push(v);
            if v.norm() < opts.tail_cutoff {
                quiet += 1;
                if quiet >= 3 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        Ok(Self::assemble(s0, maturity, opts, (c1, c2), (a, b), &values, total))
    }

    fn assemble(
        s0: f64,
        maturity: f64,
        opts: &CosOptions,
        cumulants: (f64, f64),
        (a, b): (f64, f64),
        values: &[Complex64],
        total: usize,
    ) -> Self {
        let mut coeffs = vec![0.0; total];
        for (j, v) in values.iter().enumerate() {
            let u = j as f64 * PI / (b - a);
            coeffs[j] = (v * Complex64::new(0.0, -u * a).exp()).re;
        }
        let tail_modulus = values.last().map_or(0.0, |v| v.norm());
        if tail_modulus > TAIL_REPORT {
            log::debug!("COS series truncated with transform modulus {tail_modulus:e} at the last frequency");
        }
        Self {
            s0,
            maturity,
            n_terms: opts.n_terms,
            a,
            b,
            coeffs,
            diagnostics: CosDiagnostics {
                cumulants,
                interval: (a, b),
                evaluated: values.len(),
                tail_modulus,
                max_phase_jump: 0.0,
                refinements: 0,
            },
        }
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn diagnostics(&self) -> &CosDiagnostics {
        &self.diagnostics
    }

    fn call_with_terms(&self, strike: f64, terms: usize) -> f64 {
        let (a, b) = (self.a, self.b);
        let k = (strike / self.s0).ln();
        if k >= b {
            return 0.0;
        }
        let c = k.max(a);
        let (ec, eb, ek) = (c.exp(), b.exp(), k.exp());
        let mut sum = 0.0;
        for (j, &f) in self.coeffs.iter().take(terms).enumerate() {
            if f == 0.0 {
                continue;
            }
            let u = j as f64 * PI / (b - a);
            let (sb, cb) = (u * (b - a)).sin_cos();
            let (sc, cc) = (u * (c - a)).sin_cos();
            let chi = (cb * eb - cc * ec + u * (sb * eb - sc * ec)) / (1.0 + u * u);
            let psi = if j == 0 { b - c } else { (sb - sc) / u };
            let v = 2.0 / (b - a) * (chi - ek * psi);
            sum += if j == 0 { 0.5 * f * v } else { f * v };
        }
        self.s0 * sum
    }

    fn put_with_terms(&self, strike: f64, terms: usize) -> f64 {
        let (a, b) = (self.a, self.b);
        let k = (strike / self.s0).ln();
        if k <= a {
            return 0.0;
        }
        let d = k.min(b);
        let (ea, ed, ek) = (a.exp(), d.exp(), k.exp());
        let mut sum = 0.0;
        for (j, &f) in self.coeffs.iter().take(terms).enumerate() {
            if f == 0.0 {
                continue;
            }
            let u = j as f64 * PI / (b - a);
            let (sd, cd) = (u * (d - a)).sin_cos();
            let chi = (cd * ed - ea + u * sd * ed) / (1.0 + u * u);
            let psi = if j == 0 { d - a } else { sd / u };
            let v = 2.0 / (b - a) * (ek * psi - chi);
            sum += if j == 0 { 0.5 * f * v } else { f * v };
        }
        self.s0 * sum
    }

    /// Put price with the configured number of terms.
    pub fn put(&self, strike: f64) -> f64 {
        self.put_with_terms(strike, self.n_terms)
    }

    /// Call price with the configured number of terms.
    pub fn call(&self, strike: f64) -> f64 {
        self.call_with_terms(strike, self.n_terms)
    }

    /// `|price(2N) - price(N)|`, when the doubled series was evaluated.
    pub fn doubling_gap(&self, strike: f64) -> Option<f64> {
        (self.coeffs.len() >= 2 * self.n_terms)
            .then(|| (self.call_with_terms(strike, 2 * self.n_terms) - self.call(strike)).abs())
    }

    /// `E[S_T]` reconstructed from the series: a call struck below the
    /// truncation interval plus its strike.
    pub fn forward(&self) -> f64 {
        let strike = self.s0 * (self.a - 1.0).exp();
        self.call_with_terms(strike, self.n_terms) + strike
    }

    /// Implied volatility from the out-of-the-money option at `strike`.
    pub fn implied_vol(&self, strike: f64) -> Result<f64> {
        if strike >= self.s0 {
            implied_vol_otm(self.call(strike), 0.0, self.s0, strike, self.maturity)
        } else {
            implied_vol_put(self.put(strike), self.s0, strike, self.maturity)
        }
    }
}

pub fn cos_call_price(
    model: &ModelConfig,
    n: usize,
    n_cos: usize,
    width: f64,
    strike: f64,
    maturity: f64,
) -> Result<f64> {
    let opts = CosOptions {
        n_terms: n_cos,
        width,
        ..CosOptions::default()
    };
    let pricer = CosPricer::from_model(model, n, maturity, &opts)?;
    if let Some(gap) = pricer.doubling_gap(strike) {
        log::debug!("COS doubling gap {gap:e} at strike {strike}");
    }
    Ok(pricer.call(strike))
}

/// Implied volatilities at one maturity; points whose price cannot be
/// inverted are reported in `failures`.
#[derive(Debug, Default)]
pub struct Smile {
    pub points: Vec<SmilePoint>,
    pub failures: Vec<(f64, Error)>,
}

pub fn smile_from_pricer(pricer: &CosPricer, strikes: &[f64]) -> Result<Smile> {
    let mut out = Smile::default();
    for &strike in strikes {
        if !(strike > 0.0) {
            return Err(Error::Domain(format!("strike must be positive, got {strike}")));
        }
        match pricer.implied_vol(strike) {
            Ok(iv) => out.points.push(SmilePoint {
                k: (strike / pricer.s0).ln(),
                maturity: pricer.maturity,
                iv,
            }),
            Err(e) => out.failures.push((strike, e)),
        }
    }
    Ok(out)
}

pub fn smile(model: &ModelConfig, n: usize, strikes: &[f64], maturity: f64) -> Result<Smile> {
    if let Some(&bad) = strikes.iter().find(|&&k| !(k > 0.0)) {
        return Err(Error::Domain(format!("strike must be positive, got {bad}")));
    }
    let pricer = CosPricer::from_model(model, n, maturity, &CosOptions::default())?;
    smile_from_pricer(&pricer, strikes)
}

pub fn skew_from_pricer(pricer: &CosPricer, h: f64) -> Result<SkewPoint> {
    if !(h > 1e-4 && h <= 0.05) {
        return Err(Error::Domain(format!("skew step must lie in (1e-4, 0.05], got {h}")));
    }
    let up = pricer.implied_vol(pricer.s0 * h.exp())?;
    let down = pricer.implied_vol(pricer.s0 * (-h).exp())?;
    Ok(SkewPoint {
        maturity: pricer.maturity,
        skew: (up - down) / (2.0 * h),
    })
}

/// Central-difference ATM skew `d iv / dk` at `k = 0`.
pub fn atm_skew(model: &ModelConfig, n: usize, maturity: f64, h: f64) -> Result<SkewPoint> {
    let opts = CosOptions {
        check_convergence: false,
        ..CosOptions::default()
    };
    skew_from_pricer(&CosPricer::from_model(model, n, maturity, &opts)?, h)
}

/// Least-squares fit of `|skew| ~ c T^p` on log-log axes.
pub fn fit_power_law(points: &[SkewPoint]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(Error::Domain(format!("power-law fit needs 3 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|p| !(p.maturity > 0.0) || !(p.skew.abs() > 0.0) || !p.skew.is_finite()) {
        return Err(Error::Domain(format!(
            "power-law fit needs positive maturities and nonzero skews, got ({}, {})",
            p.maturity, p.skew
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.maturity.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.skew.abs().ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 1e-24 * m) {
        return Err(Error::DegenerateFit("maturities are not distinct".into()));
    }
    let p = sxy / sxx;
    Ok(((my - p * mx).exp(), p))
}
