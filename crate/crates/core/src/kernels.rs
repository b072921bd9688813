//! Volterra kernels, the input curve `g0` and the discretized matrices
//! `K^n`, `Sigma^n` and vector `g_n` on the uniform grid `t_i = i T / n`.
//!
//! Matrix indices are 0-based: row `r` corresponds to the grid time
//! `t_r = r T / n` (the left end of cell `r`).

use crate::error::{Error, Result};
use crate::linalg::RealMatrix;
use crate::specfun::{gamma_fn, hyp2f1_special};

/// Ratio `s / u` above which the Riemann-Liouville covariance switches to
/// the diagonal closed form.
const RL_DIAGONAL_CUTOFF: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `K(t, s) = 1_{s < t}`: the conventional Stein-Stein model.
    Constant,
    /// `K(t, s) = 1_{s < t} (t - s)^{H - 1/2} / Gamma(H + 1/2)`.
    RiemannLiouville { h: f64 },
    /// `K(t, s) = 1_{s < t} (T1 - t) / (T1 - s)`.
    BrownianBridge { t1: f64 },
    /// `K(t, s) = 1_{s < t} k(t - s)` with `k` the piecewise-linear
    /// interpolant of `values[j] = k(j * step)`.
    TabulatedConvolution { step: f64, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputCurveSpec {
    /// `g0(t) = x0 + theta t^alpha / Gamma(1 + alpha)`, `alpha = H + 1/2`
    /// taken from a Riemann-Liouville kernel.
    FractionalAffine { x0: f64, theta: f64 },
    /// `g0(t) = x0 + theta t`.
    Affine { x0: f64, theta: f64 },
    /// Piecewise-linear interpolation of `(times[i], values[i])`.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub s0: f64,
    pub kernel: KernelSpec,
    pub curve: InputCurveSpec,
    pub kappa: f64,
    pub nu: f64,
    pub rho: f64,
    /// Horizon `T` in years.
    pub maturity: f64,
}

impl ModelConfig {
    /// Every violated constraint, in a fixed order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            out.push(format!("s0 must be positive, got {}", self.s0));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            out.push(format!("T must be positive, got {}", self.maturity));
        }
        if !self.kappa.is_finite() {
            out.push(format!("kappa must be finite, got {}", self.kappa));
        }
        if !self.nu.is_finite() {
            out.push(format!("nu must be finite, got {}", self.nu));
        }
        if !(self.rho.abs() <= 1.0) {
            out.push(format!("rho must lie in [-1, 1], got {}", self.rho));
        }
        out.extend(kernel_violations(&self.kernel, self.maturity));
        out.extend(curve_violations(&self.curve, &self.kernel, self.maturity));
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    /// Same model with a different horizon.
    pub fn with_maturity(&self, maturity: f64) -> Self {
        Self {
            maturity,
            ..self.clone()
        }
    }

    pub fn hurst(&self) -> Option<f64> {
        match self.kernel {
            KernelSpec::RiemannLiouville { h } => Some(h),
            _ => None,
        }
    }
}

fn kernel_violations(kernel: &KernelSpec, maturity: f64) -> Vec<String> {
    let mut out = Vec::new();
    match kernel {
        KernelSpec::Constant => {}
        KernelSpec::RiemannLiouville { h } => {
            if !(*h > 0.0 && *h < 1.0) {
                out.push(format!("kernel H must lie in (0, 1), got {h}"));
            }
        }
        KernelSpec::BrownianBridge { t1 } => {
            if !(*t1 > maturity) || !t1.is_finite() {
                out.push(format!("kernel T1 must exceed T = {maturity}, got {t1}"));
            }
        }
        KernelSpec::TabulatedConvolution { step, values } => {
            if !(*step > 0.0 && step.is_finite()) {
                out.push(format!("kernel sample step must be positive, got {step}"));
            }
            if values.len() < 2 {
                out.push("kernel needs at least two samples".to_string());
            }
            if values.iter().any(|v| !v.is_finite()) {
                out.push("kernel samples must be finite".to_string());
            }
            let span = step * (values.len().saturating_sub(1)) as f64;
            if span < maturity * (1.0 - 1e-12) {
                out.push(format!(
                    "kernel samples cover [0, {span}] but T = {maturity}"
                ));
            }
        }
    }
    out
}

fn curve_violations(curve: &InputCurveSpec, kernel: &KernelSpec, maturity: f64) -> Vec<String> {
    let mut out = Vec::new();
    match curve {
        InputCurveSpec::FractionalAffine { x0, theta } => {
            if !(x0.is_finite() && theta.is_finite()) {
                out.push("curve x0 and theta must be finite".to_string());
            }
            if !matches!(kernel, KernelSpec::RiemannLiouville { .. }) {
                out.push("fractional_affine curve requires a riemann_liouville kernel".to_string());
            }
        }
        InputCurveSpec::Affine { x0, theta } => {
            if !(x0.is_finite() && theta.is_finite()) {
                out.push("curve x0 and theta must be finite".to_string());
            }
        }
        InputCurveSpec::Tabulated { times, values } => {
            if times.len() != values.len() || times.is_empty() {
                out.push(format!(
                    "curve needs matching nonempty times/values, got {} and {}",
                    times.len(),
                    values.len()
                ));
            } else {
                if times.iter().chain(values).any(|v| !v.is_finite()) {
                    out.push("curve values must be finite".to_string());
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    out.push("curve times must be strictly increasing".to_string());
                }
                if times[0] > 0.0 || *times.last().unwrap() < maturity * (1.0 - 1e-12) {
                    out.push(format!(
                        "curve times cover [{}, {}] but must cover [0, {maturity}]",
                        times[0],
                        times.last().unwrap()
                    ));
                }
            }
        }
    }
    out
}

fn check_grid(n: usize, maturity: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("grid size n must be at least 2, got {n}")));
    }
    if !(maturity > 0.0 && maturity.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {maturity}")));
    }
    Ok(maturity / n as f64)
}

/// Grid times `t_0, ..., t_{n-1}` (left cell ends).
pub fn grid_times(n: usize, maturity: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * maturity / n as f64).collect()
}

fn tab_eval(step: f64, values: &[f64], tau: f64) -> f64 {
    if tau <= 0.0 {
        return values[0];
    }
    let x = tau / step;
    let j = x.floor() as usize;
    if j + 1 >= values.len() {
        return *values.last().unwrap();
    }
    let f = x - j as f64;
    values[j] + f * (values[j + 1] - values[j])
}

/// Cumulative integrals of the interpolant at the sample points.
fn tab_cumulative(step: f64, values: &[f64]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * step * (w[0] + w[1]);
        cum.push(acc);
    }
    cum
}

/// `int_0^tau k`, exact for the interpolant.
fn tab_antiderivative(step: f64, values: &[f64], cum: &[f64], tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let j = ((tau / step).floor() as usize).min(values.len() - 2);
    let d = tau - j as f64 * step;
    let slope = (values[j + 1] - values[j]) / step;
    cum[j] + d * values[j] + 0.5 * d * d * slope
}

/// `int_lo^hi k(s - z) k(u - z) dz` with Simpson's rule on the pieces where
/// both factors are linear, which is exact.
fn tab_product_integral(step: f64, values: &[f64], s: f64, u: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut cuts = vec![lo, hi];
    for base in [s, u] {
        let j_min = ((base - hi) / step).ceil().max(0.0) as usize;
        let j_max = ((base - lo) / step).floor();
        if j_max < 0.0 {
            continue;
        }
        for j in j_min..=j_max as usize {
            let z = base - j as f64 * step;
            if z > lo && z < hi {
                cuts.push(z);
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let f = |z: f64| tab_eval(step, values, s - z) * tab_eval(step, values, u - z);
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        })
        .sum()
}

/// `K(t, s)`; zero whenever `s >= t`, except that a Riemann-Liouville kernel
/// with `H < 1/2` is undefined at `s = t`.
pub fn kernel_eval(spec: &KernelSpec, t: f64, s: f64) -> Result<f64> {
    if !(t.is_finite() && s.is_finite()) {
        return Err(Error::Domain(format!("kernel arguments ({t}, {s})")));
    }
    if let KernelSpec::RiemannLiouville { h } = spec {
        if s == t && *h < 0.5 {
            return Err(Error::Domain(format!(
                "Riemann-Liouville kernel with H = {h} diverges at s = t = {t}"
            )));
        }
    }
    if s >= t {
        return Ok(0.0);
    }
    Ok(match spec {
        KernelSpec::Constant => 1.0,
        KernelSpec::RiemannLiouville { h } => {
            let alpha = h + 0.5;
            (t - s).powf(h - 0.5) / gamma_fn(alpha)?
        }
        KernelSpec::BrownianBridge { t1 } => (t1 - t) / (t1 - s),
        KernelSpec::TabulatedConvolution { step, values } => tab_eval(*step, values, t - s),
    })
}

/// `K^n[r][c] = int_{t_c}^{t_{c+1}} K(t_r, s) ds` for `c < r`, zero otherwise.
pub fn build_k_matrix(spec: &KernelSpec, n: usize, maturity: f64) -> Result<RealMatrix> {
    let delta = check_grid(n, maturity)?;
    let t = |i: usize| i as f64 * delta;
    let mut k = RealMatrix::zeros(n, n);
    match spec {
        KernelSpec::Constant => {
            for r in 0..n {
                for c in 0..r {
                    k[(r, c)] = delta;
                }
            }
        }
        KernelSpec::RiemannLiouville { h } => {
            let alpha = h + 0.5;
            let scale = delta.powf(alpha) / gamma_fn(1.0 + alpha)?;
            // Toeplitz: the entry depends on the offset r - c only.
            let by_offset: Vec<f64> = (0..n)
                .map(|d| {
                    if d == 0 {
                        0.0
                    } else {
                        scale * ((d as f64).powf(alpha) - ((d - 1) as f64).powf(alpha))
                    }
                })
                .collect();
            for r in 0..n {
                for c in 0..r {
                    k[(r, c)] = by_offset[r - c];
                }
            }
        }
        KernelSpec::BrownianBridge { t1 } => {
            for r in 0..n {
                for c in 0..r {
                    k[(r, c)] = (t1 - t(r)) * (delta / (t1 - t(c + 1))).ln_1p();
                }
            }
        }
        KernelSpec::TabulatedConvolution { step, values } => {
            let cum = tab_cumulative(*step, values);
            let big_f = |tau: f64| tab_antiderivative(*step, values, &cum, tau);
            for r in 0..n {
                for c in 0..r {
                    k[(r, c)] = big_f(t(r) - t(c)) - big_f(t(r) - t(c + 1));
                }
            }
        }
    }
    Ok(k)
}

struct RlConstants {
    h: f64,
    alpha: f64,
    cross: f64,
    diagonal: f64,
}

impl RlConstants {
    fn new(h: f64, nu: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Domain(format!("H must lie in (0, 1), got {h}")));
        }
        let alpha = h + 0.5;
        let ga = gamma_fn(alpha)?;
        Ok(Self {
            h,
            alpha,
            cross: nu * nu / (ga * gamma_fn(1.0 + alpha)?),
            diagonal: nu * nu / (2.0 * h * ga * ga),
        })
    }

    /// `s <= u` assumed.
    fn sigma(&self, s: f64, u: f64) -> Result<f64> {
        if s <= 0.0 {
            return Ok(0.0);
        }
        if s / u > RL_DIAGONAL_CUTOFF {
            // geometric mean keeps the value symmetric when s and u differ by roundoff
            return Ok(self.diagonal * (s * u).powf(self.h));
        }
        self.sigma_hypergeometric(s, u)
    }

    fn sigma_hypergeometric(&self, s: f64, u: f64) -> Result<f64> {
        Ok(self.cross * s.powf(self.alpha) * u.powf(self.alpha - 1.0)
            * hyp2f1_special(self.alpha, s / u)?)
    }
}

/// Riemann-Liouville `Sigma_0(s, u)` for `s <= u` through the
/// hypergeometric representation, without the diagonal switch.
pub fn rl_sigma0_hypergeometric(h: f64, nu: f64, s: f64, u: f64) -> Result<f64> {
    if !(s > 0.0 && s <= u) {
        return Err(Error::Domain(format!("need 0 < s <= u, got s={s}, u={u}")));
    }
    RlConstants::new(h, nu)?.sigma_hypergeometric(s, u)
}

/// Riemann-Liouville variance `nu^2 s^{2H} / (2H Gamma(H + 1/2)^2)`.
pub fn rl_sigma0_diagonal(h: f64, nu: f64, s: f64) -> Result<f64> {
    Ok(RlConstants::new(h, nu)?.diagonal * s.powf(2.0 * h))
}

/// `Sigma_0(s, u) = nu^2 int_0^{s ^ u} K(s, z) K(u, z) dz`.
pub fn sigma0_point(spec: &KernelSpec, nu: f64, s: f64, u: f64) -> Result<f64> {
    sigma_t_point(spec, nu, 0.0, s, u)
}

/// `Sigma_t(s, u) = nu^2 int_t^{s ^ u} K(s, z) K(u, z) dz`, zero on an empty range.
pub fn sigma_t_point(spec: &KernelSpec, nu: f64, t: f64, s: f64, u: f64) -> Result<f64> {
    if !(s >= 0.0 && u >= 0.0 && t >= 0.0) {
        return Err(Error::Domain(format!("covariance at ({s}, {u}) from {t}")));
    }
    let (s, u) = if s <= u { (s, u) } else { (u, s) };
    if s <= t {
        return Ok(0.0);
    }
    let nu2 = nu * nu;
    match spec {
        KernelSpec::Constant => Ok(nu2 * (s - t)),
        // convolution kernel: shift the origin to t
        KernelSpec::RiemannLiouville { h } => RlConstants::new(*h, nu)?.sigma(s - t, u - t),
        KernelSpec::BrownianBridge { t1 } => {
            Ok(nu2 * (t1 - u) * (s - t) / (t1 - t))
        }
        KernelSpec::TabulatedConvolution { step, values } => {
            Ok(nu2 * tab_product_integral(*step, values, s, u, t, s))
        }
    }
}

/// `Sigma^n[r][c] = Sigma_0(t_r, t_c)`.
pub fn build_sigma0_matrix(spec: &KernelSpec, n: usize, maturity: f64, nu: f64) -> Result<RealMatrix> {
    build_sigma_t_matrix(spec, n, maturity, nu, 0.0)
}

/// `Sigma_t` sampled on the grid, `[r][c] = Sigma_t(t_r, t_c)`.
pub fn build_sigma_t_matrix(
    spec: &KernelSpec,
    n: usize,
    maturity: f64,
    nu: f64,
    t: f64,
) -> Result<RealMatrix> {
    let delta = check_grid(n, maturity)?;
    if !(0.0..=maturity).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, {maturity}]")));
    }
    let times: Vec<f64> = (0..n).map(|i| i as f64 * delta).collect();
    let mut m = RealMatrix::zeros(n, n);
    let rl = match spec {
        KernelSpec::RiemannLiouville { h } => Some(RlConstants::new(*h, nu)?),
        _ => None,
    };
    for r in 1..n {
        if times[r] <= t {
            continue;
        }
        for c in 1..=r {
            if times[c] <= t {
                continue;
            }
            let v = match &rl {
                Some(rl) => rl.sigma(times[c] - t, times[r] - t)?,
                None => sigma_t_point(spec, nu, t, times[c], times[r])?,
            };
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
    Ok(m)
}

impl InputCurveSpec {
    pub fn eval(&self, kernel: &KernelSpec, t: f64) -> Result<f64> {
        match self {
            InputCurveSpec::FractionalAffine { x0, theta } => {
                let KernelSpec::RiemannLiouville { h } = kernel else {
                    return Err(Error::Config(
                        "fractional_affine curve requires a riemann_liouville kernel".into(),
                    ));
                };
                let alpha = h + 0.5;
                Ok(x0 + theta * t.powf(alpha) / gamma_fn(1.0 + alpha)?)
            }
            InputCurveSpec::Affine { x0, theta } => Ok(x0 + theta * t),
            InputCurveSpec::Tabulated { times, values } => {
                let j = times.partition_point(|&x| x <= t);
                if j == 0 {
                    return Ok(values[0]);
                }
                if j == times.len() {
                    return Ok(*values.last().unwrap());
                }
                let (t0, t1) = (times[j - 1], times[j]);
                let f = (t - t0) / (t1 - t0);
                Ok(values[j - 1] + f * (values[j] - values[j - 1]))
            }
        }
    }
}

/// `g_n[r] = g0(t_r)`.
pub fn build_g_vector(
    curve: &InputCurveSpec,
    kernel: &KernelSpec,
    n: usize,
    maturity: f64,
) -> Result<Vec<f64>> {
    let delta = check_grid(n, maturity)?;
    (0..n).map(|r| curve.eval(kernel, r as f64 * delta)).collect()
}

/// The model on an `n`-point grid.
#[derive(Debug, Clone)]
pub struct DiscretizedModel {
    pub n: usize,
    pub maturity: f64,
    pub delta: f64,
    pub k: RealMatrix,
    pub sigma: RealMatrix,
    pub g: Vec<f64>,
}

impl DiscretizedModel {
    pub fn new(model: &ModelConfig, n: usize) -> Result<Self> {
        model.validate()?;
        let delta = check_grid(n, model.maturity)?;
        Ok(Self {
            n,
            maturity: model.maturity,
            delta,
            k: build_k_matrix(&model.kernel, n, model.maturity)?,
            sigma: build_sigma0_matrix(&model.kernel, n, model.maturity, model.nu)?,
            g: build_g_vector(&model.curve, &model.kernel, n, model.maturity)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, integrate_plain, Tolerance};

    const RL_H025: KernelSpec = KernelSpec::RiemannLiouville { h: 0.25 };

    fn tabulated() -> KernelSpec {
        // k(tau) = exp(-2 tau) sampled coarsely, deliberately not on the matrix grid
        let step = 0.07;
        let values = (0..20).map(|j| (-2.0 * j as f64 * step).exp()).collect();
        KernelSpec::TabulatedConvolution { step, values }
    }

    fn all_kernels() -> Vec<KernelSpec> {
        vec![
            KernelSpec::Constant,
            KernelSpec::RiemannLiouville { h: 0.2 },
            KernelSpec::RiemannLiouville { h: 0.5 },
            KernelSpec::RiemannLiouville { h: 0.8 },
            KernelSpec::BrownianBridge { t1: 1.5 },
            tabulated(),
        ]
    }

    /// Cut points of `[a, b]` at the kinks of a tabulated kernel seen from each base.
    fn split_points(spec: &KernelSpec, bases: &[f64], a: f64, b: f64) -> Vec<f64> {
        let mut cuts = vec![a, b];
        if let KernelSpec::TabulatedConvolution { step, values } = spec {
            for &base in bases {
                for j in 0..values.len() {
                    let z = base - j as f64 * step;
                    if z > a && z < b {
                        cuts.push(z);
                    }
                }
            }
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts
    }

    /// `int_t^{s ^ u} K(s, z) K(u, z) dz` by tanh-sinh, with the singular
    /// distance passed explicitly for the rough kernel.
    fn product_quadrature(spec: &KernelSpec, t: f64, s: f64, u: f64) -> f64 {
        let (s, u) = (s.min(u), s.max(u));
        if s <= t {
            return 0.0;
        }
        let f = |z: f64, _: f64, db: f64| -> f64 {
            match spec {
                KernelSpec::RiemannLiouville { h } => {
                    let g = gamma_fn(h + 0.5).unwrap();
                    db.powf(h - 0.5) * (db + (u - s)).powf(h - 0.5) / (g * g)
                }
                _ => kernel_eval(spec, s, z).unwrap() * kernel_eval(spec, u, z).unwrap(),
            }
        };
        let cuts = split_points(spec, &[s, u], t, s);
        cuts.windows(2)
            .map(|w| integrate(&f, w[0], w[1], Tolerance::absolute(1e-15)).unwrap())
            .sum()
    }

    #[test]
    fn kernel_eval_examples() {
        assert_eq!(kernel_eval(&KernelSpec::Constant, 0.7, 0.3).unwrap(), 1.0);
        assert_eq!(kernel_eval(&KernelSpec::Constant, 0.3, 0.7).unwrap(), 0.0);
        let half = KernelSpec::RiemannLiouville { h: 0.5 };
        assert_eq!(kernel_eval(&half, 0.9, 0.2).unwrap(), 1.0);
        let bb = KernelSpec::BrownianBridge { t1: 2.0 };
        assert!((kernel_eval(&bb, 1.0, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rough_kernel_on_the_diagonal_is_an_error() {
        assert!(matches!(kernel_eval(&RL_H025, 0.4, 0.4), Err(Error::Domain(_))));
        assert_eq!(kernel_eval(&RL_H025, 0.4, 0.5).unwrap(), 0.0);
        let smooth = KernelSpec::RiemannLiouville { h: 0.7 };
        assert_eq!(kernel_eval(&smooth, 0.4, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn constant_k_matrix() {
        let k = build_k_matrix(&KernelSpec::Constant, 4, 1.0).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(k[(r, c)], if c < r { 0.25 } else { 0.0 });
            }
        }
    }

    #[test]
    fn brownian_rl_kernel_matches_constant() {
        let a = build_k_matrix(&KernelSpec::RiemannLiouville { h: 0.5 }, 16, 2.0).unwrap();
        let b = build_k_matrix(&KernelSpec::Constant, 16, 2.0).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn rough_k_entry_closed_form_and_quadrature() {
        let k = build_k_matrix(&RL_H025, 2, 1.0).unwrap();
        let want = 0.5f64.powf(0.75) / gamma_fn(1.75).unwrap();
        assert!((k[(1, 0)] - want).abs() < 1e-15);
        let g = gamma_fn(0.75).unwrap();
        let quad = integrate(|_, _, db| db.powf(-0.25) / g, 0.0, 0.5, Tolerance::relative(1e-14))
            .unwrap();
        assert!((k[(1, 0)] - quad).abs() < 1e-12);
    }

    #[test]
    fn k_matrix_entries_match_quadrature() {
        let n = 12;
        let t_max = 1.2;
        let delta = t_max / n as f64;
        for spec in all_kernels() {
            let k = build_k_matrix(&spec, n, t_max).unwrap();
            for r in 0..n {
                for c in 0..r {
                    let t = r as f64 * delta;
                    let f = |z: f64, _: f64, db: f64| match &spec {
                        KernelSpec::RiemannLiouville { h } => {
                            // distance to t, exact when the cell touches t
                            let d = if c + 1 == r { db } else { t - z };
                            d.powf(h - 0.5) / gamma_fn(h + 0.5).unwrap()
                        }
                        _ => kernel_eval(&spec, t, z).unwrap(),
                    };
                    let cuts = split_points(&spec, &[t], c as f64 * delta, (c + 1) as f64 * delta);
                    let quad: f64 = cuts
                        .windows(2)
                        .map(|w| integrate(&f, w[0], w[1], Tolerance::absolute(1e-15)).unwrap())
                        .sum();
                    assert!(
                        (k[(r, c)] - quad).abs() < 1e-12,
                        "{spec:?} ({r}, {c}): {} vs {quad}",
                        k[(r, c)]
                    );
                }
            }
        }
    }

    #[test]
    fn k_matrix_is_strictly_lower_triangular() {
        for spec in all_kernels() {
            let k = build_k_matrix(&spec, 9, 1.0).unwrap();
            for r in 0..9 {
                for c in r..9 {
                    assert_eq!(k[(r, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn grid_size_one_is_rejected() {
        assert!(build_k_matrix(&KernelSpec::Constant, 1, 1.0).is_err());
        assert!(build_sigma0_matrix(&KernelSpec::Constant, 1, 1.0, 0.2).is_err());
        assert!(build_k_matrix(&KernelSpec::Constant, 4, 0.0).is_err());
    }

    #[test]
    fn sigma0_point_examples() {
        let v = sigma0_point(&KernelSpec::Constant, 0.3, 0.4, 0.9).unwrap();
        assert!((v - 0.036).abs() < 1e-15);
        let spec = KernelSpec::RiemannLiouville { h: 0.2 };
        let v = sigma0_point(&spec, 1.0, 0.3, 0.7).unwrap();
        let quad = product_quadrature(&spec, 0.0, 0.3, 0.7);
        assert!(((v - quad) / quad).abs() < 1e-9, "{v} vs {quad}");
    }

    #[test]
    fn rough_diagonal_identity() {
        for h in [0.1, 0.25, 0.5, 0.75] {
            let rl = RlConstants::new(h, 0.7).unwrap();
            let g = gamma_fn(h + 0.5).unwrap();
            for s in [0.1f64, 0.5, 1.0] {
                let closed = 0.49 * s.powf(2.0 * h) / (2.0 * h * g * g);
                let via_hyp = rl.sigma_hypergeometric(s, s).unwrap();
                let point = sigma0_point(&KernelSpec::RiemannLiouville { h }, 0.7, s, s).unwrap();
                assert!(((via_hyp - closed) / closed).abs() < 1e-10, "H={h} s={s}");
                assert!(((point - closed) / closed).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sigma_points_match_quadrature() {
        let pairs = [(0.2, 0.9), (0.5, 0.55), (0.8, 0.3), (1.0, 1.0)];
        for spec in all_kernels() {
            for t in [0.0, 0.1, 0.25] {
                for &(s, u) in &pairs {
                    let got = sigma_t_point(&spec, 0.8, t, s, u).unwrap();
                    let want = 0.64 * product_quadrature(&spec, t, s, u);
                    assert!(
                        (got - want).abs() < 1e-10 * (1.0 + want.abs()),
                        "{spec:?} t={t} ({s}, {u}): {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn sigma0_matrix_structure() {
        let m = build_sigma0_matrix(&KernelSpec::Constant, 4, 1.0, 2.0).unwrap();
        assert_eq!(m[(2, 3)], 2.0);
        for spec in all_kernels() {
            let m = build_sigma0_matrix(&spec, 10, 1.0, 0.4).unwrap();
            for i in 0..10 {
                assert_eq!(m[(0, i)], 0.0);
                assert_eq!(m[(i, 0)], 0.0);
                for j in 0..10 {
                    assert_eq!(m[(i, j)], m[(j, i)]);
                }
            }
        }
    }

    #[test]
    fn constant_sigma_is_nu2_min() {
        let m = build_sigma0_matrix(&KernelSpec::Constant, 20, 2.0, 0.3).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let want = 0.09 * (i.min(j) as f64 * 0.1);
                assert_eq!(m[(i, j)], want);
            }
        }
    }

    #[test]
    fn rough_sigma0_matrix_entries_match_quadrature() {
        let spec = KernelSpec::RiemannLiouville { h: 0.2 };
        let m = build_sigma0_matrix(&spec, 50, 1.0, 0.25).unwrap();
        // fixed pseudo-random sample of 20 entries
        let mut state = 12345u64;
        for _ in 0..20 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let i = 1 + (state >> 33) as usize % 49;
            let j = 1 + (state >> 13) as usize % 49;
            let want = 0.0625 * product_quadrature(&spec, 0.0, i as f64 / 50.0, j as f64 / 50.0);
            assert!((m[(i, j)] - want).abs() < 1e-8, "({i}, {j})");
        }
    }

    #[test]
    fn sigma_matrices_are_positive_semidefinite() {
        for spec in all_kernels() {
            let m = build_sigma0_matrix(&spec, 40, 1.0, 0.5).unwrap();
            let na = nalgebra::DMatrix::from_row_slice(40, 40, m.as_slice());
            let eig = na.symmetric_eigen().eigenvalues;
            let max = eig.max();
            let min = eig.min();
            assert!(min >= -1e-8 * max, "{spec:?}: {min} vs {max}");
        }
    }

    #[test]
    fn sigma_t_matrix_endpoints() {
        for spec in all_kernels() {
            let s0 = build_sigma0_matrix(&spec, 8, 1.0, 0.6).unwrap();
            let st = build_sigma_t_matrix(&spec, 8, 1.0, 0.6, 0.0).unwrap();
            for (a, b) in s0.as_slice().iter().zip(st.as_slice()) {
                assert!((a - b).abs() < 1e-9);
            }
            let end = build_sigma_t_matrix(&spec, 8, 1.0, 0.6, 1.0).unwrap();
            assert_eq!(end.max_abs(), 0.0);
        }
        let m = build_sigma_t_matrix(&KernelSpec::Constant, 4, 1.0, 1.0, 0.25).unwrap();
        assert!((m[(2, 3)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn g_vector_examples() {
        let rl = KernelSpec::RiemannLiouville { h: 0.3 };
        let g = build_g_vector(&InputCurveSpec::FractionalAffine { x0: 0.1, theta: 0.0 }, &rl, 6, 1.0)
            .unwrap();
        assert!(g.iter().all(|&v| v == 0.1));
        let g = build_g_vector(
            &InputCurveSpec::Affine { x0: 0.1, theta: 0.2 },
            &KernelSpec::Constant,
            2,
            1.0,
        )
        .unwrap();
        assert_eq!(g, vec![0.1, 0.2]);
        let h = 0.2234273;
        let curve = InputCurveSpec::FractionalAffine { x0: 0.44, theta: 0.3 };
        let g = build_g_vector(&curve, &KernelSpec::RiemannLiouville { h }, 2, 1.0).unwrap();
        let want = 0.44 + 0.3 * 0.5f64.powf(h + 0.5) / gamma_fn(h + 1.5).unwrap();
        assert!((g[1] - want).abs() < 1e-15);
        assert!(matches!(
            build_g_vector(&curve, &KernelSpec::Constant, 2, 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tabulated_curve_interpolates() {
        let curve = InputCurveSpec::Tabulated {
            times: vec![0.0, 0.5, 1.0],
            values: vec![0.1, 0.3, 0.2],
        };
        let g = build_g_vector(&curve, &KernelSpec::Constant, 4, 1.0).unwrap();
        let want = [0.1, 0.2, 0.3, 0.25];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn model_validation_lists_every_problem() {
        let model = ModelConfig {
            s0: -1.0,
            kernel: KernelSpec::RiemannLiouville { h: 1.2 },
            curve: InputCurveSpec::Affine { x0: 0.1, theta: 0.0 },
            kappa: 0.0,
            nu: 0.3,
            rho: -1.5,
            maturity: 1.0,
        };
        let v = model.violations();
        assert_eq!(v.len(), 3, "{v:?}");
        assert!(v.iter().any(|m| m.contains("H")));
        let bb = ModelConfig {
            s0: 1.0,
            kernel: KernelSpec::BrownianBridge { t1: 0.5 },
            rho: 0.0,
            ..model
        };
        assert_eq!(bb.violations().len(), 1);
    }

    #[test]
    fn tabulated_helpers_are_exact_for_linear_data() {
        let values = vec![1.0, 2.0, 3.0, 4.0];
        let cum = tab_cumulative(0.5, &values);
        // k(tau) = 1 + 2 tau, int_0^1.2 = 1.2 + 1.44
        let v = tab_antiderivative(0.5, &values, &cum, 1.2);
        assert!((v - 2.64).abs() < 1e-14);
        let want = integrate_plain(|z| (1.0 + 2.0 * (1.3 - z)) * (1.0 + 2.0 * (1.4 - z)), 0.1, 1.3, Tolerance::absolute(1e-14)).unwrap();
        let got = tab_product_integral(0.5, &values, 1.3, 1.4, 0.1, 1.3);
        assert!((got - want).abs() < 1e-13);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn kernel_strategy() -> impl Strategy<Value = KernelSpec> {
            prop_oneof![
                Just(KernelSpec::Constant),
                (0.05f64..0.95).prop_map(|h| KernelSpec::RiemannLiouville { h }),
                (1.05f64..3.0).prop_map(|t1| KernelSpec::BrownianBridge { t1 }),
            ]
        }

        proptest! {
            #[test]
            fn k_lower_and_sigma_symmetric(spec in kernel_strategy(), n in 2usize..24, nu in 0.0f64..2.0) {
                let k = build_k_matrix(&spec, n, 1.0).unwrap();
                let s = build_sigma0_matrix(&spec, n, 1.0, nu).unwrap();
                for r in 0..n {
                    for c in 0..n {
                        if c >= r {
                            prop_assert_eq!(k[(r, c)], 0.0);
                        }
                        prop_assert_eq!(s[(r, c)], s[(c, r)]);
                    }
                }
            }

            #[test]
            fn sigma_cauchy_schwarz(spec in kernel_strategy(), s in 0.01f64..1.0, u in 0.01f64..1.0) {
                let a = sigma0_point(&spec, 1.0, s, s).unwrap();
                let b = sigma0_point(&spec, 1.0, u, u).unwrap();
                let c = sigma0_point(&spec, 1.0, s, u).unwrap();
                prop_assert!(c * c <= a * b * (1.0 + 1e-10));
            }
        }
    }
}
