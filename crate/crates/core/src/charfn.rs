//! Joint Fourier-Laplace transform `E[exp(u ln S_T + w int_0^T X_s^2 ds)]`
//! of the discretized model, and two independent oracles: the Markovian
//! Riccati ODE system and the spectral product for symmetric kernels.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{DiscretizedModel, InputCurveSpec, KernelSpec, ModelConfig};
use crate::linalg::{ComplexLu, ComplexSquareMatrix, RealMatrix};
use crate::operators::{OperatorCache, RiccatiCoefficients};
use crate::specfun::{principal_sqrt, PhaseTrack};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Phase step above which the ray continuation and the curve refinement
/// subdivide.
const SUBDIVIDE_JUMP: f64 = 0.25 * PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformQuery {
    pub u: Complex64,
    pub w: Complex64,
}

impl TransformQuery {
    pub fn new(u: Complex64, w: Complex64) -> Self {
        Self { u, w }
    }

    /// `0 <= Re(u) <= 1` and `Re(w) <= 0`.
    pub fn is_admissible(&self) -> bool {
        const TOL: f64 = 1e-14;
        self.u.re >= -TOL && self.u.re <= 1.0 + TOL && self.w.re <= TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformValue {
    pub value: Complex64,
    pub quad: Complex64,
    pub logdet_unwrapped: Complex64,
}

#[derive(Debug, Clone, Copy)]
pub struct CurveOptions {
    /// Maximum bisection depth used to carry the determinant phase across
    /// a coarse step; 0 rejects any unresolved step.
    pub refine_depth: usize,
    /// Stop once this many consecutive values have modulus below the cutoff.
    pub tail_cutoff: Option<f64>,
    pub tail_run: usize,
    /// Points evaluated per parallel batch.
    pub chunk: usize,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            refine_depth: 0,
            tail_cutoff: None,
            tail_run: 3,
            chunk: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Curve {
    /// Values on the evaluated prefix of the grid.
    pub values: Vec<Complex64>,
    /// Largest accepted phase step of the determinant.
    pub max_jump: f64,
    /// Extra evaluations spent on phase refinement.
    pub refinements: usize,
}

/// Transform evaluator for one model on one grid; the matrices are
/// assembled once and reused for every `(u, w)`.
#[derive(Debug, Clone)]
pub struct TransformEngine {
    cache: OperatorCache,
    kappa: f64,
    nu: f64,
    rho: f64,
    ln_s0: f64,
}

impl TransformEngine {
    pub fn new(model: &ModelConfig, n: usize) -> Result<Self> {
        let disc = DiscretizedModel::new(model, n)?;
        Self::from_discretized(model, &disc)
    }

    pub fn from_discretized(model: &ModelConfig, disc: &DiscretizedModel) -> Result<Self> {
        Ok(Self {
            cache: OperatorCache::new(disc)?,
            kappa: model.kappa,
            nu: model.nu,
            rho: model.rho,
            ln_s0: model.s0.ln(),
        })
    }

    pub fn n(&self) -> usize {
        self.cache.n()
    }

    /// Quadratic form and principal log-determinant at `(u, w)`.
    pub fn raw(&self, u: Complex64, w: Complex64) -> Result<(Complex64, Complex64)> {
        let coeff = RiccatiCoefficients::new(u, w, self.kappa, self.nu, self.rho);
        self.cache.log_value(&coeff)
    }

    fn assemble(&self, u: Complex64, quad: Complex64, logdet: Complex64) -> TransformValue {
        TransformValue {
            value: (u * self.ln_s0 + quad - 0.5 * logdet).exp(),
            quad,
            logdet_unwrapped: logdet,
        }
    }

    /// Transform at one point; the determinant phase is continued along
    /// the ray `s (u, w)`, `s` from 0 (where `Phi = I`) to 1.
    pub fn evaluate(&self, query: TransformQuery) -> Result<TransformValue> {
        if !query.is_admissible() {
            return Err(Error::Domain(format!(
                "transform requires 0 <= Re(u) <= 1 and Re(w) <= 0, got u={}, w={}",
                query.u, query.w
            )));
        }
        let (u, w) = (query.u, query.w);
        let a = w + 0.5 * (u * u - u);
        if a == ZERO {
            return Ok(self.assemble(u, ZERO, ZERO));
        }
        let mut track = PhaseTrack::anchored(0.0);
        let mut s = 0.0;
        let mut h: f64 = 0.25;
        let mut last = (ZERO, ZERO);
        while s < 1.0 {
            let next = (s + h).min(1.0);
            let (quad, logdet) = self.raw(next * u, next * w)?;
            let jump = track.peek_jump(logdet.im);
            if jump.abs() > SUBDIVIDE_JUMP && h > 1e-6 {
                h *= 0.5;
                continue;
            }
            let im = track.push_arg(logdet.im)?;
            last = (quad, Complex64::new(logdet.re, im));
            s = next;
            if jump.abs() < 0.05 * PI {
                h *= 2.0;
            }
        }
        Ok(self.assemble(u, last.0, last.1))
    }

    /// Values at `u = i z_k` along a monotone grid, with the determinant
    /// phase continued from the first point.
    pub fn curve(&self, z_grid: &[f64], w: Complex64, opts: &CurveOptions) -> Result<Curve> {
        if z_grid.iter().any(|z| !z.is_finite()) {
            return Err(Error::Domain("non-finite frequency in grid".into()));
        }
        let mut values = Vec::with_capacity(z_grid.len());
        let mut max_jump: f64 = 0.0;
        let mut refinements = 0;
        if z_grid.is_empty() {
            return Ok(Curve {
                values,
                max_jump,
                refinements,
            });
        }
        let i_unit = Complex64::new(0.0, 1.0);
        let anchor = self.evaluate(TransformQuery::new(i_unit * z_grid[0], w))?;
        let mut track = PhaseTrack::anchored(anchor.logdet_unwrapped.im);
        values.push(anchor.value);
        let mut quiet = usize::from(opts.tail_cutoff.is_some_and(|c| anchor.value.norm() < c));
        let mut prev_z = z_grid[0];
        let chunk = opts.chunk.max(1);

        let mut start = 1;
        'outer: while start < z_grid.len() {
            let end = (start + chunk).min(z_grid.len());
            let raws: Vec<(Complex64, Complex64)> = z_grid[start..end]
                .par_iter()
                .map(|&z| self.raw(i_unit * z, w))
                .collect::<Result<_>>()?;
            for (offset, (quad, logdet)) in raws.into_iter().enumerate() {
                let z = z_grid[start + offset];
                let jump = track.peek_jump(logdet.im).abs();
                let im = if opts.refine_depth > 0 && jump > SUBDIVIDE_JUMP {
                    self.carry_phase(&mut track, prev_z, z, w, logdet.im, opts.refine_depth, &mut refinements)?
                } else {
                    track.push_arg(logdet.im)?
                };
                max_jump = max_jump.max(jump.min(track.max_jump()));
                let u = i_unit * z;
                let v = self.assemble(u, quad, Complex64::new(logdet.re, im)).value;
                values.push(v);
                prev_z = z;
                if let Some(cutoff) = opts.tail_cutoff {
                    if v.norm() < cutoff {
                        quiet += 1;
                        if quiet >= opts.tail_run {
                            break 'outer;
                        }
                    } else {
                        quiet = 0;
                    }
                }
            }
            start = end;
        }
        Ok(Curve {
            values,
            max_jump: max_jump.max(track.max_jump()),
            refinements,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn carry_phase(
        &self,
        track: &mut PhaseTrack,
        z_lo: f64,
        z_hi: f64,
        w: Complex64,
        raw_hi: f64,
        depth: usize,
        count: &mut usize,
    ) -> Result<f64> {
        if depth == 0 || track.peek_jump(raw_hi).abs() <= SUBDIVIDE_JUMP {
            return track.push_arg(raw_hi);
        }
        let mid = 0.5 * (z_lo + z_hi);
        let (_, logdet) = self.raw(Complex64::new(0.0, mid), w)?;
        *count += 1;
        self.carry_phase(track, z_lo, mid, w, logdet.im, depth - 1, count)?;
        self.carry_phase(track, mid, z_hi, w, raw_hi, depth - 1, count)
    }
}

/// `E[exp(u ln S_T + w int_0^T X^2)]` on an `n`-point grid.
pub fn joint_transform(model: &ModelConfig, n: usize, query: TransformQuery) -> Result<TransformValue> {
    if !query.is_admissible() {
        return Err(Error::Domain(format!(
            "transform requires 0 <= Re(u) <= 1 and Re(w) <= 0, got u={}, w={}",
            query.u, query.w
        )));
    }
    TransformEngine::new(model, n)?.evaluate(query)
}

/// Characteristic function of `ln S_T` (jointly with `w int X^2`) along a
/// grid starting at 0; unresolved phase steps are errors.
pub fn transform_curve(model: &ModelConfig, n: usize, z_grid: &[f64], w: Complex64) -> Result<Vec<Complex64>> {
    if z_grid.first() != Some(&0.0) {
        return Err(Error::Domain("frequency grid must start at 0".into()));
    }
    let increasing = z_grid.windows(2).all(|p| p[1] > p[0]);
    let decreasing = z_grid.windows(2).all(|p| p[1] < p[0]);
    if !(increasing || decreasing) {
        return Err(Error::Domain("frequency grid must be strictly monotone".into()));
    }
    let engine = TransformEngine::new(model, n)?;
    Ok(engine.curve(z_grid, w, &CurveOptions::default())?.values)
}

/// Parameters of the Markovian case `K = 1`, `g0(t) = X0 + theta t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovianParams {
    pub s0: f64,
    pub x0: f64,
    pub theta: f64,
    pub kappa: f64,
    pub nu: f64,
    pub rho: f64,
    pub maturity: f64,
}

impl MarkovianParams {
    /// Accepts a constant kernel (or Riemann-Liouville with `H = 1/2`) with
    /// an affine input curve.
    pub fn from_model(model: &ModelConfig) -> Result<Self> {
        let brownian = match model.kernel {
            KernelSpec::Constant => true,
            KernelSpec::RiemannLiouville { h } => h == 0.5,
            _ => false,
        };
        if !brownian {
            return Err(Error::Config("Markovian transform needs a constant kernel".into()));
        }
        let (x0, theta) = match model.curve {
            InputCurveSpec::Affine { x0, theta } | InputCurveSpec::FractionalAffine { x0, theta } => (x0, theta),
            InputCurveSpec::Tabulated { .. } => {
                return Err(Error::Config("Markovian transform needs an affine input curve".into()))
            }
        };
        Ok(Self {
            s0: model.s0,
            x0,
            theta,
            kappa: model.kappa,
            nu: model.nu,
            rho: model.rho,
            maturity: model.maturity,
        })
    }
}

const RICCATI_STEPS: usize = 20_000;
const RICCATI_BLOWUP: f64 = 1e8;

/// Transform of the Markovian model from the backward Riccati system
///
/// ```text
/// A' = -theta B - nu^2 B^2 / 2 - nu^2 C
/// B' = -2 theta C - (b + 2 nu^2 C) B
/// C' = -2 nu^2 C^2 - 2 b C - a
/// ```
///
/// with zero terminal values, integrated by classical RK4 in time-to-go.
pub fn markovian_transform(p: &MarkovianParams, u: Complex64, w: Complex64) -> Result<Complex64> {
    markovian_transform_steps(p, u, w, RICCATI_STEPS)
}

pub fn markovian_transform_steps(p: &MarkovianParams, u: Complex64, w: Complex64, steps: usize) -> Result<Complex64> {
    if !TransformQuery::new(u, w).is_admissible() {
        return Err(Error::Domain(format!("inadmissible (u, w) = ({u}, {w})")));
    }
    let a = w + 0.5 * (u * u - u);
    let b = p.kappa + p.rho * p.nu * u;
    let nu2 = p.nu * p.nu;
    let theta = p.theta;
    let rhs = |y: [Complex64; 3]| -> [Complex64; 3] {
        let [_, bb, cc] = y;
        [
            theta * bb + 0.5 * nu2 * bb * bb + nu2 * cc,
            2.0 * theta * cc + (b + 2.0 * nu2 * cc) * bb,
            2.0 * nu2 * cc * cc + 2.0 * b * cc + a,
        ]
    };
    let axpy = |y: [Complex64; 3], k: [Complex64; 3], h: f64| [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2]];
    let h = p.maturity / steps as f64;
    let mut y = [ZERO; 3];
    for step in 0..steps {
        let k1 = rhs(y);
        let k2 = rhs(axpy(y, k1, 0.5 * h));
        let k3 = rhs(axpy(y, k2, 0.5 * h));
        let k4 = rhs(axpy(y, k3, h));
        for i in 0..3 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !(y[2].norm() <= RICCATI_BLOWUP) {
            return Err(Error::Domain(format!(
                "Riccati solution blew up (|C| = {:e}) at time-to-go {}",
                y[2].norm(),
                (step + 1) as f64 * h
            )));
        }
    }
    Ok((u * p.s0.ln() + y[0] + y[1] * p.x0 + y[2] * p.x0 * p.x0).exp())
}

fn check_symmetric_domain(u: Complex64, w: Complex64) -> Result<()> {
    if u.re.abs() > 1e-14 || w.re > 1e-14 {
        return Err(Error::Domain(format!(
            "symmetric-kernel transform requires Re(u) = 0 and Re(w) <= 0, got u={u}, w={w}"
        )));
    }
    Ok(())
}

/// Spectral product for a symmetric kernel `K = sum sqrt(lambda_n) e_n e_n`
/// and `g0 = sum g_n e_n` (with `kappa = 0`):
///
/// ```text
/// exp((alpha + beta^2/2) sum g_n^2 / d_n) / prod sqrt(d_n),
/// d_n = 1 - 2 beta nu sqrt(lambda_n) - 2 alpha nu^2 lambda_n,
/// alpha = w + (u^2 - u)/2 - rho^2 u^2 / 2,  beta = rho u.
/// ```
pub fn symmetric_spectral_transform(
    lambdas: &[f64],
    g_coeffs: &[f64],
    nu: f64,
    rho: f64,
    u: Complex64,
    w: Complex64,
) -> Result<Complex64> {
    check_symmetric_domain(u, w)?;
    if lambdas.len() != g_coeffs.len() {
        return Err(Error::Dimension(format!(
            "{} eigenvalues and {} coefficients",
            lambdas.len(),
            g_coeffs.len()
        )));
    }
    if lambdas.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::Domain("eigenvalues must be nonnegative".into()));
    }
    let alpha = w + 0.5 * (u * u - u) - 0.5 * rho * rho * u * u;
    let beta = rho * u;
    let mut exponent = ZERO;
    let mut denom = ONE;
    for (&lam, &g) in lambdas.iter().zip(g_coeffs) {
        let d = 1.0 - 2.0 * beta * nu * lam.sqrt() - 2.0 * alpha * nu * nu * lam;
        exponent += (alpha + 0.5 * beta * beta) * g * g / d;
        denom *= principal_sqrt(d);
    }
    Ok(exponent.exp() / denom)
}

/// Operator formula `exp(<g, Psi g>) / det(Phi)^{1/2}` for a symmetric
/// kernel given as a quadrature matrix `k_op` (so `(K f)(t_i) ~ sum_j
/// k_op[i][j] f(t_j)`) with weight `weight` for the inner product, using the
/// sandwiched `Phi = (I - bK)(I - 2a Sigma~)(I - bK)`. The square root of the
/// determinant is the principal one.
pub fn symmetric_operator_transform(
    k_op: &RealMatrix,
    g: &[f64],
    weight: f64,
    nu: f64,
    rho: f64,
    u: Complex64,
    w: Complex64,
) -> Result<Complex64> {
    check_symmetric_domain(u, w)?;
    let n = k_op.rows();
    if !k_op.is_square() || g.len() != n {
        return Err(Error::Dimension("kernel matrix and mean vector disagree".into()));
    }
    let coeff = RiccatiCoefficients::new(u, w, 0.0, nu, rho);
    let (a, b) = (coeff.a, coeff.b);
    let k = k_op.to_complex();
    let id = ComplexSquareMatrix::identity(n);
    let m = id.sub(&k.scale(b));
    let m_lu = ComplexLu::factor(m.clone())?;
    let sigma = k_op.matmul(&k_op.transpose())?.to_complex().scale(Complex64::new(nu * nu, 0.0));
    // Sigma~ = M^{-1} Sigma M^{-T}; M is symmetric here
    let x = m_lu.solve_matrix(&sigma)?;
    let sigma_tilde = m_lu.solve_matrix(&x.transpose())?.transpose();
    let middle = id.sub(&sigma_tilde.scale(2.0 * a));
    let phi = m.matmul(&middle)?.matmul(&m)?;
    let middle_lu = ComplexLu::factor(middle)?;
    let gc: Vec<Complex64> = g.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let y = m_lu.solve_vec(&gc)?;
    let y = middle_lu.solve_vec(&y)?;
    let y = m_lu.solve_vec(&y)?;
    let quad: Complex64 = a * weight * g.iter().zip(&y).map(|(&gi, yi)| gi * yi).sum::<Complex64>();
    let det = ComplexLu::factor(phi)?.det();
    Ok(quad.exp() / principal_sqrt(det))
}
