//! Monte Carlo oracle with exact Gaussian sampling of the volatility
//! on the grid.
//!
//! The noise `eps_r = nu int_0^{t_r} K(t_r, s) dW_s` and the Brownian
//! increments are drawn jointly: `Cov(eps_r, dW_c) = nu K^n[r][c]` and
//! `Var(dW_c) = Delta`. The joint factor is built blockwise, increments
//! first, so only the Schur complement of `eps` needs a Cholesky factor.

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{DiscretizedModel, ModelConfig};
use crate::linalg::{cholesky_lower, RealMatrix};
use crate::specfun::norm_inv_cdf;

/// Paths per independent random stream.
const BLOCK: usize = 2048;
const JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationPlan {
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl SimulationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 2 {
            return Err(Error::Config(format!("need at least 2 time steps, got {}", self.n_steps)));
        }
        if self.n_paths < 2 {
            return Err(Error::Config(format!("need at least 2 paths, got {}", self.n_paths)));
        }
        if self.antithetic && self.n_paths % 2 != 0 {
            return Err(Error::Config(format!(
                "antithetic sampling needs an even path count, got {}",
                self.n_paths
            )));
        }
        Ok(())
    }
}

/// One simulated path: `X` at the left grid points, `ln S_T` and the left
/// Riemann sum of `X^2`. `log_s_path` holds `ln S` at all `n + 1` grid
/// points including `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub x: Vec<f64>,
    pub log_s: f64,
    pub int_x2: f64,
    pub log_s_path: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    pub x: &'a [f64],
    pub log_s: f64,
    pub int_x2: f64,
    pub log_s_path: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.stderr, self.mean + 1.96 * self.stderr)
    }

    pub fn contains(&self, value: f64) -> bool {
        let (lo, hi) = self.ci95();
        lo <= value && value <= hi
    }
}

/// Running mean and sum of squared deviations per component.
#[derive(Debug, Clone)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, sample: &[f64]) {
        self.count += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(sample) {
            let d = v - *m;
            *m += d / self.count;
            *s += d * (v - *m);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0.0 {
            return;
        }
        let total = self.count + other.count;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.count / total;
            self.m2[i] += other.m2[i] + d * d * self.count * other.count / total;
        }
        self.count = total;
    }

    fn estimates(&self) -> Vec<Estimate> {
        self.mean
            .iter()
            .zip(&self.m2)
            .map(|(&mean, &m2)| Estimate {
                mean,
                stderr: if self.count > 1.0 {
                    (m2 / (self.count - 1.0) / self.count).sqrt()
                } else {
                    0.0
                },
            })
            .collect()
    }
}

fn uniform_open(rng: &mut Xoshiro256PlusPlus) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Shared read-only state for path generation at one maturity.
#[derive(Debug, Clone)]
pub struct PathSimulator {
    n: usize,
    delta: f64,
    ln_s0: f64,
    rho: f64,
    g: Vec<f64>,
    /// `kappa K^n` when the drift is present.
    drift: Option<RealMatrix>,
    /// Rows `1..n` of `nu K^n / sqrt(Delta)`.
    cross: RealMatrix,
    /// Cholesky factor of `Sigma^n[1.., 1..] - nu^2 K K^T / Delta`.
    schur: RealMatrix,
}

impl PathSimulator {
    pub fn new(model: &ModelConfig, n_steps: usize) -> Result<Self> {
        let disc = DiscretizedModel::new(model, n_steps)?;
        let n = disc.n;
        let delta = disc.delta;
        let sd = delta.sqrt();
        let m = n - 1;
        let cross = RealMatrix::from_fn(m, n, |r, c| model.nu * disc.k[(r + 1, c)] / sd);
        let mut schur = RealMatrix::from_fn(m, m, |r, c| {
            let kk: f64 = (0..n).map(|j| cross[(r, j)] * cross[(c, j)]).sum();
            disc.sigma[(r + 1, c + 1)] - kk
        });
        let scale = (0..m).map(|i| disc.sigma[(i + 1, i + 1)]).fold(0.0f64, f64::max);
        let schur = match cholesky_lower(&schur) {
            Ok(l) => l,
            // no noise at all
            Err(_) if scale == 0.0 => RealMatrix::zeros(m, m),
            Err(_) => {
                for i in 0..m {
                    schur[(i, i)] += JITTER * scale;
                }
                cholesky_lower(&schur).map_err(|e| {
                    Error::Factorization(format!("joint noise covariance after jitter: {e}"))
                })?
            }
        };
        let drift = (model.kappa != 0.0).then(|| disc.k.map(|v| model.kappa * v));
        Ok(Self {
            n,
            delta,
            ln_s0: model.s0.ln(),
            rho: model.rho,
            g: disc.g,
            drift,
            cross,
            schur,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n
    }

    /// Normals per path: `n` increments, `n - 1` noise factors, `n`
    /// orthogonal increments.
    fn normals_per_path(&self) -> usize {
        3 * self.n - 1
    }

    /// Builds the path for normals `z` scaled by `sign` into `x`.
    fn path(&self, z: &[f64], sign: f64, x: &mut [f64], ls: &mut [f64]) -> (f64, f64) {
        let n = self.n;
        let (z_w, rest) = z.split_at(n);
        let (z_eps, z_perp) = rest.split_at(n - 1);
        x[0] = self.g[0];
        for r in 1..n {
            let cross: f64 = self.cross.row(r - 1)[..r].iter().zip(z_w).map(|(a, b)| a * b).sum();
            let own: f64 = self.schur.row(r - 1)[..r].iter().zip(z_eps).map(|(a, b)| a * b).sum();
            x[r] = self.g[r] + sign * (cross + own);
        }
        if let Some(drift) = &self.drift {
            for r in 1..n {
                let acc: f64 = drift.row(r)[..r].iter().zip(&x[..r]).map(|(a, b)| a * b).sum();
                x[r] += acc;
            }
        }
        let sd = self.delta.sqrt();
        let perp = (1.0 - self.rho * self.rho).max(0.0).sqrt();
        let mut log_s = self.ln_s0;
        let mut int_x2 = 0.0;
        ls[0] = log_s;
        for i in 0..n {
            let xi = x[i];
            let dw = sign * sd * (self.rho * z_w[i] + perp * z_perp[i]);
            log_s += xi * dw - 0.5 * xi * xi * self.delta;
            int_x2 += xi * xi * self.delta;
            ls[i + 1] = log_s;
        }
        (log_s, int_x2)
    }

    fn block_rng(seed: u64, block: usize) -> Xoshiro256PlusPlus {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        for _ in 0..block {
            rng.jump();
        }
        rng
    }

    /// Visits every path (in antithetic pairs when enabled) block by block;
    /// `visit` receives one or two paths and the block index.
    fn for_each_block<S, F>(&self, plan: &SimulationPlan, init: impl Fn() -> S + Sync, visit: F) -> Result<Vec<S>>
    where
        S: Send,
        F: Fn(&mut S, &[PathView]) + Sync,
    {
        plan.validate()?;
        if plan.n_steps != self.n {
            return Err(Error::Config(format!(
                "plan has {} steps but the simulator was built for {}",
                plan.n_steps, self.n
            )));
        }
        let blocks = plan.n_paths.div_ceil(BLOCK);
        Ok((0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = Self::block_rng(plan.seed, b);
                let paths = (plan.n_paths - b * BLOCK).min(BLOCK);
                let mut state = init();
                let mut z = vec![0.0; self.normals_per_path()];
                let mut xa = vec![0.0; self.n];
                let mut xb = vec![0.0; self.n];
                let mut la = vec![0.0; self.n + 1];
                let mut lb = vec![0.0; self.n + 1];
                let groups = if plan.antithetic { paths / 2 } else { paths };
                for _ in 0..groups {
                    for v in z.iter_mut() {
                        *v = norm_inv_cdf(uniform_open(&mut rng));
                    }
                    let (ls, ix) = self.path(&z, 1.0, &mut xa, &mut la);
                    let first = PathView {
                        x: &xa,
                        log_s: ls,
                        int_x2: ix,
                        log_s_path: &la,
                    };
                    if plan.antithetic {
                        let (ls2, ix2) = self.path(&z, -1.0, &mut xb, &mut lb);
                        let second = PathView {
                            x: &xb,
                            log_s: ls2,
                            int_x2: ix2,
                            log_s_path: &lb,
                        };
                        visit(&mut state, &[first, second]);
                    } else {
                        visit(&mut state, &[first]);
                    }
                }
                state
            })
            .collect())
    }

    /// Mean and standard error of a vector-valued path functional;
    /// antithetic pairs are averaged into one sample.
    pub fn estimate<F>(&self, plan: &SimulationPlan, dim: usize, f: F) -> Result<Vec<Estimate>>
    where
        F: Fn(&PathView, &mut [f64]) + Sync,
    {
        let blocks = self.for_each_block(plan, || Moments::new(dim), |acc, views| {
            let mut sample = vec![0.0; dim];
            let mut buf = vec![0.0; dim];
            for v in views {
                f(v, &mut buf);
                for (s, b) in sample.iter_mut().zip(&buf) {
                    *s += b / views.len() as f64;
                }
            }
            acc.push(&sample);
        })?;
        let mut total = Moments::new(dim);
        for b in &blocks {
            total.merge(b);
        }
        Ok(total.estimates())
    }

    pub fn paths(&self, plan: &SimulationPlan) -> Result<Vec<PathSample>> {
        let blocks = self.for_each_block(plan, Vec::new, |out: &mut Vec<PathSample>, views| {
            out.extend(views.iter().map(|v| PathSample {
                x: v.x.to_vec(),
                log_s: v.log_s,
                int_x2: v.int_x2,
                log_s_path: v.log_s_path.to_vec(),
            }));
        })?;
        Ok(blocks.into_iter().flatten().collect())
    }
}

pub fn simulate_paths(model: &ModelConfig, plan: &SimulationPlan) -> Result<Vec<PathSample>> {
    PathSimulator::new(model, plan.n_steps)?.paths(plan)
}

/// Call prices for several strikes from one set of paths at `maturity`.
pub fn mc_call_prices(model: &ModelConfig, plan: &SimulationPlan, strikes: &[f64], maturity: f64) -> Result<Vec<Estimate>> {
    if strikes.iter().any(|&k| !(k > 0.0)) {
        return Err(Error::Domain("strikes must be positive".into()));
    }
    let sim = PathSimulator::new(&model.with_maturity(maturity), plan.n_steps)?;
    sim.estimate(plan, strikes.len(), |v, out| {
        let s = v.log_s.exp();
        for (o, &k) in out.iter_mut().zip(strikes) {
            *o = (s - k).max(0.0);
        }
    })
}

pub fn mc_call_price(model: &ModelConfig, plan: &SimulationPlan, strike: f64, maturity: f64) -> Result<Estimate> {
    Ok(mc_call_prices(model, plan, &[strike], maturity)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformEstimate {
    pub value: Complex64,
    /// Standard errors of the real and imaginary parts.
    pub stderr: Complex64,
}

/// Sample mean of `exp(u ln S_T + w int X^2)`.
pub fn mc_joint_transform(model: &ModelConfig, plan: &SimulationPlan, u: Complex64, w: Complex64) -> Result<TransformEstimate> {
    let admissible = u.re >= -1e-14 && u.re <= 1.0 + 1e-14 && w.re <= 1e-14;
    if !admissible {
        return Err(Error::Domain(format!("inadmissible (u, w) = ({u}, {w})")));
    }
    let sim = PathSimulator::new(model, plan.n_steps)?;
    let est = sim.estimate(plan, 2, |v, out| {
        let z = (u * v.log_s + w * v.int_x2).exp();
        out[0] = z.re;
        out[1] = z.im;
    })?;
    Ok(TransformEstimate {
        value: Complex64::new(est[0].mean, est[1].mean),
        stderr: Complex64::new(est[0].stderr, est[1].stderr),
    })
}
