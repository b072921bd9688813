//! Discretized Riccati operator `Psi`, the determinant operator `Phi` and
//! the exponent pair `(T/n g' Psi g, log det Phi)` on the uniform grid.
//!
//! With `M = I - b K` (unit lower triangular, so `det M = 1`) the adjusted
//! covariance is `M^{-1} Sigma M^{-T}` and
//!
//! ```text
//! Psi = a M^{-T} (I - 2 a dt Sigma~)^{-1} M^{-1} = a (M M^T - 2 a dt Sigma)^{-1}
//! det(I - 2 a dt Sigma~) = det(M M^T - 2 a dt Sigma)
//! ```
//!
//! so the hot path needs a single LU of `A = M M^T - 2 a dt Sigma`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::{build_k_matrix, build_sigma_t_matrix, DiscretizedModel, ModelConfig};
use crate::linalg::{ComplexLu, ComplexSquareMatrix, RealMatrix};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiCoefficients {
    pub a: Complex64,
    pub b: Complex64,
    /// `Re(a) <= -Im(b)^2 / (2 nu^2)`, under which `Phi` is invertible.
    pub well_posed: bool,
}

impl RiccatiCoefficients {
    /// `a = w + (u^2 - u) / 2`, `b = kappa + rho nu u`.
    pub fn new(u: Complex64, w: Complex64, kappa: f64, nu: f64, rho: f64) -> Self {
        let a = w + 0.5 * (u * u - u);
        let b = kappa + rho * nu * u;
        Self::from_ab(a, b, nu)
    }

    pub fn from_ab(a: Complex64, b: Complex64, nu: f64) -> Self {
        let well_posed = if nu == 0.0 {
            true
        } else {
            a.re <= -b.im * b.im / (2.0 * nu * nu) + 1e-12 * (1.0 + a.re.abs())
        };
        Self { a, b, well_posed }
    }
}

/// Solve `(I - b K) X = rhs` in place, row by row.
fn unit_lower_solve_rows(k: &RealMatrix, b: Complex64, x: &mut ComplexSquareMatrix) {
    let n = k.rows();
    let cols = x.cols();
    let mut acc = vec![ZERO; cols];
    for r in 1..n {
        acc.copy_from_slice(x.row(r));
        for (c, &kv) in k.row(r)[..r].iter().enumerate() {
            if kv == 0.0 {
                continue;
            }
            let f = b * kv;
            for (a, &xv) in acc.iter_mut().zip(x.row(c)) {
                *a += f * xv;
            }
        }
        x.row_mut(r).copy_from_slice(&acc);
    }
}

/// Solve `(I - b K^T) X = rhs` in place, row by row from the bottom.
fn unit_upper_solve_rows(k: &RealMatrix, b: Complex64, x: &mut ComplexSquareMatrix) {
    let n = k.rows();
    let cols = x.cols();
    let mut acc = vec![ZERO; cols];
    for r in (0..n.saturating_sub(1)).rev() {
        acc.copy_from_slice(x.row(r));
        for c in r + 1..n {
            let kv = k[(c, r)];
            if kv == 0.0 {
                continue;
            }
            let f = b * kv;
            for (a, &xv) in acc.iter_mut().zip(x.row(c)) {
                *a += f * xv;
            }
        }
        x.row_mut(r).copy_from_slice(&acc);
    }
}

/// `Sigma~ = (I - b K)^{-1} Sigma (I - b K^T)^{-1}`.
pub fn build_sigma_tilde(disc: &DiscretizedModel, b: Complex64) -> Result<ComplexSquareMatrix> {
    let mut x = disc.sigma.to_complex();
    unit_lower_solve_rows(&disc.k, b, &mut x);
    // Sigma~^T = M^{-1} X^T and Sigma~ is symmetric
    let mut y = x.transpose();
    unit_lower_solve_rows(&disc.k, b, &mut y);
    Ok(y)
}

/// `Phi = I - 2 a dt Sigma~`.
pub fn build_phi_matrix(disc: &DiscretizedModel, coeff: &RiccatiCoefficients) -> Result<ComplexSquareMatrix> {
    let st = build_sigma_tilde(disc, coeff.b)?;
    let c = 2.0 * coeff.a * disc.delta;
    Ok(ComplexSquareMatrix::identity(disc.n).sub(&st.scale(c)))
}

/// `Psi = a (I - b K^T)^{-1} Phi^{-1} (I - b K)^{-1}`, assembled factor by factor.
pub fn build_psi_matrix(disc: &DiscretizedModel, coeff: &RiccatiCoefficients) -> Result<ComplexSquareMatrix> {
    if !coeff.well_posed {
        log::warn!("Riccati coefficients a={}, b={} outside the well-posed domain", coeff.a, coeff.b);
    }
    if coeff.a == ZERO {
        return Ok(ComplexSquareMatrix::zeros(disc.n, disc.n));
    }
    let lu = ComplexLu::factor(build_phi_matrix(disc, coeff)?)?;
    let mut m_inv = ComplexSquareMatrix::identity(disc.n);
    unit_lower_solve_rows(&disc.k, coeff.b, &mut m_inv);
    let mut z = lu.solve_matrix(&m_inv)?;
    unit_upper_solve_rows(&disc.k, coeff.b, &mut z);
    Ok(z.scale(coeff.a))
}

/// `(T / n) g' Psi g`.
pub fn quadratic_form(g: &[f64], psi: &ComplexSquareMatrix, maturity: f64, n: usize) -> Result<Complex64> {
    if psi.rows() != g.len() || psi.cols() != g.len() || n != g.len() {
        return Err(Error::Dimension(format!(
            "vector of length {} against a {}x{} matrix on a grid of {n}",
            g.len(),
            psi.rows(),
            psi.cols()
        )));
    }
    let mut acc = ZERO;
    for (i, &gi) in g.iter().enumerate() {
        if gi == 0.0 {
            continue;
        }
        let row: Complex64 = psi.row(i).iter().zip(g).map(|(p, &gj)| p * gj).sum();
        acc += gi * row;
    }
    Ok(acc * (maturity / n as f64))
}

/// Model matrices prepared for repeated evaluation of the exponent pair.
#[derive(Debug, Clone)]
pub struct OperatorCache {
    n: usize,
    delta: f64,
    /// `K + K^T`
    k_sym: RealMatrix,
    /// `K K^T`
    k_outer: RealMatrix,
    sigma: RealMatrix,
    g: Vec<f64>,
}

impl OperatorCache {
    pub fn new(disc: &DiscretizedModel) -> Result<Self> {
        let kt = disc.k.transpose();
        let k_outer = disc.k.matmul(&kt)?;
        let mut k_sym = disc.k.clone();
        for r in 0..disc.n {
            for c in 0..disc.n {
                k_sym[(r, c)] += kt[(r, c)];
            }
        }
        Ok(Self {
            n: disc.n,
            delta: disc.delta,
            k_sym,
            k_outer,
            sigma: disc.sigma.clone(),
            g: disc.g.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `A = I - b (K + K^T) + b^2 K K^T - 2 a dt Sigma`.
    fn congruent_matrix(&self, coeff: &RiccatiCoefficients) -> ComplexSquareMatrix {
        let b = coeff.b;
        let b2 = b * b;
        let c = 2.0 * coeff.a * self.delta;
        let ks = self.k_sym.as_slice();
        let ko = self.k_outer.as_slice();
        let sg = self.sigma.as_slice();
        let n = self.n;
        ComplexSquareMatrix::from_fn(n, n, |i, j| {
            let idx = i * n + j;
            let mut v = b2 * ko[idx] - b * ks[idx] - c * sg[idx];
            if i == j {
                v += ONE;
            }
            v
        })
    }

    /// `((T/n) g' Psi g, principal log det Phi)`.
    pub fn log_value(&self, coeff: &RiccatiCoefficients) -> Result<(Complex64, Complex64)> {
        if coeff.a == ZERO {
            return Ok((ZERO, ZERO));
        }
        if !coeff.well_posed {
            log::warn!("Riccati coefficients a={}, b={} outside the well-posed domain", coeff.a, coeff.b);
        }
        let lu = ComplexLu::factor(self.congruent_matrix(coeff))?;
        let rhs: Vec<Complex64> = self.g.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let y = lu.solve_vec(&rhs)?;
        let gy: Complex64 = self.g.iter().zip(&y).map(|(&gi, yi)| gi * yi).sum();
        Ok((coeff.a * self.delta * gy, lu.log_det()))
    }
}

/// `((T/n) g' Psi g, principal log det Phi)` for a single evaluation.
pub fn transform_log_value(
    disc: &DiscretizedModel,
    coeff: &RiccatiCoefficients,
) -> Result<(Complex64, Complex64)> {
    if coeff.a == ZERO {
        return Ok((ZERO, ZERO));
    }
    OperatorCache::new(disc)?.log_value(coeff)
}

/// `phi_0 = -int_0^T Tr(Psi_s dSigma_s/ds) ds`, which equals
/// `-1/2 log det Phi` when both are computed on the same grid.
///
/// The time integral uses `m` cells with `Psi_s` frozen at each midpoint
/// and `dSigma_s/ds` integrated exactly over the cell
/// (`Sigma_lo - Sigma_hi`), so the rough-kernel singularity at `s = t_r`
/// never has to be sampled.
pub fn phi_exponent_via_trace(
    model: &ModelConfig,
    n: usize,
    m: usize,
    coeff: &RiccatiCoefficients,
) -> Result<Complex64> {
    if m < 10 {
        return Err(Error::Domain(format!("trace integral needs m >= 10 nodes, got {m}")));
    }
    model.validate()?;
    if coeff.a == ZERO || model.nu == 0.0 {
        return Ok(ZERO);
    }
    let maturity = model.maturity;
    let k = build_k_matrix(&model.kernel, n, maturity)?;
    let delta = maturity / n as f64;
    let h = maturity / m as f64;
    let sigma_at = |t: f64| build_sigma_t_matrix(&model.kernel, n, maturity, model.nu, t.min(maturity));
    let c = 2.0 * coeff.a * delta;
    let b = coeff.b;

    let mut lower = sigma_at(0.0)?;
    let mut total = ZERO;
    for cell in 0..m {
        let mid = (cell as f64 + 0.5) * h;
        let upper = sigma_at((cell + 1) as f64 * h)?;
        let sigma_mid = sigma_at(mid)?;

        // kernel restricted to integration variables beyond mid
        let k_t = RealMatrix::from_fn(n, n, |r, col| {
            if col as f64 * delta >= mid {
                k[(r, col)]
            } else {
                0.0
            }
        });
        let mut a_mat = ComplexSquareMatrix::from_fn(n, n, |i, j| {
            let mut v = -c * sigma_mid[(i, j)];
            if i == j {
                v += ONE;
            }
            v
        });
        if b != ZERO {
            let outer = k_t.matmul(&k_t.transpose())?;
            for i in 0..n {
                for j in 0..n {
                    a_mat[(i, j)] += b * b * outer[(i, j)] - b * (k_t[(i, j)] + k_t[(j, i)]);
                }
            }
        }
        let d = ComplexSquareMatrix::from_fn(n, n, |i, j| Complex64::new(lower[(i, j)] - upper[(i, j)], 0.0));
        let lu = ComplexLu::factor(a_mat)?;
        let tr = lu.solve_matrix(&d)?.trace();
        total += coeff.a * delta * tr;
        lower = upper;
    }
    Ok(total)
}
