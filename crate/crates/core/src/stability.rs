//! Second-moment bound for the smooth-transition model.
//!
//! With `H_t = (E h_t, E h1_t, E h2_t, E h_{t-1})'` the expected variances obey
//! `H_t <= A + C H_{t-1}`, where
//!
//! ```text
//!     | |b2-b1+pi1-a2|+a2   a1      b1   s |        | tau |
//! C = | 0                   a1+a2   0    0 |    A = | a0  |
//!     | b2-b1+pi1           0       b1   s |        | b0  |
//!     | 1                   0       0    0 |        | 0   |
//! ```
//!
//! `tau = a0 + |b0 - a0|` and `s = sum_{i>=0} (pi_{i+2} - b2 pi_{i+1})`, the lag
//! polynomial collapsed to its coefficient mass (evaluated at `B = 1`). If
//! `rho(C) < 1` the bound converges to `(I - C)^{-1} A`.
//!
//! For `0 < d < 1` the third row of `C` sums to one and `rho(C) >= 1` for
//! every admissible parameter, so the condition is only met when `d = 0`.

use nalgebra::{DMatrix, Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::fracdiff::pi_coeffs;
use crate::model::Theta;

/// Truncation length for the summed tail of the lag polynomial.
pub const DEFAULT_TAIL_K_MAX: usize = 100_000;

/// `stable` requires `rho < 1 - STABILITY_MARGIN`; the spectral radius is
/// only resolved to about this accuracy.
pub const STABILITY_MARGIN: f64 = 1e-8;

const POWER_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    pub c: [[f64; 4]; 4],
    /// Closed form `(1 - d) - b2` (zero when `d = 0`), used inside `c`.
    pub tail_sum: f64,
    /// The same sum truncated after `k_max` coefficients.
    pub tail_sum_truncated: f64,
    /// Upper bound on `|tail_sum - tail_sum_truncated|`.
    pub tail_bound: f64,
    pub k_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub theta: Theta,
    pub rho: f64,
    pub stable: bool,
    pub c: [[f64; 4]; 4],
    pub a: [f64; 4],
    pub tau: f64,
    pub tail_sum: f64,
    pub tail_sum_truncated: f64,
    pub tail_bound: f64,
    /// `(I - C)^{-1} A`, present when stable.
    pub bound: Option<[f64; 4]>,
    pub method: SpectralMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralMethod {
    PowerIteration,
    DenseEigen,
}

/// `1 - sum_{j<=k} pi_j = Gamma(k+1-d) / (Gamma(1-d) Gamma(k+1))`.
fn pi_tail_mass(d: f64, k: usize) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    if d >= 1.0 {
        return 0.0;
    }
    let k = k as f64;
    (ln_gamma(k + 1.0 - d) - ln_gamma(1.0 - d) - ln_gamma(k + 1.0)).exp()
}

pub fn build_c(theta: &Theta, k_max: usize) -> Result<CMatrix> {
    theta.validate()?;
    if k_max < 2 {
        return Err(Error::Domain(format!("k_max must be >= 2, got {k_max}")));
    }
    let Theta { a1, a2, b1, b2, d, .. } = *theta;
    let pi = pi_coeffs(d, k_max)?;
    let pi1 = pi.get(1);

    // sum_{j=2}^{K} pi_j - b2 sum_{j=1}^{K-1} pi_j
    let mut upper = 0.0;
    let mut lower = 0.0;
    for j in 1..=k_max {
        let p = pi.get(j);
        if j >= 2 {
            upper += p;
        }
        if j < k_max {
            lower += p;
        }
    }
    let tail_sum_truncated = upper - b2 * lower;
    let tail_sum = if d == 0.0 { 0.0 } else { (1.0 - d) - b2 };
    let tail_bound = if d == 0.0 {
        0.0
    } else {
        // plus room for the rounding of the k_max-term sums
        (pi_tail_mass(d, k_max) + b2 * pi_tail_mass(d, k_max - 1)) * (1.0 + 1e-10) + k_max as f64 * f64::EPSILON
    };

    let c31 = b2 - b1 + pi1;
    let c = [
        [(c31 - a2).abs() + a2, a1, b1, tail_sum],
        [0.0, a1 + a2, 0.0, 0.0],
        [c31, 0.0, b1, tail_sum],
        [1.0, 0.0, 0.0, 0.0],
    ];
    Ok(CMatrix { c, tail_sum, tail_sum_truncated, tail_bound, k_max })
}

/// Largest eigenvalue modulus.
pub fn spectral_radius<const N: usize>(m: &[[f64; N]; N]) -> Result<f64> {
    spectral_radius_with_method(m).map(|(r, _)| r)
}

/// Power iteration; falls back to a dense Schur decomposition when the
/// iterate does not settle (complex or equal-modulus dominant eigenvalues,
/// defective or nilpotent matrices).
pub fn spectral_radius_with_method<const N: usize>(m: &[[f64; N]; N]) -> Result<(f64, SpectralMethod)> {
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    if N == 0 {
        return Ok((0.0, SpectralMethod::DenseEigen));
    }
    match power_iteration(m) {
        Some(r) => Ok((r, SpectralMethod::PowerIteration)),
        None => Ok((dense_spectral_radius(m), SpectralMethod::DenseEigen)),
    }
}

fn matvec<const N: usize>(m: &[[f64; N]; N], x: &[f64; N]) -> [f64; N] {
    let mut y = [0.0; N];
    for (yi, row) in y.iter_mut().zip(m) {
        *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
    y
}

fn sup<const N: usize>(x: &[f64; N]) -> f64 {
    x.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn power_iteration<const N: usize>(m: &[[f64; N]; N]) -> Option<f64> {
    let scale = m.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Some(0.0);
    }
    let mut x = [0.0; N];
    for (i, xi) in x.iter_mut().enumerate() {
        *xi = 1.0 + 0.1 * (i as f64 + 1.0).sqrt();
    }
    for _ in 0..POWER_MAX_ITER {
        let y = matvec(m, &x);
        let norm = sup(&y);
        if norm <= 1e-300 * scale {
            return None;
        }
        let mut next = y;
        next.iter_mut().for_each(|v| *v /= norm);
        let same = (0..N).map(|i| (next[i] - x[i]).abs()).fold(0.0, f64::max);
        let flip = (0..N).map(|i| (next[i] + x[i]).abs()).fold(0.0, f64::max);
        x = next;
        if same.min(flip) < 1e-13 {
            // residual check with the sign-corrected eigenvalue
            let lambda = if same <= flip { norm } else { -norm };
            let mx = matvec(m, &x);
            let resid = (0..N).map(|i| (mx[i] - lambda * x[i]).abs()).fold(0.0, f64::max);
            return (resid <= 1e-11 * scale).then_some(norm);
        }
    }
    None
}

fn dense_spectral_radius<const N: usize>(m: &[[f64; N]; N]) -> f64 {
    let mat = DMatrix::from_fn(N, N, |i, j| m[i][j]);
    mat.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn check_stability(theta: &Theta, k_max: usize) -> Result<StabilityReport> {
    let cm = build_c(theta, k_max)?;
    let (rho, method) = spectral_radius_with_method(&cm.c)?;
    let tau = theta.a0 + (theta.b0 - theta.a0).abs();
    let a = [tau, theta.a0, theta.b0, 0.0];
    let stable = rho < 1.0 - STABILITY_MARGIN;
    let bound = if stable {
        let c = Matrix4::from_fn(|i, j| cm.c[i][j]);
        let lhs = Matrix4::identity() - c;
        let sol = lhs
            .lu()
            .solve(&Vector4::from(a))
            .ok_or_else(|| Error::Numerical("I - C is singular".into()))?;
        Some([sol[0], sol[1], sol[2], sol[3]])
    } else {
        None
    };
    Ok(StabilityReport {
        theta: *theta,
        rho,
        stable,
        c: cm.c,
        a,
        tau,
        tail_sum: cm.tail_sum,
        tail_sum_truncated: cm.tail_sum_truncated,
        tail_bound: cm.tail_bound,
        bound,
        method,
    })
}
