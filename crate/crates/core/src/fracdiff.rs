//! Expansion coefficients of the fractional-differencing operator.
//!
//! `(1 - B)^d = 1 - sum_{i>=1} pi_i B^i` with
//! `pi_i = d Gamma(i - d) / (Gamma(1 - d) Gamma(i + 1))`.
//!
//! The coefficients are produced by the ratio recurrence
//! `pi_1 = d`, `pi_{i+1} = pi_i (i - d) / (i + 1)`, which never evaluates a
//! Gamma function and is exact up to rounding at any truncation length.
//!
//! Truncation: `pi_i` decays like `i^{-1-d}`, so the omitted tail mass after
//! `k` terms is `1 - sum_{i<=k} pi_i ~ k^{-d} / Gamma(1 - d)`. For `d >= 0.3`
//! and the default `k = 1000` the tail is roughly `0.1` in total mass, but the
//! likelihood only sees it weighted by squared returns more than `k` steps in
//! the past, which the presample convention makes constant.

use crate::error::{Error, Result};

/// Default truncation length of the expansion used by the variance filter.
pub const DEFAULT_K_MAX: usize = 1000;

/// Truncated coefficient sequence `pi_1..pi_k` (stored zero-based).
#[derive(Debug, Clone, PartialEq)]
pub struct FracDiffCoeffs {
    pub d: f64,
    pub pi: Vec<f64>,
    /// `d pi_i / d d`, present when built with [`pi_coeffs_dd`].
    pub dpi_dd: Option<Vec<f64>>,
}

impl FracDiffCoeffs {
    pub fn k_max(&self) -> usize {
        self.pi.len()
    }

    /// `pi_i` with one-based index, zero outside `1..=k_max`.
    pub fn get(&self, i: usize) -> f64 {
        if i == 0 || i > self.pi.len() {
            0.0
        } else {
            self.pi[i - 1]
        }
    }

    pub fn partial_sum(&self) -> f64 {
        self.pi.iter().sum()
    }
}

fn check_args(d: f64, k_max: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::Domain(format!("memory parameter d = {d} outside [0, 1]")));
    }
    if k_max == 0 {
        return Err(Error::Domain("truncation length k_max must be >= 1".into()));
    }
    Ok(())
}

/// Coefficients `pi_1..pi_{k_max}` of `(1 - B)^d`.
pub fn pi_coeffs(d: f64, k_max: usize) -> Result<FracDiffCoeffs> {
    check_args(d, k_max)?;
    let mut pi = Vec::with_capacity(k_max);
    let mut cur = d;
    pi.push(cur);
    for i in 1..k_max {
        let i = i as f64;
        cur *= (i - d) / (i + 1.0);
        pi.push(cur);
    }
    Ok(FracDiffCoeffs { d, pi, dpi_dd: None })
}

/// Coefficients together with their derivative in `d`.
///
/// Only defined on the open interval `0 < d < 1`, where the model keeps `d`.
pub fn pi_coeffs_dd(d: f64, k_max: usize) -> Result<FracDiffCoeffs> {
    check_args(d, k_max)?;
    if d <= 0.0 || d >= 1.0 {
        return Err(Error::Domain(format!(
            "derivative of the expansion requires 0 < d < 1, got d = {d}"
        )));
    }
    let mut out = pi_coeffs(d, k_max)?;
    let mut dpi = Vec::with_capacity(k_max);
    let mut cur = 1.0;
    dpi.push(cur);
    for i in 1..k_max {
        let fi = i as f64;
        cur = cur * (fi - d) / (fi + 1.0) - out.pi[i - 1] / (fi + 1.0);
        dpi.push(cur);
    }
    out.dpi_dd = Some(dpi);
    Ok(out)
}
