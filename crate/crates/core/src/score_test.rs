//! Lagrange-multiplier test of `H0: gamma = 0` against a smooth transition.
//!
//! Everything is evaluated at the restricted estimate `(eta~, 0)`, where
//! `w_t = 1/2` and `dh_t/dgamma = -(z_t / 4)(h2_t - h1_t)`:
//!
//! ```text
//! S     = T^{-1/2} sum_t (1 - y_t^2/h_t) h_t^{-1} dh_t/dgamma
//! kappa = T^{-1} sum_t (y_t^2/h_t - 1)^2
//! Q     = T^{-1} sum_t h_t^{-2} (dh_t/dgamma)^2
//! R     = T^{-1} sum_t h_t^{-2} (dh_t/dgamma) (dh_t/deta)
//! J     = T^{-1} sum_t h_t^{-2} (dh_t/deta) (dh_t/deta)'
//! psi   = S^2 / (kappa (Q - R' J^{-1} R))
//! ```
//!
//! `psi` is asymptotically chi-squared with one degree of freedom. Only the
//! parameters that were estimated under the null enter `eta`; a `b2` held
//! fixed during the restricted fit is left out of `R` and `J`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::estimate::{evaluate, fit, FitKind, FitOptions, FitResult};
use crate::model::{FilterInit, Theta, TransitionSpec, PARAM_NAMES};

/// Condition number of `J` above which the statistic is reported as degenerate.
pub const MAX_CONDITION: f64 = 1e12;

/// `P(chi2_1 > x) = erfc(sqrt(x / 2))`.
pub fn chi2_1_pvalue(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("chi-square statistic must be >= 0, got {x}")));
    }
    Ok(erfc((0.5 * x).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTestResult {
    pub psi_s: f64,
    /// `None` when the Schur complement or `J` is degenerate.
    pub p_value: Option<f64>,
    pub degenerate: bool,
    pub eta_tilde: Theta,
    pub spec: TransitionSpec,
    pub s: f64,
    pub kappa: f64,
    pub q: f64,
    pub r: Vec<f64>,
    pub j: Vec<Vec<f64>>,
    pub condition_j: f64,
    /// `Q - R' J^{-1} R`
    pub schur: f64,
    /// Names of the `eta` components in `r` and `j`.
    pub eta_names: Vec<String>,
    pub n_obs: usize,
}

impl ScoreTestResult {
    /// Rejects `H0` at `level` when the p-value is below it.
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value.is_some_and(|p| p < level)
    }
}

/// Score statistic for `H0: gamma = 0` at a restricted fit.
///
/// `null_fit` must be a [`FitKind::NullHalfWeight`] fit on `y`; `spec` is the
/// transition variable of the alternative.
pub fn score_statistic(null_fit: &FitResult, spec: &TransitionSpec, y: &[f64]) -> Result<ScoreTestResult> {
    if null_fit.fit_kind != FitKind::NullHalfWeight {
        return Err(Error::Config("score test needs a NullHalfWeight fit".into()));
    }
    if spec.is_fixed_weight() {
        return Err(Error::Config("score test needs a logistic transition variable".into()));
    }
    if y.len() != null_fit.n_obs {
        return Err(Error::Domain("series length differs from the fitted one".into()));
    }
    let free: Vec<usize> = (0..7).filter(|&i| !(i == 5 && null_fit.fixed_b2.is_some())).collect();
    score_statistic_at(&null_fit.theta_hat, spec, &null_fit.init, y, null_fit.k_max, &free)
}

/// Score statistic at a given restricted point, with `free` listing the
/// indices of the estimated `eta` components (subset of `0..7`).
pub fn score_statistic_at(
    eta: &Theta,
    spec: &TransitionSpec,
    init: &FilterInit,
    y: &[f64],
    k_max: usize,
    free: &[usize],
) -> Result<ScoreTestResult> {
    if free.iter().any(|&i| i >= 7) {
        return Err(Error::Domain("eta indices must be below 7".into()));
    }
    let theta = Theta { gamma: 0.0, ..*eta };
    let e = evaluate(&theta, spec, init, y, k_max, true)?;
    let dh = e.dh.expect("gradient requested");
    let n = y.len() as f64;
    let m = free.len();

    let mut s = 0.0;
    let mut kappa = 0.0;
    let mut q = 0.0;
    let mut r = DVector::<f64>::zeros(m);
    let mut j = DMatrix::<f64>::zeros(m, m);
    // rows dh_t/h_t over (eta, gamma)
    let mut g = DMatrix::<f64>::zeros(y.len(), m + 1);
    for (t, (&h, &yt)) in e.path.h.iter().zip(y).enumerate() {
        for (a, &ia) in free.iter().enumerate() {
            g[(t, a)] = dh[t][ia] / h;
        }
        g[(t, m)] = dh[t][7] / h;
        let ratio = yt * yt / h;
        let dg = dh[t][7];
        s += (1.0 - ratio) / h * dg;
        kappa += (ratio - 1.0) * (ratio - 1.0);
        let inv_h2 = 1.0 / (h * h);
        q += inv_h2 * dg * dg;
        for (a, &ia) in free.iter().enumerate() {
            let da = dh[t][ia];
            r[a] += inv_h2 * dg * da;
            for (b, &ib) in free.iter().enumerate().skip(a) {
                j[(a, b)] += inv_h2 * da * dh[t][ib];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            j[(a, b)] = j[(b, a)];
        }
    }
    s /= n.sqrt();
    kappa /= n;
    q /= n;
    r /= n;
    j /= n;

    let eig = j.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(v.abs())));
    let condition_j = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if j.clone().cholesky().is_none() || y.len() <= m {
        return Err(Error::Numerical(format!("J is not positive definite (condition number {condition_j:.3e})")));
    }
    // Q - R'J^{-1}R is the mean squared residual of the gamma column after
    // projecting on the eta columns: the last diagonal entry of the QR factor
    // gives it without squaring the condition number of J.
    let rr = g.qr().r();
    let schur = rr[(m, m)] * rr[(m, m)] / n;

    let degenerate = !(schur > 0.0) || condition_j > MAX_CONDITION || !(kappa > 0.0);
    let psi_s = if schur > 0.0 && kappa > 0.0 { s * s / (kappa * schur) } else { f64::NAN };
    let p_value = if degenerate { None } else { Some(chi2_1_pvalue(psi_s)?) };

    Ok(ScoreTestResult {
        psi_s,
        p_value,
        degenerate,
        eta_tilde: theta,
        spec: *spec,
        s,
        kappa,
        q,
        r: r.iter().copied().collect(),
        j: (0..m).map(|a| (0..m).map(|b| j[(a, b)]).collect()).collect(),
        condition_j,
        schur,
        eta_names: free.iter().map(|&i| PARAM_NAMES[i].to_string()).collect(),
        n_obs: y.len(),
    })
}

/// Fits the restricted model and computes the statistic.
pub fn score_test(y: &[f64], spec: &TransitionSpec, opts: &FitOptions) -> Result<(FitResult, ScoreTestResult)> {
    let null = fit(y, spec, FitKind::NullHalfWeight, opts)?;
    let res = score_statistic(&null, spec, y)?;
    Ok((null, res))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pvalue_edges() {
        assert_eq!(chi2_1_pvalue(0.0).unwrap(), 1.0);
        // high-precision values of erfc(sqrt(x/2))
        let table = [
            (0.1, 0.751_829_634_045_849_3),
            (1.0, 0.317_310_507_862_914_1),
            (3.8415, 0.049_998_772_071_222_27),
            (10.0, 0.001_565_402_258_002_549_7),
            (30.0, 4.320_463_057_827_497e-8),
            (50.0, 1.537_459_794_428_035e-12),
        ];
        for (x, p) in table {
            assert!((chi2_1_pvalue(x).unwrap() - p).abs() < 1e-10, "x = {x}");
        }
        assert!((chi2_1_pvalue(3.841458820694124).unwrap() - 0.05).abs() < 1e-10);
        assert!(chi2_1_pvalue(5.535).unwrap() < 0.05);
        // the quoted 3.86 sits just inside the rejection region
        assert!(chi2_1_pvalue(3.86).unwrap() < 0.05);
        assert!(chi2_1_pvalue(-1.0).is_err());
    }

    #[test]
    fn pvalue_decreasing() {
        let mut prev = 1.0;
        for i in 1..200 {
            let p = chi2_1_pvalue(i as f64 * 0.25).unwrap();
            assert!(p < prev && p > 0.0);
            prev = p;
        }
    }
}
