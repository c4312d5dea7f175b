//! Conditional-variance filter of the smooth-transition HYGARCH model.
//!
//! ```text
//! y_t    = sqrt(h_t) eps_t
//! h_t    = (1 - w_t) h1_t + w_t h2_t
//! h1_t   = a0 + a1 h1_{t-1} + a2 y_{t-1}^2
//! h2_t   = b0 + b1 h2_{t-1} + [1 - b1 B - (1 - b2 B)(1 - B)^d] y_t^2
//! w_t    = exp(-gamma z_t) / (1 + exp(-gamma z_t))
//! ```
//!
//! The FIGARCH component is evaluated in the rearranged form
//! `h2_t = b0 + b1 h2_{t-1} + (b2 - b1) y_{t-1}^2 + c_t - b2 c_{t-1}` where
//! `c_t = sum_{i>=1} pi_i y_{t-i}^2` is the fractional filter.
//!
//! Squared returns before the sample are replaced by a constant `m` (the
//! sample mean of `y_t^2` during estimation). The filter keeps the first `K`
//! lags explicitly and assigns the remaining coefficient mass
//! `1 - sum_{i<=K} pi_i` to `m`:
//!
//! ```text
//! c_t = sum_{i=1..K} pi_i y_{t-i}^2 + m (1 - sum_{i<=K} pi_i)
//! ```
//!
//! Every lag older than the sample start is `m`, so for `T <= K + 1` this is
//! the untruncated filter and the result does not depend on `K`.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracdiff::{pi_coeffs, pi_coeffs_dd, FracDiffCoeffs};

/// Number of model parameters.
pub const N_PARAMS: usize = 8;

/// Parameter names in vector order.
pub const PARAM_NAMES: [&str; N_PARAMS] = ["a0", "a1", "a2", "b0", "b1", "b2", "d", "gamma"];

/// Full parameter vector `(a0, a1, a2, b0, b1, b2, d, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub d: f64,
    pub gamma: f64,
}

impl Theta {
    pub fn new(a0: f64, a1: f64, a2: f64, b0: f64, b1: f64, b2: f64, d: f64, gamma: f64) -> Self {
        Self { a0, a1, a2, b0, b1, b2, d, gamma }
    }

    pub fn from_array(v: [f64; N_PARAMS]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7])
    }

    pub fn to_array(&self) -> [f64; N_PARAMS] {
        [self.a0, self.a1, self.a2, self.b0, self.b1, self.b2, self.d, self.gamma]
    }

    /// Checks the positivity and ordering constraints.
    ///
    /// `a0, b0 > 0`, `a1, a2 >= 0`, `0 <= b2 <= b1 <= d < 1`, `gamma >= 0`.
    /// Zero feedback coefficients are admitted so that pure-intercept and
    /// `b2 = 0` designs can be expressed.
    pub fn validate(&self) -> Result<()> {
        let v = self.to_array();
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Parameter(format!("{} is not finite", PARAM_NAMES[i])));
        }
        if self.a0 <= 0.0 {
            return Err(Error::Parameter(format!("a0 = {} must be > 0", self.a0)));
        }
        if self.b0 <= 0.0 {
            return Err(Error::Parameter(format!("b0 = {} must be > 0", self.b0)));
        }
        if self.a1 < 0.0 {
            return Err(Error::Parameter(format!("a1 = {} must be >= 0", self.a1)));
        }
        if self.a2 < 0.0 {
            return Err(Error::Parameter(format!("a2 = {} must be >= 0", self.a2)));
        }
        if self.b2 < 0.0 {
            return Err(Error::Parameter(format!("b2 = {} must be >= 0", self.b2)));
        }
        if self.b2 > self.b1 {
            return Err(Error::Parameter(format!("b2 = {} must be <= b1 = {}", self.b2, self.b1)));
        }
        if self.b1 > self.d {
            return Err(Error::Parameter(format!("b1 = {} must be <= d = {}", self.b1, self.d)));
        }
        if self.d >= 1.0 {
            return Err(Error::Parameter(format!("d = {} must be < 1", self.d)));
        }
        if self.gamma < 0.0 {
            return Err(Error::Parameter(format!("gamma = {} must be >= 0", self.gamma)));
        }
        Ok(())
    }

    pub fn is_feasible(&self) -> bool {
        self.validate().is_ok()
    }
}

/// Choice of transition variable `z_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TransitionSpec {
    /// `z_t = y_{t-lag}`
    LaggedReturn { lag: usize },
    /// `z_t = h_{t-lag}`, taken from the total variance path being built.
    LaggedVariance { lag: usize },
    /// `z_t = y_{t-1}` when `y_{t-1}^2` is below the given percentile of the
    /// squared returns, otherwise the average of the last three returns.
    AsymmetricAverage { percentile: f64 },
    /// Constant weight `w` (plain HYGARCH); `gamma` is ignored.
    FixedWeight { w: f64 },
}

impl Default for TransitionSpec {
    fn default() -> Self {
        TransitionSpec::LaggedReturn { lag: 1 }
    }
}

impl TransitionSpec {
    pub fn lagged_return() -> Self {
        TransitionSpec::LaggedReturn { lag: 1 }
    }

    pub fn lagged_variance() -> Self {
        TransitionSpec::LaggedVariance { lag: 1 }
    }

    pub fn asymmetric_average() -> Self {
        TransitionSpec::AsymmetricAverage { percentile: 0.95 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TransitionSpec::LaggedReturn { lag } | TransitionSpec::LaggedVariance { lag } => {
                if lag == 0 {
                    return Err(Error::Domain("transition lag must be >= 1".into()));
                }
            }
            TransitionSpec::AsymmetricAverage { percentile } => {
                if !(percentile > 0.0 && percentile < 1.0) {
                    return Err(Error::Domain(format!("percentile {percentile} outside (0, 1)")));
                }
            }
            TransitionSpec::FixedWeight { w } => {
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::Domain(format!("fixed weight {w} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// Short label used in tables and file names.
    pub fn label(&self) -> String {
        match *self {
            TransitionSpec::LaggedReturn { lag } => format!("lagged-return({lag})"),
            TransitionSpec::LaggedVariance { lag } => format!("lagged-variance({lag})"),
            TransitionSpec::AsymmetricAverage { percentile } => format!("asym-avg(p{})", percentile * 100.0),
            TransitionSpec::FixedWeight { w } => format!("fixed-w({w})"),
        }
    }

    /// True when `w_t` does not depend on `gamma`.
    pub fn is_fixed_weight(&self) -> bool {
        matches!(self, TransitionSpec::FixedWeight { .. })
    }
}

/// `exp(-gamma z) / (1 + exp(-gamma z))`, evaluated without overflow.
pub fn logistic_weight(gamma: f64, z: f64) -> f64 {
    let x = gamma * z;
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::INFINITY;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = p * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Percentile threshold of squared returns for [`TransitionSpec::AsymmetricAverage`].
pub fn squared_return_threshold(y: &[f64], percentile: f64) -> f64 {
    let sq: Vec<f64> = y.iter().map(|v| v * v).collect();
    quantile(&sq, percentile)
}

/// Transition value for the next time point given the history so far.
///
/// `y` and `h` hold observations and total variances for `t = 1..n`; the
/// value returned is `z_{n+1}`. Missing returns before the sample are taken
/// as zero and missing variances as `h_seed`.
pub fn transition_value(spec: &TransitionSpec, threshold: f64, y: &[f64], h: &[f64], h_seed: f64) -> f64 {
    let lag_y = |k: usize| if k <= y.len() { y[y.len() - k] } else { 0.0 };
    match *spec {
        TransitionSpec::LaggedReturn { lag } => lag_y(lag),
        TransitionSpec::LaggedVariance { lag } => {
            if lag <= h.len() {
                h[h.len() - lag]
            } else {
                h_seed
            }
        }
        TransitionSpec::AsymmetricAverage { .. } => {
            let y1 = lag_y(1);
            if y1 * y1 < threshold {
                y1
            } else {
                (y1 + lag_y(2) + lag_y(3)) / 3.0
            }
        }
        TransitionSpec::FixedWeight { .. } => 0.0,
    }
}

/// Initial conditions of the filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterInit {
    /// Value used for `y_s^2`, `s <= 0`.
    pub presample_sq: f64,
    /// `h1_0`
    pub h1_seed: f64,
    /// `h2_0`
    pub h2_seed: f64,
    /// Squared-return threshold for the asymmetric-average transition.
    pub threshold: f64,
}

impl FilterInit {
    /// Estimation convention: presample squared returns equal the sample mean
    /// of `y_t^2`, component variances start at the sample variance, and the
    /// asymmetric-average threshold is the in-sample percentile.
    pub fn from_sample(y: &[f64], spec: &TransitionSpec) -> Self {
        let n = y.len().max(1) as f64;
        let mean_sq = y.iter().map(|v| v * v).sum::<f64>() / n;
        let mean = y.iter().sum::<f64>() / n;
        let var = if y.len() > 1 {
            y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            mean_sq
        };
        let threshold = match *spec {
            TransitionSpec::AsymmetricAverage { percentile } => squared_return_threshold(y, percentile),
            _ => f64::INFINITY,
        };
        Self { presample_sq: mean_sq, h1_seed: var, h2_seed: var, threshold }
    }

    fn h_seed(&self) -> f64 {
        0.5 * (self.h1_seed + self.h2_seed)
    }
}

/// Aligned filter output for `t = 1..T`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariancePath {
    pub h: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
}

impl VariancePath {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    fn with_capacity(n: usize) -> Self {
        Self {
            h: Vec::with_capacity(n),
            h1: Vec::with_capacity(n),
            h2: Vec::with_capacity(n),
            w: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, s: &Step) {
        self.h.push(s.h);
        self.h1.push(s.h1);
        self.h2.push(s.h2);
        self.w.push(s.w);
        self.z.push(s.z);
    }
}

/// One step of the filter: the variance of the next observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub h: f64,
    pub h1: f64,
    pub h2: f64,
    pub w: f64,
    pub z: f64,
    /// `d h / d theta`. Slot 7 holds `d h / d gamma`, or `d h / d w` under
    /// [`TransitionSpec::FixedWeight`].
    pub dh: Option<[f64; N_PARAMS]>,
}

#[derive(Debug, Clone)]
struct DerivState {
    dh1: [f64; 3],
    dh2: [f64; 4],
    dconv_prev: f64,
    cum_dpi: Vec<f64>,
    dpi: Vec<f64>,
    // total-variance derivatives, kept for the lagged-variance transition
    dh_hist: Vec<[f64; N_PARAMS]>,
}

/// Online evaluation of the variance recursion.
///
/// Call [`VarianceFilter::next`] to obtain `h_t` from information through
/// `t - 1`, then [`VarianceFilter::observe`] with `y_t`. The same object
/// drives likelihood evaluation, simulation and forecasting.
#[derive(Debug, Clone)]
pub struct VarianceFilter<'a> {
    theta: Theta,
    spec: TransitionSpec,
    init: FilterInit,
    coeffs: Cow<'a, FracDiffCoeffs>,
    // cum_pi[j] = pi_1 + ... + pi_j
    cum_pi: Vec<f64>,
    // sum of all pi_i: 1 for d > 0, 0 for d = 0
    total_mass: f64,
    y: Vec<f64>,
    ysq: Vec<f64>,
    h: Vec<f64>,
    h1_prev: f64,
    h2_prev: f64,
    conv_prev: f64,
    pending: Option<Pending>,
    deriv: Option<DerivState>,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    step: Step,
    conv: f64,
    dconv: f64,
    d1: [f64; 3],
    d2: [f64; 4],
}

fn cumulative(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    let mut s = 0.0;
    out.push(0.0);
    for x in v {
        s += x;
        out.push(s);
    }
    out
}

impl<'a> VarianceFilter<'a> {
    /// Filter without derivatives.
    pub fn new(theta: Theta, spec: TransitionSpec, init: FilterInit, k_max: usize) -> Result<Self> {
        theta.validate()?;
        let coeffs = pi_coeffs(theta.d, k_max)?;
        Self::build(theta, spec, init, Cow::Owned(coeffs), false)
    }

    /// Filter that also propagates `d h_t / d theta`. Requires `0 < d < 1`.
    pub fn with_gradient(theta: Theta, spec: TransitionSpec, init: FilterInit, k_max: usize) -> Result<Self> {
        theta.validate()?;
        let coeffs = pi_coeffs_dd(theta.d, k_max)?;
        Self::build(theta, spec, init, Cow::Owned(coeffs), true)
    }

    /// Filter reusing precomputed coefficients (must match `theta.d`).
    pub fn with_coeffs(
        theta: Theta,
        spec: TransitionSpec,
        init: FilterInit,
        coeffs: &'a FracDiffCoeffs,
        gradient: bool,
    ) -> Result<Self> {
        theta.validate()?;
        if coeffs.d != theta.d {
            return Err(Error::Domain("coefficients built for a different d".into()));
        }
        if gradient && coeffs.dpi_dd.is_none() {
            return Err(Error::Domain("gradient requested without coefficient derivatives".into()));
        }
        Self::build(theta, spec, init, Cow::Borrowed(coeffs), gradient)
    }

    fn build(
        theta: Theta,
        spec: TransitionSpec,
        init: FilterInit,
        coeffs: Cow<'a, FracDiffCoeffs>,
        gradient: bool,
    ) -> Result<Self> {
        spec.validate()?;
        if !(init.presample_sq >= 0.0 && init.h1_seed >= 0.0 && init.h2_seed >= 0.0) {
            return Err(Error::Domain("filter seeds must be non-negative".into()));
        }
        let cum_pi = cumulative(&coeffs.pi);
        let total_mass = if coeffs.d > 0.0 { 1.0 } else { 0.0 };
        let conv0 = init.presample_sq * total_mass;
        let deriv = if gradient {
            let dpi = coeffs.dpi_dd.clone().expect("derivative coefficients present");
            let cum_dpi = cumulative(&dpi);
            Some(DerivState {
                dh1: [0.0; 3],
                dh2: [0.0; 4],
                dconv_prev: 0.0,
                cum_dpi,
                dpi,
                dh_hist: Vec::new(),
            })
        } else {
            None
        };
        Ok(Self {
            theta,
            spec,
            init,
            cum_pi,
            total_mass,
            coeffs,
            y: Vec::new(),
            ysq: Vec::new(),
            h: Vec::new(),
            h1_prev: init.h1_seed,
            h2_prev: init.h2_seed,
            conv_prev: conv0,
            pending: None,
            deriv,
        })
    }

    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    pub fn init(&self) -> &FilterInit {
        &self.init
    }

    /// Number of observations absorbed so far.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Replaces the asymmetric-average threshold for subsequent steps.
    pub fn set_threshold(&mut self, threshold: f64) {
        self.init.threshold = threshold;
        self.pending = None;
    }

    // (sum_{i} pi_i y_{t-i}^2, same with dpi) for t = len + 1
    fn convolutions(&self) -> (f64, f64) {
        let n = self.ysq.len();
        let k = self.coeffs.k_max();
        let pi = &self.coeffs.pi;
        let m = self.init.presample_sq;
        let inside = n.min(k);
        // observed part: lags 1..=inside map onto ysq[n-1], ysq[n-2], ...
        let recent = &self.ysq[n - inside..];
        let mut conv = 0.0;
        for (p, v) in pi[..inside].iter().zip(recent.iter().rev()) {
            conv += p * v;
        }
        conv += m * (self.total_mass - self.cum_pi[inside]);
        let mut dconv = 0.0;
        if let Some(ds) = &self.deriv {
            for (p, v) in ds.dpi[..inside].iter().zip(recent.iter().rev()) {
                dconv += p * v;
            }
            // total mass is 1 on 0 < d < 1, so its derivative vanishes
            dconv -= m * ds.cum_dpi[inside];
        }
        (conv, dconv)
    }

    /// Variance of the next observation, `h_t` with `t = len + 1`.
    ///
    /// Uses only observations already passed to [`VarianceFilter::observe`].
    pub fn next(&mut self) -> Result<Step> {
        if let Some(p) = self.pending {
            return Ok(p.step);
        }
        let th = self.theta;
        let ysq_prev = self.ysq.last().copied().unwrap_or(self.init.presample_sq);
        let (conv, dconv) = self.convolutions();

        let h1 = th.a0 + th.a1 * self.h1_prev + th.a2 * ysq_prev;
        let h2 = th.b0 + th.b1 * self.h2_prev + (th.b2 - th.b1) * ysq_prev + conv - th.b2 * self.conv_prev;

        let z = transition_value(&self.spec, self.init.threshold, &self.y, &self.h, self.init.h_seed());
        let w = match self.spec {
            TransitionSpec::FixedWeight { w } => w,
            _ => logistic_weight(th.gamma, z),
        };
        let h = (1.0 - w) * h1 + w * h2;
        if !(h1 > 0.0 && h2 > 0.0 && h > 0.0 && h.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-positive conditional variance at t = {} (h1 = {h1}, h2 = {h2})",
                self.y.len() + 1
            )));
        }

        let mut d1 = [0.0; 3];
        let mut d2 = [0.0; 4];
        let dh = match &self.deriv {
            Some(ds) => {
                d1 = [
                    1.0 + th.a1 * ds.dh1[0],
                    self.h1_prev + th.a1 * ds.dh1[1],
                    ysq_prev + th.a1 * ds.dh1[2],
                ];
                d2 = [
                    1.0 + th.b1 * ds.dh2[0],
                    self.h2_prev - ysq_prev + th.b1 * ds.dh2[1],
                    ysq_prev - self.conv_prev + th.b1 * ds.dh2[2],
                    dconv - th.b2 * ds.dconv_prev + th.b1 * ds.dh2[3],
                ];
                let mut g = [0.0; N_PARAMS];
                for i in 0..3 {
                    g[i] = (1.0 - w) * d1[i];
                }
                for i in 0..4 {
                    g[3 + i] = w * d2[i];
                }
                let spread = h2 - h1;
                let slope = w * (1.0 - w);
                match self.spec {
                    TransitionSpec::FixedWeight { .. } => g[7] = spread,
                    TransitionSpec::LaggedVariance { lag } => {
                        // w_t depends on theta through z_t = h_{t-lag}
                        if lag <= ds.dh_hist.len() {
                            let past = ds.dh_hist[ds.dh_hist.len() - lag];
                            let dw_dz = -th.gamma * slope;
                            for i in 0..N_PARAMS {
                                g[i] += spread * dw_dz * past[i];
                            }
                        }
                        g[7] += -z * slope * spread;
                    }
                    _ => g[7] = -z * slope * spread,
                }
                Some(g)
            }
            None => None,
        };

        let step = Step { h, h1, h2, w, z, dh };
        self.pending = Some(Pending { step, conv, dconv, d1, d2 });
        Ok(step)
    }

    /// Absorbs `y_t` and advances the recursion.
    pub fn observe(&mut self, y_t: f64) -> Result<Step> {
        self.next()?;
        let p = self.pending.take().expect("next() leaves a pending step");
        self.h1_prev = p.step.h1;
        self.h2_prev = p.step.h2;
        self.conv_prev = p.conv;
        if let Some(ds) = self.deriv.as_mut() {
            ds.dh1 = p.d1;
            ds.dh2 = p.d2;
            ds.dconv_prev = p.dconv;
            if matches!(self.spec, TransitionSpec::LaggedVariance { .. }) {
                ds.dh_hist.push(p.step.dh.expect("gradient filter"));
            }
        }
        self.y.push(y_t);
        self.ysq.push(y_t * y_t);
        self.h.push(p.step.h);
        Ok(p.step)
    }

    /// Runs over a whole series, returning the path and, for gradient
    /// filters, `d h_t / d theta` for every `t`.
    pub fn run(mut self, y: &[f64]) -> Result<(VariancePath, Option<Vec<[f64; N_PARAMS]>>)> {
        let mut path = VariancePath::with_capacity(y.len());
        let mut grads = self.deriv.as_ref().map(|_| Vec::with_capacity(y.len()));
        for &v in y {
            let s = self.observe(v)?;
            path.push(&s);
            if let (Some(g), Some(dh)) = (grads.as_mut(), s.dh) {
                g.push(dh);
            }
        }
        Ok((path, grads))
    }
}

/// Variance path with the estimation-time initialization derived from `y`.
pub fn variance_path(theta: &Theta, spec: &TransitionSpec, y: &[f64], k_max: usize) -> Result<VariancePath> {
    if y.is_empty() {
        return Err(Error::Domain("empty return series".into()));
    }
    let init = FilterInit::from_sample(y, spec);
    variance_path_with_init(theta, spec, &init, y, k_max)
}

/// Variance path with explicit initial conditions.
pub fn variance_path_with_init(
    theta: &Theta,
    spec: &TransitionSpec,
    init: &FilterInit,
    y: &[f64],
    k_max: usize,
) -> Result<VariancePath> {
    if y.is_empty() {
        return Err(Error::Domain("empty return series".into()));
    }
    if theta.b2 == 0.0 && theta.b1 > 0.0 {
        log::debug!("b2 = 0 sits on the boundary of the ordering constraint");
    }
    Ok(VarianceFilter::new(*theta, *spec, *init, k_max)?.run(y)?.0)
}

/// Constant-weight HYGARCH path; `theta.gamma` is ignored.
pub fn hygarch_variance_path(theta: &Theta, w: f64, y: &[f64], k_max: usize) -> Result<VariancePath> {
    let theta = Theta { gamma: 0.0, ..*theta };
    variance_path(&theta, &TransitionSpec::FixedWeight { w }, y, k_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta() -> Theta {
        Theta::new(0.35, 0.30, 0.40, 0.10, 0.20, 0.0, 0.60, 1.50)
    }

    fn series() -> Vec<f64> {
        vec![0.4, -1.2, 2.1, -0.3, 0.8, 1.7, -2.4, 0.1, 0.05, -0.9]
    }

    #[test]
    fn logistic_values() {
        assert_eq!(logistic_weight(0.0, 7.3), 0.5);
        assert_eq!(logistic_weight(1.5, 0.0), 0.5);
        let w = logistic_weight(1.5, -500.0);
        assert!((1.0 - w).abs() < 1e-15 && w.is_finite());
        let w = logistic_weight(1.5, 500.0);
        assert!(w >= 0.0 && w < 1e-300);
        assert!(logistic_weight(2.0, 1.0) < logistic_weight(2.0, 0.5));
    }

    #[test]
    fn transition_indexing() {
        let y = [0.3, -0.7, 2.1];
        let lr = TransitionSpec::lagged_return();
        assert_eq!(transition_value(&lr, f64::INFINITY, &y, &[], 1.0), 2.1);
        let lr2 = TransitionSpec::LaggedReturn { lag: 2 };
        assert_eq!(transition_value(&lr2, f64::INFINITY, &y, &[], 1.0), -0.7);
        assert_eq!(transition_value(&lr, f64::INFINITY, &[], &[], 1.0), 0.0);

        let lv = TransitionSpec::lagged_variance();
        assert_eq!(transition_value(&lv, f64::INFINITY, &y, &[1.0, 2.0, 3.5], 9.0), 3.5);
        assert_eq!(transition_value(&lv, f64::INFINITY, &[], &[], 9.0), 9.0);

        let aa = TransitionSpec::asymmetric_average();
        // 2.1^2 = 4.41 below threshold: plain lag
        assert_eq!(transition_value(&aa, 5.0, &y, &[], 1.0), 2.1);
        // above threshold: three-point average
        let z = transition_value(&aa, 4.0, &[3.0, 3.0, 3.0], &[], 1.0);
        assert_eq!(z, 3.0);
        let z = transition_value(&aa, 4.0, &y, &[], 1.0);
        assert!((z - (0.3 - 0.7 + 2.1) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        assert!(TransitionSpec::LaggedReturn { lag: 0 }.validate().is_err());
        assert!(TransitionSpec::AsymmetricAverage { percentile: 1.0 }.validate().is_err());
        assert!(TransitionSpec::FixedWeight { w: 1.5 }.validate().is_err());
        assert!(TransitionSpec::FixedWeight { w: 1.0 }.validate().is_ok());
    }

    #[test]
    fn feasibility_names_the_violated_constraint() {
        let mut th = theta();
        th.b1 = 0.7;
        let err = th.validate().unwrap_err().to_string();
        assert!(err.contains("b1"), "{err}");
        th = theta();
        th.a0 = 0.0;
        assert!(th.validate().unwrap_err().to_string().contains("a0"));
        th = theta();
        th.d = 1.0;
        assert!(th.validate().is_err());
        th = theta();
        th.b2 = 0.25;
        assert!(th.validate().unwrap_err().to_string().contains("b2"));
        assert!(variance_path(&th, &TransitionSpec::default(), &series(), 100).is_err());
    }

    #[test]
    fn empty_series_is_rejected() {
        assert!(matches!(
            variance_path(&theta(), &TransitionSpec::default(), &[], 100),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn intercept_only_collapse() {
        let th = Theta::new(0.35, 0.0, 0.0, 0.10, 0.0, 0.0, 0.0, 0.0);
        let init = FilterInit { presample_sq: 0.0, h1_seed: 0.0, h2_seed: 0.0, threshold: f64::INFINITY };
        let y = vec![0.0; 20];
        let p = variance_path_with_init(&th, &TransitionSpec::default(), &init, &y, 50).unwrap();
        for t in 0..y.len() {
            assert_eq!(p.h1[t], 0.35);
            assert_eq!(p.h2[t], 0.10);
            assert!((p.h[t] - 0.225).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gamma_halves() {
        let th = Theta { gamma: 0.0, ..theta() };
        for spec in [TransitionSpec::lagged_return(), TransitionSpec::lagged_variance(), TransitionSpec::asymmetric_average()] {
            let p = variance_path(&th, &spec, &series(), 200).unwrap();
            for t in 0..p.len() {
                assert_eq!(p.w[t], 0.5);
                assert!((p.h[t] - 0.5 * (p.h1[t] + p.h2[t])).abs() <= 1e-15 * p.h[t]);
            }
        }
    }

    #[test]
    fn fixed_weight_extremes() {
        let y = series();
        let p0 = hygarch_variance_path(&theta(), 0.0, &y, 200).unwrap();
        let p1 = hygarch_variance_path(&theta(), 1.0, &y, 200).unwrap();
        let half = hygarch_variance_path(&theta(), 0.5, &y, 200).unwrap();
        let g0 = variance_path(&Theta { gamma: 0.0, ..theta() }, &TransitionSpec::lagged_return(), &y, 200).unwrap();
        for t in 0..y.len() {
            assert_eq!(p0.h[t], p0.h1[t]);
            assert_eq!(p1.h[t], p1.h2[t]);
            assert_eq!(half.h[t], g0.h[t]);
            assert!(p0.w[t] == 0.0 && half.w[t] == 0.5);
        }
    }

    #[test]
    fn next_is_idempotent_until_observe() {
        let y = series();
        let init = FilterInit::from_sample(&y, &TransitionSpec::default());
        let mut f = VarianceFilter::with_gradient(theta(), TransitionSpec::default(), init, 100).unwrap();
        for &v in &y {
            let a = f.next().unwrap();
            let b = f.next().unwrap();
            assert_eq!(a, b);
            f.observe(v).unwrap();
        }
        assert_eq!(f.len(), y.len());
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile(&[5.0], 0.95), 5.0);
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0, 0.0], 1.0), 4.0);
    }
}
