//! Conditional maximum likelihood with analytic gradients.
//!
//! `L(theta) = -0.5 sum_t l_t`, `l_t = ln 2pi + ln h_t + y_t^2 / h_t`, with
//! `dL/dtheta = sum_t (y_t^2 / h_t - 1) / (2 h_t) dh_t/dtheta`. The variance
//! derivatives are propagated alongside the filter (see
//! [`crate::model::VarianceFilter::with_gradient`]).
//!
//! Constraints are handled by optimizing over an unconstrained vector `u`:
//! `a0, a1, a2, b0, gamma` are `exp(u)`, and with `c` the lower bound of `b2`
//! (zero unless `b2` is held fixed)
//!
//! ```text
//! d  = c + (1 - c) s(u_d)
//! b1 = c + (d - c) s(u_b1)
//! b2 = b1 s(u_b2)            (or b2 = c when fixed)
//! ```
//!
//! where `s` is the logistic function, so `0 <= b2 <= b1 <= d < 1` holds by
//! construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracdiff::DEFAULT_K_MAX;
use crate::model::{FilterInit, Theta, TransitionSpec, VarianceFilter, VariancePath, N_PARAMS, PARAM_NAMES};
use crate::optim::{minimize, sup_norm, BfgsOptions};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Which model is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    /// All eight parameters.
    FullST,
    /// `gamma = 0` (so `w_t = 1/2`); estimates `(a0, a1, a2, b0, b1, b2, d)`.
    NullHalfWeight,
    /// Seven component parameters plus a constant weight `w`.
    FixedWeightHygarch,
}

/// Sum of `l_t` pieces plus optional gradient of `L`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub path: VariancePath,
    pub neg2_terms: Vec<f64>,
    pub loglik: f64,
    /// `dL/dtheta`; slot 7 is `dL/dw` under a fixed-weight spec.
    pub grad: Option<[f64; N_PARAMS]>,
    /// `dh_t/dtheta` for every `t`, when the gradient was requested.
    pub dh: Option<Vec<[f64; N_PARAMS]>>,
}

/// Evaluates the likelihood with explicit filter initialization.
pub fn evaluate(
    theta: &Theta,
    spec: &TransitionSpec,
    init: &FilterInit,
    y: &[f64],
    k_max: usize,
    gradient: bool,
) -> Result<Evaluation> {
    if y.is_empty() {
        return Err(Error::Domain("empty return series".into()));
    }
    let filter = if gradient {
        VarianceFilter::with_gradient(*theta, *spec, *init, k_max)?
    } else {
        VarianceFilter::new(*theta, *spec, *init, k_max)?
    };
    let (path, dh) = filter.run(y)?;
    let mut neg2_terms = Vec::with_capacity(y.len());
    let mut total = 0.0;
    let mut grad = [0.0; N_PARAMS];
    for (t, (&h, &yt)) in path.h.iter().zip(y).enumerate() {
        let ratio = yt * yt / h;
        let l = LN_2PI + h.ln() + ratio;
        neg2_terms.push(l);
        total += l;
        if let Some(dh) = &dh {
            let factor = (ratio - 1.0) / (2.0 * h);
            for i in 0..N_PARAMS {
                grad[i] += factor * dh[t][i];
            }
        }
    }
    Ok(Evaluation { path, neg2_terms, loglik: -0.5 * total, grad: dh.as_ref().map(|_| grad), dh })
}

/// Per-observation `l_t(theta)` using the estimation-time presample convention.
pub fn neg2_loglik_terms(theta: &Theta, spec: &TransitionSpec, y: &[f64], k_max: usize) -> Result<Vec<f64>> {
    let init = FilterInit::from_sample(y, spec);
    Ok(evaluate(theta, spec, &init, y, k_max, false)?.neg2_terms)
}

/// `L(theta) = -0.5 sum_t l_t`.
pub fn loglik(theta: &Theta, spec: &TransitionSpec, y: &[f64], k_max: usize) -> Result<f64> {
    let init = FilterInit::from_sample(y, spec);
    Ok(evaluate(theta, spec, &init, y, k_max, false)?.loglik)
}

/// Analytic `dL/dtheta`. Requires `0 < d < 1`.
pub fn loglik_gradient(theta: &Theta, spec: &TransitionSpec, y: &[f64], k_max: usize) -> Result<[f64; N_PARAMS]> {
    if !(theta.d > 0.0 && theta.d < 1.0) {
        return Err(Error::Domain(format!("gradient needs 0 < d < 1, got d = {}", theta.d)));
    }
    let init = FilterInit::from_sample(y, spec);
    Ok(evaluate(theta, spec, &init, y, k_max, true)?.grad.expect("gradient requested"))
}

/// Estimation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub k_max: usize,
    pub max_iter: usize,
    /// Sup-norm tolerance on the gradient of the per-observation objective in
    /// the unconstrained coordinates.
    pub grad_tol: f64,
    pub f_rel_tol: f64,
    /// Number of candidate starting points that are fully optimized.
    pub n_starts: usize,
    pub min_len: usize,
    /// Hold `b2` at this value instead of estimating it.
    pub fixed_b2: Option<f64>,
    /// Extra starting point tried ahead of the built-in candidates.
    pub initial: Option<Theta>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            max_iter: 500,
            grad_tol: 1e-6,
            f_rel_tol: 1e-10,
            n_starts: 5,
            min_len: 50,
            fixed_b2: None,
            initial: None,
        }
    }
}

/// Outcome of [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub fit_kind: FitKind,
    /// Estimated parameters. `gamma` is zero for the constrained kinds.
    pub theta_hat: Theta,
    /// Transition used by the fitted model; carries `w` for the HYGARCH fit.
    pub spec: TransitionSpec,
    pub loglik: f64,
    pub loglik_per_obs: f64,
    pub grad_norm: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub n_obs: usize,
    /// Sample mean of the fitted weights `w_t`.
    pub mean_weight: f64,
    /// Parameters that ended within `1e-6` of a constraint boundary.
    pub at_boundary: Vec<String>,
    pub fixed_b2: Option<f64>,
    /// Initial conditions of the fitted filter, reused for forecasting.
    pub init: FilterInit,
    pub k_max: usize,
}

impl FitResult {
    /// Fitted constant weight for the HYGARCH fit.
    pub fn weight(&self) -> Option<f64> {
        match self.spec {
            TransitionSpec::FixedWeight { w } => Some(w),
            _ => None,
        }
    }

    /// Number of estimated parameters.
    pub fn n_free(&self) -> usize {
        Reparam::new(self.fit_kind, self.fixed_b2).dim()
    }
}

fn logistic(u: f64) -> f64 {
    crate::model::logistic_weight(1.0, -u)
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

/// Map between unconstrained coordinates and model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reparam {
    pub kind: FitKind,
    pub fixed_b2: Option<f64>,
}

impl Reparam {
    pub fn new(kind: FitKind, fixed_b2: Option<f64>) -> Self {
        Self { kind, fixed_b2 }
    }

    // slots in u: a0 a1 a2 b0 b1 [b2] d [gamma|w]
    pub fn dim(&self) -> usize {
        let mut n = 6;
        if self.fixed_b2.is_none() {
            n += 1;
        }
        if self.kind != FitKind::NullHalfWeight {
            n += 1;
        }
        n
    }

    fn floor(&self) -> f64 {
        self.fixed_b2.unwrap_or(0.0)
    }

    /// Model parameters and effective transition for `u`, plus
    /// `jac[j][i] = d theta_i / d u_j` (slot 7 is `w` for the HYGARCH kind).
    pub fn decode(&self, u: &[f64], spec: &TransitionSpec) -> (Theta, TransitionSpec, Vec<[f64; N_PARAMS]>) {
        let m = self.dim();
        let mut jac = vec![[0.0; N_PARAMS]; m];
        let c = self.floor();
        let exp_slot = |k: usize, theta_ix: usize, jac: &mut Vec<[f64; N_PARAMS]>| {
            let v = u[k].exp();
            jac[k][theta_ix] = v;
            v
        };
        let a0 = exp_slot(0, 0, &mut jac);
        let a1 = exp_slot(1, 1, &mut jac);
        let a2 = exp_slot(2, 2, &mut jac);
        let b0 = exp_slot(3, 3, &mut jac);
        let ub1 = 4;
        let ub2 = if self.fixed_b2.is_none() { Some(5) } else { None };
        let ud = if ub2.is_some() { 6 } else { 5 };
        let k = ud + 1;

        let sd = logistic(u[ud]);
        let d = c + (1.0 - c) * sd;
        let dd_dud = (1.0 - c) * sd * (1.0 - sd);
        let s1 = logistic(u[ub1]);
        let b1 = c + (d - c) * s1;
        let db1_dub1 = (d - c) * s1 * (1.0 - s1);
        let db1_dud = s1 * dd_dud;
        jac[ud][6] = dd_dud;
        jac[ub1][4] = db1_dub1;
        jac[ud][4] = db1_dud;
        let b2 = match ub2 {
            Some(j) => {
                let s2 = logistic(u[j]);
                jac[j][5] = b1 * s2 * (1.0 - s2);
                jac[ub1][5] = s2 * db1_dub1;
                jac[ud][5] = s2 * db1_dud;
                b1 * s2
            }
            None => c,
        };

        let (gamma, eff_spec) = match self.kind {
            FitKind::FullST => (exp_slot(k, 7, &mut jac), *spec),
            FitKind::NullHalfWeight => (0.0, *spec),
            FitKind::FixedWeightHygarch => {
                let s = logistic(u[k]);
                jac[k][7] = s * (1.0 - s);
                (0.0, TransitionSpec::FixedWeight { w: s })
            }
        };
        (Theta::new(a0, a1, a2, b0, b1, b2, d, gamma), eff_spec, jac)
    }

    /// Unconstrained coordinates for a feasible point (clamped to the interior).
    pub fn encode(&self, theta: &Theta, weight: f64) -> Vec<f64> {
        let c = self.floor();
        let pos = |v: f64| v.max(1e-8).ln();
        let mut u = vec![pos(theta.a0), pos(theta.a1), pos(theta.a2), pos(theta.b0)];
        let d = theta.d.clamp(c + 1e-6, 1.0 - 1e-6);
        let b1 = theta.b1.clamp(c, d);
        u.push(logit((b1 - c) / (d - c)));
        if self.fixed_b2.is_none() {
            u.push(logit(if b1 > 0.0 { theta.b2 / b1 } else { 0.5 }));
        }
        u.push(logit((d - c) / (1.0 - c)));
        match self.kind {
            FitKind::FullST => u.push(pos(theta.gamma)),
            FitKind::NullHalfWeight => {}
            FitKind::FixedWeightHygarch => u.push(logit(weight)),
        }
        u
    }
}

fn sample_moments(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let msq = y.iter().map(|v| v * v).sum::<f64>() / n;
    (var, msq)
}

/// Built-in starting candidates: intercepts scaled to the sample variance,
/// `d` in {0.3, 0.6}, `gamma` in {0.5, 2} (or `w` in {0.3, 0.7}).
fn candidates(y: &[f64], kind: FitKind, fixed_b2: Option<f64>) -> Vec<(Theta, f64)> {
    let (var, _) = sample_moments(y);
    let v = var.max(1e-8);
    let c = fixed_b2.unwrap_or(0.0);
    let mut out = Vec::new();
    for &(a1, a2) in &[(0.3, 0.3), (0.5, 0.15), (0.15, 0.5)] {
        for &d in &[0.3f64, 0.6] {
            let d = d.max(c + 0.05);
            let b1 = (0.5 * d).max(c);
            let b2 = fixed_b2.unwrap_or(0.25 * b1);
            let a0 = v * (1.0 - a1 - a2);
            let b0 = 0.1 * v;
            match kind {
                FitKind::FullST => {
                    for &g in &[0.5, 2.0] {
                        out.push((Theta::new(a0, a1, a2, b0, b1, b2, d, g), 0.5));
                    }
                }
                FitKind::NullHalfWeight => out.push((Theta::new(a0, a1, a2, b0, b1, b2, d, 0.0), 0.5)),
                FitKind::FixedWeightHygarch => {
                    for &w in &[0.3, 0.7] {
                        out.push((Theta::new(a0, a1, a2, b0, b1, b2, d, 0.0), w));
                    }
                }
            }
        }
    }
    out
}

/// Objective in unconstrained coordinates: `-L(theta(u)) / T` and its gradient.
struct Objective<'a> {
    y: &'a [f64],
    spec: TransitionSpec,
    init: FilterInit,
    k_max: usize,
    reparam: Reparam,
}

impl Objective<'_> {
    fn value(&self, u: &[f64]) -> Option<f64> {
        let (theta, spec, _) = self.reparam.decode(u, &self.spec);
        let e = evaluate(&theta, &spec, &self.init, self.y, self.k_max, false).ok()?;
        Some(-e.loglik / self.y.len() as f64)
    }

    fn value_grad(&self, u: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (theta, spec, jac) = self.reparam.decode(u, &self.spec);
        let e = evaluate(&theta, &spec, &self.init, self.y, self.k_max, true).ok()?;
        let g = e.grad?;
        let n = self.y.len() as f64;
        let gu = jac
            .iter()
            .map(|col| -col.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / n)
            .collect();
        Some((-e.loglik / n, gu))
    }
}

/// Maximum-likelihood fit of the chosen model.
pub fn fit(y: &[f64], spec: &TransitionSpec, kind: FitKind, opts: &FitOptions) -> Result<FitResult> {
    if y.len() < opts.min_len.max(2) {
        return Err(Error::Domain(format!(
            "series of length {} is shorter than the minimum {}",
            y.len(),
            opts.min_len
        )));
    }
    spec.validate()?;
    if let Some(c) = opts.fixed_b2 {
        if !(0.0..1.0).contains(&c) {
            return Err(Error::Config(format!("fixed b2 = {c} outside [0, 1)")));
        }
    }
    if kind != FitKind::FixedWeightHygarch && spec.is_fixed_weight() {
        return Err(Error::Config("use FitKind::FixedWeightHygarch for a fixed-weight model".into()));
    }
    let reparam = Reparam::new(kind, opts.fixed_b2);
    let init = FilterInit::from_sample(y, spec);
    let obj = Objective { y, spec: *spec, init, k_max: opts.k_max, reparam };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(th) = opts.initial {
        let w = match spec {
            TransitionSpec::FixedWeight { w } => *w,
            _ => 0.5,
        };
        starts.push(reparam.encode(&th, w));
    }
    let mut scored: Vec<(f64, Vec<f64>)> = candidates(y, kind, opts.fixed_b2)
        .into_iter()
        .filter_map(|(th, w)| {
            let u = reparam.encode(&th, w);
            obj.value(&u).map(|f| (f, u))
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let remaining = opts.n_starts.max(1).saturating_sub(starts.len());
    starts.extend(scored.into_iter().take(remaining).map(|(_, u)| u));

    let bfgs = BfgsOptions { max_iter: opts.max_iter, grad_tol: opts.grad_tol, f_rel_tol: opts.f_rel_tol, max_step: 2.0 };
    let mut best: Option<crate::optim::BfgsResult> = None;
    for u0 in &starts {
        let Some(r) = minimize(|u| obj.value_grad(u), u0, &bfgs) else { continue };
        if best.as_ref().map_or(true, |b| r.f < b.f) {
            best = Some(r);
        }
    }
    let best = best.ok_or_else(|| Error::Config("no feasible starting point".into()))?;

    let (theta_hat, eff_spec, _) = reparam.decode(&best.x, spec);
    let e = evaluate(&theta_hat, &eff_spec, &init, y, opts.k_max, false)?;
    let mean_weight = e.path.w.iter().sum::<f64>() / y.len() as f64;
    let grad_norm = sup_norm(&best.grad);
    let mut at_boundary = Vec::new();
    let th = theta_hat;
    let checks = [
        ("a1", th.a1 < 1e-6),
        ("a2", th.a2 < 1e-6),
        ("b1", opts.fixed_b2.is_none() && th.b1 - th.b2 < 1e-6 || th.b1 < 1e-6),
        ("b2", opts.fixed_b2.is_none() && th.b2 < 1e-6),
        ("d", th.d - th.b1 < 1e-6 || 1.0 - th.d < 1e-6),
        ("gamma", kind == FitKind::FullST && th.gamma < 1e-6),
    ];
    for (name, hit) in checks {
        if hit {
            at_boundary.push(name.to_string());
        }
    }
    if !best.converged {
        log::warn!("fit did not converge: gradient sup-norm {grad_norm:.3e} after {} iterations", best.n_iter);
    }
    Ok(FitResult {
        fit_kind: kind,
        theta_hat,
        spec: eff_spec,
        loglik: e.loglik,
        loglik_per_obs: e.loglik / y.len() as f64,
        grad_norm,
        n_iter: best.n_iter,
        converged: best.converged && grad_norm < opts.grad_tol,
        n_obs: y.len(),
        mean_weight,
        at_boundary,
        fixed_b2: opts.fixed_b2,
        init,
        k_max: opts.k_max,
    })
}

/// Names of the free parameters of a fit kind, in optimizer order.
pub fn free_param_names(kind: FitKind, fixed_b2: Option<f64>) -> Vec<&'static str> {
    let mut names = vec!["a0", "a1", "a2", "b0", "b1"];
    if fixed_b2.is_none() {
        names.push("b2");
    }
    names.push("d");
    match kind {
        FitKind::FullST => names.push(PARAM_NAMES[7]),
        FitKind::NullHalfWeight => {}
        FitKind::FixedWeightHygarch => names.push("w"),
    }
    names
}
