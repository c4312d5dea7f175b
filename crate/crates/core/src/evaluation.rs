//! One-step forecasts, split-sample backtests and descriptive statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fit, FitKind, FitOptions, FitResult};
use crate::model::{FilterInit, Theta, TransitionSpec, VarianceFilter};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    /// `h_{T+1}` given `y_1..y_T`.
    pub h: f64,
    /// False when the underlying fit did not meet the convergence tolerance.
    pub converged: bool,
}

/// Variance forecast for the step after `history`, filtered from `init`.
pub fn forecast_with(
    theta: &Theta,
    spec: &TransitionSpec,
    init: &FilterInit,
    history: &[f64],
    k_max: usize,
) -> Result<f64> {
    let mut filter = VarianceFilter::new(*theta, *spec, *init, k_max)?;
    for &y in history {
        filter.observe(y)?;
    }
    Ok(filter.next()?.h)
}

/// Forecast from a fitted model. The filter starts from the fit's initial
/// conditions, so `history` normally begins with the estimation sample.
pub fn one_step_forecast(fit: &FitResult, history: &[f64]) -> Result<Forecast> {
    if history.is_empty() {
        return Err(Error::Domain("history must be non-empty".into()));
    }
    if !fit.converged {
        log::warn!("forecasting from an unconverged fit");
    }
    let h = forecast_with(&fit.theta_hat, &fit.spec, &fit.init, history, fit.k_max)?;
    Ok(Forecast { h, converged: fit.converged })
}

/// A model entering a backtest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub label: String,
    pub kind: FitKind,
    /// Transition variable; ignored for [`FitKind::FixedWeightHygarch`].
    pub spec: TransitionSpec,
}

impl ModelSpec {
    pub fn st(label: impl Into<String>, spec: TransitionSpec) -> Self {
        Self { label: label.into(), kind: FitKind::FullST, spec }
    }

    pub fn hygarch(label: impl Into<String>) -> Self {
        Self { label: label.into(), kind: FitKind::FixedWeightHygarch, spec: TransitionSpec::FixedWeight { w: 0.5 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestMetrics {
    pub rmse_in: f64,
    pub rmse_out: f64,
    pub llv_in: f64,
    pub llv_out: f64,
    /// Filtered `h_t` over the estimation sample.
    pub fitted: Vec<f64>,
    /// One-step forecasts for `t = split+1..T`.
    pub forecasts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub model: ModelSpec,
    pub split: usize,
    pub n_out: usize,
    pub fit: Option<FitResult>,
    pub metrics: Option<BacktestMetrics>,
    /// Set when fitting or filtering failed.
    pub error: Option<String>,
}

pub fn rmse(h: &[f64], y: &[f64]) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    let ss: f64 = h.iter().zip(y).map(|(h, y)| (h - y * y).powi(2)).sum();
    (ss / h.len() as f64).sqrt()
}

/// `-0.5 sum_t (ln 2pi + ln h_t + y_t^2 / h_t)`
pub fn llv(h: &[f64], y: &[f64]) -> f64 {
    -0.5 * h.iter().zip(y).map(|(h, y)| LN_2PI + h.ln() + y * y / h).sum::<f64>()
}

/// Fits each model on `y[..split]` and forecasts `y[split..]` one step at a
/// time with the in-sample parameters. The filter state and the
/// asymmetric-average threshold carry over from the estimation sample.
pub fn backtest(y: &[f64], split: usize, models: &[ModelSpec], opts: &FitOptions) -> Result<Vec<BacktestReport>> {
    if split >= y.len() {
        return Err(Error::Domain(format!("split {split} must be below the series length {}", y.len())));
    }
    if split < opts.min_len {
        return Err(Error::Domain(format!("split {split} is shorter than the minimum fit length {}", opts.min_len)));
    }
    Ok(models.par_iter().map(|m| backtest_one(y, split, m, opts)).collect())
}

fn backtest_one(y: &[f64], split: usize, model: &ModelSpec, opts: &FitOptions) -> BacktestReport {
    let mut report =
        BacktestReport { model: model.clone(), split, n_out: y.len() - split, fit: None, metrics: None, error: None };
    let (ins, outs) = y.split_at(split);
    let fitted = match fit(ins, &model.spec, model.kind, opts) {
        Ok(f) => f,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    let path = VarianceFilter::new(fitted.theta_hat, fitted.spec, fitted.init, fitted.k_max).and_then(|f| f.run(y));
    match path {
        Ok((p, _)) => {
            let (h_in, h_out) = p.h.split_at(split);
            report.metrics = Some(BacktestMetrics {
                rmse_in: rmse(h_in, ins),
                rmse_out: rmse(h_out, outs),
                llv_in: llv(h_in, ins),
                llv_out: llv(h_out, outs),
                fitted: h_in.to_vec(),
                forecasts: h_out.to_vec(),
            });
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report.fit = Some(fitted);
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KurtosisKind {
    /// `m4 / m2^2`
    #[default]
    Raw,
    /// `m4 / m2^2 - 3`
    Excess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor `n - 1`).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// `m3 / m2^{3/2}` from central moments; `None` for a constant series.
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
    pub kurtosis_kind: KurtosisKind,
}

pub fn descriptive_stats(y: &[f64], kind: KurtosisKind) -> Result<DescriptiveStats> {
    if y.len() < 2 {
        return Err(Error::Domain(format!("need at least 2 observations, got {}", y.len())));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in y {
        let e = v - mean;
        let e2 = e * e;
        m2 += e2;
        m3 += e2 * e;
        m4 += e2 * e2;
    }
    let std = (m2 / (n - 1.0)).sqrt();
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skewness, kurtosis) = if m2 > 0.0 {
        let k = m4 / (m2 * m2);
        (Some(m3 / m2.powf(1.5)), Some(if kind == KurtosisKind::Excess { k - 3.0 } else { k }))
    } else {
        (None, None)
    };
    Ok(DescriptiveStats {
        n: y.len(),
        mean,
        std,
        min: y.iter().copied().fold(f64::INFINITY, f64::min),
        max: y.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        skewness,
        kurtosis,
        kurtosis_kind: kind,
    })
}
