//! Monte Carlo studies: bias/RMSE of the estimator and size/power of the
//! score test.
//!
//! Replication `r` draws its innovations from stream `r` of the master seed
//! (see [`replication_rng`]) for every sample length and `gamma`, so cells of
//! a table share their random numbers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fit, FitKind, FitOptions};
use crate::fracdiff::DEFAULT_K_MAX;
use crate::io::num;
use crate::model::{Theta, TransitionSpec, PARAM_NAMES};
use crate::score_test::score_statistic;
use crate::simulate::{replication_rng, simulate_with_rng, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    EstimationStudy,
    SizePowerStudy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub table: StudyKind,
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub theta: Theta,
    /// Values of `gamma` for the size/power study; `theta.gamma` is ignored there.
    pub gamma_grid: Vec<f64>,
    pub levels: Vec<f64>,
    pub master_seed: u64,
    pub k_max: usize,
    pub burn_in: usize,
    pub spec: TransitionSpec,
    /// `b2` held at this value during estimation.
    pub fixed_b2: Option<f64>,
    pub n_starts: usize,
}

impl ExperimentConfig {
    fn base(table: StudyKind, gamma: f64) -> Self {
        Self {
            table,
            n_values: vec![500, 1000, 2000],
            replications: 200,
            theta: Theta::new(0.35, 0.30, 0.40, 0.10, 0.20, 0.0, 0.60, gamma),
            gamma_grid: vec![0.0, 0.4, 2.0, 7.0],
            levels: vec![0.05, 0.10],
            master_seed: 2024,
            k_max: DEFAULT_K_MAX,
            burn_in: 1000,
            spec: TransitionSpec::lagged_return(),
            fixed_b2: Some(0.0),
            n_starts: 5,
        }
    }

    /// Bias/RMSE design at desk scale.
    pub fn estimation_study() -> Self {
        Self::base(StudyKind::EstimationStudy, 1.5)
    }

    /// Size/power design at desk scale. Restricted fits are cheaper to
    /// get right, so fewer starting points are optimized.
    pub fn size_power_study() -> Self {
        Self { n_starts: 2, ..Self::base(StudyKind::SizePowerStudy, 0.0) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if self.n_values.is_empty() {
            return Err(Error::Config("n_values must be non-empty".into()));
        }
        if let Some(l) = self.levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(Error::Config(format!("significance level {l} outside (0, 1)")));
        }
        if self.table == StudyKind::SizePowerStudy && self.gamma_grid.is_empty() {
            return Err(Error::Config("gamma_grid must be non-empty".into()));
        }
        if self.spec.is_fixed_weight() {
            return Err(Error::Config("studies need a logistic transition variable".into()));
        }
        self.theta.validate()
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions { k_max: self.k_max, fixed_b2: self.fixed_b2, n_starts: self.n_starts, ..Default::default() }
    }

    fn sample(&self, theta: Theta, n: usize, rep: usize) -> Result<Vec<f64>> {
        let cfg = SimConfig { theta, spec: self.spec, n, burn_in: self.burn_in, seed: self.master_seed, k_max: self.k_max };
        let mut rng = replication_rng(self.master_seed, rep as u64);
        Ok(simulate_with_rng(&cfg, &mut rng)?.y)
    }

    /// `# key=value` lines describing the run.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let mut m = vec![
            ("table".into(), format!("{:?}", self.table)),
            ("master_seed".into(), self.master_seed.to_string()),
            ("replications".into(), self.replications.to_string()),
            ("k_max".into(), self.k_max.to_string()),
            ("burn_in".into(), self.burn_in.to_string()),
            ("spec".into(), self.spec.label()),
            ("n_starts".into(), self.n_starts.to_string()),
            ("fixed_b2".into(), self.fixed_b2.map_or("none".into(), num)),
            ("theta".into(), self.theta.to_array().map(num).join(";")),
            ("n_values".into(), self.n_values.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(";")),
        ];
        if self.table == StudyKind::SizePowerStudy {
            m.push(("gamma_grid".into(), self.gamma_grid.iter().map(|g| num(*g)).collect::<Vec<_>>().join(";")));
            m.push(("levels".into(), self.levels.iter().map(|g| num(*g)).collect::<Vec<_>>().join(";")));
        }
        m
    }
}

/// Results at one sample length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationCell {
    pub n: usize,
    /// Successful fits entering the averages.
    pub n_ok: usize,
    pub n_failed: usize,
    /// Successful fits that stopped short of the gradient tolerance.
    pub n_unconverged: usize,
    pub bias: [f64; 8],
    pub rmse: [f64; 8],
    /// Estimates by replication; `None` for failed fits.
    pub estimates: Vec<Option<Theta>>,
}

impl EstimationCell {
    pub fn failure_rate(&self) -> f64 {
        self.n_failed as f64 / (self.n_ok + self.n_failed) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationTable {
    pub config: ExperimentConfig,
    /// Parameter indices reported (estimated ones).
    pub params: Vec<usize>,
    pub cells: Vec<EstimationCell>,
}

pub fn run_estimation_study(cfg: &ExperimentConfig) -> Result<EstimationTable> {
    if cfg.table != StudyKind::EstimationStudy {
        return Err(Error::Config("expected an estimation study config".into()));
    }
    cfg.validate()?;
    let opts = cfg.fit_options();
    let truth = cfg.theta.to_array();
    let mut cells = Vec::with_capacity(cfg.n_values.len());
    for &n in &cfg.n_values {
        let estimates: Vec<Option<(Theta, bool)>> = (0..cfg.replications)
            .into_par_iter()
            .map(|r| {
                let y = cfg.sample(cfg.theta, n, r).ok()?;
                match fit(&y, &cfg.spec, FitKind::FullST, &opts) {
                    Ok(f) => Some((f.theta_hat, f.converged)),
                    Err(e) => {
                        log::warn!("n={n} replication {r}: {e}");
                        None
                    }
                }
            })
            .collect();
        let mut bias = [0.0; 8];
        let mut mse = [0.0; 8];
        let ok: Vec<&(Theta, bool)> = estimates.iter().flatten().collect();
        for (th, _) in &ok {
            let v = th.to_array();
            for i in 0..8 {
                let e = v[i] - truth[i];
                bias[i] += e;
                mse[i] += e * e;
            }
        }
        let k = ok.len().max(1) as f64;
        log::info!("estimation study: n={n} done ({} of {} fits)", ok.len(), cfg.replications);
        cells.push(EstimationCell {
            n,
            n_ok: ok.len(),
            n_failed: cfg.replications - ok.len(),
            n_unconverged: ok.iter().filter(|(_, c)| !c).count(),
            bias: bias.map(|b| b / k),
            rmse: mse.map(|m| (m / k).sqrt()),
            estimates: estimates.iter().map(|e| e.map(|(t, _)| t)).collect(),
        });
    }
    let params = (0..8).filter(|&i| !(i == 5 && cfg.fixed_b2.is_some())).collect();
    Ok(EstimationTable { config: cfg.clone(), params, cells })
}

impl EstimationTable {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["param".to_string(), "true".to_string()];
        for c in &self.cells {
            h.push(format!("bias_n{}", c.n));
            h.push(format!("rmse_n{}", c.n));
        }
        h
    }

    /// One row per parameter, then a failure-rate row.
    pub fn rows(&self) -> Vec<Vec<String>> {
        let truth = self.config.theta.to_array();
        let mut rows: Vec<Vec<String>> = self
            .params
            .iter()
            .map(|&i| {
                let mut r = vec![PARAM_NAMES[i].to_string(), num(truth[i])];
                for c in &self.cells {
                    r.push(format!("{:.4}", c.bias[i]));
                    r.push(format!("{:.4}", c.rmse[i]));
                }
                r
            })
            .collect();
        let mut fail = vec!["failure_rate".to_string(), String::new()];
        for c in &self.cells {
            fail.push(format!("{:.4}", c.failure_rate()));
            fail.push(String::new());
        }
        rows.push(fail);
        rows
    }
}

/// Rejection counts for one `(gamma, n)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePowerCell {
    pub gamma: f64,
    pub n: usize,
    /// Rejection fraction per level, over all replications; failed or
    /// degenerate replications count as non-rejections.
    pub rates: Vec<f64>,
    pub n_failed: usize,
    pub n_degenerate: usize,
    /// Statistic by replication; NaN when unavailable.
    pub psi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePowerTable {
    pub config: ExperimentConfig,
    pub cells: Vec<SizePowerCell>,
}

impl SizePowerTable {
    pub fn cell(&self, gamma: f64, n: usize) -> Option<&SizePowerCell> {
        self.cells.iter().find(|c| c.gamma == gamma && c.n == n)
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["gamma".to_string()];
        for &n in &self.config.n_values {
            for &l in &self.config.levels {
                h.push(format!("n{n}_level{l}"));
            }
        }
        h
    }

    pub fn rows(&self) -> Vec<Vec<String>> {
        self.config
            .gamma_grid
            .iter()
            .map(|&g| {
                let mut r = vec![num(g)];
                for &n in &self.config.n_values {
                    let c = self.cell(g, n).expect("cell for every grid point");
                    r.extend(c.rates.iter().map(|v| format!("{v:.3}")));
                }
                r
            })
            .collect()
    }
}

pub fn run_size_power_study(cfg: &ExperimentConfig) -> Result<SizePowerTable> {
    if cfg.table != StudyKind::SizePowerStudy {
        return Err(Error::Config("expected a size/power study config".into()));
    }
    cfg.validate()?;
    let opts = cfg.fit_options();
    let mut cells = Vec::new();
    for &gamma in &cfg.gamma_grid {
        let theta = Theta { gamma, ..cfg.theta };
        theta.validate()?;
        for &n in &cfg.n_values {
            let results: Vec<Option<(f64, Option<f64>)>> = (0..cfg.replications)
                .into_par_iter()
                .map(|r| {
                    let y = cfg.sample(theta, n, r).ok()?;
                    let out = fit(&y, &cfg.spec, FitKind::NullHalfWeight, &opts)
                        .and_then(|null| score_statistic(&null, &cfg.spec, &y));
                    match out {
                        Ok(res) => Some((res.psi_s, res.p_value)),
                        Err(e) => {
                            log::warn!("gamma={gamma} n={n} replication {r}: {e}");
                            None
                        }
                    }
                })
                .collect();
            let rates = cfg
                .levels
                .iter()
                .map(|&l| {
                    let rej = results.iter().flatten().filter(|(_, p)| p.is_some_and(|p| p < l)).count();
                    rej as f64 / cfg.replications as f64
                })
                .collect();
            log::info!("size/power study: gamma={gamma} n={n} done");
            cells.push(SizePowerCell {
                gamma,
                n,
                rates,
                n_failed: results.iter().filter(|r| r.is_none()).count(),
                n_degenerate: results.iter().flatten().filter(|(_, p)| p.is_none()).count(),
                psi: results.iter().map(|r| r.map_or(f64::NAN, |(psi, _)| psi)).collect(),
            });
        }
    }
    Ok(SizePowerTable { config: cfg.clone(), cells })
}
