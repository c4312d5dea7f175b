//! Synthetic sample paths.
//!
//! Innovations are standard normal draws (`rand_distr::StandardNormal`,
//! ziggurat) from a ChaCha8 stream, so a seed reproduces the same path on
//! every platform. Replication `i` of an experiment with master seed `s`
//! uses `ChaCha8Rng::seed_from_u64(s)` switched to stream `i`.
//!
//! Squared returns before the first simulated step are zero and the
//! component variances start at their intercepts; the burn-in prefix absorbs
//! this initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracdiff::DEFAULT_K_MAX;
use crate::model::{squared_return_threshold, FilterInit, Theta, TransitionSpec, VarianceFilter};

/// Steps between refreshes of the expanding-window percentile used by the
/// asymmetric-average transition.
pub const THRESHOLD_REFRESH: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub theta: Theta,
    pub spec: TransitionSpec,
    pub n: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub k_max: usize,
}

impl SimConfig {
    pub fn new(theta: Theta, spec: TransitionSpec, n: usize, seed: u64) -> Self {
        Self { theta, spec, n, burn_in: 1000, seed, k_max: DEFAULT_K_MAX }
    }
}

/// Simulated observations with the variances and weights that generated them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimPath {
    pub y: Vec<f64>,
    pub h: Vec<f64>,
    pub w: Vec<f64>,
}

/// Generator for replication `index` under `master_seed`.
pub fn replication_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Simulates `burn_in + n` steps and returns the last `n`.
pub fn simulate(cfg: &SimConfig) -> Result<SimPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    simulate_with_rng(cfg, &mut rng)
}

pub fn simulate_with_rng<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<SimPath> {
    if cfg.n == 0 {
        return Err(Error::Domain("sample length n must be >= 1".into()));
    }
    cfg.theta.validate()?;
    let init = FilterInit {
        presample_sq: 0.0,
        h1_seed: cfg.theta.a0,
        h2_seed: cfg.theta.b0,
        threshold: f64::INFINITY,
    };
    let asym = match cfg.spec {
        TransitionSpec::AsymmetricAverage { percentile } => Some(percentile),
        _ => None,
    };
    let mut filter = VarianceFilter::new(cfg.theta, cfg.spec, init, cfg.k_max)?;
    let total = cfg.burn_in + cfg.n;
    let mut out = SimPath {
        y: Vec::with_capacity(cfg.n),
        h: Vec::with_capacity(cfg.n),
        w: Vec::with_capacity(cfg.n),
    };
    let mut all_y = Vec::with_capacity(if asym.is_some() { total } else { 0 });
    for t in 0..total {
        if let Some(p) = asym {
            if t > 0 && t % THRESHOLD_REFRESH == 0 {
                filter.set_threshold(squared_return_threshold(&all_y, p));
            }
        }
        let step = filter.next()?;
        let eps: f64 = rng.sample(StandardNormal);
        let y = step.h.sqrt() * eps;
        filter.observe(y)?;
        if asym.is_some() {
            all_y.push(y);
        }
        if t >= cfg.burn_in {
            out.y.push(y);
            out.h.push(step.h);
            out.w.push(step.w);
        }
    }
    Ok(out)
}
