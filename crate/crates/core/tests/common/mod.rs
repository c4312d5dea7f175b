//! Straight-line reference implementations used as test oracles.
//!
//! These deliberately avoid the library's online filter: coefficients come
//! from Gamma ratios, the FIGARCH lag polynomial is formed by explicit
//! polynomial multiplication and every lag is read from a presample-padded
//! array.

#![allow(dead_code)]

use statrs::function::gamma::ln_gamma;
use nalgebra::{DMatrix, DVector};
use sthygarch::estimate::evaluate;
use sthygarch::model::{FilterInit, Theta, TransitionSpec};

pub fn gamma_pi(d: f64, i: usize) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    let i = i as f64;
    d * (ln_gamma(i - d) - ln_gamma(1.0 - d) - ln_gamma(i + 1.0)).exp()
}

/// Coefficients r_1..r_{K+1} of `1 - b1 B - (1 - b2 B)(1 - B)^d` truncated at K.
pub fn figarch_lag_poly(b1: f64, b2: f64, d: f64, k: usize) -> (Vec<f64>, f64) {
    let mut frac = vec![1.0];
    let mut mass = 0.0;
    for i in 1..=k {
        let p = gamma_pi(d, i);
        mass += p;
        frac.push(-p);
    }
    let left = [1.0, -b2];
    let mut prod = vec![0.0; frac.len() + 1];
    for (i, a) in left.iter().enumerate() {
        for (j, b) in frac.iter().enumerate() {
            prod[i + j] += a * b;
        }
    }
    let mut r = vec![0.0; prod.len()];
    for j in 0..prod.len() {
        let one = if j == 0 { 1.0 } else { 0.0 };
        let lag1 = if j == 1 { b1 } else { 0.0 };
        r[j] = one - lag1 - prod[j];
    }
    let total = if d > 0.0 { 1.0 } else { 0.0 };
    (r, total - mass)
}

pub struct RefPath {
    pub h: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub w: Vec<f64>,
}

/// Reference filter with explicit initial values.
pub fn reference_path_init(
    th: &Theta,
    spec: &TransitionSpec,
    y: &[f64],
    k: usize,
    presample: f64,
    h1_seed: f64,
    h2_seed: f64,
    threshold: f64,
) -> RefPath {
    let (r, tail) = figarch_lag_poly(th.b1, th.b2, th.d, k);
    let t_len = y.len();
    let pad = k + 2;
    // ysq[pad + t - 1] = y_t^2 for t >= 1, presample otherwise
    let mut ysq = vec![presample; pad + t_len];
    for (t, v) in y.iter().enumerate() {
        ysq[pad + t] = v * v;
    }
    let yv = |t: i64| if t >= 1 { y[(t - 1) as usize] } else { 0.0 };
    let ysq_at = |t: i64| ysq[(pad as i64 + t - 1) as usize];

    let mut out = RefPath { h: vec![], h1: vec![], h2: vec![], w: vec![] };
    let mut h1p = h1_seed;
    let mut h2p = h2_seed;
    let h_seed = 0.5 * (h1_seed + h2_seed);
    for t in 1..=t_len as i64 {
        let h1 = th.a0 + th.a1 * h1p + th.a2 * ysq_at(t - 1);
        let mut acc = 0.0;
        for (j, rj) in r.iter().enumerate().skip(1) {
            acc += rj * ysq_at(t - j as i64);
        }
        let h2 = th.b0 + th.b1 * h2p + acc + (1.0 - th.b2) * presample * tail;
        let z = match *spec {
            TransitionSpec::LaggedReturn { lag } => yv(t - lag as i64),
            TransitionSpec::LaggedVariance { lag } => {
                let s = t - lag as i64;
                if s >= 1 {
                    out.h[(s - 1) as usize]
                } else {
                    h_seed
                }
            }
            TransitionSpec::AsymmetricAverage { .. } => {
                let y1 = yv(t - 1);
                if y1 * y1 < threshold {
                    y1
                } else {
                    (y1 + yv(t - 2) + yv(t - 3)) / 3.0
                }
            }
            TransitionSpec::FixedWeight { .. } => 0.0,
        };
        let w = match *spec {
            TransitionSpec::FixedWeight { w } => w,
            _ => (-th.gamma * z).exp() / (1.0 + (-th.gamma * z).exp()),
        };
        let h = (1.0 - w) * h1 + w * h2;
        out.h.push(h);
        out.h1.push(h1);
        out.h2.push(h2);
        out.w.push(w);
        h1p = h1;
        h2p = h2;
    }
    out
}

/// Reference filter with the estimation-time initialization.
pub fn reference_path(th: &Theta, spec: &TransitionSpec, y: &[f64], k: usize) -> RefPath {
    let n = y.len() as f64;
    let msq = y.iter().map(|v| v * v).sum::<f64>() / n;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let threshold = match *spec {
        TransitionSpec::AsymmetricAverage { percentile } => {
            let mut sq: Vec<f64> = y.iter().map(|v| v * v).collect();
            sq.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let pos = percentile * (sq.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sq[lo] + (pos - lo as f64) * (sq[hi] - sq[lo])
        }
        _ => f64::INFINITY,
    };
    reference_path_init(th, spec, y, k, msq, var, var, threshold)
}

/// `l_t = ln 2pi + ln h_t + y_t^2 / h_t` summed directly.
pub fn reference_neg2_loglik(h: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for (ht, yt) in h.iter().zip(y) {
        s += (2.0 * std::f64::consts::PI).ln() + ht.ln() + yt * yt / ht;
    }
    s
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Small deterministic normal-ish series (Box-Muller on an LCG), independent of the library RNG.
pub fn lcg_normals(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    };
    (0..n)
        .map(|_| {
            let u1 = next();
            let u2 = next();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}

pub fn paper_theta(gamma: f64) -> Theta {
    Theta::new(0.35, 0.30, 0.40, 0.10, 0.20, 0.0, 0.60, gamma)
}

/// `erfc` from the positive-term series `erf(x) = 2/sqrt(pi) e^{-x^2} sum 2^n x^{2n+1} / (2n+1)!!`
/// below 2 and a Lentz continued fraction above.
pub fn erfc_oracle(x: f64) -> f64 {
    assert!(x >= 0.0);
    let sqrt_pi = std::f64::consts::PI.sqrt();
    if x < 2.0 {
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        while term > 1e-18 * sum {
            k += 1.0;
            term *= 2.0 * x * x / (2.0 * k + 1.0);
            sum += term;
        }
        1.0 - 2.0 / sqrt_pi * (-x * x).exp() * sum
    } else {
        // erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        let tiny = 1e-300;
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for k in 1..500 {
            let a = k as f64 / 2.0;
            d = x + a * d;
            d = if d.abs() < tiny { tiny } else { d };
            c = x + a / c;
            c = if c.abs() < tiny { tiny } else { c };
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x * x).exp() / (sqrt_pi * f)
    }
}

/// Per-observation pieces: `g_t = dh_t / h_t` over `free` and `gamma`, `u_t = y_t^2/h_t - 1`.
pub fn raw_scores(eta: &Theta, spec: &TransitionSpec, init: &FilterInit, y: &[f64], k: usize, free: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let theta = Theta { gamma: 0.0, ..*eta };
    let e = evaluate(&theta, spec, init, y, k, true).unwrap();
    let dh = e.dh.unwrap();
    let idx: Vec<usize> = free.iter().copied().chain([7]).collect();
    let g = (0..y.len()).map(|t| idx.iter().map(|&i| dh[t][i] / e.path.h[t]).collect()).collect();
    let u = (0..y.len()).map(|t| y[t] * y[t] / e.path.h[t] - 1.0).collect();
    (g, u)
}

/// `xi' I^{-1} xi` with `I = kappa T^{-1} G'G` factored as `G = QR` by modified
/// Gram-Schmidt with one reorthogonalization pass, never forming `G'G`.
pub fn lm_oracle_mgs(eta: &Theta, spec: &TransitionSpec, init: &FilterInit, y: &[f64], k: usize, free: &[usize]) -> f64 {
    let (g, u) = raw_scores(eta, spec, init, y, k, free);
    let n = y.len();
    let p = free.len() + 1;
    let kappa = u.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let mut xi = vec![0.0; p];
    xi[p - 1] = -(0..n).map(|t| u[t] * g[t][p - 1]).sum::<f64>() / (n as f64).sqrt();
    let mut cols: Vec<Vec<f64>> = (0..p).map(|a| (0..n).map(|t| g[t][a]).collect()).collect();
    let mut r = vec![vec![0.0; p]; p];
    for a in 0..p {
        for _pass in 0..2 {
            for b in 0..a {
                let c: f64 = (0..n).map(|t| cols[b][t] * cols[a][t]).sum();
                r[b][a] += c;
                for t in 0..n {
                    cols[a][t] -= c * cols[b][t];
                }
            }
        }
        let norm = cols[a].iter().map(|v| v * v).sum::<f64>().sqrt();
        r[a][a] = norm;
        for v in cols[a].iter_mut() {
            *v /= norm;
        }
    }
    // I^{-1} = (T / kappa) R^{-1} R^{-T}, so xi' I^{-1} xi = (T / kappa) |R^{-T} xi|^2
    let mut v = vec![0.0; p];
    for a in 0..p {
        let s: f64 = (0..a).map(|b| r[b][a] * v[b]).sum();
        v[a] = (xi[a] - s) / r[a][a];
    }
    n as f64 / kappa * v.iter().map(|x| x * x).sum::<f64>()
}

/// `xi' I^{-1} xi` with `I = kappa T^{-1} sum g_t g_t'`, `g_t = dh_t / h_t` over
/// `free` and `gamma`, and `xi = (0, ..., 0, S)`; inverted by LU.
pub fn lm_oracle(eta: &Theta, spec: &TransitionSpec, init: &FilterInit, y: &[f64], k: usize, free: &[usize]) -> f64 {
    let theta = Theta { gamma: 0.0, ..*eta };
    let e = evaluate(&theta, spec, init, y, k, true).unwrap();
    let dh = e.dh.unwrap();
    let idx: Vec<usize> = free.iter().copied().chain([7]).collect();
    let p = idx.len();
    let n = y.len() as f64;
    let mut info = DMatrix::<f64>::zeros(p, p);
    let mut xi = DVector::<f64>::zeros(p);
    let mut kappa = 0.0;
    for t in 0..y.len() {
        let h = e.path.h[t];
        let g: Vec<f64> = idx.iter().map(|&i| dh[t][i] / h).collect();
        let u = y[t] * y[t] / h - 1.0;
        kappa += u * u / n;
        xi[p - 1] -= u * g[p - 1] / n.sqrt();
        for a in 0..p {
            for b in 0..p {
                info[(a, b)] += g[a] * g[b] / n;
            }
        }
    }
    info *= kappa;
    let inv = info.lu().try_inverse().unwrap();
    xi.dot(&(inv * &xi))
}
