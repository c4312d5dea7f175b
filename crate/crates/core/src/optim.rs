//! Unconstrained BFGS minimizer with a strong-Wolfe line search.
//!
//! Objective evaluations may fail (return `None`) or be non-finite, for
//! example when a trial point drives a conditional variance negative; the
//! line search treats those as `+inf` and backtracks.

/// Stopping rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Sup-norm of the gradient below which the run is converged.
    pub grad_tol: f64,
    /// Relative objective change below which the run stops.
    pub f_rel_tol: f64,
    /// Largest sup-norm of a single step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-6, f_rel_tol: 1e-10, max_step: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub n_iter: usize,
    pub n_eval: usize,
    pub converged: bool,
    /// Objective after each accepted iteration, starting with `f(x0)`.
    pub trace: Vec<f64>,
}

impl BfgsResult {
    pub fn grad_norm(&self) -> f64 {
        sup_norm(&self.grad)
    }
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Counted<F> {
    f: F,
    n: usize,
}

impl<F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.n += 1;
        match (self.f)(x) {
            Some((v, g)) if v.is_finite() && g.iter().all(|c| c.is_finite()) => Some((v, g)),
            _ => None,
        }
    }
}

struct LinePoint {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

/// Minimizes `f` from `x0`. `f` returns the value and gradient, or `None`
/// outside its domain. Returns `None` only if `f(x0)` itself fails.
pub fn minimize<F>(f: F, x0: &[f64], opts: &BfgsOptions) -> Option<BfgsResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut obj = Counted { f, n: 0 };
    let (mut fx, mut gx) = obj.eval(x0)?;
    let mut x = x0.to_vec();
    let mut hinv = identity(n);
    let mut trace = vec![fx];
    let mut n_iter = 0;
    let mut first_step = true;
    let mut stalled = false;

    while n_iter < opts.max_iter {
        if sup_norm(&gx) < opts.grad_tol {
            break;
        }
        let mut p = mat_vec(&hinv, &gx).iter().map(|v| -v).collect::<Vec<_>>();
        let mut slope = dot(&p, &gx);
        if slope >= 0.0 {
            hinv = identity(n);
            p = gx.iter().map(|v| -v).collect();
            slope = dot(&p, &gx);
        }
        let pmax = sup_norm(&p);
        let alpha0 = if pmax > opts.max_step { opts.max_step / pmax } else { 1.0 };

        let Some(step) = wolfe_search(&mut obj, &x, fx, slope, &p, alpha0) else {
            // a failed search along steepest descent means no progress is possible
            if first_step {
                break;
            }
            hinv = identity(n);
            first_step = true;
            continue;
        };
        n_iter += 1;

        let s: Vec<f64> = p.iter().map(|v| v * step.alpha).collect();
        let yv: Vec<f64> = step.g.iter().zip(&gx).map(|(a, b)| a - b).collect();
        for i in 0..n {
            x[i] += s[i];
        }
        let f_old = fx;
        fx = step.f;
        gx = step.g;
        trace.push(fx);

        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            if first_step {
                let scale = sy / dot(&yv, &yv);
                hinv = identity(n);
                for i in 0..n {
                    hinv[i * n + i] = scale;
                }
            }
            bfgs_update(&mut hinv, &s, &yv, sy);
            first_step = false;
        }

        // two consecutive stalled iterations end the run
        if (f_old - fx).abs() <= opts.f_rel_tol * fx.abs().max(f64::MIN_POSITIVE) {
            if stalled {
                break;
            }
            stalled = true;
        } else {
            stalled = false;
        }
    }
    let converged = sup_norm(&gx) < opts.grad_tol;
    Some(BfgsResult { x, f: fx, grad: gx, n_iter, n_eval: obj.n, converged, trace })
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

// H <- (I - rho s y') H (I - rho y s') + rho s s'
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

fn wolfe_search<F>(
    obj: &mut Counted<F>,
    x: &[f64],
    f0: f64,
    slope0: f64,
    p: &[f64],
    alpha0: f64,
) -> Option<LinePoint>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let eval_at = |obj: &mut Counted<F>, alpha: f64| -> Option<LinePoint> {
        let xt: Vec<f64> = x.iter().zip(p).map(|(a, b)| a + alpha * b).collect();
        obj.eval(&xt).map(|(f, g)| {
            let slope = dot(&g, p);
            LinePoint { alpha, f, g, slope }
        })
    };

    let mut lo = LinePoint { alpha: 0.0, f: f0, g: Vec::new(), slope: slope0 };
    let mut alpha = alpha0;
    let mut best: Option<LinePoint> = None;

    // bracketing phase
    let mut hi: Option<LinePoint> = None;
    for _ in 0..40 {
        match eval_at(obj, alpha) {
            None => {
                // outside the domain: shrink toward the last good point
                alpha = lo.alpha + 0.3 * (alpha - lo.alpha);
                if alpha - lo.alpha < 1e-16 {
                    break;
                }
                continue;
            }
            Some(pt) => {
                if pt.f > f0 + C1 * pt.alpha * slope0 || pt.f >= lo.f && lo.alpha > 0.0 {
                    hi = Some(pt);
                    break;
                }
                if pt.slope.abs() <= -C2 * slope0 {
                    return Some(pt);
                }
                if pt.slope >= 0.0 {
                    hi = Some(LinePoint { alpha: lo.alpha, f: lo.f, g: lo.g.clone(), slope: lo.slope });
                    lo = pt;
                    break;
                }
                let next = 2.0 * pt.alpha;
                best = Some(LinePoint { alpha: pt.alpha, f: pt.f, g: pt.g.clone(), slope: pt.slope });
                lo = pt;
                alpha = next;
            }
        }
    }
    let Some(mut hi) = hi else {
        return best;
    };

    // zoom phase
    for _ in 0..40 {
        let a = interpolate(&lo, &hi);
        match eval_at(obj, a) {
            None => {
                hi = LinePoint { alpha: a, f: f64::INFINITY, g: Vec::new(), slope: 0.0 };
            }
            Some(pt) => {
                if pt.f > f0 + C1 * pt.alpha * slope0 || pt.f >= lo.f {
                    hi = pt;
                } else {
                    if pt.slope.abs() <= -C2 * slope0 {
                        return Some(pt);
                    }
                    if pt.slope * (hi.alpha - lo.alpha) >= 0.0 {
                        hi = LinePoint { alpha: lo.alpha, f: lo.f, g: lo.g.clone(), slope: lo.slope };
                    }
                    lo = pt;
                }
            }
        }
        if (hi.alpha - lo.alpha).abs() < 1e-14 * lo.alpha.abs().max(1e-8) {
            break;
        }
    }
    // accept a sufficient-decrease point even without the curvature condition
    if lo.alpha > 0.0 {
        Some(lo)
    } else {
        None
    }
}

// cubic interpolation with safeguards, falling back to bisection
fn interpolate(lo: &LinePoint, hi: &LinePoint) -> f64 {
    let (a0, a1) = (lo.alpha, hi.alpha);
    let mid = 0.5 * (a0 + a1);
    if !hi.f.is_finite() || hi.g.is_empty() {
        // quadratic through f(lo), slope(lo), f(hi) when possible
        if hi.f.is_finite() {
            let da = a1 - a0;
            let denom = 2.0 * (hi.f - lo.f - lo.slope * da);
            if denom > 0.0 {
                let a = a0 - lo.slope * da * da / denom;
                return safeguard(a, a0, a1);
            }
        }
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a0 - a1);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (a1 - a0).signum() * disc.sqrt();
    let a = a1 - (a1 - a0) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    if !a.is_finite() {
        return mid;
    }
    safeguard(a, a0, a1)
}

fn safeguard(a: f64, a0: f64, a1: f64) -> f64 {
    let (l, u) = if a0 < a1 { (a0, a1) } else { (a1, a0) };
    let margin = 0.1 * (u - l);
    a.clamp(l + margin, u - margin)
}
