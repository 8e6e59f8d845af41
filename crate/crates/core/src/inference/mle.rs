//! Multi-start marginal maximum likelihood.
//!
//! The search runs over `(beta, ln alpha, ln rho, ln sigma)` with a BFGS
//! quasi-Newton method and backtracking line search, using the analytic
//! gradient of the marginal likelihood. Positivity of `alpha`, `rho` and
//! `sigma` is therefore structural.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::likelihood::marginal_loglik_grad;
use crate::error::{Error, Result};
use crate::ingest::ScoreSeries;
use crate::kernel::Hyperparams;
use crate::stats;

/// Box on the log-scale parameters; the objective is `+inf` outside it.
const LOG_BOUND: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MleOptions {
    /// Number of starting points (four moment-based, the rest jittered copies).
    pub starts: usize,
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the gradient.
    pub grad_tol: f64,
    /// Seed of the start jitter.
    pub seed: u64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { starts: 8, max_iter: 300, grad_tol: 1e-5, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MleFit {
    pub theta: Hyperparams,
    pub loglik: f64,
    /// Starting points actually used.
    pub starts: Vec<Hyperparams>,
    /// Final log likelihood reached from each start (`-inf` if that run failed).
    pub start_logliks: Vec<f64>,
}

/// Moment-based starting points plus jittered copies.
pub fn initial_points(s: &ScoreSeries, opts: &MleOptions) -> Vec<[f64; 4]> {
    let mean = stats::mean(&s.diffs);
    let sd = stats::sd(&s.diffs).max(1e-2);
    let t0 = s.times.first().copied().unwrap_or(0.0);
    let t1 = s.times.last().copied().unwrap_or(s.domain_end);
    let range = (t1 - t0).max(s.domain_end * 0.05).max(1e-3);
    let mut base = Vec::new();
    for rho in [range / 10.0, range / 4.0] {
        for sigma in [1.0, (sd / 4.0).max(1e-2)] {
            base.push([mean, sd.ln(), rho.ln(), sigma.ln()]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let jitter = Normal::new(0.0, 0.5).expect("valid normal");
    let mut out = Vec::with_capacity(opts.starts);
    for i in 0..opts.starts {
        let mut x = base[i % base.len()];
        if i >= base.len() {
            x[0] += jitter.sample(&mut rng) * sd;
            for v in x.iter_mut().skip(1) {
                *v += jitter.sample(&mut rng);
            }
        }
        out.push(x);
    }
    out
}

fn in_box(x: &[f64; 4]) -> bool {
    x[1..].iter().all(|v| v.abs() <= LOG_BOUND) && x.iter().all(|v| v.is_finite())
}

/// Negative log likelihood and gradient in unconstrained coordinates.
fn objective(s: &ScoreSeries, x: &[f64; 4]) -> Option<(f64, [f64; 4])> {
    if !in_box(x) {
        return None;
    }
    let th = Hyperparams::from_unconstrained(x);
    let (v, g) = marginal_loglik_grad(&s.times, &s.diffs, &th).ok()?;
    if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some((-v, [-g[0], -g[1], -g[2], -g[3]]))
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS from `x0`; returns the final point and objective value.
fn bfgs(s: &ScoreSeries, x0: [f64; 4], opts: &MleOptions) -> Option<([f64; 4], f64)> {
    let (mut f, mut g) = objective(s, &x0)?;
    let mut x = x0;
    let mut h = [[0.0; 4]; 4];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut first = true;
    for _ in 0..opts.max_iter {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < opts.grad_tol {
            break;
        }
        let mut p = [0.0; 4];
        for i in 0..4 {
            p[i] = -(0..4).map(|j| h[i][j] * g[j]).sum::<f64>();
        }
        if dot(&p, &g) >= 0.0 {
            for (i, row) in h.iter_mut().enumerate() {
                *row = [0.0; 4];
                row[i] = 1.0;
            }
            p = [-g[0], -g[1], -g[2], -g[3]];
        }
        let slope = dot(&p, &g);
        let pnorm = dot(&p, &p).sqrt();
        let mut step = if first { (1.0 / pnorm).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xn = [x[0] + step * p[0], x[1] + step * p[1], x[2] + step * p[2], x[3] + step * p[3]];
            if let Some((fnew, gnew)) = objective(s, &xn) {
                if fnew <= f + 1e-4 * step * slope {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else { break };
        let sv = [xn[0] - x[0], xn[1] - x[1], xn[2] - x[2], xn[3] - x[3]];
        let yv = [gnew[0] - g[0], gnew[1] - g[1], gnew[2] - g[2], gnew[3] - g[3]];
        let sy = dot(&sv, &yv);
        if sy > 1e-12 {
            if first {
                let scale = sy / dot(&yv, &yv);
                for (i, row) in h.iter_mut().enumerate() {
                    *row = [0.0; 4];
                    row[i] = scale;
                }
            }
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            let rho = 1.0 / sy;
            let mut hy = [0.0; 4];
            for i in 0..4 {
                hy[i] = (0..4).map(|j| h[i][j] * yv[j]).sum();
            }
            let yhy = dot(&yv, &hy);
            for i in 0..4 {
                for j in 0..4 {
                    h[i][j] += rho * ((1.0 + rho * yhy) * sv[i] * sv[j] - hy[i] * sv[j] - sv[i] * hy[j]);
                }
            }
            first = false;
        }
        let converged = (f - fnew).abs() <= 1e-12 * (1.0 + f.abs());
        x = xn;
        f = fnew;
        g = gnew;
        if converged {
            break;
        }
    }
    Some((x, f))
}

/// Marginal maximum-likelihood estimate from several starting points.
pub fn fit_mle(s: &ScoreSeries, opts: &MleOptions) -> Result<MleFit> {
    if opts.starts == 0 {
        return Err(Error::InvalidInput("need at least one optimizer start".into()));
    }
    let starts = initial_points(s, opts);
    let mut best: Option<([f64; 4], f64)> = None;
    let mut start_logliks = Vec::with_capacity(starts.len());
    for x0 in &starts {
        match bfgs(s, *x0, opts) {
            Some((x, f)) => {
                start_logliks.push(-f);
                if best.map_or(true, |(_, bf)| f < bf) {
                    best = Some((x, f));
                }
            }
            None => start_logliks.push(f64::NEG_INFINITY),
        }
    }
    let (x, f) = best.ok_or_else(|| {
        Error::OptimizerDiverged(format!("objective not finite at any of {} starts", starts.len()))
    })?;
    Ok(MleFit {
        theta: Hyperparams::from_unconstrained(&x),
        loglik: -f,
        starts: starts.iter().map(Hyperparams::from_unconstrained).collect(),
        start_logliks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::likelihood::marginal_loglik;

    fn wave() -> ScoreSeries {
        let times: Vec<f64> = (1..=60).map(|i| i as f64 * 0.8).collect();
        let diffs: Vec<f64> = times
            .iter()
            .enumerate()
            .map(|(i, t)| (8.0 * (t / 7.0).sin() + if i % 3 == 0 { 1.0 } else { -0.5 }).round())
            .collect();
        ScoreSeries::from_events(times, diffs, 48.0).unwrap()
    }

    #[test]
    fn beats_every_start() {
        let s = wave();
        let fit = fit_mle(&s, &MleOptions::default()).unwrap();
        assert_eq!(fit.starts.len(), 8);
        for st in &fit.starts {
            assert!(fit.loglik >= marginal_loglik(st, &s).unwrap());
        }
        assert!((marginal_loglik(&fit.theta, &s).unwrap() - fit.loglik).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let s = wave();
        let a = fit_mle(&s, &MleOptions::default()).unwrap();
        let b = fit_mle(&s, &MleOptions::default()).unwrap();
        assert_eq!(a.theta, b.theta);
    }
}
