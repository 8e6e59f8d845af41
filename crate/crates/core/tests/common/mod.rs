//! Test-side reference implementations, written without the library's
//! kernel, posterior or index code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use scoretrend::{Hyperparams, ScoreSeries};

/// `d^k/dr^k` of `alpha^2 exp(-r^2 / (2 rho^2))`, written out by hand.
pub fn se_radial_derivative(k: usize, r: f64, alpha: f64, rho: f64) -> f64 {
    let f = alpha * alpha * (-r * r / (2.0 * rho * rho)).exp();
    let (r2, p2) = (r * r, rho * rho);
    let poly = match k {
        0 => 1.0,
        1 => -r / p2,
        2 => r2 / (p2 * p2) - 1.0 / p2,
        3 => 3.0 * r / (p2 * p2) - r * r2 / (p2 * p2 * p2),
        4 => r2 * r2 / (p2 * p2 * p2 * p2) - 6.0 * r2 / (p2 * p2 * p2) + 3.0 / (p2 * p2),
        _ => panic!("order {k}"),
    };
    f * poly
}

/// `Cov(d^(a)(s), d^(b)(t))`: `s` enters as `r = s - t`, `t` as `-r`.
pub fn cov_oracle(a: usize, b: usize, s: f64, t: f64, th: &Hyperparams) -> f64 {
    let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
    sign * se_radial_derivative(a + b, s - t, th.alpha, th.rho)
}

/// Block `(a, b)` of the joint prior covariance via [`cov_oracle`].
pub fn gram_oracle(a: usize, b: usize, g1: &[f64], g2: &[f64], th: &Hyperparams) -> DMatrix<f64> {
    DMatrix::from_fn(g1.len(), g2.len(), |i, j| cov_oracle(a, b, g1[i], g2[j], th))
}

/// Posterior of `(d, d', d'')` on `grid` by conditioning the assembled joint
/// Gaussian of latent values and noisy observations, using an LU-based
/// explicit inverse. Returns `(mean, covariance)` in block order
/// `d, d', d''`.
pub fn brute_force_conditioning(times: &[f64], y: &[f64], grid: &[f64], th: &Hyperparams) -> (DVector<f64>, DMatrix<f64>) {
    let p = grid.len();
    let j = times.len();
    let n = 3 * p + j;
    let mut pts: Vec<(usize, f64)> = Vec::with_capacity(n);
    for order in 0..3 {
        pts.extend(grid.iter().map(|&g| (order, g)));
    }
    pts.extend(times.iter().map(|&t| (9, t)));
    let order_of = |o: usize| if o == 9 { 0 } else { o };
    let mut sigma = DMatrix::from_fn(n, n, |r, c| {
        let (oa, sa) = pts[r];
        let (ob, sb) = pts[c];
        cov_oracle(order_of(oa), order_of(ob), sa, sb, th)
    });
    for k in 3 * p..n {
        sigma[(k, k)] += th.sigma * th.sigma;
    }
    let mean = DVector::from_fn(n, |r, _| if matches!(pts[r].0, 0 | 9) { th.beta } else { 0.0 });
    let sxx = sigma.view((0, 0), (3 * p, 3 * p)).into_owned();
    let sxy = sigma.view((0, 3 * p), (3 * p, j)).into_owned();
    let syy = sigma.view((3 * p, 3 * p), (j, j)).into_owned();
    let syy_inv = syy.lu().try_inverse().expect("invertible");
    let yv = DVector::from_column_slice(y);
    let resid = yv - mean.rows(3 * p, j);
    let mu = mean.rows(0, 3 * p) + &sxy * &syy_inv * resid;
    let cov = sxx - &sxy * &syy_inv * sxy.transpose();
    (mu, cov)
}

/// `log N(y | beta 1, C + sigma^2 I) + (J / 2) ln(2 pi)` from an LU
/// determinant and solve.
pub fn dense_loglik_oracle(times: &[f64], y: &[f64], th: &Hyperparams) -> f64 {
    let j = times.len();
    let mut k = gram_oracle(0, 0, times, times, th);
    for i in 0..j {
        k[(i, i)] += th.sigma * th.sigma;
    }
    let lu = k.clone().lu();
    let u = lu.u();
    let logdet: f64 = (0..j).map(|i| u[(i, i)].abs().ln()).sum();
    let r = DVector::from_iterator(j, y.iter().map(|v| v - th.beta));
    let w = lu.solve(&r).expect("invertible");
    -0.5 * logdet - 0.5 * r.dot(&w)
}

/// Observations of a GP draw with noise at `times`.
pub fn simulate_gp(times: &[f64], th: &Hyperparams, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let j = times.len();
    let mut k = gram_oracle(0, 0, times, times, th);
    for i in 0..j {
        k[(i, i)] += th.sigma * th.sigma;
    }
    let l = k.cholesky().expect("positive definite").l();
    let z = DVector::from_fn(j, |_, _| StandardNormal.sample(rng));
    (l * z).iter().map(|v| v + th.beta).collect()
}

/// Sorted distinct event times on `(0, end]`.
pub fn random_times(n: usize, end: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut t: Vec<f64> = (0..n).map(|_| end * (1.0 - rng.random::<f64>())).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

pub fn synthetic_series(n: usize, th: &Hyperparams, seed: u64) -> ScoreSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = random_times(n, 48.0, &mut rng);
    let y = simulate_gp(&times, th, &mut rng);
    ScoreSeries::from_events(times, y, 48.0).expect("valid series")
}

/// Monte-Carlo zero-crossing rate of a process whose value and slope at a
/// point are jointly Gaussian `(x, x')`: the process is linearized over a
/// window of width `delta` centred on the point and a crossing is counted
/// when the endpoint values differ in sign (Kac counting).
pub fn mc_crossing_rate(mu: [f64; 2], v1: f64, v2: f64, c12: f64, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l11 = v1.sqrt();
    let l21 = c12 / l11;
    let l22 = (v2 - l21 * l21).max(0.0).sqrt();
    let delta = 0.05 * v1.sqrt() / v2.sqrt();
    let half = 0.5 * delta;
    let mut hits = 0u64;
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let x = mu[0] + l11 * z1;
        let xp = mu[1] + l21 * z1 + l22 * z2;
        if (x - half * xp) * (x + half * xp) < 0.0 {
            hits += 1;
        }
    }
    hits as f64 / n as f64 / delta
}

/// Sign changes along each row (one sampled path per row).
pub fn sign_changes(paths: &DMatrix<f64>) -> Vec<usize> {
    paths
        .row_iter()
        .map(|r| {
            let v: Vec<f64> = r.iter().copied().collect();
            v.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
        })
        .collect()
}

/// Kolmogorov-Smirnov distance between a sample and a CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Five-point central difference.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn random_theta(rng: &mut ChaCha8Rng) -> Hyperparams {
    Hyperparams::new(
        rng.random_range(-5.0..5.0),
        rng.random_range(0.5..8.0),
        rng.random_range(0.5..10.0),
        rng.random_range(0.3..3.0),
    )
    .expect("valid hyperparameters")
}
