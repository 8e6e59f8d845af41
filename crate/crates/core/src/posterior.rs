//! Joint posterior of the latent score difference `d` and its first two time
//! derivatives on an evaluation grid.
//!
//! All nine moment blocks share the factorization of `C(t_m, t_m) + sigma^2 I`.
//! With `L` its Cholesky factor and `A_k` the cross-covariance between the
//! `k`-th derivative on the grid and the observations, each block is
//! `prior_jk - (L^-1 A_j^T)^T (L^-1 A_k^T)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ScoreSeries;
use crate::kernel::{gram, mean_fn, Hyperparams};
use crate::linalg::{pivoted_cholesky, JitteredCholesky};

/// Diagonal entries below this are reported as more than roundoff.
pub const CLIP_WARN_LEVEL: f64 = -1e-8;

/// Pivot tolerance (on the unit-diagonal scale) for path sampling.
pub const SAMPLING_PIVOT_TOL: f64 = 1e-12;

/// Which derivative of the latent process a block refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Level,
    Slope,
    Curvature,
}

impl Component {
    fn order(self) -> usize {
        match self {
            Component::Level => 0,
            Component::Slope => 1,
            Component::Curvature => 2,
        }
    }
}

/// Observations conditioned on once; reused for any grid.
pub struct Conditioner<'a> {
    times: &'a [f64],
    theta: Hyperparams,
    chol: JitteredCholesky,
    weights: DVector<f64>,
}

impl<'a> Conditioner<'a> {
    pub fn new(times: &'a [f64], diffs: &[f64], theta: &Hyperparams) -> Result<Self> {
        theta.validate()?;
        let mut k = gram(0, 0, times, times, theta)?;
        for i in 0..times.len() {
            k[(i, i)] += theta.sigma * theta.sigma;
        }
        let chol = JitteredCholesky::new(&k, theta.alpha * theta.alpha)?;
        let resid = DVector::from_iterator(diffs.len(), diffs.iter().map(|d| d - theta.beta));
        let weights = chol.solve(&resid);
        Ok(Self { times, theta: *theta, chol, weights })
    }

    pub fn jitter(&self) -> f64 {
        self.chol.jitter
    }

    fn cross(&self, order: usize, grid: &[f64]) -> Result<DMatrix<f64>> {
        gram(order, 0, grid, self.times, &self.theta)
    }

    fn mean(&self, order: usize, grid: &[f64], cross: &DMatrix<f64>) -> DVector<f64> {
        let mut mu = cross * &self.weights;
        for (m, &t) in mu.iter_mut().zip(grid) {
            *m += mean_fn(order, t, &self.theta);
        }
        mu
    }

    /// Full posterior moments including the six covariance blocks.
    pub fn moments(&self, grid: &[f64]) -> Result<PosteriorMoments> {
        if grid.is_empty() {
            return Err(Error::InvalidInput("empty evaluation grid".into()));
        }
        let th = &self.theta;
        let a: Vec<DMatrix<f64>> = (0..3).map(|k| self.cross(k, grid)).collect::<Result<_>>()?;
        let v: Vec<DMatrix<f64>> = a.iter().map(|ak| self.chol.forward(&ak.transpose())).collect();
        let block = |j: usize, k: usize| -> Result<DMatrix<f64>> {
            Ok(gram(j, k, grid, grid, th)? - v[j].tr_mul(&v[k]))
        };
        let mut m = PosteriorMoments {
            grid: grid.to_vec(),
            mu_d: self.mean(0, grid, &a[0]),
            mu_d1: self.mean(1, grid, &a[1]),
            mu_d2: self.mean(2, grid, &a[2]),
            s_dd: block(0, 0)?,
            s_d1d1: block(1, 1)?,
            s_d2d2: block(2, 2)?,
            s_dd1: block(0, 1)?,
            s_dd2: block(0, 2)?,
            s_d1d2: block(1, 2)?,
            sigma: th.sigma,
            jitter: self.chol.jitter,
            clipped: 0,
        };
        let mut clipped = 0;
        for s in [&mut m.s_dd, &mut m.s_d1d1, &mut m.s_d2d2] {
            for i in 0..s.nrows() {
                clipped += clip(&mut s[(i, i)]);
            }
        }
        m.clipped = clipped;
        Ok(m)
    }

    /// Means and the pointwise variances/covariance needed by the indices,
    /// without forming any p x p block.
    pub fn pointwise(&self, grid: &[f64]) -> Result<PointwiseMoments> {
        if grid.is_empty() {
            return Err(Error::InvalidInput("empty evaluation grid".into()));
        }
        let th = &self.theta;
        let a: Vec<DMatrix<f64>> = (0..3).map(|k| self.cross(k, grid)).collect::<Result<_>>()?;
        let v: Vec<DMatrix<f64>> = a.iter().map(|ak| self.chol.forward(&ak.transpose())).collect();
        let a2 = th.alpha * th.alpha;
        let prior_var = [a2, a2 / th.rho.powi(2), 3.0 * a2 / th.rho.powi(4)];
        let p = grid.len();
        let col_dot = |x: &DMatrix<f64>, y: &DMatrix<f64>, i: usize| x.column(i).dot(&y.column(i));
        let mut clipped = 0;
        let mut var = |k: usize| -> Vec<f64> {
            (0..p)
                .map(|i| {
                    let mut s = prior_var[k] - col_dot(&v[k], &v[k], i);
                    clipped += clip(&mut s);
                    s
                })
                .collect()
        };
        let var_d = var(0);
        let var_d1 = var(1);
        let var_d2 = var(2);
        // cross-covariance of d' and d'' has zero prior term at zero lag
        let cov_d1d2 = (0..p).map(|i| -col_dot(&v[1], &v[2], i)).collect();
        Ok(PointwiseMoments {
            grid: grid.to_vec(),
            mu_d: self.mean(0, grid, &a[0]).as_slice().to_vec(),
            mu_d1: self.mean(1, grid, &a[1]).as_slice().to_vec(),
            mu_d2: self.mean(2, grid, &a[2]).as_slice().to_vec(),
            var_d,
            var_d1,
            var_d2,
            cov_d1d2,
            clipped,
        })
    }
}

fn clip(x: &mut f64) -> usize {
    if *x < 0.0 {
        if *x < CLIP_WARN_LEVEL {
            log::warn!("posterior variance {x:e} clipped to 0");
        }
        *x = 0.0;
        1
    } else {
        0
    }
}

/// Posterior means and covariance blocks of `(d, d', d'')` on a grid.
#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    pub grid: Vec<f64>,
    pub mu_d: DVector<f64>,
    pub mu_d1: DVector<f64>,
    pub mu_d2: DVector<f64>,
    pub s_dd: DMatrix<f64>,
    pub s_d1d1: DMatrix<f64>,
    pub s_d2d2: DMatrix<f64>,
    pub s_dd1: DMatrix<f64>,
    pub s_dd2: DMatrix<f64>,
    pub s_d1d2: DMatrix<f64>,
    /// Observation noise SD, kept for predictive intervals.
    pub sigma: f64,
    /// Absolute jitter added to the observation covariance.
    pub jitter: f64,
    /// Number of negative diagonal entries clipped to zero.
    pub clipped: usize,
}

/// Pointwise slice of [`PosteriorMoments`]; this is also the JSON dump format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseMoments {
    pub grid: Vec<f64>,
    pub mu_d: Vec<f64>,
    pub mu_d1: Vec<f64>,
    pub mu_d2: Vec<f64>,
    pub var_d: Vec<f64>,
    pub var_d1: Vec<f64>,
    pub var_d2: Vec<f64>,
    pub cov_d1d2: Vec<f64>,
    #[serde(skip)]
    pub clipped: usize,
}

impl PointwiseMoments {
    /// `var_d + sigma^2`, the variance of a new observation at each grid point.
    pub fn predictive_var(&self, sigma: f64) -> Vec<f64> {
        self.var_d.iter().map(|v| v + sigma * sigma).collect()
    }
}

/// Posterior moments of `(d, d', d'')` at `grid` given the observed series.
pub fn posterior_moments(s: &ScoreSeries, theta: &Hyperparams, grid: &[f64]) -> Result<PosteriorMoments> {
    Conditioner::new(&s.times, &s.diffs, theta)?.moments(grid)
}

/// Cheaper variant of [`posterior_moments`] keeping only what the indices use.
pub fn pointwise_moments(s: &ScoreSeries, theta: &Hyperparams, grid: &[f64]) -> Result<PointwiseMoments> {
    Conditioner::new(&s.times, &s.diffs, theta)?.pointwise(grid)
}

impl PosteriorMoments {
    pub fn p(&self) -> usize {
        self.grid.len()
    }

    pub fn mean(&self, c: Component) -> &DVector<f64> {
        match c {
            Component::Level => &self.mu_d,
            Component::Slope => &self.mu_d1,
            Component::Curvature => &self.mu_d2,
        }
    }

    /// Covariance block between two components, `Cov(c1(grid), c2(grid))`.
    pub fn block(&self, c1: Component, c2: Component) -> DMatrix<f64> {
        let (j, k) = (c1.order(), c2.order());
        let get = |j: usize, k: usize| -> &DMatrix<f64> {
            match (j, k) {
                (0, 0) => &self.s_dd,
                (1, 1) => &self.s_d1d1,
                (2, 2) => &self.s_d2d2,
                (0, 1) => &self.s_dd1,
                (0, 2) => &self.s_dd2,
                (1, 2) => &self.s_d1d2,
                _ => unreachable!(),
            }
        };
        if j <= k {
            get(j, k).clone()
        } else {
            get(k, j).transpose()
        }
    }

    /// The joint mean vector and covariance of the selected components,
    /// stacked in the given order.
    pub fn joint(&self, comps: &[Component]) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.p();
        let n = p * comps.len();
        let mut mu = DVector::zeros(n);
        let mut cov = DMatrix::zeros(n, n);
        for (bi, &ci) in comps.iter().enumerate() {
            mu.rows_mut(bi * p, p).copy_from(self.mean(ci));
            for (bj, &cj) in comps.iter().enumerate() {
                cov.view_mut((bi * p, bj * p), (p, p)).copy_from(&self.block(ci, cj));
            }
        }
        (mu, cov)
    }

    /// The full `3p x 3p` posterior covariance of `(d, d', d'')`.
    pub fn full_covariance(&self) -> DMatrix<f64> {
        self.joint(&[Component::Level, Component::Slope, Component::Curvature]).1
    }

    pub fn pointwise(&self) -> PointwiseMoments {
        let p = self.p();
        PointwiseMoments {
            grid: self.grid.clone(),
            mu_d: self.mu_d.as_slice().to_vec(),
            mu_d1: self.mu_d1.as_slice().to_vec(),
            mu_d2: self.mu_d2.as_slice().to_vec(),
            var_d: (0..p).map(|i| self.s_dd[(i, i)]).collect(),
            var_d1: (0..p).map(|i| self.s_d1d1[(i, i)]).collect(),
            var_d2: (0..p).map(|i| self.s_d2d2[(i, i)]).collect(),
            cov_d1d2: (0..p).map(|i| self.s_d1d2[(i, i)]).collect(),
            clipped: self.clipped,
        }
    }

    /// Pointwise correlation of `d'` and `d''`.
    pub fn slope_curvature_corr(&self) -> Vec<f64> {
        (0..self.p())
            .map(|i| {
                let den = (self.s_d1d1[(i, i)] * self.s_d2d2[(i, i)]).sqrt();
                if den > 0.0 {
                    self.s_d1d2[(i, i)] / den
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Draws of the selected components, one row per draw, columns stacked as in
/// [`PosteriorMoments::joint`].
///
/// The covariance is factorized with a pivoted (rank-revealing) Cholesky
/// decomposition, so numerically singular directions are dropped rather than
/// inflated by jitter.
pub fn sample_paths(m: &PosteriorMoments, comps: &[Component], n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("number of draws must be positive".into()));
    }
    let (mu, cov) = m.joint(comps);
    let factor = pivoted_cholesky(&cov, SAMPLING_PIVOT_TOL);
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(Error::FactorizationFailure { jitter: 0.0 });
    }
    let r = factor.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(r, n, |_, _| StandardNormal.sample(&mut rng));
    let mut draws = (&factor * z).transpose();
    for mut row in draws.row_iter_mut() {
        row += mu.transpose();
    }
    Ok(draws)
}

/// Joint draws of `(d, d', d'')` on the grid, `n x 3p`.
pub fn sample_joint_paths(m: &PosteriorMoments, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    sample_paths(m, &[Component::Level, Component::Slope, Component::Curvature], n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series() -> ScoreSeries {
        let times = vec![1.0, 4.5, 9.0, 15.0, 22.0, 30.5, 38.0, 44.0];
        let diffs = vec![2.0, -1.0, 3.0, 7.0, 5.0, 9.0, 4.0, 6.0];
        ScoreSeries::from_events(times, diffs, 48.0).unwrap()
    }

    #[test]
    fn near_interpolation_with_tiny_noise() {
        let s = series();
        let th = Hyperparams::new(0.0, 5.0, 3.0, 1e-6).unwrap();
        let m = posterior_moments(&s, &th, &s.times).unwrap();
        for (mu, d) in m.mu_d.iter().zip(&s.diffs) {
            assert!((mu - d).abs() < 1e-3);
        }
    }

    #[test]
    fn negation_symmetry() {
        let s = series();
        let th = Hyperparams::new(1.5, 4.0, 5.0, 1.2).unwrap();
        let grid = [0.0, 12.0, 24.0, 36.0, 48.0];
        let a = posterior_moments(&s, &th, &grid).unwrap();
        let flipped = Hyperparams { beta: -1.5, ..th };
        let b = posterior_moments(&s.flipped(), &flipped, &grid).unwrap();
        assert_eq!(a.mu_d, -b.mu_d.clone());
        assert_eq!(a.mu_d1, -b.mu_d1.clone());
        assert_eq!(a.mu_d2, -b.mu_d2.clone());
        assert_eq!(a.s_dd, b.s_dd);
        assert_eq!(a.s_d1d2, b.s_d1d2);
        assert_eq!(a.s_d2d2, b.s_d2d2);
    }

    #[test]
    fn pointwise_matches_full() {
        let s = series();
        let th = Hyperparams::new(0.5, 4.0, 5.0, 1.2).unwrap();
        let grid: Vec<f64> = (0..=12).map(|i| i as f64 * 4.0).collect();
        let full = posterior_moments(&s, &th, &grid).unwrap().pointwise();
        let fast = pointwise_moments(&s, &th, &grid).unwrap();
        for (x, y) in [
            (&full.mu_d1, &fast.mu_d1),
            (&full.var_d, &fast.var_d),
            (&full.var_d1, &fast.var_d1),
            (&full.var_d2, &fast.var_d2),
            (&full.cov_d1d2, &fast.cov_d1d2),
        ] {
            for (a, b) in x.iter().zip(y.iter()) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn posterior_variance_below_prior() {
        let s = series();
        let th = Hyperparams::new(0.0, 6.0, 4.0, 0.8).unwrap();
        let grid: Vec<f64> = (0..=24).map(|i| i as f64 * 2.0).collect();
        let m = pointwise_moments(&s, &th, &grid).unwrap();
        for i in 0..grid.len() {
            assert!(m.var_d[i] <= 36.0 + 1e-8);
            assert!(m.var_d1[i] <= 36.0 / 16.0 + 1e-8);
            assert!(m.var_d2[i] <= 3.0 * 36.0 / 256.0 + 1e-8);
        }
    }

    #[test]
    fn grid_restriction_consistent() {
        let s = series();
        let th = Hyperparams::new(0.0, 6.0, 4.0, 0.8).unwrap();
        let big = [0.0, 5.0, 10.0, 20.0, 33.0, 48.0];
        let small = [5.0, 33.0];
        let mb = posterior_moments(&s, &th, &big).unwrap();
        let ms = posterior_moments(&s, &th, &small).unwrap();
        let idx = [1, 4];
        for (a, &i) in idx.iter().enumerate() {
            assert!((mb.mu_d1[i] - ms.mu_d1[a]).abs() < 1e-10);
            for (b, &j) in idx.iter().enumerate() {
                assert!((mb.s_dd2[(i, j)] - ms.s_dd2[(a, b)]).abs() < 1e-10);
                assert!((mb.s_d1d2[(i, j)] - ms.s_d1d2[(a, b)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn translation_invariance() {
        let s = series();
        let th = Hyperparams::new(0.0, 6.0, 4.0, 0.8).unwrap();
        let grid = [3.0, 17.0, 40.0];
        let a = posterior_moments(&s, &th, &grid).unwrap();
        let mut shifted = s.clone();
        shifted.times.iter_mut().for_each(|t| *t += 100.0);
        let grid2: Vec<f64> = grid.iter().map(|t| t + 100.0).collect();
        let b = Conditioner::new(&shifted.times, &shifted.diffs, &th).unwrap().moments(&grid2).unwrap();
        assert!((a.mu_d1.clone() - b.mu_d1.clone()).amax() < 1e-9);
        assert!((a.s_d1d1.clone() - b.s_d1d1.clone()).amax() < 1e-9);
        assert!((a.s_dd2.clone() - b.s_dd2.clone()).amax() < 1e-9);
    }

    #[test]
    fn omega_in_range() {
        let s = series();
        let th = Hyperparams::new(0.0, 6.0, 4.0, 0.8).unwrap();
        let grid: Vec<f64> = (0..=48).map(|i| i as f64).collect();
        let m = posterior_moments(&s, &th, &grid).unwrap();
        assert!(m.slope_curvature_corr().iter().all(|w| w.abs() <= 1.0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = series();
        let th = Hyperparams::new(0.0, 6.0, 4.0, 0.8).unwrap();
        let m = posterior_moments(&s, &th, &[0.0, 10.0, 20.0]).unwrap();
        let a = sample_joint_paths(&m, 5, 7).unwrap();
        let b = sample_joint_paths(&m, 5, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), (5, 9));
        assert!(sample_joint_paths(&m, 0, 7).is_err());
    }
}
