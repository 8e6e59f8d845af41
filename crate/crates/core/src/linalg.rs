//! Factorizations shared by the posterior, the marginal likelihood and the
//! path sampler.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter levels tried in order; each is multiplied by a scale
/// (usually `alpha^2`) before being added to the diagonal.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factor of a symmetric positive-definite matrix together with the
/// absolute jitter that had to be added to its diagonal.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    pub factor: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl JitteredCholesky {
    /// Factorize `matrix`, escalating diagonal jitter along [`JITTER_LADDER`].
    pub fn new(matrix: &DMatrix<f64>, scale: f64) -> Result<Self> {
        let mut last = 0.0;
        for eps in JITTER_LADDER {
            let jitter = eps * scale;
            last = jitter;
            let mut m = matrix.clone();
            if jitter > 0.0 {
                for i in 0..m.nrows() {
                    m[(i, i)] += jitter;
                }
            }
            if let Some(factor) = Cholesky::new(m) {
                if jitter > 0.0 {
                    log::debug!("cholesky needed jitter {jitter:e}");
                }
                return Ok(Self { factor, jitter });
            }
        }
        Err(Error::FactorizationFailure { jitter: last })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(b)
    }

    /// `L^{-1} B` for the lower-triangular factor `L`.
    pub fn forward(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn forward_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn log_det(&self) -> f64 {
        let l = self.factor.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.factor.inverse()
    }
}

/// Low-rank factor `L` (n x r) with `L L^T` equal to a symmetric positive
/// semidefinite matrix up to a relative trace tolerance.
///
/// The matrix is first rescaled to unit diagonal so that blocks of very
/// different magnitude are treated alike. Elimination stops once every
/// remaining scaled pivot is at most `rel_tol`. Rows with a zero (or negative)
/// diagonal are treated as deterministic.
pub fn pivoted_cholesky(matrix: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "pivoted_cholesky: matrix must be square");
    let scale: Vec<f64> = (0..n).map(|i| matrix[(i, i)].max(0.0).sqrt()).collect();
    let scaled = |i: usize, j: usize| -> f64 {
        if scale[i] == 0.0 || scale[j] == 0.0 {
            0.0
        } else {
            matrix[(i, j)] / (scale[i] * scale[j])
        }
    };
    let mut resid: Vec<f64> = (0..n).map(|i| if scale[i] > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut pivoted = vec![false; n];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    loop {
        let (piv, best) = resid
            .iter()
            .enumerate()
            .filter(|(i, _)| !pivoted[*i])
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        if piv == usize::MAX || best <= rel_tol {
            break;
        }
        let root = best.sqrt();
        let mut col = vec![0.0; n];
        for j in 0..n {
            if pivoted[j] {
                continue;
            }
            let mut v = scaled(j, piv);
            for c in &cols {
                v -= c[j] * c[piv];
            }
            col[j] = v / root;
        }
        col[piv] = root;
        pivoted[piv] = true;
        resid[piv] = 0.0;
        for j in 0..n {
            if !pivoted[j] {
                resid[j] -= col[j] * col[j];
            }
        }
        cols.push(col);
    }
    let r = cols.len();
    DMatrix::from_fn(n, r, |i, k| cols[k][i] * scale[i])
}
