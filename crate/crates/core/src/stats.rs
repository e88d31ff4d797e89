//! Least squares, residual covariances, log-determinant ratios and the
//! chi-square(1) upper tail.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("degenerate design: {rows} rows x {cols} columns")]
    DegenerateDesign { rows: usize, cols: usize },
    #[error("design has {design} rows but target has {target}")]
    LengthMismatch { design: usize, target: usize },
    #[error("residual covariance needs at least 2 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("covariance submatrix of order {order} is not positive definite after regularization")]
    SingularCovariance { order: usize },
    #[error("tail order {t} outside [2, {size}]")]
    BadOrder { t: usize, size: usize },
}

/// Result of an ordinary least squares fit.
///
/// With an intercept the first coefficient is the intercept.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    pub mse: f64,
    pub n_rows: usize,
    pub n_cols: usize,
}

/// Least squares through an SVD; rank-deficient designs get the minimum-norm solution.
pub fn ols(design: &DMatrix<f64>, target: &DVector<f64>, intercept: bool) -> Result<OlsFit, StatsError> {
    let (rows, cols) = design.shape();
    if rows == 0 || (cols == 0 && !intercept) {
        return Err(StatsError::DegenerateDesign { rows, cols });
    }
    if target.len() != rows {
        return Err(StatsError::LengthMismatch {
            design: rows,
            target: target.len(),
        });
    }
    let x = if intercept {
        design.clone().insert_column(0, 1.0)
    } else {
        design.clone()
    };
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = f64::EPSILON * (rows.max(x.ncols()) as f64) * smax;
    let coefficients = svd
        .solve(target, eps.max(f64::MIN_POSITIVE))
        .expect("u and v were computed");
    let residuals = target - &x * &coefficients;
    let mse = residuals.norm_squared() / rows as f64;
    Ok(OlsFit {
        coefficients,
        residuals,
        mse,
        n_rows: rows,
        n_cols: x.ncols(),
    })
}

/// Cross-product matrix of a set of columns, optionally centered.
///
/// Regressions between any subset of columns can then be solved from a small
/// Gram subsystem instead of touching the raw rows again. Centering is
/// equivalent to fitting an intercept.
#[derive(Debug, Clone)]
pub struct Moments {
    gram: DMatrix<f64>,
    n_rows: usize,
}

impl Moments {
    pub fn from_columns(columns: &DMatrix<f64>, center: bool) -> Self {
        let n_rows = columns.nrows();
        let mut x = columns.clone();
        if center {
            for mut col in x.column_iter_mut() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
            }
        }
        let gram = x.tr_mul(&x);
        Moments { gram, n_rows }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.gram.ncols()
    }

    /// Minimum-norm least-squares coefficients of column `target` on `regressors`.
    pub fn coefficients(&self, regressors: &[usize], target: usize) -> DVector<f64> {
        let k = regressors.len();
        let g = DMatrix::from_fn(k, k, |a, b| self.gram[(regressors[a], regressors[b])]);
        let rhs = DVector::from_fn(k, |a, _| self.gram[(regressors[a], target)]);
        solve_psd_min_norm(g, rhs)
    }

    /// Residual sum of squares of column `target` regressed on `regressors`.
    pub fn residual_ss(&self, regressors: &[usize], target: usize) -> f64 {
        let yy = self.gram[(target, target)];
        if regressors.is_empty() {
            return yy.max(0.0);
        }
        let b = self.coefficients(regressors, target);
        let fitted: f64 = regressors
            .iter()
            .zip(b.iter())
            .map(|(&r, &c)| c * self.gram[(r, target)])
            .sum();
        (yy - fitted).max(0.0)
    }
}

/// Solves `g b = rhs` for a symmetric positive semidefinite `g`, returning the
/// minimum-norm solution when `g` is singular.
pub fn solve_psd_min_norm(g: DMatrix<f64>, rhs: DVector<f64>) -> DVector<f64> {
    let k = g.nrows();
    if k == 0 {
        return DVector::zeros(0);
    }
    let max_diag = (0..k).map(|i| g[(i, i)]).fold(0.0f64, f64::max);
    let tol = max_diag * 1e-12 * k as f64;
    if let Some(b) = cholesky_solve(&g, &rhs, tol) {
        return b;
    }
    let eig = g.symmetric_eigen();
    let emax = eig.eigenvalues.amax();
    let cut = emax * f64::EPSILON * 64.0 * k as f64;
    let mut out = DVector::zeros(k);
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cut {
            let v = eig.eigenvectors.column(idx);
            out += v * (v.dot(&rhs) / lambda);
        }
    }
    out
}

fn cholesky_solve(g: &DMatrix<f64>, rhs: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    let k = g.nrows();
    let mut l = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let mut s = g[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            if i == j {
                if s <= tol || s <= 0.0 {
                    return None;
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    let mut y = DVector::zeros(k);
    for i in 0..k {
        let mut s = rhs[i];
        for p in 0..i {
            s -= l[(i, p)] * y[p];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = DVector::zeros(k);
    for i in (0..k).rev() {
        let mut s = y[i];
        for p in i + 1..k {
            s -= l[(p, i)] * x[p];
        }
        x[i] = s / l[(i, i)];
    }
    Some(x)
}

/// Upper tail probability of a chi-square law with one degree of freedom,
/// `P(X > x) = erfc(sqrt(x / 2))`.
pub fn chi2_sf_1dof(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    libm::erfc((0.5 * x).sqrt()).clamp(0.0, 1.0)
}

/// Sample covariance across replicates of residuals observed at T time points.
#[derive(Debug, Clone)]
pub struct ResidualCovariance {
    pub matrix: DMatrix<f64>,
    pub n_samples: usize,
}

/// `residuals` is T x N: row t holds the N replicate residuals at time t.
/// Entries use the 1/(N-1) convention.
pub fn residual_covariance(residuals: &DMatrix<f64>) -> Result<ResidualCovariance, StatsError> {
    let (t, n) = residuals.shape();
    if n < 2 {
        return Err(StatsError::TooFewReplicates(n));
    }
    let mut centered = residuals.clone();
    for mut row in centered.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    let mut matrix = DMatrix::zeros(t, t);
    let denom = (n - 1) as f64;
    for a in 0..t {
        for b in a..t {
            let v = centered.row(a).dot(&centered.row(b)) / denom;
            matrix[(a, b)] = v;
            matrix[(b, a)] = v;
        }
    }
    Ok(ResidualCovariance { matrix, n_samples: n })
}

/// `log det S(t) - log det S(t-1)`, where `S(k)` is the bottom-right k x k block
/// (the k latest time indices). Each block gets `1e-10 * mean(diag) * I` added
/// before its Cholesky factorization.
pub fn logdet_tail_ratio(cov: &ResidualCovariance, t: usize) -> Result<f64, StatsError> {
    let size = cov.matrix.nrows();
    if t < 2 || t > size {
        return Err(StatsError::BadOrder { t, size });
    }
    let big = tail_logdet(&cov.matrix, t)?;
    let small = tail_logdet(&cov.matrix, t - 1)?;
    Ok(big - small)
}

fn tail_logdet(m: &DMatrix<f64>, order: usize) -> Result<f64, StatsError> {
    let size = m.nrows();
    let start = size - order;
    let mut block = m.view((start, start), (order, order)).into_owned();
    let mean_diag = block.diagonal().mean();
    let lambda = 1e-10 * mean_diag;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(StatsError::SingularCovariance { order });
    }
    for i in 0..order {
        block[(i, i)] += lambda;
    }
    let chol = block
        .cholesky()
        .ok_or(StatsError::SingularCovariance { order })?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}
