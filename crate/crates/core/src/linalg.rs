//! Least squares with an intercept, via Householder QR on centered columns.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Relative tolerance on `|R_jj| / ||x_j||` below which a column is treated
/// as linearly dependent on the columns before it.
const RANK_TOL: f64 = 1e-9;

/// A factored design matrix `[1, X]`, reusable across responses.
///
/// Constant columns are dropped (their coefficient is reported as 0) and
/// listed in [`LeastSquares::constant_columns`].
#[derive(Debug, Clone)]
pub struct LeastSquares {
    n: usize,
    k: usize,
    kept: Vec<usize>,
    constant: Vec<usize>,
    means: Vec<f64>,
    centered: DMatrix<f64>,
    q_t: Option<DMatrix<f64>>,
    r: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub intercept: f64,
    /// One coefficient per design column (0 for dropped constant columns).
    pub coefficients: Vec<f64>,
    pub residuals: Array1<f64>,
}

impl OlsFit {
    pub fn residual_variance(&self) -> f64 {
        let n = self.residuals.len() as f64;
        self.residuals.iter().map(|e| e * e).sum::<f64>() / n
    }
}

impl LeastSquares {
    /// Factors the design. `names` label columns in rank-deficiency errors.
    pub fn new(x: ArrayView2<'_, f64>, names: &[String]) -> Result<Self> {
        let (n, k) = x.dim();
        debug_assert_eq!(names.len(), k);
        let mut kept = Vec::with_capacity(k);
        let mut constant = Vec::new();
        let mut means = vec![0.0; k];
        for j in 0..k {
            let col = x.column(j);
            let first = col.first().copied().unwrap_or(0.0);
            if col.iter().all(|&v| v == first) {
                constant.push(j);
                means[j] = first;
            } else {
                kept.push(j);
                means[j] = col.sum() / n as f64;
            }
        }
        if n <= kept.len() + 1 {
            return Err(Error::InsufficientData(format!(
                "{n} observations for {} regressors plus intercept",
                kept.len()
            )));
        }
        let m = kept.len();
        let centered = DMatrix::from_fn(n, m, |i, c| x[[i, kept[c]]] - means[kept[c]]);
        if m == 0 {
            return Ok(Self {
                n,
                k,
                kept,
                constant,
                means,
                centered,
                q_t: None,
                r: DMatrix::zeros(0, 0),
            });
        }
        let qr = centered.clone().qr();
        let r = qr.r();
        let mut deficient = Vec::new();
        for c in 0..m {
            let norm = centered.column(c).norm();
            if r[(c, c)].abs() <= RANK_TOL * norm {
                deficient.push(names[kept[c]].clone());
            }
        }
        if !deficient.is_empty() {
            return Err(Error::RankDeficient {
                columns: deficient,
            });
        }
        let q_t = qr.q().transpose();
        Ok(Self {
            n,
            k,
            kept,
            constant,
            means,
            centered,
            q_t: Some(q_t),
            r,
        })
    }

    pub fn constant_columns(&self) -> &[usize] {
        &self.constant
    }

    pub fn n_observations(&self) -> usize {
        self.n
    }

    pub fn fit(&self, y: ArrayView1<'_, f64>) -> OlsFit {
        assert_eq!(y.len(), self.n, "response length must match design rows");
        let y_mean = y.sum() / self.n as f64;
        let yc = DVector::from_iterator(self.n, y.iter().map(|v| v - y_mean));
        let mut coefficients = vec![0.0; self.k];
        let mut intercept = y_mean;
        let residuals = match &self.q_t {
            None => Array1::from_iter(yc.iter().copied()),
            Some(q_t) => {
                let qty = q_t * &yc;
                let beta = self
                    .r
                    .solve_upper_triangular(&qty)
                    .expect("triangular factor checked non-singular");
                for (c, &j) in self.kept.iter().enumerate() {
                    coefficients[j] = beta[c];
                    intercept -= beta[c] * self.means[j];
                }
                let fitted = &self.centered * &beta;
                Array1::from_iter(yc.iter().zip(fitted.iter()).map(|(a, b)| a - b))
            }
        };
        OlsFit {
            intercept,
            coefficients,
            residuals,
        }
    }
}

/// One-shot OLS of `y` on `[1, x]`.
pub fn ols(y: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>, names: &[String]) -> Result<OlsFit> {
    Ok(LeastSquares::new(x, names)?.fit(y))
}

pub fn mean(x: ArrayView1<'_, f64>) -> f64 {
    x.sum() / x.len() as f64
}

/// Population standard deviation.
pub fn sd(x: ArrayView1<'_, f64>) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn recovers_exact_linear_relation() {
        let x = array![[1.0, 0.0], [2.0, 1.0], [3.0, 0.0], [4.0, 1.0], [5.0, 3.0]];
        let y = Array1::from_iter(x.rows().into_iter().map(|r| 1.5 + 2.0 * r[0] - 0.5 * r[1]));
        let fit = ols(y.view(), x.view(), &names(2)).unwrap();
        assert!((fit.intercept - 1.5).abs() < 1e-12);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.coefficients[1] + 0.5).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn constant_column_is_dropped() {
        let x = array![[1.0, 7.0], [2.0, 7.0], [3.0, 7.0], [5.0, 7.0]];
        let y = array![1.0, 2.0, 2.5, 5.0];
        let ls = LeastSquares::new(x.view(), &names(2)).unwrap();
        assert_eq!(ls.constant_columns(), &[1]);
        assert_eq!(ls.fit(y.view()).coefficients[1], 0.0);
    }

    #[test]
    fn collinear_column_is_named() {
        let mut x = Array2::zeros((6, 3));
        for i in 0..6 {
            x[[i, 0]] = i as f64;
            x[[i, 1]] = (i * i) as f64;
            x[[i, 2]] = 2.0 * i as f64 + 1.0;
        }
        let err = LeastSquares::new(x.view(), &names(3)).unwrap_err();
        match err {
            Error::RankDeficient { columns } => assert_eq!(columns, vec!["c2".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
