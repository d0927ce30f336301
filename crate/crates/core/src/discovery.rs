//! Constrained DirectLiNGAM over the outcome block of a single time point.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, LeastSquares};
use crate::mask::WithinTimeMask;

const K1: f64 = 79.047;
const K2: f64 = 7.4129;
const GAMMA: f64 = 0.37457;

/// Outcome positions in causal order (roots first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CausalOrdering(pub Vec<usize>);

impl CausalOrdering {
    pub fn position(&self, var: usize) -> Option<usize> {
        self.0.iter().position(|&v| v == var)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct WithinFit {
    pub ordering: CausalOrdering,
    /// `b[[child, parent]]`, on the original scale of the inputs.
    pub b: Array2<f64>,
}

/// OLS residuals of `y` on `[1, covariates]`.
pub fn residualize(y: ArrayView1<'_, f64>, covariates: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let names: Vec<String> = (0..covariates.ncols()).map(|j| format!("covariate[{j}]")).collect();
    Ok(LeastSquares::new(covariates, &names)?.fit(y).residuals)
}

/// Maximum-entropy approximation of differential entropy. Lower values mean
/// further from Gaussian.
pub fn nongaussianity_entropy(u: ArrayView1<'_, f64>) -> Result<f64> {
    let n = u.len();
    if n == 0 || linalg::sd(u) == 0.0 {
        return Err(Error::ZeroVariance("entropy approximation"));
    }
    let mut log_cosh = 0.0;
    let mut gauss = 0.0;
    for &x in u.iter() {
        let a = x.abs();
        // log cosh without overflow; even in x by construction
        log_cosh += a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2;
        gauss += x * (-x * x / 2.0).exp();
    }
    let nf = n as f64;
    let (m1, m2) = (log_cosh / nf, gauss / nf);
    let h0 = (1.0 + (2.0 * std::f64::consts::PI).ln()) / 2.0;
    Ok(h0 - K1 * (m1 - GAMMA).powi(2) - K2 * m2 * m2)
}

/// Mean 0, population sd 1.
pub fn standardize(x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let m = linalg::mean(x);
    let s = linalg::sd(x);
    if s == 0.0 || !s.is_finite() {
        return Err(Error::ZeroVariance("standardization"));
    }
    Ok(x.mapv(|v| (v - m) / s))
}

/// Residual of standardized `xi` regressed on standardized `xj`, restandardized.
fn pair_residual(xi: &Array1<f64>, xj: &Array1<f64>) -> Result<Array1<f64>> {
    let rho = xi.dot(xj) / xi.len() as f64;
    let r = xi - &(xj * rho);
    standardize(r.view())
}

/// Picks the next root among `remaining` (columns of `data`).
///
/// A candidate is skipped when the mask requires it to have a parent among
/// the other remaining candidates. Scores follow the pairwise
/// entropy-difference statistic; ties go to the lowest index.
pub fn select_exogenous(
    data: ArrayView2<'_, f64>,
    remaining: &[usize],
    mask: &WithinTimeMask,
) -> Result<usize> {
    let admissible: Vec<usize> = remaining
        .iter()
        .copied()
        .filter(|&i| !remaining.iter().any(|&j| j != i && mask.requires(i, j)))
        .collect();
    match admissible.len() {
        0 => {
            return Err(Error::MaskInfeasible {
                remaining: remaining.to_vec(),
            })
        }
        1 => return Ok(admissible[0]),
        _ => {}
    }

    let std: Vec<Array1<f64>> = remaining
        .iter()
        .map(|&i| standardize(data.column(i)))
        .collect::<Result<_>>()?;
    let h: Vec<f64> = std
        .iter()
        .map(|u| nongaussianity_entropy(u.view()))
        .collect::<Result<_>>()?;

    let k = remaining.len();
    // m[a][b] = M(remaining[a], remaining[b]); antisymmetric
    let mut m = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in (a + 1)..k {
            let r_a_on_b = pair_residual(&std[a], &std[b])?;
            let r_b_on_a = pair_residual(&std[b], &std[a])?;
            let stat = (h[b] + nongaussianity_entropy(r_a_on_b.view())?)
                - (h[a] + nongaussianity_entropy(r_b_on_a.view())?);
            m[a][b] = stat;
            m[b][a] = -stat;
        }
    }

    let mut best: Option<(usize, f64)> = None;
    for (a, &i) in remaining.iter().enumerate() {
        if !admissible.contains(&i) {
            continue;
        }
        let score: f64 = (0..k)
            .filter(|&b| b != a)
            .map(|b| m[a][b].min(0.0).powi(2))
            .sum();
        match best {
            Some((bi, bs)) if score > bs || (score == bs && i > bi) => {}
            _ => best = Some((i, score)),
        }
    }
    Ok(best.expect("at least two admissible candidates").0)
}

/// Orders the columns of `residuals` and estimates within-time coefficients
/// on their mask-admissible predecessors.
pub fn fit_within_time(residuals: ArrayView2<'_, f64>, mask: &WithinTimeMask) -> Result<WithinFit> {
    let (n, p) = residuals.dim();
    if mask.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "mask over {} variables, data has {p} columns",
            mask.len()
        )));
    }
    if n <= p + 10 {
        return Err(Error::InsufficientData(format!(
            "{n} subjects for {p} outcomes (need more than {})",
            p + 10
        )));
    }

    let mut work = residuals.to_owned();
    let mut remaining: Vec<usize> = (0..p).collect();
    let mut order = Vec::with_capacity(p);
    while !remaining.is_empty() {
        let sel = select_exogenous(work.view(), &remaining, mask)?;
        remaining.retain(|&i| i != sel);
        order.push(sel);
        let xs = work.column(sel).to_owned();
        let xs_c = &xs - linalg::mean(xs.view());
        let var = xs_c.dot(&xs_c);
        if var == 0.0 {
            continue;
        }
        for &j in &remaining {
            let mut col = work.column_mut(j);
            let beta = col.dot(&xs_c) / var;
            col.scaled_add(-beta, &xs_c);
        }
    }

    let b = estimate_coefficients(residuals, &order, mask)?;
    Ok(WithinFit {
        ordering: CausalOrdering(order),
        b,
    })
}

/// OLS of each variable on its mask-admissible predecessors in `order`.
pub fn estimate_coefficients(
    data: ArrayView2<'_, f64>,
    order: &[usize],
    mask: &WithinTimeMask,
) -> Result<Array2<f64>> {
    let p = data.ncols();
    let mut b = Array2::zeros((p, p));
    for (pos, &i) in order.iter().enumerate() {
        let parents: Vec<usize> = order[..pos]
            .iter()
            .copied()
            .filter(|&j| mask.allows(i, j))
            .collect();
        if parents.is_empty() {
            continue;
        }
        let x = data.select(Axis(1), &parents);
        let names: Vec<String> = parents.iter().map(|j| format!("outcome[{j}]")).collect();
        let fit = linalg::ols(data.column(i), x.view(), &names)?;
        for (c, &j) in parents.iter().enumerate() {
            b[[i, j]] = fit.coefficients[c];
        }
    }
    Ok(b)
}
