//! Least squares and two-stage least squares with heteroskedasticity-robust
//! (HC0) standard errors.

use crate::error::{invalid, rank, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvFit {
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    /// One first-stage F statistic per endogenous regressor.
    pub first_stage_f: Vec<f64>,
    /// Set when any first-stage F falls below 10; estimates are still returned.
    pub weak_instruments: bool,
    pub n_obs: usize,
}

pub fn matrix_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > top * RANK_TOL).count()
}

/// Least-squares solution of `a x = b` for full-column-rank `a`.
fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let k = a.ncols();
    if matrix_rank(a) < k {
        return Err(rank(format!("{what}: design has rank below {k} columns")));
    }
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    r.solve_upper_triangular(&qtb)
        .ok_or_else(|| rank(format!("{what}: triangular solve failed")))
}

fn rss(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<f64> {
    if x.ncols() == 0 {
        return Ok(y.norm_squared());
    }
    let b = lstsq(x, &DMatrix::from_column_slice(y.len(), 1, y.as_slice()), "first stage")?;
    let fit = x * b;
    Ok((0..y.len()).map(|i| (y[i] - fit[(i, 0)]).powi(2)).sum())
}

fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows().max(b.nrows());
    let mut out = DMatrix::zeros(n, a.ncols() + b.ncols());
    if a.ncols() > 0 {
        out.columns_mut(0, a.ncols()).copy_from(a);
    }
    if b.ncols() > 0 {
        out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    }
    out
}

/// Two-stage least squares; coefficients are ordered endogenous then exogenous.
pub fn two_sls(
    y: &DVector<f64>,
    endog: &DMatrix<f64>,
    exog: &DMatrix<f64>,
    instruments: &DMatrix<f64>,
) -> Result<IvFit> {
    let n = y.len();
    for (name, m) in [("endog", endog), ("exog", exog), ("instruments", instruments)] {
        if m.ncols() > 0 && m.nrows() != n {
            return Err(invalid(format!("{name} has {} rows, expected {n}", m.nrows())));
        }
    }
    let x = hstack(endog, exog);
    let z = hstack(instruments, exog);
    let k = x.ncols();
    if z.ncols() < k {
        return Err(rank(format!(
            "{} instruments for {} endogenous regressors",
            instruments.ncols(),
            endog.ncols()
        )));
    }
    if n <= k {
        return Err(rank(format!("{n} observations for {k} coefficients")));
    }
    if matrix_rank(&z) < z.ncols() {
        return Err(rank("instrument matrix is rank deficient"));
    }
    let x_hat = &z * lstsq(&z, &x, "projection")?;
    if matrix_rank(&x_hat) < k {
        return Err(rank("projected regressors are rank deficient"));
    }
    let yb = DMatrix::from_column_slice(n, 1, y.as_slice());
    let beta = lstsq(&x_hat, &yb, "second stage")?;
    let fitted = &x * &beta;
    let resid: Vec<f64> = (0..n).map(|i| y[i] - fitted[(i, 0)]).collect();

    let bread = (x_hat.transpose() * &x_hat)
        .try_inverse()
        .ok_or_else(|| rank("cross-product of projected regressors is singular"))?;
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let row = x_hat.row(i);
        meat += row.transpose() * row * resid[i].powi(2);
    }
    let cov = &bread * meat * &bread;
    let se = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let cov_rows = (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect();

    let mut first_stage_f = Vec::with_capacity(endog.ncols());
    for j in 0..endog.ncols() {
        let col = endog.column(j).into_owned();
        let unrestricted = rss(&col, &z)?;
        let restricted = rss(&col, exog)?;
        let q = instruments.ncols() as f64;
        let dof = (n - z.ncols()) as f64;
        let f = if unrestricted <= 1e-300 {
            f64::INFINITY
        } else {
            ((restricted - unrestricted) / q) / (unrestricted / dof)
        };
        first_stage_f.push(f);
    }
    let weak_instruments = first_stage_f.iter().any(|&f| f < 10.0);
    Ok(IvFit {
        coef: beta.column(0).iter().cloned().collect(),
        se,
        cov: cov_rows,
        residuals: resid,
        first_stage_f,
        weak_instruments,
        n_obs: n,
    })
}

pub fn ols(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<IvFit> {
    let none = DMatrix::zeros(y.len(), 0);
    two_sls(y, &none, x, &none)
}
