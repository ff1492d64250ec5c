//! Sensitivity of the output moments to the hyperparameters.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dual::{Dual1, MAX_TANGENTS};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::pipeline::{component_moments, Forward};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FimReport {
    pub xi: Vec<f64>,
    /// Moment-map Jacobian, one row per moment.
    pub jacobian: Vec<Vec<f64>>,
    /// `J^T J`, row-major.
    pub s: Vec<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    pub tolerance: f64,
}

/// Moments of every atomic component at every time, each block ordered
/// as means, upper-triangular covariances (row by row), skewnesses.
pub fn moment_map<M: Model, T: Real>(forward: &Forward<M>, xi: &[T]) -> Result<Vec<T>> {
    let spec = forward.encoding.decode(xi)?;
    let mut out = Vec::new();
    for (_, per_time) in component_moments(&forward.problem, &spec)? {
        for m in per_time {
            let n = m.n();
            out.extend(m.mu.iter().copied());
            for i in 0..n {
                for j in i..n {
                    out.push(m.cov(i, j));
                }
            }
            out.extend(m.omega.iter().copied());
        }
    }
    Ok(out)
}

/// Jacobian of `f` by forward-mode dual numbers.
pub fn jacobian<F>(f: F, x: &[f64]) -> Result<Vec<Vec<f64>>>
where
    F: FnOnce(&[Dual1]) -> Result<Vec<Dual1>>,
{
    let d = x.len();
    if d > MAX_TANGENTS {
        return Err(Error::Domain(format!("at most {MAX_TANGENTS} coordinates can be differentiated (got {d})")));
    }
    let xd: Vec<Dual1> = x.iter().enumerate().map(|(i, &v)| Dual1::variable(v, i, d)).collect();
    Ok(f(&xd)?.iter().map(|y| (0..d).map(|a| y.eps(a)).collect()).collect())
}

/// Eigen-analysis of `J^T J` for a given Jacobian.
pub fn analyze(xi: &[f64], jacobian: Vec<Vec<f64>>, tolerance: f64) -> Result<FimReport> {
    let d = xi.len();
    let rows = jacobian.len();
    if jacobian.iter().any(|r| r.len() != d) {
        return Err(Error::ShapeMismatch {
            left: vec![rows, d],
            right: jacobian.iter().map(Vec::len).collect(),
        });
    }
    if jacobian.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            output: 0,
            theta: xi.to_vec(),
        });
    }
    let j = DMatrix::from_fn(rows, d, |r, c| jacobian[r][c]);
    let s = j.transpose() * &j;
    let s = (&s + s.transpose()) * 0.5;
    let mut eig: Vec<f64> = s.clone().symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let lmax = eig.last().copied().unwrap_or(0.0);
    let rank = eig.iter().filter(|&&l| l > tolerance * lmax).count();
    Ok(FimReport {
        xi: xi.to_vec(),
        jacobian,
        s: s.transpose().iter().copied().collect(),
        eigenvalues: eig,
        rank,
        tolerance,
    })
}

/// Sensitivity matrix of the moment map at `xi` and its numerical rank:
/// the number of eigenvalues above `tolerance` times the largest.
pub fn fim<M: Model>(forward: &Forward<M>, xi: &[f64], tolerance: f64) -> Result<FimReport> {
    let j = jacobian(|x| moment_map(forward, x), xi)?;
    analyze(xi, j, tolerance)
}
