use serde::{Deserialize, Serialize};

use super::copula::CopulaTable;
use super::gamma::{fit_marginal, GammaFit, SkewMarginal};
use super::propagate::OutputMoments;
use super::LOG_FLOOR;
use crate::error::{Error, Result};
use crate::special::{logsumexp, norm_cdf, norm_logpdf, norm_score, LN_SQRT_2PI};

const Z_CLAMP: f64 = 37.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    #[default]
    Normal,
    Gamma,
}

/// Multivariate normal with a cached Cholesky factor and inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct MvNormal {
    mean: Vec<f64>,
    cov: Vec<f64>,
    chol: Vec<f64>,
    inv: Vec<f64>,
    log_det: f64,
}

fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn forward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

impl MvNormal {
    /// Covariance is row-major; a failed factorization is retried once with
    /// `1e-10 * max(diag)` added to the diagonal.
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.len() != n * n || n == 0 {
            return Err(Error::ShapeMismatch {
                left: vec![n, n],
                right: vec![cov.len()],
            });
        }
        let mut cov = cov;
        let chol = match cholesky(&cov, n) {
            Some(l) => l,
            None => {
                let max = (0..n).map(|i| cov[i * n + i]).fold(0.0, f64::max);
                for i in 0..n {
                    cov[i * n + i] += 1e-10 * max;
                }
                cholesky(&cov, n)
                    .ok_or_else(|| Error::Conditioning(format!("covariance {cov:?} is not positive definite")))?
            }
        };
        let log_det = 2.0 * (0..n).map(|i| chol[i * n + i].ln()).sum::<f64>();
        let mut inv = vec![0.0; n * n];
        // columns of L^-1, then inv = L^-T L^-1
        let mut linv = vec![0.0; n * n];
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            forward_solve(&chol, n, &mut e);
            for r in 0..n {
                linv[r * n + c] = e[r];
            }
        }
        for i in 0..n {
            for j in 0..n {
                inv[i * n + j] = (0..n).map(|k| linv[k * n + i] * linv[k * n + j]).sum();
            }
        }
        Ok(Self {
            mean,
            cov,
            chol,
            inv,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &[f64] {
        &self.cov
    }

    pub fn logpdf(&self, y: &[f64]) -> f64 {
        let n = self.dim();
        let mut r: Vec<f64> = y.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        forward_solve(&self.chol, n, &mut r);
        let q: f64 = r.iter().map(|x| x * x).sum();
        -0.5 * q - 0.5 * self.log_det - n as f64 * LN_SQRT_2PI
    }

    /// Sum of log-densities of `count` points with sample mean `ybar` and
    /// centered scatter matrix `scatter` (row-major).
    pub fn loglik_stats(&self, count: usize, ybar: &[f64], scatter: &[f64]) -> f64 {
        let n = self.dim();
        let d: Vec<f64> = ybar.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let mut q = 0.0;
        let mut tr = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += d[i] * self.inv[i * n + j] * d[j];
                tr += self.inv[i * n + j] * scatter[j * n + i];
            }
        }
        let c = count as f64;
        -0.5 * (tr + c * q) - 0.5 * c * self.log_det - c * n as f64 * LN_SQRT_2PI
    }

    fn marginal_sd(&self, i: usize) -> f64 {
        self.cov[i * self.dim() + i].sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SurrogateDensity {
    Normal(MvNormal),
    Gamma1(GammaFit),
    /// Two gamma marginals joined by a Gaussian copula with parameter
    /// `rho_tilde`, chosen so that the Pearson correlation is `rho`.
    Gamma2 {
        marginals: [GammaFit; 2],
        rho: f64,
        rho_tilde: f64,
    },
    Mixture {
        log_weights: Vec<f64>,
        components: Vec<SurrogateDensity>,
    },
}

impl SurrogateDensity {
    pub fn dim(&self) -> usize {
        match self {
            SurrogateDensity::Normal(n) => n.dim(),
            SurrogateDensity::Gamma1(_) => 1,
            SurrogateDensity::Gamma2 { .. } => 2,
            SurrogateDensity::Mixture { components, .. } => components[0].dim(),
        }
    }

    pub fn logpdf(&self, y: &[f64]) -> f64 {
        let l = match self {
            SurrogateDensity::Normal(n) => n.logpdf(y),
            SurrogateDensity::Gamma1(g) => g.marginal.logpdf(y[0]),
            SurrogateDensity::Gamma2 {
                marginals, rho_tilde, ..
            } => bivariate_gamma_logpdf([y[0], y[1]], [&marginals[0].marginal, &marginals[1].marginal], *rho_tilde),
            SurrogateDensity::Mixture {
                log_weights,
                components,
            } => {
                let terms: Vec<f64> = log_weights.iter().zip(components).map(|(w, c)| w + c.logpdf(y)).collect();
                logsumexp(&terms)
            }
        };
        if l.is_nan() {
            LOG_FLOOR
        } else {
            l.max(LOG_FLOOR)
        }
    }

    pub fn marginal_logpdf(&self, i: usize, y: f64) -> f64 {
        match self {
            SurrogateDensity::Normal(n) => {
                let sd = n.marginal_sd(i);
                norm_logpdf((y - n.mean[i]) / sd) - sd.ln()
            }
            SurrogateDensity::Gamma1(g) => g.marginal.logpdf(y),
            SurrogateDensity::Gamma2 { marginals, .. } => marginals[i].marginal.logpdf(y),
            SurrogateDensity::Mixture {
                log_weights,
                components,
            } => {
                let terms: Vec<f64> =
                    log_weights.iter().zip(components).map(|(w, c)| w + c.marginal_logpdf(i, y)).collect();
                logsumexp(&terms)
            }
        }
    }

    pub fn marginal_cdf(&self, i: usize, y: f64) -> f64 {
        match self {
            SurrogateDensity::Normal(n) => norm_cdf((y - n.mean[i]) / n.marginal_sd(i)),
            SurrogateDensity::Gamma1(g) => g.marginal.cdf(y),
            SurrogateDensity::Gamma2 { marginals, .. } => marginals[i].marginal.cdf(y),
            SurrogateDensity::Mixture {
                log_weights,
                components,
            } => log_weights.iter().zip(components).map(|(w, c)| w.exp() * c.marginal_cdf(i, y)).sum(),
        }
    }

    /// Some skewness was clamped while fitting.
    pub fn clamped(&self) -> bool {
        match self {
            SurrogateDensity::Normal(_) => false,
            SurrogateDensity::Gamma1(g) => g.clamped,
            SurrogateDensity::Gamma2 { marginals, .. } => marginals.iter().any(|g| g.clamped),
            SurrogateDensity::Mixture { components, .. } => components.iter().any(Self::clamped),
        }
    }
}

pub fn fit_normal(m: &OutputMoments) -> Result<SurrogateDensity> {
    Ok(SurrogateDensity::Normal(MvNormal::new(m.mu.clone(), m.sigma.clone())?))
}

/// Shifted-gamma surrogate for one output, or a copula-joined pair for two.
pub fn fit_gamma(m: &OutputMoments, table: Option<&CopulaTable>) -> Result<SurrogateDensity> {
    let fit = |i: usize| fit_marginal(m.mu[i], m.var(i), m.omega[i]);
    match m.n() {
        1 => Ok(SurrogateDensity::Gamma1(fit(0))),
        2 => {
            let marginals = [fit(0), fit(1)];
            let rho = (m.cov(0, 1) / (m.var(0) * m.var(1)).sqrt()).clamp(-0.99, 0.99);
            let gaussian = marginals.iter().all(|g| matches!(g.marginal, SkewMarginal::Normal { .. }));
            let rho_tilde = if rho == 0.0 || gaussian {
                rho
            } else {
                let t = table.ok_or(Error::MissingCopulaTable)?;
                t.rho(marginals[0].marginal.skew(), marginals[1].marginal.skew(), rho)
            };
            Ok(SurrogateDensity::Gamma2 {
                marginals,
                rho,
                rho_tilde,
            })
        }
        0 => Err(Error::Config("no outputs to fit".into())),
        n => Err(Error::TooManyOutputs(n)),
    }
}

pub fn fit_surrogate(kind: SurrogateKind, m: &OutputMoments, table: Option<&CopulaTable>) -> Result<SurrogateDensity> {
    match kind {
        SurrogateKind::Normal => fit_normal(m),
        SurrogateKind::Gamma => fit_gamma(m, table),
    }
}

fn copula_score(m: &SkewMarginal, y: f64) -> f64 {
    let (p, q) = m.cdf_pair(y);
    norm_score(p, q).clamp(-Z_CLAMP, Z_CLAMP)
}

/// Joint log-density of two marginals under a Gaussian copula.
pub fn bivariate_gamma_logpdf(y: [f64; 2], marginals: [&SkewMarginal; 2], rho_tilde: f64) -> f64 {
    let l1 = marginals[0].logpdf(y[0]);
    let l2 = marginals[1].logpdf(y[1]);
    if l1 <= LOG_FLOOR || l2 <= LOG_FLOOR {
        return LOG_FLOOR;
    }
    if rho_tilde == 0.0 {
        return l1 + l2;
    }
    let z1 = copula_score(marginals[0], y[0]);
    let z2 = copula_score(marginals[1], y[1]);
    let r = rho_tilde;
    let one = 1.0 - r * r;
    let lc = -0.5 * one.ln() - (r * r * (z1 * z1 + z2 * z2) - 2.0 * r * z1 * z2) / (2.0 * one);
    (lc + l1 + l2).max(LOG_FLOOR)
}

/// Finite mixture of surrogate densities of equal dimension.
pub fn mixture_surrogate(components: Vec<(f64, SurrogateDensity)>) -> Result<SurrogateDensity> {
    if components.is_empty() {
        return Err(Error::Config("mixture needs at least one component".into()));
    }
    let total: f64 = components.iter().map(|c| c.0).sum();
    if components.iter().any(|c| !(c.0 >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("mixture weights must be non-negative and sum to one (sum {total})")));
    }
    let dim = components[0].1.dim();
    if components.iter().any(|c| c.1.dim() != dim) {
        return Err(Error::Config("mixture components differ in dimension".into()));
    }
    let (w, c): (Vec<f64>, Vec<SurrogateDensity>) = components.into_iter().map(|(w, c)| (w.ln(), c)).unzip();
    Ok(SurrogateDensity::Mixture {
        log_weights: w,
        components: c,
    })
}
