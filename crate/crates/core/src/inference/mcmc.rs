//! Adaptive Metropolis under a uniform box prior.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::optim::{nelder_mead, NelderMeadOptions};
use crate::rng::{stream_rng, Purpose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcOptions {
    pub iterations: usize,
    pub chains: usize,
    /// Fraction of each chain discarded before summaries.
    pub burn_in: f64,
    /// Iterations with the fixed initial proposal before adapting.
    pub adapt_start: usize,
    /// Initial proposal sd as a fraction of each box width.
    pub initial_scale: f64,
    /// Regularization added to the adapted covariance.
    pub epsilon: f64,
    /// Iterations per acceptance-rate window.
    pub window: usize,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self {
            iterations: 100_000,
            chains: 4,
            burn_in: 0.5,
            adapt_start: 1000,
            initial_scale: 0.01,
            epsilon: 1e-10,
            window: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub scale: f64,
    pub mean: Vec<f64>,
    /// Final empirical covariance, row-major.
    pub cov: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcChain {
    pub index: usize,
    pub seed: u64,
    pub start: Vec<f64>,
    /// Row per iteration, including the starting point.
    pub samples: Vec<Vec<f64>>,
    pub log_post: Vec<f64>,
    pub accepted: usize,
    pub window_acceptance: Vec<f64>,
    pub adaptation: Adaptation,
}

impl McmcChain {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / (self.samples.len().saturating_sub(1)).max(1) as f64
    }

    pub fn after_burn_in(&self, frac: f64) -> &[Vec<f64>] {
        let k = ((self.samples.len() as f64) * frac).floor() as usize;
        &self.samples[k.min(self.samples.len())..]
    }

    /// Highest log-posterior state visited.
    pub fn best(&self) -> (&[f64], f64) {
        let k = (0..self.log_post.len()).max_by(|&a, &b| self.log_post[a].total_cmp(&self.log_post[b])).unwrap_or(0);
        (&self.samples[k], self.log_post[k])
    }
}

fn inside(x: &[f64], bounds: &[(f64, f64)]) -> bool {
    x.iter().zip(bounds).all(|(v, &(lo, hi))| lo <= *v && *v <= hi)
}

/// Run one chain from `start`. `loglik` is the log-likelihood; with a
/// uniform prior the log-posterior differs by a constant.
pub fn run_chain<F: Fn(&[f64]) -> f64>(
    loglik: &F,
    start: &[f64],
    bounds: &[(f64, f64)],
    opts: &McmcOptions,
    seed: u64,
    index: usize,
) -> Result<McmcChain> {
    let d = start.len();
    if bounds.len() != d || !inside(start, bounds) {
        return Err(Error::Config(format!("chain {index}: start {start:?} lies outside the prior box")));
    }
    let mut rng = stream_rng(seed, Purpose::Mcmc, index as u64);
    let scale = 2.38 * 2.38 / d as f64;
    let mut x = start.to_vec();
    let mut lx = loglik(&x);
    if lx.is_nan() {
        lx = f64::NEG_INFINITY;
    }
    let n = opts.iterations;
    let mut samples = Vec::with_capacity(n + 1);
    let mut log_post = Vec::with_capacity(n + 1);
    samples.push(x.clone());
    log_post.push(lx);

    // running mean and covariance of the history
    let mut mean = DVector::from_column_slice(&x);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let init_chol: DMatrix<f64> =
        DMatrix::from_diagonal(&DVector::from_iterator(d, bounds.iter().map(|&(lo, hi)| opts.initial_scale * (hi - lo))));
    let mut chol = init_chol.clone();
    let mut accepted = 0;
    let mut in_window = 0;
    let mut windows = Vec::new();
    let mut z = DVector::<f64>::zeros(d);

    for t in 1..=n {
        if t > opts.adapt_start {
            let c = &cov * scale + DMatrix::<f64>::identity(d, d) * (scale * opts.epsilon);
            if let Some(l) = c.cholesky() {
                chol = l.l();
            }
        }
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let step = &chol * &z;
        let y: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        if inside(&y, bounds) {
            let ly = loglik(&y);
            let u: f64 = rng.random();
            if ly.is_finite() && (ly >= lx || u.ln() < ly - lx) {
                x = y;
                lx = ly;
                accepted += 1;
                in_window += 1;
            }
        }
        // Welford update with the current state
        let tf = (t + 1) as f64;
        let xv = DVector::from_column_slice(&x);
        let delta = &xv - &mean;
        mean += &delta / tf;
        let delta2 = &xv - &mean;
        cov = &cov * ((tf - 2.0) / (tf - 1.0)) + (&delta * delta2.transpose()) / (tf - 1.0);

        samples.push(x.clone());
        log_post.push(lx);
        if opts.window > 0 && t % opts.window == 0 {
            windows.push(in_window as f64 / opts.window as f64);
            in_window = 0;
        }
    }
    Ok(McmcChain {
        index,
        seed,
        start: start.to_vec(),
        samples,
        log_post,
        accepted,
        window_acceptance: windows,
        adaptation: Adaptation {
            scale,
            mean: mean.iter().copied().collect(),
            cov: cov.transpose().iter().copied().collect(),
        },
    })
}

/// Run `opts.chains` chains. Chain 0 starts at `init` when given; the
/// others start at uniform draws from the box.
pub fn mcmc<F>(loglik: F, init: Option<&[f64]>, bounds: &[(f64, f64)], opts: &McmcOptions, seed: u64) -> Result<Vec<McmcChain>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let starts: Vec<Vec<f64>> = (0..opts.chains)
        .map(|c| match (c, init) {
            (0, Some(x)) => x.to_vec(),
            _ => {
                let mut rng = stream_rng(seed, Purpose::Starts, 1000 + c as u64);
                bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()
            }
        })
        .collect();
    starts
        .par_iter()
        .enumerate()
        .map(|(c, s)| run_chain(&loglik, s, bounds, opts, seed, c))
        .collect()
}

/// Maximum a posteriori estimate: the best state visited by any chain,
/// polished by Nelder–Mead on the log-posterior.
pub fn map_estimate<F: Fn(&[f64]) -> f64>(
    loglik: F,
    chains: &[McmcChain],
    bounds: &[(f64, f64)],
    opts: &NelderMeadOptions,
) -> Result<(Vec<f64>, f64)> {
    let (start, _) = chains
        .iter()
        .map(McmcChain::best)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Config("no chains".into()))?;
    let r = nelder_mead(|x| -loglik(x), start, bounds, opts);
    Ok((r.x, -r.value))
}

/// Per-coordinate posterior mean and covariance over the pooled
/// post-burn-in samples.
pub fn pooled_moments(chains: &[McmcChain], burn_in: f64) -> (Vec<f64>, Vec<f64>) {
    let rows: Vec<&Vec<f64>> = chains.iter().flat_map(|c| c.after_burn_in(burn_in)).collect();
    let d = rows.first().map_or(0, |r| r.len());
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v / n;
        }
    }
    let mut cov = vec![0.0; d * d];
    for r in &rows {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n - 1.0);
            }
        }
    }
    (mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_a_correlated_gaussian() {
        let sd = [1.0, 2.0];
        let r = 0.5;
        let f = move |x: &[f64]| {
            let (a, b) = (x[0] / sd[0], (x[1] - 1.0) / sd[1]);
            -0.5 * (a * a - 2.0 * r * a * b + b * b) / (1.0 - r * r)
        };
        let bounds = vec![(-10.0, 10.0), (-19.0, 21.0)];
        let opts = McmcOptions {
            iterations: 60_000,
            chains: 1,
            ..McmcOptions::default()
        };
        let chains = mcmc(f, Some(&[0.0, 0.0]), &bounds, &opts, 3).unwrap();
        let (m, c) = pooled_moments(&chains, 0.2);
        assert!(m[0].abs() < 0.1 && (m[1] - 1.0).abs() < 0.2, "{m:?}");
        assert!((c[0] - 1.0).abs() < 0.15 && (c[3] - 4.0).abs() < 0.6 && (c[1] - 1.0).abs() < 0.25, "{c:?}");
        let acc = chains[0].acceptance_rate();
        assert!(acc > 0.15 && acc < 0.6, "{acc}");
    }

    #[test]
    fn same_seed_same_chain_and_box_respected() {
        let f = |x: &[f64]| -x[0] * x[0] * 0.01;
        let bounds = vec![(0.0, 1.0)];
        let opts = McmcOptions {
            iterations: 3000,
            chains: 2,
            ..McmcOptions::default()
        };
        let a = mcmc(f, None, &bounds, &opts, 11).unwrap();
        let b = mcmc(f, None, &bounds, &opts, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].samples, a[1].samples);
        assert!(a.iter().flat_map(|c| &c.samples).all(|x| (0.0..=1.0).contains(&x[0])));
        assert_eq!(a[0].window_acceptance.len(), 3);
    }
}
