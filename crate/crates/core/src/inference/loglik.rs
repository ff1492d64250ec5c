//! Surrogate log-likelihood of snapshot data.

use crate::error::{Error, Result};
use crate::models::Model;
use crate::pipeline::Forward;
use crate::surrogate::{SurrogateDensity, LOG_FLOOR};

use super::data::SnapshotData;

/// Per-time sufficient statistics for the normal surrogate.
#[derive(Clone, Debug)]
struct Stats {
    count: usize,
    mean: Vec<f64>,
    /// Centered scatter matrix, row-major.
    scatter: Vec<f64>,
}

impl Stats {
    fn of(obs: &[Vec<f64>]) -> Self {
        let q = obs[0].len();
        let c = obs.len() as f64;
        let mut mean = vec![0.0; q];
        for y in obs {
            for (m, v) in mean.iter_mut().zip(y) {
                *m += v / c;
            }
        }
        let mut scatter = vec![0.0; q * q];
        for y in obs {
            for i in 0..q {
                for j in 0..q {
                    scatter[i * q + j] += (y[i] - mean[i]) * (y[j] - mean[j]);
                }
            }
        }
        Self {
            count: obs.len(),
            mean,
            scatter,
        }
    }
}

/// Log-likelihood value with the reason it was floored, if it was.
#[derive(Clone, Debug, PartialEq)]
pub struct Loglik {
    pub value: f64,
    pub failure: Option<String>,
}

/// A forward map bound to a data set.
#[derive(Clone)]
pub struct Experiment<M> {
    pub forward: Forward<M>,
    pub data: SnapshotData,
    stats: Vec<Stats>,
}

impl<M: Model> Experiment<M> {
    pub fn new(forward: Forward<M>, data: SnapshotData) -> Result<Self> {
        let plan = &forward.problem.plan;
        let same_times = plan.times.len() == data.n_times()
            && plan.times.iter().zip(data.times()).all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(1.0));
        if !same_times {
            return Err(Error::Data(format!(
                "data times {:?} do not match the observation plan {:?}",
                data.times(),
                plan.times
            )));
        }
        if data.dim() != plan.n_outputs() {
            return Err(Error::Data(format!(
                "data have {} outputs per observation, the plan has {}",
                data.dim(),
                plan.n_outputs()
            )));
        }
        let stats = (0..data.n_times()).map(|i| Stats::of(data.at(i))).collect();
        Ok(Self { forward, data, stats })
    }

    pub fn dim(&self) -> usize {
        self.forward.encoding.dim()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.forward.encoding.bounds()
    }

    /// Log-likelihood, or the error that prevented building a surrogate.
    pub fn try_loglik(&self, xi: &[f64]) -> Result<f64> {
        let dens = self.forward.surrogates(xi)?;
        let mut total = 0.0;
        for (i, d) in dens.iter().enumerate() {
            total += match d {
                SurrogateDensity::Normal(n) => {
                    let s = &self.stats[i];
                    n.loglik_stats(s.count, &s.mean, &s.scatter)
                }
                _ => self.data.at(i).iter().map(|y| d.logpdf(y)).sum(),
            };
        }
        Ok(if total.is_nan() { LOG_FLOOR } else { total.max(LOG_FLOOR) })
    }

    /// Log-likelihood floored at [`LOG_FLOOR`] when no surrogate can be
    /// built, so optimizers see a finite value.
    pub fn loglik(&self, xi: &[f64]) -> Loglik {
        match self.try_loglik(xi) {
            Ok(value) => Loglik { value, failure: None },
            Err(e) => Loglik {
                value: LOG_FLOOR,
                failure: Some(e.to_string()),
            },
        }
    }

    pub fn value(&self, xi: &[f64]) -> f64 {
        self.loglik(xi).value
    }
}
