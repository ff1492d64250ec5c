//! Bounded Nelder–Mead and multistart maximization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Purpose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NelderMeadOptions {
    /// Initial simplex edge as a fraction of each box width.
    pub initial_step: f64,
    /// Stop once every vertex is within this distance of the best one...
    pub xtol: f64,
    /// ...and the function values spread by less than this.
    pub ftol: f64,
    pub max_evals: usize,
    /// Restart from the converged point until it stops improving.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.05,
            xtol: 1e-6,
            ftol: 1e-10,
            max_evals: 5000,
            restarts: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Minimize `f` over a box. Trial points outside the box are projected
/// onto it.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: &NelderMeadOptions,
) -> OptimResult {
    let mut start = x0.to_vec();
    project(&mut start, bounds);
    let mut best = simplex_run(&mut f, &start, bounds, opts, opts.max_evals);
    let mut evals = best.evals;
    for _ in 0..opts.restarts {
        if evals >= opts.max_evals {
            break;
        }
        let next = simplex_run(&mut f, &best.x.clone(), bounds, opts, opts.max_evals - evals);
        evals += next.evals;
        let improved = next.value < best.value - opts.ftol;
        if next.value <= best.value {
            best = OptimResult { evals, ..next };
        }
        if !improved {
            break;
        }
    }
    best.evals = evals;
    best
}

fn simplex_run<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: &NelderMeadOptions,
    budget: usize,
) -> OptimResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        let v = eval(x0, &mut evals);
        return OptimResult {
            x: vec![],
            value: v,
            evals,
            converged: true,
        };
    }
    let mut pts = vec![x0.to_vec()];
    for i in 0..n {
        let (lo, hi) = bounds[i];
        let step = opts.initial_step * (hi - lo);
        let mut p = x0.to_vec();
        // step inward if the vertex would leave the box
        p[i] = if x0[i] + step <= hi { x0[i] + step } else { x0[i] - step };
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, &mut evals)).collect();
    let mut converged = false;

    while evals < budget {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let size = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size <= opts.xtol && (vals[n] - vals[0]).abs() <= opts.ftol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| {
            let mut x: Vec<f64> = centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect();
            project(&mut x, bounds);
            x
        };

        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=n {
            let p: Vec<f64> = pts[i].iter().zip(&pts[0]).map(|(v, b)| b + 0.5 * (v - b)).collect();
            vals[i] = eval(&p, &mut evals);
            pts[i] = p;
        }
    }
    let b = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    OptimResult {
        x: pts[b].clone(),
        value: vals[b],
        evals,
        converged,
    }
}

/// One multistart attempt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub start: Vec<f64>,
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub xi: Vec<f64>,
    pub loglik: f64,
    pub starts: Vec<StartReport>,
}

/// Maximize `loglik` from `init` plus `n_starts - 1` uniform draws from the
/// box; the best finite result wins.
pub fn maximize<F>(loglik: F, init: &[f64], bounds: &[(f64, f64)], n_starts: usize, seed: u64, opts: &NelderMeadOptions) -> Result<MleResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if init.len() != bounds.len() {
        return Err(Error::Config(format!("{} starting values for {} bounds", init.len(), bounds.len())));
    }
    if let Some(i) = (0..init.len()).find(|&i| !(bounds[i].0 <= init[i] && init[i] <= bounds[i].1)) {
        return Err(Error::Config(format!(
            "initial value {} of coordinate {i} lies outside [{}, {}]",
            init[i], bounds[i].0, bounds[i].1
        )));
    }
    let mut rng = stream_rng(seed, Purpose::Starts, 0);
    let mut starts = vec![init.to_vec()];
    for _ in 1..n_starts.max(1) {
        starts.push(bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect());
    }
    use rayon::prelude::*;
    let reports: Vec<StartReport> = starts
        .into_par_iter()
        .map(|s| {
            let r = nelder_mead(|x| -loglik(x), &s, bounds, opts);
            StartReport {
                start: s,
                x: r.x,
                value: -r.value,
                evals: r.evals,
                converged: r.converged,
            }
        })
        .collect();
    let best = reports
        .iter()
        .filter(|r| r.value.is_finite() && r.value > crate::surrogate::LOG_FLOOR)
        .max_by(|a, b| a.value.total_cmp(&b.value));
    match best {
        Some(b) => Ok(MleResult {
            xi: b.x.clone(),
            loglik: b.value,
            starts: reports,
        }),
        None => Err(Error::Optimization(format!(
            "all {} starts failed: {}",
            reports.len(),
            reports
                .iter()
                .map(|r| format!("start {:?} -> {}", r.start, r.value))
                .collect::<Vec<_>>()
                .join("; ")
        ))),
    }
}
