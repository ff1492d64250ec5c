//! Profile likelihood and interval-based identifiability verdicts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::optim::{nelder_mead, NelderMeadOptions};

/// Half the 0.95 quantile of chi-squared with one degree of freedom.
pub const PROFILE_THRESHOLD: f64 = -1.920_729_410_347_062;
const MAX_BISECTIONS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Identifiable,
    OneSided,
    NonIdentifiable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileOptions {
    pub points: usize,
    /// Profile range; the coordinate's box when absent.
    pub range: Option<(f64, f64)>,
    pub optimizer: NelderMeadOptions,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            points: 40,
            range: None,
            optimizer: NelderMeadOptions {
                max_evals: 2000,
                ..NelderMeadOptions::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub phi: f64,
    /// Normalized profile log-likelihood; `None` where the inner fit failed.
    pub value: Option<f64>,
    pub xi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileResult {
    pub index: usize,
    pub name: String,
    pub mle: f64,
    pub points: Vec<ProfilePoint>,
    pub threshold: f64,
    pub ci: (f64, f64),
    pub lower_open: bool,
    pub upper_open: bool,
    pub verdict: Verdict,
    /// Log-likelihood used for normalization; above the input maximum when
    /// the profile found a better point.
    pub loglik_max: f64,
}

impl ProfileResult {
    pub fn contains(&self, phi: f64) -> bool {
        self.ci.0 <= phi && phi <= self.ci.1
    }

    pub fn phis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.phi).collect()
    }

    pub fn values(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.value).collect()
    }
}

/// Profile coordinate `index` of `xi_hat` over a grid, re-maximizing the
/// other coordinates at each point warm-started from its neighbor.
pub fn profile<F>(
    loglik: F,
    xi_hat: &[f64],
    loglik_hat: f64,
    bounds: &[(f64, f64)],
    index: usize,
    name: &str,
    opts: &ProfileOptions,
) -> Result<ProfileResult>
where
    F: Fn(&[f64]) -> f64,
{
    let d = xi_hat.len();
    if index >= d || bounds.len() != d {
        return Err(Error::Config(format!("cannot profile coordinate {index} of {d}")));
    }
    if opts.points < 2 {
        return Err(Error::Config("a profile needs at least two grid points".into()));
    }
    let (lo, hi) = opts.range.unwrap_or(bounds[index]);
    if !(lo < hi) {
        return Err(Error::Config(format!("empty profile range [{lo}, {hi}]")));
    }
    let phi_hat = xi_hat[index];
    let mut grid: Vec<f64> = (0..opts.points).map(|k| lo + (hi - lo) * k as f64 / (opts.points - 1) as f64).collect();
    if lo < phi_hat && phi_hat < hi && !grid.contains(&phi_hat) {
        grid.push(phi_hat);
        grid.sort_by(f64::total_cmp);
    }
    let centre = grid.iter().position(|&g| g >= phi_hat).unwrap_or(grid.len() - 1);

    let nuisance: Vec<usize> = (0..d).filter(|&i| i != index).collect();
    let nb: Vec<(f64, f64)> = nuisance.iter().map(|&i| bounds[i]).collect();
    let embed = |phi: f64, lam: &[f64]| {
        let mut x = vec![0.0; d];
        x[index] = phi;
        for (k, &i) in nuisance.iter().enumerate() {
            x[i] = lam[k];
        }
        x
    };
    let ok = |v: f64| v.is_finite() && v > crate::surrogate::LOG_FLOOR;
    let fit = |phi: f64, warm: &[f64]| {
        let r = nelder_mead(|lam| -loglik(&embed(phi, lam)), warm, &nb, &opts.optimizer);
        (-r.value, r.x)
    };
    // Fits at `to` from a solution at `from`; when the warm start is
    // infeasible there, walks in with bisected steps.
    let advance = |from: f64, warm: &[f64], to: f64| -> (f64, Vec<f64>) {
        let (v, x) = fit(to, warm);
        if ok(v) {
            return (v, x);
        }
        let (mut phi, mut lam) = (from, warm.to_vec());
        let mut step = (to - from) / 2.0;
        for _ in 0..MAX_BISECTIONS {
            let next = if (to - phi).abs() <= step.abs() { to } else { phi + step };
            let (v, x) = fit(next, &lam);
            if ok(v) {
                if next == to {
                    return (v, x);
                }
                (phi, lam) = (next, x);
            } else {
                step /= 2.0;
            }
        }
        (v, x)
    };
    let hat_lam: Vec<f64> = nuisance.iter().map(|&i| xi_hat[i]).collect();
    let mut raw: Vec<(f64, Vec<f64>)> = vec![(f64::NAN, Vec::new()); grid.len()];
    for dir in [1isize, -1] {
        let (mut phi, mut warm) = (phi_hat, hat_lam.clone());
        let mut k = if dir > 0 { centre as isize } else { centre as isize - 1 };
        while k >= 0 && (k as usize) < grid.len() {
            let target = grid[k as usize];
            let (v, x) = advance(phi, &warm, target);
            raw[k as usize] = (v, embed(target, &x));
            if ok(v) {
                (phi, warm) = (target, x);
            }
            k += dir;
        }
    }

    let best = raw.iter().map(|r| r.0).filter(|&v| ok(v)).fold(loglik_hat, f64::max);
    let points: Vec<ProfilePoint> = grid
        .iter()
        .zip(&raw)
        .map(|(&phi, (v, xi))| ProfilePoint {
            phi,
            value: ok(*v).then(|| v - best),
            xi: xi.clone(),
        })
        .collect();

    let (ci, lower_open, upper_open) = interval(&points, phi_hat, PROFILE_THRESHOLD);
    let verdict = match (lower_open, upper_open) {
        (false, false) => Verdict::Identifiable,
        (true, true) => Verdict::NonIdentifiable,
        _ => Verdict::OneSided,
    };
    Ok(ProfileResult {
        index,
        name: name.to_string(),
        mle: phi_hat,
        points,
        threshold: PROFILE_THRESHOLD,
        ci,
        lower_open,
        upper_open,
        verdict,
        loglik_max: best,
    })
}

/// Connected superlevel set around `phi_hat`, with linearly interpolated
/// crossings. Failed points count as below the threshold.
fn interval(points: &[ProfilePoint], phi_hat: f64, threshold: f64) -> ((f64, f64), bool, bool) {
    let above = |k: usize| points[k].value.is_some_and(|v| v > threshold);
    let n = points.len();
    let start = points
        .iter()
        .enumerate()
        .filter(|(k, _)| above(*k))
        .min_by(|a, b| (a.1.phi - phi_hat).abs().total_cmp(&(b.1.phi - phi_hat).abs()))
        .map(|(k, _)| k);
    let Some(s) = start else {
        return ((phi_hat, phi_hat), false, false);
    };
    let mut l = s;
    while l > 0 && above(l - 1) {
        l -= 1;
    }
    let mut u = s;
    while u + 1 < n && above(u + 1) {
        u += 1;
    }
    let cross = |inside: usize, outside: usize| -> f64 {
        let (a, b) = (&points[inside], &points[outside]);
        match b.value {
            Some(vb) => {
                let va = a.value.unwrap_or(0.0);
                a.phi + (threshold - va) / (vb - va) * (b.phi - a.phi)
            }
            None => a.phi,
        }
    };
    let lower_open = l == 0;
    let upper_open = u == n - 1;
    let lo = if lower_open { points[0].phi } else { cross(l, l - 1) };
    let hi = if upper_open { points[n - 1].phi } else { cross(u, u + 1) };
    ((lo.min(phi_hat), hi.max(phi_hat)), lower_open, upper_open)
}
