//! Dormand-Prince 5(4) integration over generic scalars.
//!
//! Step-size control looks only at primal values, so derivative
//! components ride along with the accepted steps. Steps are clipped to
//! land on every requested output time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Integrate on a fixed grid of this many steps over the horizon
    /// instead of adapting.
    pub fixed_steps: Option<usize>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 100_000,
            fixed_steps: None,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b*
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Local error target as a fraction of the requested tolerance, so that
/// accumulated global error stays within the tolerance on the models here.
const LOCAL_FRACTION: f64 = 0.1;

struct Stages<S> {
    k: [Vec<S>; 7],
    tmp: Vec<S>,
}

/// Integrate `dy/dt = rhs(t, y)` from `(t0, y0)` and return the state at
/// each of `times` (ascending, all `>= t0`).
pub fn integrate<S, F>(rhs: F, t0: f64, y0: &[S], times: &[f64], opts: &OdeOptions) -> Result<Vec<Vec<S>>>
where
    S: Real,
    F: Fn(f64, &[S], &mut [S]),
{
    let n = y0.len();
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < t0) {
        return Err(Error::Integration {
            t: t0,
            reason: "output times must be ascending and not before the initial time".into(),
        });
    }
    let mut st = Stages {
        k: std::array::from_fn(|_| vec![S::zero(); n]),
        tmp: vec![S::zero(); n],
    };
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut out = Vec::with_capacity(times.len());
    let horizon = times.last().map_or(0.0, |&tl| tl - t0);

    if let Some(steps) = opts.fixed_steps {
        let h_max = horizon / steps.max(1) as f64;
        for &target in times {
            let span = target - t;
            if span > 0.0 {
                let m = (span / h_max).ceil().max(1.0) as usize;
                let h = span / m as f64;
                for i in 0..m {
                    rhs(t, &y, &mut st.k[0]);
                    step(&rhs, t, h, &mut y, &mut st);
                    t = if i + 1 == m { target } else { t + h };
                }
            }
            check_finite(&y, t)?;
            out.push(y.clone());
        }
        return Ok(out);
    }

    let mut h = initial_step(&rhs, t0, &y, opts, horizon, &mut st);
    let mut steps = 0usize;
    let mut fsal_ready = false;
    for &target in times {
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::Integration {
                    t,
                    reason: format!("exceeded {} steps", opts.max_steps),
                });
            }
            let last = h >= target - t;
            let hs = if last { target - t } else { h };
            if hs <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::Integration {
                    t,
                    reason: "step size underflow".into(),
                });
            }
            if !fsal_ready {
                rhs(t, &y, &mut st.k[0]);
            }
            let y_old = y.clone();
            let err = step(&rhs, t, hs, &mut y, &mut st);
            let err_norm = error_norm(&y_old, &y, &err, opts);
            steps += 1;
            if !err_norm.is_finite() {
                y = y_old;
                fsal_ready = true;
                h = 0.25 * hs;
                continue;
            }
            if err_norm <= 1.0 {
                t = if last { target } else { t + hs };
                // FSAL: the last stage is the derivative at the new point.
                let (head, tail) = st.k.split_at_mut(6);
                head[0].copy_from_slice(&tail[0]);
                fsal_ready = true;
                let fac = if err_norm == 0.0 { 5.0 } else { (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    h = hs * fac;
                }
            } else {
                y = y_old;
                fsal_ready = true;
                h = hs * (0.9 * err_norm.powf(-0.2)).max(0.1);
            }
        }
        check_finite(&y, t)?;
        out.push(y.clone());
    }
    Ok(out)
}

fn check_finite<S: Real>(y: &[S], t: f64) -> Result<()> {
    if y.iter().all(Real::is_finite_all) {
        Ok(())
    } else {
        Err(Error::Integration {
            t,
            reason: "non-finite state".into(),
        })
    }
}

/// One Dormand-Prince step from `(t, y)` with `k[0] = f(t, y)` already set;
/// `y` is advanced in place and the embedded error estimate returned as
/// primal values.
fn step<S, F>(rhs: &F, t: f64, h: f64, y: &mut [S], st: &mut Stages<S>) -> Vec<f64>
where
    S: Real,
    F: Fn(f64, &[S], &mut [S]),
{
    let n = y.len();
    let stage = |coef: &[f64], k: &[Vec<S>], tmp: &mut Vec<S>| {
        for i in 0..n {
            let mut acc = y[i];
            for (c, kj) in coef.iter().zip(k) {
                if *c != 0.0 {
                    acc += kj[i] * (h * c);
                }
            }
            tmp[i] = acc;
        }
    };
    let (k, tmp) = (&mut st.k, &mut st.tmp);
    stage(&[A21], &k[..1], tmp);
    rhs(t + C2 * h, tmp, &mut k[1]);
    stage(&[A31, A32], &k[..2], tmp);
    rhs(t + C3 * h, tmp, &mut k[2]);
    stage(&[A41, A42, A43], &k[..3], tmp);
    rhs(t + C4 * h, tmp, &mut k[3]);
    stage(&[A51, A52, A53, A54], &k[..4], tmp);
    rhs(t + C5 * h, tmp, &mut k[4]);
    stage(&[A61, A62, A63, A64, A65], &k[..5], tmp);
    rhs(t + h, tmp, &mut k[5]);
    stage(&[B1, 0.0, B3, B4, B5, B6], &k[..6], tmp);
    rhs(t + h, tmp, &mut k[6]);
    let mut err = vec![0.0; n];
    for i in 0..n {
        err[i] = h
            * (E1 * k[0][i].value()
                + E3 * k[2][i].value()
                + E4 * k[3][i].value()
                + E5 * k[4][i].value()
                + E6 * k[5][i].value()
                + E7 * k[6][i].value());
    }
    y.copy_from_slice(tmp);
    err
}

fn error_norm<S: Real>(y0: &[S], y1: &[S], err: &[f64], opts: &OdeOptions) -> f64 {
    let n = y0.len().max(1);
    let s: f64 = y0
        .iter()
        .zip(y1)
        .zip(err)
        .map(|((a, b), e)| {
            let sc = LOCAL_FRACTION * (opts.atol + opts.rtol * a.value().abs().max(b.value().abs()));
            (e / sc).powi(2)
        })
        .sum();
    (s / n as f64).sqrt()
}

fn initial_step<S, F>(rhs: &F, t0: f64, y0: &[S], opts: &OdeOptions, horizon: f64, st: &mut Stages<S>) -> f64
where
    S: Real,
    F: Fn(f64, &[S], &mut [S]),
{
    if horizon <= 0.0 {
        return 1.0;
    }
    rhs(t0, y0, &mut st.k[0]);
    let n = y0.len().max(1) as f64;
    let sc = |y: f64| opts.atol + opts.rtol * y.abs();
    let d0 = (y0.iter().map(|y| (y.value() / sc(y.value())).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (y0
        .iter()
        .zip(&st.k[0])
        .map(|(y, f)| (f.value() / sc(y.value())).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(horizon)
}
