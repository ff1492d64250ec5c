//! Special functions and quadrature rules.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::{erf, gamma};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / SQRT_2)
}

/// Upper tail `1 - Phi(z)` without cancellation.
pub fn norm_sf(z: f64) -> f64 {
    0.5 * erf::erfc(z / SQRT_2)
}

pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erf::erfc_inv(2.0 * p)
}

/// Normal score from a lower tail `p` and upper tail `q = 1 - p`, using
/// whichever is smaller.
pub fn norm_score(p: f64, q: f64) -> f64 {
    if p < 0.5 {
        norm_ppf(p)
    } else if q <= 0.0 {
        f64::INFINITY
    } else {
        SQRT_2 * erf::erfc_inv(2.0 * q)
    }
}

pub fn norm_logpdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

/// `ln Gamma(k) - [(k - 1/2) ln k - k + ln sqrt(2 pi)]`.
pub fn ln_gamma_stirling_remainder(k: f64) -> f64 {
    if k >= 10.0 {
        let r = 1.0 / k;
        let r2 = r * r;
        r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 * (1.0 / 1680.0 - r2 / 1188.0))))
    } else {
        gamma::ln_gamma(k) - ((k - 0.5) * k.ln() - k + LN_SQRT_2PI)
    }
}

/// Lower and upper regularized incomplete gamma `(P(k, x), Q(k, x))`.
///
/// Large shapes use the Wilson-Hilferty transform.
pub fn gamma_pq(k: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if !x.is_finite() {
        return (1.0, 0.0);
    }
    if k > 1e5 {
        let c = 1.0 / (9.0 * k);
        let z = ((x / k).cbrt() - (1.0 - c)) / c.sqrt();
        return (norm_cdf(z), norm_sf(z));
    }
    if x < k + 1.0 {
        let p = gamma::gamma_lr(k, x);
        (p, 1.0 - p)
    } else {
        let q = gamma::gamma_ur(k, x);
        (1.0 - q, q)
    }
}

/// Quantile of the unit-scale gamma distribution given lower tail `p` and
/// upper tail `q`.
///
/// Newton on `ln x` against the log of the smaller tail, bracketed.
pub fn gamma_quantile(k: f64, p: f64, q: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if q <= 0.0 {
        return f64::INFINITY;
    }
    let lower = p < 0.5;
    let target = if lower { p.ln() } else { q.ln() };
    let lg = gamma::ln_gamma(k);
    let z = norm_score(p, q);
    let c = 1.0 / (9.0 * k);
    let wh = k * (1.0 - c + z * c.sqrt()).powi(3);
    let mut u = if wh > 0.0 && wh.is_finite() {
        wh.ln()
    } else {
        // P(k, x) ~ x^k / Gamma(k + 1) for small x
        (p.ln() + gamma::ln_gamma(k + 1.0)) / k
    };
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for _ in 0..300 {
        let x = u.exp();
        let (pp, qq) = gamma_pq(k, x);
        let tail = if lower { pp } else { qq };
        let f = tail.ln() - target;
        // the lower tail grows with u, the upper tail shrinks
        let above = if lower { f > 0.0 } else { f < 0.0 };
        if above {
            hi = u;
        } else {
            lo = u;
        }
        let slope = (k * u - x - lg - tail.ln()).exp();
        let slope = if lower { slope } else { -slope };
        let mut next = u - f / slope;
        if !(next > lo && next < hi) {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 2.0,
                (false, true) => hi - 2.0,
                (false, false) => u,
            };
        }
        if (next - u).abs() <= 1e-15 * u.abs().max(1.0) || hi - lo <= 1e-15 * u.abs().max(1.0) {
            return next.exp();
        }
        u = next;
    }
    u.exp()
}

/// Gauss-Hermite rule for expectations under the standard normal:
/// `E[g(Z)] ~ sum w_i g(x_i)`, weights summing to one.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    sorted_rule(SymmetricEigen::new(j), 1.0)
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let k = i as f64;
        let b = k / (4.0 * k * k - 1.0).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    sorted_rule(SymmetricEigen::new(j), 2.0)
}

fn sorted_rule(eig: SymmetricEigen<f64, nalgebra::Dyn>, mass: f64) -> (Vec<f64>, Vec<f64>) {
    let n = eig.eigenvalues.len();
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mass * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule.into_iter().unzip()
}

/// Composite Gauss-Legendre integral of `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let (x, w) = gauss_legendre(20);
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            acc += wi * f(mid + 0.5 * h * xi);
        }
    }
    acc * 0.5 * h
}

/// `ln(sum exp(x_i))`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
