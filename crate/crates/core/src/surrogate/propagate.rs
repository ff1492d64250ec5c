use serde::{Deserialize, Serialize};

use crate::dist::InputMoments;
use crate::dual::Derivs;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{frobenius, frobenius_kron, kron, DenseTensor};

/// Mean, covariance and marginal skewness of the model outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputMoments<T = f64> {
    pub mu: Vec<T>,
    /// Row-major `n x n`.
    pub sigma: Vec<T>,
    pub omega: Vec<T>,
    /// Diagonal jitter was added to repair a non-positive variance.
    pub jittered: bool,
}

impl<T: Real> OutputMoments<T> {
    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn cov(&self, i: usize, j: usize) -> T {
        self.sigma[i * self.n() + j]
    }

    pub fn var(&self, i: usize) -> T {
        self.cov(i, i)
    }

    pub fn to_f64(&self) -> OutputMoments<f64> {
        OutputMoments {
            mu: self.mu.iter().map(Real::value).collect(),
            sigma: self.sigma.iter().map(Real::value).collect(),
            omega: self.omega.iter().map(Real::value).collect(),
            jittered: self.jittered,
        }
    }

    /// Sub-block for the listed outputs.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            mu: idx.iter().map(|&i| self.mu[i]).collect(),
            sigma: idx.iter().flat_map(|&i| idx.iter().map(move |&j| (i, j))).map(|(i, j)| self.cov(i, j)).collect(),
            omega: idx.iter().map(|&i| self.omega[i]).collect(),
            jittered: self.jittered,
        }
    }
}

/// Raw moments `<f_i>`, `<f_i f_j>` and `<f_i^3>` in the expanded form.
#[derive(Clone, Debug)]
pub struct RawMoments<T = f64> {
    pub first: Vec<T>,
    pub second: Vec<T>,
    pub third: Vec<T>,
}

struct Pieces<T: Real> {
    grad: Vec<DenseTensor<T>>,
    m: Vec<T>,
}

fn check_dims<T: Real>(input: &InputMoments<T>, derivs: &Derivs<T>) -> Result<()> {
    let d = input.dim();
    for (g, h) in derivs.grad.iter().zip(&derivs.hess) {
        if g.len() != d || h.shape() != [d, d] {
            return Err(Error::ShapeMismatch {
                left: vec![d],
                right: vec![g.len()],
            });
        }
    }
    Ok(())
}

fn pieces<T: Real>(input: &InputMoments<T>, derivs: &Derivs<T>) -> Result<Pieces<T>> {
    let grad = derivs.grad.iter().map(|g| DenseTensor::vector(g)).collect();
    let m = derivs
        .hess
        .iter()
        .map(|h| frobenius(&input.v, h).map(|x| x * 0.5))
        .collect::<Result<_>>()?;
    Ok(Pieces { grad, m })
}

/// Second-order Taylor moment propagation with fourth-order closure.
///
/// Evaluated in central form, which is algebraically identical to
/// [`raw_moments`] minus the powers of the mean but does not cancel
/// `f^2`/`f^3` terms.
pub fn propagate<T: Real>(input: &InputMoments<T>, derivs: &Derivs<T>) -> Result<OutputMoments<T>> {
    check_dims(input, derivs)?;
    let n = derivs.n_outputs();
    let Pieces { grad, m } = pieces(input, derivs)?;
    let hess = &derivs.hess;
    let mu: Vec<T> = derivs.value.iter().zip(&m).map(|(&f, &m)| f + m).collect();

    let mut sigma = vec![T::zero(); n * n];
    let mut quad = vec![T::zero(); n];
    for i in 0..n {
        for j in i..n {
            let a = frobenius_kron(&input.v, &grad[i], &grad[j])?;
            let c = (frobenius_kron(&input.s, &hess[i], &grad[j])? + frobenius_kron(&input.s, &hess[j], &grad[i])?) * 0.5;
            let e = frobenius_kron(&input.k, &hess[i], &hess[j])?;
            let second = a + c + e * 0.25;
            if i == j {
                quad[i] = second;
            }
            let cov = second - m[i] * m[j];
            sigma[i * n + j] = cov;
            sigma[j * n + i] = cov;
        }
    }

    let jittered = condition(&mut sigma, &mu)?;

    let mut omega = Vec::with_capacity(n);
    for i in 0..n {
        let gg = kron(&grad[i], &grad[i]);
        let b = frobenius_kron(&input.s, &gg, &grad[i])?;
        let d = frobenius_kron(&input.k, &gg, &hess[i])?;
        let mi = m[i];
        let third = b + d * 1.5 - mi * quad[i] * 3.0 + mi * mi * mi * 2.0;
        let var = sigma[i * n + i];
        let w = third / (var * var.sqrt());
        omega.push(if w.is_finite_all() { w } else { T::zero() });
    }

    Ok(OutputMoments {
        mu,
        sigma,
        omega,
        jittered,
    })
}

/// Adds `1e-10 * max(diag)` to the diagonal once if some variance is not
/// strictly positive.
fn condition<T: Real>(sigma: &mut [T], mu: &[T]) -> Result<bool> {
    let n = mu.len();
    let bad = (0..n).any(|i| {
        let v = sigma[i * n + i];
        !(v.value() > 0.0) || !v.is_finite_all()
    });
    if !bad {
        return Ok(false);
    }
    let max_diag = (0..n).map(|i| sigma[i * n + i].value()).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let eps = if max_diag > 0.0 {
        1e-10 * max_diag
    } else {
        1e-10 * mu.iter().map(|m| m.value() * m.value()).fold(1.0, f64::max)
    };
    for i in 0..n {
        sigma[i * n + i] = sigma[i * n + i] + eps;
        let v = sigma[i * n + i];
        if !(v.value() > 0.0) || !v.is_finite_all() {
            return Err(Error::DegenerateOutput { index: i });
        }
    }
    Ok(true)
}

/// The raw-moment expansion, term by term.
pub fn raw_moments<T: Real>(input: &InputMoments<T>, derivs: &Derivs<T>) -> Result<RawMoments<T>> {
    check_dims(input, derivs)?;
    let n = derivs.n_outputs();
    let Pieces { grad, m } = pieces(input, derivs)?;
    let f = &derivs.value;
    let hess = &derivs.hess;
    let first: Vec<T> = (0..n).map(|i| f[i] + m[i]).collect();
    let mut second = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let vh = (frobenius(&input.v, &hess[j])? * f[i] + frobenius(&input.v, &hess[i])? * f[j]) * 0.5
                + frobenius_kron(&input.v, &grad[i], &grad[j])?;
            let s = frobenius_kron(&input.s, &grad[i], &hess[j])? + frobenius_kron(&input.s, &grad[j], &hess[i])?;
            let k = frobenius_kron(&input.k, &hess[i], &hess[j])? * 0.25;
            // the cubic index order (a, b, c) of S is symmetric, so the
            // gradient may sit on either side of the Hessian
            second[i * n + j] = f[i] * f[j] + vh + s * 0.5 + k;
        }
    }
    let mut third = Vec::with_capacity(n);
    for i in 0..n {
        let fi = f[i];
        let gg = kron(&grad[i], &grad[i]);
        let v = frobenius(&input.v, &gg)? * fi * 3.0 + frobenius(&input.v, &hess[i])? * fi * fi * 1.5;
        let s = frobenius_kron(&input.s, &gg, &grad[i])? + frobenius_kron(&input.s, &hess[i], &grad[i])? * fi * 3.0;
        let k = frobenius_kron(&input.k, &hess[i], &hess[i])? * fi * 0.75 + frobenius_kron(&input.k, &gg, &hess[i])? * 1.5;
        third.push(fi * fi * fi + v + s + k);
    }
    Ok(RawMoments { first, second, third })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{moments_of, normal, shifted_gamma, uniform, AtomicSpec, DistSpec};
    use crate::dual::eval_with_derivs;
    use approx::assert_relative_eq;

    fn atomic(spec: &DistSpec) -> &AtomicSpec {
        match spec {
            DistSpec::Atomic(a) => a,
            DistSpec::Mixture(_) => unreachable!(),
        }
    }

    #[test]
    fn affine_map_is_exact() {
        let spec = DistSpec::Atomic(AtomicSpec::independent(vec![
            shifted_gamma("a", 1.0, 0.5, 1.2),
            normal("b", -2.0, 0.3),
            uniform("c", 4.0, 1.0),
        ]));
        let input = moments_of(atomic(&spec)).unwrap();
        let a = [[1.5, -2.0, 0.5], [0.0, 3.0, -1.0]];
        let b = [0.2, -7.0];
        let d = eval_with_derivs(
            |x| Ok((0..2).map(|i| x[0] * a[i][0] + x[1] * a[i][1] + x[2] * a[i][2] + b[i]).collect()),
            &input.mean,
        )
        .unwrap();
        let out = propagate(&input, &d).unwrap();
        assert!(!out.jittered);
        let vars = [0.25, 0.09, 1.0];
        let m3 = [1.2 * 0.125, 0.0, 0.0];
        for i in 0..2 {
            let mean: f64 = (0..3).map(|k| a[i][k] * input.mean[k]).sum::<f64>() + b[i];
            assert_relative_eq!(out.mu[i], mean, max_relative = 1e-12);
            for j in 0..2 {
                let cov: f64 = (0..3).map(|k| a[i][k] * a[j][k] * vars[k]).sum();
                assert_relative_eq!(out.cov(i, j), cov, max_relative = 1e-12);
            }
            let third: f64 = (0..3).map(|k| a[i][k].powi(3) * m3[k]).sum();
            assert_relative_eq!(out.omega[i], third / out.var(i).powf(1.5), max_relative = 1e-12);
        }
    }

    #[test]
    fn square_of_standard_normal() {
        let spec = DistSpec::Atomic(AtomicSpec::independent(vec![normal("x", 0.0, 1.0)]));
        let input = moments_of(atomic(&spec)).unwrap();
        let d = eval_with_derivs(|x| Ok(vec![x[0] * x[0]]), &input.mean).unwrap();
        let out = propagate(&input, &d).unwrap();
        assert_relative_eq!(out.mu[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(out.var(0), 2.0, epsilon = 1e-15);
        let raw = raw_moments(&input, &d).unwrap();
        assert_relative_eq!(raw.second[0], 3.0, epsilon = 1e-15);
    }

    #[test]
    fn quadratic_of_gaussian_mean_and_second_moment_are_exact() {
        // f = 1 + x + 2 y + x^2 + x y, x ~ N(1, 0.5), y ~ N(-1, 0.2), independent
        let spec = DistSpec::Atomic(AtomicSpec::independent(vec![normal("x", 1.0, 0.5), normal("y", -1.0, 0.2)]));
        let input = moments_of(atomic(&spec)).unwrap();
        let f = |x: f64, y: f64| 1.0 + x + 2.0 * y + x * x + x * y;
        let d = eval_with_derivs(|v| Ok(vec![v[0] + v[1] * 2.0 + v[0] * v[0] + v[0] * v[1] + 1.0]), &input.mean).unwrap();
        let raw = raw_moments(&input, &d).unwrap();
        // brute force by tensor Gauss-Hermite, exact for polynomials of this degree
        let (z, w) = crate::special::gauss_hermite(12);
        let (mut m1, mut m2) = (0.0, 0.0);
        for (zi, wi) in z.iter().zip(&w) {
            for (zj, wj) in z.iter().zip(&w) {
                let v = f(1.0 + 0.5 * zi, -1.0 + 0.2 * zj);
                m1 += wi * wj * v;
                m2 += wi * wj * v * v;
            }
        }
        assert_relative_eq!(raw.first[0], m1, max_relative = 1e-12);
        assert_relative_eq!(raw.second[0], m2, max_relative = 1e-12);
    }

    #[test]
    fn central_form_matches_raw_expansion() {
        let spec = DistSpec::Atomic(AtomicSpec::independent(vec![
            shifted_gamma("a", 2.0, 0.3, 0.8),
            normal("b", 1.0, 0.2),
            uniform("c", 0.5, 0.1),
        ]));
        let input = moments_of(atomic(&spec)).unwrap();
        let d = eval_with_derivs(
            |x| Ok(vec![x[0] * x[1] + x[2].exp(), x[0].ln() * x[1] * x[1] - x[2] * x[0]]),
            &input.mean,
        )
        .unwrap();
        let out = propagate(&input, &d).unwrap();
        let raw = raw_moments(&input, &d).unwrap();
        for i in 0..2 {
            assert_relative_eq!(out.mu[i], raw.first[i], max_relative = 1e-13);
            for j in 0..2 {
                let cov = raw.second[i * 2 + j] - raw.first[i] * raw.first[j];
                assert_relative_eq!(out.cov(i, j), cov, max_relative = 1e-10);
            }
            let mu = raw.first[i];
            let var = out.var(i);
            let third = raw.third[i] - 3.0 * mu * var - mu.powi(3);
            assert_relative_eq!(out.omega[i], third / var.powf(1.5), max_relative = 1e-8);
        }
    }

    #[test]
    fn degenerate_input_is_jittered() {
        let spec = DistSpec::Atomic(AtomicSpec::independent(vec![crate::dist::degenerate("k", 2.0)]));
        let input = moments_of(atomic(&spec)).unwrap();
        let d = eval_with_derivs(|x| Ok(vec![x[0] * 3.0]), &input.mean).unwrap();
        let out = propagate(&input, &d).unwrap();
        assert!(out.jittered);
        assert_relative_eq!(out.var(0), 1e-10 * 36.0);
        assert_eq!(out.omega[0], 0.0);
    }

    #[test]
    fn select_extracts_sub_block() {
        let m = OutputMoments {
            mu: vec![1.0, 2.0, 3.0],
            sigma: vec![1.0, 0.1, 0.2, 0.1, 2.0, 0.3, 0.2, 0.3, 3.0],
            omega: vec![0.0, 0.5, 1.0],
            jittered: false,
        };
        let s = m.select(&[2, 0]);
        assert_eq!(s.mu, vec![3.0, 1.0]);
        assert_eq!(s.sigma, vec![3.0, 0.2, 0.2, 1.0]);
    }
}
