//! Forward-mode dual numbers.
//!
//! [`Dual1`] carries first derivatives with respect to up to
//! [`MAX_TANGENTS`] inputs and is used for hyperparameter Jacobians.
//! [`Dual2`] carries value, gradient and the packed upper triangle of the
//! Hessian with respect to up to [`MAX_VARS`] inputs in a single pass. It is
//! generic over its coefficient type so that `Dual2<Dual1>` differentiates a
//! Hessian computation once more.

use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::DenseTensor;

pub const MAX_TANGENTS: usize = 16;
pub const MAX_VARS: usize = 8;
const TRI: usize = MAX_VARS * (MAX_VARS + 1) / 2;

// ---------------------------------------------------------------------------
// first order
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual1 {
    re: f64,
    eps: [f64; MAX_TANGENTS],
    n: u8,
}

impl Dual1 {
    pub fn constant(re: f64) -> Self {
        Self {
            re,
            eps: [0.0; MAX_TANGENTS],
            n: 0,
        }
    }

    /// Independent variable number `i` of `n`.
    pub fn variable(re: f64, i: usize, n: usize) -> Self {
        assert!(n <= MAX_TANGENTS && i < n, "dual tangent index out of range");
        let mut eps = [0.0; MAX_TANGENTS];
        eps[i] = 1.0;
        Self {
            re,
            eps,
            n: n as u8,
        }
    }

    pub fn re(&self) -> f64 {
        self.re
    }

    pub fn eps(&self, i: usize) -> f64 {
        self.eps[i]
    }

    #[inline]
    fn chain(self, f0: f64, f1: f64) -> Self {
        let mut out = Self::constant(f0);
        out.n = self.n;
        for i in 0..self.n as usize {
            out.eps[i] = f1 * self.eps[i];
        }
        out
    }
}

impl Add for Dual1 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let n = self.n.max(o.n);
        let mut out = Self::constant(self.re + o.re);
        out.n = n;
        for i in 0..n as usize {
            out.eps[i] = self.eps[i] + o.eps[i];
        }
        out
    }
}

impl Sub for Dual1 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let n = self.n.max(o.n);
        let mut out = Self::constant(self.re - o.re);
        out.n = n;
        for i in 0..n as usize {
            out.eps[i] = self.eps[i] - o.eps[i];
        }
        out
    }
}

impl Mul for Dual1 {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let n = self.n.max(o.n);
        let mut out = Self::constant(self.re * o.re);
        out.n = n;
        for i in 0..n as usize {
            out.eps[i] = self.eps[i] * o.re + self.re * o.eps[i];
        }
        out
    }
}

impl Div for Dual1 {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl Neg for Dual1 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.re, -1.0)
    }
}

impl Add<f64> for Dual1 {
    type Output = Self;
    #[inline]
    fn add(mut self, o: f64) -> Self {
        self.re += o;
        self
    }
}

impl Sub<f64> for Dual1 {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: f64) -> Self {
        self.re -= o;
        self
    }
}

impl Mul<f64> for Dual1 {
    type Output = Self;
    #[inline]
    fn mul(self, o: f64) -> Self {
        self.chain(self.re * o, o)
    }
}

impl Div<f64> for Dual1 {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        self * (1.0 / o)
    }
}

macro_rules! assign_ops {
    ($t:ty) => {
        impl AddAssign for $t {
            #[inline]
            fn add_assign(&mut self, o: Self) {
                *self = *self + o;
            }
        }
        impl SubAssign for $t {
            #[inline]
            fn sub_assign(&mut self, o: Self) {
                *self = *self - o;
            }
        }
        impl MulAssign for $t {
            #[inline]
            fn mul_assign(&mut self, o: Self) {
                *self = *self * o;
            }
        }
        impl DivAssign for $t {
            #[inline]
            fn div_assign(&mut self, o: Self) {
                *self = *self / o;
            }
        }
    };
}

assign_ops!(Dual1);

impl Real for Dual1 {
    fn cst(x: f64) -> Self {
        Self::constant(x)
    }
    fn value(&self) -> f64 {
        self.re
    }
    fn is_finite_all(&self) -> bool {
        self.re.is_finite() && self.eps[..self.n as usize].iter().all(|e| e.is_finite())
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), 1.0 / self.re)
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.re;
        self.chain(r, -r * r)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::constant(1.0);
        }
        self.chain(self.re.powi(n), n as f64 * self.re.powi(n - 1))
    }
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        self.chain(t, 1.0 - t * t)
    }
}

// ---------------------------------------------------------------------------
// second order
// ---------------------------------------------------------------------------

#[inline]
const fn tri(a: usize, b: usize) -> usize {
    // a <= b
    a * (2 * MAX_VARS - a + 1) / 2 + (b - a)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual2<T: Real = f64> {
    v: T,
    g: [T; MAX_VARS],
    h: [T; TRI],
    n: u8,
}

impl<T: Real> Dual2<T> {
    pub fn constant(v: T) -> Self {
        Self {
            v,
            g: [T::zero(); MAX_VARS],
            h: [T::zero(); TRI],
            n: 0,
        }
    }

    pub fn variable(v: T, i: usize, n: usize) -> Self {
        assert!(n <= MAX_VARS && i < n, "dual variable index out of range");
        let mut out = Self::constant(v);
        out.g[i] = T::one();
        out.n = n as u8;
        out
    }

    pub fn val(&self) -> T {
        self.v
    }

    pub fn grad(&self, i: usize) -> T {
        if i < self.n as usize {
            self.g[i]
        } else {
            T::zero()
        }
    }

    pub fn hess(&self, i: usize, j: usize) -> T {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        if b < self.n as usize {
            self.h[tri(a, b)]
        } else {
            T::zero()
        }
    }

    /// Apply a scalar function with derivatives `f1 = f'(v)`, `f2 = f''(v)`.
    #[inline]
    fn chain(&self, f0: T, f1: T, f2: T) -> Self {
        let n = self.n as usize;
        let mut out = Self::constant(f0);
        out.n = self.n;
        for a in 0..n {
            out.g[a] = f1 * self.g[a];
        }
        for a in 0..n {
            let ga = self.g[a] * f2;
            for b in a..n {
                let k = tri(a, b);
                out.h[k] = f1 * self.h[k] + ga * self.g[b];
            }
        }
        out
    }

    #[inline]
    fn scale_by(&self, s: T) -> Self {
        let n = self.n as usize;
        let mut out = Self::constant(self.v * s);
        out.n = self.n;
        for a in 0..n {
            out.g[a] = self.g[a] * s;
        }
        for a in 0..n {
            for b in a..n {
                let k = tri(a, b);
                out.h[k] = self.h[k] * s;
            }
        }
        out
    }
}

impl<T: Real> Add for Dual2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let n = self.n.max(o.n) as usize;
        let mut out = Self::constant(self.v + o.v);
        out.n = n as u8;
        for a in 0..n {
            out.g[a] = self.g[a] + o.g[a];
        }
        for a in 0..n {
            for b in a..n {
                let k = tri(a, b);
                out.h[k] = self.h[k] + o.h[k];
            }
        }
        out
    }
}

impl<T: Real> Sub for Dual2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let n = self.n.max(o.n) as usize;
        let mut out = Self::constant(self.v - o.v);
        out.n = n as u8;
        for a in 0..n {
            out.g[a] = self.g[a] - o.g[a];
        }
        for a in 0..n {
            for b in a..n {
                let k = tri(a, b);
                out.h[k] = self.h[k] - o.h[k];
            }
        }
        out
    }
}

impl<T: Real> Mul for Dual2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        if o.n == 0 {
            return self.scale_by(o.v);
        }
        if self.n == 0 {
            return o.scale_by(self.v);
        }
        let n = self.n.max(o.n) as usize;
        let mut out = Self::constant(self.v * o.v);
        out.n = n as u8;
        for a in 0..n {
            out.g[a] = self.g[a] * o.v + self.v * o.g[a];
        }
        for a in 0..n {
            for b in a..n {
                let k = tri(a, b);
                out.h[k] = self.h[k] * o.v
                    + self.v * o.h[k]
                    + self.g[a] * o.g[b]
                    + self.g[b] * o.g[a];
            }
        }
        out
    }
}

impl<T: Real> Div for Dual2<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        if o.n == 0 {
            return self.scale_by(o.v.recip());
        }
        self * o.recip()
    }
}

impl<T: Real> Neg for Dual2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.scale_by(T::cst(-1.0))
    }
}

impl<T: Real> Add<f64> for Dual2<T> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: f64) -> Self {
        self.v += T::cst(o);
        self
    }
}

impl<T: Real> Sub<f64> for Dual2<T> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: f64) -> Self {
        self.v -= T::cst(o);
        self
    }
}

impl<T: Real> Mul<f64> for Dual2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: f64) -> Self {
        self.scale_by(T::cst(o))
    }
}

impl<T: Real> Div<f64> for Dual2<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        self.scale_by(T::cst(1.0 / o))
    }
}

impl<T: Real> AddAssign for Dual2<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}
impl<T: Real> SubAssign for Dual2<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}
impl<T: Real> MulAssign for Dual2<T> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}
impl<T: Real> DivAssign for Dual2<T> {
    #[inline]
    fn div_assign(&mut self, o: Self) {
        *self = *self / o;
    }
}

impl<T: Real> Real for Dual2<T> {
    fn cst(x: f64) -> Self {
        Self::constant(T::cst(x))
    }
    fn value(&self) -> f64 {
        self.v.value()
    }
    fn is_finite_all(&self) -> bool {
        let n = self.n as usize;
        self.v.is_finite_all()
            && self.g[..n].iter().all(|x| x.is_finite_all())
            && (0..n).all(|a| (a..n).all(|b| self.h[tri(a, b)].is_finite_all()))
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let r = self.v.recip();
        self.chain(self.v.ln(), r, -(r * r))
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let d1 = s.recip() * 0.5;
        let d2 = -(d1 / self.v) * 0.5;
        self.chain(s, d1, d2)
    }
    fn recip(self) -> Self {
        let r = self.v.recip();
        let r2 = r * r;
        self.chain(r, -r2, r2 * r * 2.0)
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::cst(1.0),
            1 => self,
            2 => self * self,
            _ => {
                let pm2 = self.v.powi(n - 2);
                let pm1 = pm2 * self.v;
                self.chain(pm1 * self.v, pm1 * n as f64, pm2 * (n as f64 * (n - 1) as f64))
            }
        }
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        let d1 = -(t * t) + 1.0;
        self.chain(t, d1, -(t * d1) * 2.0)
    }
}

// ---------------------------------------------------------------------------
// derivative bundles
// ---------------------------------------------------------------------------

/// Value, gradients and Hessians of a vector-valued map at one point.
#[derive(Clone, Debug)]
pub struct Derivs<T: Real = f64> {
    pub value: Vec<T>,
    /// `grad[i][a]` = d f_i / d theta_a.
    pub grad: Vec<Vec<T>>,
    pub hess: Vec<DenseTensor<T>>,
}

impl<T: Real> Derivs<T> {
    pub fn n_outputs(&self) -> usize {
        self.value.len()
    }

    pub fn dim(&self) -> usize {
        self.grad.first().map_or(0, Vec::len)
    }

    /// Restrict to a subset of outputs.
    pub fn select(&self, outputs: &[usize]) -> Self {
        Self {
            value: outputs.iter().map(|&i| self.value[i]).collect(),
            grad: outputs.iter().map(|&i| self.grad[i].clone()).collect(),
            hess: outputs.iter().map(|&i| self.hess[i].clone()).collect(),
        }
    }
}

/// Evaluate `f` at `theta` together with exact gradients and Hessians of
/// every output.
pub fn eval_with_derivs<T, F>(f: F, theta: &[T]) -> Result<Derivs<T>>
where
    T: Real,
    F: FnOnce(&[Dual2<T>]) -> Result<Vec<Dual2<T>>>,
{
    let all: Vec<usize> = (0..theta.len()).collect();
    eval_with_derivs_on(f, theta, &all)
}

/// As [`eval_with_derivs`] but differentiating only with respect to the
/// coordinates listed in `active`; the remaining inputs are held constant
/// and the returned gradients/Hessians are over `active` in that order.
pub fn eval_with_derivs_on<T, F>(f: F, theta: &[T], active: &[usize]) -> Result<Derivs<T>>
where
    T: Real,
    F: FnOnce(&[Dual2<T>]) -> Result<Vec<Dual2<T>>>,
{
    let d = active.len();
    if d > MAX_VARS {
        return Err(Error::Domain(format!(
            "at most {MAX_VARS} random parameters can be differentiated (got {d})"
        )));
    }
    let mut x: Vec<Dual2<T>> = theta.iter().map(|&v| Dual2::constant(v)).collect();
    for (slot, &i) in active.iter().enumerate() {
        x[i] = Dual2::variable(theta[i], slot, d);
    }
    let out = f(&x)?;
    let mut derivs = Derivs {
        value: Vec::with_capacity(out.len()),
        grad: Vec::with_capacity(out.len()),
        hess: Vec::with_capacity(out.len()),
    };
    for (i, y) in out.iter().enumerate() {
        if !y.is_finite_all() {
            return Err(Error::NonFinite {
                output: i,
                theta: theta.iter().map(Real::value).collect(),
            });
        }
        derivs.value.push(y.val());
        derivs.grad.push((0..d).map(|a| y.grad(a)).collect());
        let mut h = DenseTensor::zeros(&[d, d]);
        for a in 0..d {
            for b in 0..d {
                h.set(&[a, b], y.hess(a, b));
            }
        }
        derivs.hess.push(h);
    }
    Ok(derivs)
}
