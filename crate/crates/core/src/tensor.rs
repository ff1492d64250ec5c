//! Dense tensors for the moment formulas.
//!
//! Storage is a flat array with the last index varying fastest. Every
//! extent equals the parameter dimension `d`; tensors of rank 0..=4 occur.
//! The Kronecker product places the indices of its left operand first, so
//! `kron(a, b)[i.., j..] = a[i..] * b[j..]` and the flat index is
//! `flat(a) * len(b) + flat(b)`.

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor<T = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> DenseTensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn scalar(x: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![x],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::ShapeMismatch {
                left: shape.to_vec(),
                right: vec![data.len()],
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn vector(v: &[T]) -> Self {
        Self {
            shape: vec![v.len()],
            data: v.to_vec(),
        }
    }

    /// Square matrix from a row-major slice.
    pub fn matrix(d: usize, rows: &[T]) -> Result<Self> {
        Self::from_vec(&[d, d], rows.to_vec())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], x: T) {
        let o = self.offset(idx);
        self.data[o] = x;
    }

    pub fn add_at(&mut self, idx: &[usize], x: T) {
        let o = self.offset(idx);
        self.data[o] += x;
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    /// Largest absolute difference between `self` and any index permutation
    /// of itself; zero for supersymmetric tensors.
    pub fn asymmetry(&self) -> f64 {
        let r = self.rank();
        if r < 2 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        let mut idx = vec![0usize; r];
        for flat in 0..self.len() {
            unflatten(flat, &self.shape, &mut idx);
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            let d = (self.data[flat].value() - self.get(&sorted).value()).abs();
            worst = worst.max(d);
        }
        worst
    }
}

pub(crate) fn unflatten(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for k in (0..shape.len()).rev() {
        out[k] = flat % shape[k];
        flat /= shape[k];
    }
}

/// Sum of the elementwise product of two equally shaped tensors.
pub fn frobenius<T: Real>(a: &DenseTensor<T>, b: &DenseTensor<T>) -> Result<T> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    Ok(dot(&a.data, &b.data))
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Multidimensional Kronecker (outer) product.
pub fn kron<T: Real>(a: &DenseTensor<T>, b: &DenseTensor<T>) -> DenseTensor<T> {
    let mut shape = a.shape.clone();
    shape.extend_from_slice(&b.shape);
    let mut data = Vec::with_capacity(a.len() * b.len());
    for &x in &a.data {
        for &y in &b.data {
            data.push(x * y);
        }
    }
    DenseTensor { shape, data }
}

/// `frobenius(t, kron(a, b))` without materialising the product.
pub fn frobenius_kron<T: Real>(
    t: &DenseTensor<T>,
    a: &DenseTensor<T>,
    b: &DenseTensor<T>,
) -> Result<T> {
    if t.rank() != a.rank() + b.rank() || t.len() != a.len() * b.len() {
        let mut joint = a.shape.clone();
        joint.extend_from_slice(&b.shape);
        return Err(Error::ShapeMismatch {
            left: t.shape.clone(),
            right: joint,
        });
    }
    let nb = b.len();
    let mut acc = T::zero();
    for (ia, &x) in a.data.iter().enumerate() {
        if x == T::zero() {
            continue;
        }
        acc += x * dot(&t.data[ia * nb..(ia + 1) * nb], &b.data);
    }
    Ok(acc)
}

/// The k-fold Kronecker power of `phi` (k = 0..=4).
pub fn moment_tensor<T: Real>(phi: &[T], k: usize) -> Result<DenseTensor<T>> {
    if k > 4 {
        return Err(Error::UnsupportedOrder(k));
    }
    let v = DenseTensor::vector(phi);
    let mut out = DenseTensor::scalar(T::one());
    for _ in 0..k {
        out = kron(&v, &out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn random(shape: &[usize], seed: &mut u64) -> DenseTensor {
        let n = shape.iter().product();
        DenseTensor::from_vec(shape, (0..n).map(|_| lcg(seed)).collect()).unwrap()
    }

    #[test]
    fn frobenius_of_identity_is_trace() {
        let a = DenseTensor::matrix(2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = DenseTensor::matrix(2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(frobenius(&a, &b).unwrap(), 5.0);
        assert_eq!(frobenius(&a, &DenseTensor::zeros(&[2, 2])).unwrap(), 0.0);
    }

    #[test]
    fn frobenius_rank3_matches_direct_summation() {
        let mut s = 7;
        let a = random(&[3, 3, 3], &mut s);
        let b = random(&[3, 3, 3], &mut s);
        let mut direct = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    direct += a.get(&[i, j, k]) * b.get(&[i, j, k]);
                }
            }
        }
        assert_relative_eq!(frobenius(&a, &b).unwrap(), direct, epsilon = 1e-14);
        assert_eq!(frobenius(&a, &b).unwrap(), frobenius(&b, &a).unwrap());
    }

    #[test]
    fn frobenius_shape_error_names_both_shapes() {
        let a = DenseTensor::<f64>::zeros(&[2, 2]);
        let b = DenseTensor::<f64>::zeros(&[2, 3]);
        match frobenius(&a, &b) {
            Err(Error::ShapeMismatch { left, right }) => {
                assert_eq!(left, vec![2, 2]);
                assert_eq!(right, vec![2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kron_of_vectors_is_outer_product() {
        let a = DenseTensor::vector(&[1.0, 2.0]);
        let b = DenseTensor::vector(&[3.0, 4.0]);
        let c = kron(&a, &b);
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[3.0, 4.0, 6.0, 8.0]);
        assert_eq!(c.get(&[1, 0]), 6.0);
    }

    #[test]
    fn kron_with_unit_scalar_is_identity() {
        let mut s = 3;
        let b = random(&[3, 3], &mut s);
        assert_eq!(kron(&DenseTensor::scalar(1.0), &b), b);
    }

    #[test]
    fn kron_mixed_product_property() {
        let mut s = 11;
        let a = random(&[3, 3], &mut s);
        let b = random(&[3, 3], &mut s);
        let c = random(&[3, 3], &mut s);
        let d = random(&[3, 3], &mut s);
        let lhs = frobenius(&kron(&a, &c), &kron(&b, &d)).unwrap();
        let rhs = frobenius(&a, &b).unwrap() * frobenius(&c, &d).unwrap();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        assert_relative_eq!(frobenius_kron(&kron(&b, &d), &a, &c).unwrap(), lhs, epsilon = 1e-12);
    }

    #[test]
    fn moment_tensor_examples() {
        let m = moment_tensor(&[1.0, -1.0], 2).unwrap();
        assert_eq!(m.data(), &[1.0, -1.0, -1.0, 1.0]);
        let m3 = moment_tensor(&[2.0, 3.0], 3).unwrap();
        assert_eq!(m3.get(&[0, 1, 1]), 18.0);
        let z = moment_tensor(&[0.0, 0.0, 0.0], 4).unwrap();
        assert!(z.data().iter().all(|&x| x == 0.0));
        assert_eq!(moment_tensor(&[5.0], 0).unwrap().data(), &[1.0]);
        assert_eq!(moment_tensor(&[5.0, 6.0], 1).unwrap().data(), &[5.0, 6.0]);
        assert!(matches!(moment_tensor(&[1.0], 5), Err(Error::UnsupportedOrder(5))));
    }

    #[test]
    fn moment_tensor_recursion_and_symmetry() {
        let mut s = 5;
        let h: Vec<f64> = (0..4).map(|_| lcg(&mut s)).collect();
        for k in 2..=4 {
            let mk = moment_tensor(&h, k).unwrap();
            let rec = kron(&DenseTensor::vector(&h), &moment_tensor(&h, k - 1).unwrap());
            assert_eq!(mk, rec);
            assert!(mk.asymmetry() < 1e-15);
        }
    }

    #[test]
    fn quadratic_form_identity() {
        let mut s = 19;
        for d in 1..=4 {
            let a: Vec<f64> = (0..d).map(|_| lcg(&mut s)).collect();
            let b: Vec<f64> = (0..d).map(|_| lcg(&mut s)).collect();
            let h: Vec<f64> = (0..d).map(|_| lcg(&mut s)).collect();
            let lhs = frobenius(
                &moment_tensor(&h, 2).unwrap(),
                &kron(&DenseTensor::vector(&a), &DenseTensor::vector(&b)),
            )
            .unwrap();
            let ah: f64 = a.iter().zip(&h).map(|(x, y)| x * y).sum();
            let bh: f64 = b.iter().zip(&h).map(|(x, y)| x * y).sum();
            assert_relative_eq!(lhs, ah * bh, epsilon = 1e-13);
        }
    }
}
