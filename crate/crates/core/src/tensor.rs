//! Dense row-major tensors and the basic numeric operations on them.

use crate::scalar::{gemm, Trans};
use crate::{Error, Result, Rng, Scalar};

/// Norms at or below this are treated as zero by the normalizing operations.
pub const NORM_EPS: f64 = 1e-12;

/// Dense n-dimensional array (rank 1 to 4), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::Dimension(format!("rank must be 1..=4, got shape {shape:?}")));
    }
    if shape.contains(&0) {
        return Err(Error::Dimension(format!("extents must be positive, got shape {shape:?}")));
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn filled(shape: &[usize], value: T) -> Result<Self> {
        check_shape(shape)?;
        let n = shape.iter().product();
        Ok(Tensor { shape: shape.to_vec(), data: vec![value; n] })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::filled(shape, T::zero())
    }

    pub fn zeros_like(other: &Self) -> Self {
        Tensor { shape: other.shape.clone(), data: vec![T::zero(); other.data.len()] }
    }

    /// Row-major matrix from nested rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::from_vec(&[r, c], rows.concat())
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Self::zeros(&[n, n])?;
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        Ok(t)
    }

    /// Standard normal entries scaled by `std`.
    pub fn randn(shape: &[usize], std: f64, rng: &mut Rng) -> Result<Self> {
        check_shape(shape)?;
        let n = shape.iter().product();
        let s = T::of(std);
        let data = (0..n).map(|_| rng.normal::<T>() * s).collect();
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    /// Uniform entries in `[lo, hi)`.
    pub fn rand_uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Result<Self> {
        check_shape(shape)?;
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform_in(lo, hi)).collect();
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Dimension(format!("expected rank-2 tensor, got shape {:?}", self.shape))),
        }
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[T] {
        let c = self.shape[self.shape.len() - 1];
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.shape[self.shape.len() - 1];
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Leading-axis slices `start..end` (e.g. samples of a batch).
    pub fn slice_outer(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.shape[0] {
            return Err(Error::Dimension(format!(
                "outer slice {start}..{end} out of range for shape {:?}",
                self.shape
            )));
        }
        let inner: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Ok(Tensor { shape, data: self.data[start * inner..end * inner].to_vec() })
    }

    /// Gather leading-axis entries by index.
    pub fn select_outer(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Dimension("empty selection".into()));
        }
        let inner: usize = self.shape[1..].iter().product();
        let mut data = Vec::with_capacity(indices.len() * inner);
        for &i in indices {
            if i >= self.shape[0] {
                return Err(Error::Dimension(format!(
                    "index {i} out of range for leading extent {}",
                    self.shape[0]
                )));
            }
            data.extend_from_slice(&self.data[i * inner..(i + 1) * inner]);
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Ok(Tensor { shape, data })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn norm(&self) -> T {
        norm(&self.data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest absolute elementwise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::from_vec(&[c, r], out)
    }

    /// Element-type conversion.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::of(x.to_f64_lossy())).collect(),
        }
    }
}

pub(crate) fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Matrix product of two rank-2 tensors.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::Dimension(format!(
            "matmul inner extents differ: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = vec![T::zero(); m * n];
    gemm(m, k, n, T::one(), a.data(), Trans::No, b.data(), Trans::No, T::zero(), &mut out);
    Tensor::from_vec(&[m, n], out)
}

/// Row-wise softmax, computed with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (r, _) = logits.dims2()?;
    let mut out = logits.clone();
    for i in 0..r {
        softmax_in_place(out.row_mut(i));
    }
    Ok(out)
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

/// Unit-norm copy of `v`; errors when `‖v‖ ≤ 1e-12`.
pub fn l2_normalize<T: Scalar>(v: &Tensor<T>) -> Result<Tensor<T>> {
    if v.rank() != 1 {
        return Err(Error::Dimension(format!("l2_normalize expects rank 1, got {:?}", v.shape())));
    }
    let mut out = v.clone();
    normalize_in_place(out.data_mut())?;
    Ok(out)
}

pub(crate) fn normalize_in_place<T: Scalar>(v: &mut [T]) -> Result<T> {
    let n = norm(v);
    if !(n > T::of(NORM_EPS)) {
        return Err(Error::Degenerate(format!("cannot normalize vector of norm {n}")));
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let (m, k) = a.dims2().unwrap();
        let (_, n) = b.dims2().unwrap();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.data()[i * k + p] * b.data()[p * n + j];
                }
                out[i * n + j] = s;
            }
        }
        Tensor::from_vec(&[m, n], out).unwrap()
    }

    #[test]
    fn shape_invariants() {
        assert!(Tensor::<f64>::zeros(&[]).is_err());
        assert!(Tensor::<f64>::zeros(&[1, 1, 1, 1, 1]).is_err());
        assert!(Tensor::<f64>::from_vec(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f64>::zeros(&[2, 0]).is_err());
    }

    #[test]
    fn matmul_identity_and_zero() {
        let i2 = Tensor::<f64>::identity(2).unwrap();
        let v = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(matmul(&i2, &v).unwrap(), v);
        let a = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let z = Tensor::from_rows(&[vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(matmul(&a, &z).unwrap().data(), &[0.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(11);
        let a = Tensor::<f64>::randn(&[3, 4], 1.0, &mut rng).unwrap();
        let b = Tensor::<f64>::randn(&[4, 2], 1.0, &mut rng).unwrap();
        let got = matmul(&a, &b).unwrap();
        assert!(got.max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
    }

    #[test]
    fn matmul_shape_error_names_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]).unwrap();
        let err = matmul(&a, &a).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn matmul_f32() {
        let a = Tensor::<f32>::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let p = matmul(&a, &a).unwrap();
        assert_eq!(p.data(), &[7.0, 10.0, 15.0, 22.0]);
    }

    #[test]
    fn softmax_cases() {
        let s = softmax_rows(&Tensor::from_rows(&[vec![0.0f64, 0.0]]).unwrap()).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_rows(&Tensor::from_rows(&[vec![1000.0f64, 0.0]]).unwrap()).unwrap();
        assert_eq!(s.data()[0], 1.0);
        assert!(s.all_finite());
    }

    #[test]
    fn softmax_matches_naive() {
        let mut rng = Rng::new(5);
        let x = Tensor::<f64>::randn(&[4, 6], 1.0, &mut rng).unwrap();
        let s = softmax_rows(&x).unwrap();
        for i in 0..4 {
            let e: Vec<f64> = x.row(i).iter().map(|v| v.exp()).collect();
            let total: f64 = e.iter().sum();
            for j in 0..6 {
                assert!((s.row(i)[j] - e[j] / total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn l2_normalize_cases() {
        let v = Tensor::from_vec(&[2], vec![3.0f64, 4.0]).unwrap();
        let u = l2_normalize(&v).unwrap();
        assert!((u.data()[0] - 0.6).abs() < 1e-15 && (u.data()[1] - 0.8).abs() < 1e-15);
        let again = l2_normalize(&u).unwrap();
        assert!(again.max_abs_diff(&u) < 1e-12);
        let z = Tensor::from_vec(&[2], vec![0.0f64, 0.0]).unwrap();
        assert!(matches!(l2_normalize(&z), Err(Error::Degenerate(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use crate::Rng;

        proptest! {
            #[test]
            fn softmax_rows_sum_to_one(row in prop::collection::vec(-1000.0f64..1000.0, 1..12)) {
                let n = row.len();
                let s = softmax_rows(&Tensor::from_vec(&[1, n], row).unwrap()).unwrap();
                prop_assert!((s.sum() - 1.0).abs() < 1e-12);
            }

            #[test]
            fn l2_normalize_idempotent(v in prop::collection::vec(-100.0f64..100.0, 1..8)) {
                let t = Tensor::from_vec(&[v.len()], v).unwrap();
                if let Ok(u) = l2_normalize(&t) {
                    prop_assert!((u.norm() - 1.0).abs() < 1e-12);
                    let w = l2_normalize(&u).unwrap();
                    prop_assert!(w.max_abs_diff(&u) < 1e-12);
                }
            }

            #[test]
            fn matmul_associative(seed in 0u64..1000, m in 1usize..5, k in 1usize..5, n in 1usize..5, p in 1usize..5) {
                let mut rng = Rng::new(seed);
                let a = Tensor::<f64>::randn(&[m, k], 1.0, &mut rng).unwrap();
                let b = Tensor::<f64>::randn(&[k, n], 1.0, &mut rng).unwrap();
                let c = Tensor::<f64>::randn(&[n, p], 1.0, &mut rng).unwrap();
                let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
                let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
                prop_assert!(left.max_abs_diff(&right) < 1e-9);
            }
        }
    }
}
