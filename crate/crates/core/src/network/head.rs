use crate::scalar::{gemm, Trans};
use crate::tensor::normalize_in_place;
use crate::{Error, Result, Rng, Scalar, Tensor};

use super::Param;

/// Final linear layer: column `j` of `weight` (`embed_dim × classes`) is the class vector `W_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    /// When set, every column of `weight` is kept at unit norm and `bias` at zero.
    pub normalized: bool,
}

impl<T: Scalar> ClassifierHead<T> {
    pub fn new(embed_dim: usize, classes: usize, normalized: bool, rng: &mut Rng) -> Result<Self> {
        let std = (2.0 / embed_dim as f64).sqrt();
        let weight = Tensor::randn(&[embed_dim, classes], std, rng)?;
        Self::from_tensors(weight, Tensor::zeros(&[classes])?, normalized)
    }

    pub fn from_tensors(weight: Tensor<T>, bias: Tensor<T>, normalized: bool) -> Result<Self> {
        let (_, m) = weight.dims2()?;
        if bias.shape() != [m] {
            return Err(Error::Dimension(format!(
                "head bias {:?} does not match weight {:?}",
                bias.shape(),
                weight.shape()
            )));
        }
        let mut head = ClassifierHead {
            weight: Param::new("head.weight", weight),
            bias: Param::new("head.bias", bias),
            normalized,
        };
        if normalized {
            head.renormalize()?;
        }
        Ok(head)
    }

    pub fn embed_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn classes(&self) -> usize {
        self.weight.value.shape()[1]
    }

    /// Class vector `W_j`.
    pub fn class_vector(&self, j: usize) -> Vec<T> {
        let (d, m) = (self.embed_dim(), self.classes());
        (0..d).map(|r| self.weight.value.data()[r * m + j]).collect()
    }

    /// All class vectors as rows (`classes × embed_dim`).
    pub fn class_vectors(&self) -> Tensor<T> {
        self.weight.value.transpose().expect("weight is rank 2")
    }

    fn check_z(&self, z: &Tensor<T>) -> Result<usize> {
        match z.shape()[..] {
            [n, d] if d == self.embed_dim() => Ok(n),
            _ => Err(Error::Dimension(format!(
                "embeddings {:?} do not match head input dimension {}",
                z.shape(),
                self.embed_dim()
            ))),
        }
    }

    /// Affine class scores `zW + b`, `N×classes`.
    pub fn forward_logits(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_z(z)?;
        let (d, m) = (self.embed_dim(), self.classes());
        let mut out = vec![T::zero(); n * m];
        for row in out.chunks_mut(m) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(n, d, m, T::one(), z.data(), Trans::No, self.weight.value.data(), Trans::No, T::one(), &mut out);
        Tensor::from_vec(&[n, m], out)
    }

    /// Accumulates weight (and, unless normalized, bias) gradients; returns `∂L/∂z`.
    pub fn backward_logits(&mut self, z: &Tensor<T>, grad_logits: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_z(z)?;
        let (d, m) = (self.embed_dim(), self.classes());
        if grad_logits.shape() != [n, m] {
            return Err(Error::Dimension(format!(
                "logit gradient {:?} does not match [{n}, {m}]",
                grad_logits.shape()
            )));
        }
        gemm(d, n, m, T::one(), z.data(), Trans::Yes, grad_logits.data(), Trans::No, T::one(), self.weight.grad.data_mut());
        if !self.normalized {
            for row in grad_logits.data().chunks(m) {
                for (g, &r) in self.bias.grad.data_mut().iter_mut().zip(row) {
                    *g += r;
                }
            }
        }
        let mut gz = vec![T::zero(); n * d];
        gemm(n, m, d, T::one(), grad_logits.data(), Trans::No, self.weight.value.data(), Trans::Yes, T::zero(), &mut gz);
        Tensor::from_vec(&[n, d], gz)
    }

    /// Scales each column of `weight` to unit norm and zeroes `bias`.
    pub fn renormalize(&mut self) -> Result<()> {
        let (d, m) = (self.embed_dim(), self.classes());
        let w = self.weight.value.data_mut();
        for j in 0..m {
            let mut col: Vec<T> = (0..d).map(|r| w[r * m + j]).collect();
            normalize_in_place(&mut col)
                .map_err(|_| Error::Degenerate(format!("classifier column {j} has near-zero norm")))?;
            for (r, v) in col.into_iter().enumerate() {
                w[r * m + j] = v;
            }
        }
        self.bias.value.data_mut().iter_mut().for_each(|b| *b = T::zero());
        Ok(())
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_grad, relative_error};
    use crate::matmul;

    #[test]
    fn basis_response() {
        let w = Tensor::from_rows(&[vec![1.0f64, 0.0, 2.0], vec![0.0, 1.0, 3.0]]).unwrap();
        let head = ClassifierHead::from_tensors(w, Tensor::zeros(&[3]).unwrap(), false).unwrap();
        let z = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(head.forward_logits(&z).unwrap().data(), &[1.0, 0.0, 2.0]);
    }

    #[test]
    fn bias_only_head() {
        let b = Tensor::from_vec(&[3], vec![0.5f64, -1.0, 2.0]).unwrap();
        let head = ClassifierHead::from_tensors(Tensor::zeros(&[2, 3]).unwrap(), b.clone(), false).unwrap();
        let z = Tensor::randn(&[4, 2], 3.0, &mut Rng::new(1)).unwrap();
        let logits = head.forward_logits(&z).unwrap();
        for i in 0..4 {
            assert_eq!(logits.row(i), b.data());
        }
    }

    #[test]
    fn logits_match_matmul() {
        let mut rng = Rng::new(2);
        let head = ClassifierHead::<f64>::new(3, 5, false, &mut rng).unwrap();
        let b = Tensor::randn(&[5], 1.0, &mut rng).unwrap();
        let head = ClassifierHead::from_tensors(head.weight.value, b.clone(), false).unwrap();
        let z = Tensor::randn(&[4, 3], 1.0, &mut rng).unwrap();
        let mut expect = matmul(&z, &head.weight.value).unwrap();
        for i in 0..4 {
            for (e, bb) in expect.row_mut(i).iter_mut().zip(b.data()) {
                *e += bb;
            }
        }
        assert!(head.forward_logits(&z).unwrap().max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn renormalize_three_four_five() {
        let w = Tensor::from_rows(&[vec![3.0f64], vec![4.0]]).unwrap();
        let mut head = ClassifierHead::from_tensors(w, Tensor::from_vec(&[1], vec![1.0]).unwrap(), false).unwrap();
        head.renormalize().unwrap();
        assert!((head.weight.value.data()[0] - 0.6).abs() < 1e-15);
        assert!((head.weight.value.data()[1] - 0.8).abs() < 1e-15);
        assert_eq!(head.bias.value.data(), &[0.0]);
        let before = head.clone();
        head.renormalize().unwrap();
        assert!(head.weight.value.max_abs_diff(&before.weight.value) < 1e-12);
    }

    #[test]
    fn renormalize_zero_column_is_degenerate() {
        let w = Tensor::from_rows(&[vec![1.0f64, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            ClassifierHead::from_tensors(w, Tensor::zeros(&[2]).unwrap(), true),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let head = ClassifierHead::<f64>::new(2, 4, false, &mut rng).unwrap();
        let head = ClassifierHead::from_tensors(head.weight.value, Tensor::randn(&[4], 1.0, &mut rng).unwrap(), false).unwrap();
        let z = Tensor::randn(&[3, 2], 1.0, &mut rng).unwrap();
        let up = Tensor::randn(&[3, 4], 1.0, &mut rng).unwrap();
        let obj = |h: &ClassifierHead<f64>, z: &Tensor<f64>| -> f64 {
            h.forward_logits(z).unwrap().data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
        };
        let mut h = head.clone();
        let gz = h.backward_logits(&z, &up).unwrap();
        assert!(relative_error(&gz, &finite_diff_grad(|z| obj(&head, z), &z, 1e-5)) < 1e-8);
        let nw = finite_diff_grad(
            |w| obj(&ClassifierHead::from_tensors(w.clone(), head.bias.value.clone(), false).unwrap(), &z),
            &head.weight.value,
            1e-5,
        );
        assert!(relative_error(&h.weight.grad, &nw) < 1e-8);
        let nb = finite_diff_grad(
            |b| obj(&ClassifierHead::from_tensors(head.weight.value.clone(), b.clone(), false).unwrap(), &z),
            &head.bias.value,
            1e-5,
        );
        assert!(relative_error(&h.bias.grad, &nb) < 1e-8);
    }
}
