use crate::tensor::softmax_in_place;
use crate::{Result, Scalar, Tensor};

use super::{check_labels, mean_scale, LossValue};

/// Mean cross-entropy of row-wise softmax; gradient `(softmax − onehot) / N` w.r.t. the logits.
pub fn softmax_loss<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<LossValue<T>> {
    let (n, m) = logits.dims2()?;
    check_labels(labels, n, m)?;
    let scale = mean_scale::<T>(n);
    let mut grad = logits.clone();
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        total += lse - row[y];
        let g = grad.row_mut(i);
        softmax_in_place(g);
        g[y] -= T::one();
        g.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(LossValue { value: total * scale, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_grad, relative_error};
    use crate::{Error, Rng};

    #[test]
    fn uniform_logits_give_ln_m() {
        let logits = Tensor::<f64>::filled(&[3, 10], 0.7).unwrap();
        let l = softmax_loss(&logits, &[0, 4, 9]).unwrap();
        assert!((l.value - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn closed_form_two_class() {
        let logits = Tensor::from_rows(&[vec![3f64.ln(), 0.0]]).unwrap();
        let l = softmax_loss(&logits, &[0]).unwrap();
        assert!((l.value - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((l.value - 0.287682).abs() < 1e-6);
    }

    #[test]
    fn label_out_of_range() {
        let logits = Tensor::<f64>::zeros(&[1, 3]).unwrap();
        assert!(matches!(softmax_loss(&logits, &[3]), Err(Error::Input(_))));
    }

    #[test]
    fn gradient_is_softmax_minus_onehot() {
        let mut rng = Rng::new(1);
        let logits = Tensor::<f64>::randn(&[4, 5], 2.0, &mut rng).unwrap();
        let labels = [0, 3, 4, 1];
        let l = softmax_loss(&logits, &labels).unwrap();
        let p = crate::softmax_rows(&logits).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let onehot = if labels[i] == j { 1.0 } else { 0.0 };
                assert!((l.grad.row(i)[j] - (p.row(i)[j] - onehot) / 4.0).abs() < 1e-15);
            }
        }
        let n = finite_diff_grad(|x| softmax_loss(x, &labels).unwrap().value, &logits, 1e-5);
        assert!(relative_error(&l.grad, &n) < 1e-6);
    }
}
