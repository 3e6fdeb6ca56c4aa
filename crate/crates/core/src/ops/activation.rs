use std::fmt;
use std::str::FromStr;

use crate::{Error, Result, Scalar, Tensor};

/// SELU α (Klambauer et al.), full double precision.
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_284_817_042_991_671_7;
/// SELU λ (Klambauer et al.), full double precision.
pub const SELU_SCALE: f64 = 1.050_700_987_355_480_493_419_334_985_294_6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Selu,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Selu => "selu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "selu" => Ok(Activation::Selu),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(crate) fn apply_activation<T: Scalar>(kind: Activation, xs: &mut [T]) {
    match kind {
        Activation::Linear => {}
        Activation::Relu => xs.iter_mut().for_each(|x| *x = x.max(T::zero())),
        Activation::Sigmoid => xs.iter_mut().for_each(|x| *x = sigmoid(*x)),
        Activation::Selu => {
            let (a, l) = (T::of(SELU_ALPHA), T::of(SELU_SCALE));
            xs.iter_mut().for_each(|x| {
                *x = if *x > T::zero() { l * *x } else { l * a * (x.exp() - T::one()) }
            })
        }
    }
}

/// Multiplies `grad` in place by the activation derivative evaluated at `pre`.
pub(crate) fn apply_activation_grad<T: Scalar>(kind: Activation, pre: &[T], grad: &mut [T]) {
    match kind {
        Activation::Linear => {}
        Activation::Relu => grad.iter_mut().zip(pre).for_each(|(g, &x)| {
            if x <= T::zero() {
                *g = T::zero();
            }
        }),
        Activation::Sigmoid => grad.iter_mut().zip(pre).for_each(|(g, &x)| {
            let s = sigmoid(x);
            *g *= s * (T::one() - s);
        }),
        Activation::Selu => {
            let (a, l) = (T::of(SELU_ALPHA), T::of(SELU_SCALE));
            grad.iter_mut().zip(pre).for_each(|(g, &x)| {
                *g *= if x > T::zero() { l } else { l * a * x.exp() };
            })
        }
    }
}

pub fn activation<T: Scalar>(x: &Tensor<T>, kind: Activation) -> Tensor<T> {
    let mut y = x.clone();
    apply_activation(kind, y.data_mut());
    y
}

/// Gradient with respect to the activation input `x`, given the upstream gradient.
pub fn activation_backward<T: Scalar>(
    x: &Tensor<T>,
    grad_out: &Tensor<T>,
    kind: Activation,
) -> Result<Tensor<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::Dimension(format!(
            "activation gradient shape {:?} vs input {:?}",
            grad_out.shape(),
            x.shape()
        )));
    }
    let mut g = grad_out.clone();
    apply_activation_grad(kind, x.data(), g.data_mut());
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_grad, relative_error};
    use crate::Rng;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn pointwise_values() {
        let x = t(&[-1.5, 0.0, 2.0]);
        assert_eq!(activation(&x, Activation::Linear), x);
        assert_eq!(activation(&t(&[-1.0, 2.0]), Activation::Relu).data(), &[0.0, 2.0]);
        assert_eq!(activation(&t(&[0.0]), Activation::Sigmoid).data(), &[0.5]);
        let s = activation(&t(&[1.0, -1.0]), Activation::Selu);
        assert!((s.data()[0] - SELU_SCALE).abs() < 1e-15);
        let expect = SELU_SCALE * SELU_ALPHA * ((-1.0f64).exp() - 1.0);
        assert!((s.data()[1] - expect).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(4);
        for kind in [Activation::Linear, Activation::Relu, Activation::Sigmoid, Activation::Selu] {
            let x = Tensor::<f64>::randn(&[12], 1.0, &mut rng).unwrap();
            let w = Tensor::<f64>::randn(&[12], 1.0, &mut rng).unwrap();
            let f = |x: &Tensor<f64>| {
                activation(x, kind).data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
            };
            let g = activation_backward(&x, &w, kind).unwrap();
            let n = finite_diff_grad(f, &x, 1e-5);
            assert!(relative_error(&g, &n) < 1e-6, "{kind}");
        }
    }

    #[test]
    fn parse_round_trip() {
        for kind in [Activation::Linear, Activation::Relu, Activation::Sigmoid, Activation::Selu] {
            assert_eq!(kind.as_str().parse::<Activation>().unwrap(), kind);
        }
        assert!("tanh".parse::<Activation>().is_err());
    }
}
