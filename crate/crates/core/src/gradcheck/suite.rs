//! Analytic-vs-numeric gradient checks for every layer and loss, at random points.

use std::fmt;
use std::str::FromStr;

use crate::losses::{
    center_loss, contrastive_batch_loss, cosface_loss, cosine_backward, cosine_logits, make_target_layout,
    mine_triplets, regression_loss, sample_pairs, softmax_loss, triplet_batch_loss, ClassCenters, LayoutKind,
    MiningStrategy,
};
use crate::network::{ClassifierHead, FeatureExtractor, NetworkConfig};
use crate::ops::{activation, activation_backward, conv2d, conv2d_backward, maxpool2_backward, maxpool2_floor, Activation};
use crate::{Error, Result, Rng, Tensor};

use super::{finite_diff_grad, relative_error, DEFAULT_STEP};

pub const SUITE_POINTS: usize = 20;
pub const SUITE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Layers,
    Losses,
    All,
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "layers" => Ok(Scope::Layers),
            "losses" => Ok(Scope::Losses),
            "all" => Ok(Scope::All),
            _ => Err(Error::Config(format!("unknown gradcheck scope `{s}` (expected layers, losses or all)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub points: usize,
    /// Largest relative error seen over all points.
    pub worst: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst < SUITE_TOLERANCE
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "ok" } else { "FAIL" };
        write!(f, "{:<28} points={:<3} worst_rel_err={:.3e} {verdict}", self.name, self.points, self.worst)
    }
}

type Check = fn(&mut Rng) -> f64;

fn layer_checks() -> Vec<(&'static str, Check)> {
    vec![
        ("conv2d.input", check_conv_input),
        ("conv2d.kernels", check_conv_kernels),
        ("maxpool2", check_pool),
        ("activation.linear", |r| check_activation(r, Activation::Linear)),
        ("activation.relu", |r| check_activation(r, Activation::Relu)),
        ("activation.sigmoid", |r| check_activation(r, Activation::Sigmoid)),
        ("activation.selu", |r| check_activation(r, Activation::Selu)),
        ("dense.input", check_dense_input),
        ("dense.weight", check_dense_weight),
        ("network.params", check_network_params),
        ("network.input", check_network_input),
    ]
}

fn loss_checks() -> Vec<(&'static str, Check)> {
    vec![
        ("softmax", check_softmax),
        ("softmax_normalized", check_softmax_normalized),
        ("cosface.features", check_cosface_z),
        ("cosface.weights", check_cosface_w),
        ("center", check_center),
        ("contrastive", check_contrastive),
        ("triplet", check_triplet),
        ("regression", check_regression),
    ]
}

/// Runs every check in `scope` at [`SUITE_POINTS`] random points each.
pub fn run_suite(scope: Scope, seed: u64) -> Vec<CheckResult> {
    let mut checks = Vec::new();
    if scope != Scope::Losses {
        checks.extend(layer_checks());
    }
    if scope != Scope::Layers {
        checks.extend(loss_checks());
    }
    checks
        .into_iter()
        .enumerate()
        .map(|(k, (name, check))| {
            let mut rng = Rng::derive(seed, k as u64);
            let worst = (0..SUITE_POINTS).map(|_| check(&mut rng)).fold(0.0, f64::max);
            CheckResult { name: name.to_string(), points: SUITE_POINTS, worst }
        })
        .collect()
}

fn randn(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, rng).expect("positive extents")
}

fn labels(n: usize, m: usize, rng: &mut Rng) -> Vec<usize> {
    (0..n).map(|_| rng.below(m)).collect()
}

/// `Σ r ⊙ y`, a scalar probe of a tensor-valued function.
fn probe(r: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    r.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

fn check_conv_input(rng: &mut Rng) -> f64 {
    let x = randn(&[2, 6, 5], rng);
    let k = randn(&[3, 2, 3, 3], rng);
    let r = randn(&[3, 4, 3], rng);
    let (gx, _) = conv2d_backward(&x, &k, &r).unwrap();
    let num = finite_diff_grad(|x| probe(&r, &conv2d(x, &k).unwrap()), &x, DEFAULT_STEP);
    relative_error(&gx, &num)
}

fn check_conv_kernels(rng: &mut Rng) -> f64 {
    let x = randn(&[2, 5, 6], rng);
    let k = randn(&[2, 2, 3, 3], rng);
    let r = randn(&[2, 3, 4], rng);
    let (_, gk) = conv2d_backward(&x, &k, &r).unwrap();
    let num = finite_diff_grad(|k| probe(&r, &conv2d(&x, k).unwrap()), &k, DEFAULT_STEP);
    relative_error(&gk, &num)
}

fn check_pool(rng: &mut Rng) -> f64 {
    let x = randn(&[2, 5, 6], rng);
    let (y, mask) = maxpool2_floor(&x).unwrap();
    let r = randn(y.shape(), rng);
    let g = maxpool2_backward(&r, &mask).unwrap();
    let num = finite_diff_grad(|x| probe(&r, &maxpool2_floor(x).unwrap().0), &x, DEFAULT_STEP);
    relative_error(&g, &num)
}

fn check_activation(rng: &mut Rng, kind: Activation) -> f64 {
    let x = randn(&[4, 5], rng);
    let r = randn(&[4, 5], rng);
    let g = activation_backward(&x, &r, kind).unwrap();
    let num = finite_diff_grad(|x| probe(&r, &activation(x, kind)), &x, DEFAULT_STEP);
    relative_error(&g, &num)
}

fn head(d: usize, m: usize, normalized: bool, rng: &mut Rng) -> ClassifierHead<f64> {
    let mut h = ClassifierHead::new(d, m, normalized, rng).unwrap();
    if !normalized {
        h.bias.value = randn(&[m], rng);
    }
    h
}

fn check_dense_input(rng: &mut Rng) -> f64 {
    let h = head(3, 4, false, rng);
    let z = randn(&[5, 3], rng);
    let r = randn(&[5, 4], rng);
    let mut hb = h.clone();
    let g = hb.backward_logits(&z, &r).unwrap();
    let num = finite_diff_grad(|z| probe(&r, &h.forward_logits(z).unwrap()), &z, DEFAULT_STEP);
    relative_error(&g, &num)
}

fn check_dense_weight(rng: &mut Rng) -> f64 {
    let h = head(3, 4, false, rng);
    let z = randn(&[5, 3], rng);
    let r = randn(&[5, 4], rng);
    let mut hb = h.clone();
    hb.backward_logits(&z, &r).unwrap();
    let mut probe_head = h.clone();
    let num = finite_diff_grad(
        |w| {
            probe_head.weight.value = w.clone();
            probe(&r, &probe_head.forward_logits(&z).unwrap())
        },
        &h.weight.value,
        DEFAULT_STEP,
    );
    let gw = relative_error(&hb.weight.grad, &num);
    let mut probe_head = h.clone();
    let num_b = finite_diff_grad(
        |b| {
            probe_head.bias.value = b.clone();
            probe(&r, &probe_head.forward_logits(&z).unwrap())
        },
        &h.bias.value,
        DEFAULT_STEP,
    );
    gw.max(relative_error(&hb.bias.grad, &num_b))
}

fn small_net(rng: &mut Rng) -> FeatureExtractor<f64> {
    let penult = [Activation::Linear, Activation::Relu, Activation::Sigmoid, Activation::Selu][rng.below(4)];
    let hidden = [Activation::Relu, Activation::Selu][rng.below(2)];
    let cfg = NetworkConfig {
        input_shape: [1, 9, 9],
        conv_channels: vec![2, 3],
        fc_width: 4,
        embed_dim: 2,
        penult_activation: penult,
        hidden_activation: hidden,
    };
    let mut fe = FeatureExtractor::new(cfg, rng).unwrap();
    for p in fe.params_mut() {
        if p.name.ends_with("bias") {
            p.value = Tensor::randn(p.value.shape(), 0.1, rng).unwrap();
        }
    }
    fe
}

fn check_network_params(rng: &mut Rng) -> f64 {
    let mut fe = small_net(rng);
    let x = Tensor::rand_uniform(&[2, 1, 9, 9], 0.0, 1.0, rng).unwrap();
    let r = randn(&[2, 2], rng);
    fe.forward_features(&x).unwrap();
    fe.backward(&r).unwrap();
    let mut worst = 0.0f64;
    for i in 0..fe.params().len() {
        let mut probe_net = fe.clone();
        let num = finite_diff_grad(
            |v| {
                probe_net.params_mut()[i].value = v.clone();
                probe(&r, &probe_net.embed(&x).unwrap())
            },
            &fe.params()[i].value,
            DEFAULT_STEP,
        );
        worst = worst.max(relative_error(&fe.params()[i].grad, &num));
    }
    worst
}

fn check_network_input(rng: &mut Rng) -> f64 {
    let mut fe = small_net(rng);
    let x = Tensor::rand_uniform(&[2, 1, 9, 9], 0.0, 1.0, rng).unwrap();
    let r = randn(&[2, 2], rng);
    fe.forward_features(&x).unwrap();
    let g = fe.backward(&r).unwrap();
    let num = finite_diff_grad(|x| probe(&r, &fe.embed(x).unwrap()), &x, DEFAULT_STEP);
    relative_error(&g, &num)
}

fn check_softmax(rng: &mut Rng) -> f64 {
    let logits = randn(&[6, 5], rng);
    let y = labels(6, 5, rng);
    let g = softmax_loss(&logits, &y).unwrap().grad;
    let num = finite_diff_grad(|l| softmax_loss(l, &y).unwrap().value, &logits, DEFAULT_STEP);
    relative_error(&g, &num)
}

/// Normalized-softmax loss through a unit-column head: gradients w.r.t. `z` and `W`.
fn check_softmax_normalized(rng: &mut Rng) -> f64 {
    let h = head(3, 5, true, rng);
    let z = randn(&[6, 3], rng);
    let y = labels(6, 5, rng);
    let mut hb = h.clone();
    let l = softmax_loss(&hb.forward_logits(&z).unwrap(), &y).unwrap();
    let gz = hb.backward_logits(&z, &l.grad).unwrap();
    let num_z = finite_diff_grad(|z| softmax_loss(&h.forward_logits(z).unwrap(), &y).unwrap().value, &z, DEFAULT_STEP);
    let mut probe_head = h.clone();
    let num_w = finite_diff_grad(
        |w| {
            probe_head.weight.value = w.clone();
            softmax_loss(&probe_head.forward_logits(&z).unwrap(), &y).unwrap().value
        },
        &h.weight.value,
        DEFAULT_STEP,
    );
    relative_error(&gz, &num_z).max(relative_error(&hb.weight.grad, &num_w))
}

fn cosface_value(h: &ClassifierHead<f64>, z: &Tensor<f64>, y: &[usize], m: f64, s: f64) -> f64 {
    let c = cosine_logits(h, z).unwrap();
    cosface_loss(&c.cosines, y, m, s).unwrap().value
}

fn cosface_setup(rng: &mut Rng) -> (ClassifierHead<f64>, Tensor<f64>, Vec<usize>, f64, f64) {
    let h = head(3, 4, true, rng);
    let z = randn(&[5, 3], rng);
    let y = labels(5, 4, rng);
    let m = rng.uniform() * 0.5;
    let s = 1.0 + rng.uniform() * 9.0;
    (h, z, y, m, s)
}

fn check_cosface_z(rng: &mut Rng) -> f64 {
    let (h, z, y, m, s) = cosface_setup(rng);
    let mut hb = h.clone();
    let c = cosine_logits(&hb, &z).unwrap();
    let l = cosface_loss(&c.cosines, &y, m, s).unwrap();
    let gz = cosine_backward(&c, &mut hb, &l.grad).unwrap();
    let num = finite_diff_grad(|z| cosface_value(&h, z, &y, m, s), &z, DEFAULT_STEP);
    relative_error(&gz, &num)
}

fn check_cosface_w(rng: &mut Rng) -> f64 {
    let (h, z, y, m, s) = cosface_setup(rng);
    let mut hb = h.clone();
    let c = cosine_logits(&hb, &z).unwrap();
    let l = cosface_loss(&c.cosines, &y, m, s).unwrap();
    cosine_backward(&c, &mut hb, &l.grad).unwrap();
    let mut probe_head = h.clone();
    let num = finite_diff_grad(
        |w| {
            probe_head.weight.value = w.clone();
            cosface_value(&probe_head, &z, &y, m, s)
        },
        &h.weight.value,
        DEFAULT_STEP,
    );
    relative_error(&hb.weight.grad, &num)
}

fn check_center(rng: &mut Rng) -> f64 {
    let centers = ClassCenters::from_tensor(randn(&[4, 3], rng), 0.5).unwrap();
    let z = randn(&[6, 3], rng);
    let y = labels(6, 4, rng);
    let lambda = 0.1 + rng.uniform();
    let g = center_loss(&z, &y, &centers, lambda).unwrap().grad;
    let num = finite_diff_grad(|z| center_loss(z, &y, &centers, lambda).unwrap().value, &z, DEFAULT_STEP);
    relative_error(&g, &num)
}

fn check_contrastive(rng: &mut Rng) -> f64 {
    let z = randn(&[8, 2], rng);
    let y = labels(8, 3, rng);
    let pairs = sample_pairs(&y, rng, 12).unwrap().pairs;
    let m = 0.5 + 2.0 * rng.uniform();
    let g = contrastive_batch_loss(&z, &pairs, m).unwrap().grad;
    let num = finite_diff_grad(|z| contrastive_batch_loss(z, &pairs, m).unwrap().value, &z, DEFAULT_STEP);
    relative_error(&g, &num)
}

fn check_triplet(rng: &mut Rng) -> f64 {
    let z = randn(&[8, 2], rng);
    let y: Vec<usize> = (0..8).map(|i| i % 3).collect();
    let triplets = mine_triplets(&z, &y, MiningStrategy::Random { count: Some(15) }, rng).unwrap();
    let m = 0.5 + 2.0 * rng.uniform();
    let g = triplet_batch_loss(&z, &triplets, m).unwrap().grad;
    let num = finite_diff_grad(|z| triplet_batch_loss(z, &triplets, m).unwrap().value, &z, DEFAULT_STEP);
    relative_error(&g, &num)
}

fn check_regression(rng: &mut Rng) -> f64 {
    let d = 2 + rng.below(2);
    let kind = if rng.coin() { LayoutKind::Circle } else { LayoutKind::Raster };
    let layout = make_target_layout(kind, 10, d, 1.5).unwrap();
    let z = randn(&[6, d], rng);
    let y = labels(6, 10, rng);
    let g = regression_loss(&z, &y, &layout).unwrap().grad;
    let num = finite_diff_grad(|z| regression_loss(z, &y, &layout).unwrap().value, &z, DEFAULT_STEP);
    relative_error(&g, &num)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scope_selects_checks() {
        assert_eq!(layer_checks().len() + loss_checks().len(), 19);
        assert!("nope".parse::<Scope>().is_err());
        assert_eq!("losses".parse::<Scope>().unwrap(), Scope::Losses);
    }
}
