//! The convolutional feature extractor and the linear classifier head.
//!
//! The extractor maps an input image to a point `z` in the low-dimensional
//! embedded space; the head turns `z` into class scores `zᵀW + b`. Losses that
//! work directly on distances in the embedded space use the extractor alone.

mod checkpoint;
mod head;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CheckpointContents, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use head::ClassifierHead;

use crate::ops::{
    apply_activation, apply_activation_grad, conv_backward_into, conv_forward_into, pool_backward_into,
    pool_forward_into, Activation, ConvGeometry,
};
use crate::scalar::{gemm, Trans};
use crate::{Error, Result, Rng, Scalar, Tensor};

/// Spatial size of every convolution kernel.
pub const KERNEL_SIZE: usize = 3;

/// A trainable tensor with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros_like(&value);
        Param { name: name.into(), value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Input `[channels, height, width]`.
    pub input_shape: [usize; 3],
    pub conv_channels: Vec<usize>,
    pub fc_width: usize,
    pub embed_dim: usize,
    pub penult_activation: Activation,
    pub hidden_activation: Activation,
}

impl NetworkConfig {
    /// The reference layout: Conv(32) → Pool → Conv(64) → Pool → Conv(128) → FC(256) → FC(embed_dim).
    pub fn reference(input_shape: [usize; 3], embed_dim: usize) -> Self {
        NetworkConfig {
            input_shape,
            conv_channels: vec![32, 64, 128],
            fc_width: 256,
            embed_dim,
            penult_activation: Activation::Linear,
            hidden_activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.embed_dim) {
            return Err(Error::Config(format!("embed_dim must be 2 or 3, got {}", self.embed_dim)));
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return Err(Error::Config("conv_channels must be a nonempty list of positive counts".into()));
        }
        if self.fc_width == 0 {
            return Err(Error::Config("fc_width must be positive".into()));
        }
        if !matches!(self.hidden_activation, Activation::Relu | Activation::Selu) {
            return Err(Error::Config(format!(
                "hidden_activation must be relu or selu, got {}",
                self.hidden_activation
            )));
        }
        if self.input_shape.contains(&0) {
            return Err(Error::Config(format!("input_shape {:?} has a zero extent", self.input_shape)));
        }
        self.stages().map(|_| ())
    }

    /// Convolution stages with their geometry; every stage but the last is followed by pooling.
    fn stages(&self) -> Result<Vec<Stage>> {
        let [mut c, mut h, mut w] = self.input_shape;
        let last = self.conv_channels.len() - 1;
        let mut out = Vec::with_capacity(self.conv_channels.len());
        for (i, &o) in self.conv_channels.iter().enumerate() {
            if h < KERNEL_SIZE || w < KERNEL_SIZE {
                return Err(Error::Config(format!(
                    "input {:?} too small: conv layer {i} sees {h}x{w}, needs at least {KERNEL_SIZE}x{KERNEL_SIZE}",
                    self.input_shape
                )));
            }
            let geom = ConvGeometry { channels: c, height: h, width: w, out_channels: o, kh: KERNEL_SIZE, kw: KERNEL_SIZE };
            let pool = i != last;
            let (oh, ow) = (geom.out_h(), geom.out_w());
            if pool && (oh < 2 || ow < 2) {
                return Err(Error::Config(format!(
                    "input {:?} too small: pooling after conv layer {i} sees {oh}x{ow}",
                    self.input_shape
                )));
            }
            out.push(Stage { geom, pool });
            c = o;
            (h, w) = if pool { (oh / 2, ow / 2) } else { (oh, ow) };
        }
        Ok(out)
    }

    /// Length of the flattened feature map entering the first fully connected layer.
    pub fn flat_features(&self) -> Result<usize> {
        let stages = self.stages()?;
        Ok(stages.last().map_or(0, Stage::output_len))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Stage {
    geom: ConvGeometry,
    pool: bool,
}

impl Stage {
    fn conv_len(&self) -> usize {
        self.geom.output_len()
    }

    fn pooled_hw(&self) -> (usize, usize) {
        (self.geom.out_h() / 2, self.geom.out_w() / 2)
    }

    fn output_len(&self) -> usize {
        if self.pool {
            let (h, w) = self.pooled_hw();
            self.geom.out_channels * h * w
        } else {
            self.conv_len()
        }
    }
}

#[derive(Debug, Clone)]
struct Cache<T> {
    batch: usize,
    /// Input to each conv stage, batch-major.
    conv_in: Vec<Vec<T>>,
    /// Conv output plus bias, before the activation.
    conv_pre: Vec<Vec<T>>,
    pool_masks: Vec<Vec<u8>>,
    dense_in: Vec<Vec<T>>,
    dense_pre: Vec<Vec<T>>,
}

/// Everything from the input image up to the embedding `z`.
#[derive(Debug, Clone)]
pub struct FeatureExtractor<T> {
    config: NetworkConfig,
    stages: Vec<Stage>,
    /// Per stage: kernels `[O, C, 3, 3]` then bias `[O]`; then per dense layer weight `[in, out]` then bias `[out]`.
    params: Vec<Param<T>>,
    cache: Option<Cache<T>>,
}

impl<T: Scalar> FeatureExtractor<T> {
    /// He fan-in initialization, zero biases.
    pub fn new(config: NetworkConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let stages = config.stages()?;
        let mut params = Vec::new();
        for (i, s) in stages.iter().enumerate() {
            let g = &s.geom;
            let std = (2.0 / g.patch() as f64).sqrt();
            params.push(Param::new(
                format!("conv{i}.kernels"),
                Tensor::randn(&[g.out_channels, g.channels, g.kh, g.kw], std, rng)?,
            ));
            params.push(Param::new(format!("conv{i}.bias"), Tensor::zeros(&[g.out_channels])?));
        }
        let flat = stages.last().map_or(0, Stage::output_len);
        for (i, (fan_in, fan_out)) in [(flat, config.fc_width), (config.fc_width, config.embed_dim)]
            .into_iter()
            .enumerate()
        {
            let std = (2.0 / fan_in as f64).sqrt();
            params.push(Param::new(format!("fc{i}.weight"), Tensor::randn(&[fan_in, fan_out], std, rng)?));
            params.push(Param::new(format!("fc{i}.bias"), Tensor::zeros(&[fan_out])?));
        }
        Ok(FeatureExtractor { config, stages, params, cache: None })
    }

    /// Builds an extractor from explicit parameter tensors, in [`params`](Self::params) order.
    pub fn from_tensors(config: NetworkConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let mut rng = Rng::new(0);
        let mut fe = Self::new(config, &mut rng)?;
        if tensors.len() != fe.params.len() {
            return Err(Error::Dimension(format!(
                "extractor needs {} parameter tensors, got {}",
                fe.params.len(),
                tensors.len()
            )));
        }
        for (p, t) in fe.params.iter_mut().zip(tensors) {
            if p.value.shape() != t.shape() {
                return Err(Error::Dimension(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t;
        }
        Ok(fe)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Param::zero_grad);
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize> {
        let [c, h, w] = self.config.input_shape;
        match batch.shape()[..] {
            [n, bc, bh, bw] if [bc, bh, bw] == [c, h, w] => Ok(n),
            _ => Err(Error::Dimension(format!(
                "batch shape {:?} does not match network input [N, {c}, {h}, {w}]",
                batch.shape()
            ))),
        }
    }

    /// Embeddings `N×embed_dim` without recording anything for backward.
    pub fn embed(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_batch(batch)?;
        let (z, _) = self.run(batch.data(), n, false);
        Tensor::from_vec(&[n, self.config.embed_dim], z)
    }

    /// Embeddings `N×embed_dim`, caching intermediates for [`backward`](Self::backward).
    pub fn forward_features(&mut self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_batch(batch)?;
        let (z, cache) = self.run(batch.data(), n, true);
        self.cache = cache;
        Tensor::from_vec(&[n, self.config.embed_dim], z)
    }

    fn run(&self, input: &[T], n: usize, record: bool) -> (Vec<T>, Option<Cache<T>>) {
        let hidden = self.config.hidden_activation;
        let mut cache = Cache {
            batch: n,
            conv_in: Vec::new(),
            conv_pre: Vec::new(),
            pool_masks: Vec::new(),
            dense_in: Vec::new(),
            dense_pre: Vec::new(),
        };
        let mut x = input.to_vec();
        let mut cols = Vec::new();
        for (si, s) in self.stages.iter().enumerate() {
            let g = &s.geom;
            let (in_len, out_len) = (g.input_len(), g.output_len());
            let kernels = self.params[2 * si].value.data();
            let bias = self.params[2 * si + 1].value.data();
            let mut pre = vec![T::zero(); n * out_len];
            for b in 0..n {
                let out = &mut pre[b * out_len..(b + 1) * out_len];
                conv_forward_into(g, &x[b * in_len..(b + 1) * in_len], kernels, out, &mut cols);
                for (o, &bo) in bias.iter().enumerate() {
                    out[o * g.positions()..(o + 1) * g.positions()].iter_mut().for_each(|v| *v += bo);
                }
            }
            let mut act = pre.clone();
            apply_activation(hidden, &mut act);
            let next = if s.pool {
                let (ph, pw) = s.pooled_hw();
                let plen = g.out_channels * ph * pw;
                let mut pooled = vec![T::zero(); n * plen];
                let mut mask = vec![0u8; n * plen];
                for b in 0..n {
                    pool_forward_into(
                        &act[b * out_len..(b + 1) * out_len],
                        g.out_channels,
                        g.out_h(),
                        g.out_w(),
                        &mut pooled[b * plen..(b + 1) * plen],
                        &mut mask[b * plen..(b + 1) * plen],
                    );
                }
                if record {
                    cache.pool_masks.push(mask);
                }
                pooled
            } else {
                if record {
                    cache.pool_masks.push(Vec::new());
                }
                act
            };
            if record {
                cache.conv_in.push(std::mem::replace(&mut x, next));
                cache.conv_pre.push(pre);
            } else {
                x = next;
            }
        }

        let base = 2 * self.stages.len();
        let dims = self.dense_dims();
        for (li, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let w = self.params[base + 2 * li].value.data();
            let bias = self.params[base + 2 * li + 1].value.data();
            let mut pre = vec![T::zero(); n * fan_out];
            for row in pre.chunks_mut(fan_out) {
                row.copy_from_slice(bias);
            }
            gemm(n, fan_in, fan_out, T::one(), &x, Trans::No, w, Trans::No, T::one(), &mut pre);
            let mut act = pre.clone();
            let kind = if li + 1 == dims.len() { self.config.penult_activation } else { hidden };
            apply_activation(kind, &mut act);
            if record {
                cache.dense_in.push(std::mem::replace(&mut x, act));
                cache.dense_pre.push(pre);
            } else {
                x = act;
            }
        }
        (x, record.then_some(cache))
    }

    fn dense_dims(&self) -> [(usize, usize); 2] {
        let flat = self.stages.last().map_or(0, Stage::output_len);
        [(flat, self.config.fc_width), (self.config.fc_width, self.config.embed_dim)]
    }

    /// Accumulates parameter gradients for the cached batch given `∂L/∂z`;
    /// returns `∂L/∂input`. Consumes the cache.
    pub fn backward(&mut self, grad_z: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a preceding forward_features".into()))?;
        let n = cache.batch;
        if grad_z.shape() != [n, self.config.embed_dim] {
            return Err(Error::Dimension(format!(
                "upstream gradient {:?} does not match cached batch [{n}, {}]",
                grad_z.shape(),
                self.config.embed_dim
            )));
        }
        let hidden = self.config.hidden_activation;
        let base = 2 * self.stages.len();
        let dims = self.dense_dims();
        let mut g = grad_z.data().to_vec();
        for li in (0..dims.len()).rev() {
            let (fan_in, fan_out) = dims[li];
            let kind = if li + 1 == dims.len() { self.config.penult_activation } else { hidden };
            apply_activation_grad(kind, &cache.dense_pre[li], &mut g);
            let (wp, bp) = pair_mut(&mut self.params, base + 2 * li);
            for row in g.chunks(fan_out) {
                for (gb, &r) in bp.grad.data_mut().iter_mut().zip(row) {
                    *gb += r;
                }
            }
            let xin = &cache.dense_in[li];
            gemm(fan_in, n, fan_out, T::one(), xin, Trans::Yes, &g, Trans::No, T::one(), wp.grad.data_mut());
            let mut gx = vec![T::zero(); n * fan_in];
            gemm(n, fan_out, fan_in, T::one(), &g, Trans::No, wp.value.data(), Trans::Yes, T::zero(), &mut gx);
            g = gx;
        }

        let mut cols = Vec::new();
        for si in (0..self.stages.len()).rev() {
            let s = self.stages[si];
            let geom = s.geom;
            let out_len = geom.output_len();
            let mut gact = if s.pool {
                let (ph, pw) = s.pooled_hw();
                let plen = geom.out_channels * ph * pw;
                let mut ga = vec![T::zero(); n * out_len];
                let mask = &cache.pool_masks[si];
                for b in 0..n {
                    pool_backward_into(
                        &g[b * plen..(b + 1) * plen],
                        &mask[b * plen..(b + 1) * plen],
                        geom.out_channels,
                        geom.out_h(),
                        geom.out_w(),
                        &mut ga[b * out_len..(b + 1) * out_len],
                    );
                }
                ga
            } else {
                g
            };
            apply_activation_grad(hidden, &cache.conv_pre[si], &mut gact);
            let in_len = geom.input_len();
            let mut gx = vec![T::zero(); n * in_len];
            let (kp, bp) = pair_mut(&mut self.params, 2 * si);
            let positions = geom.positions();
            for b in 0..n {
                let go = &gact[b * out_len..(b + 1) * out_len];
                for (o, gb) in bp.grad.data_mut().iter_mut().enumerate() {
                    *gb += go[o * positions..(o + 1) * positions].iter().copied().sum::<T>();
                }
                conv_backward_into(
                    &geom,
                    &cache.conv_in[si][b * in_len..(b + 1) * in_len],
                    kp.value.data(),
                    go,
                    kp.grad.data_mut(),
                    Some(&mut gx[b * in_len..(b + 1) * in_len]),
                    &mut cols,
                );
            }
            g = gx;
        }
        let [c, h, w] = self.config.input_shape;
        Tensor::from_vec(&[n, c, h, w], g)
    }
}

fn pair_mut<T>(params: &mut [Param<T>], i: usize) -> (&mut Param<T>, &mut Param<T>) {
    let (a, b) = params[i..].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

/// Builds the extractor and, when requested, an `embed_dim × classes` head from one seed.
pub fn init_network<T: Scalar>(
    config: &NetworkConfig,
    classes: Option<(usize, bool)>,
    rng: &mut Rng,
) -> Result<(FeatureExtractor<T>, Option<ClassifierHead<T>>)> {
    let fe = FeatureExtractor::new(config.clone(), rng)?;
    let head = match classes {
        Some((m, normalized)) => Some(ClassifierHead::new(config.embed_dim, m, normalized, rng)?),
        None => None,
    };
    Ok((fe, head))
}
