//! Residual super-resolver.
//!
//! The `(M+1)`-channel input (abundances plus noise-level map) is bicubic
//! upsampled to the target grid; a head convolution, `D` residual blocks
//! (`x + conv(relu(conv(x)))`) and a tail convolution predict a correction
//! that is added to the bicubic upsample of the abundance channels. With a
//! zero tail the network is exactly bicubic interpolation.

use rand::Rng;

use super::conv::{Conv2d, K};
use super::layers::{relu_backward, relu_forward};
use super::tensor::Tensor4;
use crate::degradation::Separable;
use crate::error::{Error, Result};

pub const DEFAULT_FEATURES: usize = 32;
pub const DEFAULT_BLOCKS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub materials: usize,
    pub features: usize,
    pub head: Conv2d,
    pub blocks: Vec<ResBlock>,
    pub tail: Conv2d,
}

/// Name and shape of one parameter tensor, in serialization order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl NetworkParams {
    /// He-normal head and block kernels; zero tail and biases.
    pub fn init<R: Rng + ?Sized>(materials: usize, features: usize, blocks: usize, rng: &mut R) -> Self {
        let head = Conv2d::he_normal(features, materials + 1, rng);
        let blocks = (0..blocks)
            .map(|_| ResBlock {
                conv1: Conv2d::he_normal(features, features, rng),
                conv2: Conv2d::he_normal(features, features, rng),
            })
            .collect();
        NetworkParams {
            materials,
            features,
            head,
            blocks,
            tail: Conv2d::zeros(materials, features),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |c: &Conv2d| Conv2d::zeros(c.out_channels, c.in_channels);
        NetworkParams {
            materials: self.materials,
            features: self.features,
            head: z(&self.head),
            blocks: self
                .blocks
                .iter()
                .map(|b| ResBlock {
                    conv1: z(&b.conv1),
                    conv2: z(&b.conv2),
                })
                .collect(),
            tail: z(&self.tail),
        }
    }

    pub fn input_channels(&self) -> usize {
        self.materials + 1
    }

    fn convs(&self) -> Vec<(String, &Conv2d)> {
        let mut out = vec![("head".to_string(), &self.head)];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.conv1"), &b.conv1));
            out.push((format!("block{i}.conv2"), &b.conv2));
        }
        out.push(("tail".to_string(), &self.tail));
        out
    }

    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        self.convs()
            .into_iter()
            .flat_map(|(name, c)| {
                [
                    TensorSpec {
                        name: format!("{name}.weight"),
                        shape: vec![c.out_channels, c.in_channels, K, K],
                    },
                    TensorSpec {
                        name: format!("{name}.bias"),
                        shape: vec![c.out_channels],
                    },
                ]
            })
            .collect()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.convs()
            .into_iter()
            .flat_map(|(_, c)| [c.weight.as_slice(), c.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.head.weight, &mut self.head.bias];
        for b in self.blocks.iter_mut() {
            out.push(&mut b.conv1.weight);
            out.push(&mut b.conv1.bias);
            out.push(&mut b.conv2.weight);
            out.push(&mut b.conv2.bias);
        }
        out.push(&mut self.tail.weight);
        out.push(&mut self.tail.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Activations kept from a forward pass for backpropagation.
pub struct ForwardCache {
    in_h: usize,
    in_w: usize,
    upsampler: Separable,
    up: Tensor4,
    block_inputs: Vec<Tensor4>,
    pre_relu: Vec<Tensor4>,
    post_relu: Vec<Tensor4>,
    features: Tensor4,
}

fn upsample_tensor(op: &Separable, x: &Tensor4) -> Tensor4 {
    let (oh, ow) = op.output_dims();
    let mut out = Tensor4::zeros(x.n, x.c, oh, ow);
    for n in 0..x.n {
        for c in 0..x.c {
            out.plane_mut(n, c).copy_from_slice(&op.apply_plane(x.plane(n, c)));
        }
    }
    out
}

pub fn forward_with_cache(params: &NetworkParams, input: &Tensor4, scale: u32) -> Result<(Tensor4, ForwardCache)> {
    if input.c != params.input_channels() {
        return Err(Error::InvalidInput(format!(
            "network expects {} input channels, got {}",
            params.input_channels(),
            input.c
        )));
    }
    if scale == 0 {
        return Err(Error::InvalidInput("scale must be positive".into()));
    }
    let s = scale as usize;
    let upsampler = Separable::bicubic(input.h, input.w, input.h * s, input.w * s);
    let up = upsample_tensor(&upsampler, input);

    let mut x = params.head.forward(&up)?;
    let mut block_inputs = Vec::with_capacity(params.blocks.len());
    let mut pre_relu = Vec::with_capacity(params.blocks.len());
    let mut post_relu = Vec::with_capacity(params.blocks.len());
    for b in &params.blocks {
        let t1 = b.conv1.forward(&x)?;
        let r = relu_forward(&t1);
        let t2 = b.conv2.forward(&r)?;
        let mut next = x.clone();
        next.add_assign(&t2);
        block_inputs.push(std::mem::replace(&mut x, next));
        pre_relu.push(t1);
        post_relu.push(r);
    }
    let mut out = params.tail.forward(&x)?;
    out.add_assign(&up.leading_channels(params.materials));
    Ok((
        out,
        ForwardCache {
            in_h: input.h,
            in_w: input.w,
            upsampler,
            up,
            block_inputs,
            pre_relu,
            post_relu,
            features: x,
        },
    ))
}

/// `N × M × (h·s) × (w·s)` super-resolved abundances.
pub fn forward(params: &NetworkParams, input: &Tensor4, scale: u32) -> Result<Tensor4> {
    forward_with_cache(params, input, scale).map(|(out, _)| out)
}

/// Parameter gradients, and the input gradient when requested.
pub fn backward(
    params: &NetworkParams,
    cache: &ForwardCache,
    grad_out: &Tensor4,
    need_input: bool,
) -> Result<(NetworkParams, Option<Tensor4>)> {
    let mut grads = params.zeros_like();
    let tail = params.tail.backward(&cache.features, grad_out, true)?;
    grads.tail.weight = tail.weight;
    grads.tail.bias = tail.bias;
    let mut g_x = tail.input.expect("requested");

    for (i, b) in params.blocks.iter().enumerate().rev() {
        let c2 = b.conv2.backward(&cache.post_relu[i], &g_x, true)?;
        let g_t1 = relu_backward(&cache.pre_relu[i], &c2.input.expect("requested"));
        let c1 = b.conv1.backward(&cache.block_inputs[i], &g_t1, true)?;
        g_x.add_assign(&c1.input.expect("requested"));
        let gb = &mut grads.blocks[i];
        gb.conv1.weight = c1.weight;
        gb.conv1.bias = c1.bias;
        gb.conv2.weight = c2.weight;
        gb.conv2.bias = c2.bias;
    }

    let head = params.head.backward(&cache.up, &g_x, need_input)?;
    grads.head.weight = head.weight;
    grads.head.bias = head.bias;

    let grad_input = head.input.map(|mut g_up| {
        for n in 0..g_up.n {
            for m in 0..params.materials {
                let skip = grad_out.plane(n, m);
                for (g, s) in g_up.plane_mut(n, m).iter_mut().zip(skip) {
                    *g += s;
                }
            }
        }
        let mut g_in = Tensor4::zeros(g_up.n, g_up.c, cache.in_h, cache.in_w);
        for n in 0..g_up.n {
            for c in 0..g_up.c {
                g_in.plane_mut(n, c)
                    .copy_from_slice(&cache.upsampler.adjoint_plane(g_up.plane(n, c)));
            }
        }
        g_in
    });
    Ok((grads, grad_input))
}
