//! A small convolutional network engine with exact reverse-mode gradients.
//!
//! Networks are sequential stacks of [`LayerSpec`]s (residual blocks nest a
//! sub-stack). All trainable values live in one flat `Vec<f64>`, so
//! optimizers, checkpoints and gradient checks all work on plain slices.
//! Evaluation is single-sample; batching happens one level up, where
//! samples are fanned out and their gradients summed in a fixed order.

mod adam;
mod ops;
pub mod presets;

pub use adam::{Adam, AdamConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;
use ops::{col2im, gemm, im2col, ConvGeometry, MatRef};

/// One layer of a network description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    LeakyRelu {
        slope: f64,
    },
    Relu,
    /// Mean over the spatial grid, producing `channels × 1 × 1`.
    GlobalAvgPool,
    /// Dense layer over the flattened input.
    Linear {
        inputs: usize,
        outputs: usize,
    },
    /// `relu(body(x) + shortcut(x))`; identity shortcut when `None`.
    Residual {
        body: Vec<LayerSpec>,
        shortcut: Option<Box<LayerSpec>>,
    },
}

/// A named network description together with the input it accepts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub name: String,
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn input_dims(&self) -> (usize, usize, usize) {
        (self.input_channels, self.input_height, self.input_width)
    }

    /// Output dimensions for the declared input, or a shape error.
    pub fn output_dims(&self) -> Result<(usize, usize, usize)> {
        let mut offset = 0;
        let (nodes, dims) = compile(&self.layers, self.input_dims(), &mut offset)?;
        drop(nodes);
        Ok(dims)
    }

    pub fn param_count(&self) -> Result<usize> {
        let mut offset = 0;
        compile(&self.layers, self.input_dims(), &mut offset)?;
        Ok(offset)
    }
}

#[derive(Clone, Debug)]
enum Node {
    Conv {
        geom: ConvGeometry,
        out_channels: usize,
        weight: usize,
        bias: usize,
    },
    ConvTranspose {
        /// Geometry of the adjoint convolution reading the *output* map.
        geom: ConvGeometry,
        in_channels: usize,
        weight: usize,
        bias: usize,
    },
    LeakyRelu(f64),
    Relu,
    GlobalAvgPool,
    Linear {
        inputs: usize,
        outputs: usize,
        weight: usize,
        bias: usize,
    },
    Residual {
        body: Vec<Node>,
        shortcut: Option<Box<Node>>,
    },
}

type Dims = (usize, usize, usize);

fn compile(layers: &[LayerSpec], mut dims: Dims, offset: &mut usize) -> Result<(Vec<Node>, Dims)> {
    let mut nodes = Vec::with_capacity(layers.len());
    for spec in layers {
        let (node, out) = compile_one(spec, dims, offset)?;
        nodes.push(node);
        dims = out;
    }
    Ok((nodes, dims))
}

fn compile_one(spec: &LayerSpec, dims: Dims, offset: &mut usize) -> Result<(Node, Dims)> {
    let (c, h, w) = dims;
    let mismatch = |what: &str| Error::Shape(format!("{what} cannot accept a {c}x{h}x{w} input"));
    let mut take = |n: usize| {
        let at = *offset;
        *offset += n;
        at
    };
    Ok(match *spec {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            if in_channels != c || out_channels == 0 {
                return Err(mismatch("conv2d"));
            }
            let geom = ConvGeometry::new(c, h, w, kernel, stride, padding).ok_or_else(|| mismatch("conv2d"))?;
            let weight = take(out_channels * geom.col_rows());
            let bias = take(out_channels);
            let out = (out_channels, geom.out_height, geom.out_width);
            (
                Node::Conv {
                    geom,
                    out_channels,
                    weight,
                    bias,
                },
                out,
            )
        }
        LayerSpec::ConvTranspose2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            if in_channels != c || out_channels == 0 || kernel == 0 || stride == 0 {
                return Err(mismatch("conv_transpose2d"));
            }
            let full_h = (h - 1) * stride + kernel;
            let full_w = (w - 1) * stride + kernel;
            if full_h <= 2 * padding || full_w <= 2 * padding {
                return Err(mismatch("conv_transpose2d"));
            }
            let (oh, ow) = (full_h - 2 * padding, full_w - 2 * padding);
            let geom = ConvGeometry::new(out_channels, oh, ow, kernel, stride, padding)
                .filter(|g| g.out_height == h && g.out_width == w)
                .ok_or_else(|| mismatch("conv_transpose2d"))?;
            let weight = take(in_channels * geom.col_rows());
            let bias = take(out_channels);
            (
                Node::ConvTranspose {
                    geom,
                    in_channels,
                    weight,
                    bias,
                },
                (out_channels, oh, ow),
            )
        }
        LayerSpec::LeakyRelu { slope } => (Node::LeakyRelu(slope), dims),
        LayerSpec::Relu => (Node::Relu, dims),
        LayerSpec::GlobalAvgPool => (Node::GlobalAvgPool, (c, 1, 1)),
        LayerSpec::Linear { inputs, outputs } => {
            if inputs != c * h * w || outputs == 0 {
                return Err(mismatch("linear"));
            }
            let weight = take(inputs * outputs);
            let bias = take(outputs);
            (
                Node::Linear {
                    inputs,
                    outputs,
                    weight,
                    bias,
                },
                (outputs, 1, 1),
            )
        }
        LayerSpec::Residual {
            ref body,
            ref shortcut,
        } => {
            let (body, body_dims) = compile(body, dims, offset)?;
            let (shortcut, short_dims) = match shortcut {
                Some(s) => {
                    let (n, d) = compile_one(s, dims, offset)?;
                    (Some(Box::new(n)), d)
                }
                None => (None, dims),
            };
            if body_dims != short_dims {
                return Err(Error::Shape(format!(
                    "residual branches disagree: {body_dims:?} vs {short_dims:?}"
                )));
            }
            (Node::Residual { body, shortcut }, body_dims)
        }
    })
}

/// Values a layer keeps from its forward pass for the backward pass.
#[derive(Clone, Debug)]
pub enum Trace {
    Conv { cols: Vec<f64> },
    ConvTranspose { input: Vec<f64> },
    Activation { input: Vec<f64> },
    GlobalAvgPool { dims: Dims },
    Linear { input: Vec<f64> },
    Residual {
        body: Vec<Trace>,
        shortcut: Option<Box<Trace>>,
        sum: Vec<f64>,
    },
}

/// A network description plus its flat parameter vector.
#[derive(Clone, Debug)]
pub struct Network {
    arch: Architecture,
    params: Vec<f64>,
    nodes: Vec<Node>,
    output_dims: Dims,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Network {
    /// All-zero parameters.
    pub fn zeroed(arch: Architecture) -> Result<Self> {
        let mut offset = 0;
        let (nodes, output_dims) = compile(&arch.layers, arch.input_dims(), &mut offset)?;
        Ok(Network {
            arch,
            params: vec![0.0; offset],
            nodes,
            output_dims,
        })
    }

    /// He-style Gaussian initialisation from a seed; biases start at zero.
    /// The last parametric layer of every residual body starts at zero so
    /// that deep residual stacks begin as identities.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = net.nodes.clone();
        init_nodes(&nodes, &mut net.params, &mut rng, false);
        Ok(net)
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeroed(arch)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "{} parameters supplied, architecture {:?} needs {}",
                params.len(),
                net.arch.name,
                net.params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn input_dims(&self) -> Dims {
        self.arch.input_dims()
    }

    pub fn output_dims(&self) -> Dims {
        self.output_dims
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    fn check_input(&self, x: &Tensor3) -> Result<()> {
        if x.dims() != self.input_dims() {
            return Err(Error::Shape(format!(
                "network {:?} expects {:?}, got {:?}",
                self.arch.name,
                self.input_dims(),
                x.dims()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        Ok(self.forward_traced(x.clone())?.0)
    }

    /// Forward pass that records what [`Network::backward`] needs.
    pub fn forward_traced(&self, x: Tensor3) -> Result<(Tensor3, Vec<Trace>)> {
        self.check_input(&x)?;
        Ok(forward_nodes(&self.nodes, &self.params, x))
    }

    /// Back-propagates `grad_out`, *adding* parameter gradients into `grads`.
    /// Returns the gradient with respect to the input when requested.
    pub fn backward(
        &self,
        traces: &[Trace],
        grad_out: Tensor3,
        grads: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Tensor3> {
        assert_eq!(grads.len(), self.params.len());
        let (c, h, w) = self.input_dims();
        let g = backward_nodes(&self.nodes, traces, &self.params, grad_out.data, grads, want_input_grad);
        g.map(|data| Tensor3::from_data(c, h, w, data))
    }
}

fn init_nodes(nodes: &[Node], params: &mut [f64], rng: &mut ChaCha8Rng, zero_last: bool) {
    let last_param = nodes
        .iter()
        .rposition(|n| matches!(n, Node::Conv { .. } | Node::ConvTranspose { .. } | Node::Linear { .. }));
    for (i, node) in nodes.iter().enumerate() {
        let zero = zero_last && Some(i) == last_param;
        let mut fill = |start: usize, len: usize, std: f64| {
            for p in &mut params[start..start + len] {
                let z: f64 = StandardNormal.sample(rng);
                *p = if zero { 0.0 } else { z * std };
            }
        };
        match node {
            Node::Conv {
                geom,
                out_channels,
                weight,
                ..
            } => {
                let fan_in = geom.col_rows() as f64;
                fill(*weight, out_channels * geom.col_rows(), (2.0 / fan_in).sqrt());
            }
            Node::ConvTranspose {
                geom,
                in_channels,
                weight,
                ..
            } => {
                // Each output pixel receives about in·k²/s² contributions.
                let k = geom.kernel as f64;
                let s = geom.stride as f64;
                let fan_in = (*in_channels as f64 * k * k / (s * s)).max(1.0);
                fill(*weight, in_channels * geom.col_rows(), (2.0 / fan_in).sqrt());
            }
            Node::Linear {
                inputs,
                outputs,
                weight,
                ..
            } => fill(*weight, inputs * outputs, (1.0 / *inputs as f64).sqrt()),
            Node::Residual { body, shortcut } => {
                init_nodes(body, params, rng, true);
                if let Some(s) = shortcut {
                    init_nodes(std::slice::from_ref(s.as_ref()), params, rng, false);
                }
            }
            Node::LeakyRelu(_) | Node::Relu | Node::GlobalAvgPool => {}
        }
    }
}

fn forward_nodes(nodes: &[Node], params: &[f64], mut x: Tensor3) -> (Tensor3, Vec<Trace>) {
    let mut traces = Vec::with_capacity(nodes.len());
    for node in nodes {
        let (y, t) = forward_node(node, params, x);
        traces.push(t);
        x = y;
    }
    (x, traces)
}

fn forward_node(node: &Node, params: &[f64], x: Tensor3) -> (Tensor3, Trace) {
    match node {
        Node::Conv {
            geom,
            out_channels,
            weight,
            bias,
        } => {
            let cols = im2col(&x.data, geom);
            let (k, p) = (geom.col_rows(), geom.col_len());
            let mut out = vec![0.0; out_channels * p];
            for (o, chunk) in out.chunks_mut(p).enumerate() {
                chunk.fill(params[bias + o]);
            }
            let w = &params[*weight..weight + out_channels * k];
            gemm(*out_channels, k, p, MatRef::rows(w, k), MatRef::rows(&cols, p), 1.0, &mut out);
            (
                Tensor3::from_data(*out_channels, geom.out_height, geom.out_width, out),
                Trace::Conv { cols },
            )
        }
        Node::ConvTranspose {
            geom,
            in_channels,
            weight,
            bias,
        } => {
            let (k, p) = (geom.col_rows(), geom.col_len());
            let w = &params[*weight..weight + in_channels * k];
            let mut cols = vec![0.0; k * p];
            gemm(k, *in_channels, p, MatRef::transposed(w, k), MatRef::rows(&x.data, p), 0.0, &mut cols);
            let mut out = col2im(&cols, geom);
            let plane = geom.height * geom.width;
            for (o, chunk) in out.chunks_mut(plane).enumerate() {
                let b = params[bias + o];
                chunk.iter_mut().for_each(|v| *v += b);
            }
            (
                Tensor3::from_data(geom.channels, geom.height, geom.width, out),
                Trace::ConvTranspose { input: x.data },
            )
        }
        Node::LeakyRelu(slope) => {
            let data = x.data.iter().map(|&v| if v > 0.0 { v } else { v * slope }).collect();
            let y = Tensor3::from_data(x.channels, x.height, x.width, data);
            (y, Trace::Activation { input: x.data })
        }
        Node::Relu => {
            let data = x.data.iter().map(|&v| v.max(0.0)).collect();
            let y = Tensor3::from_data(x.channels, x.height, x.width, data);
            (y, Trace::Activation { input: x.data })
        }
        Node::GlobalAvgPool => {
            let n = x.plane_len() as f64;
            let data = x.data.chunks(x.plane_len()).map(|p| p.iter().sum::<f64>() / n).collect();
            let dims = x.dims();
            (Tensor3::from_data(x.channels, 1, 1, data), Trace::GlobalAvgPool { dims })
        }
        Node::Linear {
            inputs,
            outputs,
            weight,
            bias,
        } => {
            let w = &params[*weight..weight + inputs * outputs];
            let out = w
                .chunks(*inputs)
                .zip(&params[*bias..bias + outputs])
                .map(|(row, b)| b + row.iter().zip(&x.data).map(|(a, v)| a * v).sum::<f64>())
                .collect();
            (Tensor3::from_data(*outputs, 1, 1, out), Trace::Linear { input: x.data })
        }
        Node::Residual { body, shortcut } => {
            let (body_out, body_tr) = forward_nodes(body, params, x.clone());
            let (short_out, short_tr) = match shortcut {
                Some(s) => {
                    let (y, t) = forward_node(s, params, x);
                    (y, Some(Box::new(t)))
                }
                None => (x, None),
            };
            let sum: Vec<f64> = body_out.data.iter().zip(&short_out.data).map(|(a, b)| a + b).collect();
            let data = sum.iter().map(|&v| v.max(0.0)).collect();
            let y = Tensor3::from_data(body_out.channels, body_out.height, body_out.width, data);
            (
                y,
                Trace::Residual {
                    body: body_tr,
                    shortcut: short_tr,
                    sum,
                },
            )
        }
    }
}

fn backward_nodes(
    nodes: &[Node],
    traces: &[Trace],
    params: &[f64],
    grad_out: Vec<f64>,
    grads: &mut [f64],
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let mut g = grad_out;
    for (i, (node, trace)) in nodes.iter().zip(traces).enumerate().rev() {
        let need = want_input_grad || i > 0;
        {
            let next = backward_node(node, trace, params, g, grads, need)?;
            g = next
        }
    }
    Some(g)
}

fn backward_node(
    node: &Node,
    trace: &Trace,
    params: &[f64],
    grad_out: Vec<f64>,
    grads: &mut [f64],
    need_input: bool,
) -> Option<Vec<f64>> {
    match (node, trace) {
        (
            Node::Conv {
                geom,
                out_channels,
                weight,
                bias,
            },
            Trace::Conv { cols },
        ) => {
            let (k, p) = (geom.col_rows(), geom.col_len());
            for (o, chunk) in grad_out.chunks(p).enumerate() {
                grads[bias + o] += chunk.iter().sum::<f64>();
            }
            let gw = &mut grads[*weight..weight + out_channels * k];
            gemm(
                *out_channels,
                p,
                k,
                MatRef::rows(&grad_out, p),
                MatRef::transposed(cols, p),
                1.0,
                gw,
            );
            need_input.then(|| {
                let w = &params[*weight..weight + out_channels * k];
                let mut dcols = vec![0.0; k * p];
                gemm(
                    k,
                    *out_channels,
                    p,
                    MatRef::transposed(w, k),
                    MatRef::rows(&grad_out, p),
                    0.0,
                    &mut dcols,
                );
                col2im(&dcols, geom)
            })
        }
        (
            Node::ConvTranspose {
                geom,
                in_channels,
                weight,
                bias,
            },
            Trace::ConvTranspose { input },
        ) => {
            let (k, p) = (geom.col_rows(), geom.col_len());
            let plane = geom.height * geom.width;
            for (o, chunk) in grad_out.chunks(plane).enumerate() {
                grads[bias + o] += chunk.iter().sum::<f64>();
            }
            let dcols = im2col(&grad_out, geom);
            let gw = &mut grads[*weight..weight + in_channels * k];
            gemm(
                *in_channels,
                p,
                k,
                MatRef::rows(input, p),
                MatRef::transposed(&dcols, p),
                1.0,
                gw,
            );
            need_input.then(|| {
                let w = &params[*weight..weight + in_channels * k];
                let mut dx = vec![0.0; in_channels * p];
                gemm(*in_channels, k, p, MatRef::rows(w, k), MatRef::rows(&dcols, p), 0.0, &mut dx);
                dx
            })
        }
        (Node::LeakyRelu(slope), Trace::Activation { input }) => Some(
            grad_out
                .iter()
                .zip(input)
                .map(|(&g, &v)| if v > 0.0 { g } else { g * slope })
                .collect(),
        ),
        (Node::Relu, Trace::Activation { input }) => Some(
            grad_out
                .iter()
                .zip(input)
                .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                .collect(),
        ),
        (Node::GlobalAvgPool, Trace::GlobalAvgPool { dims }) => {
            let n = dims.1 * dims.2;
            let scale = 1.0 / n as f64;
            Some(grad_out.iter().flat_map(|&g| std::iter::repeat_n(g * scale, n)).collect())
        }
        (
            Node::Linear {
                inputs,
                outputs,
                weight,
                bias,
            },
            Trace::Linear { input },
        ) => {
            for (o, &g) in grad_out.iter().enumerate() {
                grads[bias + o] += g;
                let row = &mut grads[weight + o * inputs..weight + (o + 1) * inputs];
                for (r, &x) in row.iter_mut().zip(input) {
                    *r += g * x;
                }
            }
            need_input.then(|| {
                let w = &params[*weight..weight + inputs * outputs];
                let mut dx = vec![0.0; *inputs];
                for (o, &g) in grad_out.iter().enumerate() {
                    for (d, &wv) in dx.iter_mut().zip(&w[o * inputs..(o + 1) * inputs]) {
                        *d += g * wv;
                    }
                }
                dx
            })
        }
        (
            Node::Residual { body, shortcut },
            Trace::Residual {
                body: body_tr,
                shortcut: short_tr,
                sum,
            },
        ) => {
            let gsum: Vec<f64> = grad_out
                .iter()
                .zip(sum)
                .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                .collect();
            let from_body = backward_nodes(body, body_tr, params, gsum.clone(), grads, need_input);
            let from_short = match (shortcut, short_tr) {
                (Some(s), Some(t)) => backward_node(s, t, params, gsum, grads, need_input),
                _ => need_input.then_some(gsum),
            };
            match (from_body, from_short) {
                (Some(a), Some(b)) => Some(a.iter().zip(&b).map(|(x, y)| x + y).collect()),
                _ => None,
            }
        }
        _ => unreachable!("trace does not match layer"),
    }
}
