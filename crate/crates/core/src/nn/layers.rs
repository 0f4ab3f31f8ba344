//! Forward and backward kernels for the operators the graph network uses.
//!
//! Every forward returns what its backward needs; backward functions
//! accumulate parameter gradients into caller-owned buffers and return the
//! gradient with respect to the layer input.

use std::cmp::Ordering;

use super::tensor::{dot, matmul, matmul_nt, matmul_tn_acc, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Trainable weights of one layer. GCN layers carry no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Option<Tensor>,
}

impl LayerParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            weights: Tensor::zeros(self.weights.shape()),
            bias: self.bias.as_ref().map(|b| Tensor::zeros(b.shape())),
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        std::iter::once(&self.weights).chain(self.bias.iter())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        std::iter::once(&mut self.weights).chain(self.bias.iter_mut())
    }
}

fn shape_err(what: &str, detail: String) -> Error {
    Error::ShapeMismatch(format!("{what}: {detail}"))
}

/// Cached state of a graph-convolution forward pass.
#[derive(Debug, Clone)]
pub struct GcnCache {
    /// `Â · H`, `n × c_in`
    pub propagated: Tensor,
    pub output: Tensor,
}

/// `tanh(Â · H · W)`.
pub fn gcn_forward(norm_adjacency: &Tensor, h: &Tensor, w: &Tensor) -> Result<GcnCache> {
    let n = norm_adjacency.rows();
    if norm_adjacency.shape() != [n, n] || h.rows() != n || w.rows() != h.cols() {
        return Err(shape_err(
            "gcn",
            format!(
                "adjacency {:?}, features {:?}, weights {:?}",
                norm_adjacency.shape(),
                h.shape(),
                w.shape()
            ),
        ));
    }
    let (c_in, c_out) = (h.cols(), w.cols());
    let ah = matmul(norm_adjacency.data(), h.data(), n, n, c_in);
    let mut z = matmul(&ah, w.data(), n, c_in, c_out);
    z.iter_mut().for_each(|x| *x = x.tanh());
    Ok(GcnCache {
        propagated: Tensor::from_vec(&[n, c_in], ah)?,
        output: Tensor::from_vec(&[n, c_out], z)?,
    })
}

/// Backward of [`gcn_forward`]. Adds `∂L/∂W` into `grad_w` and returns
/// `∂L/∂H`. `Â` must be symmetric.
pub fn gcn_backward(
    norm_adjacency: &Tensor,
    w: &Tensor,
    cache: &GcnCache,
    grad_out: &[f64],
    grad_w: &mut Tensor,
    need_input_grad: bool,
) -> Option<Tensor> {
    let n = norm_adjacency.rows();
    let (c_in, c_out) = (w.rows(), w.cols());
    let dz: Vec<f64> = grad_out
        .iter()
        .zip(cache.output.data())
        .map(|(g, y)| g * (1.0 - y * y))
        .collect();
    matmul_tn_acc(cache.propagated.data(), &dz, n, c_in, c_out, grad_w.data_mut());
    if !need_input_grad {
        return None;
    }
    // ∂L/∂H = Âᵀ (dZ Wᵀ), Â symmetric
    let dzw = matmul_nt(&dz, w.data(), n, c_out, c_in);
    let dh = matmul(norm_adjacency.data(), &dzw, n, n, c_in);
    Some(Tensor::from_vec(&[n, c_in], dh).expect("shape"))
}

/// Orders rows by `keys` descending, ties by ascending row index, and keeps
/// the first `k`; missing rows are zero. Returns the pooled `k × C` matrix and
/// the source row of each retained row.
pub fn sort_pooling(h: &Tensor, keys: &[f64], k: usize) -> Result<(Tensor, Vec<usize>)> {
    let n = h.rows();
    if keys.len() != n || k == 0 {
        return Err(shape_err(
            "sort_pooling",
            format!("{} keys for {n} rows, k = {k}", keys.len()),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| match keys[b].total_cmp(&keys[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    order.truncate(k);
    let c = h.cols();
    let mut out = Tensor::zeros(&[k, c]);
    for (dst, &src) in order.iter().enumerate() {
        out.row_mut(dst).copy_from_slice(h.row(src));
    }
    Ok((out, order))
}

/// Scatters the pooled gradient back to the source rows; padded rows drop out.
pub fn sort_pooling_backward(grad_out: &Tensor, selected: &[usize], n: usize) -> Tensor {
    let c = grad_out.cols();
    let mut g = Tensor::zeros(&[n, c]);
    for (dst, &src) in selected.iter().enumerate() {
        g.row_mut(src).copy_from_slice(grad_out.row(dst));
    }
    g
}

/// Conv layer geometry. Weights are `c_out × (kernel · c_in)` laid out as
/// `[c_out][kernel][c_in]`; inputs are `L × c_in` row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1d {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    /// Gathered input windows, `T × (kernel · c_in)`.
    windows: Vec<f64>,
    pub output: Tensor,
}

impl Conv1d {
    pub fn output_len(&self, len: usize) -> Option<usize> {
        (len >= self.kernel && self.stride > 0).then(|| (len - self.kernel) / self.stride + 1)
    }

    pub fn forward(&self, x: &Tensor, params: &LayerParams) -> Result<ConvCache> {
        let len = x.rows();
        if x.cols() != self.c_in {
            return Err(shape_err(
                "conv1d",
                format!("{} input channels, expected {}", x.cols(), self.c_in),
            ));
        }
        let t = self.output_len(len).ok_or_else(|| {
            shape_err(
                "conv1d",
                format!("sequence length {len} shorter than kernel {}", self.kernel),
            )
        })?;
        let span = self.kernel * self.c_in;
        let mut windows = Vec::with_capacity(t * span);
        for i in 0..t {
            let start = i * self.stride * self.c_in;
            windows.extend_from_slice(&x.data()[start..start + span]);
        }
        let mut z = matmul_nt(&windows, params.weights.data(), t, span, self.c_out);
        let bias = params.bias.as_ref().map(|b| b.data());
        for row in z.chunks_mut(self.c_out) {
            if let Some(b) = bias {
                row.iter_mut().zip(b).for_each(|(v, bv)| *v += bv);
            }
            row.iter_mut().for_each(|v| *v = self.activation.apply(*v));
        }
        Ok(ConvCache {
            windows,
            output: Tensor::from_vec(&[t, self.c_out], z)?,
        })
    }

    pub fn backward(
        &self,
        cache: &ConvCache,
        params: &LayerParams,
        grad_out: &[f64],
        grads: &mut LayerParams,
        input_len: usize,
        need_input_grad: bool,
    ) -> Option<Tensor> {
        let t = cache.output.rows();
        let span = self.kernel * self.c_in;
        let dz: Vec<f64> = grad_out
            .iter()
            .zip(cache.output.data())
            .map(|(g, y)| g * self.activation.grad_from_output(*y))
            .collect();
        matmul_tn_acc(&dz, &cache.windows, t, self.c_out, span, grads.weights.data_mut());
        if let Some(gb) = grads.bias.as_mut() {
            for row in dz.chunks(self.c_out) {
                gb.data_mut().iter_mut().zip(row).for_each(|(g, d)| *g += d);
            }
        }
        if !need_input_grad {
            return None;
        }
        let dwin = matmul(&dz, params.weights.data(), t, self.c_out, span);
        let mut dx = Tensor::zeros(&[input_len, self.c_in]);
        let dxd = dx.data_mut();
        for i in 0..t {
            let start = i * self.stride * self.c_in;
            dxd[start..start + span]
                .iter_mut()
                .zip(&dwin[i * span..(i + 1) * span])
                .for_each(|(d, g)| *d += g);
        }
        Some(dx)
    }
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    /// Flat input index of each output's maximum.
    argmax: Vec<usize>,
    pub output: Tensor,
    input_shape: [usize; 2],
}

/// Channel-wise max over windows of rows; ties go to the first row.
pub fn maxpool1d(x: &Tensor, window: usize, stride: usize) -> Result<PoolCache> {
    let (len, c) = (x.rows(), x.cols());
    if window == 0 || stride == 0 || len < window {
        return Err(shape_err(
            "maxpool1d",
            format!("length {len}, window {window}, stride {stride}"),
        ));
    }
    let t = (len - window) / stride + 1;
    let mut out = Vec::with_capacity(t * c);
    let mut argmax = Vec::with_capacity(t * c);
    for i in 0..t {
        for ch in 0..c {
            let mut best = (i * stride) * c + ch;
            for r in i * stride + 1..i * stride + window {
                let idx = r * c + ch;
                if x.data()[idx] > x.data()[best] {
                    best = idx;
                }
            }
            argmax.push(best);
            out.push(x.data()[best]);
        }
    }
    Ok(PoolCache {
        argmax,
        output: Tensor::from_vec(&[t, c], out)?,
        input_shape: [len, c],
    })
}

pub fn maxpool1d_backward(cache: &PoolCache, grad_out: &[f64]) -> Tensor {
    let mut dx = Tensor::zeros(&cache.input_shape);
    for (&idx, g) in cache.argmax.iter().zip(grad_out) {
        dx.data_mut()[idx] += g;
    }
    dx
}

/// Fully connected layer with weights `c_in × c_out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub c_in: usize,
    pub c_out: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn forward(&self, x: &[f64], params: &LayerParams) -> Result<Vec<f64>> {
        if x.len() != self.c_in || params.weights.shape() != [self.c_in, self.c_out] {
            return Err(shape_err(
                "dense",
                format!(
                    "input {} against weights {:?}",
                    x.len(),
                    params.weights.shape()
                ),
            ));
        }
        let mut y = matmul(x, params.weights.data(), 1, self.c_in, self.c_out);
        if let Some(b) = &params.bias {
            y.iter_mut().zip(b.data()).for_each(|(v, bv)| *v += bv);
        }
        y.iter_mut().for_each(|v| *v = self.activation.apply(*v));
        Ok(y)
    }

    pub fn backward(
        &self,
        x: &[f64],
        y: &[f64],
        params: &LayerParams,
        grad_out: &[f64],
        grads: &mut LayerParams,
    ) -> Vec<f64> {
        let dz: Vec<f64> = grad_out
            .iter()
            .zip(y)
            .map(|(g, y)| g * self.activation.grad_from_output(*y))
            .collect();
        matmul_tn_acc(x, &dz, 1, self.c_in, self.c_out, grads.weights.data_mut());
        if let Some(gb) = grads.bias.as_mut() {
            gb.data_mut().iter_mut().zip(&dz).for_each(|(g, d)| *g += d);
        }
        (0..self.c_in)
            .map(|i| dot(params.weights.row(i), &dz))
            .collect()
    }
}

/// `activation(x·W + b)` as a one-off call.
pub fn dense_forward(x: &[f64], params: &LayerParams, activation: Activation) -> Result<Vec<f64>> {
    let shape = params.weights.shape();
    if shape.len() != 2 {
        return Err(shape_err("dense", format!("weights {shape:?} not a matrix")));
    }
    Dense {
        c_in: shape[0],
        c_out: shape[1],
        activation,
    }
    .forward(x, params)
}

/// Probability clamp applied before taking logs.
pub const BCE_EPS: f64 = 1e-7;

/// Binary cross-entropy and its derivative with respect to `p`.
pub fn bce_loss(p: f64, y: f64) -> (f64, f64) {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    let grad = -y / p + (1.0 - y) / (1.0 - p);
    (loss, grad)
}
