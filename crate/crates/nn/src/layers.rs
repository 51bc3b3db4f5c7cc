//! Building blocks over `(batch, time, channels)` tensors.
//!
//! Everything here is composed of primitive tensor ops so that reverse-mode
//! gradients are available for every parameter.

use candle_core::{Tensor, D};

use crate::error::Result;
use crate::params::{Dist, Init};

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Option<Tensor>,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Option<Tensor>) -> Self {
        Self { weight, bias }
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let input = *dims.last().expect("rank >= 1");
        let rows: usize = dims[..dims.len() - 1].iter().product();
        let y = x.reshape((rows, input))?.matmul(&self.weight.t()?)?;
        let y = match &self.bias {
            Some(b) => y.broadcast_add(b)?,
            None => y,
        };
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = self.weight.dim(0)?;
        Ok(y.reshape(out_dims)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gain: Tensor,
    bias: Tensor,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(gain: Tensor, bias: Tensor) -> Self {
        Self { gain, bias }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + Self::EPS)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gain)?.broadcast_add(&self.bias)?)
    }
}

pub fn gelu(x: &Tensor) -> Result<Tensor> {
    Ok(x.gelu_erf()?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((((x * 0.5)?.tanh()? + 1.0)? * 0.5)?)
}

pub fn silu(x: &Tensor) -> Result<Tensor> {
    Ok(x.silu()?)
}

/// Stride-1 convolution over time with "same" zero padding.
#[derive(Debug, Clone)]
pub struct Conv1d {
    proj: Linear,
    kernel: usize,
}

impl Conv1d {
    pub fn new(init: &mut Init, name: &str, input: usize, output: usize, kernel: usize) -> Result<Self> {
        Ok(Self {
            proj: init.linear(name, input * kernel, output)?,
            kernel,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let t = x.dim(1)?;
        let left = (self.kernel - 1) / 2;
        let padded = x.pad_with_zeros(1, left, self.kernel - 1 - left)?;
        let taps = (0..self.kernel)
            .map(|i| padded.narrow(1, i, t))
            .collect::<candle_core::Result<Vec<_>>>()?;
        self.proj.forward(&Tensor::cat(&taps, 2)?)
    }
}

/// Convolution with kernel `2 * stride` and padding `stride / 2` on each
/// side; maps `T` frames to `T / stride` (`T` must be a multiple of `stride`).
#[derive(Debug, Clone)]
pub struct StridedConv1d {
    proj: Linear,
    stride: usize,
}

impl StridedConv1d {
    pub fn new(init: &mut Init, name: &str, input: usize, output: usize, stride: usize) -> Result<Self> {
        Ok(Self {
            proj: init.linear(name, input * 2 * stride, output)?,
            stride,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, c) = x.dims3()?;
        let s = self.stride;
        if t % s != 0 {
            return crate::error::invalid(format!("{t} frames not divisible by stride {s}"));
        }
        let left = s / 2;
        let padded = x.pad_with_zeros(1, left, s - left)?;
        let first = padded.narrow(1, 0, t)?.reshape((b, t / s, s * c))?;
        let second = padded.narrow(1, s, t)?.reshape((b, t / s, s * c))?;
        self.proj.forward(&Tensor::cat(&[first, second], 2)?)
    }
}

/// Per-channel convolution over time, "same" padding.
#[derive(Debug, Clone)]
pub struct DepthwiseConv1d {
    weight: Tensor,
    bias: Tensor,
    kernel: usize,
}

impl DepthwiseConv1d {
    pub fn new(init: &mut Init, name: &str, channels: usize, kernel: usize) -> Result<Self> {
        let mut s = init.sub(name);
        let bound = 1.0 / (kernel as f64).sqrt();
        Ok(Self {
            weight: s.tensor("weight", &[kernel, channels], Dist::Uniform(bound))?,
            bias: s.tensor("bias", &[channels], Dist::Zeros)?,
            kernel,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let t = x.dim(1)?;
        let left = (self.kernel - 1) / 2;
        let padded = x.pad_with_zeros(1, left, self.kernel - 1 - left)?;
        let mut acc = x.zeros_like()?.broadcast_add(&self.bias)?;
        for i in 0..self.kernel {
            let w = self.weight.get(i)?;
            acc = (acc + padded.narrow(1, i, t)?.broadcast_mul(&w)?)?;
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new(init: &mut Init, name: &str, dim: usize, heads: usize) -> Result<Self> {
        if dim % heads != 0 {
            return crate::error::invalid(format!("dimension {dim} not divisible by {heads} heads"));
        }
        let mut s = init.sub(name);
        Ok(Self {
            q: s.linear("q", dim, dim)?,
            k: s.linear("k", dim, dim)?,
            v: s.linear("v", dim, dim)?,
            o: s.linear("o", dim, dim)?,
            heads,
        })
    }

    fn split(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        Ok(x
            .reshape((b, t, self.heads, d / self.heads))?
            .transpose(1, 2)?
            .contiguous()?)
    }

    /// Queries from `query`, keys and values from `context`.
    pub fn forward(&self, query: &Tensor, context: &Tensor) -> Result<Tensor> {
        let (b, tq, d) = query.dims3()?;
        let q = self.split(&self.q.forward(query)?)?;
        let k = self.split(&self.k.forward(context)?)?;
        let v = self.split(&self.v.forward(context)?)?;
        let scale = 1.0 / ((d / self.heads) as f64).sqrt();
        let scores = (q.matmul(&k.t()?.contiguous()?)? * scale)?;
        let weights = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let out = weights
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, tq, d))?;
        self.o.forward(&out)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new(init: &mut Init, name: &str, dim: usize, hidden: usize) -> Result<Self> {
        let mut s = init.sub(name);
        Ok(Self {
            up: s.linear("up", dim, hidden)?,
            down: s.linear("down", hidden, dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.down.forward(&gelu(&self.up.forward(x)?)?)
    }
}

/// Pre-norm self-attention block.
#[derive(Debug, Clone)]
pub struct SelfAttentionBlock {
    norm1: LayerNorm,
    attn: MultiHeadAttention,
    norm2: LayerNorm,
    ff: FeedForward,
}

impl SelfAttentionBlock {
    pub fn new(init: &mut Init, name: &str, dim: usize, heads: usize, ff_mult: usize) -> Result<Self> {
        let mut s = init.sub(name);
        Ok(Self {
            norm1: s.layer_norm("norm1", dim)?,
            attn: MultiHeadAttention::new(&mut s, "attn", dim, heads)?,
            norm2: s.layer_norm("norm2", dim)?,
            ff: FeedForward::new(&mut s, "ff", dim, dim * ff_mult)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.norm1.forward(x)?;
        let x = (x + self.attn.forward(&h, &h)?)?;
        Ok((&x + self.ff.forward(&self.norm2.forward(&x)?)?)?)
    }
}

/// Pre-norm cross-attention block: queries from `x`, keys/values from `other`,
/// followed by a feed-forward on `x`.
#[derive(Debug, Clone)]
pub struct CrossAttentionBlock {
    norm_q: LayerNorm,
    norm_kv: LayerNorm,
    attn: MultiHeadAttention,
    norm2: LayerNorm,
    ff: FeedForward,
}

impl CrossAttentionBlock {
    pub fn new(init: &mut Init, name: &str, dim: usize, heads: usize, ff_mult: usize) -> Result<Self> {
        let mut s = init.sub(name);
        Ok(Self {
            norm_q: s.layer_norm("norm_q", dim)?,
            norm_kv: s.layer_norm("norm_kv", dim)?,
            attn: MultiHeadAttention::new(&mut s, "attn", dim, heads)?,
            norm2: s.layer_norm("norm2", dim)?,
            ff: FeedForward::new(&mut s, "ff", dim, dim * ff_mult)?,
        })
    }

    pub fn forward(&self, x: &Tensor, other: &Tensor) -> Result<Tensor> {
        let q = self.norm_q.forward(x)?;
        let kv = self.norm_kv.forward(other)?;
        let x = (x + self.attn.forward(&q, &kv)?)?;
        Ok((&x + self.ff.forward(&self.norm2.forward(&x)?)?)?)
    }
}

/// Unidirectional LSTM layer.
#[derive(Debug, Clone)]
pub struct Lstm {
    input: Linear,
    recurrent: Tensor,
    hidden: usize,
}

impl Lstm {
    pub fn new(init: &mut Init, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let mut s = init.sub(name);
        let bound = 1.0 / (hidden as f64).sqrt();
        let w = s.tensor("input.weight", &[4 * hidden, input], Dist::Uniform(bound))?;
        // gate order: input, forget, cell, output; forget bias starts at 1
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].fill(1.0);
        let b = s.tensor_values("input.bias", &[4 * hidden], bias)?;
        let recurrent = s.tensor("recurrent", &[4 * hidden, hidden], Dist::Uniform(bound))?;
        Ok(Self {
            input: Linear::new(w, Some(b)),
            recurrent,
            hidden,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, _) = x.dims3()?;
        let h_dim = self.hidden;
        let projected = self.input.forward(x)?;
        let w_hh = self.recurrent.t()?;
        let mut h = Tensor::zeros((b, h_dim), x.dtype(), x.device())?;
        let mut c = h.clone();
        let mut outputs = Vec::with_capacity(t);
        for step in 0..t {
            let gates = (projected.narrow(1, step, 1)?.squeeze(1)? + h.matmul(&w_hh)?)?;
            let i = sigmoid(&gates.narrow(1, 0, h_dim)?)?;
            let f = sigmoid(&gates.narrow(1, h_dim, h_dim)?)?;
            let g = gates.narrow(1, 2 * h_dim, h_dim)?.tanh()?;
            let o = sigmoid(&gates.narrow(1, 3 * h_dim, h_dim)?)?;
            c = ((f * &c)? + (i * g)?)?;
            h = (o * c.tanh()?)?;
            outputs.push(h.clone());
        }
        Ok(Tensor::stack(&outputs, 1)?)
    }
}

/// Macaron conformer block: half feed-forward, self-attention, convolution
/// module, half feed-forward, final norm.
#[derive(Debug, Clone)]
pub struct ConformerBlock {
    ff1_norm: LayerNorm,
    ff1: FeedForward,
    attn_norm: LayerNorm,
    attn: MultiHeadAttention,
    conv_norm: LayerNorm,
    pointwise_in: Linear,
    depthwise: DepthwiseConv1d,
    conv_inner_norm: LayerNorm,
    pointwise_out: Linear,
    ff2_norm: LayerNorm,
    ff2: FeedForward,
    out_norm: LayerNorm,
}

impl ConformerBlock {
    pub fn new(
        init: &mut Init,
        name: &str,
        dim: usize,
        heads: usize,
        ff_mult: usize,
        kernel: usize,
    ) -> Result<Self> {
        let mut s = init.sub(name);
        Ok(Self {
            ff1_norm: s.layer_norm("ff1_norm", dim)?,
            ff1: FeedForward::new(&mut s, "ff1", dim, dim * ff_mult)?,
            attn_norm: s.layer_norm("attn_norm", dim)?,
            attn: MultiHeadAttention::new(&mut s, "attn", dim, heads)?,
            conv_norm: s.layer_norm("conv_norm", dim)?,
            pointwise_in: s.linear("pointwise_in", dim, 2 * dim)?,
            depthwise: DepthwiseConv1d::new(&mut s, "depthwise", dim, kernel)?,
            conv_inner_norm: s.layer_norm("conv_inner_norm", dim)?,
            pointwise_out: s.linear("pointwise_out", dim, dim)?,
            ff2_norm: s.layer_norm("ff2_norm", dim)?,
            ff2: FeedForward::new(&mut s, "ff2", dim, dim * ff_mult)?,
            out_norm: s.layer_norm("out_norm", dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = (x + (self.ff1.forward(&self.ff1_norm.forward(x)?)? * 0.5)?)?;
        let h = self.attn_norm.forward(&x)?;
        let x = (&x + self.attn.forward(&h, &h)?)?;

        let dim = x.dim(2)?;
        let h = self.pointwise_in.forward(&self.conv_norm.forward(&x)?)?;
        let glu = (h.narrow(2, 0, dim)? * sigmoid(&h.narrow(2, dim, dim)?)?)?;
        let h = self.depthwise.forward(&glu)?;
        let h = silu(&self.conv_inner_norm.forward(&h)?)?;
        let x = (&x + self.pointwise_out.forward(&h)?)?;

        let x = (&x + (self.ff2.forward(&self.ff2_norm.forward(&x)?)? * 0.5)?)?;
        self.out_norm.forward(&x)
    }
}

/// Residual convolution block: depthwise conv, layer norm, pointwise
/// expansion with GELU, pointwise projection.
#[derive(Debug, Clone)]
pub struct ResidualConvBlock {
    depthwise: DepthwiseConv1d,
    norm: LayerNorm,
    up: Linear,
    down: Linear,
}

impl ResidualConvBlock {
    pub fn new(init: &mut Init, name: &str, dim: usize, kernel: usize, mult: usize) -> Result<Self> {
        let mut s = init.sub(name);
        Ok(Self {
            depthwise: DepthwiseConv1d::new(&mut s, "depthwise", dim, kernel)?,
            norm: s.layer_norm("norm", dim)?,
            up: s.linear("up", dim, dim * mult)?,
            down: s.linear("down", dim * mult, dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.norm.forward(&self.depthwise.forward(x)?)?;
        let h = self.down.forward(&gelu(&self.up.forward(&h)?)?)?;
        Ok((x + h)?)
    }
}

/// `T × dim` sinusoidal position table.
pub fn sinusoidal_positions(frames: usize, dim: usize) -> Result<Tensor> {
    let mut v = vec![0.0; frames * dim];
    for t in 0..frames {
        for i in 0..dim / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            v[t * dim + 2 * i] = (t as f64 * freq).sin();
            v[t * dim + 2 * i + 1] = (t as f64 * freq).cos();
        }
    }
    crate::params::tensor_from(v, &[frames, dim])
}
