//! Minimal dense-tensor numerics.
//!
//! Everything the blocks need and nothing more: shape-checked elementwise
//! ops, matrix multiply, 1-D/2-D convolution (dense and depthwise), pooling,
//! layer normalization and the activation zoo. Values are 32-bit reals in a
//! flat row-major buffer; reductions accumulate in f64 so that oracle
//! comparisons at 1e-5 relative error are not at the mercy of summation
//! order. There is no broadcasting beyond scalar·tensor: shape bugs surface
//! as errors, not as wrong numbers.
//!
//! All operations are pure functions over immutable inputs; identical inputs
//! give bitwise-identical outputs.

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Dense rank-1..4 array of f32 with row-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::dim(
            "tensor",
            format!("rank must be 1..=4, got shape {shape:?}"),
        ));
    }
    if shape.contains(&0) {
        return Err(Error::dim(
            "tensor",
            format!("all extents must be >= 1, got shape {shape:?}"),
        ));
    }
    Ok(())
}

impl Tensor {
    /// Builds a tensor, checking that `data` fills `shape` exactly.
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        check_shape(shape)?;
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim(
                "tensor",
                format!(
                    "shape {shape:?} implies {expected} elements, got {}",
                    data.len()
                ),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// All-zero tensor. Panics on an invalid shape; shapes here are always
    /// produced by the library itself, never from input data.
    pub fn zeros(shape: &[usize]) -> Self {
        check_shape(shape).expect("internal shape must be valid");
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Constant-filled tensor (see [`Tensor::zeros`] for the panic contract).
    pub fn full(shape: &[usize], value: f32) -> Self {
        check_shape(shape).expect("internal shape must be valid");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Row-major flat offset of a multi-index.
    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, &ix) in idx.iter().enumerate() {
            debug_assert!(ix < self.shape[i]);
            off = off * self.shape[i] + ix;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> f32 {
        self.data[self.offset(idx)]
    }

    /// Same buffer under a new shape of equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::dim(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Elementwise map through a scalar function.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f32) -> Tensor {
        self.map(|v| v * s)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::dim(
            op,
            format!("shapes {:?} and {:?} differ", a.shape, b.shape),
        ));
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
    })
}

/// Hadamard product.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

pub fn sigmoid_scalar(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu_scalar(x: f32) -> f32 {
    x * sigmoid_scalar(x)
}

/// ln(1+e^x), switching to the asymptote for x > 20 where e^x would
/// overwhelm the +1 in f32.
pub fn softplus_scalar(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else {
        (1.0 + x.exp()).ln()
    }
}

pub fn relu_scalar(x: f32) -> f32 {
    x.max(0.0)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn silu(x: &Tensor) -> Tensor {
    x.map(silu_scalar)
}

pub fn softplus(x: &Tensor) -> Tensor {
    x.map(softplus_scalar)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(relu_scalar)
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// Standard real matrix product `[M,K]·[K,N] -> [M,N]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::dim(
            "matmul",
            format!("expects two matrices, got {:?} and {:?}", a.shape, b.shape),
        ));
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    let (k2, n) = (b.shape[0], b.shape[1]);
    if k != k2 {
        return Err(Error::dim(
            "matmul",
            format!("inner dims disagree: {:?} vs {:?}", a.shape, b.shape),
        ));
    }
    let mut out = vec![0.0f32; m * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, slot) in row.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for p in 0..k {
                acc += a.data[i * k + p] as f64 * b.data[p * n + j] as f64;
            }
            *slot = acc as f32;
        }
    });
    Tensor::new(&[m, n], out)
}

/// x·W with an optional row-broadcast bias: `[M,K]·[K,N] (+ bias[N])`.
pub fn linear(x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let mut y = matmul(x, w)?;
    if let Some(b) = bias {
        let n = y.shape[1];
        if b.shape() != [n] {
            return Err(Error::dim(
                "linear",
                format!("bias shape {:?} does not match width {n}", b.shape()),
            ));
        }
        for row in y.data.chunks_mut(n) {
            for (v, bv) in row.iter_mut().zip(&b.data) {
                *v += bv;
            }
        }
    }
    Ok(y)
}

/// `[A,B] -> [B,A]`.
pub fn transpose2(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(Error::dim(
            "transpose2",
            format!("expects a matrix, got {:?}", x.shape),
        ));
    }
    let (r, c) = (x.shape[0], x.shape[1]);
    let mut out = vec![0.0f32; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = x.data[i * c + j];
        }
    }
    Tensor::new(&[c, r], out)
}

/// Slice of columns `[start, end)` of a matrix.
pub fn col_range(x: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    if x.rank() != 2 || end > x.shape[1] || start >= end {
        return Err(Error::dim(
            "col_range",
            format!("range {start}..{end} invalid for shape {:?}", x.shape),
        ));
    }
    let (rows, cols) = (x.shape[0], x.shape[1]);
    let width = end - start;
    let mut out = Vec::with_capacity(rows * width);
    for i in 0..rows {
        out.extend_from_slice(&x.data[i * cols + start..i * cols + end]);
    }
    Tensor::new(&[rows, width], out)
}

/// Concatenates matrices with equal row counts along the column axis.
pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::dim("concat_cols", "no parts given".to_string()));
    }
    let rows = parts[0].shape[0];
    for p in parts {
        if p.rank() != 2 || p.shape[0] != rows {
            return Err(Error::dim(
                "concat_cols",
                format!("all parts must be matrices with {rows} rows"),
            ));
        }
    }
    let total: usize = parts.iter().map(|p| p.shape[1]).sum();
    let mut out = Vec::with_capacity(rows * total);
    for i in 0..rows {
        for p in parts {
            let c = p.shape[1];
            out.extend_from_slice(&p.data[i * c..(i + 1) * c]);
        }
    }
    Tensor::new(&[rows, total], out)
}

/// Splits a matrix into `parts` contiguous column groups of equal width.
pub fn split_cols(x: &Tensor, parts: usize) -> Result<Vec<Tensor>> {
    if x.rank() != 2 {
        return Err(Error::dim(
            "split_cols",
            format!("expects a matrix, got {:?}", x.shape),
        ));
    }
    let cols = x.shape[1];
    if parts == 0 || !cols.is_multiple_of(parts) {
        return Err(Error::dim(
            "split_cols",
            format!("{cols} columns not divisible into {parts} groups"),
        ));
    }
    let width = cols / parts;
    (0..parts)
        .map(|g| col_range(x, g * width, (g + 1) * width))
        .collect()
}

/// Slice along the first axis: `[S0,...] -> [...]` at `index` (rank >= 2).
pub fn plane(x: &Tensor, index: usize) -> Result<Tensor> {
    if x.rank() < 2 || index >= x.shape[0] {
        return Err(Error::dim(
            "plane",
            format!("index {index} invalid for shape {:?}", x.shape),
        ));
    }
    let stride: usize = x.shape[1..].iter().product();
    Tensor::new(
        &x.shape[1..],
        x.data[index * stride..(index + 1) * stride].to_vec(),
    )
}

/// Contiguous row slice `[start, end)` of the first axis, keeping the rank.
pub fn rows(x: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    if end > x.shape[0] || start >= end {
        return Err(Error::dim(
            "rows",
            format!("range {start}..{end} invalid for shape {:?}", x.shape),
        ));
    }
    let stride: usize = x.shape[1..].iter().product();
    let mut shape = x.shape.clone();
    shape[0] = end - start;
    Tensor::new(&shape, x.data[start * stride..end * stride].to_vec())
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

/// Per-channel 1-D convolution, no cross-channel mixing.
///
/// `pad` zeros are prepended (causal left padding); the output length is
/// `L + pad - k + 1`, so `pad = k - 1` preserves the input length. Each
/// output sample depends only on current and past inputs. A delta kernel at
/// the last tap is the identity.
pub fn conv1d_depthwise(x: &Tensor, kernel: &Tensor, bias: &Tensor, pad: usize) -> Result<Tensor> {
    if x.rank() != 2 || kernel.rank() != 2 {
        return Err(Error::dim(
            "conv1d_depthwise",
            format!(
                "expects [C,L] and [C,k], got {:?} {:?}",
                x.shape, kernel.shape
            ),
        ));
    }
    let (c, l) = (x.shape[0], x.shape[1]);
    let (ck, k) = (kernel.shape[0], kernel.shape[1]);
    if c != ck || bias.shape() != [c] {
        return Err(Error::dim(
            "conv1d_depthwise",
            format!(
                "channel mismatch: x {:?}, kernel {:?}, bias {:?}",
                x.shape,
                kernel.shape,
                bias.shape()
            ),
        ));
    }
    let out_len = (l + pad)
        .checked_sub(k - 1)
        .filter(|&v| v >= 1)
        .ok_or_else(|| {
            Error::dim(
                "conv1d_depthwise",
                format!("kernel width {k} too large for length {l} with pad {pad}"),
            )
        })?;
    let mut out = vec![0.0f32; c * out_len];
    for ch in 0..c {
        for t in 0..out_len {
            let mut acc = bias.data[ch] as f64;
            for j in 0..k {
                // position in the padded signal is t+j; subtract the pad to
                // index the real signal
                let p = t + j;
                if p >= pad && p - pad < l {
                    acc += kernel.data[ch * k + j] as f64 * x.data[ch * l + (p - pad)] as f64;
                }
            }
            out[ch * out_len + t] = acc as f32;
        }
    }
    Tensor::new(&[c, out_len], out)
}

/// Dense (cross-channel) causal 1-D convolution: `[Cin,L]` with kernel
/// `[Cout,Cin,k]` and left padding, mirroring `conv1d_depthwise`'s length
/// contract.
pub fn conv1d(x: &Tensor, kernel: &Tensor, bias: &Tensor, pad: usize) -> Result<Tensor> {
    if x.rank() != 2 || kernel.rank() != 3 {
        return Err(Error::dim(
            "conv1d",
            format!(
                "expects [Cin,L] and [Cout,Cin,k], got {:?} {:?}",
                x.shape, kernel.shape
            ),
        ));
    }
    let (cin, l) = (x.shape[0], x.shape[1]);
    let (cout, cin_k, k) = (kernel.shape[0], kernel.shape[1], kernel.shape[2]);
    if cin != cin_k || bias.shape() != [cout] {
        return Err(Error::dim(
            "conv1d",
            format!(
                "channel mismatch: x {:?}, kernel {:?}, bias {:?}",
                x.shape,
                kernel.shape,
                bias.shape()
            ),
        ));
    }
    let out_len = (l + pad)
        .checked_sub(k - 1)
        .filter(|&v| v >= 1)
        .ok_or_else(|| {
            Error::dim(
                "conv1d",
                format!("kernel width {k} too large for length {l} with pad {pad}"),
            )
        })?;
    let mut out = vec![0.0f32; cout * out_len];
    out.par_chunks_mut(out_len)
        .enumerate()
        .for_each(|(co, row)| {
            for (t, slot) in row.iter_mut().enumerate() {
                let mut acc = bias.data[co] as f64;
                for ci in 0..cin {
                    for j in 0..k {
                        let p = t + j;
                        if p >= pad && p - pad < l {
                            acc += kernel.data[(co * cin + ci) * k + j] as f64
                                * x.data[ci * l + (p - pad)] as f64;
                        }
                    }
                }
                *slot = acc as f32;
            }
        });
    Tensor::new(&[cout, out_len], out)
}

/// 2-D cross-correlation (no kernel flip) with symmetric zero padding and
/// optional dilation. Stride is 1; `k=3, pad=1, dilation=1` preserves H×W.
pub fn conv2d_dilated(
    x: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    pad: usize,
    dilation: usize,
) -> Result<Tensor> {
    if x.rank() != 3 || kernel.rank() != 4 {
        return Err(Error::dim(
            "conv2d",
            format!(
                "expects [Cin,H,W] and [Cout,Cin,kh,kw], got {:?} {:?}",
                x.shape, kernel.shape
            ),
        ));
    }
    if dilation == 0 {
        return Err(Error::dim("conv2d", "dilation must be >= 1".to_string()));
    }
    let (cin, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    let (cout, cin_k, kh, kw) = (
        kernel.shape[0],
        kernel.shape[1],
        kernel.shape[2],
        kernel.shape[3],
    );
    if cin != cin_k || bias.shape() != [cout] {
        return Err(Error::dim(
            "conv2d",
            format!(
                "channel mismatch: x {:?}, kernel {:?}, bias {:?}",
                x.shape,
                kernel.shape,
                bias.shape()
            ),
        ));
    }
    let eff_h = dilation * (kh - 1) + 1;
    let eff_w = dilation * (kw - 1) + 1;
    let out_h = (h + 2 * pad).checked_sub(eff_h - 1).filter(|&v| v >= 1);
    let out_w = (w + 2 * pad).checked_sub(eff_w - 1).filter(|&v| v >= 1);
    let (out_h, out_w) = match (out_h, out_w) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::dim(
                "conv2d",
                format!(
                    "kernel {kh}x{kw} (dilation {dilation}) too large for {h}x{w} with pad {pad}"
                ),
            ))
        }
    };
    let mut out = vec![0.0f32; cout * out_h * out_w];
    out.par_chunks_mut(out_h * out_w)
        .enumerate()
        .for_each(|(co, plane)| {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut acc = bias.data[co] as f64;
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = oy + ky * dilation;
                                let ix = ox + kx * dilation;
                                if iy >= pad && iy - pad < h && ix >= pad && ix - pad < w {
                                    let xv = x.data[(ci * h + (iy - pad)) * w + (ix - pad)];
                                    let kv = kernel.data[((co * cin + ci) * kh + ky) * kw + kx];
                                    acc += xv as f64 * kv as f64;
                                }
                            }
                        }
                    }
                    plane[oy * out_w + ox] = acc as f32;
                }
            }
        });
    Tensor::new(&[cout, out_h, out_w], out)
}

pub fn conv2d(x: &Tensor, kernel: &Tensor, bias: &Tensor, pad: usize) -> Result<Tensor> {
    conv2d_dilated(x, kernel, bias, pad, 1)
}

/// Per-channel 2-D convolution: `[C,H,W]` with kernel `[C,kh,kw]`.
pub fn conv2d_depthwise(x: &Tensor, kernel: &Tensor, bias: &Tensor, pad: usize) -> Result<Tensor> {
    if x.rank() != 3 || kernel.rank() != 3 {
        return Err(Error::dim(
            "conv2d_depthwise",
            format!(
                "expects [C,H,W] and [C,kh,kw], got {:?} {:?}",
                x.shape, kernel.shape
            ),
        ));
    }
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    let (ck, kh, kw) = (kernel.shape[0], kernel.shape[1], kernel.shape[2]);
    if c != ck || bias.shape() != [c] {
        return Err(Error::dim(
            "conv2d_depthwise",
            format!(
                "channel mismatch: x {:?}, kernel {:?}, bias {:?}",
                x.shape,
                kernel.shape,
                bias.shape()
            ),
        ));
    }
    let out_h = (h + 2 * pad).checked_sub(kh - 1).filter(|&v| v >= 1);
    let out_w = (w + 2 * pad).checked_sub(kw - 1).filter(|&v| v >= 1);
    let (out_h, out_w) = match (out_h, out_w) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::dim(
                "conv2d_depthwise",
                format!("kernel {kh}x{kw} too large for {h}x{w} with pad {pad}"),
            ))
        }
    };
    let mut out = vec![0.0f32; c * out_h * out_w];
    for ch in 0..c {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = bias.data[ch] as f64;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = oy + ky;
                        let ix = ox + kx;
                        if iy >= pad && iy - pad < h && ix >= pad && ix - pad < w {
                            acc += x.data[(ch * h + (iy - pad)) * w + (ix - pad)] as f64
                                * kernel.data[(ch * kh + ky) * kw + kx] as f64;
                        }
                    }
                }
                out[(ch * out_h + oy) * out_w + ox] = acc as f32;
            }
        }
    }
    Tensor::new(&[c, out_h, out_w], out)
}

// ---------------------------------------------------------------------------
// Pooling and resampling
// ---------------------------------------------------------------------------

/// 2×2 non-overlapping max pooling; H and W must be even.
pub fn maxpool2(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::dim(
            "maxpool2",
            format!("expects [C,H,W], got {:?}", x.shape),
        ));
    }
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim(
            "maxpool2",
            format!("H and W must be even, got {h}x{w}"),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0f32; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f32::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        m = m.max(x.data[(ch * h + 2 * oy + dy) * w + 2 * ox + dx]);
                    }
                }
                out[(ch * oh + oy) * ow + ox] = m;
            }
        }
    }
    Tensor::new(&[c, oh, ow], out)
}

/// Per-channel mean over the spatial extent: `[C,H,W] -> [C]`.
pub fn avgpool_global(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::dim(
            "avgpool_global",
            format!("expects [C,H,W], got {:?}", x.shape),
        ));
    }
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    let plane = h * w;
    let mut out = Vec::with_capacity(c);
    for ch in 0..c {
        let mut acc = 0.0f64;
        for v in &x.data[ch * plane..(ch + 1) * plane] {
            acc += *v as f64;
        }
        out.push((acc / plane as f64) as f32);
    }
    Tensor::new(&[c], out)
}

/// 2× nearest-neighbor replication: `[C,H,W] -> [C,2H,2W]`.
pub fn upsample2_nearest(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::dim(
            "upsample2_nearest",
            format!("expects [C,H,W], got {:?}", x.shape),
        ));
    }
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0f32; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                out[(ch * oh + oy) * ow + ox] = x.data[(ch * h + oy / 2) * w + ox / 2];
            }
        }
    }
    Tensor::new(&[c, oh, ow], out)
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Layer normalization over the trailing channel axis, then affine.
///
/// Each position's C-vector is shifted to zero mean and scaled to unit
/// variance (population variance, epsilon inside the square root).
pub fn layernorm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
    let c = *x.shape.last().expect("rank >= 1");
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::dim(
            "layernorm",
            format!(
                "gamma {:?} / beta {:?} do not match trailing extent {c}",
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    let positions = x.data.len() / c;
    let mut out = vec![0.0f32; x.data.len()];
    for p in 0..positions {
        let row = &x.data[p * c..(p + 1) * c];
        let mut mean = 0.0f64;
        for &v in row {
            mean += v as f64;
        }
        mean /= c as f64;
        let mut var = 0.0f64;
        for &v in row {
            let d = v as f64 - mean;
            var += d * d;
        }
        var /= c as f64;
        let inv = 1.0 / (var + eps as f64).sqrt();
        for (j, &v) in row.iter().enumerate() {
            let norm = (v as f64 - mean) * inv;
            out[p * c + j] = (norm as f32) * gamma.data[j] + beta.data[j];
        }
    }
    Tensor::new(&x.shape, out)
}
