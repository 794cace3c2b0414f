//! Forward kernels shared by the tape ops and the standalone API.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// How a length-preserving sequence op pads its borders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    /// Window centred on each position, zero/ignored outside the sequence.
    Centered,
    /// Window ending at each position; never reads later positions.
    Causal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
}

/// Source row read by kernel tap `k` at output row `t`, if inside the sequence.
///
/// Taps follow the convolution convention: tap `k` of a width-`w` kernel
/// multiplies `x[t + w/2 - k]` (centred) or `x[t - k]` (causal).
#[inline]
pub fn conv_source(t: usize, k: usize, width: usize, len: usize, padding: Padding) -> Option<usize> {
    let src = match padding {
        Padding::Centered => t as isize + (width / 2) as isize - k as isize,
        Padding::Causal => t as isize - k as isize,
    };
    (src >= 0 && (src as usize) < len).then_some(src as usize)
}

/// Unfolds `x` (seq × channels) into (seq × width·channels) so that a
/// convolution becomes one matmul against a (width·channels × out) kernel.
pub fn im2col(x: &Tensor2, width: usize, padding: Padding) -> Tensor2 {
    let (len, ch) = x.shape();
    let mut out = Tensor2::zeros(len, width * ch);
    for t in 0..len {
        for k in 0..width {
            if let Some(src) = conv_source(t, k, width, len, padding) {
                out.row_mut(t)[k * ch..(k + 1) * ch].copy_from_slice(x.row(src));
            }
        }
    }
    out
}

/// Rows `[lo, hi]` (inclusive) pooled at output row `t`.
#[inline]
pub fn pool_window(t: usize, range: usize, len: usize, padding: Padding) -> (usize, usize) {
    match padding {
        Padding::Centered => {
            let half = range / 2;
            (t.saturating_sub(half), (t + half).min(len - 1))
        }
        Padding::Causal => (t.saturating_sub(range - 1), t),
    }
}

/// Stride-1 max pooling along the sequence. Returns values and argmax rows.
pub fn max_pool(x: &Tensor2, range: usize, padding: Padding) -> (Tensor2, Vec<usize>) {
    let (len, ch) = x.shape();
    let mut out = Tensor2::zeros(len, ch);
    let mut argmax = vec![0; len * ch];
    for t in 0..len {
        let (lo, hi) = pool_window(t, range, len, padding);
        for c in 0..ch {
            let mut best = lo;
            for s in lo + 1..=hi {
                if x.get(s, c) > x.get(best, c) {
                    best = s;
                }
            }
            out.set(t, c, x.get(best, c));
            argmax[t * ch + c] = best;
        }
    }
    (out, argmax)
}

/// Row-wise layer normalisation. Returns output, normalised input and 1/σ per row.
pub fn layer_norm_rows(
    x: &Tensor2,
    gamma: &[f64],
    beta: &[f64],
    epsilon: f64,
) -> (Tensor2, Tensor2, Vec<f64>) {
    let (rows, cols) = x.shape();
    let mut out = Tensor2::zeros(rows, cols);
    let mut xhat = Tensor2::zeros(rows, cols);
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let is = 1.0 / (var + epsilon).sqrt();
        inv_std.push(is);
        for c in 0..cols {
            let h = (row[c] - mean) * is;
            xhat.set(r, c, h);
            out.set(r, c, gamma[c] * h + beta[c]);
        }
    }
    (out, xhat, inv_std)
}

/// Row-wise softmax; with `causal`, entries above the diagonal get weight 0.
pub fn softmax_rows(x: &Tensor2, causal: bool) -> Tensor2 {
    let (rows, cols) = x.shape();
    let mut out = Tensor2::zeros(rows, cols);
    for r in 0..rows {
        let visible = if causal { (r + 1).min(cols) } else { cols };
        let row = &x.row(r)[..visible];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (c, v) in row.iter().enumerate() {
            let e = (v - max).exp();
            out.set(r, c, e);
            total += e;
        }
        for v in &mut out.row_mut(r)[..visible] {
            *v /= total;
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `γ ⊙ (x − mean) / √(var + ε) + β` with population variance.
pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if x.is_empty() || gamma.len() != x.len() || beta.len() != x.len() {
        return Err(Error::Shape(format!(
            "layer norm over {} values with γ {} and β {}",
            x.len(),
            gamma.len(),
            beta.len()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config("layer norm epsilon must be positive".into()));
    }
    let t = Tensor2::row_vector(x)?;
    Ok(layer_norm_rows(&t, gamma, beta, epsilon).0.into_vec())
}

/// `F(x) + x`
pub fn residual_wrap(sublayer_output: &[f64], sublayer_input: &[f64]) -> Result<Vec<f64>> {
    if sublayer_output.len() != sublayer_input.len() {
        return Err(Error::Shape(format!(
            "residual over {} and {} values",
            sublayer_output.len(),
            sublayer_input.len()
        )));
    }
    Ok(sublayer_output
        .iter()
        .zip(sublayer_input)
        .map(|(f, x)| f + x)
        .collect())
}

/// Convolution kernel for [`conv_pool_forward`]: `weight` is
/// (width·in_channels × out_channels), tap-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub weight: Tensor2,
    pub bias: Vec<f64>,
    pub width: usize,
}

impl ConvKernel {
    pub fn new(weight: Tensor2, bias: Vec<f64>, width: usize) -> Result<Self> {
        check_odd("kernel width", width)?;
        if weight.rows() % width != 0 || bias.len() != weight.cols() {
            return Err(Error::Shape(format!(
                "kernel {}x{} with width {width} and {} biases",
                weight.rows(),
                weight.cols(),
                bias.len()
            )));
        }
        Ok(Self {
            weight,
            bias,
            width,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.rows() / self.width
    }
}

pub(crate) fn check_odd(what: &str, n: usize) -> Result<()> {
    if n == 0 || n % 2 == 0 {
        return Err(Error::Config(format!("{what} must be odd, got {n}")));
    }
    Ok(())
}

/// Length-preserving convolution + activation + stride-1 max pooling.
pub fn conv_pool_forward(
    x: &Tensor2,
    kernel: &ConvKernel,
    activation: Activation,
    pool_range: usize,
    padding: Padding,
) -> Result<Tensor2> {
    check_odd("pool range", pool_range)?;
    if x.cols() != kernel.in_channels() {
        return Err(Error::Shape(format!(
            "{} input channels for a kernel expecting {}",
            x.cols(),
            kernel.in_channels()
        )));
    }
    let mut conv = im2col(x, kernel.width, padding).matmul(&kernel.weight)?;
    for r in 0..conv.rows() {
        for (v, b) in conv.row_mut(r).iter_mut().zip(&kernel.bias) {
            *v += b;
            if activation == Activation::Relu {
                *v = v.max(0.0);
            }
        }
    }
    Ok(max_pool(&conv, pool_range, padding).0)
}
