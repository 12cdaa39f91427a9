//! Layer primitives: valid 1D convolution, dense, ReLU.
//!
//! Layers accept a single example (`[C x L]` for convolution, `[F]` for
//! dense) or a batch with a leading batch axis; outputs keep the same rank.

use ndarray::{Array2, ArrayView2, Axis};

use super::{ModelError, Result, Tensor};

/// GEMM outputs may come back column-major when both operands are also
/// column-contiguous (e.g. a single row); everything here assumes row-major.
fn row_major(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    /// `[out_channels x in_channels x kernel_size]`
    pub weights: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug)]
pub(crate) struct ConvCache {
    /// `[in_channels * kernel x batch * out_len]`
    cols: Array2<f64>,
    batch: usize,
    in_len: usize,
    out_len: usize,
    batched: bool,
}

impl Conv1dLayer {
    /// Zero-initialised layer.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel_size == 0 || stride == 0 {
            return Err(ModelError::InvalidConfig(format!(
                "conv dims must be positive: in {in_channels}, out {out_channels}, k {kernel_size}, s {stride}"
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            weights: Tensor::zeros(vec![out_channels, in_channels, kernel_size]),
            bias: Tensor::zeros(vec![out_channels]),
        })
    }

    pub fn with_params(mut self, weights: Tensor, bias: Tensor) -> Result<Self> {
        if weights.shape() != self.weights.shape() || bias.shape() != self.bias.shape() {
            return Err(ModelError::ShapeMismatch(format!(
                "conv params {:?}/{:?}, expected {:?}/{:?}",
                weights.shape(),
                bias.shape(),
                self.weights.shape(),
                self.bias.shape()
            )));
        }
        self.weights = weights;
        self.bias = bias;
        Ok(self)
    }

    /// `floor((in_len - kernel) / stride) + 1`, or `None` if the kernel does
    /// not fit.
    pub fn out_len(&self, in_len: usize) -> Option<usize> {
        (in_len >= self.kernel_size).then(|| (in_len - self.kernel_size) / self.stride + 1)
    }

    fn input_dims(&self, input: &Tensor) -> Result<(usize, usize, usize, bool)> {
        let (batch, c, len, batched) = match *input.shape() {
            [c, l] => (1, c, l, false),
            [b, c, l] => (b, c, l, true),
            ref s => {
                return Err(ModelError::ShapeMismatch(format!(
                    "conv input must be [C x L] or [B x C x L], got {s:?}"
                )))
            }
        };
        if c != self.in_channels {
            return Err(ModelError::ShapeMismatch(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let out_len = self.out_len(len).ok_or_else(|| {
            ModelError::ShapeMismatch(format!(
                "input length {len} shorter than kernel {}",
                self.kernel_size
            ))
        })?;
        Ok((batch, len, out_len, batched))
    }

    fn weight_matrix(&self) -> ArrayView2<'_, f64> {
        self.weights.as_matrix(self.out_channels)
    }

    fn im2col(&self, x: &[f64], batch: usize, in_len: usize, out_len: usize) -> Array2<f64> {
        let (ci, k, s) = (self.in_channels, self.kernel_size, self.stride);
        let ncols = batch * out_len;
        let mut cols = Array2::<f64>::zeros((ci * k, ncols));
        let cs = cols.as_slice_mut().expect("standard layout");
        for b in 0..batch {
            for c in 0..ci {
                let xrow = &x[(b * ci + c) * in_len..][..in_len];
                for kk in 0..k {
                    let dst = &mut cs[(c * k + kk) * ncols + b * out_len..][..out_len];
                    if s == 1 {
                        dst.copy_from_slice(&xrow[kk..kk + out_len]);
                    } else {
                        for (t, d) in dst.iter_mut().enumerate() {
                            *d = xrow[t * s + kk];
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.forward_cached(input).map(|(y, _)| y)
    }

    pub(crate) fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, ConvCache)> {
        let (batch, in_len, out_len, batched) = self.input_dims(input)?;
        let cols = self.im2col(input.data(), batch, in_len, out_len);
        let y = row_major(self.weight_matrix().dot(&cols));
        let co = self.out_channels;
        let mut out = vec![0.0; batch * co * out_len];
        let ys = y.as_slice().expect("standard layout");
        let ncols = batch * out_len;
        for o in 0..co {
            let bias = self.bias.data()[o];
            for b in 0..batch {
                let src = &ys[o * ncols + b * out_len..][..out_len];
                let dst = &mut out[(b * co + o) * out_len..][..out_len];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s + bias;
                }
            }
        }
        let shape = if batched {
            vec![batch, co, out_len]
        } else {
            vec![co, out_len]
        };
        let cache = ConvCache {
            cols,
            batch,
            in_len,
            out_len,
            batched,
        };
        Ok((Tensor::new(shape, out)?, cache))
    }

    /// Exact gradients of the forward map for upstream gradient `grad_out`.
    pub fn backward(&self, input: &Tensor, grad_out: &Tensor) -> Result<ConvGrads> {
        let (_, cache) = self.forward_cached(input)?;
        let (gi, gw, gb) = self.backward_cached(&cache, grad_out, true)?;
        Ok(ConvGrads {
            input: gi.expect("requested"),
            weights: gw,
            bias: gb,
        })
    }

    pub(crate) fn backward_cached(
        &self,
        cache: &ConvCache,
        grad_out: &Tensor,
        need_input: bool,
    ) -> Result<(Option<Tensor>, Tensor, Tensor)> {
        let (batch, out_len) = (cache.batch, cache.out_len);
        let co = self.out_channels;
        let expected: Vec<usize> = if cache.batched {
            vec![batch, co, out_len]
        } else {
            vec![co, out_len]
        };
        if grad_out.shape() != expected.as_slice() {
            return Err(ModelError::ShapeMismatch(format!(
                "conv grad_out {:?}, expected {expected:?}",
                grad_out.shape()
            )));
        }
        let ncols = batch * out_len;
        let mut g2 = Array2::<f64>::zeros((co, ncols));
        {
            let gs = g2.as_slice_mut().expect("standard layout");
            let go = grad_out.data();
            for b in 0..batch {
                for o in 0..co {
                    gs[o * ncols + b * out_len..][..out_len]
                        .copy_from_slice(&go[(b * co + o) * out_len..][..out_len]);
                }
            }
        }
        let gw = row_major(g2.dot(&cache.cols.t()));
        let gb: Vec<f64> = g2.sum_axis(Axis(1)).to_vec();
        let grad_w = Tensor::new(
            vec![co, self.in_channels, self.kernel_size],
            gw.into_raw_vec(),
        )?;
        let grad_b = Tensor::vector(gb);

        let grad_in = if need_input {
            let gcols = row_major(self.weight_matrix().t().dot(&g2));
            let (ci, k, s, in_len) = (
                self.in_channels,
                self.kernel_size,
                self.stride,
                cache.in_len,
            );
            let mut gx = vec![0.0; batch * ci * in_len];
            for c in 0..ci {
                for kk in 0..k {
                    let row = gcols.row(c * k + kk);
                    let row = row.as_slice().expect("row-major");
                    for b in 0..batch {
                        let src = &row[b * out_len..][..out_len];
                        let dst = &mut gx[(b * ci + c) * in_len..][..in_len];
                        for (t, v) in src.iter().enumerate() {
                            dst[t * s + kk] += v;
                        }
                    }
                }
            }
            let shape = if cache.batched {
                vec![batch, ci, in_len]
            } else {
                vec![ci, in_len]
            };
            Some(Tensor::new(shape, gx)?)
        } else {
            None
        };
        Ok((grad_in, grad_w, grad_b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out_features x in_features]`
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn new(in_features: usize, out_features: usize) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(ModelError::InvalidConfig(format!(
                "dense dims must be positive: {in_features} -> {out_features}"
            )));
        }
        Ok(Self {
            in_features,
            out_features,
            weights: Tensor::zeros(vec![out_features, in_features]),
            bias: Tensor::zeros(vec![out_features]),
        })
    }

    pub fn with_params(mut self, weights: Tensor, bias: Tensor) -> Result<Self> {
        if weights.shape() != self.weights.shape() || bias.shape() != self.bias.shape() {
            return Err(ModelError::ShapeMismatch(format!(
                "dense params {:?}/{:?}, expected {:?}/{:?}",
                weights.shape(),
                bias.shape(),
                self.weights.shape(),
                self.bias.shape()
            )));
        }
        self.weights = weights;
        self.bias = bias;
        Ok(self)
    }

    fn input_dims(&self, input: &Tensor) -> Result<(usize, bool)> {
        let (batch, f, batched) = match *input.shape() {
            [f] => (1, f, false),
            [b, f] => (b, f, true),
            ref s => {
                return Err(ModelError::ShapeMismatch(format!(
                    "dense input must be [F] or [B x F], got {s:?}"
                )))
            }
        };
        if f != self.in_features {
            return Err(ModelError::ShapeMismatch(format!(
                "dense expects {} features, got {f}",
                self.in_features
            )));
        }
        Ok((batch, batched))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (batch, batched) = self.input_dims(input)?;
        let x = input.as_matrix(batch);
        let w = self.weights.as_matrix(self.out_features);
        let mut y = row_major(x.dot(&w.t()));
        for mut row in y.rows_mut() {
            for (v, b) in row.iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        let shape = if batched {
            vec![batch, self.out_features]
        } else {
            vec![self.out_features]
        };
        Tensor::new(shape, y.into_raw_vec())
    }

    pub fn backward(&self, input: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
        let (batch, batched) = self.input_dims(input)?;
        let expected: Vec<usize> = if batched {
            vec![batch, self.out_features]
        } else {
            vec![self.out_features]
        };
        if grad_out.shape() != expected.as_slice() {
            return Err(ModelError::ShapeMismatch(format!(
                "dense grad_out {:?}, expected {expected:?}",
                grad_out.shape()
            )));
        }
        let x = input.as_matrix(batch);
        let g = grad_out.as_matrix(batch);
        let w = self.weights.as_matrix(self.out_features);
        let gw = row_major(g.t().dot(&x));
        let gb = g.sum_axis(Axis(0));
        let gx = row_major(g.dot(&w));
        Ok(DenseGrads {
            input: Tensor::new(input.shape().to_vec(), gx.into_raw_vec())?,
            weights: Tensor::new(vec![self.out_features, self.in_features], gw.into_raw_vec())?,
            bias: Tensor::vector(gb.to_vec()),
        })
    }
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// Passes `grad_out` where the forward input was positive.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(ModelError::ShapeMismatch(format!(
            "relu input {:?} vs grad {:?}",
            input.shape(),
            grad_out.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}
