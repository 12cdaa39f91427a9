use ndarray::{ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Conv1dLayer, ConvCache, DenseLayer};
use super::{relu_backward, relu_forward, ModelError, Result, Tensor, TrainState};
use crate::dataset::WindowedDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub activation: Activation,
}

/// Architecture description. Convolutions run over time with ROIs as input
/// channels; the flattened feature map feeds a stack of dense layers with
/// ReLU between them and a linear final layer of width 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub window_size: usize,
    pub n_rois: usize,
    pub conv_specs: Vec<ConvSpec>,
    pub head: Vec<usize>,
    pub seed: u64,
}

impl ModelConfig {
    /// conv(k7, s1, 32) -> relu -> conv(k5, s2, 16) -> relu -> flatten ->
    /// dense(64) -> relu -> dense(1).
    pub fn default_architecture(window_size: usize, n_rois: usize) -> Self {
        Self {
            window_size,
            n_rois,
            conv_specs: vec![
                ConvSpec {
                    out_channels: 32,
                    kernel_size: 7,
                    stride: 1,
                    activation: Activation::Relu,
                },
                ConvSpec {
                    out_channels: 16,
                    kernel_size: 5,
                    stride: 2,
                    activation: Activation::Relu,
                },
            ],
            head: vec![64, 1],
            seed: 0,
        }
    }

    /// One conv(k3, 2 channels) and one dense output; for gradient checks.
    pub fn tiny(window_size: usize, n_rois: usize) -> Self {
        Self {
            window_size,
            n_rois,
            conv_specs: vec![ConvSpec {
                out_channels: 2,
                kernel_size: 3,
                stride: 1,
                activation: Activation::Relu,
            }],
            head: vec![1],
            seed: 0,
        }
    }

    /// Time length after each convolution.
    pub fn conv_lengths(&self) -> Result<Vec<usize>> {
        if self.window_size == 0 || self.n_rois == 0 {
            return Err(ModelError::InvalidConfig(
                "window_size and n_rois must be positive".into(),
            ));
        }
        let mut len = self.window_size;
        let mut out = Vec::with_capacity(self.conv_specs.len());
        for (i, s) in self.conv_specs.iter().enumerate() {
            if s.out_channels == 0 || s.kernel_size == 0 || s.stride == 0 {
                return Err(ModelError::InvalidConfig(format!(
                    "conv layer {i} has a zero dimension"
                )));
            }
            if s.kernel_size > len {
                return Err(ModelError::InvalidConfig(format!(
                    "conv layer {i}: kernel {} exceeds remaining length {len}",
                    s.kernel_size
                )));
            }
            len = (len - s.kernel_size) / s.stride + 1;
            out.push(len);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.conv_lengths()?;
        match self.head.last() {
            Some(1) => {}
            _ => {
                return Err(ModelError::InvalidConfig(
                    "dense head must end in a single output".into(),
                ))
            }
        }
        if self.head.contains(&0) {
            return Err(ModelError::InvalidConfig("dense layer of width 0".into()));
        }
        Ok(())
    }

    pub fn flat_features(&self) -> Result<usize> {
        let lens = self.conv_lengths()?;
        Ok(match (lens.last(), self.conv_specs.last()) {
            (Some(&l), Some(s)) => l * s.out_channels,
            _ => self.window_size * self.n_rois,
        })
    }

    pub fn n_parameters(&self) -> Result<usize> {
        Ok(Network::new(self)?.params().iter().map(|p| p.len()).sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv1dLayer),
    Dense(DenseLayer),
    Relu,
    Flatten,
}

pub(crate) enum Cache {
    Conv(ConvCache),
    Dense(Tensor),
    Relu(Tensor),
    Flatten(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: ModelConfig,
    pub layers: Vec<Layer>,
}

impl Network {
    /// Zero-initialised network for `config`.
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::new();
        let mut channels = config.n_rois;
        for s in &config.conv_specs {
            layers.push(Layer::Conv(Conv1dLayer::new(
                channels,
                s.out_channels,
                s.kernel_size,
                s.stride,
            )?));
            if s.activation == Activation::Relu {
                layers.push(Layer::Relu);
            }
            channels = s.out_channels;
        }
        layers.push(Layer::Flatten);
        let mut width = config.flat_features()?;
        for (i, &h) in config.head.iter().enumerate() {
            layers.push(Layer::Dense(DenseLayer::new(width, h)?));
            if i + 1 < config.head.len() {
                layers.push(Layer::Relu);
            }
            width = h;
        }
        Ok(Self {
            config: config.clone(),
            layers,
        })
    }

    /// Parameter tensors in a fixed order: for each conv/dense layer, its
    /// weights then its bias.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Conv(c) => out.extend([&c.weights, &c.bias]),
                Layer::Dense(d) => out.extend([&d.weights, &d.bias]),
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv(c) => out.extend([&mut c.weights, &mut c.bias]),
                Layer::Dense(d) => out.extend([&mut d.weights, &mut d.bias]),
                _ => {}
            }
        }
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let kind = match l {
                Layer::Conv(_) => "conv",
                Layer::Dense(_) => "dense",
                _ => continue,
            };
            out.push(format!("{i}.{kind}.weights"));
            out.push(format!("{i}.{kind}.bias"));
        }
        out
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let (c, l) = match *input.shape() {
            [c, l] | [_, c, l] => (c, l),
            ref s => {
                return Err(ModelError::ShapeMismatch(format!(
                    "model input must be [rois x window] or [batch x rois x window], got {s:?}"
                )))
            }
        };
        if c != self.config.n_rois || l != self.config.window_size {
            return Err(ModelError::ShapeMismatch(format!(
                "model expects {} ROIs x {} volumes, got {c} x {l}",
                self.config.n_rois, self.config.window_size
            )));
        }
        Ok(())
    }

    /// Output has shape `[1]` for a single `[rois x window]` input and
    /// `[batch]` for a batch.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for l in &self.layers {
            x = match l {
                Layer::Conv(c) => c.forward(&x)?,
                Layer::Dense(d) => d.forward(&x)?,
                Layer::Relu => relu_forward(&x),
                Layer::Flatten => flatten(x)?,
            };
        }
        let n = x.len();
        x.reshape(vec![n])
    }

    pub(crate) fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, Vec<Cache>)> {
        self.check_input(input)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for l in &self.layers {
            x = match l {
                Layer::Conv(c) => {
                    let (y, cache) = c.forward_cached(&x)?;
                    caches.push(Cache::Conv(cache));
                    y
                }
                Layer::Dense(d) => {
                    let y = d.forward(&x)?;
                    caches.push(Cache::Dense(x));
                    y
                }
                Layer::Relu => {
                    let y = relu_forward(&x);
                    caches.push(Cache::Relu(x));
                    y
                }
                Layer::Flatten => {
                    caches.push(Cache::Flatten(x.shape().to_vec()));
                    flatten(x)?
                }
            };
        }
        let n = x.len();
        Ok((x.reshape(vec![n])?, caches))
    }

    /// Parameter gradients (in [`Network::params`] order) given the gradient
    /// of the loss with respect to the output of [`Network::forward_cached`].
    pub(crate) fn backward(&self, caches: &[Cache], grad_out: &[f64]) -> Result<Vec<Tensor>> {
        let mut grads_rev: Vec<Tensor> = Vec::new();
        let Some(Cache::Dense(last_in)) = caches.last() else {
            return Err(ModelError::InvalidConfig(
                "network must end in a dense layer".into(),
            ));
        };
        let out_shape = match last_in.shape() {
            [_] => vec![1],
            [b, _] => vec![*b, 1],
            s => {
                return Err(ModelError::ShapeMismatch(format!(
                    "unexpected head input {s:?}"
                )))
            }
        };
        let mut g = Tensor::new(out_shape, grad_out.to_vec())?;
        for (i, (l, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            g = match (l, cache) {
                (Layer::Conv(c), Cache::Conv(cc)) => {
                    let (gi, gw, gb) = c.backward_cached(cc, &g, i > 0)?;
                    grads_rev.push(gb);
                    grads_rev.push(gw);
                    match gi {
                        Some(gi) => gi,
                        None => break,
                    }
                }
                (Layer::Dense(d), Cache::Dense(x)) => {
                    let gr = d.backward(x, &g)?;
                    grads_rev.push(gr.bias);
                    grads_rev.push(gr.weights);
                    gr.input
                }
                (Layer::Relu, Cache::Relu(x)) => relu_backward(x, &g)?,
                (Layer::Flatten, Cache::Flatten(shape)) => g.reshape(shape.clone())?,
                _ => unreachable!("cache kinds follow layer kinds"),
            };
        }
        grads_rev.reverse();
        Ok(grads_rev)
    }

    /// Loss and parameter gradients of MSE on one batch.
    pub fn loss_and_grads(&self, input: &Tensor, target: &[f64]) -> Result<(f64, Vec<Tensor>)> {
        let (pred, caches) = self.forward_cached(input)?;
        let (loss, g) = super::mse_loss(pred.data(), target)?;
        Ok((loss, self.backward(&caches, &g)?))
    }
}

/// Keeps a leading batch axis when the input has one.
fn flatten(x: Tensor) -> Result<Tensor> {
    let shape = match *x.shape() {
        [c, l] => vec![c * l],
        [b, c, l] => vec![b, c * l],
        [_] => return Ok(x),
        ref s => return Err(ModelError::ShapeMismatch(format!("cannot flatten {s:?}"))),
    };
    x.reshape(shape)
}

/// Glorot-uniform weights and zero biases. Each parameterised layer draws
/// from its own ChaCha stream, so inserting a layer leaves the earlier ones
/// unchanged.
pub fn init_parameters(config: &ModelConfig, seed: u64) -> Result<TrainState> {
    let mut net = Network::new(config)?;
    let mut ordinal = 0u64;
    for l in &mut net.layers {
        let (w, fan_in, fan_out) = match l {
            Layer::Conv(c) => (
                &mut c.weights,
                c.in_channels * c.kernel_size,
                c.out_channels * c.kernel_size,
            ),
            Layer::Dense(d) => (&mut d.weights, d.in_features, d.out_features),
            _ => continue,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ordinal);
        ordinal += 1;
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in w.data_mut() {
            *v = rng.gen_range(-limit..limit);
        }
    }
    Ok(TrainState::new(net))
}

/// Packs windows of `data` (`[volumes x rois]`) starting at `starts` into a
/// `[batch x rois x window]` tensor.
pub(crate) fn pack_windows(data: ArrayView2<'_, f64>, starts: &[usize], window: usize) -> Tensor {
    let rois = data.ncols();
    let mut out = vec![0.0; starts.len() * rois * window];
    for (b, &s) in starts.iter().enumerate() {
        let block = data.slice_axis(Axis(0), (s..s + window).into());
        fill_transposed(block, &mut out[b * rois * window..][..rois * window]);
    }
    Tensor::new(vec![starts.len(), rois, window], out).expect("sized above")
}

fn fill_transposed(block: ArrayView2<'_, f64>, dst: &mut [f64]) {
    let window = block.nrows();
    for ((t, r), &v) in block.indexed_iter() {
        dst[r * window + t] = v;
    }
}

/// Inputs of examples `idx` as a `[batch x rois x window]` tensor.
pub fn batch_input(ds: &WindowedDataset, idx: &[usize]) -> Tensor {
    let (rois, window) = (ds.n_rois(), ds.window_size());
    let mut out = vec![0.0; idx.len() * rois * window];
    for (b, &i) in idx.iter().enumerate() {
        fill_transposed(ds.input(i), &mut out[b * rois * window..][..rois * window]);
    }
    Tensor::new(vec![idx.len(), rois, window], out).expect("sized above")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture_shapes() {
        let cfg = ModelConfig::default_architecture(64, 90);
        assert_eq!(cfg.conv_lengths().unwrap(), vec![58, 27]);
        assert_eq!(cfg.flat_features().unwrap(), 27 * 16);
        let st = init_parameters(&cfg, 1).unwrap();
        let y = st.network.forward(&Tensor::zeros(vec![90, 64])).unwrap();
        assert_eq!(y.shape(), &[1]);
        let y = st.network.forward(&Tensor::zeros(vec![3, 90, 64])).unwrap();
        assert_eq!(y.shape(), &[3]);
    }

    #[test]
    fn kernel_too_long_is_invalid() {
        let mut cfg = ModelConfig::default_architecture(8, 3);
        cfg.conv_specs[0].kernel_size = 9;
        assert!(matches!(
            init_parameters(&cfg, 0),
            Err(ModelError::InvalidConfig(_))
        ));
        let cfg = ModelConfig::default_architecture(10, 3);
        // 10 -> 4 after k7, then k5 does not fit.
        assert!(matches!(cfg.validate(), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn head_must_end_in_one() {
        let mut cfg = ModelConfig::tiny(8, 3);
        cfg.head = vec![4, 2];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = ModelConfig::default_architecture(16, 4);
        let a = init_parameters(&cfg, 9).unwrap();
        let b = init_parameters(&cfg, 9).unwrap();
        let c = init_parameters(&cfg, 10).unwrap();
        assert_eq!(a.network, b.network);
        assert_ne!(a.network, c.network);
        let limit = (6.0f64 / (4.0 * 7.0 + 32.0 * 7.0)).sqrt();
        assert!(a.network.params()[0]
            .data()
            .iter()
            .all(|v| v.abs() <= limit));
        assert!(a.network.params()[1].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adding_a_layer_keeps_earlier_init() {
        let cfg = ModelConfig::default_architecture(32, 4);
        let mut deeper = cfg.clone();
        deeper.conv_specs.push(ConvSpec {
            out_channels: 8,
            kernel_size: 3,
            stride: 1,
            activation: Activation::Relu,
        });
        let a = init_parameters(&cfg, 3).unwrap();
        let b = init_parameters(&deeper, 3).unwrap();
        assert_eq!(a.network.params()[0], b.network.params()[0]);
        assert_eq!(a.network.params()[2], b.network.params()[2]);
    }

    #[test]
    fn wrong_roi_count_is_shape_mismatch() {
        let st = init_parameters(&ModelConfig::tiny(8, 3), 0).unwrap();
        assert!(matches!(
            st.network.forward(&Tensor::zeros(vec![4, 8])),
            Err(ModelError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ModelConfig::default_architecture(64, 90);
        let s = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), cfg);
    }
}
