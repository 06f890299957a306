//! Model assembly: layer specs with static shape checking, parameter
//! initialisation, and the forward/backward passes over the whole stack.

use serde::{Deserialize, Serialize};

use super::layers::{self, ConvCfg};
use super::tensor::{ComponentLayout, ParamTensor, ReshapeRule, Tensor};
use super::NnError;
use crate::rng::{self, SeedStream};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    BatchNorm2d,
    Relu,
    Flatten,
    Dense {
        out_features: usize,
    },
}

/// Ordered layer descriptors plus the input shape; shapes compose or
/// construction fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// (channels, height, width)
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

/// Shape of the value flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flow {
    Image { ch: usize, h: usize, w: usize },
    Flat { features: usize },
}

impl ModelSpec {
    /// Three stride-2 3x3 conv blocks (3→32→32→32), batch-norm and ReLU
    /// after each, then a 512→10 classifier. 24,714 parameters on 3×32×32
    /// input.
    pub fn basic_cnn() -> Self {
        let conv = |out_ch| LayerSpec::Conv2d {
            out_ch,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        Self {
            name: "basiccnn".into(),
            input: (3, 32, 32),
            layers: vec![
                conv(32),
                LayerSpec::BatchNorm2d,
                LayerSpec::Relu,
                conv(32),
                LayerSpec::BatchNorm2d,
                LayerSpec::Relu,
                conv(32),
                LayerSpec::BatchNorm2d,
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 10 },
            ],
        }
    }

    /// Flatten plus a single dense layer: the linear probe.
    pub fn dense_probe(input: (usize, usize, usize), classes: usize) -> Self {
        Self {
            name: "dense-probe".into(),
            input,
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { out_features: classes }],
        }
    }

    pub fn by_name(name: &str) -> Result<Self, NnError> {
        match name {
            "basiccnn" => Ok(Self::basic_cnn()),
            "dense-probe" => Ok(Self::dense_probe((3, 32, 32), 10)),
            other => Err(NnError::InvalidSpec(format!("unknown model '{other}'"))),
        }
    }

    /// Total trainable parameter count, computed from the layer
    /// descriptors without building the model.
    pub fn param_count(&self) -> Result<usize, NnError> {
        let mut flow = Flow::Image {
            ch: self.input.0,
            h: self.input.1,
            w: self.input.2,
        };
        let mut count = 0usize;
        for (i, layer) in self.layers.iter().enumerate() {
            flow = step_shape(flow, layer, i)?;
            count += match (layer, flow) {
                (LayerSpec::Conv2d { out_ch, kernel, .. }, _) => {
                    // weight + bias; in_ch reconstructed below
                    let in_ch = match prev_shape(self, i)? {
                        Flow::Image { ch, .. } => ch,
                        Flow::Flat { .. } => unreachable!("validated"),
                    };
                    out_ch * in_ch * kernel * kernel + out_ch
                }
                (LayerSpec::BatchNorm2d, Flow::Image { ch, .. }) => 2 * ch,
                (LayerSpec::Dense { out_features }, _) => {
                    let f_in = match prev_shape(self, i)? {
                        Flow::Flat { features } => features,
                        Flow::Image { .. } => unreachable!("validated"),
                    };
                    f_in * out_features + out_features
                }
                _ => 0,
            };
        }
        Ok(count)
    }
}

fn prev_shape(spec: &ModelSpec, layer_idx: usize) -> Result<Flow, NnError> {
    let mut flow = Flow::Image {
        ch: spec.input.0,
        h: spec.input.1,
        w: spec.input.2,
    };
    for (i, layer) in spec.layers.iter().take(layer_idx).enumerate() {
        flow = step_shape(flow, layer, i)?;
    }
    Ok(flow)
}

fn step_shape(flow: Flow, layer: &LayerSpec, idx: usize) -> Result<Flow, NnError> {
    match (layer, flow) {
        (
            LayerSpec::Conv2d {
                out_ch,
                kernel,
                stride,
                pad,
            },
            Flow::Image { h, w, .. },
        ) => {
            if h + 2 * pad < *kernel || w + 2 * pad < *kernel || *stride == 0 {
                return Err(NnError::InvalidSpec(format!(
                    "layer {idx}: conv {kernel}x{kernel}/{stride} does not fit {h}x{w} input"
                )));
            }
            let oh = (h + 2 * pad - kernel) / stride + 1;
            let ow = (w + 2 * pad - kernel) / stride + 1;
            Ok(Flow::Image {
                ch: *out_ch,
                h: oh,
                w: ow,
            })
        }
        (LayerSpec::BatchNorm2d, f @ Flow::Image { .. }) => Ok(f),
        (LayerSpec::Relu, f) => Ok(f),
        (LayerSpec::Flatten, Flow::Image { ch, h, w }) => Ok(Flow::Flat { features: ch * h * w }),
        (LayerSpec::Flatten, f @ Flow::Flat { .. }) => Ok(f),
        (LayerSpec::Dense { out_features }, Flow::Flat { .. }) => Ok(Flow::Flat {
            features: *out_features,
        }),
        (l, f) => Err(NnError::InvalidSpec(format!(
            "layer {idx}: {l:?} cannot follow {f:?}"
        ))),
    }
}

#[derive(Debug, Clone)]
enum Layer {
    Conv2d {
        cfg: ConvCfg,
        h: usize,
        w: usize,
        weight: usize,
        bias: usize,
    },
    BatchNorm2d {
        channels: usize,
        spatial: usize,
        eps: f64,
        momentum: f64,
        gamma: usize,
        beta: usize,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
    Relu,
    Flatten {
        features: usize,
    },
    Dense {
        f_in: usize,
        f_out: usize,
        weight: usize,
        bias: usize,
    },
}

/// Forward pass semantics for batch-norm statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running statistics updated.
    Train,
    /// Batch statistics, running statistics left untouched (diagnostics).
    Probe,
    /// Running statistics only.
    Eval,
}

/// Per-layer batch-norm cache kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

/// Everything the backward pass and the diagnostics need from a forward.
#[derive(Debug)]
pub struct Forward<T> {
    outputs: Vec<Tensor<T>>,
    bn_caches: Vec<Option<BnCache>>,
    batch: usize,
}

impl<T: Real> Forward<T> {
    pub fn logits(&self) -> &Tensor<T> {
        self.outputs.last().expect("at least one layer")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self, layer: usize) -> &Tensor<T> {
        &self.outputs[layer]
    }
}

/// Activation snapshot for one component layer: shape (batch, N, spatial..).
#[derive(Debug, Clone, Copy)]
pub struct LayerActivation<'a, T> {
    pub layer: usize,
    pub tensor: &'a Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    spec: ModelSpec,
    layers: Vec<Layer>,
    pub params: Vec<ParamTensor<T>>,
    /// Layer indices whose outputs are the per-component representations
    /// (the output of each ReLU block).
    tracked: Vec<usize>,
}

impl<T: Real> Model<T> {
    /// Build a model with zeroed parameters; shapes are validated here.
    pub fn new(spec: ModelSpec) -> Result<Self, NnError> {
        let mut flow = Flow::Image {
            ch: spec.input.0,
            h: spec.input.1,
            w: spec.input.2,
        };
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut params: Vec<ParamTensor<T>> = Vec::new();
        let mut tracked = Vec::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            let in_flow = flow;
            flow = step_shape(flow, layer, i)?;
            match (layer, in_flow) {
                (
                    LayerSpec::Conv2d {
                        out_ch,
                        kernel,
                        stride,
                        pad,
                    },
                    Flow::Image { ch, h, w },
                ) => {
                    let cfg = ConvCfg {
                        in_ch: ch,
                        out_ch: *out_ch,
                        kernel: *kernel,
                        stride: *stride,
                        pad: *pad,
                    };
                    let p = cfg.patch_len();
                    let weight = params.len();
                    params.push(ParamTensor::new(
                        format!("conv{i}.weight"),
                        &[*out_ch, ch, *kernel, *kernel],
                        Some(ReshapeRule {
                            p,
                            n: *out_ch,
                            layout: ComponentLayout::FilterRows,
                        }),
                        false,
                    ));
                    let bias = params.len();
                    params.push(ParamTensor::new(format!("conv{i}.bias"), &[*out_ch], None, false));
                    layers.push(Layer::Conv2d {
                        cfg,
                        h,
                        w,
                        weight,
                        bias,
                    });
                }
                (LayerSpec::BatchNorm2d, Flow::Image { ch, h, w }) => {
                    let gamma = params.len();
                    params.push(ParamTensor::new(format!("bn{i}.gamma"), &[ch], None, false));
                    let beta = params.len();
                    params.push(ParamTensor::new(format!("bn{i}.beta"), &[ch], None, false));
                    layers.push(Layer::BatchNorm2d {
                        channels: ch,
                        spatial: h * w,
                        eps: 1e-5,
                        momentum: 0.1,
                        gamma,
                        beta,
                        running_mean: vec![0.0; ch],
                        running_var: vec![1.0; ch],
                    });
                }
                (LayerSpec::Relu, _) => {
                    layers.push(Layer::Relu);
                    tracked.push(i);
                }
                (LayerSpec::Flatten, Flow::Image { ch, h, w }) => {
                    layers.push(Layer::Flatten { features: ch * h * w });
                }
                (LayerSpec::Flatten, Flow::Flat { features }) => {
                    layers.push(Layer::Flatten { features });
                }
                (LayerSpec::Dense { out_features }, Flow::Flat { features }) => {
                    let weight = params.len();
                    params.push(ParamTensor::new(
                        format!("dense{i}.weight"),
                        &[features, *out_features],
                        Some(ReshapeRule {
                            p: features,
                            n: *out_features,
                            layout: ComponentLayout::Direct,
                        }),
                        true,
                    ));
                    let bias = params.len();
                    params.push(ParamTensor::new(
                        format!("dense{i}.bias"),
                        &[*out_features],
                        None,
                        true,
                    ));
                    layers.push(Layer::Dense {
                        f_in: features,
                        f_out: *out_features,
                        weight,
                        bias,
                    });
                }
                (l, f) => {
                    return Err(NnError::InvalidSpec(format!(
                        "layer {i}: {l:?} cannot follow {f:?}"
                    )))
                }
            }
        }
        match flow {
            Flow::Flat { .. } => {}
            Flow::Image { .. } => {
                return Err(NnError::InvalidSpec(
                    "model must end in a flat classifier output".into(),
                ))
            }
        }
        Ok(Self {
            spec,
            layers,
            params,
            tracked,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Number of classes (features of the final layer output).
    pub fn classes(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense { f_out, .. }) => *f_out,
            _ => 0,
        }
    }

    /// Layer indices tracked as component representations.
    pub fn tracked_layers(&self) -> &[usize] {
        &self.tracked
    }

    /// Fan-in-scaled uniform init for weights (bound √(1/fan_in)), zeros
    /// for biases, ones/zeros for batch-norm scale/shift. Fully determined
    /// by `seed`.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = SeedStream::new(seed).derive("init");
        for layer in &self.layers {
            match layer {
                Layer::Conv2d { cfg, weight, bias, .. } => {
                    let bound = (1.0 / cfg.patch_len() as f64).sqrt();
                    for v in self.params[*weight].data.data_mut() {
                        *v = T::from_f64(rng::uniform_symmetric(&mut rng, bound));
                    }
                    self.params[*bias].data.fill(T::ZERO);
                }
                Layer::BatchNorm2d { gamma, beta, .. } => {
                    self.params[*gamma].data.fill(T::ONE);
                    self.params[*beta].data.fill(T::ZERO);
                }
                Layer::Dense {
                    f_in, weight, bias, ..
                } => {
                    let bound = (1.0 / *f_in as f64).sqrt();
                    for v in self.params[*weight].data.data_mut() {
                        *v = T::from_f64(rng::uniform_symmetric(&mut rng, bound));
                    }
                    self.params[*bias].data.fill(T::ZERO);
                }
                Layer::Relu | Layer::Flatten { .. } => {}
            }
        }
    }

    /// Reset batch-norm running statistics (fresh training run).
    pub fn reset_running_stats(&mut self) {
        for layer in &mut self.layers {
            if let Layer::BatchNorm2d {
                running_mean,
                running_var,
                ..
            } = layer
            {
                running_mean.iter_mut().for_each(|v| *v = 0.0);
                running_var.iter_mut().for_each(|v| *v = 1.0);
            }
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Forward<T>, NnError> {
        let (c, h, w) = self.spec.input;
        if x.rank() != 4 || x.shape()[1] != c || x.shape()[2] != h || x.shape()[3] != w {
            return Err(NnError::ShapeMismatch {
                expected: vec![0, c, h, w],
                got: x.shape().to_vec(),
            });
        }
        let batch = x.shape()[0];
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        let mut bn_caches: Vec<Option<BnCache>> = Vec::with_capacity(self.layers.len());
        for li in 0..self.layers.len() {
            let input: &Tensor<T> = if li == 0 { x } else { &outputs[li - 1] };
            let (out, cache) = self.layer_forward(li, input, batch, mode);
            outputs.push(out);
            bn_caches.push(cache);
        }
        Ok(Forward {
            outputs,
            bn_caches,
            batch,
        })
    }

    fn layer_forward(
        &mut self,
        li: usize,
        input: &Tensor<T>,
        batch: usize,
        mode: Mode,
    ) -> (Tensor<T>, Option<BnCache>) {
        match &mut self.layers[li] {
            Layer::Conv2d {
                cfg, h, w, weight, bias,
            } => {
                let (oh, ow) = cfg.out_hw(*h, *w);
                let mut out = Tensor::zeros(&[batch, cfg.out_ch, oh, ow]);
                layers::conv_forward(
                    input.data(),
                    batch,
                    *h,
                    *w,
                    cfg,
                    self.params[*weight].data.data(),
                    self.params[*bias].data.data(),
                    out.data_mut(),
                );
                (out, None)
            }
            Layer::BatchNorm2d {
                channels,
                spatial,
                eps,
                momentum,
                gamma,
                beta,
                running_mean,
                running_var,
            } => {
                let mut out = Tensor::zeros(input.shape());
                match mode {
                    Mode::Train | Mode::Probe => {
                        let (mean, var, inv_std) =
                            layers::bn_batch_stats(input.data(), batch, *channels, *spatial, *eps);
                        if mode == Mode::Train {
                            // Running variance uses the unbiased estimate.
                            let count = (batch * *spatial) as f64;
                            let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
                            for c in 0..*channels {
                                running_mean[c] =
                                    (1.0 - *momentum) * running_mean[c] + *momentum * mean[c];
                                running_var[c] = (1.0 - *momentum) * running_var[c]
                                    + *momentum * var[c] * unbias;
                            }
                        }
                        layers::bn_apply(
                            input.data(),
                            batch,
                            *channels,
                            *spatial,
                            &mean,
                            &inv_std,
                            self.params[*gamma].data.data(),
                            self.params[*beta].data.data(),
                            out.data_mut(),
                        );
                        (out, Some(BnCache { mean, inv_std }))
                    }
                    Mode::Eval => {
                        let inv_std: Vec<f64> =
                            running_var.iter().map(|v| 1.0 / (v + *eps).sqrt()).collect();
                        layers::bn_apply(
                            input.data(),
                            batch,
                            *channels,
                            *spatial,
                            running_mean,
                            &inv_std,
                            self.params[*gamma].data.data(),
                            self.params[*beta].data.data(),
                            out.data_mut(),
                        );
                        (out, None)
                    }
                }
            }
            Layer::Relu => {
                let mut out = Tensor::zeros(input.shape());
                layers::relu_forward(input.data(), out.data_mut());
                (out, None)
            }
            Layer::Flatten { features } => {
                let out = Tensor::from_vec(&[batch, *features], input.data().to_vec());
                (out, None)
            }
            Layer::Dense {
                f_in,
                f_out,
                weight,
                bias,
            } => {
                let mut out = Tensor::zeros(&[batch, *f_out]);
                layers::dense_forward(
                    input.data(),
                    batch,
                    *f_in,
                    *f_out,
                    self.params[*weight].data.data(),
                    self.params[*bias].data.data(),
                    out.data_mut(),
                );
                (out, None)
            }
        }
    }

    /// Reverse-mode pass; writes fresh gradients into every `ParamTensor`.
    pub fn backward(&mut self, x: &Tensor<T>, fwd: &Forward<T>, dlogits: Tensor<T>) {
        let batch = fwd.batch;
        let mut grad = dlogits;
        for li in (0..self.layers.len()).rev() {
            let input: &Tensor<T> = if li == 0 { x } else { &fwd.outputs[li - 1] };
            grad = self.layer_backward(li, input, &grad, fwd.bn_caches[li].as_ref(), batch);
        }
    }

    fn layer_backward(
        &mut self,
        li: usize,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        bn_cache: Option<&BnCache>,
        batch: usize,
    ) -> Tensor<T> {
        match &self.layers[li] {
            Layer::Conv2d {
                cfg, h, w, weight, bias,
            } => {
                let mut dx = Tensor::zeros(input.shape());
                layers::conv_backward_input(
                    grad_out.data(),
                    batch,
                    *h,
                    *w,
                    cfg,
                    self.params[*weight].data.data(),
                    dx.data_mut(),
                );
                let (weight, bias) = (*weight, *bias);
                let (cfg, h, w) = (*cfg, *h, *w);
                // Split borrows: take grads out, compute, put back.
                let mut dw = std::mem::take(&mut self.params[weight].grad);
                let mut db = std::mem::take(&mut self.params[bias].grad);
                layers::conv_backward_params(
                    input.data(),
                    batch,
                    h,
                    w,
                    &cfg,
                    grad_out.data(),
                    dw.data_mut(),
                    db.data_mut(),
                );
                self.params[weight].grad = dw;
                self.params[bias].grad = db;
                dx
            }
            Layer::BatchNorm2d {
                channels,
                spatial,
                gamma,
                beta,
                ..
            } => {
                let cache = bn_cache.expect("batch-norm backward needs a training-mode forward");
                let (channels, spatial, gamma, beta) = (*channels, *spatial, *gamma, *beta);
                let mut dx = Tensor::zeros(input.shape());
                let mut dgamma = std::mem::take(&mut self.params[gamma].grad);
                let mut dbeta = std::mem::take(&mut self.params[beta].grad);
                layers::bn_backward(
                    input.data(),
                    batch,
                    channels,
                    spatial,
                    &cache.mean,
                    &cache.inv_std,
                    self.params[gamma].data.data(),
                    grad_out.data(),
                    dx.data_mut(),
                    dgamma.data_mut(),
                    dbeta.data_mut(),
                );
                self.params[gamma].grad = dgamma;
                self.params[beta].grad = dbeta;
                dx
            }
            Layer::Relu => {
                let mut dx = Tensor::zeros(input.shape());
                layers::relu_backward(input.data(), grad_out.data(), dx.data_mut());
                dx
            }
            Layer::Flatten { .. } => {
                Tensor::from_vec(input.shape(), grad_out.data().to_vec())
            }
            Layer::Dense {
                f_in,
                f_out,
                weight,
                bias,
            } => {
                let (f_in, f_out, weight, bias) = (*f_in, *f_out, *weight, *bias);
                let mut dx = Tensor::zeros(input.shape());
                let mut dw = std::mem::take(&mut self.params[weight].grad);
                let mut db = std::mem::take(&mut self.params[bias].grad);
                layers::dense_backward(
                    input.data(),
                    batch,
                    f_in,
                    f_out,
                    self.params[weight].data.data(),
                    grad_out.data(),
                    dx.data_mut(),
                    dw.data_mut(),
                    db.data_mut(),
                );
                self.params[weight].grad = dw;
                self.params[bias].grad = db;
                dx
            }
        }
    }

    /// Component-layer activations of a forward pass, in layer order.
    pub fn activations<'a>(&self, fwd: &'a Forward<T>) -> Vec<LayerActivation<'a, T>> {
        self.tracked
            .iter()
            .map(|&li| LayerActivation {
                layer: li,
                tensor: &fwd.outputs[li],
            })
            .collect()
    }
}
