//! Model container: weight storage, forward/backward orchestration and
//! weight-file serialization.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::layers::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, cross_entropy_loss,
    dense_backward, dense_forward, depthwise_conv2d_backward, depthwise_conv2d_forward,
    maxpool2d_backward, maxpool2d_forward, relu_backward, relu_forward, separable_conv2d_backward,
    separable_conv2d_forward, softmax, BnCache, BnMode,
};
use crate::nn::{LayerSpec, ModelConfig, Padding};
use crate::tensor::{read_tensors, write_tensors, DynTensor, Element, Tensor};

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone)]
struct ConvState<T: Element> {
    padding: Padding,
    w: Tensor<T>,
    b: Tensor<T>,
    gw: Tensor<T>,
    gb: Tensor<T>,
    cache_x: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
struct DepthwiseState<T: Element> {
    padding: Padding,
    w: Tensor<T>,
    b: Tensor<T>,
    gw: Tensor<T>,
    gb: Tensor<T>,
    cache_x: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
struct SeparableState<T: Element> {
    padding: Padding,
    dw_w: Tensor<T>,
    pw_w: Tensor<T>,
    b: Tensor<T>,
    g_dw: Tensor<T>,
    g_pw: Tensor<T>,
    gb: Tensor<T>,
    cache_x: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
struct BnState<T: Element> {
    gamma: Tensor<T>,
    beta: Tensor<T>,
    g_gamma: Tensor<T>,
    g_beta: Tensor<T>,
    running_mean: Tensor<T>,
    running_var: Tensor<T>,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct DenseState<T: Element> {
    w: Tensor<T>,
    b: Tensor<T>,
    gw: Tensor<T>,
    gb: Tensor<T>,
    cache_x: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
enum LayerState<T: Element> {
    Conv(ConvState<T>),
    Depthwise(DepthwiseState<T>),
    Separable(SeparableState<T>),
    Relu { cache_x: Option<Tensor<T>> },
    MaxPool { cache: Option<(Vec<usize>, Vec<usize>)> },
    BatchNorm(BnState<T>),
    Flatten { cache_shape: Option<Vec<usize>> },
    Dense(DenseState<T>),
    Softmax,
}

/// A materialized model: config plus weights, gradients and caches.
#[derive(Debug, Clone)]
pub struct Model<T: Element = f32> {
    pub config: ModelConfig,
    layers: Vec<LayerState<T>>,
}

fn truncated_normal<T: Element>(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor<T> {
    let data = (0..shape.iter().product())
        .map(|_| {
            loop {
                // Box-Muller; resample outside two standard deviations
                let u: f64 = rng.gen::<f64>().max(1e-12);
                let v: f64 = rng.gen();
                let z = (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos();
                if z.abs() <= 2.0 {
                    return T::from_f64(z * std);
                }
            }
        })
        .collect();
    Tensor {
        shape: shape.to_vec(),
        data,
    }
}

impl<T: Element> Model<T> {
    /// Builds a model with seeded truncated-normal fan-in initialization.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Model<T>> {
        config.validate()?;
        let shapes = config.layer_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(config.layers.len());
        let mut in_shape = crate::nn::DataShape::Spatial(
            config.input_shape.0,
            config.input_shape.1,
            config.input_shape.2,
        );
        for (i, spec) in config.layers.iter().enumerate() {
            let cin = match in_shape {
                crate::nn::DataShape::Spatial(_, _, c) => c,
                crate::nn::DataShape::Flat(n) => n,
            };
            let state = match spec {
                LayerSpec::Conv2D {
                    kernel,
                    filters,
                    padding,
                } => {
                    let fan_in = kernel.0 * kernel.1 * cin;
                    let std = (2.0 / fan_in as f64).sqrt();
                    LayerState::Conv(ConvState {
                        padding: *padding,
                        w: truncated_normal(&mut rng, &[kernel.0, kernel.1, cin, *filters], std),
                        b: Tensor::zeros(&[*filters]),
                        gw: Tensor::zeros(&[kernel.0, kernel.1, cin, *filters]),
                        gb: Tensor::zeros(&[*filters]),
                        cache_x: None,
                    })
                }
                LayerSpec::DepthwiseConv2D { kernel, padding } => {
                    let fan_in = kernel.0 * kernel.1;
                    let std = (2.0 / fan_in as f64).sqrt();
                    LayerState::Depthwise(DepthwiseState {
                        padding: *padding,
                        w: truncated_normal(&mut rng, &[kernel.0, kernel.1, cin], std),
                        b: Tensor::zeros(&[cin]),
                        gw: Tensor::zeros(&[kernel.0, kernel.1, cin]),
                        gb: Tensor::zeros(&[cin]),
                        cache_x: None,
                    })
                }
                LayerSpec::SeparableConv2D {
                    kernel,
                    filters,
                    padding,
                } => {
                    let dw_std = (2.0 / (kernel.0 * kernel.1) as f64).sqrt();
                    let pw_std = (2.0 / cin as f64).sqrt();
                    LayerState::Separable(SeparableState {
                        padding: *padding,
                        dw_w: truncated_normal(&mut rng, &[kernel.0, kernel.1, cin], dw_std),
                        pw_w: truncated_normal(&mut rng, &[1, 1, cin, *filters], pw_std),
                        b: Tensor::zeros(&[*filters]),
                        g_dw: Tensor::zeros(&[kernel.0, kernel.1, cin]),
                        g_pw: Tensor::zeros(&[1, 1, cin, *filters]),
                        gb: Tensor::zeros(&[*filters]),
                        cache_x: None,
                    })
                }
                LayerSpec::ReLU => LayerState::Relu { cache_x: None },
                LayerSpec::MaxPool2D => LayerState::MaxPool { cache: None },
                LayerSpec::BatchNorm => LayerState::BatchNorm(BnState {
                    gamma: Tensor::from_vec(&[cin], vec![T::one(); cin])?,
                    beta: Tensor::zeros(&[cin]),
                    g_gamma: Tensor::zeros(&[cin]),
                    g_beta: Tensor::zeros(&[cin]),
                    running_mean: Tensor::zeros(&[cin]),
                    running_var: Tensor::from_vec(&[cin], vec![T::one(); cin])?,
                    cache: None,
                }),
                LayerSpec::Flatten => LayerState::Flatten { cache_shape: None },
                LayerSpec::Dense { units } => {
                    let std = (2.0 / cin as f64).sqrt();
                    LayerState::Dense(DenseState {
                        w: truncated_normal(&mut rng, &[cin, *units], std),
                        b: Tensor::zeros(&[*units]),
                        gw: Tensor::zeros(&[cin, *units]),
                        gb: Tensor::zeros(&[*units]),
                        cache_x: None,
                    })
                }
                LayerSpec::Softmax => LayerState::Softmax,
            };
            layers.push(state);
            in_shape = shapes[i];
        }
        Ok(Model {
            config: config.clone(),
            layers,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Forward pass; `Mode::Train` retains caches for `backward` and
    /// updates batch-norm running statistics.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut outputs = self.forward_internal(x, mode, false)?;
        Ok(outputs.pop().expect("model has layers"))
    }

    /// Forward pass returning every layer's output (activation dumps).
    pub fn forward_collect(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        self.forward_internal(x, mode, true)
    }

    fn forward_internal(
        &mut self,
        x: &Tensor<T>,
        mode: Mode,
        collect: bool,
    ) -> Result<Vec<Tensor<T>>> {
        if !x.all_finite() {
            return Err(Error::Numeric("non-finite model input".into()));
        }
        let train = mode == Mode::Train;
        let mut outputs = Vec::new();
        let mut current = x.clone();
        for layer in &mut self.layers {
            let next = match layer {
                LayerState::Conv(st) => {
                    let y = conv2d_forward(&current, &st.w, &st.b, st.padding)?;
                    st.cache_x = train.then(|| current.clone());
                    y
                }
                LayerState::Depthwise(st) => {
                    let y = depthwise_conv2d_forward(&current, &st.w, Some(&st.b), st.padding)?;
                    st.cache_x = train.then(|| current.clone());
                    y
                }
                LayerState::Separable(st) => {
                    let y =
                        separable_conv2d_forward(&current, &st.dw_w, &st.pw_w, &st.b, st.padding)?;
                    st.cache_x = train.then(|| current.clone());
                    y
                }
                LayerState::Relu { cache_x } => {
                    let y = relu_forward(&current);
                    *cache_x = train.then(|| current.clone());
                    y
                }
                LayerState::MaxPool { cache } => {
                    let (y, argmax) = maxpool2d_forward(&current)?;
                    *cache = train.then(|| (current.shape.clone(), argmax));
                    y
                }
                LayerState::BatchNorm(st) => {
                    let bn_mode = if train { BnMode::Train } else { BnMode::Infer };
                    let (y, cache) = batchnorm_forward(
                        &current,
                        &st.gamma,
                        &st.beta,
                        &mut st.running_mean,
                        &mut st.running_var,
                        bn_mode,
                        BN_MOMENTUM,
                        BN_EPS,
                    )?;
                    st.cache = cache;
                    y
                }
                LayerState::Flatten { cache_shape } => {
                    *cache_shape = Some(current.shape.clone());
                    let n = current.shape[0];
                    let rest: usize = current.shape[1..].iter().product();
                    current.clone().reshaped(&[n, rest])?
                }
                LayerState::Dense(st) => {
                    let y = dense_forward(&current, &st.w, &st.b)?;
                    st.cache_x = train.then(|| current.clone());
                    y
                }
                LayerState::Softmax => softmax(&current)?,
            };
            if collect {
                outputs.push(next.clone());
            }
            current = next;
        }
        if !current.all_finite() {
            return Err(Error::Numeric("non-finite activations in forward pass".into()));
        }
        if !collect {
            outputs.push(current);
        }
        Ok(outputs)
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            match layer {
                LayerState::Conv(st) => {
                    st.gw.data.fill(T::zero());
                    st.gb.data.fill(T::zero());
                }
                LayerState::Depthwise(st) => {
                    st.gw.data.fill(T::zero());
                    st.gb.data.fill(T::zero());
                }
                LayerState::Separable(st) => {
                    st.g_dw.data.fill(T::zero());
                    st.g_pw.data.fill(T::zero());
                    st.gb.data.fill(T::zero());
                }
                LayerState::BatchNorm(st) => {
                    st.g_gamma.data.fill(T::zero());
                    st.g_beta.data.fill(T::zero());
                }
                LayerState::Dense(st) => {
                    st.gw.data.fill(T::zero());
                    st.gb.data.fill(T::zero());
                }
                _ => {}
            }
        }
    }

    /// Reverse pass from softmax probabilities and one-hot labels.
    /// The combined softmax + cross-entropy gradient is `(p - y) / N`.
    pub fn backward(&mut self, probs: &Tensor<T>, labels: &Tensor<T>) -> Result<()> {
        if probs.shape != labels.shape {
            return Err(Error::shape("probs/labels shape mismatch in backward"));
        }
        if !matches!(self.layers.last(), Some(LayerState::Softmax)) {
            return Err(Error::validation("backward expects a trailing Softmax layer"));
        }
        self.zero_grads();
        let n = T::from_f64(probs.shape[0] as f64);
        let mut grad = Tensor {
            shape: probs.shape.clone(),
            data: probs
                .data
                .iter()
                .zip(&labels.data)
                .map(|(&p, &y)| (p - y) / n)
                .collect(),
        };

        for layer in self.layers.iter_mut().rev().skip(1) {
            grad = match layer {
                LayerState::Conv(st) => {
                    let x = st
                        .cache_x
                        .as_ref()
                        .ok_or_else(|| Error::validation("backward before forward (conv cache missing)"))?;
                    let (dx, gw, gb) = conv2d_backward(x, &st.w, st.padding, &grad)?;
                    st.gw = gw;
                    st.gb = gb;
                    dx
                }
                LayerState::Depthwise(st) => {
                    let x = st
                        .cache_x
                        .as_ref()
                        .ok_or_else(|| Error::validation("backward before forward (depthwise cache missing)"))?;
                    let (dx, gw, gb) = depthwise_conv2d_backward(x, &st.w, st.padding, &grad)?;
                    st.gw = gw;
                    st.gb = gb;
                    dx
                }
                LayerState::Separable(st) => {
                    let x = st
                        .cache_x
                        .as_ref()
                        .ok_or_else(|| Error::validation("backward before forward (separable cache missing)"))?;
                    let (dx, g_dw, g_pw, gb) =
                        separable_conv2d_backward(x, &st.dw_w, &st.pw_w, st.padding, &grad)?;
                    st.g_dw = g_dw;
                    st.g_pw = g_pw;
                    st.gb = gb;
                    dx
                }
                LayerState::Relu { cache_x } => {
                    let x = cache_x
                        .as_ref()
                        .ok_or_else(|| Error::validation("backward before forward (relu cache missing)"))?;
                    relu_backward(x, &grad)
                }
                LayerState::MaxPool { cache } => {
                    let (shape, argmax) = cache
                        .as_ref()
                        .ok_or_else(|| Error::validation("backward before forward (pool cache missing)"))?;
                    maxpool2d_backward(shape, argmax, &grad)?
                }
                LayerState::BatchNorm(st) => {
                    let cache = st
                        .cache
                        .as_ref()
                        .ok_or_else(|| Error::validation("backward before forward (batch-norm cache missing)"))?;
                    let (dx, g_gamma, g_beta) = batchnorm_backward(cache, &st.gamma, &grad)?;
                    st.g_gamma = g_gamma;
                    st.g_beta = g_beta;
                    dx
                }
                LayerState::Flatten { cache_shape } => {
                    let shape = cache_shape
                        .as_ref()
                        .ok_or_else(|| Error::validation("backward before forward (flatten cache missing)"))?;
                    grad.clone().reshaped(shape)?
                }
                LayerState::Dense(st) => {
                    let x = st
                        .cache_x
                        .as_ref()
                        .ok_or_else(|| Error::validation("backward before forward (dense cache missing)"))?;
                    let (dx, gw, gb) = dense_backward(x, &st.w, &grad)?;
                    st.gw = gw;
                    st.gb = gb;
                    dx
                }
                LayerState::Softmax => {
                    return Err(Error::validation("unexpected mid-model Softmax in backward"))
                }
            };
        }
        Ok(())
    }

    /// Forward + loss on a fixed batch (used by training and by the
    /// finite-difference gradient check).
    pub fn loss_on_batch(&mut self, x: &Tensor<T>, labels: &Tensor<T>, mode: Mode) -> Result<f64> {
        let probs = self.forward(x, mode)?;
        cross_entropy_loss(&probs, labels)
    }

    /// (name, value, gradient) of every trainable tensor, in fixed order.
    pub fn trainable_params(&mut self) -> Vec<(String, &mut Tensor<T>, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                LayerState::Conv(st) => {
                    out.push((format!("L{i}.w"), &mut st.w, &mut st.gw));
                    out.push((format!("L{i}.b"), &mut st.b, &mut st.gb));
                }
                LayerState::Depthwise(st) => {
                    out.push((format!("L{i}.w"), &mut st.w, &mut st.gw));
                    out.push((format!("L{i}.b"), &mut st.b, &mut st.gb));
                }
                LayerState::Separable(st) => {
                    out.push((format!("L{i}.dw"), &mut st.dw_w, &mut st.g_dw));
                    out.push((format!("L{i}.pw"), &mut st.pw_w, &mut st.g_pw));
                    out.push((format!("L{i}.b"), &mut st.b, &mut st.gb));
                }
                LayerState::BatchNorm(st) => {
                    out.push((format!("L{i}.gamma"), &mut st.gamma, &mut st.g_gamma));
                    out.push((format!("L{i}.beta"), &mut st.beta, &mut st.g_beta));
                }
                LayerState::Dense(st) => {
                    out.push((format!("L{i}.w"), &mut st.w, &mut st.gw));
                    out.push((format!("L{i}.b"), &mut st.b, &mut st.gb));
                }
                _ => {}
            }
        }
        out
    }

    /// All persistent tensors (weights plus batch-norm running stats).
    pub fn named_tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerState::Conv(st) => {
                    out.push((format!("L{i}.w"), st.w.clone()));
                    out.push((format!("L{i}.b"), st.b.clone()));
                }
                LayerState::Depthwise(st) => {
                    out.push((format!("L{i}.w"), st.w.clone()));
                    out.push((format!("L{i}.b"), st.b.clone()));
                }
                LayerState::Separable(st) => {
                    out.push((format!("L{i}.dw"), st.dw_w.clone()));
                    out.push((format!("L{i}.pw"), st.pw_w.clone()));
                    out.push((format!("L{i}.b"), st.b.clone()));
                }
                LayerState::BatchNorm(st) => {
                    out.push((format!("L{i}.gamma"), st.gamma.clone()));
                    out.push((format!("L{i}.beta"), st.beta.clone()));
                    out.push((format!("L{i}.running_mean"), st.running_mean.clone()));
                    out.push((format!("L{i}.running_var"), st.running_var.clone()));
                }
                LayerState::Dense(st) => {
                    out.push((format!("L{i}.w"), st.w.clone()));
                    out.push((format!("L{i}.b"), st.b.clone()));
                }
                _ => {}
            }
        }
        out
    }

    /// Serializes weights and running statistics to a `.b2dw` container.
    pub fn save_weights(&self, path: impl AsRef<Path>) -> Result<()> {
        let entries: Vec<(String, DynTensor)> = self
            .named_tensors()
            .into_iter()
            .map(|(name, t)| (name, to_dyn(t)))
            .collect();
        write_tensors(path, &entries)
    }

    /// Loads weights saved by `save_weights`. Validates every tensor
    /// before assigning, so the model is untouched on error.
    pub fn load_weights(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let entries = read_tensors(path)?;
        let lookup: std::collections::HashMap<&str, &DynTensor> =
            entries.iter().map(|(n, t)| (n.as_str(), t)).collect();

        let expected = self.named_tensors();
        let mut resolved: Vec<(String, Tensor<T>)> = Vec::with_capacity(expected.len());
        for (name, current) in &expected {
            let found = lookup.get(name.as_str()).ok_or_else(|| {
                Error::validation(format!("weight file is missing tensor {name}"))
            })?;
            let tensor = from_dyn::<T>(found).ok_or_else(|| {
                Error::validation(format!("tensor {name} has wrong dtype for this model"))
            })?;
            if tensor.shape != current.shape {
                return Err(Error::shape(format!(
                    "tensor {name} has shape {:?}, model expects {:?}",
                    tensor.shape, current.shape
                )));
            }
            resolved.push((name.clone(), tensor));
        }

        let mut iter = resolved.into_iter();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let _ = i;
            match layer {
                LayerState::Conv(st) => {
                    st.w = iter.next().unwrap().1;
                    st.b = iter.next().unwrap().1;
                }
                LayerState::Depthwise(st) => {
                    st.w = iter.next().unwrap().1;
                    st.b = iter.next().unwrap().1;
                }
                LayerState::Separable(st) => {
                    st.dw_w = iter.next().unwrap().1;
                    st.pw_w = iter.next().unwrap().1;
                    st.b = iter.next().unwrap().1;
                }
                LayerState::BatchNorm(st) => {
                    st.gamma = iter.next().unwrap().1;
                    st.beta = iter.next().unwrap().1;
                    st.running_mean = iter.next().unwrap().1;
                    st.running_var = iter.next().unwrap().1;
                }
                LayerState::Dense(st) => {
                    st.w = iter.next().unwrap().1;
                    st.b = iter.next().unwrap().1;
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn to_dyn<T: Element>(t: Tensor<T>) -> DynTensor {
    match T::DTYPE {
        0 => DynTensor::F32(Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|v| Element::as_f64(*v) as f32).collect(),
        }),
        _ => DynTensor::F64(t.to_f64()),
    }
}

fn from_dyn<T: Element>(t: &DynTensor) -> Option<Tensor<T>> {
    match (T::DTYPE, t) {
        (0, DynTensor::F32(t)) => Some(Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&v| T::from_f64(v as f64)).collect(),
        }),
        (1, DynTensor::F64(t)) => Some(Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&v| T::from_f64(v)).collect(),
        }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;

    fn toy_batch(n: usize) -> (Tensor<f64>, Tensor<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = Tensor {
            shape: vec![n, 8, 8, 3],
            data: (0..n * 8 * 8 * 3).map(|_| rng.gen::<f64>()).collect(),
        };
        let mut labels = Tensor::zeros(&[n, 3]);
        for s in 0..n {
            labels.data[s * 3 + s % 3] = 1.0;
        }
        (x, labels)
    }

    #[test]
    fn forward_shapes_and_probs() {
        let cfg = ModelConfig::reference_toy();
        let mut model: Model<f64> = Model::init(&cfg, 1).unwrap();
        let (x, _) = toy_batch(4);
        let probs = model.forward(&x, Mode::Infer).unwrap();
        assert_eq!(probs.shape, vec![4, 3]);
        for row in probs.data.chunks_exact(3) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn backward_before_forward_errors() {
        let cfg = ModelConfig::reference_toy();
        let mut model: Model<f64> = Model::init(&cfg, 1).unwrap();
        let probs = Tensor::from_vec(&[1, 3], vec![0.2, 0.3, 0.5]).unwrap();
        let labels = Tensor::from_vec(&[1, 3], vec![1.0, 0.0, 0.0]).unwrap();
        assert!(model.backward(&probs, &labels).is_err());
    }

    #[test]
    fn dense_softmax_closed_form_gradient() {
        // single dense + softmax on flat input, equal logits
        let cfg = ModelConfig {
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 3 },
                LayerSpec::Softmax,
            ],
            input_shape: (1, 1, 4),
            n_classes: 3,
        };
        let mut model: Model<f64> = Model::init(&cfg, 3).unwrap();
        // zero weights -> equal logits -> p = 1/3
        for (_, value, _) in model.trainable_params() {
            value.data.fill(0.0);
        }
        let x = Tensor::from_vec(&[2, 1, 1, 4], vec![1.0; 8]).unwrap();
        let mut labels = Tensor::zeros(&[2, 3]);
        labels.data[0] = 1.0;
        labels.data[4] = 1.0;
        let probs = model.forward(&x, Mode::Train).unwrap();
        model.backward(&probs, &labels).unwrap();
        // logit gradient (p - y)/N flows into the dense bias gradient
        let params = model.trainable_params();
        let (_, _, gb) = params
            .into_iter()
            .find(|(name, _, _)| name == "L1.b")
            .unwrap();
        let expect = [
            (1.0 / 3.0 - 1.0) / 2.0 + (1.0 / 3.0) / 2.0,
            (1.0 / 3.0) / 2.0 + (1.0 / 3.0 - 1.0) / 2.0,
            (1.0 / 3.0) / 2.0 + (1.0 / 3.0) / 2.0,
        ];
        for (g, e) in gb.data.iter().zip(expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn save_load_round_trip_predictions() {
        let cfg = ModelConfig::reference_toy();
        let mut model: Model<f64> = Model::init(&cfg, 5).unwrap();
        let (x, labels) = toy_batch(2);
        // one training step so running stats are non-trivial
        let probs = model.forward(&x, Mode::Train).unwrap();
        model.backward(&probs, &labels).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.b2dw");
        model.save_weights(&path).unwrap();

        let mut restored: Model<f64> = Model::init(&cfg, 999).unwrap();
        restored.load_weights(&path).unwrap();
        let p1 = model.forward(&x, Mode::Infer).unwrap();
        let p2 = restored.forward(&x, Mode::Infer).unwrap();
        assert_eq!(p1.data, p2.data);
    }

    #[test]
    fn load_mismatched_config_names_tensor() {
        let cfg = ModelConfig::reference_toy();
        let model: Model<f64> = Model::init(&cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.b2dw");
        model.save_weights(&path).unwrap();

        let mut other_cfg = ModelConfig::reference_toy();
        for layer in &mut other_cfg.layers {
            if let LayerSpec::Conv2D { filters, .. } = layer {
                *filters = 7;
            }
        }
        let mut other: Model<f64> = Model::init(&other_cfg, 5).unwrap();
        let before = other.named_tensors();
        let err = other.load_weights(&path).unwrap_err();
        assert!(err.to_string().contains("L0.w"), "error was: {err}");
        // model untouched on failure
        let after = other.named_tensors();
        assert_eq!(
            before.iter().map(|(_, t)| &t.data).collect::<Vec<_>>(),
            after.iter().map(|(_, t)| &t.data).collect::<Vec<_>>()
        );
    }

    #[test]
    fn truncated_file_rejected() {
        let cfg = ModelConfig::reference_toy();
        let mut model: Model<f64> = Model::init(&cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.b2dw");
        model.save_weights(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(model.load_weights(&path).is_err());
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        let cfg = ModelConfig {
            layers: vec![
                LayerSpec::Conv2D {
                    kernel: (1, 1),
                    filters: 2,
                    padding: Padding::Valid,
                },
                LayerSpec::ReLU,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 3 },
                LayerSpec::Softmax,
            ],
            input_shape: (2, 2, 1),
            n_classes: 3,
        };
        let mut model: Model<f64> = Model::init(&cfg, 2).unwrap();
        // negative bias + zero input -> conv output negative -> dead units
        {
            let mut params = model.trainable_params();
            for (name, value, _) in params.iter_mut() {
                if name == "L0.b" {
                    value.data.fill(-1.0);
                }
            }
        }
        let x = Tensor::zeros(&[1, 2, 2, 1]);
        let labels = Tensor::from_vec(&[1, 3], vec![1.0, 0.0, 0.0]).unwrap();
        let probs = model.forward(&x, Mode::Train).unwrap();
        model.backward(&probs, &labels).unwrap();
        let params = model.trainable_params();
        for (name, _, grad) in params {
            if name.starts_with("L0") {
                assert!(grad.data.iter().all(|&g| g == 0.0), "{name} got gradient");
            }
        }
    }
}
