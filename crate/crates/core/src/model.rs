/*
Copyright 2026 The admm-prune Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

//! Layer graph, the two reference architectures and the loss `f(W_1..W_N)`.
//!
//! Dense weights are stored `in x out`, convolution kernels `K x C x R x S`.
//! Every dense/conv layer owns one weight (prunable) and one bias (never
//! pruned, never counted).

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{batches, Dataset};
use crate::error::{Error, Result};
use crate::tensor::{
    conv2d, conv2d_backward, matmul, matmul_a_bt, matmul_at_b, maxpool2d, maxpool2d_grad, relu,
    relu_grad, softmax_cross_entropy, Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    /// 784-300-100-10 fully connected.
    Lenet300,
    /// conv(20,5x5) - pool - conv(50,5x5) - pool - fc500 - fc10.
    Lenet5,
}

impl Arch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arch::Lenet300 => "lenet300",
            Arch::Lenet5 => "lenet5",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lenet300" => Ok(Arch::Lenet300),
            "lenet5" => Ok(Arch::Lenet5),
            other => Err(Error::config(format!(
                "unknown architecture {other:?} (expected lenet300 or lenet5)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense {
        name: String,
        weight: Tensor,
        bias: Tensor,
    },
    Conv {
        name: String,
        weight: Tensor,
        bias: Tensor,
    },
    Relu,
    MaxPool,
    Flatten,
}

impl Layer {
    /// Zero-initialised `inputs x outputs` dense layer.
    pub fn dense(name: &str, inputs: usize, outputs: usize) -> Layer {
        Layer::Dense {
            name: name.to_string(),
            weight: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    /// Zero-initialised convolution with `kernels x channels x size x size` weights.
    pub fn conv(name: &str, kernels: usize, channels: usize, size: usize) -> Layer {
        Layer::Conv {
            name: name.to_string(),
            weight: Tensor::zeros(&[kernels, channels, size, size]),
            bias: Tensor::zeros(&[kernels]),
        }
    }

    fn weighted(&self) -> Option<(&str, &Tensor, &Tensor)> {
        match self {
            Layer::Dense { name, weight, bias } | Layer::Conv { name, weight, bias } => {
                Some((name, weight, bias))
            }
            _ => None,
        }
    }

    fn is_conv(&self) -> bool {
        matches!(self, Layer::Conv { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// Metadata for one trainable tensor, in model parameter order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamInfo {
    /// `<layer>.weight` or `<layer>.bias`.
    pub name: String,
    pub layer: String,
    pub kind: ParamKind,
    /// Position `i` among the prunable weights `W_1..W_N`, for weights only.
    pub prunable_index: Option<usize>,
    pub is_conv: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    arch: Option<Arch>,
    input_dims: Vec<usize>,
    layers: Vec<Layer>,
    infos: Vec<ParamInfo>,
}

impl Model {
    /// Assembles a network taking samples of shape `input_dims`, validating
    /// layer names and that shapes chain through to a `B x classes` output.
    pub fn new(input_dims: &[usize], layers: Vec<Layer>) -> Result<Model> {
        let mut names = HashSet::new();
        let mut infos = Vec::new();
        let mut dims = input_dims.to_vec();
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::dim(format!("invalid input dims {input_dims:?}")));
        }
        for layer in &layers {
            dims = match layer {
                Layer::Dense { name, weight, bias } => {
                    let [inputs, outputs] = *weight.dims() else {
                        return Err(Error::dim(format!("dense {name} weight must be in x out")));
                    };
                    if dims != [inputs] {
                        return Err(Error::dim(format!(
                            "dense {name} expects {inputs} inputs, receives {dims:?}"
                        )));
                    }
                    if bias.dims() != [outputs] {
                        return Err(Error::dim(format!("dense {name} bias must have {outputs} entries")));
                    }
                    vec![outputs]
                }
                Layer::Conv { name, weight, bias } => {
                    let [k, c, r, s] = *weight.dims() else {
                        return Err(Error::dim(format!("conv {name} weight must be K x C x R x S")));
                    };
                    let [ic, h, w] = dims[..] else {
                        return Err(Error::dim(format!("conv {name} needs C x H x W input, receives {dims:?}")));
                    };
                    if ic != c || h < r || w < s {
                        return Err(Error::dim(format!(
                            "conv {name} with kernels {:?} cannot take input {dims:?}",
                            weight.dims()
                        )));
                    }
                    if bias.dims() != [k] {
                        return Err(Error::dim(format!("conv {name} bias must have {k} entries")));
                    }
                    vec![k, h - r + 1, w - s + 1]
                }
                Layer::Relu => dims,
                Layer::MaxPool => {
                    let [c, h, w] = dims[..] else {
                        return Err(Error::dim(format!("maxpool needs C x H x W input, receives {dims:?}")));
                    };
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(Error::dim(format!("maxpool needs even spatial dims, receives {dims:?}")));
                    }
                    vec![c, h / 2, w / 2]
                }
                Layer::Flatten => vec![dims.iter().product()],
            };
            if let Some((name, _, _)) = layer.weighted() {
                if !names.insert(name.to_string()) {
                    return Err(Error::config(format!("duplicate layer name {name:?}")));
                }
                let prunable_index = infos.len() / 2;
                infos.push(ParamInfo {
                    name: format!("{name}.weight"),
                    layer: name.to_string(),
                    kind: ParamKind::Weight,
                    prunable_index: Some(prunable_index),
                    is_conv: layer.is_conv(),
                });
                infos.push(ParamInfo {
                    name: format!("{name}.bias"),
                    layer: name.to_string(),
                    kind: ParamKind::Bias,
                    prunable_index: None,
                    is_conv: layer.is_conv(),
                });
            }
        }
        if dims.len() != 1 {
            return Err(Error::dim(format!(
                "network output must be a class vector, got per-sample dims {dims:?}"
            )));
        }
        Ok(Model {
            arch: None,
            input_dims: input_dims.to_vec(),
            layers,
            infos,
        })
    }

    /// One of the reference architectures with seeded initial weights.
    pub fn build(arch: Arch, seed: u64) -> Model {
        let (input, layers) = match arch {
            Arch::Lenet300 => (
                vec![784],
                vec![
                    Layer::dense("fc1", 784, 300),
                    Layer::Relu,
                    Layer::dense("fc2", 300, 100),
                    Layer::Relu,
                    Layer::dense("fc3", 100, 10),
                ],
            ),
            Arch::Lenet5 => (
                vec![1, 28, 28],
                vec![
                    Layer::conv("conv1", 20, 1, 5),
                    Layer::Relu,
                    Layer::MaxPool,
                    Layer::conv("conv2", 50, 20, 5),
                    Layer::Relu,
                    Layer::MaxPool,
                    Layer::Flatten,
                    Layer::dense("fc1", 800, 500),
                    Layer::Relu,
                    Layer::dense("fc2", 500, 10),
                ],
            ),
        };
        let mut model = Model::new(&input, layers).expect("reference architecture is well formed");
        model.arch = Some(arch);
        model.init_weights(seed);
        model
    }

    /// Zero-mean uniform weights with half-width `sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init_weights(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            let (weight, bias, fan_in, fan_out) = match layer {
                Layer::Dense { weight, bias, .. } => {
                    let (i, o) = (weight.dims()[0], weight.dims()[1]);
                    (weight, bias, i, o)
                }
                Layer::Conv { weight, bias, .. } => {
                    let d = weight.dims().to_vec();
                    (weight, bias, d[1] * d[2] * d[3], d[0] * d[2] * d[3])
                }
                _ => continue,
            };
            let half_width = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
            for w in weight.data_mut() {
                *w = rng.random_range(-half_width..half_width);
            }
            bias.data_mut().fill(0.0);
        }
    }

    pub fn arch(&self) -> Option<Arch> {
        self.arch
    }

    pub(crate) fn set_arch(&mut self, arch: Arch) {
        self.arch = Some(arch);
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// All trainable tensors in parameter order (weight then bias per layer).
    pub fn param_infos(&self) -> &[ParamInfo] {
        &self.infos
    }

    pub fn all_params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .filter_map(Layer::weighted)
            .flat_map(|(_, w, b)| [w, b])
            .collect()
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(self.infos.len());
        for layer in &mut self.layers {
            if let Layer::Dense { weight, bias, .. } | Layer::Conv { weight, bias, .. } = layer {
                out.push(weight);
                out.push(bias);
            }
        }
        out
    }

    /// The prunable weights `W_1..W_N` as `(layer name, weight)` in architecture order.
    pub fn params(&self) -> Vec<(&str, &Tensor)> {
        self.layers
            .iter()
            .filter_map(Layer::weighted)
            .map(|(n, w, _)| (n, w))
            .collect()
    }

    pub fn prunable(&self) -> Vec<&Tensor> {
        self.params().into_iter().map(|(_, w)| w).collect()
    }

    pub fn prunable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::Dense { weight, .. } | Layer::Conv { weight, .. } = layer {
                out.push(weight);
            }
        }
        out
    }

    pub fn prunable_names(&self) -> Vec<String> {
        self.params().into_iter().map(|(n, _)| n.to_string()).collect()
    }

    /// Element count of each prunable weight.
    pub fn weight_counts(&self) -> Vec<usize> {
        self.params().into_iter().map(|(_, w)| w.numel()).collect()
    }

    /// Whether each prunable weight belongs to a convolution.
    pub fn conv_flags(&self) -> Vec<bool> {
        self.layers
            .iter()
            .filter(|l| l.weighted().is_some())
            .map(Layer::is_conv)
            .collect()
    }

    fn prepare_input(&self, batch: &Tensor) -> Result<Tensor> {
        let dims = batch.dims();
        let per_sample: usize = dims[1..].iter().product();
        let want: usize = self.input_dims.iter().product();
        if dims.len() < 2 || per_sample != want {
            return Err(Error::dim(format!(
                "batch of shape {} does not match model input {:?}",
                batch.shape(),
                self.input_dims
            )));
        }
        let mut target = vec![dims[0]];
        target.extend_from_slice(&self.input_dims);
        batch.clone().reshape(&target)
    }

    /// Runs the network, returning the input seen by each layer followed by the logits.
    fn forward_trace(&self, batch: &Tensor) -> Result<Vec<Tensor>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(self.prepare_input(batch)?);
        for layer in &self.layers {
            let x = acts.last().expect("input present");
            let y = match layer {
                Layer::Dense { weight, bias, .. } => {
                    let mut y = matmul(x, weight)?;
                    let width = bias.numel();
                    for row in y.data_mut().chunks_exact_mut(width) {
                        for (v, b) in row.iter_mut().zip(bias.data()) {
                            *v += b;
                        }
                    }
                    y
                }
                Layer::Conv { weight, bias, .. } => {
                    let mut y = conv2d(x, weight)?;
                    let plane = y.dims()[2] * y.dims()[3];
                    for (i, chunk) in y.data_mut().chunks_exact_mut(plane).enumerate() {
                        let b = bias.data()[i % bias.numel()];
                        chunk.iter_mut().for_each(|v| *v += b);
                    }
                    y
                }
                Layer::Relu => relu(x),
                Layer::MaxPool => maxpool2d(x)?,
                Layer::Flatten => {
                    let b = x.dims()[0];
                    x.clone().reshape(&[b, x.numel() / b])?
                }
            };
            acts.push(y);
        }
        let logits = acts.last().expect("output present");
        logits.ensure_finite("forward")?;
        Ok(acts)
    }

    /// Logits `B x classes` for a batch.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(batch)?.pop().expect("output present"))
    }

    /// Mean cross-entropy on a batch.
    pub fn loss(&self, batch: &Tensor, labels: &[usize]) -> Result<f64> {
        let logits = self.forward(batch)?;
        Ok(softmax_cross_entropy(&logits, labels)?.0)
    }

    /// Mean cross-entropy and its gradient for every parameter, in
    /// [`Model::param_infos`] order.
    pub fn loss_and_grads(&self, batch: &Tensor, labels: &[usize]) -> Result<(f64, Vec<Tensor>)> {
        let acts = self.forward_trace(batch)?;
        let (loss, mut upstream) = softmax_cross_entropy(acts.last().expect("logits"), labels)?;
        let first_weighted = self
            .layers
            .iter()
            .position(|l| l.weighted().is_some())
            .unwrap_or(self.layers.len());
        let mut grads: Vec<Option<Tensor>> = vec![None; self.infos.len()];
        let mut slot = self.infos.len();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &acts[i];
            let need_input = i > first_weighted;
            upstream = match layer {
                Layer::Dense { weight, .. } => {
                    slot -= 2;
                    grads[slot] = Some(matmul_at_b(x, &upstream)?);
                    grads[slot + 1] = Some(column_sums(&upstream)?);
                    if need_input {
                        matmul_a_bt(&upstream, weight)?
                    } else {
                        break;
                    }
                }
                Layer::Conv { weight, .. } => {
                    slot -= 2;
                    let (dx, dw) = conv2d_backward(x, weight, &upstream, need_input)?;
                    grads[slot] = Some(dw);
                    grads[slot + 1] = Some(channel_sums(&upstream)?);
                    match dx {
                        Some(dx) => dx,
                        None => break,
                    }
                }
                Layer::Relu => relu_grad(x, &upstream)?,
                Layer::MaxPool => maxpool2d_grad(x, &upstream)?,
                Layer::Flatten => upstream.reshape(x.dims())?,
            };
        }
        let grads = grads
            .into_iter()
            .zip(&self.infos)
            .map(|(g, info)| g.ok_or_else(|| Error::Internal(format!("no gradient for {}", info.name))))
            .collect::<Result<Vec<_>>>()?;
        Ok((loss, grads))
    }

    /// Fraction of samples whose arg-max logit (lowest index on ties) equals the label.
    pub fn evaluate(&self, dataset: &Dataset) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::input("cannot evaluate on an empty dataset"));
        }
        let mut correct = 0usize;
        for batch in batches(dataset, 1000, 0, false)? {
            let logits = self.forward(&batch.images)?;
            let classes = logits.dims()[1];
            for (row, &label) in logits.data().chunks_exact(classes).zip(&batch.labels) {
                if argmax(row) == label {
                    correct += 1;
                }
            }
        }
        Ok(correct as f64 / dataset.len() as f64)
    }
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn column_sums(t: &Tensor) -> Result<Tensor> {
    let width = t.dims()[1];
    let mut acc = vec![0.0f64; width];
    for row in t.data().chunks_exact(width) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v as f64;
        }
    }
    Tensor::from_f64(&[width], &acc)
}

fn channel_sums(t: &Tensor) -> Result<Tensor> {
    let (channels, plane) = (t.dims()[1], t.dims()[2] * t.dims()[3]);
    let mut acc = vec![0.0f64; channels];
    for (i, chunk) in t.data().chunks_exact(plane).enumerate() {
        acc[i % channels] += chunk.iter().map(|&v| v as f64).sum::<f64>();
    }
    Tensor::from_f64(&[channels], &acc)
}

/// `build_model` in free-function form.
pub fn build_model(arch: Arch, seed: u64) -> Model {
    Model::build(arch, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_weight_counts() {
        let m = Model::build(Arch::Lenet300, 0);
        assert_eq!(m.weight_counts(), vec![235_200, 30_000, 1_000]);
        assert_eq!(m.prunable_names(), vec!["fc1", "fc2", "fc3"]);
        let m = Model::build(Arch::Lenet5, 0);
        assert_eq!(m.weight_counts(), vec![500, 25_000, 400_000, 5_000]);
        assert_eq!(m.prunable_names(), vec!["conv1", "conv2", "fc1", "fc2"]);
        assert_eq!(m.conv_flags(), vec![true, true, false, false]);
        assert_eq!(m.params()[0].1.dims(), &[20, 1, 5, 5]);
    }

    #[test]
    fn same_seed_same_weights() {
        assert_eq!(Model::build(Arch::Lenet5, 7), Model::build(Arch::Lenet5, 7));
        assert_ne!(Model::build(Arch::Lenet5, 7), Model::build(Arch::Lenet5, 8));
    }

    #[test]
    fn init_respects_glorot_bounds_and_zero_bias() {
        let m = Model::build(Arch::Lenet300, 3);
        let a = (6.0f32 / (784.0 + 300.0)).sqrt();
        let fc1 = m.params()[0].1;
        assert!(fc1.data().iter().all(|v| v.abs() <= a));
        let mean: f64 = fc1.data().iter().map(|&v| v as f64).sum::<f64>() / fc1.numel() as f64;
        assert!(mean.abs() < 1e-3);
        for (info, p) in m.param_infos().iter().zip(m.all_params()) {
            if info.kind == ParamKind::Bias {
                assert!(p.data().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn unknown_arch_is_config_error() {
        assert!(matches!("lenet7".parse::<Arch>(), Err(Error::Config(_))));
        assert_eq!("lenet5".parse::<Arch>().unwrap(), Arch::Lenet5);
    }

    #[test]
    fn duplicate_names_rejected() {
        let r = Model::new(&[4], vec![Layer::dense("a", 4, 4), Layer::dense("a", 4, 2)]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn shape_chain_checked() {
        assert!(Model::new(&[4], vec![Layer::dense("a", 5, 2)]).is_err());
        assert!(Model::new(&[1, 6, 6], vec![Layer::conv("c", 2, 1, 3)]).is_err());
        assert!(Model::new(&[1, 5, 5], vec![Layer::MaxPool, Layer::Flatten]).is_err());
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        for arch in [Arch::Lenet300, Arch::Lenet5] {
            let mut m = Model::build(arch, 1);
            for p in m.all_params_mut() {
                p.data_mut().fill(0.0);
            }
            let x = Tensor::filled(&[3, 1, 28, 28], 0.5);
            let y = m.forward(&x).unwrap();
            assert_eq!(y.dims(), &[3, 10]);
            assert!(y.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn forward_rejects_wrong_input_size() {
        let m = Model::build(Arch::Lenet300, 1);
        assert!(matches!(m.forward(&Tensor::zeros(&[2, 783])), Err(Error::Dimension(_))));
        assert!(m.forward(&Tensor::zeros(&[2, 784])).is_ok());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0; 10]), 0);
    }
}
