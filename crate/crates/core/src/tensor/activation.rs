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

use super::Tensor;
use crate::error::{Error, Result};

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor::from_parts_unchecked(x.shape().clone(), data)
}

/// Upstream gradient passed where `x > 0`, zero elsewhere.
pub fn relu_grad(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    x.check_same_shape(grad_out, "relu_grad")?;
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor::from_parts_unchecked(x.shape().clone(), data))
}

/// Mean softmax cross-entropy over a `B x C` batch of logits and its
/// gradient `(softmax - onehot) / B`. Computed in 64-bit.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let [batch, classes] = *logits.dims() else {
        return Err(Error::dim(format!(
            "logits must be BxC, got {}",
            logits.shape()
        )));
    };
    if labels.len() != batch {
        return Err(Error::dim(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::input(format!("label {bad} outside [0, {classes})")));
    }
    let inv_b = 1.0 / batch as f64;
    let mut loss = 0.0f64;
    let mut grad = Vec::with_capacity(batch * classes);
    let mut probs = vec![0.0f64; classes];
    for (row, &label) in logits.data().chunks_exact(classes).zip(labels) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
        let mut denom = 0.0;
        for (p, &v) in probs.iter_mut().zip(row) {
            *p = (v as f64 - max).exp();
            denom += *p;
        }
        loss -= (row[label] as f64 - max) - denom.ln();
        for (c, p) in probs.iter().enumerate() {
            let target = if c == label { 1.0 } else { 0.0 };
            grad.push(((p / denom - target) * inv_b) as f32);
        }
    }
    loss *= inv_b;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            op: "softmax_cross_entropy",
        });
    }
    let grad = Tensor::from_vec(logits.dims(), grad)?;
    Ok((loss, grad))
}
