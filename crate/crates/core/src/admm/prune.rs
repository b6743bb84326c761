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

use super::projection::top_magnitude_indices;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mask::PruneMask;
use crate::model::Model;
use crate::tensor::Tensor;
use crate::trainer::{apply_grad_mask, train_observed, StepEvent, TrainConfig};

/// Keeps the `budgets[i]` largest-magnitude entries of each prunable weight,
/// zeroes the rest, and returns the mask of kept positions.
pub fn hard_prune(model: &mut Model, budgets: &[usize]) -> Result<PruneMask> {
    let names = model.prunable_names();
    if budgets.len() != names.len() {
        return Err(Error::config(format!(
            "{} budgets for {} prunable layers",
            budgets.len(),
            names.len()
        )));
    }
    let mut masks = Vec::with_capacity(budgets.len());
    for ((w, &l), name) in model.prunable_mut().into_iter().zip(budgets).zip(names) {
        if l == 0 || l > w.numel() {
            return Err(Error::config(format!("{name}: budget {l} outside [1, {}]", w.numel())));
        }
        let keep = top_magnitude_indices(w.data(), l);
        let mut bits = vec![0.0f32; w.numel()];
        let mut pruned = vec![0.0f32; w.numel()];
        for i in keep {
            bits[i] = 1.0;
            pruned[i] = w.data()[i];
        }
        w.data_mut().copy_from_slice(&pruned);
        masks.push((name, Tensor::from_vec(w.dims(), bits)?));
    }
    PruneMask::new(masks)
}

/// Retrains a pruned model with gradients of pruned weights forced to zero.
/// Momentum starts at zero, so pruned weights stay exactly zero throughout.
pub fn retrain_masked(
    model: &mut Model,
    mask: &PruneMask,
    dataset: &Dataset,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&StepEvent, &Model) -> Result<()>,
) -> Result<Vec<f64>> {
    let mut hook = apply_grad_mask(mask, model)?;
    for ((name, m), w) in mask.layers().iter().zip(model.prunable()) {
        if w.data().iter().zip(m.data()).any(|(&wv, &mv)| mv == 0.0 && wv != 0.0) {
            return Err(Error::input(format!(
                "layer {name} has nonzero weights outside its mask; hard prune first"
            )));
        }
    }
    train_observed(model, dataset, config, Some(&mut hook), observer)
}
