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

//! Mini-batch SGD with momentum, shared by baseline training, the ADMM
//! W-update and masked retraining.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{batches, Batch, Dataset};
use crate::error::{Error, Result};
use crate::mask::PruneMask;
use crate::model::{Model, ParamInfo};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// Fractions of `steps` at which the learning rate is multiplied by `lr_decay`.
    pub lr_milestones: Vec<f64>,
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            steps: 0,
            seed: 0,
            lr_milestones: vec![0.5, 0.75],
            lr_decay: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.lr_milestones.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(Error::config("lr_milestones must be fractions in [0, 1]"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::config("lr_decay must be positive"));
        }
        Ok(())
    }

    /// Step-decayed learning rate in effect at `step`.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        let passed = self
            .lr_milestones
            .iter()
            .filter(|&&m| step as f64 >= (m * self.steps as f64).floor())
            .count();
        self.learning_rate * self.lr_decay.powi(passed as i32)
    }
}

/// Adjusts a raw parameter gradient before the optimizer sees it.
pub trait GradHook {
    /// `value` is the parameter's current value; `grad` has the same shape and is edited in place.
    fn adjust(&mut self, info: &ParamInfo, value: &Tensor, grad: &mut Tensor) -> Result<()>;
}

/// Leaves gradients untouched.
pub struct IdentityHook;

impl GradHook for IdentityHook {
    fn adjust(&mut self, _: &ParamInfo, _: &Tensor, _: &mut Tensor) -> Result<()> {
        Ok(())
    }
}

/// Zeroes the gradient of every pruned weight.
pub struct MaskHook<'a> {
    mask: &'a PruneMask,
}

impl GradHook for MaskHook<'_> {
    fn adjust(&mut self, info: &ParamInfo, _: &Tensor, grad: &mut Tensor) -> Result<()> {
        if let Some(i) = info.prunable_index {
            self.mask.apply(i, grad);
        }
        Ok(())
    }
}

pub fn apply_grad_mask<'a>(mask: &'a PruneMask, model: &Model) -> Result<MaskHook<'a>> {
    mask.check_against(model)?;
    Ok(MaskHook { mask })
}

/// Momentum buffers, one per parameter in [`Model::param_infos`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity(Vec<Tensor>);

impl Velocity {
    pub fn zeros_like(model: &Model) -> Self {
        Velocity(model.all_params().iter().map(|p| Tensor::zeros(p.dims())).collect())
    }

    pub fn buffers(&self) -> &[Tensor] {
        &self.0
    }

    /// Zeroes the momentum of every pruned weight.
    pub fn apply_mask(&mut self, mask: &PruneMask, model: &Model) -> Result<()> {
        mask.check_against(model)?;
        for (info, v) in model.param_infos().iter().zip(&mut self.0) {
            if let Some(i) = info.prunable_index {
                mask.apply(i, v);
            }
        }
        Ok(())
    }
}

/// `v <- momentum * v - lr * g; W <- W + v` for every parameter.
pub fn sgd_step(
    model: &mut Model,
    grads: &[Tensor],
    velocity: &mut Velocity,
    learning_rate: f32,
    momentum: f32,
) -> Result<()> {
    let infos = model.param_infos().to_vec();
    let params = model.all_params_mut();
    if grads.len() != params.len() || velocity.0.len() != params.len() {
        return Err(Error::Internal(format!(
            "sgd_step got {} gradients and {} velocity buffers for {} parameters",
            grads.len(),
            velocity.0.len(),
            params.len()
        )));
    }
    for (((w, g), v), info) in params.into_iter().zip(grads).zip(&mut velocity.0).zip(&infos) {
        if !g.same_shape(w) || !v.same_shape(w) {
            return Err(Error::Internal(format!("gradient shape mismatch for {}", info.name)));
        }
        for ((wv, &gv), vv) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = momentum * *vv - learning_rate * gv;
            *wv += *vv;
        }
    }
    Ok(())
}

/// Reported to observers after every optimizer step.
#[derive(Clone, Debug)]
pub struct StepEvent {
    /// Zero-based index of the step just taken.
    pub step: usize,
    pub loss: f64,
    pub learning_rate: f64,
}

/// Endless stream of shuffled batches, reshuffled with a fresh seed each epoch.
struct BatchStream<'a> {
    dataset: &'a Dataset,
    batch_size: usize,
    seeds: ChaCha8Rng,
    current: Option<crate::data::Batches<'a>>,
}

impl BatchStream<'_> {
    fn next_batch(&mut self) -> Result<Batch> {
        loop {
            if let Some(b) = self.current.as_mut().and_then(Iterator::next) {
                return Ok(b);
            }
            self.current = Some(batches(self.dataset, self.batch_size, self.seeds.next_u64(), true)?);
        }
    }
}

fn first_non_finite(model: &Model, grads: Option<&[Tensor]>) -> Option<String> {
    let infos = model.param_infos();
    for (info, p) in infos.iter().zip(model.all_params()) {
        if p.ensure_finite("check").is_err() {
            return Some(info.name.clone());
        }
    }
    grads.and_then(|gs| {
        infos
            .iter()
            .zip(gs)
            .find(|(_, g)| g.ensure_finite("check").is_err())
            .map(|(i, _)| format!("{} (gradient)", i.name))
    })
}

/// Runs `config.steps` SGD steps, passing each gradient through `hook`.
/// Returns the per-step mini-batch loss.
pub fn train(
    model: &mut Model,
    dataset: &Dataset,
    config: &TrainConfig,
    hook: Option<&mut dyn GradHook>,
) -> Result<Vec<f64>> {
    train_observed(model, dataset, config, hook, &mut |_, _| Ok(()))
}

/// [`train`] with a callback invoked after every step.
pub fn train_observed(
    model: &mut Model,
    dataset: &Dataset,
    config: &TrainConfig,
    mut hook: Option<&mut dyn GradHook>,
    observer: &mut dyn FnMut(&StepEvent, &Model) -> Result<()>,
) -> Result<Vec<f64>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::input("cannot train on an empty dataset"));
    }
    let mut stream = BatchStream {
        dataset,
        batch_size: config.batch_size,
        seeds: ChaCha8Rng::seed_from_u64(config.seed),
        current: None,
    };
    let mut velocity = Velocity::zeros_like(model);
    let mut trace = Vec::with_capacity(config.steps);
    let infos = model.param_infos().to_vec();
    for step in 0..config.steps {
        let batch = stream.next_batch()?;
        let divergence = |model: &Model, grads: Option<&[Tensor]>| Error::Divergence {
            context: String::new(),
            step,
            param: first_non_finite(model, grads),
        };
        let (loss, mut grads) = match model.loss_and_grads(&batch.images, &batch.labels) {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => return Err(divergence(model, None)),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || grads.iter().any(|g| g.ensure_finite("grad").is_err()) {
            return Err(divergence(model, Some(&grads)));
        }
        if let Some(h) = hook.as_deref_mut() {
            for ((info, value), grad) in infos.iter().zip(model.all_params()).zip(&mut grads) {
                h.adjust(info, value, grad)?;
            }
        }
        let lr = config.learning_rate_at(step);
        sgd_step(model, &grads, &mut velocity, lr as f32, config.momentum as f32)?;
        if let Some(name) = first_non_finite(model, None) {
            return Err(Error::Divergence {
                context: String::new(),
                step,
                param: Some(name),
            });
        }
        trace.push(loss);
        observer(
            &StepEvent {
                step,
                loss,
                learning_rate: lr,
            },
            model,
        )?;
    }
    Ok(trace)
}
