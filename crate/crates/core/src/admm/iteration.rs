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

use std::time::Instant;

use super::projection::project_cardinality;
use super::{AdmmConfig, AdmmState, IterationRecord, LayerResidual};
use crate::data::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::model::{Model, ParamInfo};
use crate::tensor::{frobenius_sq_diff, Tensor};
use crate::trainer::{train, GradHook, TrainConfig};

fn counts(weights: &[&Tensor]) -> Vec<usize> {
    weights.iter().map(|w| w.numel()).collect()
}

/// `Z_i = project(W_i, l_i)`, `U_i = 0`, `k = 0`.
pub fn init_admm(weights: &[&Tensor], config: &AdmmConfig) -> Result<AdmmState> {
    config.validate(&counts(weights))?;
    let z = weights
        .iter()
        .zip(&config.budgets)
        .map(|(w, &l)| project_cardinality(w, l))
        .collect::<Result<Vec<_>>>()?;
    let u = weights.iter().map(|w| Tensor::zeros(w.dims())).collect();
    Ok(AdmmState {
        z_prev: z.clone(),
        z,
        u,
        k: 0,
        history: Vec::new(),
    })
}

fn check_layers(state: &AdmmState, weights: &[&Tensor]) -> Result<()> {
    if weights.len() != state.z.len() || weights.iter().zip(&state.z).any(|(w, z)| !w.same_shape(z)) {
        return Err(Error::dim("weights do not match the ADMM state layers"));
    }
    Ok(())
}

/// `Z_i <- project(W_i + U_i, l_i)`, remembering the previous `Z` for the change residual.
pub fn z_update(state: &mut AdmmState, weights: &[&Tensor], config: &AdmmConfig) -> Result<()> {
    check_layers(state, weights)?;
    let mut next = Vec::with_capacity(weights.len());
    for ((w, u), &l) in weights.iter().zip(&state.u).zip(&config.budgets) {
        let sum: Vec<f32> = w.data().iter().zip(u.data()).map(|(a, b)| a + b).collect();
        let sum = Tensor::from_vec(w.dims(), sum)?;
        next.push(project_cardinality(&sum, l)?);
    }
    state.z_prev = std::mem::replace(&mut state.z, next);
    Ok(())
}

/// `U_i <- U_i + (W_i - Z_i)` elementwise, then `k <- k + 1`.
pub fn u_update(state: &mut AdmmState, weights: &[&Tensor]) -> Result<()> {
    check_layers(state, weights)?;
    for ((u, w), z) in state.u.iter_mut().zip(weights).zip(&state.z) {
        for ((uv, &wv), &zv) in u.data_mut().iter_mut().zip(w.data()).zip(z.data()) {
            *uv += wv - zv;
        }
        u.ensure_finite("u_update")?;
    }
    state.k += 1;
    Ok(())
}

/// Per layer `(||W_i - Z_i||^2, ||Z_i - Z_i^prev||^2)`, in 64-bit.
pub fn residuals(state: &AdmmState, weights: &[&Tensor]) -> Result<Vec<LayerResidual>> {
    check_layers(state, weights)?;
    weights
        .iter()
        .zip(state.z.iter().zip(&state.z_prev))
        .map(|(w, (z, zp))| {
            Ok(LayerResidual {
                primal: frobenius_sq_diff(w, z)?,
                change: frobenius_sq_diff(z, zp)?,
            })
        })
        .collect()
}

/// Adds the gradient of `rho_i/2 ||W_i - Z_i + U_i||^2` to each prunable
/// weight's gradient. Biases pass through.
pub struct AugmentedHook<'a> {
    state: &'a AdmmState,
    rho: &'a [f64],
}

impl GradHook for AugmentedHook<'_> {
    fn adjust(&mut self, info: &ParamInfo, value: &Tensor, grad: &mut Tensor) -> Result<()> {
        let Some(i) = info.prunable_index else {
            return Ok(());
        };
        let (z, u, rho) = (&self.state.z[i], &self.state.u[i], self.rho[i]);
        if !z.same_shape(value) || !grad.same_shape(value) {
            return Err(Error::dim(format!("augmented hook: shape mismatch for {}", info.name)));
        }
        for (((g, &w), &zv), &uv) in grad.data_mut().iter_mut().zip(value.data()).zip(z.data()).zip(u.data()) {
            let pull = w as f64 - zv as f64 + uv as f64;
            *g = (*g as f64 + rho * pull) as f32;
        }
        Ok(())
    }
}

pub fn augmented_grad_hook<'a>(state: &'a AdmmState, config: &'a AdmmConfig) -> AugmentedHook<'a> {
    AugmentedHook {
        state,
        rho: &config.rho,
    }
}

/// `f(batch) + sum_i rho_i/2 ||W_i - Z_i + U_i||_F^2`.
pub fn augmented_objective(model: &Model, batch: &Batch, state: &AdmmState, config: &AdmmConfig) -> Result<f64> {
    let mut total = model.loss(&batch.images, &batch.labels)?;
    for (((w, z), u), rho) in model.prunable().iter().zip(&state.z).zip(&state.u).zip(&config.rho) {
        let sq: f64 = w
            .data()
            .iter()
            .zip(z.data())
            .zip(u.data())
            .map(|((&a, &b), &c)| {
                let d = a as f64 - b as f64 + c as f64;
                d * d
            })
            .sum();
        total += 0.5 * rho * sq;
    }
    Ok(total)
}

/// Approximate W-update: `config.w_update.steps` SGD steps on the augmented
/// objective with `Z^k`, `U^k` held fixed.
pub fn w_update(model: &mut Model, state: &AdmmState, config: &AdmmConfig, dataset: &Dataset) -> Result<()> {
    let train_config = TrainConfig {
        seed: config.w_update.seed.wrapping_add(state.k as u64),
        ..config.w_update.clone()
    };
    let mut hook = augmented_grad_hook(state, config);
    match train(model, dataset, &train_config, Some(&mut hook)) {
        Ok(_) => Ok(()),
        Err(Error::Divergence { step, param, .. }) => Err(Error::Divergence {
            context: format!("ADMM iteration {}, W-update ", state.k),
            step,
            param,
        }),
        Err(e) => Err(e),
    }
}

/// Solver for the W-update subproblem, so the ADMM loop can drive either
/// the network trainer or an exact minimiser.
pub trait PrimalSolver {
    /// Moves the weights towards `argmin f(W) + sum_i rho_i/2 ||W_i - Z_i + U_i||^2`.
    fn minimize(&mut self, state: &AdmmState, config: &AdmmConfig) -> Result<()>;

    fn weights(&self) -> Vec<&Tensor>;

    /// Augmented objective for logging, if the solver can evaluate one.
    fn objective(&self, _state: &AdmmState, _config: &AdmmConfig) -> Result<Option<f64>> {
        Ok(None)
    }
}

/// W-update by mini-batch SGD on a network.
pub struct SgdPrimal<'a> {
    pub model: &'a mut Model,
    pub dataset: &'a Dataset,
    pub probe: Option<&'a Batch>,
}

impl PrimalSolver for SgdPrimal<'_> {
    fn minimize(&mut self, state: &AdmmState, config: &AdmmConfig) -> Result<()> {
        w_update(self.model, state, config, self.dataset)
    }

    fn weights(&self) -> Vec<&Tensor> {
        self.model.prunable()
    }

    fn objective(&self, state: &AdmmState, config: &AdmmConfig) -> Result<Option<f64>> {
        self.probe
            .map(|b| augmented_objective(self.model, b, state, config))
            .transpose()
    }
}

/// Outcome of an ADMM run.
#[derive(Clone, Debug)]
pub struct AdmmRun {
    pub state: AdmmState,
    pub converged: bool,
}

/// Iterates W-, Z- and U-updates until both residual conditions hold for
/// every layer or `config.max_iters` iterations have run. `observer` sees
/// each iteration's record as it is produced.
pub fn run_admm_with<S: PrimalSolver + ?Sized>(
    solver: &mut S,
    state: &mut AdmmState,
    config: &AdmmConfig,
    observer: &mut dyn FnMut(&IterationRecord) -> Result<()>,
) -> Result<bool> {
    config.validate(&counts(&solver.weights()))?;
    if config.max_iters == 0 {
        let res = residuals(state, &solver.weights())?;
        return Ok(AdmmState::converged(&res, config));
    }
    while state.k < config.max_iters {
        let started = Instant::now();
        solver.minimize(state, config)?;
        z_update(state, &solver.weights(), config)?;
        u_update(state, &solver.weights())?;
        let res = residuals(state, &solver.weights())?;
        let aug_loss = solver.objective(state, config)?;
        let record = IterationRecord {
            k: state.k,
            r: res.iter().map(|r| r.primal).collect(),
            s: res.iter().map(|r| r.change).collect(),
            aug_loss,
            seconds: started.elapsed().as_secs_f64(),
        };
        observer(&record)?;
        state.history.push(record);
        if AdmmState::converged(&res, config) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Full ADMM on a network: initialise from the current weights, then iterate.
pub fn run_admm(
    model: &mut Model,
    config: &AdmmConfig,
    dataset: &Dataset,
    probe: Option<&Batch>,
    observer: &mut dyn FnMut(&IterationRecord) -> Result<()>,
) -> Result<AdmmRun> {
    let mut state = init_admm(&model.prunable(), config)?;
    let mut solver = SgdPrimal {
        model,
        dataset,
        probe,
    };
    let converged = run_admm_with(&mut solver, &mut state, config, observer)?;
    Ok(AdmmRun { state, converged })
}
