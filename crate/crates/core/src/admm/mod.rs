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

//! ADMM for cardinality-constrained training.
//!
//! Each prunable weight `W_i` gets an auxiliary copy `Z_i` constrained to
//! `card(Z_i) <= l_i` and a scaled dual `U_i`. One iteration is
//!
//! ```text
//! W <- argmin f(W) + sum_i rho_i/2 ||W_i - Z_i + U_i||_F^2   (approximately, by SGD)
//! Z_i <- project_cardinality(W_i + U_i, l_i)
//! U_i <- U_i + W_i - Z_i
//! ```
//!
//! and the loop stops once `||W_i - Z_i||_F^2 <= eps_i` and
//! `||Z_i^{k+1} - Z_i^k||_F^2 <= eps_i` for every layer.

mod iteration;
mod projection;
mod prune;

pub use iteration::{
    augmented_grad_hook, augmented_objective, init_admm, residuals, run_admm, run_admm_with,
    u_update, w_update, z_update, AdmmRun, AugmentedHook, PrimalSolver, SgdPrimal,
};
pub use projection::{project_cardinality, top_magnitude_indices};
pub use prune::{hard_prune, retrain_masked};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::trainer::TrainConfig;

pub const DEFAULT_RHO: f64 = 1e-2;
/// Default tolerance per weight; `eps_i = DEFAULT_EPSILON_PER_WEIGHT * count(W_i)`.
pub const DEFAULT_EPSILON_PER_WEIGHT: f64 = 1e-4;
pub const DEFAULT_MAX_ITERS: usize = 40;

/// A layer budget given either as an absolute count or as a retained fraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Budget {
    Count(u64),
    Fraction(f64),
}

impl Budget {
    /// Absolute budget for a layer with `count` weights. Fractions round to
    /// the nearest integer with a minimum of 1.
    pub fn resolve(&self, count: usize) -> Result<usize> {
        let l = match *self {
            Budget::Count(n) => n as usize,
            Budget::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::config(format!("budget fraction {f} outside (0, 1]")));
                }
                ((f * count as f64).round() as usize).max(1)
            }
        };
        if l == 0 || l > count {
            return Err(Error::config(format!(
                "budget {l} outside [1, {count}]"
            )));
        }
        Ok(l)
    }
}

/// Resolved per-layer ADMM settings, indexed like [`crate::Model::params`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    /// `l_i`: nonzeros allowed in layer `i`.
    pub budgets: Vec<usize>,
    /// `rho_i > 0`.
    pub rho: Vec<f64>,
    /// `eps_i > 0`, compared against squared Frobenius residuals.
    pub epsilon: Vec<f64>,
    pub max_iters: usize,
    /// Optimizer for the W-update; `w_update.steps` is the number of SGD
    /// steps taken per ADMM iteration.
    pub w_update: TrainConfig,
}

impl AdmmConfig {
    /// Default penalties and tolerances for layers of the given sizes.
    pub fn with_defaults(counts: &[usize], budgets: Vec<usize>, w_update: TrainConfig) -> Self {
        AdmmConfig {
            budgets,
            rho: vec![DEFAULT_RHO; counts.len()],
            epsilon: counts
                .iter()
                .map(|&c| DEFAULT_EPSILON_PER_WEIGHT * c as f64)
                .collect(),
            max_iters: DEFAULT_MAX_ITERS,
            w_update,
        }
    }

    pub fn w_update_steps(&self) -> usize {
        self.w_update.steps
    }

    pub fn layers(&self) -> usize {
        self.budgets.len()
    }

    /// Checks the config against layers of the given weight counts.
    pub fn validate(&self, counts: &[usize]) -> Result<()> {
        let n = counts.len();
        if self.budgets.len() != n || self.rho.len() != n || self.epsilon.len() != n {
            return Err(Error::config(format!(
                "ADMM config has {}/{}/{} budgets/rho/epsilon entries for {n} layers",
                self.budgets.len(),
                self.rho.len(),
                self.epsilon.len()
            )));
        }
        for (i, &count) in counts.iter().enumerate() {
            let l = self.budgets[i];
            if l == 0 || l > count {
                return Err(Error::config(format!(
                    "layer {i}: budget {l} outside [1, {count}]"
                )));
            }
            if !(self.rho[i] > 0.0 && self.rho[i].is_finite()) {
                return Err(Error::config(format!("layer {i}: rho must be positive")));
            }
            if !(self.epsilon[i] > 0.0 && self.epsilon[i].is_finite()) {
                return Err(Error::config(format!("layer {i}: epsilon must be positive")));
            }
        }
        self.w_update.validate()
    }
}

/// Residuals of one layer after an iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerResidual {
    /// `||W_i - Z_i||_F^2`
    pub primal: f64,
    /// `||Z_i^{k+1} - Z_i^k||_F^2`
    pub change: f64,
}

/// One line of the per-iteration log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Iteration count after this iteration's dual update (1-based).
    pub k: usize,
    /// `r_i` per layer.
    pub r: Vec<f64>,
    /// `s_i` per layer.
    pub s: Vec<f64>,
    /// `f + sum rho_i/2 ||W_i - Z_i + U_i||^2` on the probe batch, if one was given.
    pub aug_loss: Option<f64>,
    /// Wall-clock seconds spent on this iteration.
    pub seconds: f64,
}

impl IterationRecord {
    pub fn max_r(&self) -> f64 {
        self.r.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialises")
    }
}

/// Auxiliary variables, scaled duals and iteration history of one ADMM run.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    z: Vec<Tensor>,
    z_prev: Vec<Tensor>,
    u: Vec<Tensor>,
    k: usize,
    history: Vec<IterationRecord>,
}

impl AdmmState {
    /// Rebuilds a state from stored `Z`, `U` and iteration counter.
    pub fn from_parts(z: Vec<Tensor>, u: Vec<Tensor>, k: usize) -> Result<Self> {
        if z.len() != u.len() || z.iter().zip(&u).any(|(a, b)| !a.same_shape(b)) {
            return Err(Error::input("Z and U must have one tensor per layer with equal shapes"));
        }
        Ok(AdmmState {
            z_prev: z.clone(),
            z,
            u,
            k,
            history: Vec::new(),
        })
    }

    pub fn z(&self) -> &[Tensor] {
        &self.z
    }

    pub fn u(&self) -> &[Tensor] {
        &self.u
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    /// True when every layer's residuals are within its tolerance.
    pub fn converged(residuals: &[LayerResidual], config: &AdmmConfig) -> bool {
        residuals
            .iter()
            .zip(&config.epsilon)
            .all(|(r, &eps)| r.primal <= eps && r.change <= eps)
    }
}
