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

//! JSON run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::admm::{AdmmConfig, Budget, DEFAULT_EPSILON_PER_WEIGHT, DEFAULT_MAX_ITERS, DEFAULT_RHO};
use crate::error::{Error, Result};
use crate::model::{Arch, Model};
use crate::trainer::TrainConfig;

/// A scalar applied to every layer, or one value per layer name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerLayer {
    Uniform(f64),
    Layers(BTreeMap<String, f64>),
}

impl PerLayer {
    fn resolve(&self, what: &str, names: &[String]) -> Result<Vec<f64>> {
        match self {
            PerLayer::Uniform(v) => Ok(vec![*v; names.len()]),
            PerLayer::Layers(map) => {
                check_keys(what, map.keys(), names)?;
                Ok(names.iter().map(|n| map[n]).collect())
            }
        }
    }
}

fn check_keys<'a>(what: &str, keys: impl Iterator<Item = &'a String>, names: &[String]) -> Result<()> {
    let keys: Vec<&String> = keys.collect();
    for k in &keys {
        if !names.contains(k) {
            return Err(Error::config(format!(
                "{what}: unknown layer {k:?} (layers are {})",
                names.join(", ")
            )));
        }
    }
    for n in names {
        if !keys.contains(&n) {
            return Err(Error::config(format!("{what}: missing layer {n:?}")));
        }
    }
    Ok(())
}

fn default_rho() -> PerLayer {
    PerLayer::Uniform(DEFAULT_RHO)
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmmSettings {
    /// Nonzeros kept per prunable layer, as a count or a fraction.
    pub budgets: BTreeMap<String, Budget>,
    #[serde(default = "default_rho")]
    pub rho: PerLayer,
    /// Defaults to `1e-4 * count(W_i)` per layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<PerLayer>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Optimizer for each W-update. Defaults to the baseline settings with
    /// one tenth of the baseline steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_update: Option<TrainConfig>,
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data/mnist")
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_log_every() -> usize {
    500
}

/// Everything a pipeline run depends on. Phase seeds in `baseline`,
/// `retrain` and `admm.w_update` are combined with `seed`, so changing
/// `seed` alone reseeds every phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub arch: Arch,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
    pub baseline: TrainConfig,
    /// Defaults to the baseline settings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrain: Option<TrainConfig>,
    pub admm: AdmmSettings,
    /// Use only the first `n` training images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_samples: Option<usize>,
    /// Use only the first `n` test images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_samples: Option<usize>,
    /// Retraining logs per-layer nonzero counts every this many steps and after the last step.
    #[serde(default = "default_log_every")]
    pub retrain_log_every: usize,
}

/// Prunable layer names and weight counts of `arch`.
pub fn arch_layers(arch: Arch) -> (Vec<String>, Vec<usize>) {
    let m = Model::build(arch, 0);
    (m.prunable_names(), m.weight_counts())
}

/// Budgets of the reference compression tables.
pub fn table_budgets(arch: Arch) -> BTreeMap<String, Budget> {
    let pairs: &[(&str, u64)] = match arch {
        Arch::Lenet300 => &[("fc1", 9408), ("fc2", 2100), ("fc3", 120)],
        Arch::Lenet5 => &[("conv1", 100), ("conv2", 2250), ("fc1", 8000), ("fc2", 350)],
    };
    pairs
        .iter()
        .map(|&(n, l)| (n.to_string(), Budget::Count(l)))
        .collect()
}

/// Mixes the run seed with a phase tag and the phase's own seed.
pub fn phase_seed(run_seed: u64, tag: u64, phase: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = run_seed
        .wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(phase.rotate_left(17));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Penalty used by the reference configs.
pub const REFERENCE_RHO: f64 = 0.1;
/// Tolerance per weight used by the reference config of `arch`.
pub fn reference_epsilon_per_weight(arch: Arch) -> f64 {
    match arch {
        Arch::Lenet300 => 1e-5,
        Arch::Lenet5 => 5e-6,
    }
}

const BASELINE_TAG: u64 = 1;
const WUPDATE_TAG: u64 = 2;
const RETRAIN_TAG: u64 = 3;

impl RunConfig {
    /// Table budgets, default ADMM settings and `steps` baseline steps.
    pub fn preset(arch: Arch, steps: usize) -> Self {
        RunConfig {
            arch,
            data_dir: default_data_dir(),
            output_dir: default_output_dir(),
            seed: 0,
            deterministic: true,
            baseline: TrainConfig {
                steps,
                ..TrainConfig::default()
            },
            retrain: None,
            admm: AdmmSettings {
                budgets: table_budgets(arch),
                rho: default_rho(),
                epsilon: None,
                max_iters: DEFAULT_MAX_ITERS,
                w_update: None,
            },
            train_samples: None,
            test_samples: None,
            retrain_log_every: default_log_every(),
        }
    }

    /// The shipped reference run for `arch`, identical to `configs/<arch>.json`:
    /// table budgets, `rho = 0.1` and `eps_i = reference_epsilon_per_weight(arch) * count(W_i)`.
/// LeNet-5 retrains at learning rate 0.03.
    pub fn reference(arch: Arch) -> Self {
        let steps = match arch {
            Arch::Lenet300 => 18_750,
            Arch::Lenet5 => 9_380,
        };
        let (names, counts) = arch_layers(arch);
        let mut config = RunConfig {
            output_dir: PathBuf::from("runs").join(arch.as_str()),
            ..Self::preset(arch, steps)
        };
        if arch == Arch::Lenet5 {
            config.retrain = Some(TrainConfig {
                learning_rate: 0.03,
                ..config.baseline.clone()
            });
        }
        config.admm.rho = PerLayer::Uniform(REFERENCE_RHO);
        config.admm.epsilon = Some(PerLayer::Layers(
            names
                .into_iter()
                .zip(counts)
                .map(|(n, c)| (n, reference_epsilon_per_weight(arch) * c as f64))
                .collect(),
        ));
        config
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// The same config with every default written out and budgets as counts.
    /// Running it gives the same results as running `self`.
    pub fn effective(&self) -> Result<Self> {
        self.validate()?;
        let (names, counts) = arch_layers(self.arch);
        let admm = self.admm_config()?;
        let mut out = self.clone();
        out.retrain = Some(self.retrain_settings());
        out.admm.w_update = Some(self.w_update_settings());
        out.admm.budgets = names
            .iter()
            .zip(&admm.budgets)
            .map(|(n, &l)| (n.clone(), Budget::Count(l as u64)))
            .collect();
        if out.admm.epsilon.is_none() {
            out.admm.epsilon = Some(PerLayer::Layers(
                names
                    .iter()
                    .zip(&counts)
                    .map(|(n, &c)| (n.clone(), DEFAULT_EPSILON_PER_WEIGHT * c as f64))
                    .collect(),
            ));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.baseline.validate()?;
        self.retrain_settings().validate()?;
        if self.retrain_log_every == 0 {
            return Err(Error::config("retrain_log_every must be at least 1"));
        }
        if self.train_samples == Some(0) || self.test_samples == Some(0) {
            return Err(Error::config("sample limits must be at least 1"));
        }
        let (_, counts) = arch_layers(self.arch);
        self.admm_config()?.validate(&counts)
    }

    fn retrain_settings(&self) -> TrainConfig {
        self.retrain.clone().unwrap_or_else(|| self.baseline.clone())
    }

    fn w_update_settings(&self) -> TrainConfig {
        self.admm.w_update.clone().unwrap_or_else(|| TrainConfig {
            steps: (self.baseline.steps / 10).max(1),
            ..self.baseline.clone()
        })
    }

    /// Baseline optimizer settings with the phase seed applied.
    pub fn baseline_train(&self) -> TrainConfig {
        TrainConfig {
            seed: phase_seed(self.seed, BASELINE_TAG, self.baseline.seed),
            ..self.baseline.clone()
        }
    }

    /// Retraining optimizer settings with the phase seed applied.
    pub fn retrain_train(&self) -> TrainConfig {
        let r = self.retrain_settings();
        TrainConfig {
            seed: phase_seed(self.seed, RETRAIN_TAG, r.seed),
            ..r
        }
    }

    /// Per-layer ADMM settings in architecture order, with the phase seed applied.
    pub fn admm_config(&self) -> Result<AdmmConfig> {
        let (names, counts) = arch_layers(self.arch);
        check_keys("admm.budgets", self.admm.budgets.keys(), &names)?;
        let budgets = names
            .iter()
            .zip(&counts)
            .map(|(n, &c)| {
                self.admm.budgets[n]
                    .resolve(c)
                    .map_err(|e| Error::config(format!("admm.budgets.{n}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let rho = self.admm.rho.resolve("admm.rho", &names)?;
        let epsilon = match &self.admm.epsilon {
            Some(e) => e.resolve("admm.epsilon", &names)?,
            None => counts.iter().map(|&c| DEFAULT_EPSILON_PER_WEIGHT * c as f64).collect(),
        };
        let w = self.w_update_settings();
        let config = AdmmConfig {
            budgets,
            rho,
            epsilon,
            max_iters: self.admm.max_iters,
            w_update: TrainConfig {
                seed: phase_seed(self.seed, WUPDATE_TAG, w.seed),
                ..w
            },
        };
        config.validate(&counts)?;
        Ok(config)
    }
}
