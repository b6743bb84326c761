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

//! Weight pruning of small reference networks on MNIST by ADMM.
//!
//! Layer weights are trained under per-layer cardinality budgets
//! `card(W_i) <= l_i`. The constrained problem is split into a smooth block
//! `W` (trained with SGD plus a proximal penalty), an auxiliary block `Z`
//! (Euclidean projection onto the budget set, i.e. keep the `l_i` largest
//! magnitudes), and scaled duals `U`. After ADMM the weights are hard pruned
//! to their top-`l_i` support and retrained under a fixed mask.

pub mod admm;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod mask;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use mask::PruneMask;
pub use model::{Arch, Model};
pub use tensor::{Shape, Tensor};
