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

use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;

/// Per-layer binary masks over the prunable weights; 1 marks a kept weight.
#[derive(Clone, Debug, PartialEq)]
pub struct PruneMask {
    layers: Vec<(String, Tensor)>,
}

impl PruneMask {
    pub fn new(layers: Vec<(String, Tensor)>) -> Result<Self> {
        for (name, t) in &layers {
            if t.data().iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::input(format!("mask {name} is not binary")));
            }
        }
        Ok(PruneMask { layers })
    }

    /// A mask keeping every weight of `model`.
    pub fn keep_all(model: &Model) -> Self {
        PruneMask {
            layers: model
                .params()
                .into_iter()
                .map(|(n, w)| (n.to_string(), Tensor::filled(w.dims(), 1.0)))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[(String, Tensor)] {
        &self.layers
    }

    pub fn get(&self, index: usize) -> Option<&Tensor> {
        self.layers.get(index).map(|(_, t)| t)
    }

    /// Number of kept entries per layer.
    pub fn popcounts(&self) -> Vec<usize> {
        self.layers.iter().map(|(_, t)| t.count_nonzero()).collect()
    }

    /// Errors unless there is one mask per prunable weight, in order and with matching shapes.
    pub fn check_against(&self, model: &Model) -> Result<()> {
        let params = model.params();
        if params.len() != self.layers.len() {
            return Err(Error::config(format!(
                "mask has {} layers, model has {} prunable weights",
                self.layers.len(),
                params.len()
            )));
        }
        for ((mname, m), (pname, w)) in self.layers.iter().zip(params) {
            if mname != pname || m.dims() != w.dims() {
                return Err(Error::config(format!(
                    "mask {mname} ({}) does not match weight {pname} ({})",
                    m.shape(),
                    w.shape()
                )));
            }
        }
        Ok(())
    }

    /// Zeroes every masked-out entry of `t`, which must be layer `index`'s shape.
    pub(crate) fn apply(&self, index: usize, t: &mut Tensor) {
        let mask = &self.layers[index].1;
        debug_assert!(mask.same_shape(t));
        for (v, &m) in t.data_mut().iter_mut().zip(mask.data()) {
            if m == 0.0 {
                *v = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Arch;

    #[test]
    fn rejects_non_binary() {
        let t = Tensor::from_vec(&[2], vec![1.0, 0.5]).unwrap();
        assert!(PruneMask::new(vec![("a".into(), t)]).is_err());
    }

    #[test]
    fn keep_all_matches_model() {
        let m = Model::build(Arch::Lenet300, 0);
        let mask = PruneMask::keep_all(&m);
        mask.check_against(&m).unwrap();
        assert_eq!(mask.popcounts(), m.weight_counts());
        let other = PruneMask::keep_all(&Model::build(Arch::Lenet5, 0));
        assert!(matches!(other.check_against(&m), Err(Error::Config(_))));
    }
}
