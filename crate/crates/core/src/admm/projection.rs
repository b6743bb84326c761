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

//! Euclidean projection onto the cardinality set `{ Z : card(Z) <= l }`.
//!
//! The projection keeps the `l` entries of largest magnitude and zeroes the
//! rest. Equal magnitudes are ordered by ascending linear index, so the
//! lower index is kept first.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn by_magnitude(values: &[f32]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        values[b]
            .abs()
            .total_cmp(&values[a].abs())
            .then(a.cmp(&b))
    }
}

/// Linear indices of the `l` largest-magnitude entries, in ascending index order.
pub fn top_magnitude_indices(values: &[f32], l: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    if l < values.len() {
        if l == 0 {
            return Vec::new();
        }
        idx.select_nth_unstable_by(l - 1, by_magnitude(values));
        idx.truncate(l);
        idx.sort_unstable();
    }
    idx
}

/// Keeps the `l` largest-magnitude entries of `m`, zeroing the rest.
pub fn project_cardinality(m: &Tensor, l: usize) -> Result<Tensor> {
    if l == 0 || l > m.numel() {
        return Err(Error::input(format!(
            "cardinality budget {l} outside [1, {}]",
            m.numel()
        )));
    }
    let mut out = Tensor::zeros(m.dims());
    let src = m.data();
    let dst = out.data_mut();
    for i in top_magnitude_indices(src, l) {
        dst[i] = src[i];
    }
    Ok(out)
}
