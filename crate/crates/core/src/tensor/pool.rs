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

//! 2x2 max pooling with stride 2.

use super::{Shape, Tensor};
use crate::error::{Error, Result};

fn pooled_dims(dims: &[usize]) -> Result<[usize; 4]> {
    let [b, c, h, w] = *dims else {
        return Err(Error::dim(format!("maxpool2d input must be BxCxHxW, got {dims:?}")));
    };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim(format!(
            "maxpool2d needs even spatial dims, got {h}x{w}"
        )));
    }
    Ok([b, c, h / 2, w / 2])
}

/// Offset of the window maximum; the first one in row-major order wins ties.
fn argmax_in_window(plane: &[f32], width: usize, y: usize, x: usize) -> usize {
    let candidates = [
        2 * y * width + 2 * x,
        2 * y * width + 2 * x + 1,
        (2 * y + 1) * width + 2 * x,
        (2 * y + 1) * width + 2 * x + 1,
    ];
    let mut best = candidates[0];
    for &c in &candidates[1..] {
        if plane[c] > plane[best] {
            best = c;
        }
    }
    best
}

pub fn maxpool2d(input: &Tensor) -> Result<Tensor> {
    let out_dims = pooled_dims(input.dims())?;
    let (h, w) = (input.dims()[2], input.dims()[3]);
    let (oh, ow) = (out_dims[2], out_dims[3]);
    let mut out = Vec::with_capacity(out_dims.iter().product());
    for plane in input.data().chunks_exact(h * w) {
        for y in 0..oh {
            for x in 0..ow {
                out.push(plane[argmax_in_window(plane, w, y, x)]);
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(Shape::new(&out_dims)?, out))
}

/// Routes each upstream gradient entry to the position of its window maximum.
pub fn maxpool2d_grad(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let out_dims = pooled_dims(input.dims())?;
    if grad_out.dims() != out_dims {
        return Err(Error::dim(format!(
            "maxpool2d upstream gradient has shape {}, expected {out_dims:?}",
            grad_out.shape()
        )));
    }
    let (h, w) = (input.dims()[2], input.dims()[3]);
    let (oh, ow) = (out_dims[2], out_dims[3]);
    let mut grad = vec![0.0f32; input.numel()];
    for ((plane, gplane), up) in input
        .data()
        .chunks_exact(h * w)
        .zip(grad.chunks_exact_mut(h * w))
        .zip(grad_out.data().chunks_exact(oh * ow))
    {
        for y in 0..oh {
            for x in 0..ow {
                gplane[argmax_in_window(plane, w, y, x)] = up[y * ow + x];
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(input.shape().clone(), grad))
}
