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

//! Dense row-major `f32` tensors and the kernels needed to train the
//! reference networks.
//!
//! Storage is 32-bit. Every reduction (dot products, norms, losses)
//! accumulates in 64-bit, and all kernels run single-threaded with a fixed
//! reduction order, so results are bitwise reproducible.

mod activation;
mod conv;
mod linalg;
mod pool;

pub use activation::{relu, relu_grad, softmax_cross_entropy};
pub use conv::{conv2d, conv2d_backward, conv2d_grad_input, conv2d_grad_kernels};
pub use linalg::{axpy, frobenius_sq, frobenius_sq_diff, matmul, matmul_a_bt, matmul_at_b};
pub use pool::{maxpool2d, maxpool2d_grad};

use std::fmt;

use crate::error::{Error, Result};

/// Dimension sizes of a tensor. Non-empty, every entry at least 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::dim("shape must have at least one dimension"));
        }
        if dims.contains(&0) {
            return Err(Error::dim(format!("shape {dims:?} has a zero dimension")));
        }
        Ok(Shape(dims.to_vec()))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    /// Panics if `dims` is not a valid shape.
    pub fn zeros(dims: &[usize]) -> Self {
        Self::filled(dims, 0.0)
    }

    /// Panics if `dims` is not a valid shape or `value` is not finite.
    pub fn filled(dims: &[usize], value: f32) -> Self {
        let shape = Shape::new(dims).expect("invalid tensor shape");
        assert!(value.is_finite(), "fill value must be finite");
        let data = vec![value; shape.numel()];
        Tensor { shape, data }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f32>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::dim(format!(
                "shape {shape} needs {} values, got {}",
                shape.numel(),
                data.len()
            )));
        }
        let t = Tensor { shape, data };
        t.ensure_finite("from_vec")?;
        Ok(t)
    }

    /// Builds a tensor from 64-bit values, rounding each to `f32`.
    pub fn from_f64(dims: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub(crate) fn from_parts_unchecked(shape: Shape, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Raw mutable access. Callers are responsible for keeping values finite.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.data.len() {
            return Err(Error::dim(format!(
                "cannot reshape {} into {shape}",
                self.shape
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    /// Number of entries whose bit pattern is neither `+0.0` nor `-0.0`.
    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    pub(crate) fn check_same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "{op}: shape {} does not match {}",
                self.shape, other.shape
            )))
        }
    }
}
