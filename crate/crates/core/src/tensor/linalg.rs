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

use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Strided read-only view of a 64-bit matrix.
#[derive(Clone, Copy)]
pub(crate) struct MatView<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatView<'a> {
    pub fn row_major(data: &'a [f64], rows: usize, cols: usize) -> Self {
        MatView {
            data,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    pub fn t(self) -> Self {
        MatView {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    fn max_offset(&self) -> usize {
        (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride
    }
}

/// `c = a * b + beta * c` with `c` row-major `a.rows x b.cols`.
pub(crate) fn gemm(a: MatView<'_>, b: MatView<'_>, beta: f64, c: &mut [f64]) {
    assert_eq!(a.cols, b.rows, "gemm inner dimensions");
    assert!(a.rows > 0 && a.cols > 0 && b.cols > 0);
    assert!(a.max_offset() < a.data.len());
    assert!(b.max_offset() < b.data.len());
    assert_eq!(c.len(), a.rows * b.cols);
    // SAFETY: every index touched by dgemm lies within the bounds asserted above.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            1.0,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        );
    }
}

fn as_matrix(t: &Tensor, name: &str) -> Result<(usize, usize)> {
    match *t.dims() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::dim(format!(
            "{name} must be a matrix, got shape {}",
            t.shape()
        ))),
    }
}

fn finish(rows: usize, cols: usize, out: &[f64], op: &'static str) -> Result<Tensor> {
    let shape = Shape::new(&[rows, cols])?;
    let t = Tensor::from_parts_unchecked(shape, out.iter().map(|&v| v as f32).collect());
    t.ensure_finite(op)?;
    Ok(t)
}

/// `a[m x k] * b[k x n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = as_matrix(a, "matmul lhs")?;
    let (k2, n) = as_matrix(b, "matmul rhs")?;
    if k != k2 {
        return Err(Error::dim(format!(
            "matmul inner dimensions differ: {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    let (a64, b64) = (a.to_f64(), b.to_f64());
    let mut out = vec![0.0; m * n];
    gemm(
        MatView::row_major(&a64, m, k),
        MatView::row_major(&b64, k, n),
        0.0,
        &mut out,
    );
    finish(m, n, &out, "matmul")
}

/// `a^T * b` for `a[k x m]`, `b[k x n]`.
pub fn matmul_at_b(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (k, m) = as_matrix(a, "matmul_at_b lhs")?;
    let (k2, n) = as_matrix(b, "matmul_at_b rhs")?;
    if k != k2 {
        return Err(Error::dim(format!(
            "matmul_at_b leading dimensions differ: {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    let (a64, b64) = (a.to_f64(), b.to_f64());
    let mut out = vec![0.0; m * n];
    gemm(
        MatView::row_major(&a64, k, m).t(),
        MatView::row_major(&b64, k, n),
        0.0,
        &mut out,
    );
    finish(m, n, &out, "matmul_at_b")
}

/// `a * b^T` for `a[m x k]`, `b[n x k]`.
pub fn matmul_a_bt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = as_matrix(a, "matmul_a_bt lhs")?;
    let (n, k2) = as_matrix(b, "matmul_a_bt rhs")?;
    if k != k2 {
        return Err(Error::dim(format!(
            "matmul_a_bt trailing dimensions differ: {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    let (a64, b64) = (a.to_f64(), b.to_f64());
    let mut out = vec![0.0; m * n];
    gemm(
        MatView::row_major(&a64, m, k),
        MatView::row_major(&b64, n, k).t(),
        0.0,
        &mut out,
    );
    finish(m, n, &out, "matmul_a_bt")
}

/// Sum of squared entries, accumulated in 64-bit.
pub fn frobenius_sq(x: &Tensor) -> f64 {
    x.data()
        .iter()
        .map(|&v| {
            let v = v as f64;
            v * v
        })
        .sum()
}

/// `||a - b||_F^2` with the difference and the sum taken in 64-bit.
pub fn frobenius_sq_diff(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.check_same_shape(b, "frobenius_sq_diff")?;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum())
}

/// `alpha * x + y`, elementwise in `f32`.
pub fn axpy(alpha: f32, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    x.check_same_shape(y, "axpy")?;
    let data = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&xv, &yv)| alpha * xv + yv)
        .collect();
    let t = Tensor::from_parts_unchecked(x.shape().clone(), data);
    t.ensure_finite("axpy")?;
    Ok(t)
}
