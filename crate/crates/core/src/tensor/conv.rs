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

//! Valid (unpadded), stride-1 2-D convolution lowered to GEMM via im2col.

use super::linalg::{gemm, MatView};
use super::{Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    kernels: usize,
    kh: usize,
    kw: usize,
}

impl Geometry {
    fn new(input_dims: &[usize], kernel_dims: &[usize]) -> Result<Self> {
        let [batch, channels, height, width] = *input_dims else {
            return Err(Error::dim(format!(
                "conv2d input must be BxCxHxW, got {input_dims:?}"
            )));
        };
        let [kernels, kc, kh, kw] = *kernel_dims else {
            return Err(Error::dim(format!(
                "conv2d kernels must be KxCxRxS, got {kernel_dims:?}"
            )));
        };
        if kc != channels {
            return Err(Error::dim(format!(
                "conv2d channel mismatch: input has {channels}, kernels expect {kc}"
            )));
        }
        if height < kh || width < kw {
            return Err(Error::dim(format!(
                "conv2d kernel {kh}x{kw} larger than input {height}x{width}"
            )));
        }
        Ok(Geometry {
            batch,
            channels,
            height,
            width,
            kernels,
            kh,
            kw,
        })
    }

    fn out_h(&self) -> usize {
        self.height - self.kh + 1
    }

    fn out_w(&self) -> usize {
        self.width - self.kw + 1
    }

    fn patch(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }

    fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    fn output_dims(&self) -> [usize; 4] {
        [self.batch, self.kernels, self.out_h(), self.out_w()]
    }
}

/// Fills `col` (patch x positions, row-major) with the receptive fields of one sample.
fn im2col(g: &Geometry, sample: &[f32], col: &mut [f64]) {
    let (oh, ow, p) = (g.out_h(), g.out_w(), g.positions());
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &sample[c * g.height * g.width..(c + 1) * g.height * g.width];
        for r in 0..g.kh {
            for s in 0..g.kw {
                let dst = &mut col[row * p..(row + 1) * p];
                for y in 0..oh {
                    let src = &plane[(y + r) * g.width + s..(y + r) * g.width + s + ow];
                    for (d, &v) in dst[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                        *d = v as f64;
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-adds a patch x positions matrix back onto one input sample.
fn col2im(g: &Geometry, col: &[f64], sample: &mut [f64]) {
    let (oh, ow, p) = (g.out_h(), g.out_w(), g.positions());
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &mut sample[c * g.height * g.width..(c + 1) * g.height * g.width];
        for r in 0..g.kh {
            for s in 0..g.kw {
                let src = &col[row * p..(row + 1) * p];
                for y in 0..oh {
                    let dst = &mut plane[(y + r) * g.width + s..(y + r) * g.width + s + ow];
                    for (d, &v) in dst.iter_mut().zip(&src[y * ow..(y + 1) * ow]) {
                        *d += v;
                    }
                }
                row += 1;
            }
        }
    }
}

fn to_tensor(dims: &[usize], data: &[f64], op: &'static str) -> Result<Tensor> {
    let t = Tensor::from_parts_unchecked(
        Shape::new(dims)?,
        data.iter().map(|&v| v as f32).collect(),
    );
    t.ensure_finite(op)?;
    Ok(t)
}

/// Forward convolution: `B x C x H x W` with `K x C x R x S` gives
/// `B x K x (H-R+1) x (W-S+1)`.
pub fn conv2d(input: &Tensor, kernels: &Tensor) -> Result<Tensor> {
    let g = Geometry::new(input.dims(), kernels.dims())?;
    let (patch, p) = (g.patch(), g.positions());
    let w = kernels.to_f64();
    let w_view = MatView::row_major(&w, g.kernels, patch);
    let mut col = vec![0.0; patch * p];
    let mut out = vec![0.0; g.batch * g.kernels * p];
    for (b, out_b) in out.chunks_exact_mut(g.kernels * p).enumerate() {
        im2col(&g, &input.data()[b * g.sample_len()..(b + 1) * g.sample_len()], &mut col);
        gemm(w_view, MatView::row_major(&col, patch, p), 0.0, out_b);
    }
    to_tensor(&g.output_dims(), &out, "conv2d")
}

/// Gradients of a scalar loss with respect to the input (when
/// `need_input_grad`) and the kernels, given the upstream gradient of the
/// forward output.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
    need_input_grad: bool,
) -> Result<(Option<Tensor>, Tensor)> {
    let g = Geometry::new(input.dims(), kernels.dims())?;
    if grad_out.dims() != g.output_dims() {
        return Err(Error::dim(format!(
            "conv2d upstream gradient has shape {}, expected {:?}",
            grad_out.shape(),
            g.output_dims()
        )));
    }
    let (patch, p) = (g.patch(), g.positions());
    let w = kernels.to_f64();
    let dy = grad_out.to_f64();
    let mut col = vec![0.0; patch * p];
    let mut dcol = vec![0.0; patch * p];
    let mut dw = vec![0.0; g.kernels * patch];
    let mut dx = if need_input_grad {
        vec![0.0; g.batch * g.sample_len()]
    } else {
        Vec::new()
    };
    for b in 0..g.batch {
        let dy_b = MatView::row_major(&dy[b * g.kernels * p..(b + 1) * g.kernels * p], g.kernels, p);
        im2col(&g, &input.data()[b * g.sample_len()..(b + 1) * g.sample_len()], &mut col);
        gemm(dy_b, MatView::row_major(&col, patch, p).t(), 1.0, &mut dw);
        if need_input_grad {
            gemm(MatView::row_major(&w, g.kernels, patch).t(), dy_b, 0.0, &mut dcol);
            col2im(&g, &dcol, &mut dx[b * g.sample_len()..(b + 1) * g.sample_len()]);
        }
    }
    let grad_kernels = to_tensor(kernels.dims(), &dw, "conv2d_grad_kernels")?;
    let grad_input = if need_input_grad {
        Some(to_tensor(input.dims(), &dx, "conv2d_grad_input")?)
    } else {
        None
    };
    Ok((grad_input, grad_kernels))
}

/// Gradient with respect to the input; `input_dims` is the forward input shape.
pub fn conv2d_grad_input(grad_out: &Tensor, kernels: &Tensor, input_dims: &[usize]) -> Result<Tensor> {
    let g = Geometry::new(input_dims, kernels.dims())?;
    if grad_out.dims() != g.output_dims() {
        return Err(Error::dim(format!(
            "conv2d upstream gradient has shape {}, expected {:?}",
            grad_out.shape(),
            g.output_dims()
        )));
    }
    let (patch, p) = (g.patch(), g.positions());
    let w = kernels.to_f64();
    let dy = grad_out.to_f64();
    let mut dcol = vec![0.0; patch * p];
    let mut dx = vec![0.0; g.batch * g.sample_len()];
    for b in 0..g.batch {
        let dy_b = MatView::row_major(&dy[b * g.kernels * p..(b + 1) * g.kernels * p], g.kernels, p);
        gemm(MatView::row_major(&w, g.kernels, patch).t(), dy_b, 0.0, &mut dcol);
        col2im(&g, &dcol, &mut dx[b * g.sample_len()..(b + 1) * g.sample_len()]);
    }
    to_tensor(input_dims, &dx, "conv2d_grad_input")
}

/// Gradient with respect to the kernels.
pub fn conv2d_grad_kernels(input: &Tensor, kernels: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    conv2d_backward(input, kernels, grad_out, false).map(|(_, dw)| dw)
}
