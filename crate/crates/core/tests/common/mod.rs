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

//! Reference implementations shared by the integration tests. Everything
//! here is written independently of the library's kernels.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use admm_prune::admm::{AdmmConfig, AdmmState, PrimalSolver};
use admm_prune::data::{encode_idx, Dataset};
use admm_prune::model::{Layer, Model};
use admm_prune::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Projection onto `card <= l` by enumerating every support. Among supports
/// at the same distance, the one whose sorted index list is lexicographically
/// smallest wins, which keeps lower indices on magnitude ties.
pub fn brute_force_projection(m: &[f32], l: usize) -> Vec<f32> {
    let n = m.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for bits in 0u32..(1 << n) {
        if bits.count_ones() as usize > l {
            continue;
        }
        let kept: Vec<usize> = (0..n).filter(|i| bits >> i & 1 == 1).collect();
        let mut dropped: Vec<f64> = (0..n)
            .filter(|i| bits >> i & 1 == 0)
            .map(|i| (m[i] as f64) * (m[i] as f64))
            .collect();
        dropped.sort_by(f64::total_cmp);
        let d: f64 = dropped.iter().sum();
        let better = match &best {
            None => true,
            Some((bd, bk)) => d < *bd || (d == *bd && kept < *bk),
        };
        if better {
            best = Some((d, kept));
        }
    }
    let kept = best.expect("the empty support always qualifies").1;
    (0..n).map(|i| if kept.contains(&i) { m[i] } else { 0.0 }).collect()
}

/// Softmax cross-entropy of `model` on a batch, computed with plain f64 loops
/// over the model's layer list. `params` replaces the model's parameters in
/// parameter order.
pub fn reference_loss(model: &Model, params: &[Vec<f64>], images: &[f64], batch: usize, labels: &[usize]) -> f64 {
    let sample: usize = model.input_dims().iter().product();
    let mut total = 0.0;
    for b in 0..batch {
        let mut dims: Vec<usize> = model.input_dims().to_vec();
        let mut x: Vec<f64> = images[b * sample..(b + 1) * sample].to_vec();
        let mut p = 0;
        for layer in model.layers() {
            match layer {
                Layer::Dense { weight, .. } => {
                    let (inp, out) = (weight.dims()[0], weight.dims()[1]);
                    let (w, bias) = (&params[p], &params[p + 1]);
                    p += 2;
                    let mut y = bias.clone();
                    for j in 0..out {
                        for i in 0..inp {
                            y[j] += x[i] * w[i * out + j];
                        }
                    }
                    x = y;
                    dims = vec![out];
                }
                Layer::Conv { weight, .. } => {
                    let [k, c, r, s] = [weight.dims()[0], weight.dims()[1], weight.dims()[2], weight.dims()[3]];
                    let (h, wd) = (dims[1], dims[2]);
                    let (oh, ow) = (h - r + 1, wd - s + 1);
                    let (w, bias) = (&params[p], &params[p + 1]);
                    p += 2;
                    let mut y = vec![0.0; k * oh * ow];
                    for ki in 0..k {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut acc = bias[ki];
                                for ci in 0..c {
                                    for dy in 0..r {
                                        for dx in 0..s {
                                            acc += x[(ci * h + oy + dy) * wd + ox + dx]
                                                * w[((ki * c + ci) * r + dy) * s + dx];
                                        }
                                    }
                                }
                                y[(ki * oh + oy) * ow + ox] = acc;
                            }
                        }
                    }
                    x = y;
                    dims = vec![k, oh, ow];
                }
                Layer::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
                Layer::MaxPool => {
                    let (c, h, wd) = (dims[0], dims[1], dims[2]);
                    let (oh, ow) = (h / 2, wd / 2);
                    let mut y = vec![f64::NEG_INFINITY; c * oh * ow];
                    for ci in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        let v = x[(ci * h + 2 * oy + dy) * wd + 2 * ox + dx];
                                        let slot = &mut y[(ci * oh + oy) * ow + ox];
                                        *slot = slot.max(v);
                                    }
                                }
                            }
                        }
                    }
                    x = y;
                    dims = vec![c, oh, ow];
                }
                Layer::Flatten => dims = vec![x.len()],
            }
        }
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = x.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        total += log_sum - x[labels[b]];
    }
    total / batch as f64
}

pub struct GradCheck {
    pub checked: usize,
    pub passed: usize,
    pub worst: f64,
}

impl GradCheck {
    pub fn fraction(&self) -> f64 {
        self.passed as f64 / self.checked as f64
    }
}

/// Compares `Model::loss_and_grads` against central differences of
/// [`reference_loss`] on `samples` random coordinates of every parameter.
pub fn check_gradients(model: &Model, images: &Tensor, labels: &[usize], samples: usize, seed: u64, tol: f64) -> GradCheck {
    let (loss, grads) = model.loss_and_grads(images, labels).unwrap();
    let params: Vec<Vec<f64>> = model.all_params().iter().map(|t| t.data().iter().map(|&v| v as f64).collect()).collect();
    let x: Vec<f64> = images.data().iter().map(|&v| v as f64).collect();
    let batch = images.dims()[0];
    let reference = reference_loss(model, &params, &x, batch, labels);
    assert!((reference - loss).abs() <= 1e-5 * reference.abs().max(1.0), "forward mismatch: {loss} vs {reference}");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-4;
    let mut out = GradCheck { checked: 0, passed: 0, worst: 0.0 };
    for (pi, g) in grads.iter().enumerate() {
        for _ in 0..samples.min(g.numel()) {
            let i = rng.random_range(0..g.numel());
            let mut plus = params.clone();
            plus[pi][i] += h;
            let mut minus = params.clone();
            minus[pi][i] -= h;
            let fd = (reference_loss(model, &plus, &x, batch, labels) - reference_loss(model, &minus, &x, batch, labels)) / (2.0 * h);
            let analytic = g.data()[i] as f64;
            let err = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-7);
            out.checked += 1;
            if err > tol && std::env::var_os("GRADCHECK_DEBUG").is_some() {
                eprintln!("param {pi} coord {i}: analytic {analytic:e} fd {fd:e}");
            }
            if err <= tol {
                out.passed += 1;
            }
            out.worst = out.worst.max(err);
        }
    }
    out
}

pub fn random_tensor(dims: &[usize], lo: f32, hi: f32, rng: &mut ChaCha8Rng) -> Tensor {
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// `f(W) = sum_i 1/2 ||W_i - A_i||^2` with the W-update solved in closed form:
/// `W_i = (A_i + rho_i (Z_i - U_i)) / (1 + rho_i)`.
pub struct QuadraticProblem {
    pub targets: Vec<Tensor>,
    pub weights: Vec<Tensor>,
}

impl PrimalSolver for QuadraticProblem {
    fn minimize(&mut self, state: &AdmmState, config: &AdmmConfig) -> Result<()> {
        for (i, a) in self.targets.iter().enumerate() {
            let rho = config.rho[i];
            let w: Vec<f64> = a
                .data()
                .iter()
                .zip(state.z()[i].data().iter().zip(state.u()[i].data()))
                .map(|(&a, (&z, &u))| (a as f64 + rho * (z as f64 - u as f64)) / (1.0 + rho))
                .collect();
            self.weights[i] = Tensor::from_f64(a.dims(), &w)?;
        }
        Ok(())
    }

    fn weights(&self) -> Vec<&Tensor> {
        self.weights.iter().collect()
    }

    fn objective(&self, state: &AdmmState, config: &AdmmConfig) -> Result<Option<f64>> {
        let mut total = 0.0;
        for i in 0..self.targets.len() {
            for ((&w, &a), (&z, &u)) in self.weights[i]
                .data()
                .iter()
                .zip(self.targets[i].data())
                .zip(state.z()[i].data().iter().zip(state.u()[i].data()))
            {
                total += 0.5 * (w as f64 - a as f64).powi(2) + 0.5 * config.rho[i] * (w as f64 - z as f64 + u as f64).powi(2);
            }
        }
        Ok(Some(total))
    }
}

/// Targets made of `budget` entries with magnitude in [0.5, 1] plus small
/// dense noise of magnitude at most `noise`, started at `W = A`.
pub fn near_sparse_problem(sizes: &[(usize, usize)], noise: f32, seed: u64) -> QuadraticProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets: Vec<Tensor> = sizes
        .iter()
        .map(|&(n, l)| {
            let mut v: Vec<f32> = (0..n).map(|_| rng.random_range(-noise..noise)).collect();
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..l {
                let j = rng.random_range(i..n);
                idx.swap(i, j);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                v[idx[i]] = sign * rng.random_range(0.5f32..1.0);
            }
            Tensor::from_vec(&[n], v).unwrap()
        })
        .collect();
    QuadraticProblem {
        weights: targets.clone(),
        targets,
    }
}

/// Random 28x28 images with labels `i % 10`.
pub fn synthetic_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels: Vec<f32> = (0..n * 784).map(|_| (rng.random_range(0u8..=255) as f32) / 255.0).collect();
    let images = Tensor::from_vec(&[n, 1, 28, 28], pixels).unwrap();
    Dataset::new(images, (0..n).map(|i| (i % 10) as u8).collect()).unwrap()
}

/// Writes a synthetic train/test pair in the standard MNIST file names.
pub fn write_synthetic_mnist(dir: &Path, train: usize, test: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for (n, seed, prefix) in [(train, 1, "train"), (test, 2, "t10k")] {
        let (images, labels) = encode_idx(&synthetic_dataset(n, seed));
        std::fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), images).unwrap();
        std::fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), labels).unwrap();
    }
}

/// MNIST directory from `MNIST_DIR`, else `<workspace>/data/mnist`.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}
