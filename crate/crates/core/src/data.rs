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

//! MNIST ingestion from IDX files and seeded mini-batch iteration.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const CLASSES: usize = 10;

/// Images `n x 1 x 28 x 28` scaled to `[0, 1]` with labels in `[0, 10)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<u8>) -> Result<Self> {
        let dims = images.dims();
        if dims.len() != 4 || dims[1..] != [1, SIDE, SIDE] {
            return Err(Error::dim(format!(
                "images must be n x 1 x {SIDE} x {SIDE}, got {}",
                images.shape()
            )));
        }
        if dims[0] != labels.len() {
            return Err(Error::input(format!(
                "{} images but {} labels",
                dims[0],
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= CLASSES) {
            return Err(Error::input(format!("label {bad} outside [0, {CLASSES})")));
        }
        if images.data().iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::input("pixel values must lie in [0, 1]"));
        }
        Ok(Dataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Copies out the samples at `indices` as a batch.
    pub fn gather(&self, indices: &[usize]) -> Result<Batch> {
        if indices.is_empty() {
            return Err(Error::input("cannot gather an empty batch"));
        }
        const PIXELS: usize = SIDE * SIDE;
        let mut data = Vec::with_capacity(indices.len() * PIXELS);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::input(format!("sample index {i} out of range")));
            }
            data.extend_from_slice(&self.images.data()[i * PIXELS..(i + 1) * PIXELS]);
            labels.push(self.labels[i] as usize);
        }
        let images = Tensor::from_parts_unchecked(Shape::new(&[indices.len(), 1, SIDE, SIDE])?, data);
        Ok(Batch {
            images,
            labels,
            indices: indices.to_vec(),
        })
    }

    /// The first `n` samples (or all, if fewer).
    pub fn head(&self, n: usize) -> Result<Dataset> {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        let b = self.gather(&idx)?;
        Dataset::new(
            b.images,
            b.labels.into_iter().map(|l| l as u8).collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
    /// Positions of these samples in the source dataset.
    pub indices: Vec<usize>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    source: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Format {
            source_name: self.source.to_string(),
            offset: offset as u64,
            message: message.into(),
        }
    }

    fn u32_be(&mut self) -> Result<u32> {
        let end = self.offset + 4;
        let chunk = self
            .bytes
            .get(self.offset..end)
            .ok_or_else(|| self.err(self.offset, "file truncated inside header"))?;
        self.offset = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.offset + len;
        let chunk = self.bytes.get(self.offset..end).ok_or_else(|| {
            self.err(
                self.bytes.len(),
                format!("file truncated: payload needs {len} bytes from offset {}", self.offset),
            )
        })?;
        self.offset = end;
        Ok(chunk)
    }

    fn expect_magic(&mut self, want: u32) -> Result<()> {
        let got = self.u32_be()?;
        if got != want {
            return Err(self.err(0, format!("bad magic 0x{got:08x}, expected 0x{want:08x}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(self.err(self.offset, "trailing bytes after payload"));
        }
        Ok(())
    }
}

/// Parses IDX image and label payloads already in memory.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let mut img = Reader {
        bytes: images,
        offset: 0,
        source: "images",
    };
    img.expect_magic(IMAGE_MAGIC)?;
    let count = img.u32_be()? as usize;
    let rows_at = img.offset;
    let rows = img.u32_be()? as usize;
    let cols = img.u32_be()? as usize;
    if rows != SIDE || cols != SIDE {
        return Err(img.err(rows_at, format!("images are {rows}x{cols}, expected {SIDE}x{SIDE}")));
    }
    let pixels = img.take(count * rows * cols)?;
    img.finish()?;

    let mut lab = Reader {
        bytes: labels,
        offset: 0,
        source: "labels",
    };
    lab.expect_magic(LABEL_MAGIC)?;
    let count_at = lab.offset;
    let label_count = lab.u32_be()? as usize;
    if label_count != count {
        return Err(lab.err(
            count_at,
            format!("{label_count} labels for {count} images"),
        ));
    }
    let payload_at = lab.offset;
    let raw = lab.take(count)?;
    lab.finish()?;
    if let Some(pos) = raw.iter().position(|&l| l as usize >= CLASSES) {
        return Err(lab.err(payload_at + pos, format!("label {} out of range", raw[pos])));
    }
    if count == 0 {
        return Err(img.err(4, "dataset has no samples"));
    }

    let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    let images = Tensor::from_parts_unchecked(Shape::new(&[count, 1, SIDE, SIDE])?, data);
    Dataset::new(images, raw.to_vec())
}

/// Loads an IDX image file and its label file.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx(&images, &labels).map_err(|e| match e {
        Error::Format {
            source_name,
            offset,
            message,
        } => Error::Format {
            source_name: if source_name == "images" {
                images_path.display().to_string()
            } else {
                labels_path.display().to_string()
            },
            offset,
            message,
        },
        other => other,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Loads a split from a directory holding the standard uncompressed file names.
pub fn load_mnist(dir: &Path, split: Split) -> Result<Dataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    load_idx(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Serialises a dataset back into IDX `(images, labels)` bytes.
pub fn encode_idx(dataset: &Dataset) -> (Vec<u8>, Vec<u8>) {
    let n = dataset.len() as u32;
    let mut images = Vec::with_capacity(16 + dataset.images.numel());
    images.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    images.extend_from_slice(&n.to_be_bytes());
    images.extend_from_slice(&(SIDE as u32).to_be_bytes());
    images.extend_from_slice(&(SIDE as u32).to_be_bytes());
    images.extend(dataset.images.data().iter().map(|&p| (p * 255.0).round() as u8));
    let mut labels = Vec::with_capacity(8 + dataset.len());
    labels.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&n.to_be_bytes());
    labels.extend_from_slice(&dataset.labels);
    (images, labels)
}

/// Mini-batch iterator over one pass of a dataset. The final short batch is included.
pub struct Batches<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let batch = self
            .dataset
            .gather(&self.order[self.next..end])
            .expect("indices come from a permutation of the dataset");
        self.next = end;
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.next).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for Batches<'_> {}

/// One epoch of batches, in a seeded random order when `shuffle` is set.
pub fn batches(dataset: &Dataset, batch_size: usize, seed: u64, shuffle: bool) -> Result<Batches<'_>> {
    if batch_size == 0 {
        return Err(Error::config("batch_size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    if shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(Batches {
        dataset,
        order,
        batch_size,
        next: 0,
    })
}
