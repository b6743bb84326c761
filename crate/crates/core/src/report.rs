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

//! Per-layer compression tables.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Arch, Model};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerRow {
    pub name: String,
    pub original: usize,
    pub nonzero: usize,
    pub is_conv: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accuracy {
    pub baseline: Option<f64>,
    pub current: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub arch: Arch,
    pub rows: Vec<LayerRow>,
    pub accuracy: Option<Accuracy>,
}

/// Errors unless both models are the same reference architecture.
pub fn check_same_arch(a: &Model, b: &Model) -> Result<Arch> {
    match (a.arch(), b.arch()) {
        (Some(x), Some(y)) if x == y => Ok(x),
        (x, y) => Err(Error::input(format!(
            "architecture mismatch: {} vs {}",
            x.map_or("custom", |a| a.as_str()),
            y.map_or("custom", |a| a.as_str())
        ))),
    }
}

/// `count / total` as a percentage with two decimals.
pub fn percent(count: usize, total: usize) -> String {
    format!("{:.2}", 100.0 * count as f64 / total as f64)
}

/// Formats `x` with three significant figures.
pub fn sig3(x: f64) -> String {
    if !x.is_finite() {
        return "inf".into();
    }
    if x == 0.0 {
        return "0.00".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    // Rounding can carry into the next decade (9.996 -> 10.0).
    let rounded_magnitude = {
        let scale = 10f64.powi(2 - magnitude);
        ((x.abs() * scale).round() / scale).log10().floor() as i32
    };
    let decimals = 2 - rounded_magnitude;
    if decimals >= 0 {
        format!("{:.*}", decimals as usize, x)
    } else {
        let unit = 10f64.powi(-decimals);
        format!("{:.0}", (x / unit).round() * unit)
    }
}

/// `original / nonzero`; infinite when nothing is left.
pub fn ratio(original: usize, nonzero: usize) -> f64 {
    original as f64 / nonzero as f64
}

impl Report {
    /// Counts nonzero prunable weights of `model`. A value counts as zero
    /// only if it is +0.0 or -0.0.
    pub fn from_model(model: &Model) -> Result<Self> {
        let arch = model
            .arch()
            .ok_or_else(|| Error::input("reports need a lenet300 or lenet5 model"))?;
        let rows = model
            .params()
            .into_iter()
            .zip(model.conv_flags())
            .map(|((name, w), is_conv)| LayerRow {
                name: name.to_string(),
                original: w.numel(),
                nonzero: w.count_nonzero(),
                is_conv,
            })
            .collect();
        Ok(Report {
            arch,
            rows,
            accuracy: None,
        })
    }

    pub fn with_accuracy(mut self, baseline: Option<f64>, current: f64) -> Self {
        self.accuracy = Some(Accuracy { baseline, current });
        self
    }

    pub fn total_original(&self) -> usize {
        self.rows.iter().map(|r| r.original).sum()
    }

    pub fn total_nonzero(&self) -> usize {
        self.rows.iter().map(|r| r.nonzero).sum()
    }

    pub fn ratio(&self) -> f64 {
        ratio(self.total_original(), self.total_nonzero())
    }

    /// `(original, nonzero)` over convolution layers, if there are any.
    pub fn conv_subtotal(&self) -> Option<(usize, usize)> {
        let conv: Vec<&LayerRow> = self.rows.iter().filter(|r| r.is_conv).collect();
        if conv.is_empty() {
            return None;
        }
        Some((
            conv.iter().map(|r| r.original).sum(),
            conv.iter().map(|r| r.nonzero).sum(),
        ))
    }

    fn table(&self) -> Vec<[String; 5]> {
        let mut lines = vec![[
            "layer".to_string(),
            "weights".to_string(),
            "nonzero".to_string(),
            "kept %".to_string(),
            "ratio".to_string(),
        ]];
        let row = |name: &str, o: usize, n: usize| {
            [
                name.to_string(),
                o.to_string(),
                n.to_string(),
                percent(n, o),
                format!("{}x", sig3(ratio(o, n))),
            ]
        };
        for r in &self.rows {
            lines.push(row(&r.name, r.original, r.nonzero));
        }
        if let Some((o, n)) = self.conv_subtotal() {
            lines.push(row("conv total", o, n));
        }
        lines.push(row("total", self.total_original(), self.total_nonzero()));
        lines
    }

    pub fn to_text(&self) -> String {
        let lines = self.table();
        let mut widths = [0usize; 5];
        for l in &lines {
            for (w, cell) in widths.iter_mut().zip(l) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = format!("{} compression\n", self.arch);
        for l in &lines {
            let mut line = format!("{:<w$}", l[0], w = widths[0]);
            for (cell, w) in l.iter().zip(widths).skip(1) {
                let _ = write!(line, "  {cell:>w$}");
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "{} of {} weights kept ({}%), {}x fewer",
            self.total_nonzero(),
            self.total_original(),
            percent(self.total_nonzero(), self.total_original()),
            sig3(self.ratio())
        );
        if let Some(acc) = self.accuracy {
            match acc.baseline {
                Some(b) => {
                    let _ = writeln!(
                        out,
                        "accuracy {:.4} (baseline {b:.4}, change {:+.2} points)",
                        acc.current,
                        100.0 * (acc.current - b)
                    );
                }
                None => {
                    let _ = writeln!(out, "accuracy {:.4}", acc.current);
                }
            }
        }
        out
    }

    /// Header `layer,original,nonzero,percent,ratio`, one row per layer, then
    /// `conv_total` (LeNet-5 only) and `total`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,original,nonzero,percent,ratio\n");
        let mut row = |name: &str, o: usize, n: usize| {
            let _ = writeln!(out, "{name},{o},{n},{},{}", percent(n, o), sig3(ratio(o, n)));
        };
        for r in &self.rows {
            row(&r.name, r.original, r.nonzero);
        }
        if let Some((o, n)) = self.conv_subtotal() {
            row("conv_total", o, n);
        }
        row("total", self.total_original(), self.total_nonzero());
        if let Some(acc) = self.accuracy {
            if let Some(b) = acc.baseline {
                let _ = writeln!(out, "# baseline_accuracy,{b:.4}");
            }
            let _ = writeln!(out, "# accuracy,{:.4}", acc.current);
        }
        out
    }
}
