// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scalar kernels for the forward pass.
//!
//! Every reduction accumulates in ascending index order, one output element
//! at a time, so a value depends only on its own inputs and never on how
//! many rows are processed together.

/// Dense layer stored input-major: `weight[k * out_dim + j]` is the weight
/// from input `k` to output `j`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Linear {
    /// `out[p] = bias + sum_k input[p][k] * weight[k]` for every row `p`.
    ///
    /// Rows share each weight row while it is hot in cache; each output
    /// still accumulates over `k` in order.
    pub fn forward(&self, input: &[f32], rows: usize) -> Vec<f32> {
        debug_assert_eq!(input.len(), rows * self.in_dim);
        let mut out = Vec::with_capacity(rows * self.out_dim);
        for _ in 0..rows {
            out.extend_from_slice(&self.bias);
        }
        for k in 0..self.in_dim {
            let w = &self.weight[k * self.out_dim..(k + 1) * self.out_dim];
            for p in 0..rows {
                let a = input[p * self.in_dim + k];
                let o = &mut out[p * self.out_dim..(p + 1) * self.out_dim];
                for (o, &w) in o.iter_mut().zip(w) {
                    *o += a * w;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
    pub eps: f32,
}

impl LayerNorm {
    pub fn forward(&self, input: &[f32]) -> Vec<f32> {
        let d = self.scale.len();
        let mut out = vec![0.0; input.len()];
        for (x, y) in input.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            normalize_into(x, self.eps, y);
            for ((y, &g), &b) in y.iter_mut().zip(&self.scale).zip(&self.shift) {
                *y = *y * g + b;
            }
        }
        out
    }
}

/// Zero-mean, unit-variance normalization of one vector (population
/// variance), before any scale or shift. Mean and variance accumulate in
/// `f64`; the output is `f32`.
pub fn normalize_into(x: &[f32], eps: f32, out: &mut [f32]) {
    let n = x.len() as f64;
    let mut sum = 0.0f64;
    for &v in x {
        sum += v as f64;
    }
    let mean = sum / n;
    let mut sq = 0.0f64;
    for &v in x {
        let c = v as f64 - mean;
        sq += c * c;
    }
    let inv = 1.0 / (sq / n + eps as f64).sqrt();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = ((v as f64 - mean) * inv) as f32;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gelu {
    /// `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`
    #[default]
    Tanh,
    /// `0.5 x (1 + erf(x / sqrt 2))`
    Erf,
}

impl Gelu {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Gelu::Tanh => {
                const C: f32 = 0.797_884_6; // sqrt(2 / pi)
                0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
            }
            Gelu::Erf => 0.5 * x * (1.0 + libm::erff(x * std::f32::consts::FRAC_1_SQRT_2)),
        }
    }
}

/// In-place softmax over `scores`.
pub fn softmax(scores: &mut [f32]) {
    let mut max = f32::NEG_INFINITY;
    for &s in scores.iter() {
        max = max.max(s);
    }
    let mut sum = 0.0f32;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

const LANES: usize = 8;

/// `out[p][v] = sum_k rows[p][k] * table[v][k]`, with `table` stored
/// row-major as `n_out x d`.
///
/// Rows are processed in groups of eight lanes; each lane accumulates in the
/// same order as [`dot`], so results match a per-row `dot` bit for bit.
pub fn matmul_transposed(rows: &[f32], n_rows: usize, table: &[f32], d: usize) -> Vec<f32> {
    let n_out = table.len() / d;
    let mut out = vec![0.0f32; n_rows * n_out];
    let mut lanes = vec![0.0f32; d * LANES];
    for start in (0..n_rows).step_by(LANES) {
        let width = LANES.min(n_rows - start);
        lanes.iter_mut().for_each(|v| *v = 0.0);
        for l in 0..width {
            let row = &rows[(start + l) * d..(start + l + 1) * d];
            for (k, &v) in row.iter().enumerate() {
                lanes[k * LANES + l] = v;
            }
        }
        for v in 0..n_out {
            let w = &table[v * d..(v + 1) * d];
            let mut acc = [0.0f32; LANES];
            for (k, &wk) in w.iter().enumerate() {
                let h = &lanes[k * LANES..(k + 1) * LANES];
                for l in 0..LANES {
                    acc[l] += h[l] * wk;
                }
            }
            for l in 0..width {
                out[(start + l) * n_out + v] = acc[l];
            }
        }
    }
    out
}
