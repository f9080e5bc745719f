// SPDX-License-Identifier: MIT OR Apache-2.0

//! Shared 2D principal-component frame for residual states, and per-layer
//! shift magnitudes.
//!
//! All arithmetic here is `f64`; residual states arrive as `f32` and are
//! widened on entry.

pub mod eigen;

use serde::{Deserialize, Serialize};

use crate::model::Trace;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProjectionError {
    #[error("no input vectors")]
    EmptyInput,
    #[error("non-finite value at vector {vector}, coordinate {coordinate}")]
    NonFinite { vector: usize, coordinate: usize },
    #[error("expected width {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("token position {token_pos} out of range for {n_tokens} tokens")]
    OutOfRange { token_pos: usize, n_tokens: usize },
}

/// Mean and two orthonormal principal directions.
///
/// `components` is all zeros when the input has no spread at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBasis {
    pub mean: Vec<f64>,
    pub components: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
    pub fitted_over: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

/// `d[b]` is the cosine distance between a token's states before and after
/// block `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftProfile {
    pub d: Vec<f64>,
}

/// Which residual states a basis is fitted over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "token_pos")]
pub enum FitScope {
    /// every state of every token
    #[default]
    Session,
    /// the states of one token only
    Token(usize),
}

/// Second eigenvalues below this fraction of the first count as zero.
const RANK1_RATIO: f64 = 1e-10;

/// Fits the top-2 principal components of `states`, a row-major list of
/// `d_model`-wide vectors.
pub fn fit_pca<T: Copy + Into<f64>>(states: &[T], d_model: usize) -> Result<ProjectionBasis, ProjectionError> {
    if d_model == 0 || states.is_empty() {
        return Err(ProjectionError::EmptyInput);
    }
    if !states.len().is_multiple_of(d_model) {
        return Err(ProjectionError::Shape {
            expected: d_model,
            actual: states.len() % d_model,
        });
    }
    let n = states.len() / d_model;
    let mut x: Vec<f64> = Vec::with_capacity(states.len());
    let mut max_abs = 0.0f64;
    for (i, &v) in states.iter().enumerate() {
        let v: f64 = v.into();
        if !v.is_finite() {
            return Err(ProjectionError::NonFinite {
                vector: i / d_model,
                coordinate: i % d_model,
            });
        }
        max_abs = max_abs.max(v.abs());
        x.push(v);
    }

    let mut mean = vec![0.0f64; d_model];
    for row in x.chunks_exact(d_model) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for row in x.chunks_exact_mut(d_model) {
        for (v, &m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let norm = if n > 1 { (n - 1) as f64 } else { 1.0 };

    let (values, vectors) = if n < d_model {
        top_two_from_gram(&x, n, d_model, norm)
    } else {
        top_two_from_covariance(&x, d_model, norm)
    };

    // Centering leaves rounding residue of order eps * |x| per coordinate,
    // even for identical inputs; variance at that level is no spread at all.
    let floor = (max_abs * f64::EPSILON).powi(2) * (d_model as f64) * 64.0;
    let zero = vec![0.0f64; d_model];
    if values[0] <= floor {
        return Ok(ProjectionBasis {
            mean,
            components: [zero.clone(), zero],
            explained_variance: [0.0, 0.0],
            fitted_over: n,
        });
    }
    let mut c0 = vectors[0].clone();
    normalize(&mut c0);
    apply_sign_convention(&mut c0);
    let (c1, v1) = if values[1] <= floor || values[1] < RANK1_RATIO * values[0] {
        (pivot_orthogonal(&c0), 0.0)
    } else {
        let mut c1 = vectors[1].clone();
        // re-orthogonalize against c0 to remove drift from the Gram route
        let p = dot(&c1, &c0);
        c1.iter_mut().zip(&c0).for_each(|(a, &b)| *a -= p * b);
        normalize(&mut c1);
        apply_sign_convention(&mut c1);
        (c1, values[1])
    };
    Ok(ProjectionBasis {
        mean,
        components: [c0, c1],
        explained_variance: [values[0], v1],
        fitted_over: n,
    })
}

/// Eigen-decomposes the `d x d` covariance.
fn top_two_from_covariance(x: &[f64], d: usize, norm: f64) -> ([f64; 2], [Vec<f64>; 2]) {
    let mut cov = vec![0.0f64; d * d];
    for row in x.chunks_exact(d) {
        for r in 0..d {
            let a = row[r];
            if a == 0.0 {
                continue;
            }
            let dst = &mut cov[r * d..r * d + r + 1];
            for (c, &b) in dst.iter_mut().zip(&row[..=r]) {
                *c += a * b;
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= norm);
    let eig = eigen::symmetric_eigen(&cov, d);
    let top = |k: usize| (eig.values[d - 1 - k].max(0.0), eig.vector(d - 1 - k).to_vec());
    let (v0, e0) = top(0);
    let (v1, e1) = if d > 1 { top(1) } else { (0.0, vec![0.0]) };
    ([v0, v1], [e0, e1])
}

/// Eigen-decomposes the `n x n` Gram matrix, cheaper when there are fewer
/// vectors than dimensions, and maps eigenvectors back through the data.
fn top_two_from_gram(x: &[f64], n: usize, d: usize, norm: f64) -> ([f64; 2], [Vec<f64>; 2]) {
    let mut gram = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            gram[i * n + j] = dot(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]) / norm;
        }
    }
    let eig = eigen::symmetric_eigen(&gram, n);
    let mut values = [0.0f64; 2];
    let mut vectors = [vec![0.0f64; d], vec![0.0f64; d]];
    for k in 0..2.min(n) {
        let u = eig.vector(n - 1 - k);
        values[k] = eig.values[n - 1 - k].max(0.0);
        let v = &mut vectors[k];
        for (i, &ui) in u.iter().enumerate() {
            for (vj, &xij) in v.iter_mut().zip(&x[i * d..(i + 1) * d]) {
                *vj += ui * xij;
            }
        }
    }
    (values, vectors)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Flips `v` so its largest-magnitude coordinate (lowest index on ties) is
/// positive.
pub fn apply_sign_convention(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Unit vector orthogonal to `c0`: the basis vector where `c0` is smallest
/// in magnitude (lowest index on ties), with its `c0` part removed.
fn pivot_orthogonal(c0: &[f64]) -> Vec<f64> {
    let d = c0.len();
    if d < 2 {
        return vec![0.0; d];
    }
    let mut k = 0;
    for (i, x) in c0.iter().enumerate() {
        if x.abs() < c0[k].abs() {
            k = i;
        }
    }
    let mut v: Vec<f64> = c0.iter().map(|&c| -c0[k] * c).collect();
    v[k] += 1.0;
    normalize(&mut v);
    apply_sign_convention(&mut v);
    v
}

impl ProjectionBasis {
    pub fn d_model(&self) -> usize {
        self.mean.len()
    }

    /// Fits over the states selected by `scope`.
    pub fn fit_trace(trace: &Trace, scope: FitScope) -> Result<Self, ProjectionError> {
        match scope {
            FitScope::Session => fit_pca(trace.all_states(), trace.d_model),
            FitScope::Token(pos) => {
                check_position(trace, pos)?;
                fit_pca(trace.trajectory(pos), trace.d_model)
            }
        }
    }

    pub fn project<T: Copy + Into<f64>>(&self, v: &[T]) -> Result<Point2D, ProjectionError> {
        if v.len() != self.d_model() {
            return Err(ProjectionError::Shape {
                expected: self.d_model(),
                actual: v.len(),
            });
        }
        let mut x = 0.0;
        let mut y = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            let c = vi.into() - self.mean[i];
            x += c * self.components[0][i];
            y += c * self.components[1][i];
        }
        Ok(Point2D { x, y })
    }

    /// The `n_layers + 1` states of one token, in layer order.
    pub fn project_trajectory(&self, trace: &Trace, token_pos: usize) -> Result<Vec<Point2D>, ProjectionError> {
        check_position(trace, token_pos)?;
        trace
            .trajectory(token_pos)
            .chunks_exact(trace.d_model)
            .map(|state| self.project(state))
            .collect()
    }

    /// Maps a point back into `d_model` space.
    pub fn lift(&self, p: Point2D) -> Vec<f64> {
        (0..self.d_model())
            .map(|i| self.mean[i] + p.x * self.components[0][i] + p.y * self.components[1][i])
            .collect()
    }
}

fn check_position(trace: &Trace, token_pos: usize) -> Result<(), ProjectionError> {
    if token_pos >= trace.n_tokens() {
        return Err(ProjectionError::OutOfRange {
            token_pos,
            n_tokens: trace.n_tokens(),
        });
    }
    Ok(())
}

/// `1 - cos(a, b)`, with 0 for two zero vectors and 1 when only one is zero.
pub fn cosine_distance(a: &[f32], b: &[f32]) -> f64 {
    let mut ab = 0.0f64;
    let mut aa = 0.0f64;
    let mut bb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    match (aa == 0.0, bb == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => (1.0 - ab / (aa * bb).sqrt()).clamp(0.0, 2.0),
    }
}

pub fn shift_profile(trace: &Trace, token_pos: usize) -> Result<ShiftProfile, ProjectionError> {
    check_position(trace, token_pos)?;
    let d = (0..trace.n_layers)
        .map(|b| cosine_distance(trace.residual(token_pos, b), trace.residual(token_pos, b + 1)))
        .collect();
    Ok(ShiftProfile { d })
}

/// `n_tokens x n_layers` shift magnitudes, row per token.
pub fn shift_grid(trace: &Trace) -> Vec<Vec<f64>> {
    (0..trace.n_tokens())
        .map(|i| shift_profile(trace, i).expect("position in range").d)
        .collect()
}
