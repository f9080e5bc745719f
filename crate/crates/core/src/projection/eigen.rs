// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense symmetric eigendecomposition: Householder reduction to tridiagonal
//! form followed by the implicit QL method (the EISPACK `tred2`/`tql2` pair).

/// Eigenpairs of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub n: usize,
    /// ascending
    pub values: Vec<f64>,
    /// `vectors[j * n..(j + 1) * n]` is the unit eigenvector of `values[j]`
    pub vectors: Vec<f64>,
}

impl SymmetricEigen {
    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }
}

/// Decomposes the symmetric `n x n` row-major matrix `a`. Only the lower
/// triangle is read.
pub fn symmetric_eigen(a: &[f64], n: usize) -> SymmetricEigen {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return SymmetricEigen {
            n,
            values: Vec::new(),
            vectors: Vec::new(),
        };
    }
    // `w` holds V transposed: w[c * n + r] = V[r][c]. The algorithm walks V
    // down its columns, which are contiguous here.
    let mut w = vec![0.0f64; n * n];
    for r in 0..n {
        for c in 0..=r {
            w[c * n + r] = a[r * n + c];
            w[r * n + c] = a[r * n + c];
        }
    }
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    tred2(n, &mut w, &mut d, &mut e);
    tql2(n, &mut w, &mut d, &mut e);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &i in &order {
        vectors.extend_from_slice(&w[i * n..(i + 1) * n]);
    }
    SymmetricEigen { n, values, vectors }
}

macro_rules! v {
    ($w:ident, $n:ident, $r:expr, $c:expr) => {
        $w[($c) * $n + ($r)]
    };
}

fn tred2(n: usize, w: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = v!(w, n, n - 1, j);
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v!(w, n, i - 1, j);
                v!(w, n, i, j) = 0.0;
                v!(w, n, j, i) = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].iter_mut().for_each(|x| *x = 0.0);

            for j in 0..i {
                f = d[j];
                v!(w, n, j, i) = f;
                g = e[j] + v!(w, n, j, j) * f;
                for k in j + 1..i {
                    g += v!(w, n, k, j) * d[k];
                    e[k] += v!(w, n, k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v!(w, n, k, j) -= f * e[k] + g * d[k];
                }
                d[j] = v!(w, n, i - 1, j);
                v!(w, n, i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    // accumulate the transformations
    for i in 0..n - 1 {
        v!(w, n, n - 1, i) = v!(w, n, i, i);
        v!(w, n, i, i) = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v!(w, n, k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v!(w, n, k, i + 1) * v!(w, n, k, j);
                }
                for k in 0..=i {
                    v!(w, n, k, j) -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v!(w, n, k, i + 1) = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v!(w, n, n - 1, j);
        v!(w, n, n - 1, j) = 0.0;
    }
    v!(w, n, n - 1, n - 1) = 1.0;
    e[0] = 0.0;
}

fn tql2(n: usize, w: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iterations = 0;
            loop {
                iterations += 1;
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[l + 2..n] {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = w.split_at_mut((i + 1) * n);
                    let col_i = &mut lo[i * n..];
                    let col_i1 = &mut hi[..n];
                    for (a, b) in col_i.iter_mut().zip(col_i1.iter_mut()) {
                        let t = *b;
                        *b = s * *a + c * t;
                        *a = c * *a - s * t;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || iterations >= 64 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
}
