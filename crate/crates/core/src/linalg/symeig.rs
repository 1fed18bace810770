//! Dense symmetric eigensolver: Householder tridiagonalisation followed by
//! the implicit QL iteration (the EISPACK `tred2`/`tql2` pair).
//!
//! Storage is column-major so both the reduction and the rotation
//! accumulation walk contiguous memory.

use crate::linalg::LinalgError;
use crate::scalar::Real;

const MAX_QL_ITERATIONS: usize = 60;

/// Eigen-decomposition of a symmetric matrix, eigenvalues nonincreasing.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    /// Column-major `n × n`; column `j` belongs to `values[j]`. Empty when
    /// vectors were not requested.
    pub vectors: Vec<T>,
    n: usize,
}

impl<T: Real> SymEigen<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn vector(&self, j: usize) -> &[T] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }
}

/// Decomposes the symmetric matrix `a` (row- or column-major, `n × n`).
///
/// Only the lower triangle is read.
pub fn sym_eigen<T: Real>(a: &[T], n: usize, want_vectors: bool) -> Result<SymEigen<T>, LinalgError> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Ok(SymEigen { values: vec![], vectors: vec![], n });
    }
    // v[col * n + row]; symmetric input so the layout does not matter.
    let mut v = a.to_vec();
    for j in 0..n {
        for i in 0..j {
            v[j * n + i] = v[i * n + j];
        }
    }
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(&mut v, &mut d, &mut e, n);
    tql2(&mut v, &mut d, &mut e, n, want_vectors)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = if want_vectors {
        let mut out = Vec::with_capacity(n * n);
        for &i in &order {
            out.extend_from_slice(&v[i * n..(i + 1) * n]);
        }
        out
    } else {
        Vec::new()
    };
    Ok(SymEigen { values, vectors, n })
}

#[inline]
fn ix(n: usize, row: usize, col: usize) -> usize {
    col * n + row
}

fn tred2<T: Real>(v: &mut [T], d: &mut [T], e: &mut [T], n: usize) {
    for j in 0..n {
        d[j] = v[ix(n, n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in d.iter().take(i) {
            scale = scale + dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[ix(n, i - 1, j)];
                v[ix(n, i, j)] = T::zero();
                v[ix(n, j, i)] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk = *dk / scale;
                h = h + *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[ix(n, j, i)] = f;
                g = e[j] + v[ix(n, j, j)] * f;
                let col = j * n;
                for k in (j + 1)..i {
                    let vkj = v[col + k];
                    g = g + vkj * d[k];
                    e[k] = e[k] + vkj * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                let col = j * n;
                for k in j..i {
                    v[col + k] = v[col + k] - (f * e[k] + g * d[k]);
                }
                d[j] = v[ix(n, i - 1, j)];
                v[ix(n, i, j)] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[ix(n, n - 1, i)] = v[ix(n, i, i)];
        v[ix(n, i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[ix(n, k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g = g + v[ix(n, k, i + 1)] * v[ix(n, k, j)];
                }
                let col = j * n;
                for k in 0..=i {
                    v[col + k] = v[col + k] - g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[ix(n, k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[ix(n, n - 1, j)];
        v[ix(n, n - 1, j)] = T::zero();
    }
    v[ix(n, n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

fn tql2<T: Real>(
    v: &mut [T],
    d: &mut [T],
    e: &mut [T],
    n: usize,
    want_vectors: bool,
) -> Result<(), LinalgError> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let two = T::lit(2.0);
    let eps = T::epsilon();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(LinalgError::NoConvergence { index: l });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
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
                    if want_vectors {
                        let (lo, hi) = v.split_at_mut((i + 1) * n);
                        let col_i = &mut lo[i * n..];
                        let col_i1 = &mut hi[..n];
                        for k in 0..n {
                            let hk = col_i1[k];
                            col_i1[k] = s * col_i[k] + c * hk;
                            col_i[k] = c * col_i[k] - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = T::zero();
    }
    Ok(())
}
