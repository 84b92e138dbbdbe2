//! Sparse symmetric matrices, profile Cholesky factorization and
//! Jacobi-preconditioned conjugate gradients.

use crate::error::{Error, Result};

/// Symmetric matrix in compressed sparse row form, both triangles stored.
#[derive(Clone, Debug)]
pub struct SparseSym {
    n: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    /// Each off-diagonal entry must be supplied for both triangles.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|a| (a.0, a.1));
        let mut row_start = vec![0; n + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_start[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n {
            row_start[i + 1] += row_start[i];
        }
        Self { n, row_start, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_start[i]..self.row_start[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).filter(|&(c, _)| c == i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// Number of stored entries in the lower profile (envelope) of the matrix.
    pub fn envelope_size(&self) -> usize {
        (0..self.n)
            .map(|i| i + 1 - self.row(i).map(|(c, _)| c).min().unwrap_or(i).min(i))
            .sum()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                m[(i, c)] += v;
            }
        }
        m
    }
}

/// Lower-triangular Cholesky factor stored row by row over the envelope.
/// Fill-in of a profile factorization stays inside the envelope.
#[derive(Clone, Debug)]
pub struct ProfileCholesky {
    n: usize,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl ProfileCholesky {
    pub fn factor(a: &SparseSym) -> Result<Self> {
        let n = a.dim();
        let mut first = vec![0; n];
        let mut offset = vec![0; n + 1];
        for i in 0..n {
            first[i] = a.row(i).map(|(c, _)| c).filter(|&c| c <= i).min().unwrap_or(i);
            offset[i + 1] = offset[i] + (i + 1 - first[i]);
        }
        let mut data = vec![0.0; offset[n]];
        for i in 0..n {
            for (c, v) in a.row(i) {
                if c <= i {
                    data[offset[i] + c - first[i]] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let (head, row_i) = data.split_at_mut(offset[i]);
                let s: f64 = if j < i {
                    let row_j = &head[offset[j]..offset[j + 1]];
                    row_i[k0 - fi..j - fi]
                        .iter()
                        .zip(&row_j[k0 - fj..j - fj])
                        .map(|(x, y)| x * y)
                        .sum()
                } else {
                    row_i[..i - fi].iter().map(|x| x * x).sum()
                };
                let aij = row_i[j - fi] - s;
                if j < i {
                    let ljj = head[offset[j + 1] - 1];
                    row_i[j - fi] = aij / ljj;
                } else {
                    if aij <= 0.0 || !aij.is_finite() {
                        return Err(Error::Factorization(i));
                    }
                    row_i[i - fi] = aij.sqrt();
                }
            }
        }
        Ok(Self { n, first, offset, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn diag(&self, i: usize) -> f64 {
        self.data[self.offset[i + 1] - 1]
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1] - 1];
            let s: f64 = row.iter().zip(&b[fi..i]).map(|(l, x)| l * x).sum();
            b[i] = (b[i] - s) / self.diag(i);
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward(&self, y: &mut [f64]) {
        for i in (0..self.n).rev() {
            let xi = y[i] / self.diag(i);
            y[i] = xi;
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1] - 1];
            for (yj, l) in y[fi..i].iter_mut().zip(row) {
                *yj -= l * xi;
            }
        }
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.diag(i).ln()).sum::<f64>()
    }
}

/// Outcome of a conjugate-gradient run.
#[derive(Clone, Copy, Debug)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned CG for a symmetric positive definite operator.
pub fn conjugate_gradient<F>(
    apply: F,
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgStats>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        let rel = norm2(&r) / bnorm;
        if rel <= rel_tol {
            return Ok(CgStats { iterations: it, relative_residual: rel });
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = norm2(&r) / bnorm;
    if rel <= rel_tol {
        Ok(CgStats { iterations: max_iter, relative_residual: rel })
    } else {
        Err(Error::Solver { residual: rel, iterations: max_iter })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}
