//! Enumeration of integer points inside an ellipsoid `(k - c)ᵀ A (k - c) ≤ r²`
//! by the Fincke–Pohst recursion over a Cholesky factor of `A`.

use crate::error::{Error, Result};

/// Cholesky data of a fixed positive definite form, reusable across centers.
#[derive(Clone, Debug)]
pub struct Ellipsoid {
    dim: usize,
    /// Upper factor `R` with `A = Rᵀ R`, row-major.
    r: Vec<f64>,
    /// Smallest eigenvalue of `A`.
    lambda_min: f64,
    // scratch
    k: Vec<i64>,
    partial: Vec<f64>,
    shift: Vec<f64>,
    hi: Vec<i64>,
}

impl Ellipsoid {
    pub fn new(a: &nalgebra::DMatrix<f64>) -> Result<Self> {
        let dim = a.nrows();
        if a.ncols() != dim {
            return Err(Error::InvalidParameter("quadratic form must be square".into()));
        }
        let lambda_min = if dim == 0 {
            f64::INFINITY
        } else {
            a.clone().symmetric_eigenvalues().min()
        };
        let chol = nalgebra::Cholesky::new(a.clone())
            .ok_or_else(|| Error::InvalidParameter("quadratic form is not positive definite".into()))?;
        let l = chol.l();
        let mut r = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                r[i * dim + j] = l[(j, i)];
            }
        }
        Ok(Self {
            dim,
            r,
            lambda_min,
            k: vec![0; dim],
            partial: vec![0.0; dim + 1],
            shift: vec![0.0; dim],
            hi: vec![0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// `(k - c)ᵀ A (k - c)`.
    pub fn value(&self, k: &[i64], c: &[f64]) -> f64 {
        let n = self.dim;
        (0..n)
            .map(|i| {
                let s: f64 = (i..n).map(|j| self.r[i * n + j] * (k[j] as f64 - c[j])).sum();
                s * s
            })
            .sum()
    }

    /// Calls `visit(k, value)` for every integer `k` with value `≤ radius2`.
    /// Points are visited in a fixed order depending only on the inputs.
    pub fn for_each(&mut self, c: &[f64], radius2: f64, mut visit: impl FnMut(&[i64], f64)) {
        let n = self.dim;
        if n == 0 {
            visit(&[], 0.0);
            return;
        }
        if !(radius2 >= 0.0) {
            return;
        }
        // partial[i] is the contribution of coordinates i..n
        self.partial[n] = 0.0;
        let mut i = n - 1;
        self.start(i, c, radius2);
        loop {
            if self.k[i] > self.hi[i] {
                if i == n - 1 {
                    return;
                }
                i += 1;
                self.k[i] += 1;
                continue;
            }
            let rii = self.r[i * n + i];
            let t = rii * (self.k[i] as f64 - c[i] + self.shift[i]);
            let val = self.partial[i + 1] + t * t;
            if val > radius2 {
                self.k[i] += 1;
                continue;
            }
            if i == 0 {
                visit(&self.k, val);
                self.k[0] += 1;
                continue;
            }
            self.partial[i] = val;
            i -= 1;
            self.start(i, c, radius2);
        }
    }

    /// Sets `shift[i]` from the coordinates above `i` and the admissible
    /// range of `k[i]`.
    fn start(&mut self, i: usize, c: &[f64], radius2: f64) {
        let n = self.dim;
        let rii = self.r[i * n + i];
        let s: f64 = ((i + 1)..n).map(|j| self.r[i * n + j] * (self.k[j] as f64 - c[j])).sum();
        self.shift[i] = s / rii;
        let half = ((radius2 - self.partial[i + 1]).max(0.0)).sqrt() / rii;
        let mid = c[i] - self.shift[i];
        self.k[i] = (mid - half).ceil() as i64;
        self.hi[i] = (mid + half).floor() as i64;
    }

    /// Nearest-integer rounding of `c`, a cheap upper bound on the minimum.
    pub fn rounded_value(&self, c: &[f64]) -> (Vec<i64>, f64) {
        let k: Vec<i64> = c.iter().map(|x| x.round() as i64).collect();
        let v = self.value(&k, c);
        (k, v)
    }
}

/// Upper bound on `Σ_{k: Q(k) > R} e^{-Q(k)}` for `Q(k) = (k-c)ᵀA(k-c)`,
/// using `e^{-Q} ≤ e^{-R/2} e^{-Q/2}` outside the ellipsoid and
/// `Q ≥ λ_min |k - c|²` together with the one-dimensional bound
/// `Σ_k e^{-a (k - x)²} ≤ 1 + √(π/a)`.
pub fn gaussian_tail_bound(lambda_min: f64, dim: usize, radius2: f64) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let a = lambda_min / 2.0;
    let per_axis = 1.0 + (std::f64::consts::PI / a).sqrt();
    (-radius2 / 2.0 + dim as f64 * per_axis.ln()).exp()
}
