//! Certified Gaussian sums over integer vectors,
//! `S = Σ_{k ∈ Zⁿ} exp(-kᵀ A k + bᵀ k + i cᵀ k)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::enumerate::{gaussian_tail_bound, Ellipsoid};
use crate::error::{Error, Result};

/// `S = exp(log_scale) · (value ± error)`. For a real sum `value.re ≥ 1`.
#[derive(Clone, Copy, Debug)]
pub struct LatticeSum {
    pub log_scale: f64,
    pub value: Complex64,
    pub error: f64,
    pub points: usize,
}

impl LatticeSum {
    pub fn log_abs(&self) -> f64 {
        self.log_scale + self.value.norm().ln()
    }

    /// Error bound relative to `|value|`.
    pub fn rel_error(&self) -> f64 {
        self.error / self.value.norm()
    }
}

/// Quadratic form data needed by the tail certificate.
pub(crate) struct FormData {
    pub ellipsoid: Ellipsoid,
    pub lambda_max: f64,
    pub log_det: f64,
    pub inverse: DMatrix<f64>,
}

impl FormData {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let ellipsoid = Ellipsoid::new(a)?;
        let n = a.nrows();
        let (lambda_max, log_det, inverse) = if n == 0 {
            (0.0, 0.0, DMatrix::zeros(0, 0))
        } else {
            let eig = a.clone().symmetric_eigenvalues();
            let chol = nalgebra::Cholesky::new(a.clone())
                .ok_or_else(|| Error::InvalidParameter("quadratic form is not positive definite".into()))?;
            (eig.max(), eig.iter().map(|x| x.ln()).sum(), chol.inverse())
        };
        Ok(Self { ellipsoid, lambda_max, log_det, inverse })
    }

    pub fn dim(&self) -> usize {
        self.ellipsoid.dim()
    }

    /// Smallest `R` with `Σ_{Q(k) > R} e^{-Q(k)} ≤ e^{log_target}` for any center.
    ///
    /// Two bounds are combined. The elementary one uses `λ_min`. The other
    /// writes `e^{-Q} ≤ e^{-(1-t)R} e^{-tQ}` and bounds the full sum of
    /// `e^{-tQ}` by Poisson summation, which needs `det A` and `λ_max`.
    pub fn certified_radius(&self, log_target: f64) -> f64 {
        let n = self.dim() as f64;
        if self.dim() == 0 {
            return 0.0;
        }
        let lmin = self.ellipsoid.lambda_min();
        let elementary = 2.0 * (n * (1.0 + (2.0 * PI / lmin).sqrt()).ln() - log_target);
        let mut best = elementary;
        for i in 1..40 {
            let t = i as f64 / 40.0;
            let c = 0.5 * n * (PI / t).ln() - 0.5 * self.log_det + n * (1.0 + (t * self.lambda_max / PI).sqrt()).ln();
            let r = (c - log_target) / (1.0 - t);
            best = best.min(r);
        }
        best.max(0.0)
    }

    /// The tail bound at radius `r`; the inverse of [`Self::certified_radius`].
    pub fn tail_bound(&self, r: f64) -> f64 {
        let n = self.dim() as f64;
        if self.dim() == 0 {
            return 0.0;
        }
        let mut best = gaussian_tail_bound(self.ellipsoid.lambda_min(), self.dim(), r);
        for i in 1..40 {
            let t = i as f64 / 40.0;
            let c = 0.5 * n * (PI / t).ln() - 0.5 * self.log_det + n * (1.0 + (t * self.lambda_max / PI).sqrt()).ln();
            best = best.min((c - (1.0 - t) * r).exp());
        }
        best
    }

    /// Number of lattice points expected inside `Q ≤ r`, from the volume.
    pub fn expected_points(&self, r: f64) -> f64 {
        let n = self.dim();
        let half = n as f64 / 2.0;
        // log of the unit-ball volume π^{n/2} / Γ(n/2 + 1)
        let log_ball = half * PI.ln() - ln_gamma_half_integer(n + 2);
        (log_ball + half * r.max(1.0).ln() - 0.5 * self.log_det).exp() + 1.0
    }
}

/// `ln Γ(k/2)` for integer `k ≥ 1`.
fn ln_gamma_half_integer(k: usize) -> f64 {
    let (mut x, mut acc) = if k % 2 == 0 { (1.0, 0.0) } else { (0.5, 0.5 * PI.ln()) };
    while x < k as f64 / 2.0 - 0.25 {
        acc += x.ln();
        x += 1.0;
    }
    acc
}

/// Evaluates the sum with relative accuracy `rel_tol` with respect to the
/// sum of absolute values, visiting every enumerated point with its
/// relative weight `e^{-(Q - Q₀)}`.
pub fn lattice_sum(
    a: &DMatrix<f64>,
    b: Option<&[f64]>,
    c: Option<&[f64]>,
    rel_tol: f64,
    max_points: usize,
    visit: Option<&mut dyn FnMut(&[i64], f64)>,
) -> Result<LatticeSum> {
    let data = FormData::new(a)?;
    lattice_sum_with(&data, b, c, rel_tol, max_points, visit)
}

pub(crate) fn lattice_sum_with(
    data: &FormData,
    b: Option<&[f64]>,
    c: Option<&[f64]>,
    rel_tol: f64,
    max_points: usize,
    mut visit: Option<&mut dyn FnMut(&[i64], f64)>,
) -> Result<LatticeSum> {
    let n = data.dim();
    for v in [b, c].into_iter().flatten() {
        if v.len() != n {
            return Err(Error::InvalidParameter(format!("linear term has length {} for a form of size {n}", v.len())));
        }
    }
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    // complete the square: kᵀAk - bᵀk = (k - z)ᵀA(k - z) - zᵀAz with z = A⁻¹b/2
    let (center, shift) = match b {
        Some(b) => {
            let bv = DVector::from_column_slice(b);
            let z = &data.inverse * &bv * 0.5;
            let s = z.dot(&bv) * 0.5;
            (z.as_slice().to_vec(), s)
        }
        None => (vec![0.0; n], 0.0),
    };
    let (_, q0) = data.ellipsoid.rounded_value(&center);
    // the rounded point alone contributes 1 after rescaling by e^{Q₀}
    let radius = q0 + data.certified_radius(rel_tol.ln() - q0);
    let expected = data.expected_points(radius);
    if expected > max_points as f64 {
        return Err(Error::TooLarge(format!(
            "about {expected:.3e} lattice points needed in dimension {n} (budget {max_points})"
        )));
    }
    let mut value = Complex64::new(0.0, 0.0);
    let mut points = 0usize;
    let mut ell = data.ellipsoid.clone();
    ell.for_each(&center, radius, |k, q| {
        let w = (q0 - q).exp();
        points += 1;
        let phase = match c {
            Some(c) => k.iter().zip(c).map(|(&ki, &ci)| ki as f64 * ci).sum::<f64>(),
            None => 0.0,
        };
        value += Complex64::from_polar(w, phase);
        if let Some(f) = visit.as_deref_mut() {
            f(k, w);
        }
    });
    let error = data.tail_bound(radius) * q0.exp();
    Ok(LatticeSum { log_scale: shift - q0, value, error, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(a: &DMatrix<f64>, b: &[f64], c: &[f64], box_: i64) -> Complex64 {
        let n = a.nrows();
        let width = (2 * box_ + 1) as usize;
        let mut s = Complex64::new(0.0, 0.0);
        for idx in 0..width.pow(n as u32) {
            let mut rem = idx;
            let k: Vec<f64> = (0..n)
                .map(|_| {
                    let d = (rem % width) as i64 - box_;
                    rem /= width;
                    d as f64
                })
                .collect();
            let kv = DVector::from_column_slice(&k);
            let q = (kv.transpose() * a * &kv)[(0, 0)];
            let lin: f64 = k.iter().zip(b).map(|(x, y)| x * y).sum();
            let ph: f64 = k.iter().zip(c).map(|(x, y)| x * y).sum();
            s += Complex64::from_polar((-q + lin).exp(), ph);
        }
        s
    }

    #[test]
    fn matches_brute_force_with_linear_terms() {
        let a = DMatrix::from_row_slice(3, 3, &[0.9, -0.3, 0.1, -0.3, 0.7, -0.2, 0.1, -0.2, 0.5]);
        let b = [0.4, -1.1, 0.3];
        let c = [0.7, 2.0, -0.4];
        let s = lattice_sum(&a, Some(&b), Some(&c), 1e-12, 10_000_000, None).unwrap();
        let got = s.value * s.log_scale.exp();
        let want = brute(&a, &b, &c, 14);
        assert!((got - want).norm() < 1e-11 * want.norm().max(1.0), "{got} {want}");
        assert!(s.rel_error() < 1e-12);
    }

    #[test]
    fn one_dimensional_theta_value() {
        // Σ_k e^{-πk²} = π^{1/4} / Γ(3/4)
        let a = DMatrix::from_element(1, 1, PI);
        let s = lattice_sum(&a, None, None, 1e-14, 1000, None).unwrap();
        let want = PI.powf(0.25) / 1.225_416_702_465_177_6;
        assert!((s.value.re * s.log_scale.exp() - want).abs() < 1e-14);
    }

    #[test]
    fn tighter_tolerance_stays_inside_certificate() {
        let a = DMatrix::from_row_slice(2, 2, &[0.05, 0.01, 0.01, 0.08]);
        let lo = lattice_sum(&a, None, None, 1e-6, 10_000_000, None).unwrap();
        let hi = lattice_sum(&a, None, None, 1e-13, 10_000_000, None).unwrap();
        let (x, y) = (lo.value.re * lo.log_scale.exp(), hi.value.re * hi.log_scale.exp());
        assert!((x - y).abs() <= lo.error * lo.log_scale.exp());
        assert!(lo.rel_error() <= 1e-6);
    }

    #[test]
    fn budget_is_enforced() {
        let a = DMatrix::from_diagonal_element(6, 6, 1e-3);
        assert!(matches!(lattice_sum(&a, None, None, 1e-10, 1000, None), Err(Error::TooLarge(_))));
    }

    #[test]
    fn gamma_half_integers() {
        assert!((ln_gamma_half_integer(1) - 0.5 * PI.ln()).abs() < 1e-15);
        assert!((ln_gamma_half_integer(2)).abs() < 1e-15);
        assert!((ln_gamma_half_integer(7) - (3.323_350_970_447_843_f64).ln()).abs() < 1e-14);
        assert!((ln_gamma_half_integer(10) - 24f64.ln()).abs() < 1e-14);
    }
}
