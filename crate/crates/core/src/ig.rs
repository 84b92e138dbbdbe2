//! The integer Gaussian law `P[X = k] ∝ exp(-β (k - a)² / 2)` and the error
//! functions built from its moments.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tail mass ignored by every truncated sum.
pub const TAIL_MASS: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IGParams {
    pub a: f64,
    pub beta: f64,
}

impl IGParams {
    pub fn new(a: f64, beta: f64) -> Self {
        Self { a, beta }
    }

    fn check(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() || !self.a.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "integer Gaussian needs finite a and beta > 0, got a={}, beta={}",
                self.a, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IGStats {
    pub mean: f64,
    pub variance: f64,
    /// Third absolute central moment.
    pub third_abs: f64,
}

/// Smallest number of extra integers `K` per side such that everything
/// beyond `[floor(a) - K, ceil(a) + K]` has mass below `TAIL_MASS` times the
/// largest weight's lower bound `exp(-β/8)`.
pub fn tail_cutoff(beta: f64) -> i64 {
    let target = TAIL_MASS.ln() - beta / 8.0;
    let mut k = 1i64;
    loop {
        let kf = k as f64;
        let bound = 2f64.ln() - beta * kf * kf / 2.0 - (-(-beta * kf).exp_m1()).ln();
        if bound < target {
            return k;
        }
        k += 1;
    }
}

/// Upper bound on the relative weight outside the window of `tail_cutoff`.
fn tail_bound(beta: f64, k: i64) -> f64 {
    let kf = k as f64;
    2.0 * (-beta * kf * kf / 2.0).exp() / (-(-beta * kf).exp_m1())
}

/// Walks the support in two mirrored sequences of deviations `k - a > 0` and
/// `a - k > 0`, so that a law symmetric about `a` sums bit-identically on
/// both sides.
struct Window {
    a: f64,
    beta: f64,
    lo: i64,
    hi: i64,
    /// Squared distance from `a` to the nearest integer; weights are taken
    /// relative to it so the largest weight is 1.
    d2min: f64,
}

fn nearest_sq(a: f64) -> f64 {
    let r = a - a.round();
    r * r
}

impl Window {
    fn new(p: IGParams) -> Self {
        let k = tail_cutoff(p.beta);
        Window {
            a: p.a,
            beta: p.beta,
            lo: p.a.floor() as i64 - k,
            hi: p.a.ceil() as i64 + k,
            d2min: nearest_sq(p.a),
        }
    }

    fn weight(&self, dev: f64) -> f64 {
        (-0.5 * self.beta * (dev * dev - self.d2min)).exp()
    }

    /// Deviations on the positive side, farthest first.
    fn positive(&self) -> impl Iterator<Item = f64> + '_ {
        let first = self.a.floor() as i64 + 1;
        (first..=self.hi).rev().map(move |k| k as f64 - self.a)
    }

    /// Deviations on the negative side, farthest first.
    fn negative(&self) -> impl Iterator<Item = f64> + '_ {
        let first = self.a.ceil() as i64 - 1;
        (self.lo..=first).map(move |k| self.a - k as f64)
    }

    fn has_center(&self) -> bool {
        self.a.fract() == 0.0
    }

    /// `Σ w(d) φ(d)` over signed deviations.
    fn sum(&self, phi: impl Fn(f64) -> f64) -> f64 {
        let pos: f64 = self.positive().map(|d| self.weight(d) * phi(d)).sum();
        let neg: f64 = self.negative().map(|d| self.weight(d) * phi(-d)).sum();
        let mid = if self.has_center() { self.weight(0.0) * phi(0.0) } else { 0.0 };
        pos + neg + mid
    }
}

/// Mean, variance and third absolute central moment.
pub fn ig_stats(p: IGParams) -> Result<IGStats> {
    p.check()?;
    let w = Window::new(p);
    let z = w.sum(|_| 1.0);
    let pos: f64 = w.positive().map(|d| w.weight(d) * d).sum();
    let neg: f64 = w.negative().map(|d| w.weight(d) * d).sum();
    let shift = (pos - neg) / z;
    let variance = w.sum(|d| (d - shift) * (d - shift)) / z;
    let third_abs = w.sum(|d| (d - shift).abs().powi(3)) / z;
    Ok(IGStats { mean: p.a + shift, variance, third_abs })
}

/// Variance alone (the hot path of the error function).
pub fn ig_variance(a: f64, beta: f64) -> f64 {
    ig_stats(IGParams::new(a, beta)).expect("valid parameters").variance
}

/// Normalized probabilities over the truncated support.
pub fn ig_pmf(p: IGParams) -> Result<Vec<(i64, f64)>> {
    p.check()?;
    let w = Window::new(p);
    let z = w.sum(|_| 1.0);
    Ok((w.lo..=w.hi).map(|k| (k, w.weight(k as f64 - p.a) / z)).collect())
}

/// One exact draw. The support is truncated where the neglected mass is
/// below `TAIL_MASS`; a uniform landing in that residual is redrawn.
pub fn ig_sample<R: Rng + ?Sized>(p: IGParams, rng: &mut R) -> Result<i64> {
    p.check()?;
    Ok(ig_sample_unchecked(p.a, p.beta, rng))
}

pub(crate) fn ig_sample_unchecked<R: Rng + ?Sized>(a: f64, beta: f64, rng: &mut R) -> i64 {
    let kc = tail_cutoff_cached(beta);
    let lo = a.floor() as i64 - kc;
    let hi = a.ceil() as i64 + kc;
    let len = (hi - lo + 1) as usize;
    let mut stack = [0.0f64; 128];
    let mut heap = Vec::new();
    let w: &mut [f64] = if len <= stack.len() {
        &mut stack[..len]
    } else {
        heap.resize(len, 0.0);
        &mut heap
    };
    let d2min = nearest_sq(a);
    let mut total = 0.0;
    for (i, k) in (lo..=hi).enumerate() {
        let dev = k as f64 - a;
        let x = (-0.5 * beta * (dev * dev - d2min)).exp();
        w[i] = x;
        total += x;
    }
    // the largest weight is exactly 1
    let residual = tail_bound(beta, kc);
    loop {
        let u = rng.gen::<f64>() * (total + residual);
        if u >= total {
            continue;
        }
        let mut acc = 0.0;
        for (i, &x) in w.iter().enumerate() {
            acc += x;
            if u < acc {
                return lo + i as i64;
            }
        }
        return hi;
    }
}

/// Cumulative weights of `IG(a, β)` on the window used by
/// [`ig_sample_unchecked`], reusable when the same `(a, β)` recurs.
#[derive(Clone, Debug)]
pub(crate) struct IgTable {
    lo: i64,
    cdf: Vec<f64>,
    residual: f64,
}

impl IgTable {
    pub fn new(a: f64, beta: f64) -> Self {
        let kc = tail_cutoff(beta);
        let lo = a.floor() as i64 - kc;
        let hi = a.ceil() as i64 + kc;
        let d2min = nearest_sq(a);
        let mut acc = 0.0;
        let cdf = (lo..=hi)
            .map(|k| {
                let dev = k as f64 - a;
                acc += (-0.5 * beta * (dev * dev - d2min)).exp();
                acc
            })
            .collect();
        Self { lo, cdf, residual: tail_bound(beta, kc) }
    }

    /// Same law, and the same value for the same uniforms, as
    /// `ig_sample_unchecked(a, beta)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let total = *self.cdf.last().expect("window is non-empty");
        loop {
            let u = rng.gen::<f64>() * (total + self.residual);
            if u >= total {
                continue;
            }
            let i = self.cdf.partition_point(|&c| c <= u);
            return self.lo + i as i64;
        }
    }
}

fn tail_cutoff_cached(beta: f64) -> i64 {
    thread_local! {
        static LAST: std::cell::Cell<(f64, i64)> = const { std::cell::Cell::new((f64::NAN, 0)) };
    }
    LAST.with(|c| {
        let (b, k) = c.get();
        if b == beta {
            k
        } else {
            let k = tail_cutoff(beta);
            c.set((beta, k));
            k
        }
    })
}

/// Result of minimizing `a ↦ Var(a, β)` over `[0, 1/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceMinimum {
    pub argmin: f64,
    pub variance: f64,
}

/// Grid bracketing followed by golden-section search to `1e-9` in `a`.
pub fn min_variance(beta: f64) -> Result<VarianceMinimum> {
    IGParams::new(0.0, beta).check()?;
    const GRID: usize = 100;
    let f = |a: f64| ig_variance(a, beta);
    let grid: Vec<f64> = (0..=GRID).map(|i| 0.5 * i as f64 / GRID as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&a| f(a)).collect();
    let best = (0..=GRID).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(GRID)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > 1e-9 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    let mut out = VarianceMinimum { argmin: 0.5 * (lo + hi), variance: f(0.5 * (lo + hi)) };
    for (&a, &v) in [(&grid[best], &vals[best]), (&0.0, &vals[0]), (&0.5, &vals[GRID])] {
        if v < out.variance {
            out = VarianceMinimum { argmin: a, variance: v };
        }
    }
    Ok(out)
}

/// `M(β) = (2π)² β · inf_{a ∈ [0, 1/2]} Var(a, (2π)² β)`.
pub fn error_function_m(beta: f64) -> Result<f64> {
    let b = 4.0 * PI * PI * beta;
    Ok(b * min_variance(b)?.variance)
}

/// Grid used for the numerical supremum of `T/Var`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KBetaGrid {
    pub a_points: usize,
    /// Upper end of the `a` range, `1/2` or `1`.
    pub a_max: f64,
    pub beta_points: usize,
    pub beta_cap: f64,
}

impl Default for KBetaGrid {
    fn default() -> Self {
        Self { a_points: 101, a_max: 0.5, beta_points: 60, beta_cap: 40.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KBetaEstimate {
    /// `max(grid_sup, tail_cap)`.
    pub value: f64,
    pub grid_sup: f64,
    pub argsup: (f64, f64),
    /// Bound `2 + 4 exp(-3 β_cap / 4)` covering `β̂ > β_cap`.
    pub tail_cap: f64,
    pub grid: KBetaGrid,
}

/// Numerical `sup_{β̂ ≥ β, a} T(a, β̂) / Var(a, β̂)`.
pub fn k_beta(beta: f64, grid: &KBetaGrid) -> Result<KBetaEstimate> {
    IGParams::new(0.0, beta).check()?;
    let cap = grid.beta_cap.max(beta);
    let nb = grid.beta_points.max(2);
    let mut sup = f64::NEG_INFINITY;
    let mut arg = (0.0, beta);
    for j in 0..nb {
        let bh = beta * (cap / beta).powf(j as f64 / (nb - 1) as f64);
        for i in 0..grid.a_points.max(2) {
            let a = grid.a_max * i as f64 / (grid.a_points.max(2) - 1) as f64;
            let s = ig_stats(IGParams::new(a, bh))?;
            let r = s.third_abs / s.variance;
            if r > sup {
                sup = r;
                arg = (a, bh);
            }
        }
    }
    let tail_cap = 2.0 + 4.0 * (-0.75 * cap).exp();
    Ok(KBetaEstimate { value: sup.max(tail_cap), grid_sup: sup, argsup: arg, tail_cap, grid: grid.clone() })
}

/// `|1 - (2π)²β Var(0, (2π)²β) - β⁻¹ Var(0, β⁻¹)|`.
pub fn jacobi_residual(beta: f64) -> f64 {
    let b = 4.0 * PI * PI * beta;
    (1.0 - b * ig_variance(0.0, b) - ig_variance(0.0, 1.0 / beta) / beta).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cached_table_reproduces_direct_draws() {
        use rand::SeedableRng;
        for (a, beta) in [(0.25, 2.0), (-3.5, 0.3), (7.0, 40.0)] {
            let t = IgTable::new(a, beta);
            let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(3);
            let mut r2 = r1.clone();
            for _ in 0..2000 {
                assert_eq!(t.sample(&mut r1), ig_sample_unchecked(a, beta, &mut r2));
            }
        }
    }
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Wide-range compensated summation, independent of the window logic.
    fn brute(a: f64, beta: f64) -> (f64, f64) {
        let mut z = 0.0;
        let mut s1 = 0.0;
        for k in -4000i64..=4000 {
            let d = k as f64 - a;
            let w = (-0.5 * beta * d * d).exp();
            z += w;
            s1 += w * k as f64;
        }
        let mu = s1 / z;
        let mut s2 = 0.0;
        for k in -4000i64..=4000 {
            let d = k as f64 - a;
            s2 += (-0.5 * beta * d * d).exp() * (k as f64 - mu).powi(2);
        }
        (mu, s2 / z)
    }

    #[test]
    fn symmetric_means_are_exact() {
        for beta in [0.01, 0.3, 1.0, 7.0, 250.0] {
            assert_eq!(ig_stats(IGParams::new(0.5, beta)).unwrap().mean, 0.5);
            assert_eq!(ig_stats(IGParams::new(0.0, beta)).unwrap().mean, 0.0);
            assert_eq!(ig_stats(IGParams::new(-3.0, beta)).unwrap().mean, -3.0);
        }
    }

    #[test]
    fn variance_at_low_temperature() {
        let v = ig_variance(0.0, 40.0);
        let two_point = 2.0 * (-20f64).exp();
        assert!((v / two_point - 1.0).abs() < 1e-3);
        let (_, vb) = brute(0.0, 40.0);
        assert!((v / vb - 1.0).abs() < 1e-10);
    }

    #[test]
    fn matches_brute_force() {
        for &(a, beta) in &[(0.3, 0.05), (0.1, 1.0), (-0.7, 3.0), (0.45, 12.0), (2.2, 0.5)] {
            let s = ig_stats(IGParams::new(a, beta)).unwrap();
            let (mu, var) = brute(a, beta);
            assert!((s.mean - mu).abs() < 1e-12, "{a} {beta}");
            assert!((s.variance - var).abs() < 1e-12 * var.max(1.0), "{a} {beta}");
        }
    }

    #[test]
    fn periodicity_and_reflection() {
        for &(a, beta) in &[(0.2, 0.7), (0.37, 5.0), (0.05, 30.0)] {
            let s = ig_stats(IGParams::new(a, beta)).unwrap();
            let s1 = ig_stats(IGParams::new(a + 1.0, beta)).unwrap();
            let sr = ig_stats(IGParams::new(-a, beta)).unwrap();
            assert!((s1.mean - s.mean - 1.0).abs() < 1e-12);
            assert!((s1.variance - s.variance).abs() < 1e-13);
            assert!((sr.variance - s.variance).abs() < 1e-13);
            assert!((s1.third_abs - s.third_abs).abs() < 1e-13);
        }
    }

    #[test]
    fn bad_beta_rejected() {
        assert!(ig_stats(IGParams::new(0.0, 0.0)).is_err());
        assert!(ig_stats(IGParams::new(0.0, -1.0)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(ig_sample(IGParams::new(0.0, -1.0), &mut rng).is_err());
        assert!(error_function_m(0.0).is_err());
    }

    #[test]
    fn cold_sampler_returns_nearest() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zeros = (0..10_000)
            .filter(|_| ig_sample(IGParams::new(0.2, 1e6), &mut rng).unwrap() == 0)
            .count();
        assert!(zeros as f64 / 1e4 > 0.999);
    }

    #[test]
    fn sampler_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(a, beta) in &[(0.0, 0.5), (0.3, 2.0), (-1.4, 0.1)] {
            let n = 200_000;
            let xs: Vec<f64> =
                (0..n).map(|_| ig_sample(IGParams::new(a, beta), &mut rng).unwrap() as f64).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let s = ig_stats(IGParams::new(a, beta)).unwrap();
            let se = (s.variance / n as f64).sqrt();
            assert!((mean - s.mean).abs() < 4.0 * se, "{a} {beta}");
        }
    }

    #[test]
    fn half_integer_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let ones = (0..n).filter(|_| ig_sample(IGParams::new(0.5, 3.0), &mut rng).unwrap() >= 1).count();
        let p = ones as f64 / n as f64;
        assert!((p - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt(), "{p}");
    }

    #[test]
    fn pmf_sums_to_one() {
        let t = ig_pmf(IGParams::new(0.3, 0.2)).unwrap();
        let s: f64 = t.iter().map(|x| x.1).sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn error_function_lower_bound() {
        for beta in [1.0 / 3.0, 0.5, 1.0, 2.0] {
            let m = error_function_m(beta).unwrap();
            let bound = 2.0 * beta * (-2.0 * PI * PI * beta).exp();
            assert!(m >= bound, "{beta}: {m} < {bound}");
        }
    }

    #[test]
    fn error_function_band() {
        let ratios: Vec<f64> = [1.0, 1.5, 2.0, 2.5, 3.0]
            .iter()
            .map(|&b| error_function_m(b).unwrap() / (b * (-2.0 * PI * PI * b).exp()))
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
        // leading order is 2 e^{-β̂/2} at a = 0, i.e. a ratio of 8π²
        let lead = 8.0 * PI * PI;
        assert!(lo > 2.0 && hi < lead * 1.01 && hi / lo < 1.01, "{ratios:?}");
    }

    #[test]
    fn variance_lower_bound_cold() {
        for beta in [10.5, 20.0, 40.0] {
            for i in 0..=5 {
                let a = i as f64 / 10.0;
                let bound = (-beta * (1.0 - 2.0 * a) / 2.0).exp() / 16.0;
                assert!(ig_variance(a, beta) >= bound);
            }
        }
    }

    #[test]
    fn k_beta_contract() {
        let grid = KBetaGrid { a_points: 21, a_max: 0.5, beta_points: 12, beta_cap: 30.0 };
        let k = k_beta(0.5, &grid).unwrap();
        assert!(k.value.is_finite() && k.value >= k.grid_sup);
        for i in 0..21 {
            let s = ig_stats(IGParams::new(i as f64 / 40.0, 0.5)).unwrap();
            assert!(k.value >= s.third_abs / s.variance);
        }
        let wide = k_beta(0.5, &KBetaGrid { a_points: 41, a_max: 1.0, ..grid.clone() }).unwrap();
        assert!((wide.grid_sup - k.grid_sup).abs() < 1e-12);
        for beta in [5.0, 10.0, 20.0] {
            for i in 0..=10 {
                let s = ig_stats(IGParams::new(i as f64 / 20.0, beta)).unwrap();
                assert!(s.third_abs / s.variance <= 2.0 + 4.0 * (-0.75 * beta).exp());
            }
        }
    }

    #[test]
    fn jacobi_identity() {
        for beta in [1.0, 1.0 / 3.0, 5.0] {
            assert!(jacobi_residual(beta) < 1e-10, "{beta}");
        }
    }

    #[test]
    fn jacobi_against_brute_sums() {
        for beta in [1.0, 1.0 / 3.0, 5.0] {
            let b = 4.0 * PI * PI * beta;
            let (_, v1) = brute(0.0, b);
            let (_, v2) = brute(0.0, 1.0 / beta);
            assert!((1.0 - b * v1 - v2 / beta).abs() < 1e-10);
        }
    }
}
