//! Villain partition function as a trapezoid rule in every free angle,
//! contracted by variable elimination over the vertex graph.
//!
//! The integrand is smooth and `2π`-periodic in each angle, so the
//! trapezoid rule converges geometrically and the node count is doubled
//! until two successive values agree.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;

/// One edge weight `w_h(δ) = Σ_m e^{i h (δ + 2πm)} e^{-β (δ + 2πm)² / 2}`.
pub fn edge_weight(delta: f64, beta: f64, h: f64) -> Complex64 {
    let d = delta - 2.0 * PI * (delta / (2.0 * PI)).round();
    // terms beyond k underflow: β (π(2k - 1))² / 2 > 745
    let k = (((1490.0 / beta).sqrt() / PI + 1.0) / 2.0).ceil() as i64 + 1;
    let mut s = Complex64::new(0.0, 0.0);
    for m in -k..=k {
        let x = d + 2.0 * PI * m as f64;
        s += Complex64::from_polar((-0.5 * beta * x * x).exp(), h * x);
    }
    s
}

struct Factor {
    /// Sorted variable ids; the table is row-major with the first variable slowest.
    scope: Vec<usize>,
    table: Vec<Complex64>,
}

impl Factor {
    fn stride(&self, var: usize, nodes: usize) -> usize {
        match self.scope.iter().position(|&v| v == var) {
            Some(p) => nodes.pow((self.scope.len() - 1 - p) as u32),
            None => 0,
        }
    }
}

/// `∫ Σ_m Π_e e^{i h_e (dθ + 2πm)_e} e^{-β (dθ + 2πm)_e² / 2} dθ` over the free
/// angles with `nodes` points per angle. `h = None` means all zero.
pub fn villain_trapezoid(
    g: &LatticeGeometry,
    beta: f64,
    h: Option<&[f64]>,
    nodes: usize,
    max_table: usize,
) -> Result<Complex64> {
    let root = g.root_vertex();
    let nv = g.vertex_count();
    let mut var = vec![usize::MAX; nv];
    let mut nvar = 0;
    for v in 0..nv {
        if v != root {
            var[v] = nvar;
            nvar += 1;
        }
    }
    let step = 2.0 * PI / nodes as f64;
    let mut factors = Vec::with_capacity(g.edge_count());
    for e in 0..g.edge_count() {
        let he = h.map_or(0.0, |h| h[e]);
        let w: Vec<Complex64> = (0..nodes).map(|j| edge_weight(j as f64 * step, beta, he)).collect();
        let (t, hd) = g.edge(e);
        let f = match (var[t], var[hd]) {
            (usize::MAX, usize::MAX) => Factor { scope: vec![], table: vec![w[0]] },
            (usize::MAX, b) => Factor { scope: vec![b], table: w.clone() },
            // dθ = 0 - θ_t
            (a, usize::MAX) => Factor { scope: vec![a], table: (0..nodes).map(|j| w[(nodes - j) % nodes]).collect() },
            (a, b) => {
                let mut table = vec![Complex64::new(0.0, 0.0); nodes * nodes];
                let (lo, hi, head_is_hi) = if a < b { (a, b, true) } else { (b, a, false) };
                for x in 0..nodes {
                    for y in 0..nodes {
                        // x indexes `lo`, y indexes `hi`
                        let diff = if head_is_hi { y + nodes - x } else { x + nodes - y };
                        table[x * nodes + y] = w[diff % nodes];
                    }
                }
                Factor { scope: vec![lo, hi], table }
            }
        };
        factors.push(f);
    }
    let mut alive = vec![true; nvar];
    let mut scalar = Complex64::new(1.0, 0.0);
    for _ in 0..nvar {
        // greedy min-width order
        let (v, _) = (0..nvar)
            .filter(|&v| alive[v])
            .map(|v| (v, union_scope(&factors, v).len()))
            .min_by_key(|&(v, s)| (s, v))
            .expect("a live variable remains");
        let scope = union_scope(&factors, v);
        let size = nodes
            .checked_pow(scope.len() as u32)
            .filter(|&s| s <= max_table)
            .ok_or_else(|| Error::TooLarge(format!("elimination table of {} angles at {nodes} nodes", scope.len())))?;
        let (touch, keep): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.scope.contains(&v));
        factors = keep;
        let strides: Vec<Vec<usize>> = touch.iter().map(|f| scope.iter().map(|&u| f.stride(u, nodes)).collect()).collect();
        let sv: Vec<usize> = touch.iter().map(|f| f.stride(v, nodes)).collect();
        let mut table = vec![Complex64::new(0.0, 0.0); size];
        let mut digits = vec![0usize; scope.len()];
        let mut offs = vec![0usize; touch.len()];
        for out in table.iter_mut() {
            for (o, st) in offs.iter_mut().zip(&strides) {
                *o = digits.iter().zip(st).map(|(d, s)| d * s).sum();
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for x in 0..nodes {
                let mut p = Complex64::new(1.0, 0.0);
                for (f, (&o, &s)) in touch.iter().zip(offs.iter().zip(&sv)) {
                    p *= f.table[o + x * s];
                }
                acc += p;
            }
            *out = acc * step;
            for d in digits.iter_mut().rev() {
                *d += 1;
                if *d < nodes {
                    break;
                }
                *d = 0;
            }
        }
        alive[v] = false;
        if scope.is_empty() {
            scalar *= table[0];
        } else {
            factors.push(Factor { scope, table });
        }
    }
    for f in factors {
        debug_assert!(f.scope.is_empty());
        scalar *= f.table[0];
    }
    Ok(scalar)
}

fn union_scope(factors: &[Factor], v: usize) -> Vec<usize> {
    let mut s: Vec<usize> = factors
        .iter()
        .filter(|f| f.scope.contains(&v))
        .flat_map(|f| f.scope.iter().copied())
        .filter(|&u| u != v)
        .collect();
    s.sort_unstable();
    s.dedup();
    s
}

/// Converged trapezoid value with the last doubling difference as error.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureValue {
    pub value: Complex64,
    pub error: f64,
    pub nodes: usize,
}

/// Doubles the node count from `start` until successive values differ by
/// at most `tol · scale` (`scale = |value|` when `None`).
pub fn villain_integral(
    g: &LatticeGeometry,
    beta: f64,
    h: Option<&[f64]>,
    start: usize,
    max_nodes: usize,
    tol: f64,
    scale: Option<f64>,
    max_table: usize,
) -> Result<QuadratureValue> {
    let mut n = start.max(4);
    let mut prev = villain_trapezoid(g, beta, h, n, max_table)?;
    loop {
        let next_n = n * 2;
        if next_n > max_nodes {
            return Err(Error::Uncertified(format!("trapezoid rule not converged at {n} nodes")));
        }
        let next = villain_trapezoid(g, beta, h, next_n, max_table)?;
        let diff = (next - prev).norm();
        let s = scale.unwrap_or_else(|| next.norm());
        if diff <= tol * s {
            // geometric convergence: the finer value is far closer than `diff`
            return Ok(QuadratureValue { value: next, error: diff.max(f64::EPSILON * 16.0 * s), nodes: next_n });
        }
        prev = next;
        n = next_n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::BoundaryCondition;

    #[test]
    fn two_vertices_give_gaussian_integral() {
        let g = LatticeGeometry::rectangle(2, 1, BoundaryCondition::Free).unwrap();
        for beta in [0.3, 1.0, 4.0] {
            let q = villain_integral(&g, beta, None, 8, 1024, 1e-13, None, 1 << 24).unwrap();
            let want = (2.0 * PI / beta).sqrt();
            assert!((q.value.re - want).abs() < 1e-12 * want, "{beta}: {} {want}", q.value);
            assert!(q.value.im.abs() < 1e-14);
        }
    }

    #[test]
    fn two_vertex_characteristic_function() {
        // ∫ e^{ihx} e^{-βx²/2} dx over R
        let g = LatticeGeometry::rectangle(2, 1, BoundaryCondition::Free).unwrap();
        let (beta, hh) = (1.3, 0.7);
        let q = villain_integral(&g, beta, Some(&[hh]), 8, 1024, 1e-13, None, 1 << 24).unwrap();
        let want = (2.0 * PI / beta).sqrt() * (-hh * hh / (2.0 * beta)).exp();
        assert!((q.value - Complex64::new(want, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn brute_force_on_a_square() {
        // 2x2 free grid: three free angles, direct triple sum at fixed nodes
        let g = LatticeGeometry::rectangle(2, 2, BoundaryCondition::Free).unwrap();
        let (beta, n) = (0.8, 12);
        let h: Vec<f64> = (0..g.edge_count()).map(|e| 0.3 * e as f64 - 0.4).collect();
        let got = villain_trapezoid(&g, beta, Some(&h), n, 1 << 20).unwrap();
        let root = g.root_vertex();
        let free: Vec<usize> = (0..4).filter(|&v| v != root).collect();
        let step = 2.0 * PI / n as f64;
        let mut want = Complex64::new(0.0, 0.0);
        for i in 0..n.pow(3) {
            let mut th = [0.0; 4];
            let mut r = i;
            for &v in &free {
                th[v] = (r % n) as f64 * step;
                r /= n;
            }
            let mut p = Complex64::new(step.powi(3), 0.0);
            for e in 0..g.edge_count() {
                let (t, hd) = g.edge(e);
                p *= edge_weight(th[hd] - th[t], beta, h[e]);
            }
            want += p;
        }
        assert!((got - want).norm() < 1e-12 * want.norm(), "{got} {want}");
    }

    #[test]
    fn table_budget_is_enforced() {
        let g = crate::lattice::build_lattice(2, BoundaryCondition::Free).unwrap();
        assert!(matches!(villain_trapezoid(&g, 1.0, None, 64, 1000, ), Err(Error::TooLarge(_))));
    }
}
