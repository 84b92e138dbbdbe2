use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{Form, IntForm};
use crate::error::{Error, Result};
use crate::ig::IgTable;
use crate::lattice::LatticeGeometry;

use super::{check_beta, CellGraph};

/// Integer heights on rooted 0- or 2-cells with weight
/// `exp(-(1/2β) ⟨Ψ, (-Δ)Ψ⟩)`, the IV-GFF at inverse temperature `1/β`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IVState {
    pub psi: IntForm,
}

impl IVState {
    pub fn zero(g: &LatticeGeometry, degree: usize) -> Self {
        Self { psi: Form::zeros(g, degree) }
    }

    /// `⟨Ψ, (-Δ)Ψ⟩`, the sum of squared differences across edges.
    pub fn energy(&self, graph: &CellGraph) -> i64 {
        let mut s = 0;
        for (c, nb) in graph.neighbors.iter().enumerate() {
            for &o in nb {
                let x = self.psi.values[c] - self.psi.values[o];
                s += x * x;
            }
        }
        s / 2
    }
}

/// Sequential single-site heat bath: `Ψ(x) | rest ~ IG(mean of neighbours,
/// deg(x)/β)`, the exact conditional.
///
/// The neighbour mean is `S/deg` for an integer sum `S`, so the draw is
/// `⌊S/deg⌋` plus a draw from one of `deg` fixed laws, tabulated once.
pub struct IVHeatBath {
    graph: CellGraph,
    beta: f64,
    /// `tables[d][r]` is `IG(r/d, d/β)`.
    tables: Vec<Vec<IgTable>>,
}

impl IVHeatBath {
    pub fn new(g: &LatticeGeometry, degree: usize, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let graph = CellGraph::new(g, degree)?;
        let maxdeg = graph.neighbors.iter().map(Vec::len).max().unwrap_or(0);
        let tables = (0..=maxdeg)
            .map(|d| (0..d).map(|r| IgTable::new(r as f64 / d as f64, d as f64 / beta)).collect())
            .collect();
        Ok(Self { graph, beta, tables })
    }

    pub fn graph(&self) -> &CellGraph {
        &self.graph
    }

    /// `(center, inverse temperature)` of the conditional at `cell`.
    pub fn conditional(&self, psi: &[i64], cell: usize) -> (f64, f64) {
        let nb = &self.graph.neighbors[cell];
        let deg = nb.len() as f64;
        let mean = nb.iter().map(|&o| psi[o] as f64).sum::<f64>() / deg;
        (mean, deg / self.beta)
    }

    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut IVState, rng: &mut R) {
        let psi = &mut state.psi.values;
        for c in 0..self.graph.len() {
            if c == self.graph.root || self.graph.neighbors[c].is_empty() {
                continue;
            }
            let nb = &self.graph.neighbors[c];
            let d = nb.len() as i64;
            let sum: i64 = nb.iter().map(|&o| psi[o]).sum();
            let (q, r) = (sum.div_euclid(d), sum.rem_euclid(d));
            psi[c] = q + self.tables[d as usize][r as usize].sample(rng);
        }
    }
}

/// Convenience wrapper for one sweep.
pub fn ivgff_heat_bath_sweep<R: Rng + ?Sized>(
    g: &LatticeGeometry,
    state: &IVState,
    beta: f64,
    rng: &mut R,
) -> Result<IVState> {
    if state.psi.degree != 0 && state.psi.degree != 2 {
        return Err(Error::Degree("IV-GFF heights live on 0- or 2-cells"));
    }
    state.psi.check(g)?;
    let hb = IVHeatBath::new(g, state.psi.degree, beta)?;
    let mut s = state.clone();
    hb.sweep(&mut s, rng);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ig::{ig_pmf, IGParams};
    use crate::lattice::{build_lattice, BoundaryCondition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_vertices_give_integer_gaussian() {
        let g = LatticeGeometry::rectangle(2, 1, BoundaryCondition::Free).unwrap();
        let other = 1 - g.root_vertex();
        let beta = 0.6;
        let hb = IVHeatBath::new(&g, 0, beta).unwrap();
        let mut s = IVState::zero(&g, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..n {
            hb.sweep(&mut s, &mut rng);
            *counts.entry(s.psi.values[other]).or_insert(0usize) += 1;
        }
        let law = ig_pmf(IGParams::new(0.0, 1.0 / beta)).unwrap();
        let tv: f64 = law
            .iter()
            .map(|&(k, p)| (p - *counts.get(&k).unwrap_or(&0) as f64 / n as f64).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "{tv}");
    }

    #[test]
    fn detailed_balance_on_a_triangle_of_cells() {
        // 2x2 free grid: three free vertices around the root
        let g = LatticeGeometry::rectangle(2, 2, BoundaryCondition::Free).unwrap();
        let beta = 1.7;
        let hb = IVHeatBath::new(&g, 0, beta).unwrap();
        let pi = |psi: &[i64]| {
            let s = IVState { psi: Form { degree: 0, values: psi.to_vec() } };
            (-(s.energy(hb.graph()) as f64) / (2.0 * beta)).exp()
        };
        let root = g.root_vertex();
        let cell = (0..4).find(|&v| v != root).unwrap();
        let base: Vec<i64> = (0..4).map(|v| if v == root { 0 } else { (v as i64 % 3) - 1 }).collect();
        for (x, y) in [(-1, 2), (0, 1), (3, -2)] {
            let mut a = base.clone();
            a[cell] = x;
            let mut b = base.clone();
            b[cell] = y;
            let (c, t) = hb.conditional(&a, cell);
            let p = |k: i64| {
                let law = ig_pmf(IGParams::new(c, t)).unwrap();
                law.iter().find(|e| e.0 == k).map(|e| e.1).unwrap_or(0.0)
            };
            let lhs = pi(&a) * p(y);
            let rhs = pi(&b) * p(x);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(rhs), "{lhs} {rhs}");
        }
    }

    #[test]
    fn root_stays_zero_on_faces_and_vertices() {
        let g = build_lattice(2, BoundaryCondition::Zero).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for degree in [0, 2] {
            let mut s = IVState::zero(&g, degree);
            for _ in 0..5 {
                s = ivgff_heat_bath_sweep(&g, &s, 3.0, &mut rng).unwrap();
            }
            assert_eq!(s.psi.values[g.root_cell(degree).unwrap()], 0);
            s.psi.check(&g).unwrap();
        }
    }
}
