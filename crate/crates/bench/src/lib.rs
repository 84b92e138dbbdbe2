//! Shared fixtures for the criterion benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use villain_core::samplers::{IVHeatBath, IVState, VillainHeatBath, VillainState};
use villain_core::{build_lattice, BoundaryCondition, LatticeGeometry};

pub const SIZES: [usize; 3] = [8, 16, 32];

pub fn free_box(n: usize) -> LatticeGeometry {
    build_lattice(n, BoundaryCondition::Free).expect("valid radius")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Villain state after `warm` sweeps, so timings see typical mixtures.
pub fn warm_villain(g: &LatticeGeometry, beta: f64, warm: usize) -> (VillainHeatBath, VillainState, ChaCha8Rng) {
    let mut hb = VillainHeatBath::new(beta, 40.0).expect("beta > 0");
    let mut r = rng(1);
    let mut s = VillainState::random(g, &mut r);
    for _ in 0..warm {
        hb.sweep(g, &mut s, &mut r);
    }
    (hb, s, r)
}

pub fn warm_iv(g: &LatticeGeometry, beta: f64, warm: usize) -> (IVHeatBath, IVState, ChaCha8Rng) {
    let hb = IVHeatBath::new(g, 0, beta).expect("beta > 0");
    let mut r = rng(2);
    let mut s = IVState::zero(g, 0);
    for _ in 0..warm {
        hb.sweep(&mut s, &mut r);
    }
    (hb, s, r)
}
