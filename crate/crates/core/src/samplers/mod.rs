//! Exact GFF draws and the Markov chains for the Villain coupling, the
//! integer-valued GFF and the Coulomb gas.
//!
//! Every chain owns its state and a `ChaCha8Rng` derived from
//! `(seed, chain)`, so output is a pure function of geometry and config.

pub mod coulomb;
pub mod gff;
pub mod iv;
pub mod villain;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;

pub use coulomb::{
    coulomb_energy, coulomb_metropolis_baseline, coulomb_sample_local, CoulombMetropolis,
    CoulombState, LocalCoulombChain,
};
pub use gff::{gff_from_edge_field, gff_from_white_noise, gff_sample};
pub use iv::{ivgff_heat_bath_sweep, IVHeatBath, IVState};
pub use villain::{
    sample_m_given_theta, villain_heat_bath_sweep, VillainConditional, VillainHeatBath,
    VillainState,
};

pub type ChainRng = ChaCha8Rng;

/// Run parameters shared by all chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub seed: u64,
    /// Stream index; independent chains share a seed and differ here.
    pub chain: u64,
    /// Recorded sweeps after burn-in.
    pub sweeps: usize,
    pub burn_in: usize,
    /// Sweeps between recorded samples.
    pub thin: usize,
    /// Heat-bath mixture components lighter than `e^{-tail_margin}` times
    /// the heaviest are dropped.
    pub tail_margin: f64,
    /// Metropolis charge moves are uniform on `±1, …, ±metropolis_step`.
    pub metropolis_step: i64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            chain: 0,
            sweeps: 1000,
            burn_in: 100,
            thin: 1,
            tail_margin: 40.0,
            metropolis_step: 1,
        }
    }
}

impl ChainConfig {
    pub fn rng(&self) -> ChainRng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.chain);
        r
    }

    pub fn with_chain(&self, chain: u64) -> Self {
        Self { chain, ..self.clone() }
    }

    /// Heuristic burn-in of `100 n` sweeps for radius `n` at β ≤ 2; no
    /// mixing bound backs it.
    pub fn heuristic_burn_in(n: usize) -> usize {
        100 * n
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thin must be >= 1".into()));
        }
        if !(self.tail_margin > 0.0) {
            return Err(Error::InvalidParameter("tail_margin must be positive".into()));
        }
        if self.metropolis_step < 1 {
            return Err(Error::InvalidParameter("metropolis_step must be >= 1".into()));
        }
        Ok(())
    }

    /// Short digest of the serialized config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("inverse temperature must be finite and > 0, got {beta}")))
    }
}

/// Adjacency of the rooted cells of degree 0 (through edges) or degree 2
/// (through shared edges). Parallel edges appear repeatedly; an edge with
/// the same cell on both sides is dropped.
#[derive(Clone, Debug)]
pub struct CellGraph {
    pub degree: usize,
    pub root: usize,
    pub neighbors: Vec<Vec<usize>>,
}

impl CellGraph {
    pub fn new(g: &LatticeGeometry, degree: usize) -> Result<Self> {
        let root = g.root_cell(degree).ok_or(Error::Degree("only 0- and 2-forms are rooted"))?;
        let mut neighbors = vec![Vec::new(); g.cell_count(degree)];
        for e in 0..g.edge_count() {
            let (a, b) = match degree {
                0 => g.edge(e),
                _ => {
                    let ef = g.edge_faces(e);
                    (ef[0].0, ef[1].0)
                }
            };
            if a != b {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        Ok(Self { degree, root, neighbors })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}
