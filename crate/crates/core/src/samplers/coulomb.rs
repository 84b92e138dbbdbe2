use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{apply_green, d1, Form, IntForm};
use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;

use super::villain::{sample_m_unchecked, VillainHeatBath, VillainState};
use super::{check_beta, ChainConfig, ChainRng};

/// Integer charges on rooted cells (faces in the Villain pipeline), with
/// weight `exp(-((2π)²β/2) ⟨q, (-Δ)⁻¹ q⟩)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoulombState {
    pub q: IntForm,
}

/// `⟨q, (-Δ)⁻¹ q⟩`.
pub fn coulomb_energy(g: &LatticeGeometry, q: &IntForm) -> Result<f64> {
    let r = q.to_real();
    let u = apply_green(g, &r)?;
    Ok(r.values.iter().zip(&u.values).map(|(a, b)| a * b).sum())
}

/// The local pipeline: Villain heat bath on the angles, then `m | θ`, then
/// `q = dm` on the faces.
pub struct LocalCoulombChain<'g> {
    g: &'g LatticeGeometry,
    hb: VillainHeatBath,
    state: VillainState,
    rng: ChainRng,
    thin: usize,
    sweeps_done: usize,
}

impl<'g> LocalCoulombChain<'g> {
    /// Starts from `θ = 0` and runs `cfg.burn_in` sweeps.
    pub fn new(g: &'g LatticeGeometry, beta: f64, cfg: &ChainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut chain = Self {
            g,
            hb: VillainHeatBath::new(beta, cfg.tail_margin)?,
            state: VillainState::zero(g),
            rng: cfg.rng(),
            thin: cfg.thin,
            sweeps_done: 0,
        };
        for _ in 0..cfg.burn_in {
            chain.hb.sweep_theta(g, &mut chain.state.theta.values, &mut chain.rng);
        }
        chain.sweeps_done = cfg.burn_in;
        Ok(chain)
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        self.g
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    /// Advances `thin` angle sweeps and refreshes `m`; returns the joint state.
    pub fn next_state(&mut self) -> &VillainState {
        for _ in 0..self.thin {
            self.hb.sweep_theta(self.g, &mut self.state.theta.values, &mut self.rng);
        }
        self.sweeps_done += self.thin;
        self.state.m = sample_m_unchecked(self.g, &self.state.theta, self.hb.beta(), &mut self.rng);
        &self.state
    }

    /// Next charge sample `q = dm`.
    pub fn next_charges(&mut self) -> IntForm {
        self.next_state();
        Form { degree: 2, values: d1(self.g, &self.state.m.values) }
    }

    pub fn state(&self) -> &VillainState {
        &self.state
    }
}

/// One charge configuration after `burn_in + sweeps` Villain sweeps.
pub fn coulomb_sample_local(g: &LatticeGeometry, beta: f64, cfg: &ChainConfig) -> Result<CoulombState> {
    let c = ChainConfig { thin: cfg.sweeps.max(1), ..cfg.clone() };
    c.validate()?;
    let mut chain = LocalCoulombChain::new(g, beta, &c)?;
    Ok(CoulombState { q: chain.next_charges() })
}

/// Largest number of free cells for which the dense Green matrix is kept.
pub const METROPOLIS_MAX_CELLS: usize = 5000;

/// Single-site charge Metropolis with the potential `u = (-Δ)⁻¹ q` kept
/// up to date by Green columns. Each accepted move costs one column.
pub struct CoulombMetropolis {
    degree: usize,
    beta: f64,
    step: i64,
    free: Vec<usize>,
    green: DMatrix<f64>,
    q: Vec<i64>,
    u: Vec<f64>,
    energy: f64,
    proposed: u64,
    accepted: u64,
    work: u64,
}

impl CoulombMetropolis {
    pub fn new(g: &LatticeGeometry, degree: usize, beta: f64, step: i64) -> Result<Self> {
        check_beta(beta)?;
        if step < 1 {
            return Err(Error::InvalidParameter("metropolis step must be >= 1".into()));
        }
        let op = crate::calculus::neg_laplacian(g, degree)?;
        if op.dim() > METROPOLIS_MAX_CELLS {
            return Err(Error::TooLarge(format!(
                "dense Green matrix for {} cells exceeds the limit of {}",
                op.dim(),
                METROPOLIS_MAX_CELLS
            )));
        }
        let green = op.green_matrix()?;
        let n = op.dim();
        Ok(Self {
            degree,
            beta,
            step,
            free: op.free_cells().to_vec(),
            green,
            q: vec![0; n],
            u: vec![0.0; n],
            energy: 0.0,
            proposed: 0,
            accepted: 0,
            work: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    fn coupling(&self) -> f64 {
        TAU * TAU * self.beta
    }

    /// Energy change `(2π)²β (s u_i + s² G_ii / 2)` of `q_i += s`.
    pub fn delta_energy(&self, i: usize, s: i64) -> f64 {
        let s = s as f64;
        self.coupling() * (s * self.u[i] + 0.5 * s * s * self.green[(i, i)])
    }

    /// Probability of moving from the current state by `q_i += s`.
    pub fn move_probability(&self, i: usize, s: i64) -> f64 {
        if s == 0 || s.abs() > self.step {
            return 0.0;
        }
        let proposal = 1.0 / (self.dim() as f64 * 2.0 * self.step as f64);
        proposal * (-self.delta_energy(i, s)).exp().min(1.0)
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let n = self.dim();
        if n == 0 {
            return false;
        }
        let i = rng.gen_range(0..n);
        let mag = rng.gen_range(1..=self.step);
        let s = if rng.gen::<bool>() { mag } else { -mag };
        self.proposed += 1;
        let de = self.delta_energy(i, s);
        if de <= 0.0 || rng.gen::<f64>() < (-de).exp() {
            self.apply(i, s);
            self.energy += de / self.coupling() * 2.0;
            true
        } else {
            false
        }
    }

    fn apply(&mut self, i: usize, s: i64) {
        self.q[i] += s;
        let sf = s as f64;
        let col = self.green.column(i);
        for (u, g) in self.u.iter_mut().zip(col.iter()) {
            *u += sf * g;
        }
        self.accepted += 1;
        self.work += self.u.len() as u64;
    }

    /// `dim` proposals.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for _ in 0..self.dim() {
            self.step(rng);
        }
    }

    /// Incrementally tracked `⟨q, (-Δ)⁻¹ q⟩`.
    pub fn tracked_energy(&self) -> f64 {
        self.energy
    }

    /// `⟨q, (-Δ)⁻¹ q⟩` recomputed from scratch.
    pub fn recomputed_energy(&self) -> f64 {
        let qv = DMatrix::from_iterator(self.dim(), 1, self.q.iter().map(|&x| x as f64));
        (qv.transpose() * &self.green * &qv)[(0, 0)]
    }

    /// Sets the charges (operator order) and recomputes the potential.
    pub fn set_charges(&mut self, q: &[i64]) {
        self.q.copy_from_slice(q);
        let qv = DMatrix::from_iterator(self.dim(), 1, self.q.iter().map(|&x| x as f64));
        let u = &self.green * &qv;
        self.u.copy_from_slice(u.as_slice());
        self.energy = self.recomputed_energy();
    }

    pub fn charges(&self) -> &[i64] {
        &self.q
    }

    pub fn acceptance_ratio(&self) -> f64 {
        if self.proposed == 0 {
            return 0.0;
        }
        self.accepted as f64 / self.proposed as f64
    }

    /// Floating-point operations spent on potential updates so far.
    pub fn work(&self) -> u64 {
        self.work
    }

    pub fn proposed(&self) -> u64 {
        self.proposed
    }

    pub fn state(&self, g: &LatticeGeometry) -> CoulombState {
        let mut q = Form::zeros(g, self.degree);
        for (&c, &x) in self.free.iter().zip(&self.q) {
            q.values[c] = x;
        }
        CoulombState { q }
    }
}

/// Charges on faces after `burn_in + sweeps` Metropolis sweeps.
pub fn coulomb_metropolis_baseline(
    g: &LatticeGeometry,
    beta: f64,
    cfg: &ChainConfig,
) -> Result<CoulombState> {
    cfg.validate()?;
    let mut mh = CoulombMetropolis::new(g, 2, beta, cfg.metropolis_step)?;
    let mut rng = cfg.rng();
    for _ in 0..cfg.burn_in + cfg.sweeps {
        mh.sweep(&mut rng);
    }
    Ok(mh.state(g))
}
