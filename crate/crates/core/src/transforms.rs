//! The map `(θ, m) ↦ (φ, q)` splitting a Villain coupling into a free field and
//! a charge field, its inverse, and the change-of-root maps.
//!
//! With `n_q` the integer primitive of `q = dm` and `ψ` the rooted primitive
//! of the closed form `m - n_q`,
//! `φ = θ + 2πψ + 2π d*Δ⁻¹ n_q`. Only `φ` and `q` are intrinsic; `n_q`, `ψ`
//! and the correction `d*Δ⁻¹ n_q` depend on the primitive chosen.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::calculus::{d0, d1, dstar, integer_primitive, scalar_primitive, solve_poisson, Form, IntForm};
use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;
use crate::samplers::{coulomb_energy, VillainState};

/// `φ` on vertices and `q` on faces, both rooted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoupledPair {
    pub phi: Form,
    pub q: IntForm,
}

/// `d*Δ⁻¹ n` for an integer 1-form, a 0-form.
fn correction(g: &LatticeGeometry, n: &IntForm) -> Result<Form> {
    if n.values.iter().all(|&x| x == 0) {
        return Ok(Form::zeros(g, 0));
    }
    dstar(g, &solve_poisson(g, &n.to_real())?)
}

pub fn decouple(g: &LatticeGeometry, state: &VillainState) -> Result<DecoupledPair> {
    let q = Form { degree: 2, values: d1(g, &state.m.values) };
    let nq = integer_primitive(g, &q)?;
    let rest = state.m.zip_with(&nq, |a, b| a - b);
    let psi = scalar_primitive(g, &rest)?;
    let c = correction(g, &nq)?;
    let values = state
        .theta
        .values
        .iter()
        .zip(&psi.values)
        .zip(&c.values)
        .map(|((t, &p), x)| t + TAU * p as f64 + TAU * x)
        .collect();
    Ok(DecoupledPair { phi: Form { degree: 0, values }, q })
}

/// Inverse map with `m = n_q + d⌊(φ - 2π d*Δ⁻¹ n_q)/2π⌋`.
pub fn recouple(g: &LatticeGeometry, pair: &DecoupledPair) -> Result<VillainState> {
    let (x, nq) = unwrapped_angles(g, pair)?;
    let k: Vec<i64> = x.iter().map(|v| (v / TAU).floor() as i64).collect();
    let theta: Vec<f64> = x
        .iter()
        .zip(&k)
        .map(|(v, &kk)| {
            let t = v - TAU * kk as f64;
            if t >= TAU || t < 0.0 {
                t.rem_euclid(TAU) % TAU
            } else {
                t
            }
        })
        .collect();
    let dk = d0(g, &k);
    let m = nq.values.iter().zip(&dk).map(|(a, b)| a + b).collect();
    VillainState::new(g, Form { degree: 0, values: theta }, Form { degree: 1, values: m })
}

/// The alternative expression `m = n_q + (1/2π) d(φ - 2π d*Δ⁻¹ n_q - θ)`,
/// rounded to integers, given the angles already produced by `recouple`.
pub fn recouple_gradient_m(g: &LatticeGeometry, pair: &DecoupledPair, theta: &Form) -> Result<IntForm> {
    let (x, nq) = unwrapped_angles(g, pair)?;
    let diff: Vec<f64> = x.iter().zip(&theta.values).map(|(a, b)| a - b).collect();
    let values = d0(g, &diff)
        .iter()
        .zip(&nq.values)
        .map(|(v, &n)| n + (v / TAU).round() as i64)
        .collect();
    Ok(Form { degree: 1, values })
}

fn unwrapped_angles(g: &LatticeGeometry, pair: &DecoupledPair) -> Result<(Vec<f64>, IntForm)> {
    pair.phi.check(g)?;
    pair.q.check(g)?;
    if pair.phi.degree != 0 || pair.q.degree != 2 {
        return Err(Error::Degree("a decoupled pair is a 0-form and a 2-form"));
    }
    let nq = integer_primitive(g, &pair.q)?;
    let c = correction(g, &nq)?;
    let x = pair.phi.values.iter().zip(&c.values).map(|(p, c)| p - TAU * c).collect();
    Ok((x, nq))
}

/// `|⟨dθ+2πm, dθ+2πm⟩ - ⟨dφ, dφ⟩ - (2π)² ⟨q, (-Δ)⁻¹ q⟩|`.
pub fn energy_identity_residual(g: &LatticeGeometry, state: &VillainState, pair: &DecoupledPair) -> Result<f64> {
    let lhs = state.energy(g);
    let dphi: f64 = d0(g, &pair.phi.values).iter().map(|x| x * x).sum();
    let rhs = dphi + TAU * TAU * coulomb_energy(g, &pair.q)?;
    Ok((lhs - rhs).abs())
}

/// A model configuration, rooted at the matching root of its geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelState {
    Gff(Form),
    IvGff(IntForm),
    Coulomb(IntForm),
    Villain(VillainState),
}

impl ModelState {
    pub fn degree(&self) -> usize {
        match self {
            ModelState::Gff(f) => f.degree,
            ModelState::IvGff(f) | ModelState::Coulomb(f) => f.degree,
            ModelState::Villain(_) => 0,
        }
    }
}

/// Moves the root of a configuration from `g`'s root of the matching degree
/// to `new_root`. The result is rooted for `g.with_root(degree, new_root)`.
pub fn reroot(g: &LatticeGeometry, state: &ModelState, new_root: usize) -> Result<ModelState> {
    let degree = state.degree();
    let old = g.root_cell(degree).ok_or(Error::Degree("only 0- and 2-forms are rooted"))?;
    if new_root >= g.cell_count(degree) {
        return Err(Error::InvalidParameter(format!("cell {new_root} out of range for degree {degree}")));
    }
    Ok(match state {
        ModelState::Gff(f) => {
            f.check(g)?;
            let s = f.values[new_root];
            ModelState::Gff(f.map(|x| x - s))
        }
        ModelState::IvGff(f) => {
            f.check(g)?;
            let s = f.values[new_root];
            ModelState::IvGff(f.map(|x| x - s))
        }
        ModelState::Coulomb(q) => {
            q.check(g)?;
            if new_root == old {
                return Ok(state.clone());
            }
            let total: i64 = q.values.iter().enumerate().filter(|&(c, _)| c != old).map(|(_, &x)| x).sum();
            let mut values = q.values.clone();
            values[old] = -total;
            values[new_root] = 0;
            ModelState::Coulomb(Form { degree, values })
        }
        ModelState::Villain(s) => {
            s.theta.check(g)?;
            let shift = s.theta.values[new_root];
            let theta: Vec<f64> = s
                .theta
                .values
                .iter()
                .map(|t| {
                    let x = (t - shift).rem_euclid(TAU);
                    if x >= TAU {
                        0.0
                    } else {
                        x
                    }
                })
                .collect();
            let before = d0(g, &s.theta.values);
            let after = d0(g, &theta);
            let m = s
                .m
                .values
                .iter()
                .zip(before.iter().zip(&after))
                .map(|(&k, (b, a))| k + ((b - a) / TAU).round() as i64)
                .collect();
            ModelState::Villain(VillainState { theta: Form { degree: 0, values: theta }, m: Form { degree: 1, values: m } })
        }
    })
}
