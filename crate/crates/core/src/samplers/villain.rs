use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calculus::{d0, Form, IntForm};
use crate::enumerate::Ellipsoid;
use crate::error::{Error, Result};
use crate::ig::ig_sample_unchecked;
use crate::lattice::LatticeGeometry;

use super::check_beta;

/// Angles `θ ∈ [0, 2π)` rooted at `v₀` and an integer edge field `m`, with
/// joint weight `exp(-(β/2) ⟨dθ + 2πm, dθ + 2πm⟩)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VillainState {
    pub theta: Form,
    pub m: IntForm,
}

impl VillainState {
    pub fn new(g: &LatticeGeometry, theta: Form, m: IntForm) -> Result<Self> {
        if theta.degree != 0 || m.degree != 1 {
            return Err(Error::Degree("a Villain state is a 0-form and a 1-form"));
        }
        theta.check(g)?;
        m.check(g)?;
        if let Some((v, &x)) = theta.values.iter().enumerate().find(|(_, &x)| !(0.0..TAU).contains(&x)) {
            return Err(Error::InvalidParameter(format!("theta({v}) = {x} is outside [0, 2π)")));
        }
        Ok(Self { theta, m })
    }

    pub fn zero(g: &LatticeGeometry) -> Self {
        Self { theta: Form::zeros(g, 0), m: Form::zeros(g, 1) }
    }

    /// Uniform angles and `m = 0`.
    pub fn random<R: Rng + ?Sized>(g: &LatticeGeometry, rng: &mut R) -> Self {
        let mut s = Self::zero(g);
        for (v, x) in s.theta.values.iter_mut().enumerate() {
            if v != g.root_vertex() {
                *x = rng.gen::<f64>() * TAU;
            }
        }
        s
    }

    /// The edge field `dθ + 2πm`.
    pub fn edge_field(&self, g: &LatticeGeometry) -> Vec<f64> {
        d0(g, &self.theta.values)
            .into_iter()
            .zip(&self.m.values)
            .map(|(x, &k)| x + TAU * k as f64)
            .collect()
    }

    /// `⟨dθ + 2πm, dθ + 2πm⟩`.
    pub fn energy(&self, g: &LatticeGeometry) -> f64 {
        self.edge_field(g).iter().map(|x| x * x).sum()
    }
}

/// Wraps into `[-π, π)`.
fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

fn reduce_angle(t: f64) -> f64 {
    let x = t.rem_euclid(TAU);
    if x >= TAU {
        0.0
    } else {
        x
    }
}

/// The law of one angle given neighbour angles `a_1, …, a_d`, density
/// `∝ Π_j Σ_k exp(-(β/2)(θ - a_j + 2πk)²)` on `[0, 2π)`.
///
/// Unwrapping `t = θ + 2πk_1` turns it into a lattice mixture of Gaussians:
/// with `δ_j = a_j - a_1` reduced to `[-π, π)` and `y = δ + 2πk`,
/// `k ∈ ℤ^{d-1}`, component `k` has weight `exp(-(β/2) yᵀ(I - J/d) y)` and
/// law `N(a_1 + Σ_j y_j / d, 1/(βd))`; `θ = t mod 2π`.
#[derive(Clone, Debug, Default)]
pub struct VillainConditional {
    weights: Vec<f64>,
    means: Vec<f64>,
    total: f64,
    sd: f64,
    uniform: bool,
}

impl VillainConditional {
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Normalized component weights.
    pub fn weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w / self.total).collect()
    }

    pub fn component_sd(&self) -> f64 {
        self.sd
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.uniform {
            return reduce_angle(rng.gen::<f64>() * TAU);
        }
        let mut idx = self.weights.len() - 1;
        if self.weights.len() > 1 {
            let u = rng.gen::<f64>() * self.total;
            let mut acc = 0.0;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    idx = i;
                    break;
                }
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        reduce_angle(self.means[idx] + z * self.sd)
    }

    /// Density on `[0, 2π)` of the mixture, wrapped.
    pub fn density(&self, theta: f64) -> f64 {
        if self.uniform {
            return 1.0 / TAU;
        }
        let norm = 1.0 / (self.sd * TAU.sqrt());
        let reach = (12.0 * self.sd / TAU).ceil() as i64 + 1;
        let mut s = 0.0;
        for (w, &mu) in self.weights.iter().zip(&self.means) {
            let base = theta - mu;
            let c = (base / TAU).round() as i64;
            let mut part = 0.0;
            for k in (-c - reach)..=(-c + reach) {
                let x = (base + TAU * k as f64) / self.sd;
                part += (-0.5 * x * x).exp();
            }
            s += w * part;
        }
        s * norm / self.total
    }
}

/// Single-site heat bath for the angle marginal of the Villain model.
/// Sites are updated in index order; the root is never touched.
pub struct VillainHeatBath {
    beta: f64,
    margin: f64,
    /// Fincke–Pohst data of `I - J/d` on `ℤ^{d-1}`, indexed by `d`.
    forms: Vec<Option<Ellipsoid>>,
    cond: VillainConditional,
    vals: Vec<f64>,
    delta: Vec<f64>,
    center: Vec<f64>,
    nbr: Vec<f64>,
}

impl VillainHeatBath {
    pub fn new(beta: f64, tail_margin: f64) -> Result<Self> {
        check_beta(beta)?;
        if !(tail_margin > 0.0) {
            return Err(Error::InvalidParameter("tail margin must be positive".into()));
        }
        Ok(Self {
            beta,
            margin: tail_margin,
            forms: Vec::new(),
            cond: VillainConditional::default(),
            vals: Vec::new(),
            delta: Vec::new(),
            center: Vec::new(),
            nbr: Vec::new(),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn form(&mut self, d: usize) -> &mut Ellipsoid {
        if self.forms.len() <= d {
            self.forms.resize_with(d + 1, || None);
        }
        self.forms[d].get_or_insert_with(|| {
            let m = d - 1;
            let p = nalgebra::DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / d as f64);
            Ellipsoid::new(&p).expect("I - J/d is positive definite")
        })
    }

    /// Builds the conditional law for the given neighbour angles.
    pub fn conditional(&mut self, neighbors: &[f64]) -> &VillainConditional {
        let d = neighbors.len();
        let beta = self.beta;
        let c = &mut self.cond;
        c.weights.clear();
        c.means.clear();
        if d == 0 {
            c.uniform = true;
            c.total = 1.0;
            return &self.cond;
        }
        c.uniform = false;
        c.sd = 1.0 / (beta * d as f64).sqrt();
        let a1 = neighbors[0];
        self.delta.clear();
        self.delta.extend(neighbors[1..].iter().map(|&a| wrap(a - a1)));
        self.center.clear();
        self.center.extend(self.delta.iter().map(|x| -x / TAU));
        // value of (k - c)ᵀ P (k - c); the Gibbs weight is exp(-s · value)
        let s = 2.0 * PI * PI * beta;
        let margin = self.margin;
        let center = std::mem::take(&mut self.center);
        let delta = std::mem::take(&mut self.delta);
        let mut vals = std::mem::take(&mut self.vals);
        vals.clear();
        let mut means = std::mem::take(&mut self.cond.means);
        let form = self.form(d);
        let (_, v0) = form.rounded_value(&center);
        form.for_each(&center, v0 + margin / s, |k, v| {
            let sum_y: f64 = delta.iter().zip(k).map(|(dl, &kj)| dl + TAU * kj as f64).sum();
            vals.push(v);
            means.push(a1 + sum_y / d as f64);
        });
        let vmin = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let c = &mut self.cond;
        c.means = means;
        c.weights.extend(vals.iter().map(|v| (-s * (v - vmin)).exp()));
        c.total = c.weights.iter().sum();
        self.vals = vals;
        self.center = center;
        self.delta = delta;
        &self.cond
    }

    /// One sequential sweep over the angles; `m` is left untouched.
    pub fn sweep_theta<R: Rng + ?Sized>(&mut self, g: &LatticeGeometry, theta: &mut [f64], rng: &mut R) {
        let root = g.root_vertex();
        let mut nbr = std::mem::take(&mut self.nbr);
        for v in 0..g.vertex_count() {
            if v == root {
                continue;
            }
            nbr.clear();
            nbr.extend(g.incident(v).iter().map(|i| theta[i.neighbor]));
            let x = self.conditional(&nbr).sample(rng);
            theta[v] = x;
        }
        self.nbr = nbr;
    }

    /// One angle sweep followed by a fresh `m | θ`, which keeps the joint
    /// law of `(θ, m)` invariant.
    pub fn sweep<R: Rng + ?Sized>(&mut self, g: &LatticeGeometry, state: &mut VillainState, rng: &mut R) {
        self.sweep_theta(g, &mut state.theta.values, rng);
        state.m = sample_m_unchecked(g, &state.theta, self.beta, rng);
    }
}

/// Convenience wrapper for a single joint sweep.
pub fn villain_heat_bath_sweep<R: Rng + ?Sized>(
    g: &LatticeGeometry,
    state: &VillainState,
    beta: f64,
    rng: &mut R,
) -> Result<VillainState> {
    let mut hb = VillainHeatBath::new(beta, super::ChainConfig::default().tail_margin)?;
    let mut s = state.clone();
    hb.sweep(g, &mut s, rng);
    Ok(s)
}

/// Independent edge draws `m(e) ~ IG(-dθ(e)/2π, (2π)²β)`.
pub fn sample_m_given_theta<R: Rng + ?Sized>(
    g: &LatticeGeometry,
    theta: &Form,
    beta: f64,
    rng: &mut R,
) -> Result<IntForm> {
    check_beta(beta)?;
    if theta.degree != 0 {
        return Err(Error::Degree("angles are a 0-form"));
    }
    theta.check(g)?;
    Ok(sample_m_unchecked(g, theta, beta, rng))
}

pub(crate) fn sample_m_unchecked<R: Rng + ?Sized>(
    g: &LatticeGeometry,
    theta: &Form,
    beta: f64,
    rng: &mut R,
) -> IntForm {
    let b = TAU * TAU * beta;
    let values =
        d0(g, &theta.values).into_iter().map(|x| ig_sample_unchecked(-x / TAU, b, rng)).collect();
    Form { degree: 1, values }
}
