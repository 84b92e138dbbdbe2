//! Monte Carlo measurement layer.
//!
//! Chains run independently (one RNG stream each) and are merged in chain
//! order, so every report is a deterministic function of the configuration.
//! Error bars come from batch means over contiguous blocks.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calculus::{apply_green, d1, green, neg_laplacian, Form};
use crate::error::{Error, Result};
use crate::ig::{error_function_m, ig_variance};
use crate::lattice::{build_lattice, BoundaryCondition, LatticeGeometry};
use crate::samplers::villain::sample_m_unchecked;
use crate::samplers::{gff_sample, ChainConfig, CoulombMetropolis, IVHeatBath, IVState, VillainHeatBath, VillainState};
use crate::transforms::decouple;

/// Chain parameters plus the merge layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    pub chain: ChainConfig,
    /// Independent chains, streams `0..chains` of the seed.
    pub chains: usize,
    /// Total batches across chains; at least 32.
    pub batches: usize,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self { chain: ChainConfig::default(), chains: 4, batches: 32 }
    }
}

pub const MIN_BATCHES: usize = 32;

impl MeasureConfig {
    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if self.chains == 0 {
            return Err(Error::InvalidParameter("chains must be >= 1".into()));
        }
        if self.batches < MIN_BATCHES {
            return Err(Error::InvalidParameter(format!("batches must be >= {MIN_BATCHES}, got {}", self.batches)));
        }
        if self.samples_per_chain() * self.chains < self.batches {
            return Err(Error::InvalidParameter("fewer samples than batches".into()));
        }
        Ok(())
    }

    /// `sweeps / thin`, at least one.
    pub fn samples_per_chain(&self) -> usize {
        (self.chain.sweeps / self.chain.thin).max(1)
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// Point estimate with a batch-means standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
    pub batches: usize,
    pub tau_int: f64,
    pub seed: u64,
    pub config_hash: String,
    /// Analytic comparison value, when the observable has one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_kind: Option<String>,
}

impl EstimateReport {
    /// A value known without sampling.
    pub fn exact(value: f64, cfg: &MeasureConfig) -> Self {
        Self {
            estimate: value,
            stderr: 0.0,
            samples: 0,
            batches: 0,
            tau_int: 0.0,
            seed: cfg.chain.seed,
            config_hash: cfg.hash(),
            reference: None,
            reference_kind: None,
        }
    }

    pub fn from_series(series: &[Vec<f64>], cfg: &MeasureConfig) -> Result<Self> {
        let (estimate, stderr, batches) = batch_means(series, cfg.batches)?;
        Ok(Self {
            estimate,
            stderr,
            samples: series.iter().map(Vec::len).sum(),
            batches,
            tau_int: tau_int(series),
            seed: cfg.chain.seed,
            config_hash: cfg.hash(),
            reference: None,
            reference_kind: None,
        })
    }

    fn with_reference(mut self, value: f64, kind: &str) -> Self {
        self.reference = Some(value);
        self.reference_kind = Some(kind.into());
        self
    }

    fn scaled(mut self, s: f64) -> Self {
        self.estimate *= s;
        self.stderr *= s.abs();
        self
    }
}

/// Mean of equal-size contiguous batch means and its standard error.
/// Each chain contributes `⌈batches / chains⌉` batches; a remainder at the
/// end of a chain is dropped.
pub fn batch_means(series: &[Vec<f64>], batches: usize) -> Result<(f64, f64, usize)> {
    if series.is_empty() {
        return Err(Error::InvalidParameter("no chains".into()));
    }
    let per = batches.div_ceil(series.len()).max(1);
    let mut means = Vec::with_capacity(per * series.len());
    for s in series {
        let size = s.len() / per;
        if size == 0 {
            return Err(Error::InvalidParameter(format!("chain of {} samples cannot form {per} batches", s.len())));
        }
        for b in 0..per {
            means.push(s[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64);
        }
    }
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0).max(1.0);
    Ok((mean, (var / k).sqrt(), means.len()))
}

/// Integrated autocorrelation time with Sokal's self-consistent window
/// `M ≥ 6 τ(M)`; autocovariances are pooled over chains.
pub fn tau_int(series: &[Vec<f64>]) -> f64 {
    let n: usize = series.iter().map(Vec::len).sum();
    if n < 2 {
        return 1.0;
    }
    let mean = series.iter().flatten().sum::<f64>() / n as f64;
    let autocov = |t: usize| {
        let mut s = 0.0;
        let mut c = 0usize;
        for x in series {
            if x.len() > t {
                s += x.iter().zip(&x[t..]).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>();
                c += x.len() - t;
            }
        }
        if c == 0 {
            0.0
        } else {
            s / c as f64
        }
    };
    let c0 = autocov(0);
    if !(c0 > 0.0) {
        return 1.0;
    }
    let max_lag = series.iter().map(Vec::len).max().unwrap_or(0) / 2;
    let mut tau = 1.0;
    for t in 1..max_lag {
        tau += 2.0 * autocov(t) / c0;
        if t as f64 >= 6.0 * tau {
            break;
        }
    }
    tau.max(f64::MIN_POSITIVE)
}

/// Runs `f` on every chain stream in parallel, results in chain order.
pub fn run_chains<T: Send>(cfg: &MeasureConfig, f: impl Fn(&ChainConfig) -> Result<T> + Sync) -> Result<Vec<T>> {
    cfg.validate()?;
    (0..cfg.chains as u64).into_par_iter().map(|c| f(&cfg.chain.with_chain(c))).collect()
}

/// `k` observables per chain: `out[k][chain][sample]`.
type Series = Vec<Vec<Vec<f64>>>;

fn transpose(per_chain: Vec<Vec<Vec<f64>>>, k: usize) -> Series {
    let mut out: Series = vec![Vec::with_capacity(per_chain.len()); k];
    for chain in per_chain {
        for (o, s) in out.iter_mut().zip(chain) {
            o.push(s);
        }
    }
    out
}

/// Villain chain observables. `with_m` refreshes `m | θ` before each
/// measurement.
fn villain_series(
    g: &LatticeGeometry,
    beta: f64,
    cfg: &MeasureConfig,
    k: usize,
    with_m: bool,
    f: impl Fn(&VillainState, &mut [f64]) -> Result<()> + Sync,
) -> Result<Series> {
    let per_chain = run_chains(cfg, |c| {
        let mut rng = c.rng();
        let mut hb = VillainHeatBath::new(beta, c.tail_margin)?;
        let mut state = VillainState::zero(g);
        for _ in 0..c.burn_in {
            hb.sweep_theta(g, &mut state.theta.values, &mut rng);
        }
        let samples = cfg.samples_per_chain();
        let mut out = vec![Vec::with_capacity(samples); k];
        let mut buf = vec![0.0; k];
        for _ in 0..samples {
            for _ in 0..c.thin {
                hb.sweep_theta(g, &mut state.theta.values, &mut rng);
            }
            if with_m {
                state.m = sample_m_unchecked(g, &state.theta, beta, &mut rng);
            }
            f(&state, &mut buf)?;
            for (o, &x) in out.iter_mut().zip(&buf) {
                o.push(x);
            }
        }
        Ok(out)
    })?;
    Ok(transpose(per_chain, k))
}

/// `⟨q, w_j⟩` for charges `q = dm` of the local pipeline.
fn coulomb_series(g: &LatticeGeometry, beta: f64, cfg: &MeasureConfig, w: &[Vec<f64>]) -> Result<Series> {
    villain_series(g, beta, cfg, w.len(), true, |s, out| {
        let q = d1(g, &s.m.values);
        for (o, wj) in out.iter_mut().zip(w) {
            *o = q.iter().zip(wj).map(|(&a, b)| a as f64 * b).sum();
        }
        Ok(())
    })
}

/// `⟨Ψ, w_j⟩` for the IV-GFF at inverse temperature `1/β` on `degree`.
fn iv_series(g: &LatticeGeometry, degree: usize, beta: f64, cfg: &MeasureConfig, w: &[Vec<f64>]) -> Result<Series> {
    let hb = IVHeatBath::new(g, degree, beta)?;
    let per_chain = run_chains(cfg, |c| {
        let mut rng = c.rng();
        let mut s = IVState::zero(g, degree);
        for _ in 0..c.burn_in {
            hb.sweep(&mut s, &mut rng);
        }
        let samples = cfg.samples_per_chain();
        let mut out = vec![Vec::with_capacity(samples); w.len()];
        for _ in 0..samples {
            for _ in 0..c.thin {
                hb.sweep(&mut s, &mut rng);
            }
            for (o, wj) in out.iter_mut().zip(w) {
                o.push(s.psi.values.iter().zip(wj).map(|(&a, b)| a as f64 * b).sum());
            }
        }
        Ok(out)
    })?;
    Ok(transpose(per_chain, w.len()))
}

/// `(x - x̄)²` with the pooled mean, whose batch means estimate the variance.
fn centered_squares(series: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n: usize = series.iter().map(Vec::len).sum();
    let mean = series.iter().flatten().sum::<f64>() / n.max(1) as f64;
    series.iter().map(|s| s.iter().map(|x| (x - mean) * (x - mean)).collect()).collect()
}

fn check_form(g: &LatticeGeometry, f: &Form, degree: usize) -> Result<()> {
    if f.degree != degree {
        return Err(Error::Degree("test function has the wrong degree"));
    }
    f.check(g)
}

/// `Var[⟨Δ⁻¹q, g⟩]` from the local pipeline, with the lower bound
/// `M(β)/((2π)²β) ⟨g, (-Δ)⁻¹ g⟩` as reference.
pub fn coulomb_potential_variance(g: &LatticeGeometry, gf: &Form, beta: f64, cfg: &MeasureConfig) -> Result<EstimateReport> {
    check_form(g, gf, 2)?;
    let u = apply_green(g, gf)?;
    let energy: f64 = gf.values.iter().zip(&u.values).map(|(a, b)| a * b).sum();
    let bound = error_function_m(beta)? / (TAU * TAU * beta) * energy;
    if gf.max_abs() == 0.0 {
        return Ok(EstimateReport::exact(0.0, cfg).with_reference(0.0, "lower bound"));
    }
    // ⟨Δ⁻¹q, g⟩ = -⟨q, (-Δ)⁻¹g⟩
    let w: Vec<f64> = u.values.iter().map(|x| -x).collect();
    let s = coulomb_series(g, beta, cfg, &[w])?;
    Ok(EstimateReport::from_series(&centered_squares(&s[0]), cfg)?.with_reference(bound, "lower bound"))
}

/// `Re E[exp(2πi (Δ⁻¹q(f₁) - Δ⁻¹q(f₂)))]` with the constant-free decay shape
/// `exp(-(1/2) M(β)/(2(2π)²β) ⟨δ, (-Δ)⁻¹δ⟩)`, `δ = 1_{f₁} - 1_{f₂}`, as reference.
pub fn coulomb_char_function(
    g: &LatticeGeometry,
    f1: usize,
    f2: usize,
    beta: f64,
    cfg: &MeasureConfig,
) -> Result<EstimateReport> {
    if f1 >= g.face_count() || f2 >= g.face_count() {
        return Err(Error::InvalidParameter("face index out of range".into()));
    }
    if f1 == f2 {
        return Ok(EstimateReport::exact(1.0, cfg).with_reference(1.0, "decay shape"));
    }
    let mut delta = Form::zeros(g, 2);
    delta.values[f1] += 1.0;
    delta.values[f2] -= 1.0;
    let root = g.root_face();
    delta.values[root] = 0.0;
    let u = apply_green(g, &delta)?;
    let energy: f64 = delta.values.iter().zip(&u.values).map(|(a, b)| a * b).sum();
    let shape = (-0.5 * error_function_m(beta)? / (2.0 * TAU * TAU * beta) * energy).exp();
    let s = villain_series(g, beta, cfg, 1, true, |st, out| {
        let q = d1(g, &st.m.values);
        let x: f64 = q.iter().zip(&u.values).map(|(&a, b)| a as f64 * b).sum();
        out[0] = (TAU * x).cos();
        Ok(())
    })?;
    Ok(EstimateReport::from_series(&s[0], cfg)?.with_reference(shape, "decay shape"))
}

/// Direct and factorized estimates of `E[cos(θ(v₁) - θ(v₂))]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TwoPointReport {
    pub direct: EstimateReport,
    /// `E[cos((θ-φ)(v₁) - (θ-φ)(v₂))]`, the vortex factor.
    pub vortex: EstimateReport,
    /// Exact GFF factor `exp(-(G₁₁ + G₂₂ - 2G₁₂)/2β)`.
    pub gff_factor: f64,
    pub factorized: EstimateReport,
    /// Paired difference `direct - factorized`.
    pub difference: EstimateReport,
}

pub fn villain_two_point(g: &LatticeGeometry, v1: usize, v2: usize, beta: f64, cfg: &MeasureConfig) -> Result<TwoPointReport> {
    if v1 >= g.vertex_count() || v2 >= g.vertex_count() {
        return Err(Error::InvalidParameter("vertex index out of range".into()));
    }
    let root = g.root_vertex();
    let gv = |a: usize, b: usize| if a == root || b == root { Ok(0.0) } else { green(g, 0, a, b) };
    let var = gv(v1, v1)? + gv(v2, v2)? - 2.0 * gv(v1, v2)?;
    let gff_factor = (-var / (2.0 * beta)).exp();
    if v1 == v2 {
        let one = EstimateReport::exact(1.0, cfg);
        return Ok(TwoPointReport {
            direct: one.clone(),
            vortex: one.clone(),
            gff_factor,
            factorized: one,
            difference: EstimateReport::exact(0.0, cfg),
        });
    }
    let s = villain_series(g, beta, cfg, 3, true, |st, out| {
        let p = decouple(g, st)?;
        let th = &st.theta.values;
        let x1 = th[v1] - p.phi.values[v1];
        let x2 = th[v2] - p.phi.values[v2];
        out[0] = (th[v1] - th[v2]).cos();
        out[1] = (x1 - x2).cos();
        out[2] = out[0] - gff_factor * out[1];
        Ok(())
    })?;
    let vortex = EstimateReport::from_series(&s[1], cfg)?;
    Ok(TwoPointReport {
        direct: EstimateReport::from_series(&s[0], cfg)?.with_reference(gff_factor, "gff factor"),
        factorized: vortex.clone().scaled(gff_factor),
        vortex,
        gff_factor,
        difference: EstimateReport::from_series(&s[2], cfg)?,
    })
}

/// `(2π)²β E[Var^IG(-dθ(e)/2π, (2π)²β)]` with `M(β)` as reference.
pub fn tilde_m_estimator(g: &LatticeGeometry, e: usize, beta: f64, cfg: &MeasureConfig) -> Result<EstimateReport> {
    if e >= g.edge_count() {
        return Err(Error::InvalidParameter("edge index out of range".into()));
    }
    let b = TAU * TAU * beta;
    let (t, h) = g.edge(e);
    let s = villain_series(g, beta, cfg, 1, false, |st, out| {
        let dth = st.theta.values[h] - st.theta.values[t];
        out[0] = b * ig_variance(-dth / TAU, b);
        Ok(())
    })?;
    Ok(EstimateReport::from_series(&s[0], cfg)?.with_reference(error_function_m(beta)?, "M(beta)"))
}

/// Wraps into `[-π, π)`.
fn wrap(x: f64) -> f64 {
    x - TAU * ((x + PI) / TAU).floor()
}

/// Edges with both ends within sup-distance `r` of vertex `center`.
pub fn window_edges(g: &LatticeGeometry, center: usize, r: usize) -> Result<Vec<usize>> {
    let c = g.vertex_pos(center).ok_or_else(|| Error::InvalidParameter("window center has no position".into()))?;
    let inside = |v: usize| g.vertex_pos(v).is_some_and(|p| (p[0] - c[0]).abs() <= 2 * r as i64 && (p[1] - c[1]).abs() <= 2 * r as i64);
    Ok((0..g.edge_count()).filter(|&e| {
        let (a, b) = g.edge(e);
        inside(a) && inside(b)
    })
    .collect())
}

/// Probability that every gradient in the radius-`r` window around
/// `center` lies in `(-ε, ε)` modulo `2π`.
pub fn gradient_window_probability(
    g: &LatticeGeometry,
    center: usize,
    r: usize,
    eps: f64,
    beta: f64,
    cfg: &MeasureConfig,
) -> Result<EstimateReport> {
    let edges = window_edges(g, center, r)?;
    if edges.is_empty() {
        return Err(Error::InvalidParameter("empty window".into()));
    }
    let s = villain_series(g, beta, cfg, 1, false, |st, out| {
        let th = &st.theta.values;
        let ok = edges.iter().all(|&e| {
            let (a, b) = g.edge(e);
            wrap(th[b] - th[a]).abs() < eps
        });
        out[0] = if ok { 1.0 } else { 0.0 };
        Ok(())
    })?;
    EstimateReport::from_series(&s[0], cfg)
}

/// One side of the three-way variance identity for a test 2-form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VarianceIdentity {
    /// `Var^GFF_{1/β}[⟨φ, g⟩]` from exact samples.
    pub gff: EstimateReport,
    /// `β ⟨g, (-Δ)⁻¹ g⟩`.
    pub gff_exact: f64,
    /// `Var^IV_{1/β}[⟨Ψ, g⟩]`.
    pub iv: EstimateReport,
    /// `(2π)²β² Var^Coul_β[⟨Δ⁻¹q, g⟩]`.
    pub coulomb: EstimateReport,
    /// `gff - iv - coulomb` and its combined standard error.
    pub residual: f64,
    pub residual_stderr: f64,
}

/// `Var^GFF = Var^IV + (2π)²β² Var^Coul` on faces, each side sampled
/// independently, for every test form in `gs`.
pub fn variance_identity(g: &LatticeGeometry, gs: &[Form], beta: f64, cfg: &MeasureConfig) -> Result<Vec<VarianceIdentity>> {
    for f in gs {
        check_form(g, f, 2)?;
    }
    let w: Vec<Vec<f64>> = gs.iter().map(|f| f.values.clone()).collect();
    let u: Vec<Vec<f64>> = gs.iter().map(|f| apply_green(g, f).map(|x| x.values)).collect::<Result<_>>()?;
    let neg_u: Vec<Vec<f64>> = u.iter().map(|x| x.iter().map(|v| -v).collect()).collect();
    let coul = coulomb_series(g, beta, cfg, &neg_u)?;
    let iv = iv_series(g, 2, beta, cfg, &w)?;
    let gff_chains = run_chains(cfg, |c| {
        let mut rng = c.rng();
        let samples = cfg.samples_per_chain();
        let mut out = vec![Vec::with_capacity(samples); w.len()];
        for _ in 0..samples {
            let phi = gff_sample(g, 2, 1.0 / beta, &mut rng)?;
            for (o, wj) in out.iter_mut().zip(&w) {
                o.push(phi.values.iter().zip(wj).map(|(a, b)| a * b).sum());
            }
        }
        Ok(out)
    })?;
    let gff = transpose(gff_chains, w.len());
    let scale = TAU * TAU * beta * beta;
    let mut out = Vec::with_capacity(gs.len());
    for j in 0..gs.len() {
        let gr = EstimateReport::from_series(&centered_squares(&gff[j]), cfg)?;
        let ir = EstimateReport::from_series(&centered_squares(&iv[j]), cfg)?;
        let cr = EstimateReport::from_series(&centered_squares(&coul[j]), cfg)?.scaled(scale);
        let exact = beta * w[j].iter().zip(&u[j]).map(|(a, b)| a * b).sum::<f64>();
        out.push(VarianceIdentity {
            residual: gr.estimate - ir.estimate - cr.estimate,
            residual_stderr: (gr.stderr.powi(2) + ir.stderr.powi(2) + cr.stderr.powi(2)).sqrt(),
            gff: gr,
            gff_exact: exact,
            iv: ir,
            coulomb: cr,
        });
    }
    Ok(out)
}

/// Entrywise comparison of the decoupled fields with their laws.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecouplingReport {
    pub samples: usize,
    pub batches: usize,
    /// Covariance entries `(v, w)`, `v ≤ w`, tested against `G(v, w)/β`.
    pub cov_tests: usize,
    pub cov_max_z: f64,
    pub cov_failures: usize,
    /// Pairs `(v, f)` tested for zero correlation of `φ(v)` and `q(f)`.
    pub corr_tests: usize,
    pub corr_max_z: f64,
    pub corr_failures: usize,
    /// Faces whose charge never moved, so the correlation is undefined.
    pub corr_skipped: usize,
    pub z_limit: f64,
}

/// Samples `(θ, m)`, decouples each sample and z-scores every covariance
/// entry of `φ` and every `φ`–`q` correlation.
pub fn decoupling_statistics(g: &LatticeGeometry, beta: f64, cfg: &MeasureConfig, z_limit: f64) -> Result<DecouplingReport> {
    let op0 = neg_laplacian(g, 0)?;
    let op2 = neg_laplacian(g, 2)?;
    let vs = op0.free_cells().to_vec();
    let fs = op2.free_cells().to_vec();
    let (nv, nf) = (vs.len(), fs.len());
    let s = villain_series(g, beta, cfg, nv + nf, true, |st, out| {
        let p = decouple(g, st)?;
        for (o, &v) in out.iter_mut().zip(&vs) {
            *o = p.phi.values[v];
        }
        for (o, &f) in out[nv..].iter_mut().zip(&fs) {
            *o = p.q.values[f] as f64;
        }
        Ok(())
    })?;
    let green_m = op0.green_matrix()?;
    let center = |x: &[Vec<f64>]| {
        let n: usize = x.iter().map(Vec::len).sum();
        let m = x.iter().flatten().sum::<f64>() / n as f64;
        let sd = (x.iter().flatten().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
        (x.iter().map(|c| c.iter().map(|v| v - m).collect::<Vec<_>>()).collect::<Vec<_>>(), sd)
    };
    let centered: Vec<(Vec<Vec<f64>>, f64)> = s.iter().map(|x| center(x)).collect();
    let product = |a: &[Vec<f64>], b: &[Vec<f64>], scale: f64| -> Vec<Vec<f64>> {
        a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q * scale).collect()).collect()
    };
    let mut rep = DecouplingReport {
        samples: s[0].iter().map(Vec::len).sum(),
        batches: 0,
        cov_tests: 0,
        cov_max_z: 0.0,
        cov_failures: 0,
        corr_tests: 0,
        corr_max_z: 0.0,
        corr_failures: 0,
        corr_skipped: 0,
        z_limit,
    };
    for i in 0..nv {
        for j in i..nv {
            let (mean, se, b) = batch_means(&product(&centered[i].0, &centered[j].0, 1.0), cfg.batches)?;
            rep.batches = b;
            let z = (mean - green_m[(i, j)] / beta).abs() / se;
            rep.cov_tests += 1;
            rep.cov_max_z = rep.cov_max_z.max(z);
            rep.cov_failures += usize::from(!(z <= z_limit));
        }
    }
    for i in 0..nv {
        for j in 0..nf {
            let (ci, si) = &centered[i];
            let (cj, sj) = &centered[nv + j];
            if *sj == 0.0 {
                rep.corr_skipped += 1;
                continue;
            }
            let (mean, se, _) = batch_means(&product(ci, cj, 1.0 / (si * sj)), cfg.batches)?;
            if se == 0.0 {
                rep.corr_skipped += 1;
                continue;
            }
            let z = mean.abs() / se;
            rep.corr_tests += 1;
            rep.corr_max_z = rep.corr_max_z.max(z);
            rep.corr_failures += usize::from(!(z <= z_limit));
        }
    }
    Ok(rep)
}

/// Empirical law of full charge vectors from the local pipeline.
pub fn coulomb_histogram_local(g: &LatticeGeometry, beta: f64, cfg: &MeasureConfig) -> Result<HashMap<Vec<i64>, u64>> {
    let per_chain = run_chains(cfg, |c| {
        let mut rng = c.rng();
        let mut hb = VillainHeatBath::new(beta, c.tail_margin)?;
        let mut st = VillainState::zero(g);
        for _ in 0..c.burn_in {
            hb.sweep_theta(g, &mut st.theta.values, &mut rng);
        }
        let mut h = HashMap::new();
        for _ in 0..cfg.samples_per_chain() {
            for _ in 0..c.thin {
                hb.sweep_theta(g, &mut st.theta.values, &mut rng);
            }
            st.m = sample_m_unchecked(g, &st.theta, beta, &mut rng);
            *h.entry(d1(g, &st.m.values)).or_insert(0u64) += 1;
        }
        Ok(h)
    })?;
    Ok(merge_histograms(per_chain))
}

/// Empirical law of full charge vectors from the Metropolis baseline on faces.
pub fn coulomb_histogram_metropolis(g: &LatticeGeometry, beta: f64, cfg: &MeasureConfig) -> Result<HashMap<Vec<i64>, u64>> {
    let per_chain = run_chains(cfg, |c| {
        let mut rng = c.rng();
        let mut mh = CoulombMetropolis::new(g, 2, beta, c.metropolis_step)?;
        for _ in 0..c.burn_in {
            mh.sweep(&mut rng);
        }
        let mut h = HashMap::new();
        for _ in 0..cfg.samples_per_chain() {
            for _ in 0..c.thin {
                mh.sweep(&mut rng);
            }
            *h.entry(mh.state(g).q.values).or_insert(0u64) += 1;
        }
        Ok(h)
    })?;
    Ok(merge_histograms(per_chain))
}

fn merge_histograms(hs: Vec<HashMap<Vec<i64>, u64>>) -> HashMap<Vec<i64>, u64> {
    let mut out = HashMap::new();
    for h in hs {
        for (k, v) in h {
            *out.entry(k).or_insert(0) += v;
        }
    }
    out
}

/// Total variation distance between two empirical laws.
pub fn empirical_tv(a: &HashMap<Vec<i64>, u64>, b: &HashMap<Vec<i64>, u64>) -> f64 {
    let na = a.values().sum::<u64>().max(1) as f64;
    let nb = b.values().sum::<u64>().max(1) as f64;
    let mut tv = 0.0;
    for (k, &x) in a {
        tv += (x as f64 / na - b.get(k).copied().unwrap_or(0) as f64 / nb).abs();
    }
    for (k, &y) in b {
        if !a.contains_key(k) {
            tv += y as f64 / nb;
        }
    }
    tv / 2.0
}

/// Maximum and per-site tail statistics of the wired IV-GFF at one size.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxRow {
    pub n: usize,
    pub samples: usize,
    /// `√((1 - M(β)/2) 2β/π) log n`.
    pub threshold: f64,
    pub exceedance: EstimateReport,
    pub mean_max: EstimateReport,
    /// Per-site `P(Ψ(v) ≥ α √(β/2π) log n)` over sites with `|x|, |y| ≤ n/2`.
    pub site_tails: Vec<SiteTail>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SiteTail {
    pub alpha: f64,
    pub threshold: f64,
    pub probability: EstimateReport,
}

/// Least-squares fit of `log p = log C + s log n`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailFit {
    pub alpha: f64,
    /// `-α²/2`.
    pub expected_slope: f64,
    /// Constant at the expected slope (weighted mean of `log p + α²/2 log n`).
    pub log_c: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    /// Chi-square of the fixed-slope fit and its degrees of freedom.
    pub chi2: f64,
    pub dof: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxStatistics {
    pub beta: f64,
    pub m_beta: f64,
    pub rows: Vec<MaxRow>,
    pub fits: Vec<TailFit>,
}

impl MaxStatistics {
    /// Point estimates of the exceedance frequency never increase with `n`.
    pub fn exceedance_non_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].exceedance.estimate <= w[0].exceedance.estimate)
    }
}

/// IV-GFF at inverse temperature `1/β` on the wired `[-n, n]²`, sampled by
/// independent heat-bath chains. Each chain contributes
/// `sweeps / thin` samples after its burn-in.
pub fn ivgff_max_statistics(n_list: &[usize], beta: f64, alphas: &[f64], cfg: &MeasureConfig) -> Result<MaxStatistics> {
    let m_beta = error_function_m(beta)?;
    let mut rows = Vec::new();
    for &n in n_list {
        let g = build_lattice(n, BoundaryCondition::Zero)?;
        let ln = (n as f64).ln();
        let threshold = ((1.0 - m_beta / 2.0) * 2.0 * beta / PI).sqrt() * ln;
        let site_thr: Vec<f64> = alphas.iter().map(|a| a * (beta / TAU).sqrt() * ln).collect();
        let bulk: Vec<usize> = (0..g.vertex_count())
            .filter(|&v| g.vertex_pos(v).is_some_and(|p| p[0].abs() <= n as i64 && p[1].abs() <= n as i64))
            .collect();
        let hb = IVHeatBath::new(&g, 0, beta)?;
        let k = 2 + alphas.len();
        let per_chain = run_chains(cfg, |c| {
            let mut rng = c.rng();
            let mut s = IVState::zero(&g, 0);
            for _ in 0..c.burn_in {
                hb.sweep(&mut s, &mut rng);
            }
            let samples = cfg.samples_per_chain();
            let mut out = vec![Vec::with_capacity(samples); k];
            for _ in 0..samples {
                for _ in 0..c.thin {
                    hb.sweep(&mut s, &mut rng);
                }
                // the root value 0 takes part in the maximum
                let max = *s.psi.values.iter().max().expect("non-empty") as f64;
                out[0].push(if max >= threshold { 1.0 } else { 0.0 });
                out[1].push(max);
                for (j, &t) in site_thr.iter().enumerate() {
                    let hits = bulk.iter().filter(|&&v| s.psi.values[v] as f64 >= t).count();
                    out[2 + j].push(hits as f64 / bulk.len() as f64);
                }
            }
            Ok(out)
        })?;
        let series = transpose(per_chain, k);
        let site_tails = alphas
            .iter()
            .zip(&site_thr)
            .enumerate()
            .map(|(j, (&alpha, &t))| {
                Ok(SiteTail { alpha, threshold: t, probability: EstimateReport::from_series(&series[2 + j], cfg)? })
            })
            .collect::<Result<_>>()?;
        rows.push(MaxRow {
            n,
            samples: series[0].iter().map(Vec::len).sum(),
            threshold,
            exceedance: EstimateReport::from_series(&series[0], cfg)?,
            mean_max: EstimateReport::from_series(&series[1], cfg)?,
            site_tails,
        });
    }
    let fits = alphas.iter().enumerate().map(|(j, &alpha)| fit_tail(&rows, j, alpha)).collect();
    Ok(MaxStatistics { beta, m_beta, rows, fits })
}

/// Fits the tail of column `j` of `rows`.
pub fn fit_tail(rows: &[MaxRow], j: usize, alpha: f64) -> TailFit {
    let expected = -alpha * alpha / 2.0;
    // points (log n, log p) with weights 1/Var(log p)
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter_map(|r| {
            let p = &r.site_tails[j].probability;
            (p.estimate > 0.0 && p.stderr > 0.0).then(|| {
                let sd = p.stderr / p.estimate;
                ((r.n as f64).ln(), p.estimate.ln(), 1.0 / (sd * sd))
            })
        })
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let log_c = pts.iter().map(|(x, y, w)| w * (y - expected * x)).sum::<f64>() / sw;
    let chi2 = pts.iter().map(|(x, y, w)| w * (y - log_c - expected * x).powi(2)).sum();
    let (slope, slope_stderr) = if pts.len() >= 2 {
        let xm = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
        let ym = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
        let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xm).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xm) * (p.1 - ym)).sum();
        (sxy / sxx, sxx.recip().sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    TailFit { alpha, expected_slope: expected, log_c, slope, slope_stderr, chi2, dof: pts.len().saturating_sub(1) }
}

/// One sampler in the benchmark table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchRow {
    pub sampler: String,
    pub n: usize,
    pub estimate: EstimateReport,
    /// Elementary moves: site heat-bath and edge draws, or charge proposals.
    pub moves: u64,
    /// Arithmetic work: one unit per local move, one per potential entry
    /// updated by the baseline.
    pub work: u64,
    pub work_per_move: f64,
    pub seconds: f64,
    pub seconds_per_effective_sample: f64,
}

/// Local pipeline against the Metropolis baseline on `⟨Δ⁻¹q, g⟩`.
/// Wall-clock fields are measured and therefore not reproducible.
pub fn sampler_benchmark(g: &LatticeGeometry, gf: &Form, beta: f64, cfg: &MeasureConfig) -> Result<Vec<BenchRow>> {
    check_form(g, gf, 2)?;
    let n = g.radius().unwrap_or(0);
    let w: Vec<f64> = apply_green(g, gf)?.values.iter().map(|x| -x).collect();
    let samples = cfg.samples_per_chain() as u64 * cfg.chains as u64;
    let sweeps_total = (cfg.chain.burn_in + cfg.samples_per_chain() * cfg.chain.thin) as u64 * cfg.chains as u64;

    let t = Instant::now();
    let local = coulomb_series(g, beta, cfg, std::slice::from_ref(&w))?;
    let secs = t.elapsed().as_secs_f64();
    let est = EstimateReport::from_series(&local[0], cfg)?;
    let local_moves = sweeps_total * (g.vertex_count() as u64 - 1) + samples * g.edge_count() as u64;
    let mut rows = vec![BenchRow {
        sampler: "local".into(),
        n,
        seconds_per_effective_sample: secs * est.tau_int / samples as f64,
        estimate: est,
        moves: local_moves,
        work: local_moves,
        work_per_move: 1.0,
        seconds: secs,
    }];

    let t = Instant::now();
    let per_chain = run_chains(cfg, |c| {
        let mut rng = c.rng();
        let mut mh = CoulombMetropolis::new(g, 2, beta, c.metropolis_step)?;
        let op = neg_laplacian(g, 2)?;
        let wf: Vec<f64> = op.free_cells().iter().map(|&f| w[f]).collect();
        for _ in 0..c.burn_in {
            mh.sweep(&mut rng);
        }
        let mut out = Vec::with_capacity(cfg.samples_per_chain());
        for _ in 0..cfg.samples_per_chain() {
            for _ in 0..c.thin {
                mh.sweep(&mut rng);
            }
            out.push(mh.charges().iter().zip(&wf).map(|(&q, b)| q as f64 * b).sum());
        }
        Ok((out, mh.proposed(), mh.work()))
    })?;
    let secs = t.elapsed().as_secs_f64();
    let moves: u64 = per_chain.iter().map(|x| x.1).sum();
    let work: u64 = per_chain.iter().map(|x| x.1 + x.2).sum();
    let series: Vec<Vec<f64>> = per_chain.into_iter().map(|x| x.0).collect();
    let est = EstimateReport::from_series(&series, cfg)?;
    rows.push(BenchRow {
        sampler: "metropolis".into(),
        n,
        seconds_per_effective_sample: secs * est.tau_int / samples as f64,
        estimate: est,
        moves,
        work,
        work_per_move: work as f64 / moves.max(1) as f64,
        seconds: secs,
    });
    Ok(rows)
}

/// A random rooted test form with entries uniform in `[-1, 1]`.
pub fn random_test_form<R: Rng + ?Sized>(g: &LatticeGeometry, degree: usize, rng: &mut R) -> Form {
    let mut f = Form::zeros(g, degree);
    let root = g.root_cell(degree);
    for (c, v) in f.values.iter_mut().enumerate() {
        if root != Some(c) {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    f
}
