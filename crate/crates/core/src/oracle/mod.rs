//! Exact values on small graphs with certified error bounds.
//!
//! Integer-valued models are summed over an ellipsoid whose complement has
//! provably small mass. The Villain model is integrated by a trapezoid rule
//! that is refined until successive values agree.

pub mod quadrature;
pub mod sums;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

use crate::calculus::{dstar, neg_laplacian, Form, IntForm};
use crate::error::{Error, Result};
use crate::ig::error_function_m;
use crate::lattice::LatticeGeometry;
use crate::samplers::villain::sample_m_unchecked;
use crate::samplers::VillainState;

use quadrature::{edge_weight, villain_integral};
use sums::{lattice_sum_with, FormData, LatticeSum};

/// Truncation and quadrature limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Certified relative tail mass of lattice sums.
    pub rel_tol: f64,
    /// Budget of lattice points per sum.
    pub max_points: usize,
    /// Initial trapezoid nodes per angle.
    pub quad_start: usize,
    pub quad_max_nodes: usize,
    /// Relative change between doublings that stops the refinement.
    pub quad_tol: f64,
    /// Largest intermediate table of the angle elimination.
    pub max_table: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-11,
            max_points: 50_000_000,
            quad_start: 16,
            quad_max_nodes: 512,
            quad_tol: 1e-11,
            max_table: 1 << 22,
        }
    }
}

/// `log Z` with a bound on `|Z_true / Z - 1|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionValue {
    pub log_z: f64,
    pub rel_error: f64,
    pub method: String,
}

/// Floating point slack on closed forms.
const ROUNDING: f64 = 1e-13;

fn dense_laplacian(g: &LatticeGeometry, degree: usize) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<usize>)> {
    let op = neg_laplacian(g, degree)?;
    let l = op.matrix().to_dense();
    let green = op.green_matrix()?;
    Ok((l, green, op.free_cells().to_vec()))
}

/// `Z^GFF_β = (2π/β)^{n/2} det(-Δ)^{-1/2}` over the `n` free cells.
pub fn log_z_gff(g: &LatticeGeometry, degree: usize, beta: f64) -> Result<PartitionValue> {
    check_positive(beta)?;
    let op = neg_laplacian(g, degree)?;
    let n = op.dim() as f64;
    let log_z = 0.5 * n * (2.0 * PI / beta).ln() - 0.5 * op.log_det()?;
    Ok(PartitionValue { log_z, rel_error: ROUNDING, method: "closed form".into() })
}

/// `Z^Coul_β = Σ_q exp(-2π²β ⟨q, (-Δ)⁻¹ q⟩)` over integer charges on the free cells.
pub fn log_z_coulomb(g: &LatticeGeometry, degree: usize, beta: f64, cfg: &OracleConfig) -> Result<PartitionValue> {
    check_positive(beta)?;
    let (_, green, _) = dense_laplacian(g, degree)?;
    let s = sum(&(green * (2.0 * PI * PI * beta)), None, None, cfg, None)?;
    Ok(real_value(&s, "direct enumeration"))
}

/// `Z^IV_u = Σ_Ψ exp(-(u/2) ⟨Ψ, (-Δ)Ψ⟩)` over integer heights on the free
/// cells. Summed directly when the point budget allows, otherwise through
/// the Poisson dual `(2π/u)^{n/2} det(-Δ)^{-1/2} Σ_k exp(-(2π²/u) ⟨k, (-Δ)⁻¹k⟩)`.
pub fn log_z_iv(g: &LatticeGeometry, degree: usize, u: f64, cfg: &OracleConfig) -> Result<PartitionValue> {
    check_positive(u)?;
    let (l, green, _) = dense_laplacian(g, degree)?;
    match sum(&(&l * (0.5 * u)), None, None, cfg, None) {
        Ok(s) => Ok(real_value(&s, "direct enumeration")),
        Err(Error::TooLarge(_)) => {
            let s = sum(&(green * (2.0 * PI * PI / u)), None, None, cfg, None)?;
            let gff = log_z_gff(g, degree, u)?;
            let mut v = real_value(&s, "dual enumeration");
            v.log_z += gff.log_z;
            v.rel_error += gff.rel_error;
            Ok(v)
        }
        Err(e) => Err(e),
    }
}

/// `Z^Vil_β = ∫ Σ_m exp(-(β/2) |dθ + 2πm|²) dθ` over the free angles.
pub fn log_z_villain(g: &LatticeGeometry, beta: f64, cfg: &OracleConfig) -> Result<PartitionValue> {
    check_positive(beta)?;
    let q = villain_integral(g, beta, None, cfg.quad_start, cfg.quad_max_nodes, cfg.quad_tol, None, cfg.max_table)?;
    if q.value.re <= 0.0 {
        return Err(Error::Uncertified("non-positive quadrature value".into()));
    }
    Ok(PartitionValue {
        log_z: q.value.re.ln(),
        rel_error: q.error / q.value.re,
        method: format!("trapezoid, {} nodes per angle", q.nodes),
    })
}

fn check_positive(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("inverse temperature must be finite and > 0, got {x}")))
    }
}

fn sum(
    a: &DMatrix<f64>,
    b: Option<&[f64]>,
    c: Option<&[f64]>,
    cfg: &OracleConfig,
    visit: Option<&mut dyn FnMut(&[i64], f64)>,
) -> Result<LatticeSum> {
    let data = FormData::new(a)?;
    lattice_sum_with(&data, b, c, cfg.rel_tol, cfg.max_points, visit)
}

fn real_value(s: &LatticeSum, method: &str) -> PartitionValue {
    PartitionValue { log_z: s.log_scale + s.value.re.ln(), rel_error: s.rel_error() + ROUNDING, method: method.into() }
}

/// An exact law on finitely many outcomes. Outcomes are full cell vectors
/// (the root entry included) or, for the single-edge Villain law,
/// `[angle bin, m]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LawTable {
    pub outcomes: Vec<Vec<i64>>,
    pub probs: Vec<f64>,
    /// Bound on the total probability of outcomes not listed.
    pub missing_mass: f64,
}

impl LawTable {
    pub fn prob(&self, x: &[i64]) -> f64 {
        self.outcomes.iter().position(|o| o == x).map_or(0.0, |i| self.probs[i])
    }

    /// Total variation distance to the empirical law of `counts`.
    pub fn tv_distance(&self, counts: &HashMap<Vec<i64>, u64>) -> f64 {
        let n: u64 = counts.values().sum();
        if n == 0 {
            return 1.0;
        }
        let n = n as f64;
        let mut listed = 0.0;
        let mut tv = 0.0;
        for (o, &p) in self.outcomes.iter().zip(&self.probs) {
            let f = counts.get(o).copied().unwrap_or(0) as f64 / n;
            listed += f;
            tv += (p - f).abs();
        }
        0.5 * (tv + (1.0 - listed).max(0.0))
    }
}

/// Which exact law to tabulate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum LawSpec {
    Coulomb { degree: usize },
    /// IV-GFF at inverse temperature `1/β`.
    IvGff { degree: usize },
    /// Joint law of `(angle bin, m)` on a graph with one free vertex and one edge.
    VillainEdge { bins: usize },
}

/// Exact law of a small model at inverse temperature `beta`.
pub fn exact_model_law(g: &LatticeGeometry, spec: LawSpec, beta: f64, cfg: &OracleConfig) -> Result<LawTable> {
    check_positive(beta)?;
    match spec {
        LawSpec::Coulomb { degree } => {
            let (_, green, free) = dense_laplacian(g, degree)?;
            integer_law(g, degree, &(green * (2.0 * PI * PI * beta)), &free, cfg)
        }
        LawSpec::IvGff { degree } => {
            let (l, _, free) = dense_laplacian(g, degree)?;
            integer_law(g, degree, &(l * (0.5 / beta)), &free, cfg)
        }
        LawSpec::VillainEdge { bins } => villain_edge_law(g, beta, bins),
    }
}

fn integer_law(
    g: &LatticeGeometry,
    degree: usize,
    a: &DMatrix<f64>,
    free: &[usize],
    cfg: &OracleConfig,
) -> Result<LawTable> {
    let count = g.cell_count(degree);
    let mut outcomes = Vec::new();
    let mut weights = Vec::new();
    let mut visit = |k: &[i64], w: f64| {
        let mut x = vec![0i64; count];
        for (&c, &v) in free.iter().zip(k) {
            x[c] = v;
        }
        outcomes.push(x);
        weights.push(w);
    };
    let s = sum(a, None, None, cfg, Some(&mut visit))?;
    let total = s.value.re;
    let probs = weights.iter().map(|w| w / total).collect();
    Ok(LawTable { outcomes, probs, missing_mass: s.rel_error() })
}

/// `∫_lo^hi e^{-β x²/2} dx`, accurate in both tails.
fn gauss_interval(lo: f64, hi: f64, beta: f64) -> f64 {
    let s = (0.5 * beta).sqrt();
    let c = (0.5 * PI / beta).sqrt();
    let (a, b) = (lo * s, hi * s);
    if a >= 0.0 {
        c * (libm::erfc(a) - libm::erfc(b))
    } else if b <= 0.0 {
        c * (libm::erfc(-b) - libm::erfc(-a))
    } else {
        c * (libm::erf(b) - libm::erf(a))
    }
}

fn villain_edge_law(g: &LatticeGeometry, beta: f64, bins: usize) -> Result<LawTable> {
    if g.vertex_count() != 2 || g.edge_count() != 1 || bins == 0 {
        return Err(Error::InvalidParameter("the edge law needs two vertices, one edge and at least one bin".into()));
    }
    let (t, _) = g.edge(0);
    // dθ = θ for a free head and -θ for a free tail
    let sign = if t == g.root_vertex() { 1.0 } else { -1.0 };
    let z = (2.0 * PI / beta).sqrt();
    let width = 2.0 * PI / bins as f64;
    let kmax = ((1490.0 / beta).sqrt() / (2.0 * PI)).ceil() as i64 + 2;
    let mut outcomes = Vec::new();
    let mut probs = Vec::new();
    for b in 0..bins {
        let (lo, hi) = (b as f64 * width, (b + 1) as f64 * width);
        for m in -kmax..=kmax {
            let shift = 2.0 * PI * m as f64;
            let (x0, x1) = (sign * lo + shift, sign * hi + shift);
            let p = gauss_interval(x0.min(x1), x0.max(x1), beta) / z;
            if p > 0.0 {
                outcomes.push(vec![b as i64, m]);
                probs.push(p);
            }
        }
    }
    Ok(LawTable { outcomes, probs, missing_mass: 1e-300 })
}

/// Exact Villain draw by rejection from uniform angles, for tiny graphs.
///
/// The acceptance probability is `Π_e w(dθ_e)/w(0)`, where `w` is the
/// wrapped Gaussian, which is maximal at zero. Then `m` is drawn given `θ`.
pub fn villain_exact_sample<R: Rng + ?Sized>(
    g: &LatticeGeometry,
    beta: f64,
    rng: &mut R,
    max_tries: usize,
) -> Result<VillainState> {
    check_positive(beta)?;
    let root = g.root_vertex();
    let w0 = edge_weight(0.0, beta, 0.0).re;
    let mut theta = vec![0.0; g.vertex_count()];
    for _ in 0..max_tries {
        for (v, t) in theta.iter_mut().enumerate() {
            *t = if v == root { 0.0 } else { rng.gen::<f64>() * 2.0 * PI };
        }
        let mut ratio = 1.0;
        for &[a, b] in g.edges() {
            ratio *= edge_weight(theta[b] - theta[a], beta, 0.0).re / w0;
        }
        if rng.gen::<f64>() < ratio {
            let theta = Form { degree: 0, values: theta };
            let m = sample_m_unchecked(g, &theta, beta, rng);
            return Ok(VillainState { theta, m });
        }
    }
    Err(Error::TooLarge(format!("rejection sampler exceeded {max_tries} proposals")))
}

/// One side-by-side comparison of two exact quantities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / |rhs|`, or the log difference for partition functions.
    pub rel_diff: f64,
    /// Sum of the certified errors of both sides.
    pub certificate: f64,
    pub pass: bool,
}

impl IdentityCheck {
    fn logs(name: &str, lhs: &PartitionValue, rhs_log: f64, rhs_err: f64, tol: f64) -> Self {
        let certificate = lhs.rel_error + rhs_err;
        let rel_diff = (lhs.log_z - rhs_log).abs();
        Self {
            name: name.into(),
            lhs: lhs.log_z,
            rhs: rhs_log,
            rel_diff,
            certificate,
            pass: rel_diff <= tol && certificate <= tol,
        }
    }
}

/// Agreement required of the exact identities.
pub const IDENTITY_TOL: f64 = 1e-8;

/// The three partition-function identities at `beta` (values are `log Z`):
/// Villain against vertex GFF times face Coulomb gas, face IV-GFF at `1/β`
/// against face GFF at `1/β` times face Coulomb gas, and face IV-GFF
/// against rescaled Villain.
pub fn partition_identities(g: &LatticeGeometry, beta: f64, cfg: &OracleConfig) -> Result<Vec<IdentityCheck>> {
    let vil = log_z_villain(g, beta, cfg)?;
    let gff_v = log_z_gff(g, 0, beta)?;
    let coul = log_z_coulomb(g, 2, beta, cfg)?;
    let iv = log_z_iv(g, 2, 1.0 / beta, cfg)?;
    let gff_f = log_z_gff(g, 2, 1.0 / beta)?;
    let nv = (g.vertex_count() - 1) as f64;
    let nf = (g.face_count() - 1) as f64;
    let scale = 0.5 * (nv + nf) * beta.ln() - 0.5 * (nv - nf) * (2.0 * PI).ln();
    Ok(vec![
        IdentityCheck::logs(
            "villain = gff(vertices) * coulomb(faces)",
            &vil,
            gff_v.log_z + coul.log_z,
            gff_v.rel_error + coul.rel_error,
            IDENTITY_TOL,
        ),
        IdentityCheck::logs(
            "iv(faces, 1/beta) = gff(faces, 1/beta) * coulomb(faces)",
            &iv,
            gff_f.log_z + coul.log_z,
            gff_f.rel_error + coul.rel_error,
            IDENTITY_TOL,
        ),
        IdentityCheck::logs("iv(faces, 1/beta) = villain * scale", &iv, vil.log_z + scale, vil.rel_error, IDENTITY_TOL),
    ])
}

/// `E^Vil_β[exp(i ⟨dθ + 2πm, h⟩)]` by quadrature, with an error bound.
pub fn villain_characteristic(
    g: &LatticeGeometry,
    beta: f64,
    h: &[f64],
    cfg: &OracleConfig,
) -> Result<(Complex64, f64)> {
    if h.len() != g.edge_count() {
        return Err(Error::GeometryMismatch("one phase per edge".into()));
    }
    let z = villain_integral(g, beta, None, cfg.quad_start, cfg.quad_max_nodes, cfg.quad_tol, None, cfg.max_table)?;
    let zh = villain_integral(
        g,
        beta,
        Some(h),
        cfg.quad_start,
        cfg.quad_max_nodes,
        cfg.quad_tol,
        Some(z.value.norm()),
        cfg.max_table,
    )?;
    let r = zh.value / z.value;
    Ok((r, (zh.error + r.norm() * z.error) / z.value.norm()))
}

/// `E^IV_u[exp(⟨Ψ, w⟩)]` for a real weight `w` on cells of `degree`.
pub fn iv_laplace(g: &LatticeGeometry, degree: usize, u: f64, w: &[f64], cfg: &OracleConfig) -> Result<(f64, f64)> {
    check_positive(u)?;
    let (l, _, free) = dense_laplacian(g, degree)?;
    let b: Vec<f64> = free.iter().map(|&c| w[c]).collect();
    let data = FormData::new(&(&l * (0.5 * u)))?;
    let num = lattice_sum_with(&data, Some(&b), None, cfg.rel_tol, cfg.max_points, None)?;
    let den = lattice_sum_with(&data, None, None, cfg.rel_tol, cfg.max_points, None)?;
    let v = (num.log_scale - den.log_scale).exp() * num.value.re / den.value.re;
    Ok((v, v * (num.rel_error() + den.rel_error())))
}

/// `E^Coul_β[exp(i ⟨q, c⟩)]` for a real phase `c` on cells of `degree`.
pub fn coulomb_characteristic(
    g: &LatticeGeometry,
    degree: usize,
    beta: f64,
    c: &[f64],
    cfg: &OracleConfig,
) -> Result<(Complex64, f64)> {
    check_positive(beta)?;
    let (_, green, free) = dense_laplacian(g, degree)?;
    let phase: Vec<f64> = free.iter().map(|&x| c[x]).collect();
    let data = FormData::new(&(green * (2.0 * PI * PI * beta)))?;
    let num = lattice_sum_with(&data, None, Some(&phase), cfg.rel_tol, cfg.max_points, None)?;
    let den = lattice_sum_with(&data, None, None, cfg.rel_tol, cfg.max_points, None)?;
    let v = num.value / den.value.re;
    Ok((v, (num.error + den.error) / den.value.re))
}

/// One transform identity evaluated at a random test function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransferCheck {
    pub name: String,
    pub lhs: f64,
    pub lhs_imag: f64,
    pub rhs: f64,
    pub rel_diff: f64,
    pub certificate: f64,
}

/// Checks, for `count` random test functions drawn from `seed`,
/// `E^Vil[e^{i⟨dθ+2πm,h⟩}] = e^{-|h|²/2β} E^IV_{1/β}[e^{⟨d*Ψ,h⟩/β}]` with
/// `Ψ` on faces, and
/// `E^IV_{1/β}[e^{⟨Ψ,w⟩/β}] = e^{⟨w,(-Δ)⁻¹w⟩/2β} E^Coul_β[e^{2πi⟨Δ⁻¹q,w⟩}]`.
pub fn transfer_checks(
    g: &LatticeGeometry,
    beta: f64,
    count: usize,
    seed: u64,
    cfg: &OracleConfig,
) -> Result<Vec<TransferCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let op = neg_laplacian(g, 2)?;
    let green = op.green_matrix()?;
    let root_face = g.root_face();
    let mut out = Vec::new();
    for i in 0..count {
        let h: Vec<f64> = (0..g.edge_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (lhs, lhs_err) = villain_characteristic(g, beta, &h, cfg)?;
        // ⟨d*Ψ, h⟩ = Σ_f Ψ_f ⟨d* 1_f, h⟩
        let hform = Form { degree: 1, values: h.clone() };
        let mut w = vec![0.0; g.face_count()];
        for (f, wf) in w.iter_mut().enumerate() {
            if f != root_face {
                let df = dstar(g, &Form::<f64>::indicator(g, 2, f, 1.0))?;
                *wf = df.values.iter().zip(&hform.values).map(|(a, b)| a * b).sum::<f64>() / beta;
            }
        }
        let (iv, iv_err) = iv_laplace(g, 2, 1.0 / beta, &w, cfg)?;
        let damp = (-h.iter().map(|x| x * x).sum::<f64>() / (2.0 * beta)).exp();
        let rhs = damp * iv;
        out.push(TransferCheck {
            name: format!("villain characteristic vs iv laplace #{i}"),
            lhs: lhs.re,
            lhs_imag: lhs.im,
            rhs,
            rel_diff: (lhs - Complex64::new(rhs, 0.0)).norm() / rhs.abs(),
            certificate: (lhs_err + damp * iv_err) / rhs.abs(),
        });

        let wv: Vec<f64> = (0..g.face_count()).map(|f| if f == root_face { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
        let wfree = DVector::from_iterator(op.dim(), op.free_cells().iter().map(|&f| wv[f]));
        let gw = &green * &wfree;
        let (iv, iv_err) = iv_laplace(g, 2, 1.0 / beta, &wv.iter().map(|x| x / beta).collect::<Vec<_>>(), cfg)?;
        // ⟨Δ⁻¹q, w⟩ = -⟨q, (-Δ)⁻¹ w⟩
        let phase = op.extend((&gw * (-2.0 * PI)).as_slice());
        let (ch, ch_err) = coulomb_characteristic(g, 2, beta, &phase, cfg)?;
        let pre = (wfree.dot(&gw) / (2.0 * beta)).exp();
        let rhs = pre * ch;
        out.push(TransferCheck {
            name: format!("iv laplace vs coulomb characteristic #{i}"),
            lhs: iv,
            lhs_imag: 0.0,
            rhs: rhs.re,
            rel_diff: (Complex64::new(iv, 0.0) - rhs).norm() / iv.abs(),
            certificate: (iv_err + pre * ch_err) / iv.abs(),
        });
    }
    Ok(out)
}

/// Certified value of `∫_β^∞ M(v)/v dv`, which equals `∫_0^{1/β} M(1/u)/u du`.
pub fn m_integral(beta: f64) -> Result<(f64, f64)> {
    check_positive(beta)?;
    // M(v) decays like e^{-2π²v}; past `upper` the remainder is below 1e-20 of M(β)/β
    let upper = beta + 46.0 / (2.0 * PI * PI);
    let f = |v: f64| error_function_m(v).map(|m| m / v);
    let n = 64;
    let coarse = simpson(&f, beta, upper, n)?;
    let fine = simpson(&f, beta, upper, 2 * n)?;
    let tail = f(upper)? / (2.0 * PI * PI) * 2.0;
    Ok((fine, (fine - coarse).abs() + tail))
}

fn simpson(f: &impl Fn(f64) -> Result<f64>, a: f64, b: f64, n: usize) -> Result<f64> {
    let h = (b - a) / (2 * n) as f64;
    let mut s = f(a)? + f(b)?;
    for i in 1..2 * n {
        s += f(a + i as f64 * h)? * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    Ok(s * h / 3.0)
}

/// Exact ratio against the lower bound
/// `log(Z^IV_{1/β} / Z^GFF_{1/β}) ≥ ((|V|-1)/2) ∫_β^∞ M(v)/v dv` on vertices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioBound {
    pub log_ratio: f64,
    pub log_ratio_error: f64,
    pub log_bound: f64,
    pub log_bound_error: f64,
    pub holds: bool,
}

pub fn iv_gff_ratio_bound(g: &LatticeGeometry, beta: f64, cfg: &OracleConfig) -> Result<RatioBound> {
    let iv = log_z_iv(g, 0, 1.0 / beta, cfg)?;
    let gff = log_z_gff(g, 0, 1.0 / beta)?;
    let (integral, ierr) = m_integral(beta)?;
    let k = 0.5 * (g.vertex_count() - 1) as f64;
    let log_ratio = iv.log_z - gff.log_z;
    let log_ratio_error = iv.rel_error + gff.rel_error;
    let log_bound = k * integral;
    let log_bound_error = k * ierr;
    Ok(RatioBound {
        log_ratio,
        log_ratio_error,
        log_bound,
        log_bound_error,
        holds: log_ratio - log_ratio_error >= log_bound + log_bound_error,
    })
}

/// `log(Z^IV_u / Z^GFF_u)` on cells of `degree`.
pub fn iv_gff_log_ratio(g: &LatticeGeometry, degree: usize, u: f64, cfg: &OracleConfig) -> Result<PartitionValue> {
    let iv = log_z_iv(g, degree, u, cfg)?;
    let gff = log_z_gff(g, degree, u)?;
    Ok(PartitionValue { log_z: iv.log_z - gff.log_z, rel_error: iv.rel_error + gff.rel_error, method: iv.method })
}

/// Convenience: `q` as an integer 2-form from free-face values.
pub fn charges_from_outcome(g: &LatticeGeometry, x: &[i64]) -> Result<IntForm> {
    Form::from_values(g, 2, x.to_vec())
}
