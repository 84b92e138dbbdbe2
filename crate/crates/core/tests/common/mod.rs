//! Structural properties shared by the proptest suite and the acceptance
//! harness. Each property draws its random inputs from a seed so the same
//! function runs under both drivers.

#![allow(dead_code)]

use std::f64::consts::TAU;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use villain_core::calculus::{
    d, dstar, green, inner, integer_primitive, laplacian, neg_laplacian, scalar_primitive, solve_poisson, Form,
    IntForm,
};
use villain_core::ig::{ig_pmf, ig_variance, IGParams};
use villain_core::oracle::quadrature::edge_weight;
use villain_core::samplers::{
    gff_sample, CoulombMetropolis, IVHeatBath, IVState, LocalCoulombChain, ChainConfig, VillainHeatBath,
    VillainState,
};
use villain_core::transforms::{decouple, energy_identity_residual, recouple, reroot, ModelState};
use villain_core::{build_lattice, dual_geometry, BoundaryCondition, LatticeGeometry};

pub type PropResult = Result<(), TestCaseError>;

/// Radius, boundary condition and an input seed.
#[derive(Clone, Debug)]
pub struct Case {
    pub n: usize,
    pub bc: BoundaryCondition,
    pub seed: u64,
}

impl Case {
    pub fn geometry(&self) -> LatticeGeometry {
        build_lattice(self.n, self.bc).expect("valid radius")
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

pub fn cases(max_n: usize) -> impl Strategy<Value = Case> {
    (1..=max_n, prop_oneof![Just(BoundaryCondition::Free), Just(BoundaryCondition::Zero)], any::<u64>())
        .prop_map(|(n, bc, seed)| Case { n, bc, seed })
}

fn int_form(g: &LatticeGeometry, degree: usize, rng: &mut impl Rng) -> IntForm {
    let mut f = Form::zeros(g, degree);
    let root = g.root_cell(degree);
    for (c, x) in f.values.iter_mut().enumerate() {
        if root != Some(c) {
            *x = rng.gen_range(-5..=5);
        }
    }
    f
}

fn real_form(g: &LatticeGeometry, degree: usize, rng: &mut impl Rng) -> Form {
    let mut f = Form::zeros(g, degree);
    let root = g.root_cell(degree);
    for (c, x) in f.values.iter_mut().enumerate() {
        if root != Some(c) {
            *x = rng.gen_range(-1.0..1.0);
        }
    }
    f
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

pub fn euler_characteristic(c: &Case) -> PropResult {
    let g = c.geometry();
    let chi = g.vertex_count() as i64 - g.edge_count() as i64 + g.face_count() as i64;
    prop_assert_eq!(chi, 2);
    Ok(())
}

/// Every edge appears once with each sign across its two faces.
pub fn orientation_consistency(c: &Case) -> PropResult {
    let g = c.geometry();
    let mut total = vec![0i64; g.edge_count()];
    for f in 0..g.face_count() {
        for side in g.face_boundary(f) {
            total[side.edge] += side.sign as i64;
        }
    }
    prop_assert!(total.iter().all(|&t| t == 0));
    Ok(())
}

pub fn dual_preserves_incidence(c: &Case) -> PropResult {
    let g = c.geometry();
    let dual = dual_geometry(&g);
    prop_assert_eq!(dual.vertex_count(), g.face_count());
    prop_assert_eq!(dual.edge_count(), g.edge_count());
    let mut image: Vec<usize> = (0..g.face_count()).map(|f| g.dual_map(f)).collect();
    image.sort_unstable();
    image.dedup();
    prop_assert_eq!(image.len(), g.face_count());
    for e in 0..g.edge_count() {
        let [(f1, _), (f2, _)] = g.edge_faces(e);
        let (a, b) = dual.edge(e);
        let mut want = [g.dual_map(f1), g.dual_map(f2)];
        let mut got = [a, b];
        want.sort_unstable();
        got.sort_unstable();
        prop_assert_eq!(want, got);
    }
    Ok(())
}

pub fn d_squared_vanishes(c: &Case) -> PropResult {
    let g = c.geometry();
    let mut rng = c.rng();
    let w = int_form(&g, 0, &mut rng);
    let ddw = d(&g, &d(&g, &w).unwrap()).unwrap();
    prop_assert!(ddw.values.iter().all(|&x| x == 0));
    let q = int_form(&g, 2, &mut rng);
    let ddq = dstar(&g, &dstar(&g, &q).unwrap()).unwrap();
    prop_assert!(ddq.values.iter().all(|&x| x == 0));
    Ok(())
}

/// `⟨d w, d* g⟩ = 0`, exact on integers.
pub fn exact_and_coexact_are_orthogonal(c: &Case) -> PropResult {
    let g = c.geometry();
    let mut rng = c.rng();
    let w = int_form(&g, 0, &mut rng);
    let q = int_form(&g, 2, &mut rng);
    prop_assert_eq!(inner(&d(&g, &w).unwrap(), &dstar(&g, &q).unwrap()).unwrap(), 0);
    Ok(())
}

/// `⟨d a, b⟩ = -⟨a, d* b⟩` for `d* = -dᵀ`.
pub fn codifferential_is_adjoint(c: &Case) -> PropResult {
    let g = c.geometry();
    let mut rng = c.rng();
    for degree in [0, 1] {
        let a = int_form(&g, degree, &mut rng);
        let b = int_form(&g, degree + 1, &mut rng);
        let lhs = inner(&d(&g, &a).unwrap(), &b).unwrap();
        let rhs = inner(&a, &dstar(&g, &b).unwrap()).unwrap();
        prop_assert_eq!(lhs, -rhs);
    }
    Ok(())
}

pub fn laplacian_commutes(c: &Case) -> PropResult {
    let g = c.geometry();
    let mut rng = c.rng();
    let f = real_form(&g, 0, &mut rng);
    let lhs = laplacian(&g, &d(&g, &f).unwrap()).unwrap();
    let rhs = d(&g, &laplacian(&g, &f).unwrap()).unwrap();
    prop_assert!(close(&lhs.values, &rhs.values, 1e-10));
    let h = real_form(&g, 2, &mut rng);
    let lhs = laplacian(&g, &dstar(&g, &h).unwrap()).unwrap();
    let rhs = dstar(&g, &laplacian(&g, &h).unwrap()).unwrap();
    prop_assert!(close(&lhs.values, &rhs.values, 1e-10));
    Ok(())
}

pub fn green_symmetric_positive(c: &Case) -> PropResult {
    let g = c.geometry();
    for degree in [0, 2] {
        let op = neg_laplacian(&g, degree).unwrap();
        let dense = op.matrix().to_dense();
        let eig = dense.clone().symmetric_eigen();
        prop_assert!(eig.eigenvalues.iter().all(|&l| l > 0.0));
        let free = op.free_cells();
        let mut rng = c.rng();
        for _ in 0..4 {
            let a = free[rng.gen_range(0..free.len())];
            let b = free[rng.gen_range(0..free.len())];
            let ab = green(&g, degree, a, b).unwrap();
            let ba = green(&g, degree, b, a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1.0));
        }
    }
    Ok(())
}

/// `solve_poisson` inverts `Δ` on both sides of rooted 0- and 2-forms.
pub fn poisson_round_trip(c: &Case) -> PropResult {
    let g = c.geometry();
    let mut rng = c.rng();
    for degree in [0, 2] {
        let f = real_form(&g, degree, &mut rng);
        let u = solve_poisson(&g, &f).unwrap();
        prop_assert!(close(&laplacian(&g, &u).unwrap().values, &f.values, 1e-8));
        let back = solve_poisson(&g, &laplacian(&g, &f).unwrap()).unwrap();
        prop_assert!(close(&back.values, &f.values, 1e-8));
    }
    Ok(())
}

pub fn primitives_invert_d(c: &Case) -> PropResult {
    let g = c.geometry();
    let mut rng = c.rng();
    let q = int_form(&g, 2, &mut rng);
    let nq = integer_primitive(&g, &q).unwrap();
    prop_assert_eq!(d(&g, &nq).unwrap().values, q.values);
    let w = int_form(&g, 0, &mut rng);
    let psi = scalar_primitive(&g, &d(&g, &w).unwrap()).unwrap();
    prop_assert_eq!(psi.values, w.values);
    Ok(())
}

pub fn ig_variance_symmetries(c: &Case) -> PropResult {
    let mut rng = c.rng();
    let a = rng.gen_range(-2.0..2.0);
    let beta = rng.gen_range(0.05..40.0);
    let v = ig_variance(a, beta);
    prop_assert!((ig_variance(a + 1.0, beta) - v).abs() <= 1e-12 * v.max(1e-300));
    prop_assert!((ig_variance(-a, beta) - v).abs() <= 1e-12 * v.max(1e-300));
    Ok(())
}

/// Rerooting to another cell and back is the identity on every model.
pub fn reroot_is_a_bijection(c: &Case) -> PropResult {
    let g = c.geometry();
    let mut rng = c.rng();
    for degree in [0, 2] {
        let new_root = rng.gen_range(0..g.cell_count(degree));
        let g2 = g.with_root(degree, new_root).unwrap();
        let old = g.root_cell(degree).unwrap();
        let mut states = vec![
            ModelState::Gff(real_form(&g, degree, &mut rng)),
            ModelState::IvGff(int_form(&g, degree, &mut rng)),
        ];
        if degree == 2 {
            states.push(ModelState::Coulomb(int_form(&g, 2, &mut rng)));
        } else {
            states.push(ModelState::Villain(VillainState::random(&g, &mut rng)));
        }
        for s in states {
            let there = reroot(&g, &s, new_root).unwrap();
            let back = reroot(&g2, &there, old).unwrap();
            match (&s, &back) {
                (ModelState::Gff(a), ModelState::Gff(b)) => prop_assert!(close(&a.values, &b.values, 1e-12)),
                (ModelState::Villain(a), ModelState::Villain(b)) => {
                    prop_assert_eq!(&a.m, &b.m);
                    let wrapped = a.theta.values.iter().zip(&b.theta.values).all(|(x, y)| {
                        let dx = (x - y).rem_euclid(TAU);
                        dx.min(TAU - dx) < 1e-12
                    });
                    prop_assert!(wrapped);
                }
                _ => prop_assert_eq!(&s, &back),
            }
        }
    }
    Ok(())
}

/// `decouple` then `recouple` returns the state; energies match.
pub fn decoupling_round_trip(c: &Case) -> PropResult {
    let g = c.geometry();
    let mut rng = c.rng();
    let mut s = VillainState::random(&g, &mut rng);
    for k in s.m.values.iter_mut() {
        *k = rng.gen_range(-2..=2);
    }
    let pair = decouple(&g, &s).unwrap();
    prop_assert_eq!(&pair.q.values, &d(&g, &s.m).unwrap().values);
    let back = recouple(&g, &pair).unwrap();
    prop_assert_eq!(&back.m, &s.m);
    prop_assert!(close(&back.theta.values, &s.theta.values, 1e-8));
    prop_assert!(energy_identity_residual(&g, &s, &pair).unwrap() < 1e-8 * s.energy(&g).max(1.0));
    Ok(())
}

/// Villain heat-bath conditional is proportional to the product of edge
/// weights, so `π(x) P(x→y) = π(y) P(y→x)`.
pub fn villain_detailed_balance(c: &Case) -> PropResult {
    let mut rng = c.rng();
    let beta = rng.gen_range(0.2..3.0);
    let k = rng.gen_range(1..=4);
    let nb: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..TAU)).collect();
    let joint = |x: f64| nb.iter().map(|a| edge_weight(x - a, beta, 0.0).re).product::<f64>();
    // the joint can dip to e^{-βkπ²/2} ≈ e^{-60} of its peak; a margin of
    // 100 keeps every component that matters at 1e-12 pointwise
    let mut hb = VillainHeatBath::new(beta, 100.0).unwrap();
    let cond = hb.conditional(&nb).clone();
    for _ in 0..3 {
        let (x, y) = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
        let lhs = joint(x) * cond.density(y);
        let rhs = joint(y) * cond.density(x);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(rhs), "{} {}", lhs, rhs);
    }
    Ok(())
}

/// IV heat bath on a 2×2 vertex grid, enumerated over a window of heights.
pub fn iv_detailed_balance(c: &Case) -> PropResult {
    let mut rng = c.rng();
    let g = LatticeGeometry::rectangle(2, 2, BoundaryCondition::Free).unwrap();
    let beta = rng.gen_range(0.3..3.0);
    let hb = IVHeatBath::new(&g, 0, beta).unwrap();
    let root = g.root_vertex();
    let mut psi: Vec<i64> = (0..4).map(|v| if v == root { 0 } else { rng.gen_range(-3..=3) }).collect();
    let cell = (0..4).filter(|&v| v != root).nth(rng.gen_range(0..3)).unwrap();
    let weight = |p: &[i64]| {
        let s = IVState { psi: Form { degree: 0, values: p.to_vec() } };
        (-(s.energy(hb.graph()) as f64) / (2.0 * beta)).exp()
    };
    let (center, temp) = hb.conditional(&psi, cell);
    let law = ig_pmf(IGParams::new(center, temp)).unwrap();
    let p = |k: i64| law.iter().find(|e| e.0 == k).map_or(0.0, |e| e.1);
    // both heights inside the tabulated window
    let x = law[rng.gen_range(0..law.len())].0;
    let y = law[rng.gen_range(0..law.len())].0;
    psi[cell] = x;
    let px = weight(&psi);
    psi[cell] = y;
    let py = weight(&psi);
    let (lhs, rhs) = (px * p(y), py * p(x));
    prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(rhs), "{} {}", lhs, rhs);
    Ok(())
}

pub fn metropolis_detailed_balance(c: &Case) -> PropResult {
    let mut rng = c.rng();
    let g = LatticeGeometry::rectangle(3, 2, BoundaryCondition::Free).unwrap();
    let beta = rng.gen_range(0.05..1.0);
    let step = rng.gen_range(1..=3);
    let mut mh = CoulombMetropolis::new(&g, 2, beta, step).unwrap();
    let coupling = TAU * TAU * beta;
    let q: Vec<i64> = (0..mh.dim()).map(|_| rng.gen_range(-3..=3)).collect();
    let i = rng.gen_range(0..mh.dim());
    let s = rng.gen_range(1..=step) * if rng.gen::<bool>() { 1 } else { -1 };
    mh.set_charges(&q);
    let forward = (-0.5 * coupling * mh.recomputed_energy()).exp() * mh.move_probability(i, s);
    let mut q2 = q.clone();
    q2[i] += s;
    mh.set_charges(&q2);
    let backward = (-0.5 * coupling * mh.recomputed_energy()).exp() * mh.move_probability(i, -s);
    prop_assert!((forward - backward).abs() <= 1e-12 * forward.max(backward));
    Ok(())
}

/// Same `(geometry, config, seed)` gives the same trajectory; another
/// stream gives a different one.
pub fn seed_reproducibility(c: &Case) -> PropResult {
    let g = c.geometry();
    let cfg = ChainConfig { seed: c.seed, sweeps: 3, burn_in: 2, ..ChainConfig::default() };
    let run_villain = |cfg: &ChainConfig| {
        let mut rng = cfg.rng();
        let mut hb = VillainHeatBath::new(0.7, cfg.tail_margin).unwrap();
        let mut s = VillainState::zero(&g);
        for _ in 0..cfg.sweeps {
            hb.sweep(&g, &mut s, &mut rng);
        }
        s
    };
    let a = run_villain(&cfg);
    prop_assert_eq!(&a, &run_villain(&cfg));
    prop_assert_ne!(&a, &run_villain(&cfg.with_chain(1)));

    let run_iv = |cfg: &ChainConfig| {
        let mut rng = cfg.rng();
        let hb = IVHeatBath::new(&g, 2, 1.3).unwrap();
        let mut s = IVState::zero(&g, 2);
        for _ in 0..cfg.sweeps {
            hb.sweep(&mut s, &mut rng);
        }
        s
    };
    prop_assert_eq!(run_iv(&cfg), run_iv(&cfg));

    let mut c1 = LocalCoulombChain::new(&g, 0.5, &cfg).unwrap();
    let mut c2 = LocalCoulombChain::new(&g, 0.5, &cfg).unwrap();
    prop_assert_eq!(c1.next_charges(), c2.next_charges());

    let (mut r1, mut r2) = (cfg.rng(), cfg.rng());
    prop_assert_eq!(gff_sample(&g, 0, 1.0, &mut r1).unwrap(), gff_sample(&g, 0, 1.0, &mut r2).unwrap());
    Ok(())
}

pub type Property = fn(&Case) -> PropResult;

/// Every structural property with the largest radius it is run on.
pub const PROPERTIES: &[(&str, Property, usize)] = &[
    ("euler_characteristic", euler_characteristic, 6),
    ("orientation_consistency", orientation_consistency, 6),
    ("dual_preserves_incidence", dual_preserves_incidence, 6),
    ("d_squared_vanishes", d_squared_vanishes, 6),
    ("exact_and_coexact_are_orthogonal", exact_and_coexact_are_orthogonal, 6),
    ("codifferential_is_adjoint", codifferential_is_adjoint, 6),
    ("laplacian_commutes", laplacian_commutes, 6),
    ("green_symmetric_positive", green_symmetric_positive, 4),
    ("poisson_round_trip", poisson_round_trip, 6),
    ("primitives_invert_d", primitives_invert_d, 6),
    ("ig_variance_symmetries", ig_variance_symmetries, 1),
    ("reroot_is_a_bijection", reroot_is_a_bijection, 4),
    ("decoupling_round_trip", decoupling_round_trip, 4),
    ("villain_detailed_balance", villain_detailed_balance, 1),
    ("iv_detailed_balance", iv_detailed_balance, 1),
    ("metropolis_detailed_balance", metropolis_detailed_balance, 1),
    ("seed_reproducibility", seed_reproducibility, 3),
];

/// Runs one property for `cases` deterministic cases.
pub fn run_property(p: Property, max_n: usize, cases: u32) -> Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&self::cases(max_n), |c| p(&c)).map_err(|e| e.to_string())
}
