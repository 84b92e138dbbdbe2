//! Discrete exterior calculus on a [`LatticeGeometry`]: forms, `d`, `d*`,
//! the Hodge Laplacian, Poisson solves, Green functions and integer
//! primitives.
//!
//! Conventions. `(d w)(e) = w(head) - w(tail)`; `(d h)(f)` is the oriented
//! boundary sum, forced to zero on the root face; `d* = -dᵀ` with the root
//! vertex row forced to zero, so `(d* h)(v)` is the outgoing minus incoming
//! flux. `Δ = d d* + d* d` is negative definite on rooted 0- and 2-forms and
//! on 1-forms. The inner product is the plain sum over cells.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{build_lattice, BoundaryCondition, LatticeGeometry};
use crate::linalg::{conjugate_gradient, norm_inf, ProfileCholesky, SparseSym};

/// Closedness tolerance for real 1-forms.
pub const REAL_CLOSED_TOL: f64 = 1e-10;
/// Acceptance threshold for Poisson residuals, relative to `‖f‖∞`.
pub const POISSON_RESIDUAL_TOL: f64 = 1e-10;
/// Relative 2-norm tolerance of the conjugate-gradient fallback.
pub const CG_TOL: f64 = 1e-12;
/// Largest profile (in stored entries) factored directly; larger operators use CG.
pub const CHOLESKY_ENVELOPE_BUDGET: usize = 40_000_000;

/// Scalars a form can carry.
pub trait Value:
    Copy
    + Default
    + PartialEq
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + Mul<Output = Self>
    + AddAssign
    + SubAssign
    + Send
    + Sync
    + 'static
{
    const CLOSED_TOL: f64;
    fn to_f64(self) -> f64;
    fn from_i8(s: i8) -> Self;
}

impl Value for f64 {
    const CLOSED_TOL: f64 = REAL_CLOSED_TOL;
    fn to_f64(self) -> f64 {
        self
    }
    fn from_i8(s: i8) -> Self {
        s as f64
    }
}

impl Value for i64 {
    const CLOSED_TOL: f64 = 0.0;
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_i8(s: i8) -> Self {
        s as i64
    }
}

/// Values on the cells of one degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Form<T = f64> {
    pub degree: usize,
    pub values: Vec<T>,
}

pub type IntForm = Form<i64>;

impl<T: Value> Form<T> {
    pub fn zeros(g: &LatticeGeometry, degree: usize) -> Self {
        Self { degree, values: vec![T::default(); g.cell_count(degree)] }
    }

    /// Wraps values, checking the length and the rooting constraint.
    pub fn from_values(g: &LatticeGeometry, degree: usize, values: Vec<T>) -> Result<Self> {
        let f = Self { degree, values };
        f.check(g)?;
        Ok(f)
    }

    /// Indicator of one cell; zero if the cell is the root.
    pub fn indicator(g: &LatticeGeometry, degree: usize, cell: usize, one: T) -> Self {
        let mut f = Self::zeros(g, degree);
        if g.root_cell(degree) != Some(cell) {
            f.values[cell] = one;
        }
        f
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Checks length and rooting against a geometry.
    pub fn check(&self, g: &LatticeGeometry) -> Result<()> {
        if self.degree > 2 {
            return Err(Error::InvalidParameter(format!("degree {} out of range", self.degree)));
        }
        if self.values.len() != g.cell_count(self.degree) {
            return Err(Error::GeometryMismatch(format!(
                "{}-form has {} values, geometry has {} cells",
                self.degree,
                self.values.len(),
                g.cell_count(self.degree)
            )));
        }
        if let Some(r) = g.root_cell(self.degree) {
            if self.values[r] != T::default() {
                return Err(Error::InvalidParameter(format!(
                    "{}-form is not zero at its root cell {r}",
                    self.degree
                )));
            }
        }
        Ok(())
    }

    pub fn map<U: Value>(&self, f: impl Fn(T) -> U) -> Form<U> {
        Form { degree: self.degree, values: self.values.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.degree, other.degree);
        Form {
            degree: self.degree,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn to_real(&self) -> Form<f64> {
        self.map(|x| x.to_f64())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.to_f64().abs()))
    }

    pub fn record(&self, g: &LatticeGeometry) -> FormRecord<T> {
        FormRecord { degree: self.degree, geometry: g.hash(), values: self.values.clone() }
    }
}

impl Form<f64> {
    /// Rounds to integers, failing if any value is not an integer.
    pub fn to_integer(&self) -> Result<IntForm> {
        let mut out = Vec::with_capacity(self.values.len());
        for (cell, &v) in self.values.iter().enumerate() {
            if v.fract() != 0.0 || !v.is_finite() {
                return Err(Error::NonInteger { cell, value: v });
            }
            out.push(v as i64);
        }
        Ok(Form { degree: self.degree, values: out })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|x| x * s)
    }
}

/// Serialized form tagged with the geometry it lives on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormRecord<T> {
    pub degree: usize,
    pub geometry: String,
    pub values: Vec<T>,
}

fn check_len<T: Value>(g: &LatticeGeometry, f: &Form<T>) -> Result<()> {
    if f.degree > 2 || f.values.len() != g.cell_count(f.degree) {
        return Err(Error::GeometryMismatch(format!(
            "{}-form of length {} does not fit the geometry",
            f.degree,
            f.values.len()
        )));
    }
    Ok(())
}

/// Exterior derivative.
pub fn d<T: Value>(g: &LatticeGeometry, f: &Form<T>) -> Result<Form<T>> {
    check_len(g, f)?;
    match f.degree {
        0 => Ok(Form { degree: 1, values: d0(g, &f.values) }),
        1 => Ok(Form { degree: 2, values: d1(g, &f.values) }),
        _ => Err(Error::Degree("top degree: d of a 2-form is not defined")),
    }
}

/// Codifferential `d* = -dᵀ` on rooted forms.
pub fn dstar<T: Value>(g: &LatticeGeometry, f: &Form<T>) -> Result<Form<T>> {
    check_len(g, f)?;
    match f.degree {
        1 => Ok(Form { degree: 0, values: dstar1(g, &f.values) }),
        2 => Ok(Form { degree: 1, values: dstar2(g, &f.values) }),
        _ => Err(Error::Degree("bottom degree: d* of a 0-form is not defined")),
    }
}

pub(crate) fn d0<T: Value>(g: &LatticeGeometry, w: &[T]) -> Vec<T> {
    g.edges().iter().map(|&[t, h]| w[h] - w[t]).collect()
}

pub(crate) fn d1<T: Value>(g: &LatticeGeometry, h: &[T]) -> Vec<T> {
    let root = g.root_face();
    (0..g.face_count())
        .map(|f| {
            let mut s = T::default();
            if f != root {
                for side in g.face_boundary(f) {
                    if side.sign > 0 {
                        s += h[side.edge];
                    } else {
                        s -= h[side.edge];
                    }
                }
            }
            s
        })
        .collect()
}

pub(crate) fn dstar1<T: Value>(g: &LatticeGeometry, h: &[T]) -> Vec<T> {
    let mut out = vec![T::default(); g.vertex_count()];
    for (e, &[t, hd]) in g.edges().iter().enumerate() {
        out[t] += h[e];
        out[hd] -= h[e];
    }
    out[g.root_vertex()] = T::default();
    out
}

pub(crate) fn dstar2<T: Value>(g: &LatticeGeometry, q: &[T]) -> Vec<T> {
    let root = g.root_face();
    (0..g.edge_count())
        .map(|e| {
            let mut s = T::default();
            for (f, sign) in g.edge_faces(e) {
                if f != root {
                    if sign > 0 {
                        s -= q[f];
                    } else {
                        s += q[f];
                    }
                }
            }
            s
        })
        .collect()
}

/// Hodge Laplacian `d d* + d* d`.
pub fn laplacian<T: Value>(g: &LatticeGeometry, f: &Form<T>) -> Result<Form<T>> {
    check_len(g, f)?;
    let values = match f.degree {
        0 => dstar1(g, &d0(g, &f.values)),
        1 => {
            let a = d0(g, &dstar1(g, &f.values));
            let b = dstar2(g, &d1(g, &f.values));
            a.into_iter().zip(b).map(|(x, y)| x + y).collect()
        }
        _ => d1(g, &dstar2(g, &f.values)),
    };
    Ok(Form { degree: f.degree, values })
}

/// Plain sum `Σ a(c) b(c)`.
pub fn inner<T: Value>(a: &Form<T>, b: &Form<T>) -> Result<T> {
    if a.degree != b.degree || a.values.len() != b.values.len() {
        return Err(Error::GeometryMismatch("inner product of mismatched forms".into()));
    }
    let mut s = T::default();
    for (&x, &y) in a.values.iter().zip(&b.values) {
        s += x * y;
    }
    Ok(s)
}

/// `-Δ` restricted to the non-root cells of degree 0 or 2, with its factor.
pub struct CellOperator {
    degree: usize,
    free: Vec<usize>,
    index: Vec<usize>,
    matrix: SparseSym,
    diag: Vec<f64>,
    cholesky: Option<ProfileCholesky>,
}

impl CellOperator {
    fn build(g: &LatticeGeometry, degree: usize) -> Result<Self> {
        let root = g.root_cell(degree).ok_or(Error::Degree("only 0- and 2-forms are rooted"))?;
        let count = g.cell_count(degree);
        let free: Vec<usize> = (0..count).filter(|&c| c != root).collect();
        let mut index = vec![usize::MAX; count];
        for (i, &c) in free.iter().enumerate() {
            index[c] = i;
        }
        // rows of the incidence between edges and cells: -Δ = Bᵀ B
        let mut t = Vec::new();
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(2);
        for e in 0..g.edge_count() {
            row.clear();
            match degree {
                0 => {
                    let (tl, hd) = g.edge(e);
                    row.push((hd, 1.0));
                    row.push((tl, -1.0));
                }
                _ => {
                    for (f, s) in g.edge_faces(e) {
                        row.push((f, s as f64));
                    }
                }
            }
            for &(a, va) in &row {
                if index[a] == usize::MAX {
                    continue;
                }
                for &(b, vb) in &row {
                    if index[b] == usize::MAX {
                        continue;
                    }
                    t.push((index[a], index[b], va * vb));
                }
            }
        }
        let matrix = SparseSym::from_triplets(free.len(), t);
        let diag = matrix.diag();
        let cholesky = if matrix.envelope_size() <= CHOLESKY_ENVELOPE_BUDGET {
            Some(ProfileCholesky::factor(&matrix)?)
        } else {
            None
        };
        Ok(Self { degree, free, index, matrix, diag, cholesky })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Cells in operator order (the root omitted).
    pub fn free_cells(&self) -> &[usize] {
        &self.free
    }

    /// Position of a cell in operator order, `None` for the root.
    pub fn index_of(&self, cell: usize) -> Option<usize> {
        let i = self.index[cell];
        (i != usize::MAX).then_some(i)
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn matrix(&self) -> &SparseSym {
        &self.matrix
    }

    pub fn cholesky(&self) -> Option<&ProfileCholesky> {
        self.cholesky.as_ref()
    }

    /// Solves `(-Δ) x = b` in operator coordinates.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if let Some(c) = &self.cholesky {
            let mut x = b.to_vec();
            c.solve(&mut x);
            return Ok(x);
        }
        let mut x = vec![0.0; b.len()];
        conjugate_gradient(
            |v, out| self.matrix.mul(v, out),
            &self.diag,
            b,
            &mut x,
            CG_TOL,
            20 * b.len() + 1000,
        )?;
        Ok(x)
    }

    /// `log det(-Δ)`; needs the direct factor.
    pub fn log_det(&self) -> Result<f64> {
        self.cholesky
            .as_ref()
            .map(|c| c.log_det())
            .ok_or_else(|| Error::TooLarge("log-determinant without a direct factor".into()))
    }

    pub fn restrict(&self, f: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&c| f[c]).collect()
    }

    pub fn extend(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.index.len()];
        for (&c, &v) in self.free.iter().zip(x) {
            out[c] = v;
        }
        out
    }

    /// Dense Green matrix `(-Δ)⁻¹` in operator coordinates.
    pub fn green_matrix(&self) -> Result<nalgebra::DMatrix<f64>> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e)?;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        Ok(m)
    }
}

/// Per-geometry cache of factorizations, filled on first use.
#[derive(Default)]
pub struct SolverCache {
    ops: [OnceLock<std::result::Result<Arc<CellOperator>, Error>>; 2],
    one_form_diag: OnceLock<Vec<f64>>,
}

/// The cached `-Δ` operator of a geometry on 0-forms or 2-forms.
pub fn neg_laplacian(g: &LatticeGeometry, degree: usize) -> Result<Arc<CellOperator>> {
    let slot = match degree {
        0 => &g.cache.ops[0],
        2 => &g.cache.ops[1],
        _ => return Err(Error::Degree("only 0- and 2-forms are rooted")),
    };
    slot.get_or_init(|| CellOperator::build(g, degree).map(Arc::new)).clone()
}

fn one_form_diag(g: &LatticeGeometry) -> &[f64] {
    g.cache.one_form_diag.get_or_init(|| {
        (0..g.edge_count())
            .map(|e| {
                let (t, h) = g.edge(e);
                let mut s = 0.0;
                for v in [t, h] {
                    if v != g.root_vertex() {
                        s += 1.0;
                    }
                }
                let ef = g.edge_faces(e);
                if ef[0].0 == ef[1].0 {
                    return s;
                }
                for (f, _) in ef {
                    if f != g.root_face() {
                        s += 1.0;
                    }
                }
                s
            })
            .collect()
    })
}

/// Solves `Δ u = f`; the residual is checked against `1e-10 ‖f‖∞`.
pub fn solve_poisson(g: &LatticeGeometry, f: &Form<f64>) -> Result<Form<f64>> {
    f.check(g)?;
    let u = match f.degree {
        0 | 2 => {
            let op = neg_laplacian(g, f.degree)?;
            let b: Vec<f64> = op.restrict(&f.values).iter().map(|x| -x).collect();
            Form { degree: f.degree, values: op.extend(&op.solve(&b)?) }
        }
        _ => {
            let b: Vec<f64> = f.values.iter().map(|x| -x).collect();
            let mut x = vec![0.0; b.len()];
            let apply = |v: &[f64], out: &mut [f64]| {
                let a = d0(g, &dstar1(g, v));
                let c = dstar2(g, &d1(g, v));
                for i in 0..out.len() {
                    out[i] = -(a[i] + c[i]);
                }
            };
            conjugate_gradient(apply, one_form_diag(g), &b, &mut x, CG_TOL, 20 * b.len() + 1000)?;
            Form { degree: 1, values: x }
        }
    };
    let lu = laplacian(g, &u)?;
    let scale = norm_inf(&f.values);
    let res = lu.values.iter().zip(&f.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if res > POISSON_RESIDUAL_TOL * scale {
        return Err(Error::Solver { residual: res / scale.max(f64::MIN_POSITIVE), iterations: 0 });
    }
    Ok(u)
}

/// Green function `G(a, b) = (solve_poisson(-1_b))(a)`; zero at the root.
pub fn green(g: &LatticeGeometry, degree: usize, a: usize, b: usize) -> Result<f64> {
    Ok(green_column(g, degree, b)?.values[a])
}

/// The column `G(·, b)` as a form.
pub fn green_column(g: &LatticeGeometry, degree: usize, b: usize) -> Result<Form<f64>> {
    let op = neg_laplacian(g, degree)?;
    let mut rhs = vec![0.0; op.dim()];
    match op.index_of(b) {
        Some(i) => rhs[i] = 1.0,
        None => return Ok(Form::zeros(g, degree)),
    }
    Ok(Form { degree, values: op.extend(&op.solve(&rhs)?) })
}

/// `(-Δ)⁻¹ f` for a rooted 0- or 2-form.
pub fn apply_green(g: &LatticeGeometry, f: &Form<f64>) -> Result<Form<f64>> {
    f.check(g)?;
    let op = neg_laplacian(g, f.degree)?;
    let x = op.solve(&op.restrict(&f.values))?;
    Ok(Form { degree: f.degree, values: op.extend(&x) })
}

/// A deterministic integer 1-form `n` with `d n = q`.
///
/// Faces are visited breadth-first from the root face across shared edges;
/// in reverse visiting order each face sets its tree-parent edge so that its
/// boundary sum equals `q(f)`.
pub fn integer_primitive(g: &LatticeGeometry, q: &IntForm) -> Result<IntForm> {
    if q.degree != 2 {
        return Err(Error::Degree("integer_primitive expects a 2-form"));
    }
    q.check(g)?;
    let nf = g.face_count();
    let root = g.root_face();
    let mut parent_edge = vec![usize::MAX; nf];
    let mut seen = vec![false; nf];
    let mut order = Vec::with_capacity(nf);
    seen[root] = true;
    order.push(root);
    let mut head = 0;
    while head < order.len() {
        let f = order[head];
        head += 1;
        for side in g.face_boundary(f) {
            for (other, _) in g.edge_faces(side.edge) {
                if !seen[other] {
                    seen[other] = true;
                    parent_edge[other] = side.edge;
                    order.push(other);
                }
            }
        }
    }
    let mut n = vec![0i64; g.edge_count()];
    for &f in order.iter().skip(1).rev() {
        let pe = parent_edge[f];
        let mut coeff = 0i64;
        let mut rest = 0i64;
        for side in g.face_boundary(f) {
            if side.edge == pe {
                coeff += side.sign as i64;
            } else {
                rest += side.sign as i64 * n[side.edge];
            }
        }
        debug_assert!(coeff.abs() == 1);
        n[pe] = coeff * (q.values[f] - rest);
    }
    Ok(Form { degree: 1, values: n })
}

/// The unique rooted 0-form `ψ` with `d ψ = h` for a closed 1-form `h`.
pub fn scalar_primitive<T: Value>(g: &LatticeGeometry, h: &Form<T>) -> Result<Form<T>> {
    if h.degree != 1 {
        return Err(Error::Degree("scalar_primitive expects a 1-form"));
    }
    check_len(g, h)?;
    let dh = d1(g, &h.values);
    for (face, v) in dh.iter().enumerate() {
        let r = v.to_f64().abs();
        if r > T::CLOSED_TOL {
            return Err(Error::NotClosed { face, residual: r });
        }
    }
    let nv = g.vertex_count();
    let mut psi = vec![T::default(); nv];
    let mut seen = vec![false; nv];
    let root = g.root_vertex();
    seen[root] = true;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for inc in g.incident(v) {
            if !seen[inc.neighbor] {
                seen[inc.neighbor] = true;
                let step = h.values[inc.edge];
                psi[inc.neighbor] = if inc.outgoing { psi[v] + step } else { psi[v] - step };
                queue.push_back(inc.neighbor);
            }
        }
    }
    Ok(Form { degree: 0, values: psi })
}

/// Signed indicator 1-form of an oriented vertex path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathIndicator {
    pub vertices: Vec<usize>,
}

impl PathIndicator {
    pub fn new(vertices: Vec<usize>) -> Self {
        Self { vertices }
    }

    pub fn start(&self) -> usize {
        self.vertices[0]
    }

    pub fn end(&self) -> usize {
        *self.vertices.last().unwrap()
    }

    /// `E_γ(e) = ±1` on traversed edges, with the sign of the traversal.
    pub fn form(&self, g: &LatticeGeometry) -> Result<IntForm> {
        let mut f = Form::<i64>::zeros(g, 1);
        for w in self.vertices.windows(2) {
            let e = g.edge_between(w[0], w[1]).ok_or_else(|| {
                Error::InvalidParameter(format!("vertices {} and {} are not adjacent", w[0], w[1]))
            })?;
            if g.edge(e).0 == w[0] {
                f.values[e] += 1;
            } else {
                f.values[e] -= 1;
            }
        }
        Ok(f)
    }
}

/// Harmonic extension of the function equal to 0 at the origin and 1 at `(1, 0)`.
#[derive(Clone, Debug)]
pub struct HarmonicExtension {
    pub geometry: LatticeGeometry,
    pub f: Form<f64>,
    pub energy: f64,
    pub green_11: f64,
}

/// On the wired `[-R, R]²` rooted at the origin, `f̂ = G(1, ·)/G(1, 1)` with
/// Dirichlet energy `⟨d f̂, d f̂⟩ = 1/G(1, 1)`.
pub fn harmonic_two_point(r: usize) -> Result<HarmonicExtension> {
    if r < 2 {
        return Err(Error::InvalidParameter(format!("radius must be >= 2, got {r}")));
    }
    let base = build_lattice(r, BoundaryCondition::Zero)?;
    let origin = base.vertex_at(0, 0).expect("origin");
    let g = base.with_root_vertex(origin)?;
    let one = g.vertex_at(1, 0).expect("neighbour of the origin");
    let col = green_column(&g, 0, one)?;
    let g11 = col.values[one];
    let f = col.scale(1.0 / g11);
    let df = d(&g, &f)?;
    let energy = inner(&df, &df)?;
    Ok(HarmonicExtension { geometry: g, f, energy, green_11: g11 })
}
