//! Square-lattice cell complexes embedded in the sphere.
//!
//! Cell positions use doubled integer coordinates: the vertex `(x, y)` sits at
//! `[2x, 2y]`, edge and face positions are midpoints in the same units, and the
//! point at infinity (or the outer face) has no position. With this convention
//! the dual of a free `W×H` grid carries exactly the positions of the wired
//! `(W-1)×(H-1)` grid, and vice versa.
//!
//! Indexing rules, fixed once so that seeded runs are reproducible:
//! * vertices are sorted lexicographically by `(x, y)`, the point at infinity last;
//! * edges point from the smaller to the larger vertex index (so edges to
//!   infinity point towards it) and are sorted by `(tail, head, position)`;
//! * faces are sorted by position, the outer face last.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calculus::SolverCache;
use crate::error::{Error, Result};

/// Position of a cell in doubled coordinates; `None` is the point at infinity.
pub type Pos = Option<[i64; 2]>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    /// Plain grid; the outer face is the root face.
    Free,
    /// Grid with every boundary vertex wired to a vertex at infinity.
    Zero,
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryCondition::Free => f.write_str("free"),
            BoundaryCondition::Zero => f.write_str("zero"),
        }
    }
}

impl std::str::FromStr for BoundaryCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "free" => Ok(BoundaryCondition::Free),
            "zero" => Ok(BoundaryCondition::Zero),
            other => Err(Error::InvalidParameter(format!("unknown boundary condition `{other}`"))),
        }
    }
}

/// Whether a geometry was built directly or as the dual of a built grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Embedding {
    Primal,
    Dual,
}

/// One oriented edge in a face boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Side {
    pub edge: usize,
    /// `+1` if the boundary traverses the edge from tail to head.
    pub sign: i8,
}

/// An edge seen from one of its endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Incidence {
    pub edge: usize,
    pub neighbor: usize,
    /// The vertex is the tail of `edge`.
    pub outgoing: bool,
}

/// A finite cell complex on the sphere with marked root vertex and root face.
pub struct LatticeGeometry {
    bc: BoundaryCondition,
    width: usize,
    height: usize,
    embedding: Embedding,
    vertex_pos: Vec<Pos>,
    edge_pos: Vec<Pos>,
    face_pos: Vec<Pos>,
    edges: Vec<[usize; 2]>,
    faces: Vec<Vec<Side>>,
    root_vertex: usize,
    root_face: usize,
    incidence: Vec<Vec<Incidence>>,
    edge_faces: Vec<[(usize, i8); 2]>,
    pub(crate) cache: SolverCache,
}

impl Clone for LatticeGeometry {
    fn clone(&self) -> Self {
        Self {
            bc: self.bc,
            width: self.width,
            height: self.height,
            embedding: self.embedding,
            vertex_pos: self.vertex_pos.clone(),
            edge_pos: self.edge_pos.clone(),
            face_pos: self.face_pos.clone(),
            edges: self.edges.clone(),
            faces: self.faces.clone(),
            root_vertex: self.root_vertex,
            root_face: self.root_face,
            incidence: self.incidence.clone(),
            edge_faces: self.edge_faces.clone(),
            cache: SolverCache::default(),
        }
    }
}

impl fmt::Debug for LatticeGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LatticeGeometry")
            .field("bc", &self.bc)
            .field("width", &self.width)
            .field("height", &self.height)
            .field("embedding", &self.embedding)
            .field("vertices", &self.vertex_count())
            .field("edges", &self.edge_count())
            .field("faces", &self.face_count())
            .field("root_vertex", &self.root_vertex)
            .field("root_face", &self.root_face)
            .finish()
    }
}

/// Builds `[-n, n]²` with the given boundary condition.
pub fn build_lattice(n: usize, bc: BoundaryCondition) -> Result<LatticeGeometry> {
    if n < 1 {
        return Err(Error::InvalidParameter(format!("lattice radius must be >= 1, got {n}")));
    }
    LatticeGeometry::rectangle(2 * n + 1, 2 * n + 1, bc)
}

/// Faces become vertices and vice versa; the roots swap roles. Cell `i` of
/// one degree in `g` is cell `i` of the complementary degree in the dual.
pub fn dual_geometry(g: &LatticeGeometry) -> LatticeGeometry {
    let mut dual_edges = Vec::with_capacity(g.edge_count());
    for ef in &g.edge_faces {
        let (plus, minus) = if ef[0].1 > 0 { (ef[0].0, ef[1].0) } else { (ef[1].0, ef[0].0) };
        dual_edges.push([plus, minus]);
    }
    let dual_faces: Vec<Vec<Side>> = (0..g.vertex_count())
        .map(|v| {
            let mut inc: Vec<Incidence> = g.incidence[v].clone();
            sort_around(&mut inc, g.vertex_pos[v], &g.edge_pos);
            inc.iter()
                .map(|i| Side { edge: i.edge, sign: if i.outgoing { 1 } else { -1 } })
                .collect()
        })
        .collect();
    let embedding = match g.embedding {
        Embedding::Primal => Embedding::Dual,
        Embedding::Dual => Embedding::Primal,
    };
    LatticeGeometry::from_parts(
        g.bc,
        g.width,
        g.height,
        embedding,
        g.face_pos.clone(),
        g.edge_pos.clone(),
        g.vertex_pos.clone(),
        dual_edges,
        dual_faces,
        g.root_face,
        g.root_vertex,
    )
    .expect("dual of a valid geometry is valid")
}

/// Orders the edges around a vertex counterclockwise by position; around the
/// point at infinity the orientation of the sphere makes this clockwise.
fn sort_around(inc: &mut [Incidence], at: Pos, edge_pos: &[Pos]) {
    let angle = |e: usize| -> f64 {
        match (edge_pos[e], at) {
            (Some(p), Some(c)) => ((p[1] - c[1]) as f64).atan2((p[0] - c[0]) as f64),
            (Some(p), None) => -(p[1] as f64).atan2(p[0] as f64),
            _ => e as f64,
        }
    };
    inc.sort_by(|a, b| angle(a.edge).total_cmp(&angle(b.edge)).then(a.edge.cmp(&b.edge)));
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    East,
    North,
    West,
    South,
}

impl Dir {
    fn vec(self) -> [i64; 2] {
        match self {
            Dir::East => [1, 0],
            Dir::North => [0, 1],
            Dir::West => [-1, 0],
            Dir::South => [0, -1],
        }
    }
}

impl LatticeGeometry {
    /// A `width × height` grid of vertices centred so that `(0, 0)` is a vertex.
    /// Free grids may be degenerate (a path or a point); wired grids need
    /// `width, height >= 2`.
    pub fn rectangle(width: usize, height: usize, bc: BoundaryCondition) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("grid sides must be positive".into()));
        }
        if bc == BoundaryCondition::Zero && (width < 2 || height < 2) {
            return Err(Error::InvalidParameter("wired grids need both sides >= 2".into()));
        }
        let x0 = -(((width - 1) / 2) as i64);
        let y0 = -(((height - 1) / 2) as i64);
        let x1 = x0 + width as i64 - 1;
        let y1 = y0 + height as i64 - 1;
        let h = height as i64;
        let idx = |x: i64, y: i64| -> usize { ((x - x0) * h + (y - y0)) as usize };
        let grid_count = width * height;
        let inf = grid_count;

        let mut vertex_pos: Vec<Pos> = Vec::with_capacity(grid_count + 1);
        for x in x0..=x1 {
            for y in y0..=y1 {
                vertex_pos.push(Some([2 * x, 2 * y]));
            }
        }
        if bc == BoundaryCondition::Zero {
            vertex_pos.push(None);
        }

        // (tail, head, position)
        let mut raw_edges: Vec<(usize, usize, [i64; 2])> = Vec::new();
        for x in x0..=x1 {
            for y in y0..=y1 {
                if y < y1 {
                    raw_edges.push((idx(x, y), idx(x, y + 1), [2 * x, 2 * y + 1]));
                }
                if x < x1 {
                    raw_edges.push((idx(x, y), idx(x + 1, y), [2 * x + 1, 2 * y]));
                }
            }
        }

        // Counterclockwise walk of outward slots around the boundary.
        let mut slots: Vec<((i64, i64), Dir)> = Vec::new();
        let mut boundary_walk: Vec<(i64, i64)> = Vec::new();
        if width >= 2 && height >= 2 {
            for x in x0..=x1 {
                boundary_walk.push((x, y0));
            }
            for y in (y0 + 1)..=y1 {
                boundary_walk.push((x1, y));
            }
            for x in (x0..x1).rev() {
                boundary_walk.push((x, y1));
            }
            for y in ((y0 + 1)..y1).rev() {
                boundary_walk.push((x0, y));
            }
            for &(x, y) in &boundary_walk {
                let dirs: &[Dir] = match (x == x0, x == x1, y == y0, y == y1) {
                    (true, _, true, _) => &[Dir::West, Dir::South],
                    (_, true, true, _) => &[Dir::South, Dir::East],
                    (_, true, _, true) => &[Dir::East, Dir::North],
                    (true, _, _, true) => &[Dir::North, Dir::West],
                    (_, _, true, _) => &[Dir::South],
                    (_, true, _, _) => &[Dir::East],
                    (_, _, _, true) => &[Dir::North],
                    _ => &[Dir::West],
                };
                for &d in dirs {
                    slots.push(((x, y), d));
                }
            }
        }
        if bc == BoundaryCondition::Zero {
            for &((x, y), d) in &slots {
                let v = d.vec();
                raw_edges.push((idx(x, y), inf, [2 * x + v[0], 2 * y + v[1]]));
            }
        }
        raw_edges.sort();
        let edges: Vec<[usize; 2]> = raw_edges.iter().map(|&(t, hd, _)| [t, hd]).collect();
        let edge_pos: Vec<Pos> = raw_edges.iter().map(|&(_, _, p)| Some(p)).collect();
        let edge_at: HashMap<[i64; 2], usize> =
            raw_edges.iter().enumerate().map(|(i, &(_, _, p))| (p, i)).collect();
        let lattice_edge = |a: (i64, i64), b: (i64, i64)| -> Side {
            let e = edge_at[&[a.0 + b.0, a.1 + b.1]];
            Side { edge: e, sign: if edges[e][0] == idx(a.0, a.1) { 1 } else { -1 } }
        };

        let mut faces: Vec<(Pos, Vec<Side>)> = Vec::new();
        for x in x0..x1 {
            for y in y0..y1 {
                let a = (x, y);
                let b = (x + 1, y);
                let c = (x + 1, y + 1);
                let d = (x, y + 1);
                faces.push((
                    Some([2 * x + 1, 2 * y + 1]),
                    vec![lattice_edge(a, b), lattice_edge(b, c), lattice_edge(c, d), lattice_edge(d, a)],
                ));
            }
        }
        match bc {
            BoundaryCondition::Free => {
                let mut outer = Vec::new();
                if width >= 2 && height >= 2 {
                    // Clockwise, against the orientation of the adjacent squares.
                    let k = boundary_walk.len();
                    for i in (0..k).rev() {
                        outer.push(lattice_edge(boundary_walk[(i + 1) % k], boundary_walk[i]));
                    }
                } else {
                    // A path: the single face sees every edge from both sides.
                    for e in 0..edges.len() {
                        outer.push(Side { edge: e, sign: 1 });
                    }
                    for e in (0..edges.len()).rev() {
                        outer.push(Side { edge: e, sign: -1 });
                    }
                }
                faces.push((None, outer));
            }
            BoundaryCondition::Zero => {
                let k = slots.len();
                for i in 0..k {
                    let ((xa, ya), da) = slots[i];
                    let ((xb, yb), db) = slots[(i + 1) % k];
                    let va = da.vec();
                    let vb = db.vec();
                    let ea = edge_at[&[2 * xa + va[0], 2 * ya + va[1]]];
                    let eb = edge_at[&[2 * xb + vb[0], 2 * yb + vb[1]]];
                    let mut sides = vec![Side { edge: ea, sign: 1 }, Side { edge: eb, sign: -1 }];
                    let pos = if (xa, ya) == (xb, yb) {
                        [2 * xa + va[0] + vb[0], 2 * ya + va[1] + vb[1]]
                    } else {
                        sides.push(lattice_edge((xb, yb), (xa, ya)));
                        [xa + xb + va[0], ya + yb + va[1]]
                    };
                    faces.push((Some(pos), sides));
                }
            }
        }
        faces.sort_by(|a, b| match (a.0, b.0) {
            (Some(p), Some(q)) => p.cmp(&q),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        });
        let face_pos: Vec<Pos> = faces.iter().map(|f| f.0).collect();
        let face_sides: Vec<Vec<Side>> = faces.into_iter().map(|f| f.1).collect();

        let (root_vertex, root_face) = match bc {
            BoundaryCondition::Free => (idx(0, 0), face_pos.len() - 1),
            BoundaryCondition::Zero => {
                let f = face_pos.iter().position(|p| *p == Some([1, 1])).expect("central face");
                (inf, f)
            }
        };
        Self::from_parts(
            bc,
            width,
            height,
            Embedding::Primal,
            vertex_pos,
            edge_pos,
            face_pos,
            edges,
            face_sides,
            root_vertex,
            root_face,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn from_parts(
        bc: BoundaryCondition,
        width: usize,
        height: usize,
        embedding: Embedding,
        vertex_pos: Vec<Pos>,
        edge_pos: Vec<Pos>,
        face_pos: Vec<Pos>,
        edges: Vec<[usize; 2]>,
        faces: Vec<Vec<Side>>,
        root_vertex: usize,
        root_face: usize,
    ) -> Result<Self> {
        let nv = vertex_pos.len();
        let mut incidence = vec![Vec::new(); nv];
        for (e, &[t, h]) in edges.iter().enumerate() {
            if t >= nv || h >= nv || t == h {
                return Err(Error::InvalidParameter(format!("edge {e} has bad endpoints")));
            }
            incidence[t].push(Incidence { edge: e, neighbor: h, outgoing: true });
            incidence[h].push(Incidence { edge: e, neighbor: t, outgoing: false });
        }
        let mut slots: Vec<Vec<(usize, i8)>> = vec![Vec::new(); edges.len()];
        for (f, sides) in faces.iter().enumerate() {
            for s in sides {
                if s.edge >= edges.len() || s.sign.abs() != 1 {
                    return Err(Error::InvalidParameter(format!("face {f} has a bad side")));
                }
                slots[s.edge].push((f, s.sign));
            }
        }
        let mut edge_faces = Vec::with_capacity(edges.len());
        for (e, s) in slots.iter().enumerate() {
            if s.len() != 2 || s[0].1 + s[1].1 != 0 {
                return Err(Error::InvalidParameter(format!(
                    "edge {e} must appear in two face boundaries with opposite signs"
                )));
            }
            edge_faces.push([s[0], s[1]]);
        }
        if root_vertex >= nv || root_face >= faces.len() {
            return Err(Error::InvalidParameter("root out of range".into()));
        }
        let g = Self {
            bc,
            width,
            height,
            embedding,
            vertex_pos,
            edge_pos,
            face_pos,
            edges,
            faces,
            root_vertex,
            root_face,
            incidence,
            edge_faces,
            cache: SolverCache::default(),
        };
        let chi = g.vertex_count() as i64 - g.edge_count() as i64 + g.face_count() as i64;
        if chi != 2 {
            return Err(Error::InvalidParameter(format!("Euler characteristic {chi} != 2")));
        }
        Ok(g)
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn embedding(&self) -> Embedding {
        self.embedding
    }

    /// Vertex dimensions of the grid this geometry was built from.
    pub fn grid_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// The radius `n` when this is a primal `[-n, n]²` grid.
    pub fn radius(&self) -> Option<usize> {
        (self.embedding == Embedding::Primal && self.width == self.height && self.width % 2 == 1)
            .then_some((self.width - 1) / 2)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_pos.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn cell_count(&self, degree: usize) -> usize {
        match degree {
            0 => self.vertex_count(),
            1 => self.edge_count(),
            _ => self.face_count(),
        }
    }

    pub fn root_vertex(&self) -> usize {
        self.root_vertex
    }

    pub fn root_face(&self) -> usize {
        self.root_face
    }

    /// Root cell of a rooted degree (0 or 2).
    pub fn root_cell(&self, degree: usize) -> Option<usize> {
        match degree {
            0 => Some(self.root_vertex),
            2 => Some(self.root_face),
            _ => None,
        }
    }

    /// `(tail, head)` of an edge.
    pub fn edge(&self, e: usize) -> (usize, usize) {
        let [t, h] = self.edges[e];
        (t, h)
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn face_boundary(&self, f: usize) -> &[Side] {
        &self.faces[f]
    }

    /// The two `(face, sign)` slots in which an edge appears.
    pub fn edge_faces(&self, e: usize) -> [(usize, i8); 2] {
        self.edge_faces[e]
    }

    pub fn incident(&self, v: usize) -> &[Incidence] {
        &self.incidence[v]
    }

    /// Number of incident edges, parallel edges counted separately.
    pub fn degree(&self, v: usize) -> usize {
        self.incidence[v].len()
    }

    pub fn vertex_pos(&self, v: usize) -> Pos {
        self.vertex_pos[v]
    }

    pub fn edge_pos(&self, e: usize) -> Pos {
        self.edge_pos[e]
    }

    pub fn face_pos(&self, f: usize) -> Pos {
        self.face_pos[f]
    }

    /// The dual vertex corresponding to face `f` (indices are shared).
    pub fn dual_map(&self, f: usize) -> usize {
        f
    }

    /// Vertex with lattice coordinates `(x, y)`, if present.
    pub fn vertex_at(&self, x: i64, y: i64) -> Option<usize> {
        let p = Some([2 * x, 2 * y]);
        self.vertex_pos.binary_search_by(|q| cmp_pos(q, &p)).ok()
    }

    /// Face with doubled-coordinate position `pos`, if present.
    pub fn face_at(&self, pos: [i64; 2]) -> Option<usize> {
        let p = Some(pos);
        self.face_pos.binary_search_by(|q| cmp_pos(q, &p)).ok().or_else(|| {
            self.face_pos.iter().position(|q| *q == p)
        })
    }

    /// Unit square whose lower-left corner is the vertex `(x, y)`.
    pub fn square_at(&self, x: i64, y: i64) -> Option<usize> {
        self.face_at([2 * x + 1, 2 * y + 1])
    }

    /// Edge between two vertices (the first one if there are parallel edges).
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.incidence[a].iter().find(|i| i.neighbor == b).map(|i| i.edge)
    }

    /// Same complex with a different root vertex.
    pub fn with_root_vertex(&self, v: usize) -> Result<Self> {
        if v >= self.vertex_count() {
            return Err(Error::InvalidParameter(format!("vertex {v} out of range")));
        }
        let mut g = self.clone();
        g.root_vertex = v;
        Ok(g)
    }

    /// Same complex with a different root face.
    pub fn with_root_face(&self, f: usize) -> Result<Self> {
        if f >= self.face_count() {
            return Err(Error::InvalidParameter(format!("face {f} out of range")));
        }
        let mut g = self.clone();
        g.root_face = f;
        Ok(g)
    }

    /// Same complex with the roots of a given degree moved.
    pub fn with_root(&self, degree: usize, cell: usize) -> Result<Self> {
        match degree {
            0 => self.with_root_vertex(cell),
            2 => self.with_root_face(cell),
            _ => Err(Error::Degree("edges carry no root")),
        }
    }

    /// Serializable description of cells, incidence and roots.
    pub fn dump(&self) -> GeometryDump {
        GeometryDump {
            bc: self.bc,
            width: self.width,
            height: self.height,
            embedding: self.embedding,
            vertices: self.vertex_pos.clone(),
            edges: self.edges.clone(),
            edge_positions: self.edge_pos.clone(),
            faces: self.faces.clone(),
            face_positions: self.face_pos.clone(),
            root_vertex: self.root_vertex,
            root_face: self.root_face,
        }
    }

    /// Hex digest of the canonical JSON dump, used to tag artifacts.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.dump()).expect("dump serializes");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..8])
    }
}

fn cmp_pos(a: &Pos, b: &Pos) -> std::cmp::Ordering {
    match (a, b) {
        (Some(p), Some(q)) => p.cmp(q),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    }
}

/// JSON form of a geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryDump {
    pub bc: BoundaryCondition,
    pub width: usize,
    pub height: usize,
    pub embedding: Embedding,
    pub vertices: Vec<Pos>,
    pub edges: Vec<[usize; 2]>,
    pub edge_positions: Vec<Pos>,
    pub faces: Vec<Vec<Side>>,
    pub face_positions: Vec<Pos>,
    pub root_vertex: usize,
    pub root_face: usize,
}
