//! Cells of the periodic `N×N×N×N` lattice carrying the 4D toric code.
//!
//! A cell is a base vertex plus a 4-bit orientation mask: weight 1 for edges,
//! 2 for faces (the qubits) and 3 for cubes. Cells of one kind are indexed as
//! `orientation_rank · N⁴ + vertex_index`, with `vertex_index` running
//! `v3` fastest and orientations ordered by mask value. That index order is
//! also the recovery sweep order.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("lattice size must be at least 1")]
    ZeroSize,
    #[error("lattice size {0} is too large for 32-bit cell indices")]
    TooLarge(usize),
    #[error("expected a {expected} but got a {got}")]
    WrongKind { expected: CellKind, got: CellKind },
    #[error("orientation mask {0:#06b} has no cell kind")]
    BadOrientation(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Vertex,
    Edge,
    Face,
    Cube,
    Hypercube,
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CellKind::Vertex => "vertex",
            CellKind::Edge => "edge",
            CellKind::Face => "face",
            CellKind::Cube => "cube",
            CellKind::Hypercube => "hypercube",
        };
        f.write_str(s)
    }
}

/// Lattice vertex; coordinates live in `Z_N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex(pub [u32; 4]);

/// Binary orientation vector packed into the low 4 bits; bit `i` is `ê_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Orientation(u8);

pub const EDGE_ORIENTATIONS: [Orientation; 4] = [
    Orientation(0b0001),
    Orientation(0b0010),
    Orientation(0b0100),
    Orientation(0b1000),
];
pub const FACE_ORIENTATIONS: [Orientation; 6] = [
    Orientation(0b0011),
    Orientation(0b0101),
    Orientation(0b0110),
    Orientation(0b1001),
    Orientation(0b1010),
    Orientation(0b1100),
];
pub const CUBE_ORIENTATIONS: [Orientation; 4] = [
    Orientation(0b0111),
    Orientation(0b1011),
    Orientation(0b1101),
    Orientation(0b1110),
];

impl Orientation {
    pub fn new(mask: u8) -> Result<Self, LatticeError> {
        if mask == 0 || mask > 0b1110 {
            return Err(LatticeError::BadOrientation(mask));
        }
        Ok(Self(mask))
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    pub fn weight(self) -> u32 {
        self.0.count_ones()
    }

    pub fn kind(self) -> CellKind {
        match self.weight() {
            0 => CellKind::Vertex,
            1 => CellKind::Edge,
            2 => CellKind::Face,
            3 => CellKind::Cube,
            _ => CellKind::Hypercube,
        }
    }

    pub fn complement(self) -> Self {
        Self(!self.0 & 0b1111)
    }

    pub fn contains(self, dir: usize) -> bool {
        self.0 & (1 << dir) != 0
    }

    /// Directions set in the mask, ascending.
    pub fn directions(self) -> impl Iterator<Item = usize> {
        (0..4).filter(move |&d| self.contains(d))
    }

    /// Position of this orientation among the orientations of its kind.
    pub fn rank(self) -> usize {
        let list: &[Orientation] = match self.kind() {
            CellKind::Edge => &EDGE_ORIENTATIONS,
            CellKind::Face => &FACE_ORIENTATIONS,
            CellKind::Cube => &CUBE_ORIENTATIONS,
            _ => return 0,
        };
        list.iter()
            .position(|&o| o == self)
            .expect("listed orientation")
    }
}

/// A lattice cell: base (lower-corner) vertex and orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub vertex: Vertex,
    pub orientation: Orientation,
}

impl CellId {
    pub fn new(vertex: [u32; 4], mask: u8) -> Result<Self, LatticeError> {
        Ok(Self {
            vertex: Vertex(vertex),
            orientation: Orientation::new(mask)?,
        })
    }

    pub fn kind(&self) -> CellKind {
        self.orientation.kind()
    }
}

/// Precomputed incidence tables of the periodic 4D lattice.
///
/// Immutable after [`Lattice4D::build`]; share it freely across trials.
#[derive(Debug, Clone)]
pub struct Lattice4D {
    n: usize,
    volume: usize,
    /// Per face: lower edges `(v,ê_a)`, `(v,ê_b)`, then upper `(v+ê_b,ê_a)`, `(v+ê_a,ê_b)`.
    face_edges: Vec<[u32; 4]>,
    /// Per face: lower cubes `(v,p̂+ê′)` for both `ê′ ∉ p̂`, then the upper ones `(v−ê′,p̂+ê′)`.
    face_cubes: Vec<[u32; 4]>,
    edge_faces: Vec<[u32; 6]>,
    cube_faces: Vec<[u32; 6]>,
    /// Per face orientation: faces of that orientation in the plane spanned by `p̂`.
    x_logical: Vec<Vec<u32>>,
    /// Per face orientation: faces of that orientation in the plane spanned by `p̂⊥`.
    z_logical: Vec<Vec<u32>>,
}

impl Lattice4D {
    pub fn build(n: usize) -> Result<Self, LatticeError> {
        if n == 0 {
            return Err(LatticeError::ZeroSize);
        }
        let volume = n
            .checked_pow(4)
            .filter(|v| v.checked_mul(6).is_some_and(|f| f < u32::MAX as usize))
            .ok_or(LatticeError::TooLarge(n))?;
        let mut lat = Self {
            n,
            volume,
            face_edges: Vec::with_capacity(6 * volume),
            face_cubes: Vec::with_capacity(6 * volume),
            edge_faces: Vec::with_capacity(4 * volume),
            cube_faces: Vec::with_capacity(4 * volume),
            x_logical: Vec::with_capacity(6),
            z_logical: Vec::with_capacity(6),
        };
        for &p in &FACE_ORIENTATIONS {
            for vi in 0..volume {
                let v = lat.vertex_of(vi);
                let [a, b] = two_dirs(p);
                let lower_a = lat.index_of(v, EDGE_ORIENTATIONS[a]);
                let lower_b = lat.index_of(v, EDGE_ORIENTATIONS[b]);
                let upper_a = lat.index_of(lat.shift(v, b, 1), EDGE_ORIENTATIONS[a]);
                let upper_b = lat.index_of(lat.shift(v, a, 1), EDGE_ORIENTATIONS[b]);
                lat.face_edges.push([lower_a, lower_b, upper_a, upper_b]);

                let [c, d] = two_dirs(p.complement());
                let cube_c = Orientation(p.0 | 1 << c);
                let cube_d = Orientation(p.0 | 1 << d);
                lat.face_cubes.push([
                    lat.index_of(v, cube_c),
                    lat.index_of(v, cube_d),
                    lat.index_of(lat.shift(v, c, -1), cube_c),
                    lat.index_of(lat.shift(v, d, -1), cube_d),
                ]);
            }
        }
        for &e in &EDGE_ORIENTATIONS {
            let dir = e.directions().next().expect("edge direction");
            for vi in 0..volume {
                let v = lat.vertex_of(vi);
                let mut faces = [0u32; 6];
                let mut k = 0;
                for other in (0..4).filter(|&d| d != dir) {
                    let p = Orientation(e.0 | 1 << other);
                    faces[k] = lat.index_of(v, p);
                    faces[k + 1] = lat.index_of(lat.shift(v, other, -1), p);
                    k += 2;
                }
                lat.edge_faces.push(faces);
            }
        }
        for &c in &CUBE_ORIENTATIONS {
            for vi in 0..volume {
                let v = lat.vertex_of(vi);
                let mut faces = [0u32; 6];
                let mut k = 0;
                for missing in c.directions() {
                    let p = Orientation(c.0 & !(1 << missing));
                    faces[k] = lat.index_of(v, p);
                    faces[k + 1] = lat.index_of(lat.shift(v, missing, 1), p);
                    k += 2;
                }
                lat.cube_faces.push(faces);
            }
        }
        for &p in &FACE_ORIENTATIONS {
            lat.x_logical.push(lat.plane(p, p));
            lat.z_logical.push(lat.plane(p, p.complement()));
        }
        Ok(lat)
    }

    fn plane(&self, p: Orientation, span: Orientation) -> Vec<u32> {
        let [a, b] = two_dirs(span);
        let n = self.n as u32;
        let mut out = Vec::with_capacity(self.n * self.n);
        for i in 0..n {
            for j in 0..n {
                let mut v = [0u32; 4];
                v[a] = i;
                v[b] = j;
                out.push(self.index_of(Vertex(v), p));
            }
        }
        out
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn volume(&self) -> usize {
        self.volume
    }

    pub fn num_faces(&self) -> usize {
        6 * self.volume
    }

    pub fn num_edges(&self) -> usize {
        4 * self.volume
    }

    pub fn num_cubes(&self) -> usize {
        4 * self.volume
    }

    pub fn vertex_index(&self, v: Vertex) -> usize {
        let n = self.n;
        v.0.iter().fold(0usize, |acc, &c| acc * n + c as usize % n)
    }

    pub fn vertex_of(&self, mut index: usize) -> Vertex {
        let n = self.n;
        let mut v = [0u32; 4];
        for c in v.iter_mut().rev() {
            *c = (index % n) as u32;
            index /= n;
        }
        Vertex(v)
    }

    /// Adds `step·ê_dir` modulo `N`.
    pub fn shift(&self, v: Vertex, dir: usize, step: i64) -> Vertex {
        let n = self.n as i64;
        let mut out = v.0;
        out[dir] = (out[dir] as i64 + step).rem_euclid(n) as u32;
        Vertex(out)
    }

    /// Index of a cell among the cells of its kind.
    pub fn index_of(&self, v: Vertex, o: Orientation) -> u32 {
        (o.rank() * self.volume + self.vertex_index(v)) as u32
    }

    pub fn index(&self, cell: CellId) -> u32 {
        self.index_of(cell.vertex, cell.orientation)
    }

    fn cell(&self, kind: CellKind, index: u32) -> CellId {
        let list: &[Orientation] = match kind {
            CellKind::Edge => &EDGE_ORIENTATIONS,
            CellKind::Face => &FACE_ORIENTATIONS,
            CellKind::Cube => &CUBE_ORIENTATIONS,
            _ => unreachable!("only edges, faces and cubes are indexed"),
        };
        let i = index as usize;
        CellId {
            vertex: self.vertex_of(i % self.volume),
            orientation: list[i / self.volume],
        }
    }

    pub fn face(&self, index: u32) -> CellId {
        self.cell(CellKind::Face, index)
    }

    pub fn edge(&self, index: u32) -> CellId {
        self.cell(CellKind::Edge, index)
    }

    pub fn cube(&self, index: u32) -> CellId {
        self.cell(CellKind::Cube, index)
    }

    fn expect_kind(cell: CellId, expected: CellKind) -> Result<(), LatticeError> {
        let got = cell.kind();
        if got == expected {
            Ok(())
        } else {
            Err(LatticeError::WrongKind { expected, got })
        }
    }

    /// The four edges of a face; the first two are its lower-side edges.
    pub fn face_edges(&self, f: CellId) -> Result<[CellId; 4], LatticeError> {
        Self::expect_kind(f, CellKind::Face)?;
        Ok(self.face_edges[self.index(f) as usize].map(|e| self.edge(e)))
    }

    /// The six faces containing an edge.
    pub fn edge_faces(&self, e: CellId) -> Result<[CellId; 6], LatticeError> {
        Self::expect_kind(e, CellKind::Edge)?;
        Ok(self.edge_faces[self.index(e) as usize].map(|f| self.face(f)))
    }

    /// The four cubes containing a face; the first two are its lower-side cubes.
    pub fn face_cubes(&self, f: CellId) -> Result<[CellId; 4], LatticeError> {
        Self::expect_kind(f, CellKind::Face)?;
        Ok(self.face_cubes[self.index(f) as usize].map(|c| self.cube(c)))
    }

    /// The six faces bounding a cube.
    pub fn cube_faces(&self, c: CellId) -> Result<[CellId; 6], LatticeError> {
        Self::expect_kind(c, CellKind::Cube)?;
        Ok(self.cube_faces[self.index(c) as usize].map(|f| self.face(f)))
    }

    #[inline]
    pub fn face_edges_idx(&self, f: u32) -> &[u32; 4] {
        &self.face_edges[f as usize]
    }

    #[inline]
    pub fn face_cubes_idx(&self, f: u32) -> &[u32; 4] {
        &self.face_cubes[f as usize]
    }

    #[inline]
    pub fn edge_faces_idx(&self, e: u32) -> &[u32; 6] {
        &self.edge_faces[e as usize]
    }

    #[inline]
    pub fn cube_faces_idx(&self, c: u32) -> &[u32; 6] {
        &self.cube_faces[c as usize]
    }

    /// Support of `X^L(p̂)`, indexed by face-orientation rank.
    pub fn x_logical_support(&self, orientation_rank: usize) -> &[u32] {
        &self.x_logical[orientation_rank]
    }

    /// Support of `Z^L(p̂)`, indexed by face-orientation rank.
    pub fn z_logical_support(&self, orientation_rank: usize) -> &[u32] {
        &self.z_logical[orientation_rank]
    }

    /// Complements the orientation and keeps the base vertex.
    ///
    /// This maps face→lower-edge incidence onto face→lower-cube incidence
    /// exactly. The upper incidences only line up after also reflecting the
    /// base vertex, see [`Lattice4D::reflected_dual`].
    pub fn dual(&self, c: CellId) -> CellId {
        CellId {
            vertex: c.vertex,
            orientation: c.orientation.complement(),
        }
    }

    /// Complements the orientation and maps the base vertex `v ↦ −v`.
    ///
    /// A full isomorphism of the cell complex that swaps edges and cubes and
    /// preserves lower-side relations.
    pub fn reflected_dual(&self, c: CellId) -> CellId {
        let n = self.n as u32;
        CellId {
            vertex: Vertex(c.vertex.0.map(|x| (n - x % n) % n)),
            orientation: c.orientation.complement(),
        }
    }
}

fn two_dirs(o: Orientation) -> [usize; 2] {
    let mut it = o.directions();
    [
        it.next().expect("two directions"),
        it.next().expect("two directions"),
    ]
}
