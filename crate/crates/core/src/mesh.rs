//! Triangulations, red refinement, and the nested mesh hierarchy.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cell {cell} has non-positive signed area {area}")]
    NonPositiveArea { cell: usize, area: f64 },
    #[error("cell {cell} references vertex {vertex}, but only {n_vertices} vertices exist")]
    VertexOutOfRange {
        cell: usize,
        vertex: usize,
        n_vertices: usize,
    },
    #[error("edge ({0}, {1}) is shared by more than two cells")]
    NonManifoldEdge(usize, usize),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteVertex(usize),
    #[error("face index {index} out of range ({n_faces} faces)")]
    FaceOutOfRange { index: usize, n_faces: usize },
    #[error("mesh file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read mesh file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn midpoint(self, other: Point2) -> Point2 {
        Point2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    /// Canonical orientation: `vertices[0] < vertices[1]`.
    pub vertices: [usize; 2],
    /// First adjacent cell, and the second one for interior faces.
    pub cells: (usize, Option<usize>),
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }
}

/// Face `face` is local edge `e` of a cell; `same_orientation` tells whether
/// the local direction (vertex `e` to vertex `e + 1`) matches the canonical
/// one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellFace {
    pub face: usize,
    pub same_orientation: bool,
}

impl CellFace {
    pub fn sign(&self) -> f64 {
        if self.same_orientation {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FaceGeometry {
    pub length: f64,
    /// Outward unit normal with respect to each adjacent cell, in the order of
    /// `Face::cells`.
    pub normals: [(usize, [f64; 2]); 2],
    pub n_cells: usize,
}

/// Affine map `x = origin + jacobian * xi` from the reference triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub origin: Point2,
    /// Columns are `v1 - v0` and `v2 - v0`; stored row-major.
    pub jacobian: [[f64; 2]; 2],
}

impl AffineMap {
    pub fn det(&self) -> f64 {
        let j = &self.jacobian;
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    }

    pub fn apply(&self, xi: [f64; 2]) -> Point2 {
        let j = &self.jacobian;
        Point2::new(
            self.origin.x + j[0][0] * xi[0] + j[0][1] * xi[1],
            self.origin.y + j[1][0] * xi[0] + j[1][1] * xi[1],
        )
    }

    pub fn inverse_apply(&self, x: Point2) -> [f64; 2] {
        let j = &self.jacobian;
        let det = self.det();
        let (dx, dy) = (x.x - self.origin.x, x.y - self.origin.y);
        [
            (j[1][1] * dx - j[0][1] * dy) / det,
            (-j[1][0] * dx + j[0][0] * dy) / det,
        ]
    }

    /// `J^{-T}`, mapping reference gradients to physical ones.
    pub fn inverse_transpose(&self) -> [[f64; 2]; 2] {
        let j = &self.jacobian;
        let det = self.det();
        [
            [j[1][1] / det, -j[1][0] / det],
            [-j[0][1] / det, j[0][0] / det],
        ]
    }

    pub fn map_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let k = self.inverse_transpose();
        [k[0][0] * g[0] + k[0][1] * g[1], k[1][0] * g[0] + k[1][1] * g[1]]
    }
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point2>,
    cells: Vec<[usize; 3]>,
    faces: Vec<Face>,
    cell_faces: Vec<[CellFace; 3]>,
    level: usize,
}

impl TriMesh {
    /// Validates the cells and builds the face topology. Faces are numbered in
    /// order of first appearance while walking cells and their local edges.
    pub fn new(vertices: Vec<Point2>, cells: Vec<[usize; 3]>, level: usize) -> Result<Self, MeshError> {
        for (i, v) in vertices.iter().enumerate() {
            if !v.x.is_finite() || !v.y.is_finite() {
                return Err(MeshError::NonFiniteVertex(i));
            }
        }
        for (c, cell) in cells.iter().enumerate() {
            for &v in cell {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange {
                        cell: c,
                        vertex: v,
                        n_vertices: vertices.len(),
                    });
                }
            }
            let area = signed_area(vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
            if !(area > 0.0) {
                return Err(MeshError::NonPositiveArea { cell: c, area });
            }
        }

        let mut lookup: HashMap<[usize; 2], usize> = HashMap::with_capacity(cells.len() * 2);
        let mut faces: Vec<Face> = Vec::with_capacity(cells.len() * 2);
        let mut cell_faces = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            let mut local = [CellFace {
                face: 0,
                same_orientation: true,
            }; 3];
            for (e, slot) in local.iter_mut().enumerate() {
                let (a, b) = (cell[e], cell[(e + 1) % 3]);
                let key = [a.min(b), a.max(b)];
                let face = match lookup.get(&key) {
                    Some(&f) => {
                        let entry = &mut faces[f];
                        if entry.cells.1.is_some() {
                            return Err(MeshError::NonManifoldEdge(key[0], key[1]));
                        }
                        entry.cells.1 = Some(c);
                        f
                    }
                    None => {
                        faces.push(Face {
                            vertices: key,
                            cells: (c, None),
                        });
                        lookup.insert(key, faces.len() - 1);
                        faces.len() - 1
                    }
                };
                *slot = CellFace {
                    face,
                    same_orientation: a < b,
                };
            }
            cell_faces.push(local);
        }

        Ok(Self {
            vertices,
            cells,
            faces,
            cell_faces,
            level,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn cell_faces(&self, cell: usize) -> &[CellFace; 3] {
        &self.cell_faces[cell]
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_boundary_faces(&self) -> usize {
        self.faces.iter().filter(|f| f.is_boundary()).count()
    }

    pub fn cell_vertices(&self, cell: usize) -> [Point2; 3] {
        self.cells[cell].map(|v| self.vertices[v])
    }

    pub fn cell_map(&self, cell: usize) -> AffineMap {
        let [a, b, c] = self.cell_vertices(cell);
        AffineMap {
            origin: a,
            jacobian: [[b.x - a.x, c.x - a.x], [b.y - a.y, c.y - a.y]],
        }
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cell_vertices(cell);
        signed_area(a, b, c)
    }

    pub fn cell_perimeter(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cell_vertices(cell);
        a.distance(b) + b.distance(c) + c.distance(a)
    }

    pub fn cell_diameter(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cell_vertices(cell);
        a.distance(b).max(b.distance(c)).max(c.distance(a))
    }

    /// Maximal cell diameter.
    pub fn h(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_diameter(c)).fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_area(c)).sum()
    }

    /// Vertices that touch at least one boundary face.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut flags = vec![false; self.n_vertices()];
        for f in self.faces.iter().filter(|f| f.is_boundary()) {
            flags[f.vertices[0]] = true;
            flags[f.vertices[1]] = true;
        }
        flags
    }

    /// Outward unit normal of local edge `e` of `cell` and the edge length.
    pub fn local_edge_normal(&self, cell: usize, e: usize) -> ([f64; 2], f64) {
        let verts = self.cell_vertices(cell);
        let (a, b) = (verts[e], verts[(e + 1) % 3]);
        let len = a.distance(b);
        // counterclockwise cells: outward normal is the tangent rotated clockwise
        ([(b.y - a.y) / len, -(b.x - a.x) / len], len)
    }

    pub fn face_geometry(&self, face: usize) -> Result<FaceGeometry, MeshError> {
        let f = self.faces.get(face).ok_or(MeshError::FaceOutOfRange {
            index: face,
            n_faces: self.n_faces(),
        })?;
        let normal_for = |cell: usize| {
            let e = self.cell_faces[cell]
                .iter()
                .position(|cf| cf.face == face)
                .expect("face listed in adjacent cell");
            self.local_edge_normal(cell, e)
        };
        let (n0, length) = normal_for(f.cells.0);
        let (second, n_cells) = match f.cells.1 {
            Some(c) => ((c, normal_for(c).0), 2),
            None => ((f.cells.0, n0), 1),
        };
        Ok(FaceGeometry {
            length,
            normals: [(f.cells.0, n0), second],
            n_cells,
        })
    }

    /// Red refinement: every triangle is split into four congruent children
    /// through its edge midpoints. The midpoint of coarse face `f` becomes
    /// fine vertex `n_vertices + f`; fine cell `4 c + k` is child `k` of
    /// coarse cell `c`, with child 3 the central (rotated) triangle.
    pub fn refine(&self) -> (TriMesh, Vec<[usize; 4]>) {
        let nv = self.n_vertices();
        let mut vertices = self.vertices.clone();
        vertices.extend(self.faces.iter().map(|f| {
            self.vertices[f.vertices[0]].midpoint(self.vertices[f.vertices[1]])
        }));
        let mut cells = Vec::with_capacity(4 * self.n_cells());
        let mut children = Vec::with_capacity(self.n_cells());
        for (c, &[a, b, cc]) in self.cells.iter().enumerate() {
            let m = self.cell_faces[c].map(|cf| nv + cf.face);
            let (mab, mbc, mca) = (m[0], m[1], m[2]);
            cells.push([a, mab, mca]);
            cells.push([mab, b, mbc]);
            cells.push([mca, mbc, cc]);
            cells.push([mbc, mca, mab]);
            children.push([4 * c, 4 * c + 1, 4 * c + 2, 4 * c + 3]);
        }
        let fine = TriMesh::new(vertices, cells, self.level + 1)
            .expect("red refinement of a valid mesh is valid");
        (fine, children)
    }

    /// Parses the line-oriented coarse-mesh format:
    ///
    /// ```text
    /// vertices N
    /// x y        (N lines)
    /// cells M
    /// i j k      (M lines, 0-based, counterclockwise)
    /// ```
    ///
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<TriMesh, MeshError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let err = |line: usize, message: String| MeshError::Parse { line, message };
        let mut header = |name: &str| -> Result<usize, MeshError> {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| err(0, format!("missing `{name}` header")))?;
            let mut parts = l.split_whitespace();
            if parts.next() != Some(name) {
                return Err(err(ln, format!("expected `{name} <count>`")));
            }
            parts
                .next()
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| err(ln, format!("invalid {name} count")))
        };

        let nv = header("vertices")?;
        let vertices = (0..nv)
            .map(|_| -> Result<Point2, MeshError> {
                let (ln, l) = lines.next().ok_or_else(|| err(0, "truncated vertex list".into()))?;
                let v: Vec<f64> = l
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|e| err(ln, format!("bad coordinate: {e}")))?;
                match v[..] {
                    [x, y] => Ok(Point2::new(x, y)),
                    _ => Err(err(ln, "expected two coordinates".into())),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (ln, l) = lines
            .next()
            .ok_or_else(|| err(0, "missing `cells` header".into()))?;
        let nc: usize = match l.split_whitespace().collect::<Vec<_>>()[..] {
            ["cells", n] => n.parse().map_err(|_| err(ln, "invalid cells count".into()))?,
            _ => return Err(err(ln, "expected `cells <count>`".into())),
        };
        let cells = (0..nc)
            .map(|_| -> Result<[usize; 3], MeshError> {
                let (ln, l) = lines.next().ok_or_else(|| err(0, "truncated cell list".into()))?;
                let v: Vec<usize> = l
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|e| err(ln, format!("bad vertex index: {e}")))?;
                match v[..] {
                    [i, j, k] => Ok([i, j, k]),
                    _ => Err(err(ln, "expected three vertex indices".into())),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some((ln, _)) = lines.next() {
            return Err(err(ln, "unexpected trailing content".into()));
        }
        TriMesh::new(vertices, cells, 0)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<TriMesh, MeshError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "vertices {}", self.n_vertices()).unwrap();
        for v in &self.vertices {
            writeln!(out, "{} {}", v.x, v.y).unwrap();
        }
        writeln!(out, "cells {}", self.n_cells()).unwrap();
        for c in &self.cells {
            writeln!(out, "{} {} {}", c[0], c[1], c[2]).unwrap();
        }
        out
    }
}

fn signed_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

pub const FIGURE1_MESH: &str = include_str!("../data/figure1.mesh");

/// Level-0 grid of the reference experiments: the unit square split into
/// 2x2 squares, each cut along its NW-SE diagonal.
pub fn build_figure1_coarse() -> TriMesh {
    let vertices = (0..3)
        .flat_map(|j| (0..3).map(move |i| Point2::new(i as f64 / 2.0, j as f64 / 2.0)))
        .collect();
    let mut cells = Vec::with_capacity(8);
    for j in 0..2 {
        for i in 0..2 {
            let sw = 3 * j + i;
            let (se, ne, nw) = (sw + 1, sw + 4, sw + 3);
            cells.push([sw, se, nw]);
            cells.push([se, ne, nw]);
        }
    }
    TriMesh::new(vertices, cells, 0).expect("built-in coarse mesh is valid")
}

#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    levels: Vec<TriMesh>,
    /// `child_maps[l - 1][c]` lists the level-`l` children of level-`(l-1)`
    /// cell `c`.
    child_maps: Vec<Vec<[usize; 4]>>,
    h: Vec<f64>,
}

impl MeshHierarchy {
    /// Coarse mesh plus `refinements` levels of red refinement.
    pub fn build(coarse: TriMesh, refinements: usize) -> Self {
        let mut levels = vec![coarse];
        let mut child_maps = Vec::with_capacity(refinements);
        for _ in 0..refinements {
            let (fine, children) = levels.last().expect("nonempty").refine();
            levels.push(fine);
            child_maps.push(children);
        }
        let h = levels.iter().map(TriMesh::h).collect();
        Self {
            levels,
            child_maps,
            h,
        }
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, l: usize) -> &TriMesh {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[TriMesh] {
        &self.levels
    }

    /// Children on level `fine_level` of each cell on level `fine_level - 1`.
    pub fn children(&self, fine_level: usize) -> &[[usize; 4]] {
        &self.child_maps[fine_level - 1]
    }

    pub fn h(&self, l: usize) -> f64 {
        self.h[l]
    }
}
