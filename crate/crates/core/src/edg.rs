//! Embedded discontinuous Galerkin discretization of `-Δu = f`, `u = 0` on
//! the boundary, statically condensed onto a continuous skeleton unknown.
//!
//! Per cell the local solver is the mixed LDG-type system with `u ∈ P_p` and
//! `q ∈ P_p²`:
//!
//! ```text
//! (q, w)_T - (u, ∇·w)_T                 = -<λ, w·ν>_∂T
//! -(q, ∇v)_T + <q·ν + τ u, v>_∂T        =  τ <λ, v>_∂T + (f, v)_T
//! ```
//!
//! Eliminating `(u, q)` leaves the symmetric positive definite form
//! `a(λ, μ) = (Qλ, Qμ) + <<τ (Uλ - λ), (Uμ - μ)>>` with load `b(μ) = (Uμ, f)`.

use std::collections::HashMap;

use thiserror::Error;

use crate::basis::{self, BasisError, CellBasis, FaceBasis, QuadratureRule};
use crate::linalg::{dot, CsrMatrix, DenseMatrix, LinalgError, LuFactorization};
use crate::mesh::{AffineMap, Point2, TriMesh};

#[derive(Debug, Error)]
pub enum EdgError {
    #[error("local solver on cell {cell} failed: {source}")]
    LocalSolve {
        cell: usize,
        #[source]
        source: LinalgError,
    },
    #[error("penalty must be positive, got {0}")]
    InvalidPenalty(f64),
    #[error("vector length {found} does not match {expected} skeleton unknowns")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Basis(#[from] BasisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    /// `τ = c / h`
    InvH,
    /// `τ = c`
    Const,
}

/// Level-wise penalty `τ_ℓ = c · h_ℓ^{-α}` with `α ∈ {1, 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyLaw {
    pub kind: PenaltyKind,
    pub coeff: f64,
}

impl PenaltyLaw {
    pub const fn inv_h() -> Self {
        Self {
            kind: PenaltyKind::InvH,
            coeff: 1.0,
        }
    }

    pub const fn constant() -> Self {
        Self {
            kind: PenaltyKind::Const,
            coeff: 1.0,
        }
    }

    pub fn tau(&self, h: f64) -> f64 {
        match self.kind {
            PenaltyKind::InvH => self.coeff / h,
            PenaltyKind::Const => self.coeff,
        }
    }
}

/// Reference-element tables shared by every cell of a given degree.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub basis: CellBasis,
    pub face_basis: FaceBasis,
    pub cell_rule: QuadratureRule<[f64; 2]>,
    pub face_rule: QuadratureRule<f64>,
    cell_values: Vec<Vec<f64>>,
    cell_grads: Vec<Vec<[f64; 2]>>,
    // edge_values[e][q]: cell basis at face quadrature point q of local edge e
    edge_values: [Vec<Vec<f64>>; 3],
    face_values: Vec<Vec<f64>>,
    error_rule: QuadratureRule<[f64; 2]>,
    error_values: Vec<Vec<f64>>,
}

impl ReferenceElement {
    pub fn new(p: usize) -> Result<Self, BasisError> {
        let basis = CellBasis::new(p)?;
        let face_basis = FaceBasis::new(p)?;
        let cell_rule = basis::cell_quadrature(p)?;
        let face_rule = basis::face_quadrature(p)?;
        let (cell_values, cell_grads) = basis.tabulate(&cell_rule.points);
        let edge_values = [0, 1, 2].map(|e| {
            face_rule
                .points
                .iter()
                .map(|&t| basis.values(basis::reference_edge_point(e, t)))
                .collect()
        });
        let face_values = face_rule.points.iter().map(|&t| face_basis.values(t)).collect();
        let error_rule = basis::triangle_rule(2 * p + 4);
        let error_values = error_rule.points.iter().map(|&x| basis.values(x)).collect();
        Ok(Self {
            basis,
            face_basis,
            cell_rule,
            face_rule,
            cell_values,
            cell_grads,
            edge_values,
            face_values,
            error_rule,
            error_values,
        })
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn trace_dim(&self) -> usize {
        self.basis.boundary_dim()
    }

    /// `(f, φ_i)_T` for every cell basis function.
    pub fn load_moments(&self, map: &AffineMap, f: &dyn Fn(Point2) -> f64) -> Vec<f64> {
        let det = map.det().abs();
        let mut moments = vec![0.0; self.dim()];
        for (q, (x, w)) in self.cell_rule.iter().enumerate() {
            let fx = f(map.apply(*x)) * w * det;
            for (m, v) in moments.iter_mut().zip(&self.cell_values[q]) {
                *m += fx * v;
            }
        }
        moments
    }

    /// Per local edge, the mass matrix `∫_e φ_i φ_j` of cell basis functions.
    fn edge_mass(&self, e: usize, length: f64) -> DenseMatrix {
        let n = self.dim();
        let mut m = DenseMatrix::zeros(n, n);
        for (q, w) in self.face_rule.weights.iter().enumerate() {
            let v = &self.edge_values[e][q];
            for i in 0..n {
                if v[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    m[(i, j)] += w * length * v[i] * v[j];
                }
            }
        }
        m
    }
}

/// Global numbering of the continuous skeleton unknowns. Dirichlet values
/// are eliminated: no unknown lives on a boundary vertex or face.
#[derive(Debug, Clone)]
pub struct SkeletonDofMap {
    level: usize,
    degree: usize,
    dof_of_vertex: Vec<Option<usize>>,
    // face f, canonical node s in 1..p, at index f * (p - 1) + s - 1
    dof_of_face_node: Vec<Option<usize>>,
    n_dofs: usize,
    // per cell, 3p entries in local boundary-node order
    cell_dofs: Vec<Option<usize>>,
    coords: Vec<Point2>,
}

impl SkeletonDofMap {
    /// Interior vertices first (ascending vertex index), then interior face
    /// nodes ordered by face index and canonical node position.
    pub fn new(mesh: &TriMesh, p: usize) -> Self {
        assert!(p >= 1, "degree must be at least 1");
        let on_boundary = mesh.boundary_vertices();
        let mut coords = Vec::new();
        let mut dof_of_vertex = vec![None; mesh.n_vertices()];
        for (v, slot) in dof_of_vertex.iter_mut().enumerate() {
            if !on_boundary[v] {
                *slot = Some(coords.len());
                coords.push(mesh.vertices()[v]);
            }
        }
        let mut dof_of_face_node = vec![None; mesh.n_faces() * (p - 1)];
        for (f, face) in mesh.faces().iter().enumerate() {
            if face.is_boundary() {
                continue;
            }
            let (a, b) = (mesh.vertices()[face.vertices[0]], mesh.vertices()[face.vertices[1]]);
            for s in 1..p {
                let t = s as f64 / p as f64;
                dof_of_face_node[f * (p - 1) + s - 1] = Some(coords.len());
                coords.push(Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
            }
        }

        let nb = 3 * p;
        let mut cell_dofs = Vec::with_capacity(mesh.n_cells() * nb);
        for c in 0..mesh.n_cells() {
            let verts = mesh.cells()[c];
            cell_dofs.extend(verts.iter().map(|&v| dof_of_vertex[v]));
            for cf in mesh.cell_faces(c) {
                for s in 1..p {
                    let canonical = if cf.same_orientation { s } else { p - s };
                    cell_dofs.push(dof_of_face_node[cf.face * (p - 1) + canonical - 1]);
                }
            }
        }

        Self {
            level: mesh.level(),
            degree: p,
            dof_of_vertex,
            dof_of_face_node,
            n_dofs: coords.len(),
            cell_dofs,
            coords,
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn vertex_dof(&self, v: usize) -> Option<usize> {
        self.dof_of_vertex[v]
    }

    /// Unknown at canonical node `s` (1..p) of face `f`.
    pub fn face_node_dof(&self, f: usize, s: usize) -> Option<usize> {
        self.dof_of_face_node[f * (self.degree - 1) + s - 1]
    }

    /// Global unknowns of the cell's `3p` boundary nodes; `None` marks a
    /// Dirichlet-constrained slot.
    pub fn cell_dofs(&self, cell: usize) -> &[Option<usize>] {
        let nb = 3 * self.degree;
        &self.cell_dofs[cell * nb..(cell + 1) * nb]
    }

    /// Physical position of every unknown's Lagrange node.
    pub fn coords(&self) -> &[Point2] {
        &self.coords
    }

    pub fn gather(&self, cell: usize, lambda: &[f64]) -> Vec<f64> {
        self.cell_dofs(cell)
            .iter()
            .map(|d| d.map_or(0.0, |i| lambda[i]))
            .collect()
    }

    /// Skeleton interpolant of `g`, i.e. its node values at every unknown.
    pub fn interpolate(&self, g: impl Fn(Point2) -> f64) -> Vec<f64> {
        self.coords.iter().map(|&x| g(x)).collect()
    }

    fn check(&self, lambda: &[f64]) -> Result<(), EdgError> {
        if lambda.len() == self.n_dofs {
            Ok(())
        } else {
            Err(EdgError::DimensionMismatch {
                expected: self.n_dofs,
                found: lambda.len(),
            })
        }
    }
}

/// Dense local system of one cell geometry with its solution maps.
///
/// Unknown layout: `[q_x (n), q_y (n), u (n)]` in cell-basis coefficients.
#[derive(Debug, Clone)]
pub struct CellLocalSystem {
    n: usize,
    nb: usize,
    tau: f64,
    factorization: LuFactorization,
    mass: DenseMatrix,
    boundary_mass: DenseMatrix,
    trace_to_q: DenseMatrix,
    trace_to_u: DenseMatrix,
    load_to_q: DenseMatrix,
    load_to_u: DenseMatrix,
    schur: DenseMatrix,
    schur_asymmetry: f64,
}

impl CellLocalSystem {
    pub fn new(map: &AffineMap, reference: &ReferenceElement, tau: f64) -> Result<Self, LinalgError> {
        let n = reference.dim();
        let nb = reference.trace_dim();
        let det = map.det().abs();

        let mut mass = DenseMatrix::zeros(n, n);
        // div[k][(i, j)] = ∫ φ_j ∂_k φ_i
        let mut div = [DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n)];
        for (q, w) in reference.cell_rule.weights.iter().enumerate() {
            let wq = w * det;
            let v = &reference.cell_values[q];
            let g: Vec<[f64; 2]> = reference.cell_grads[q]
                .iter()
                .map(|&g| map.map_gradient(g))
                .collect();
            for i in 0..n {
                for j in 0..n {
                    mass[(i, j)] += wq * v[i] * v[j];
                    div[0][(i, j)] += wq * v[j] * g[i][0];
                    div[1][(i, j)] += wq * v[j] * g[i][1];
                }
            }
        }

        let origin = map.apply([0.0, 0.0]);
        let corners = [origin, map.apply([1.0, 0.0]), map.apply([0.0, 1.0])];
        let mut boundary_mass = DenseMatrix::zeros(n, n);
        let mut normal_mass = [DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n)];
        for e in 0..3 {
            let (a, b) = (corners[e], corners[(e + 1) % 3]);
            let len = a.distance(b);
            let mut nu = [(b.y - a.y) / len, -(b.x - a.x) / len];
            if map.det() < 0.0 {
                nu = [-nu[0], -nu[1]];
            }
            let em = reference.edge_mass(e, len);
            boundary_mass.add_assign(&em);
            for k in 0..2 {
                let mut scaled = em.clone();
                scaled.scale(nu[k]);
                normal_mass[k].add_assign(&scaled);
            }
        }

        let mut k_mat = DenseMatrix::zeros(3 * n, 3 * n);
        for k in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    k_mat[(k * n + i, k * n + j)] = mass[(i, j)];
                    k_mat[(k * n + i, 2 * n + j)] = -div[k][(i, j)];
                    k_mat[(2 * n + i, k * n + j)] = -div[k][(i, j)] + normal_mass[k][(i, j)];
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                k_mat[(2 * n + i, 2 * n + j)] = tau * boundary_mass[(i, j)];
            }
        }

        // boundary nodes are the first nb cell nodes, so λ = Σ_b λ_b φ_b on ∂T
        let mut trace_rhs = DenseMatrix::zeros(3 * n, nb);
        for i in 0..n {
            for b in 0..nb {
                trace_rhs[(i, b)] = -normal_mass[0][(i, b)];
                trace_rhs[(n + i, b)] = -normal_mass[1][(i, b)];
                trace_rhs[(2 * n + i, b)] = tau * boundary_mass[(i, b)];
            }
        }
        let mut load_rhs = DenseMatrix::zeros(3 * n, n);
        for i in 0..n {
            load_rhs[(2 * n + i, i)] = 1.0;
        }

        let factorization = LuFactorization::new(&k_mat)?;
        let trace_sol = factorization.solve_matrix(&trace_rhs)?;
        let load_sol = factorization.solve_matrix(&load_rhs)?;
        let split = |m: &DenseMatrix, cols: usize| {
            let mut q = DenseMatrix::zeros(2 * n, cols);
            let mut u = DenseMatrix::zeros(n, cols);
            for j in 0..cols {
                for i in 0..2 * n {
                    q[(i, j)] = m[(i, j)];
                }
                for i in 0..n {
                    u[(i, j)] = m[(2 * n + i, j)];
                }
            }
            (q, u)
        };
        let (trace_to_q, trace_to_u) = split(&trace_sol, nb);
        let (load_to_q, load_to_u) = split(&load_sol, n);

        // S = Qᵀ M₂ Q + τ (U - P)ᵀ E_∂ (U - P)
        let mut mq = DenseMatrix::zeros(2 * n, nb);
        for k in 0..2 {
            for i in 0..n {
                for b in 0..nb {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += mass[(i, j)] * trace_to_q[(k * n + j, b)];
                    }
                    mq[(k * n + i, b)] = s;
                }
            }
        }
        let mut schur = trace_to_q.transpose().matmul(&mq);
        let mut jump = trace_to_u.clone();
        for b in 0..nb {
            jump[(b, b)] -= 1.0;
        }
        let mut penalty = jump.transpose().matmul(&boundary_mass.matmul(&jump));
        penalty.scale(tau);
        schur.add_assign(&penalty);
        let schur_asymmetry = schur.relative_asymmetry();
        let sym = schur.transpose();
        schur.add_assign(&sym);
        schur.scale(0.5);

        Ok(Self {
            n,
            nb,
            tau,
            factorization,
            mass,
            boundary_mass,
            trace_to_q,
            trace_to_u,
            load_to_q,
            load_to_u,
            schur,
            schur_asymmetry,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Condensed block `S_T` (symmetrized).
    pub fn schur(&self) -> &DenseMatrix {
        &self.schur
    }

    /// Relative asymmetry of `S_T` before symmetrization.
    pub fn schur_asymmetry(&self) -> f64 {
        self.schur_asymmetry
    }

    pub fn mass(&self) -> &DenseMatrix {
        &self.mass
    }

    /// `∫_∂T φ_i φ_j` over all three edges.
    pub fn boundary_mass(&self) -> &DenseMatrix {
        &self.boundary_mass
    }

    /// Maps local trace coefficients to the `u` coefficients, `U_T`.
    pub fn trace_to_u(&self) -> &DenseMatrix {
        &self.trace_to_u
    }

    pub fn trace_to_q(&self) -> &DenseMatrix {
        &self.trace_to_q
    }

    /// `(u_T, q_T)` for boundary data `λ` (3p coefficients) and `f = 0`.
    pub fn solve_trace(&self, lambda: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(lambda.len(), self.nb);
        (self.trace_to_u.matvec(lambda), self.trace_to_q.matvec(lambda))
    }

    /// `(u_T, q_T)` for load moments `(f, φ_i)_T` and `λ = 0`.
    pub fn solve_load(&self, moments: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(moments.len(), self.n);
        (self.load_to_u.matvec(moments), self.load_to_q.matvec(moments))
    }

    /// Solves the full local system for arbitrary right-hand sides of both
    /// equations; used to cross-check the precomputed maps.
    pub fn solve_raw(&self, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.factorization.solve(rhs)
    }
}

/// Local systems of one level, deduplicated by cell geometry: cells with
/// bitwise identical Jacobians share one system (local matrices do not
/// depend on translation).
#[derive(Debug, Clone)]
pub struct LevelLocals {
    systems: Vec<CellLocalSystem>,
    cell_system: Vec<usize>,
}

impl LevelLocals {
    pub fn build(mesh: &TriMesh, reference: &ReferenceElement, tau: f64) -> Result<Self, EdgError> {
        if !(tau > 0.0) {
            return Err(EdgError::InvalidPenalty(tau));
        }
        let mut lookup: HashMap<[u64; 4], usize> = HashMap::new();
        let mut systems = Vec::new();
        let mut cell_system = Vec::with_capacity(mesh.n_cells());
        for c in 0..mesh.n_cells() {
            let map = mesh.cell_map(c);
            let j = map.jacobian;
            let key = [j[0][0], j[0][1], j[1][0], j[1][1]].map(f64::to_bits);
            let idx = match lookup.get(&key) {
                Some(&i) => i,
                None => {
                    let sys = CellLocalSystem::new(&map, reference, tau)
                        .map_err(|source| EdgError::LocalSolve { cell: c, source })?;
                    systems.push(sys);
                    lookup.insert(key, systems.len() - 1);
                    systems.len() - 1
                }
            };
            cell_system.push(idx);
        }
        Ok(Self {
            systems,
            cell_system,
        })
    }

    pub fn cell(&self, c: usize) -> &CellLocalSystem {
        &self.systems[self.cell_system[c]]
    }

    /// Number of distinct cell geometries.
    pub fn n_distinct(&self) -> usize {
        self.systems.len()
    }
}

/// Condensed system `A λ = b` of one level.
#[derive(Debug, Clone)]
pub struct CondensedLevel {
    pub level: usize,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub tau: f64,
    pub law: PenaltyLaw,
    pub dofs: SkeletonDofMap,
    pub locals: LevelLocals,
}

impl CondensedLevel {
    /// Builds the dof map and local solvers and assembles the system.
    pub fn build(
        mesh: &TriMesh,
        reference: &ReferenceElement,
        law: PenaltyLaw,
        f: &dyn Fn(Point2) -> f64,
    ) -> Result<Self, EdgError> {
        let tau = law.tau(mesh.h());
        let dofs = SkeletonDofMap::new(mesh, reference.degree());
        let locals = LevelLocals::build(mesh, reference, tau)?;
        Ok(Self::assemble(mesh, reference, dofs, locals, law, f))
    }

    /// `A = Σ_T Gᵀ S_T G` and `b_i = (U μ_i, f)`, with constrained slots
    /// dropped. Cells are visited in index order.
    pub fn assemble(
        mesh: &TriMesh,
        reference: &ReferenceElement,
        dofs: SkeletonDofMap,
        locals: LevelLocals,
        law: PenaltyLaw,
        f: &dyn Fn(Point2) -> f64,
    ) -> Self {
        let n = dofs.n_dofs();
        let nb = reference.trace_dim();
        let mut triplets = Vec::with_capacity(mesh.n_cells() * nb * nb);
        let mut rhs = vec![0.0; n];
        for c in 0..mesh.n_cells() {
            let local = locals.cell(c);
            let gather = dofs.cell_dofs(c);
            let s = local.schur();
            for (a, da) in gather.iter().enumerate() {
                let Some(i) = *da else { continue };
                for (b, db) in gather.iter().enumerate() {
                    if let Some(j) = *db {
                        triplets.push((i, j, s[(a, b)]));
                    }
                }
            }
            let moments = reference.load_moments(&mesh.cell_map(c), f);
            let contrib = local.trace_to_u.matvec_transpose(&moments);
            for (a, da) in gather.iter().enumerate() {
                if let Some(i) = *da {
                    rhs[i] += contrib[a];
                }
            }
        }
        let tau = locals.systems.first().map_or(law.tau(mesh.h()), |s| s.tau);
        Self {
            level: mesh.level(),
            matrix: CsrMatrix::from_triplets(n, n, triplets),
            rhs,
            tau,
            law,
            dofs,
            locals,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.n_dofs()
    }

    /// `a(λ, μ)`
    pub fn energy(&self, lambda: &[f64], mu: &[f64]) -> f64 {
        dot(lambda, &self.matrix.spmv(mu).expect("sized"))
    }

    /// Cellwise `u = Uλ + Uf`, `q = Qλ + Qf`.
    pub fn reconstruct(
        &self,
        mesh: &TriMesh,
        reference: &ReferenceElement,
        lambda: &[f64],
        f: &dyn Fn(Point2) -> f64,
    ) -> Result<FieldSolution, EdgError> {
        self.dofs.check(lambda)?;
        let n = reference.dim();
        let mut u = Vec::with_capacity(mesh.n_cells() * n);
        let mut q = Vec::with_capacity(mesh.n_cells() * 2 * n);
        for c in 0..mesh.n_cells() {
            let local = self.locals.cell(c);
            let (mut uc, mut qc) = local.solve_trace(&self.dofs.gather(c, lambda));
            let moments = reference.load_moments(&mesh.cell_map(c), f);
            let (uf, qf) = local.solve_load(&moments);
            uc.iter_mut().zip(&uf).for_each(|(a, b)| *a += b);
            qc.iter_mut().zip(&qf).for_each(|(a, b)| *a += b);
            u.extend(uc);
            q.extend(qc);
        }
        Ok(FieldSolution {
            level: self.level,
            degree: reference.degree(),
            lambda: lambda.to_vec(),
            u,
            q,
        })
    }
}

/// Skeleton coefficients with the reconstructed cellwise fields.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub level: usize,
    pub degree: usize,
    pub lambda: Vec<f64>,
    /// `n_cells × dim P_p` coefficients.
    pub u: Vec<f64>,
    /// `n_cells × 2 dim P_p` coefficients, x components first in each cell.
    pub q: Vec<f64>,
}

impl FieldSolution {
    pub fn cell_u(&self, cell: usize) -> &[f64] {
        let n = basis::cell_dim(self.degree);
        &self.u[cell * n..(cell + 1) * n]
    }

    pub fn cell_q(&self, cell: usize) -> &[f64] {
        let n = basis::cell_dim(self.degree);
        &self.q[cell * 2 * n..(cell + 1) * 2 * n]
    }
}

/// Broken `L²` errors `(‖u - u_h‖, ‖q - q_h‖)`.
pub fn l2_errors(
    sol: &FieldSolution,
    mesh: &TriMesh,
    reference: &ReferenceElement,
    u_exact: &dyn Fn(Point2) -> f64,
    q_exact: &dyn Fn(Point2) -> [f64; 2],
) -> (f64, f64) {
    let n = reference.dim();
    let (mut eu, mut eq) = (0.0, 0.0);
    for c in 0..mesh.n_cells() {
        let map = mesh.cell_map(c);
        let det = map.det().abs();
        let (uc, qc) = (sol.cell_u(c), sol.cell_q(c));
        for (k, (xi, w)) in reference.error_rule.iter().enumerate() {
            let v = &reference.error_values[k];
            let x = map.apply(*xi);
            let uh = dot(v, uc);
            let qh = [dot(v, &qc[..n]), dot(v, &qc[n..])];
            let qe = q_exact(x);
            eu += w * det * (u_exact(x) - uh).powi(2);
            eq += w * det * ((qe[0] - qh[0]).powi(2) + (qe[1] - qh[1]).powi(2));
        }
    }
    (eu.sqrt(), eq.sqrt())
}

/// Estimated order of convergence between two successive levels.
pub fn eoc(coarse_error: f64, fine_error: f64) -> f64 {
    (coarse_error / fine_error).ln() / 2f64.ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletonNorms {
    /// `‖λ‖_ℓ`, with weights `|T| / |∂T|`.
    pub weighted: f64,
    /// `⦀λ⦀_ℓ`, interior faces counted from both sides.
    pub broken: f64,
}

pub fn weighted_skeleton_norm(
    dofs: &SkeletonDofMap,
    mesh: &TriMesh,
    reference: &ReferenceElement,
    lambda: &[f64],
) -> Result<SkeletonNorms, EdgError> {
    dofs.check(lambda)?;
    let p = reference.degree();
    let (mut weighted, mut broken) = (0.0, 0.0);
    for c in 0..mesh.n_cells() {
        let local = dofs.gather(c, lambda);
        let mut cell_sum = 0.0;
        for e in 0..3 {
            let (_, len) = mesh.local_edge_normal(c, e);
            let nodes: Vec<f64> = (0..=p).map(|s| local[reference.basis.edge_node(e, s)]).collect();
            for (q, w) in reference.face_rule.weights.iter().enumerate() {
                let v = dot(&reference.face_values[q], &nodes);
                cell_sum += w * len * v * v;
            }
        }
        broken += cell_sum;
        weighted += mesh.cell_area(c) / mesh.cell_perimeter(c) * cell_sum;
    }
    Ok(SkeletonNorms {
        weighted: weighted.sqrt(),
        broken: broken.sqrt(),
    })
}

/// Gram matrix of `<·,·>_ℓ` (or of `<<·,·>>_ℓ` when `weighted` is false) in
/// the skeleton nodal basis.
pub fn skeleton_gram(
    dofs: &SkeletonDofMap,
    mesh: &TriMesh,
    reference: &ReferenceElement,
    weighted: bool,
) -> CsrMatrix {
    let nb = reference.trace_dim();
    let mut triplets = Vec::new();
    for c in 0..mesh.n_cells() {
        let weight = if weighted {
            mesh.cell_area(c) / mesh.cell_perimeter(c)
        } else {
            1.0
        };
        let mut em = DenseMatrix::zeros(reference.dim(), reference.dim());
        for e in 0..3 {
            let (_, len) = mesh.local_edge_normal(c, e);
            em.add_assign(&reference.edge_mass(e, len));
        }
        let gather = dofs.cell_dofs(c);
        for a in 0..nb {
            let Some(i) = gather[a] else { continue };
            for b in 0..nb {
                if let Some(j) = gather[b] {
                    triplets.push((i, j, weight * em[(a, b)]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(dofs.n_dofs(), dofs.n_dofs(), triplets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, sym_eig};
    use crate::mesh::{build_figure1_coarse, MeshHierarchy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero(_: Point2) -> f64 {
        0.0
    }

    fn one(_: Point2) -> f64 {
        1.0
    }

    #[test]
    fn figure1_dof_counts() {
        let m = build_figure1_coarse();
        assert_eq!(SkeletonDofMap::new(&m, 1).n_dofs(), 1);
        assert_eq!(SkeletonDofMap::new(&m, 2).n_dofs(), 9);
        let h = MeshHierarchy::build(m, 3);
        for mesh in h.levels() {
            let interior_v = mesh.boundary_vertices().iter().filter(|b| !**b).count();
            let interior_f = mesh.n_faces() - mesh.n_boundary_faces();
            for p in 1..=3 {
                assert_eq!(
                    SkeletonDofMap::new(mesh, p).n_dofs(),
                    interior_v + (p - 1) * interior_f
                );
            }
        }
    }

    #[test]
    fn dof_map_is_continuous_across_faces() {
        // Neighbouring cells refer to the same unknown at shared nodes: check
        // through node coordinates.
        let h = MeshHierarchy::build(build_figure1_coarse(), 2);
        let mesh = h.level(2);
        let reference = ReferenceElement::new(3).unwrap();
        let dofs = SkeletonDofMap::new(mesh, 3);
        for c in 0..mesh.n_cells() {
            let map = mesh.cell_map(c);
            for (b, d) in dofs.cell_dofs(c).iter().enumerate() {
                let x = map.apply(reference.basis.nodes()[b]);
                match d {
                    Some(i) => assert!(dofs.coords()[*i].distance(x) < 1e-14),
                    None => {
                        let on_boundary =
                            x.x.abs() < 1e-14 || x.y.abs() < 1e-14 || (x.x - 1.0).abs() < 1e-14 || (x.y - 1.0).abs() < 1e-14;
                        assert!(on_boundary);
                    }
                }
            }
        }
    }

    fn reference_cell_system(p: usize, tau: f64) -> (CellLocalSystem, AffineMap) {
        let map = AffineMap {
            origin: Point2::new(0.1, -0.2),
            jacobian: [[0.5, 0.1], [0.05, 0.4]],
        };
        let reference = ReferenceElement::new(p).unwrap();
        (CellLocalSystem::new(&map, &reference, tau).unwrap(), map)
    }

    #[test]
    fn constant_and_linear_patch_tests() {
        for p in 1..=3 {
            let reference = ReferenceElement::new(p).unwrap();
            let (sys, map) = reference_cell_system(p, 3.0);
            let nb = reference.trace_dim();
            let nodes: Vec<Point2> = reference.basis.nodes().iter().map(|&x| map.apply(x)).collect();

            let (u, q) = sys.solve_trace(&vec![2.5; nb]);
            assert!(u.iter().all(|v| (v - 2.5).abs() < 1e-12), "p={p} {u:?}");
            assert!(q.iter().all(|v| v.abs() < 1e-12));

            let w = |x: Point2| 1.0 + 2.0 * x.x - 3.0 * x.y;
            let trace: Vec<f64> = nodes[..nb].iter().map(|&x| w(x)).collect();
            let (u, q) = sys.solve_trace(&trace);
            for (k, x) in nodes.iter().enumerate() {
                assert!((u[k] - w(*x)).abs() < 1e-12);
            }
            let n = reference.dim();
            assert!(q[..n].iter().all(|v| (v + 2.0).abs() < 1e-12));
            assert!(q[n..].iter().all(|v| (v - 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn schur_is_symmetric_and_annihilates_nothing_but_zero_modes() {
        for p in 1..=3 {
            let (sys, _) = reference_cell_system(p, 1.0);
            assert!(sys.schur_asymmetry() < 1e-12, "p={p}: {}", sys.schur_asymmetry());
            // constant traces reproduce exactly, so they have zero energy
            let ones = vec![1.0; 3 * p];
            let sc = sys.schur().matvec(&ones);
            assert!(sc.iter().all(|v| v.abs() < 1e-11));
            let eig = sym_eig(sys.schur()).unwrap();
            assert!(eig[0].abs() < 1e-11);
            assert!(eig[1] > 1e-6);
        }
    }

    #[test]
    fn maps_agree_with_raw_solve() {
        let (sys, _) = reference_cell_system(2, 2.0);
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let moments: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut rhs = vec![0.0; 3 * n];
        rhs[2 * n..].copy_from_slice(&moments);
        let raw = sys.solve_raw(&rhs).unwrap();
        let (u, q) = sys.solve_load(&moments);
        assert!(max_abs_diff(&raw[2 * n..], &u) < 1e-13);
        assert!(max_abs_diff(&raw[..2 * n], &q) < 1e-13);
    }

    #[test]
    fn nonpositive_penalty_is_rejected() {
        let m = build_figure1_coarse();
        let reference = ReferenceElement::new(1).unwrap();
        assert!(matches!(
            LevelLocals::build(&m, &reference, 0.0),
            Err(EdgError::InvalidPenalty(_))
        ));
    }

    #[test]
    fn zero_forcing_gives_zero_load() {
        let m = build_figure1_coarse().refine().0;
        let reference = ReferenceElement::new(2).unwrap();
        let level = CondensedLevel::build(&m, &reference, PenaltyLaw::inv_h(), &zero).unwrap();
        assert!(level.rhs.iter().all(|&v| v == 0.0));
        let sol = level
            .reconstruct(&m, &reference, &vec![0.0; level.n_dofs()], &zero)
            .unwrap();
        assert!(sol.u.iter().chain(&sol.q).all(|&v| v == 0.0));
    }

    #[test]
    fn coarse_p1_system_is_positive_scalar() {
        let m = build_figure1_coarse();
        let reference = ReferenceElement::new(1).unwrap();
        let level = CondensedLevel::build(&m, &reference, PenaltyLaw::inv_h(), &one).unwrap();
        assert_eq!(level.matrix.rows(), 1);
        assert!(level.matrix.get(0, 0) > 0.0);
        assert!(level.rhs[0] > 0.0);
        assert!((level.tau - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn condensed_matrix_is_spd() {
        let h = MeshHierarchy::build(build_figure1_coarse(), 2);
        for p in 1..=3 {
            let reference = ReferenceElement::new(p).unwrap();
            for law in [PenaltyLaw::inv_h(), PenaltyLaw::constant()] {
                let level = CondensedLevel::build(h.level(1), &reference, law, &one).unwrap();
                assert!(level.matrix.relative_asymmetry() < 1e-12);
                let eig = sym_eig(&level.matrix.to_dense()).unwrap();
                assert!(eig[0] > 0.0, "p={p}: {}", eig[0]);
            }
        }
    }

    #[test]
    fn geometry_cache_is_small_under_red_refinement() {
        let h = MeshHierarchy::build(build_figure1_coarse(), 4);
        let reference = ReferenceElement::new(1).unwrap();
        let locals = LevelLocals::build(h.level(4), &reference, 1.0).unwrap();
        assert!(locals.n_distinct() <= 4, "{}", locals.n_distinct());
    }

    #[test]
    fn interpolant_of_polynomial_has_zero_error() {
        // Build a FieldSolution directly from nodal interpolation.
        let m = build_figure1_coarse().refine().0;
        let p = 2;
        let reference = ReferenceElement::new(p).unwrap();
        let u = |x: Point2| x.x * x.x - x.x * x.y + 0.5;
        let grad = |x: Point2| [-(2.0 * x.x - x.y), x.x];
        let mut us = Vec::new();
        let mut qs = Vec::new();
        for c in 0..m.n_cells() {
            let map = m.cell_map(c);
            let nodes: Vec<Point2> = reference.basis.nodes().iter().map(|&x| map.apply(x)).collect();
            us.extend(nodes.iter().map(|&x| u(x)));
            qs.extend(nodes.iter().map(|&x| grad(x)[0]));
            qs.extend(nodes.iter().map(|&x| grad(x)[1]));
        }
        let sol = FieldSolution {
            level: 1,
            degree: p,
            lambda: Vec::new(),
            u: us,
            q: qs,
        };
        let (eu, eq) = l2_errors(&sol, &m, &reference, &u, &grad);
        assert!(eu < 1e-14 && eq < 1e-14, "{eu} {eq}");
    }

    #[test]
    fn eoc_formula() {
        assert!((eoc(0.04, 0.01) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn skeleton_norm_examples() {
        let m = build_figure1_coarse();
        let reference = ReferenceElement::new(1).unwrap();
        let dofs = SkeletonDofMap::new(&m, 1);
        let norms = weighted_skeleton_norm(&dofs, &m, &reference, &[0.0]).unwrap();
        assert_eq!(norms.weighted, 0.0);

        // The hat function at the centre is linear along each of the two
        // interior edges of every cell: ∫_e hat² = |e| / 3.
        let mut expected = 0.0;
        for c in 0..m.n_cells() {
            let centre = dofs.coords()[0];
            let verts = m.cell_vertices(c);
            let mut edge_sum = 0.0;
            for e in 0..3 {
                let (a, b) = (verts[e], verts[(e + 1) % 3]);
                if a.distance(centre) < 1e-15 || b.distance(centre) < 1e-15 {
                    edge_sum += a.distance(b) / 3.0;
                }
            }
            expected += m.cell_area(c) / m.cell_perimeter(c) * edge_sum;
        }
        let norms = weighted_skeleton_norm(&dofs, &m, &reference, &[1.0]).unwrap();
        assert!((norms.weighted - expected.sqrt()).abs() < 1e-15);
        let doubled = weighted_skeleton_norm(&dofs, &m, &reference, &[2.0]).unwrap();
        assert!((doubled.weighted - 2.0 * norms.weighted).abs() < 1e-15);
        assert!((doubled.broken - 2.0 * norms.broken).abs() < 1e-15);

        let gram = skeleton_gram(&dofs, &m, &reference, true);
        assert!((gram.get(0, 0) - expected).abs() < 1e-15);
    }
}
