//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use edgmg::basis::{segment_rule, triangle_rule, CellBasis};
use edgmg::linalg::{DenseMatrix, LuFactorization};
use edgmg::{Point2, TriMesh};

/// Node identity by rounded coordinates, independent of any library
/// numbering.
pub fn coord_key(x: Point2) -> (i64, i64) {
    ((x.x * 1e9).round() as i64, (x.y * 1e9).round() as i64)
}

pub fn on_unit_square_boundary(x: Point2) -> bool {
    let eps = 1e-12;
    x.x < eps || x.y < eps || x.x > 1.0 - eps || x.y > 1.0 - eps
}

fn on_reference_boundary(xi: [f64; 2]) -> bool {
    let eps = 1e-12;
    xi[0] < eps || xi[1] < eps || xi[0] + xi[1] > 1.0 - eps
}

/// Dense solution of the full mixed system: per cell `[q_x, q_y, u]`
/// coefficients in the nodal basis, plus skeleton values keyed by node
/// coordinates.
pub struct MixedSolution {
    pub n: usize,
    pub cells: Vec<Vec<f64>>,
    pub skeleton: HashMap<(i64, i64), f64>,
}

/// Assembles local equations and global flux balance directly from
/// quadrature and solves everything at once, without static condensation.
pub fn uncondensed_solve(mesh: &TriMesh, p: usize, tau: f64, f: &dyn Fn(Point2) -> f64) -> MixedSolution {
    let basis = CellBasis::new(p).unwrap();
    let n = basis.dim();
    let nodes = basis.nodes().to_vec();
    let cell_rule = triangle_rule(2 * p + 3);
    let edge_rule = segment_rule(2 * p + 3);

    // skeleton numbering by first appearance in cell traversal
    let mut skeleton_index: HashMap<(i64, i64), usize> = HashMap::new();
    let mut cell_trace: Vec<Vec<(usize, usize)>> = Vec::new();
    for c in 0..mesh.n_cells() {
        let map = mesh.cell_map(c);
        let mut slots = Vec::new();
        for (i, &xi) in nodes.iter().enumerate() {
            if !on_reference_boundary(xi) {
                continue;
            }
            let x = map.apply(xi);
            if on_unit_square_boundary(x) {
                continue;
            }
            let next = skeleton_index.len();
            let g = *skeleton_index.entry(coord_key(x)).or_insert(next);
            slots.push((i, g));
        }
        cell_trace.push(slots);
    }
    let n_skel = skeleton_index.len();
    let block = 3 * n;
    let dim = mesh.n_cells() * block + n_skel;
    let mut a = DenseMatrix::zeros(dim, dim);
    let mut rhs = vec![0.0; dim];
    let lam = |g: usize| mesh.n_cells() * block + g;

    for c in 0..mesh.n_cells() {
        let map = mesh.cell_map(c);
        let det = map.det().abs();
        let base = c * block;
        let qx = |j: usize| base + j;
        let qy = |j: usize| base + n + j;
        let uu = |j: usize| base + 2 * n + j;

        for (xi, w) in cell_rule.iter() {
            let phi = basis.values(*xi);
            let grad: Vec<[f64; 2]> = basis.gradients(*xi).into_iter().map(|g| map.map_gradient(g)).collect();
            let wx = w * det;
            let fx = f(map.apply(*xi));
            for i in 0..n {
                for j in 0..n {
                    let m = wx * phi[i] * phi[j];
                    // (q, p) - (u, div p)
                    a[(qx(i), qx(j))] += m;
                    a[(qy(i), qy(j))] += m;
                    a[(qx(i), uu(j))] -= wx * phi[j] * grad[i][0];
                    a[(qy(i), uu(j))] -= wx * phi[j] * grad[i][1];
                    // -(q, grad v)
                    a[(uu(i), qx(j))] -= wx * phi[j] * grad[i][0];
                    a[(uu(i), qy(j))] -= wx * phi[j] * grad[i][1];
                }
                rhs[uu(i)] += wx * fx * phi[i];
            }
        }

        let verts = mesh.cell_vertices(c);
        let refv = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for e in 0..3 {
            let (pa, pb) = (verts[e], verts[(e + 1) % 3]);
            let len = pa.distance(pb);
            let nu = [(pb.y - pa.y) / len, -(pb.x - pa.x) / len];
            let (ra, rb) = (refv[e], refv[(e + 1) % 3]);
            for (&t, w) in edge_rule.iter() {
                let xi = [ra[0] + t * (rb[0] - ra[0]), ra[1] + t * (rb[1] - ra[1])];
                let phi = basis.values(xi);
                let ws = w * len;
                for i in 0..n {
                    for j in 0..n {
                        let m = ws * phi[i] * phi[j];
                        // <q.nu + tau u, v>
                        a[(uu(i), qx(j))] += m * nu[0];
                        a[(uu(i), qy(j))] += m * nu[1];
                        a[(uu(i), uu(j))] += tau * m;
                    }
                    for &(b, g) in &cell_trace[c] {
                        let m = ws * phi[i] * phi[b];
                        // +<lambda, p.nu> and -tau <lambda, v>
                        a[(qx(i), lam(g))] += m * nu[0];
                        a[(qy(i), lam(g))] += m * nu[1];
                        a[(uu(i), lam(g))] -= tau * m;
                    }
                }
                // <q.nu + tau (u - lambda), mu>
                for &(b, g) in &cell_trace[c] {
                    for j in 0..n {
                        let m = ws * phi[b] * phi[j];
                        a[(lam(g), qx(j))] += m * nu[0];
                        a[(lam(g), qy(j))] += m * nu[1];
                        a[(lam(g), uu(j))] += tau * m;
                    }
                    for &(b2, g2) in &cell_trace[c] {
                        a[(lam(g), lam(g2))] -= tau * ws * phi[b] * phi[b2];
                    }
                }
            }
        }
    }

    let x = LuFactorization::new(&a).unwrap().solve(&rhs).unwrap();
    let cells = (0..mesh.n_cells()).map(|c| x[c * block..(c + 1) * block].to_vec()).collect();
    let skeleton = skeleton_index.into_iter().map(|(k, g)| (k, x[lam(g)])).collect();
    MixedSolution { n, cells, skeleton }
}

/// Continuous piecewise-linear function on `mesh` given by vertex values.
pub struct P1Function<'a> {
    pub mesh: &'a TriMesh,
    pub values: Vec<f64>,
}

impl P1Function<'_> {
    /// Value at a point known to lie in `cell`.
    pub fn eval_in(&self, cell: usize, x: Point2) -> f64 {
        let xi = self.mesh.cell_map(cell).inverse_apply(x);
        let v = self.mesh.cells()[cell];
        let bary = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
        (0..3).map(|k| bary[k] * self.values[v[k]]).sum()
    }
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}
