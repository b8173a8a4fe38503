//! Lagrange bases on the reference triangle and segment, and the quadrature
//! rules used by assembly.
//!
//! The reference triangle has vertices `(0,0)`, `(1,0)`, `(0,1)`. Cell nodes
//! are equispaced and ordered as: the three vertices, then the `p - 1` nodes
//! of each edge (edge `e` runs from vertex `e` to vertex `(e + 1) % 3`), then
//! the interior nodes. The first `3p` nodes are therefore exactly the nodes on
//! the cell boundary.

use thiserror::Error;

use crate::linalg::{DenseMatrix, LuFactorization};

pub const MAX_DEGREE: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("polynomial degree {0} is not supported (1..={MAX_DEGREE})")]
    UnsupportedDegree(usize),
}

fn check_degree(p: usize) -> Result<(), BasisError> {
    if (1..=MAX_DEGREE).contains(&p) {
        Ok(())
    } else {
        Err(BasisError::UnsupportedDegree(p))
    }
}

/// Reference-element quadrature rule. `P` is `f64` on the unit segment and
/// `[f64; 2]` on the reference triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<P> {
    pub points: Vec<P>,
    pub weights: Vec<f64>,
}

impl<P> QuadratureRule<P> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&P, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// `n`-point Gauss-Legendre rule on `[0, 1]`, exact for degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> QuadratureRule<f64> {
    assert!(n >= 1);
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1], ascending order
        points[i] = 0.5 * (1.0 - x);
        points[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    QuadratureRule { points, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss rule on `[0, 1]` exact for polynomials of the given degree.
pub fn segment_rule(exact_degree: usize) -> QuadratureRule<f64> {
    gauss_legendre(exact_degree / 2 + 1)
}

/// Collapsed (Duffy) tensor Gauss rule on the reference triangle exact for
/// polynomials of total degree `exact_degree`. All weights are positive and
/// all points are interior.
pub fn triangle_rule(exact_degree: usize) -> QuadratureRule<[f64; 2]> {
    // x = s, y = t (1 - s): Jacobian (1 - s) raises the degree in s by one.
    let gs = gauss_legendre(exact_degree.div_ceil(2) + 1);
    let gt = gauss_legendre(exact_degree / 2 + 1);
    let mut points = Vec::with_capacity(gs.len() * gt.len());
    let mut weights = Vec::with_capacity(gs.len() * gt.len());
    for (&s, ws) in gs.iter() {
        for (&t, wt) in gt.iter() {
            points.push([s, t * (1.0 - s)]);
            weights.push(ws * wt * (1.0 - s));
        }
    }
    QuadratureRule { points, weights }
}

/// Cell rule for degree-`p` assembly: exact for total degree `2p + 2`.
pub fn cell_quadrature(p: usize) -> Result<QuadratureRule<[f64; 2]>, BasisError> {
    check_degree(p)?;
    Ok(triangle_rule(2 * p + 2))
}

/// Face rule for degree-`p` assembly: exact for degree `2p + 1`.
pub fn face_quadrature(p: usize) -> Result<QuadratureRule<f64>, BasisError> {
    check_degree(p)?;
    Ok(segment_rule(2 * p + 1))
}

pub fn cell_dim(p: usize) -> usize {
    (p + 1) * (p + 2) / 2
}

/// Position of the reference triangle vertex `v` (0, 1 or 2).
pub fn reference_vertex(v: usize) -> [f64; 2] {
    match v {
        0 => [0.0, 0.0],
        1 => [1.0, 0.0],
        2 => [0.0, 1.0],
        _ => panic!("triangle has three vertices, got {v}"),
    }
}

/// Point at parameter `t` along reference edge `e`.
pub fn reference_edge_point(e: usize, t: f64) -> [f64; 2] {
    let a = reference_vertex(e);
    let b = reference_vertex((e + 1) % 3);
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Nodal `P_p` Lagrange basis on the reference triangle.
#[derive(Debug, Clone)]
pub struct CellBasis {
    degree: usize,
    nodes: Vec<[f64; 2]>,
    exponents: Vec<(i32, i32)>,
    // coeffs[(m, i)]: coefficient of monomial m in basis function i
    coeffs: DenseMatrix,
}

impl CellBasis {
    pub fn new(p: usize) -> Result<Self, BasisError> {
        check_degree(p)?;
        let nodes = Self::lagrange_nodes(p);
        let exponents: Vec<(i32, i32)> = (0..=p as i32)
            .flat_map(|d| (0..=d).map(move |j| (d - j, j)))
            .collect();
        let n = nodes.len();
        let mut vandermonde = DenseMatrix::zeros(n, n);
        for (i, x) in nodes.iter().enumerate() {
            for (m, &(a, b)) in exponents.iter().enumerate() {
                vandermonde[(i, m)] = x[0].powi(a) * x[1].powi(b);
            }
        }
        let lu = LuFactorization::new(&vandermonde).expect("Lagrange nodes are unisolvent");
        let coeffs = lu
            .solve_matrix(&DenseMatrix::identity(n))
            .expect("square system");
        Ok(Self {
            degree: p,
            nodes,
            exponents,
            coeffs,
        })
    }

    fn lagrange_nodes(p: usize) -> Vec<[f64; 2]> {
        let pf = p as f64;
        let mut nodes: Vec<[f64; 2]> = (0..3).map(reference_vertex).collect();
        for e in 0..3 {
            for s in 1..p {
                nodes.push(reference_edge_point(e, s as f64 / pf));
            }
        }
        for k in 1..p {
            for j in 1..p {
                if j + k < p {
                    nodes.push([j as f64 / pf, k as f64 / pf]);
                }
            }
        }
        nodes
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Number of nodes on the cell boundary (`3p`); they come first.
    pub fn boundary_dim(&self) -> usize {
        3 * self.degree
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// Local index of the node at position `s` (0..=p) along edge `e`,
    /// counted from the edge's first vertex.
    pub fn edge_node(&self, e: usize, s: usize) -> usize {
        let p = self.degree;
        match s {
            0 => e,
            s if s == p => (e + 1) % 3,
            s => 3 + e * (p - 1) + (s - 1),
        }
    }

    pub fn values(&self, x: [f64; 2]) -> Vec<f64> {
        let mono: Vec<f64> = self
            .exponents
            .iter()
            .map(|&(a, b)| x[0].powi(a) * x[1].powi(b))
            .collect();
        self.coeffs.matvec_transpose(&mono)
    }

    /// Reference gradients of every basis function.
    pub fn gradients(&self, x: [f64; 2]) -> Vec<[f64; 2]> {
        let n = self.dim();
        let mut dx = vec![0.0; n];
        let mut dy = vec![0.0; n];
        for (m, &(a, b)) in self.exponents.iter().enumerate() {
            let gx = if a > 0 {
                a as f64 * x[0].powi(a - 1) * x[1].powi(b)
            } else {
                0.0
            };
            let gy = if b > 0 {
                b as f64 * x[0].powi(a) * x[1].powi(b - 1)
            } else {
                0.0
            };
            let row = self.coeffs.row(m);
            for i in 0..n {
                dx[i] += gx * row[i];
                dy[i] += gy * row[i];
            }
        }
        dx.into_iter().zip(dy).map(|(a, b)| [a, b]).collect()
    }

    /// Value and gradient tables at a list of points.
    pub fn tabulate(&self, points: &[[f64; 2]]) -> (Vec<Vec<f64>>, Vec<Vec<[f64; 2]>>) {
        let values = points.iter().map(|&x| self.values(x)).collect();
        let grads = points.iter().map(|&x| self.gradients(x)).collect();
        (values, grads)
    }

    /// Interpolation coefficients of `f` (node values).
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }
}

/// Nodal `P_p` Lagrange basis on `[0, 1]` with equispaced nodes `k / p`.
#[derive(Debug, Clone)]
pub struct FaceBasis {
    degree: usize,
    nodes: Vec<f64>,
}

impl FaceBasis {
    pub fn new(p: usize) -> Result<Self, BasisError> {
        check_degree(p)?;
        let nodes = (0..=p).map(|k| k as f64 / p as f64).collect();
        Ok(Self { degree: p, nodes })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self, t: f64) -> Vec<f64> {
        (0..self.nodes.len())
            .map(|i| {
                self.nodes
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &tj)| (t - tj) / (self.nodes[i] - tj))
                    .product()
            })
            .collect()
    }
}
