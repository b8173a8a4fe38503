//! Coarse-to-fine skeleton injection and its transpose restriction.
//!
//! The injection is the composition of three maps: the continuous extension
//! of a coarse skeleton function into the conforming `P_p` space (face nodes
//! from the trace, cell-interior nodes from the local solver), the natural
//! embedding of that space into the fine one, and the trace on the fine
//! skeleton.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::edg::{CondensedLevel, ReferenceElement, SkeletonDofMap};
use crate::linalg::{CsrMatrix, DenseMatrix, LinalgError, LuFactorization};
use crate::mesh::MeshHierarchy;

/// Agreement tolerance for fine nodes reached from two coarse cells.
const EXTENSION_AGREEMENT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("continuous extension disagrees by {difference:e} at fine unknown {dof}")]
    InconsistentExtension { dof: usize, difference: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Cellwise `P_p` coefficients of the continuous extension of `λ`.
///
/// Boundary nodes take the trace values; interior nodes take the local
/// solution `Uλ` at the node. For `p < 3` there are no interior nodes and
/// this is the identity on node values.
pub fn continuous_extension(
    level: &CondensedLevel,
    reference: &ReferenceElement,
    n_cells: usize,
    lambda: &[f64],
) -> Vec<f64> {
    let n = reference.dim();
    let nb = reference.trace_dim();
    let mut out = Vec::with_capacity(n_cells * n);
    for c in 0..n_cells {
        let trace = level.dofs.gather(c, lambda);
        let u = level.locals.cell(c).trace_to_u().matvec(&trace);
        out.extend_from_slice(&trace);
        out.extend_from_slice(&u[nb..]);
    }
    out
}

/// Extension matrix of one coarse cell: cell node values from its `3p`
/// trace coefficients.
fn extension_matrix(level: &CondensedLevel, reference: &ReferenceElement, cell: usize) -> DenseMatrix {
    let n = reference.dim();
    let nb = reference.trace_dim();
    let u = level.locals.cell(cell).trace_to_u();
    let mut ext = DenseMatrix::zeros(n, nb);
    for b in 0..nb {
        ext[(b, b)] = 1.0;
    }
    for i in nb..n {
        for b in 0..nb {
            ext[(i, b)] = u[(i, b)];
        }
    }
    ext
}

#[derive(Debug, Clone)]
pub struct TransferOperator {
    fine_level: usize,
    /// `n_fine × n_coarse`
    injection: CsrMatrix,
    restriction: CsrMatrix,
}

impl TransferOperator {
    /// Assembles `I_ℓ` for `fine_level = ℓ`: column `j` holds the fine
    /// skeleton node values of the extension of the `j`-th coarse basis
    /// vector. Fine nodes on coarse faces are evaluated from the lowest-index
    /// coarse cell containing them; the other side must agree.
    pub fn build(
        hierarchy: &MeshHierarchy,
        fine_level: usize,
        coarse: &CondensedLevel,
        fine_dofs: &SkeletonDofMap,
        reference: &ReferenceElement,
    ) -> Result<Self, TransferError> {
        let coarse_mesh = hierarchy.level(fine_level - 1);
        let fine_mesh = hierarchy.level(fine_level);
        let nb = reference.trace_dim();
        let nodes = reference.basis.nodes();

        let mut rows: Vec<Option<(usize, BTreeMap<usize, f64>)>> = vec![None; fine_dofs.n_dofs()];
        for (c, children) in hierarchy.children(fine_level).iter().enumerate() {
            let ext = extension_matrix(coarse, reference, c);
            let coarse_map = coarse_mesh.cell_map(c);
            let coarse_dofs = coarse.dofs.cell_dofs(c);
            for &child in children {
                let child_map = fine_mesh.cell_map(child);
                for (b, fine_dof) in fine_dofs.cell_dofs(child).iter().enumerate().take(nb) {
                    let Some(d) = *fine_dof else { continue };
                    if matches!(&rows[d], Some((owner, _)) if *owner == c) {
                        continue;
                    }
                    let x = child_map.apply(nodes[b]);
                    let phi = reference.basis.values(coarse_map.inverse_apply(x));
                    let weights = ext.matvec_transpose(&phi);
                    let mut row = BTreeMap::new();
                    for (w, cd) in weights.iter().zip(coarse_dofs) {
                        if let Some(j) = *cd {
                            if w.abs() > 1e-14 {
                                *row.entry(j).or_insert(0.0) += w;
                            }
                        }
                    }
                    match &rows[d] {
                        None => rows[d] = Some((c, row)),
                        Some((_, existing)) => {
                            let difference = row_difference(existing, &row);
                            if difference > EXTENSION_AGREEMENT_TOL {
                                return Err(TransferError::InconsistentExtension { dof: d, difference });
                            }
                        }
                    }
                }
            }
        }

        let mut triplets = Vec::new();
        for (i, row) in rows.into_iter().enumerate() {
            if let Some((_, entries)) = row {
                triplets.extend(entries.into_iter().map(|(j, v)| (i, j, v)));
            }
        }
        let injection = CsrMatrix::from_triplets(fine_dofs.n_dofs(), coarse.n_dofs(), triplets);
        let restriction = injection.transpose();
        Ok(Self {
            fine_level,
            injection,
            restriction,
        })
    }

    pub fn fine_level(&self) -> usize {
        self.fine_level
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.injection
    }

    pub fn n_fine(&self) -> usize {
        self.injection.rows()
    }

    pub fn n_coarse(&self) -> usize {
        self.injection.cols()
    }

    /// `I λ`
    pub fn inject(&self, coarse: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.injection.spmv(coarse)
    }

    /// `Iᵀ r`, the restriction in the Euclidean coefficient product.
    pub fn restrict(&self, fine: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.restriction.spmv(fine)
    }
}

fn row_difference(a: &BTreeMap<usize, f64>, b: &BTreeMap<usize, f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, v) in a {
        worst = worst.max((v - b.get(j).copied().unwrap_or(0.0)).abs());
    }
    for (j, v) in b {
        if !a.contains_key(j) {
            worst = worst.max(v.abs());
        }
    }
    worst
}

/// Restriction defined through the weighted skeleton products,
/// `G_{ℓ-1} Π r = Iᵀ G_ℓ r`, with dense Gram solves. Diagnostic only; the
/// solver uses [`TransferOperator::restrict`].
pub struct WeightedRestriction {
    coarse_gram: LuFactorization,
    fine_gram: CsrMatrix,
}

impl WeightedRestriction {
    pub fn new(coarse_gram: &CsrMatrix, fine_gram: CsrMatrix) -> Result<Self, LinalgError> {
        Ok(Self {
            coarse_gram: LuFactorization::new(&coarse_gram.to_dense())?,
            fine_gram,
        })
    }

    pub fn apply(&self, op: &TransferOperator, fine: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let g = self.fine_gram.spmv(fine)?;
        self.coarse_gram.solve(&op.restrict(&g)?)
    }
}
