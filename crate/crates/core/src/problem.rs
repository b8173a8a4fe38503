//! Full discretization hierarchy: meshes, condensed systems, transfers and
//! the multigrid operator, built once per configuration.

use crate::edg::{CondensedLevel, PenaltyLaw, ReferenceElement};
use crate::mesh::{MeshHierarchy, Point2, TriMesh};
use crate::multigrid::{MgHierarchy, SmootherConfig};
use crate::transfer::TransferOperator;
use crate::Error;

pub struct EdgProblem {
    pub hierarchy: MeshHierarchy,
    pub reference: ReferenceElement,
    pub levels: Vec<CondensedLevel>,
    pub mg: MgHierarchy,
}

impl EdgProblem {
    /// `coarse` plus `max_level` refinements, all assembled with load `f`.
    pub fn build(
        coarse: TriMesh,
        max_level: usize,
        degree: usize,
        law: PenaltyLaw,
        smoother: SmootherConfig,
        f: &(dyn Fn(Point2) -> f64 + Sync),
    ) -> Result<Self, Error> {
        let hierarchy = MeshHierarchy::build(coarse, max_level);
        let reference = ReferenceElement::new(degree)?;
        let levels = hierarchy
            .levels()
            .iter()
            .map(|mesh| CondensedLevel::build(mesh, &reference, law, f))
            .collect::<Result<Vec<_>, _>>()?;
        let transfers = (1..levels.len())
            .map(|l| TransferOperator::build(&hierarchy, l, &levels[l - 1], &levels[l].dofs, &reference))
            .collect::<Result<Vec<_>, _>>()?;
        let mg = MgHierarchy::new(levels.iter().map(|l| l.matrix.clone()).collect(), transfers, smoother)?;
        Ok(Self {
            hierarchy,
            reference,
            levels,
            mg,
        })
    }

    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn loads(&self) -> Vec<Vec<f64>> {
        self.levels.iter().map(|l| l.rhs.clone()).collect()
    }
}
