//! Finite integration technique on structured hexahedral grids.

pub mod bh;
pub mod materials;
pub mod mesh;
pub mod operators;
pub mod spec;
pub mod windings;

use thiserror::Error;

pub use bh::{BhCurve, MagneticLaw, MU0, SOFT_IRON};
pub use materials::{build_materials, differential_material, MaterialMap, MaterialMatrices};
pub use mesh::{Axis, CellBox, FitMesh};
pub use operators::{build_operators, DiscreteOperators};
pub use spec::{parse_field_spec, BhSpec, FieldSpec, Formulation};
pub use windings::{build_windings, CoilFrame, WindingFunctions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("coil {0} does not fit inside the mesh")]
    CoilOutside(usize),
    #[error("coil {0} does not form a closed frame")]
    CoilNotClosed(usize),
    #[error("coil {0} overlaps the conducting region")]
    CoilOverlapsConductor(usize),
    #[error("coils {0} and {1} overlap")]
    CoilsOverlap(usize, usize),
    #[error("field spec line {line}: {msg}")]
    Spec { line: usize, msg: String },
    #[error("conductor box does not fit inside the mesh")]
    BoxOutside,
}

/// Mesh, operators, materials and windings of one field spec.
#[derive(Debug, Clone)]
pub struct FitModel {
    pub spec: FieldSpec,
    pub mesh: FitMesh,
    pub ops: DiscreteOperators,
    pub map: MaterialMap,
    pub mats: MaterialMatrices,
    pub windings: WindingFunctions,
    /// Sorted conducting cells.
    pub conductor: Vec<usize>,
}

impl FitModel {
    pub fn build(spec: &FieldSpec) -> Result<Self, FitError> {
        let mesh = FitMesh::new(spec.n, spec.d)?;
        let mut conductor = Vec::new();
        for b in &spec.conductor {
            if !mesh.box_fits(b) {
                return Err(FitError::BoxOutside);
            }
            conductor.extend(mesh.cells_in(b));
        }
        conductor.sort_unstable();
        conductor.dedup();

        let mut map = MaterialMap::uniform(&mesh, MU0);
        let core_law = match spec.bh {
            BhSpec::Linear => MagneticLaw::Linear { mu: MU0 * spec.mu_r },
            BhSpec::Brauer(c) => MagneticLaw::Saturating(c),
        };
        for &c in &conductor {
            map.sigma[c] = spec.sigma;
            map.law[c] = core_law;
        }
        let mats = build_materials(&mesh, &map)?;
        let pinned = conductor.iter().flat_map(|&c| mesh.cell_nodes(c)).min().unwrap_or(0);
        let ops = build_operators(&mesh, pinned);
        let windings = build_windings(&mesh, &ops.c, &spec.coils, &conductor)?;
        Ok(FitModel { spec: spec.clone(), mesh, ops, map, mats, windings, conductor })
    }

    pub fn from_text(text: &str) -> Result<Self, FitError> {
        Self::build(&parse_field_spec(text)?)
    }

    pub fn n_coils(&self) -> usize {
        self.spec.coils.len()
    }

    pub fn is_linear(&self) -> bool {
        self.map.is_linear()
    }
}
