//! Diagonal material matrices.
//!
//! Edge matrices sum `value * (dual-facet part in the cell) / edge length`
//! over the up to four cells around an edge; facet matrices sum
//! `value * (dual-edge part in the cell) / facet area` over the two cells
//! beside a facet.

use nalgebra::DVector;

use super::bh::MagneticLaw;
use super::mesh::FitMesh;
use super::FitError;

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialMap {
    pub sigma: Vec<f64>,
    pub law: Vec<MagneticLaw>,
}

impl MaterialMap {
    pub fn uniform(mesh: &FitMesh, mu: f64) -> Self {
        MaterialMap { sigma: vec![0.0; mesh.n_cells()], law: vec![MagneticLaw::Linear { mu }; mesh.n_cells()] }
    }

    pub fn is_conducting(&self, cell: usize) -> bool {
        self.sigma[cell] > 0.0
    }

    pub fn is_linear(&self) -> bool {
        self.law.iter().all(|l| l.is_linear())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialMatrices {
    pub m_sigma: DVector<f64>,
    pub m_mu: DVector<f64>,
    pub m_nu: DVector<f64>,
    /// Zero on facets that touch a non-conducting cell.
    pub m_rho: DVector<f64>,
}

fn edge_average(mesh: &FitMesh, value: impl Fn(usize) -> f64) -> DVector<f64> {
    DVector::from_iterator(
        mesh.n_edges(),
        (0..mesh.n_edges()).map(|e| {
            let l = mesh.edge_length(e);
            mesh.edge_cells(e).iter().map(|&(c, a)| value(c) * a).sum::<f64>() / l
        }),
    )
}

pub fn build_materials(mesh: &FitMesh, map: &MaterialMap) -> Result<MaterialMatrices, FitError> {
    if map.sigma.len() != mesh.n_cells() || map.law.len() != mesh.n_cells() {
        return Err(FitError::InvalidMaterial("material map does not cover the mesh".into()));
    }
    if map.sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(FitError::InvalidMaterial("conductivity must be finite and non-negative".into()));
    }
    if map.law.iter().any(|l| !(l.mu0() > 0.0 && l.mu0().is_finite())) {
        return Err(FitError::InvalidMaterial("permeability must be positive".into()));
    }
    let m_sigma = edge_average(mesh, |c| map.sigma[c]);
    let m_mu = edge_average(mesh, |c| map.law[c].mu0());
    let mut m_nu = DVector::zeros(mesh.n_facets());
    let mut m_rho = DVector::zeros(mesh.n_facets());
    for f in 0..mesh.n_facets() {
        let a = mesh.facet_area(f);
        let cells = mesh.facet_cells(f);
        m_nu[f] = cells.iter().map(|&(c, l)| l / map.law[c].mu0()).sum::<f64>() / a;
        if cells.iter().all(|&(c, _)| map.is_conducting(c)) {
            m_rho[f] = cells.iter().map(|&(c, l)| l / map.sigma[c]).sum::<f64>() / a;
        }
    }
    Ok(MaterialMatrices { m_sigma, m_mu, m_nu, m_rho })
}

/// Edge flux `b_e(h_e)` and its first two derivatives for edge voltages `h`.
#[derive(Debug, Clone)]
pub struct EdgeLaw {
    /// Per edge: `(law, dual-facet part, edge length)` for each adjacent cell.
    parts: Vec<Vec<(MagneticLaw, f64, f64)>>,
}

impl EdgeLaw {
    pub fn new(mesh: &FitMesh, map: &MaterialMap) -> Self {
        let parts = (0..mesh.n_edges())
            .map(|e| {
                let l = mesh.edge_length(e);
                mesh.edge_cells(e).iter().map(|&(c, a)| (map.law[c], a, l)).collect()
            })
            .collect();
        EdgeLaw { parts }
    }

    /// `(b, db/dh, d²b/dh²)` on edge `e`.
    pub fn eval(&self, e: usize, h: f64) -> (f64, f64, f64) {
        let mut out = (0.0, 0.0, 0.0);
        for &(law, a, l) in &self.parts[e] {
            let hf = h / l;
            out.0 += a * law.b(hf);
            out.1 += a * law.db(hf) / l;
            out.2 += a * law.d2b(hf) / (l * l);
        }
        out
    }
}

/// Facet magnetic voltage `h_f(b_f)` and its derivative for facet fluxes `b`.
#[derive(Debug, Clone)]
pub struct FacetLaw {
    parts: Vec<Vec<(MagneticLaw, f64, f64)>>,
}

impl FacetLaw {
    pub fn new(mesh: &FitMesh, map: &MaterialMap) -> Self {
        let parts = (0..mesh.n_facets())
            .map(|f| {
                let a = mesh.facet_area(f);
                mesh.facet_cells(f).iter().map(|&(c, l)| (map.law[c], l, a)).collect()
            })
            .collect();
        FacetLaw { parts }
    }

    /// `(h, dh/db)` on facet `f`.
    pub fn eval(&self, f: usize, b: f64) -> (f64, f64) {
        let mut out = (0.0, 0.0);
        for &(law, l, a) in &self.parts[f] {
            let bf = b / a;
            let hf = law.h(bf);
            out.0 += l * hf;
            out.1 += l / (a * law.db(hf));
        }
        out
    }
}

/// Differential material matrix at the given field: `M_{μ,d}` for an edge
/// vector `h`, or `M_{ν,d}` for a facet vector `b`.
pub fn differential_material(
    mesh: &FitMesh,
    map: &MaterialMap,
    field: &DVector<f64>,
) -> Result<DVector<f64>, FitError> {
    if field.iter().any(|v| !v.is_finite()) {
        return Err(FitError::InvalidMaterial("non-finite field entry".into()));
    }
    if field.len() == mesh.n_edges() {
        let law = EdgeLaw::new(mesh, map);
        Ok(DVector::from_iterator(field.len(), (0..field.len()).map(|e| law.eval(e, field[e]).1)))
    } else if field.len() == mesh.n_facets() {
        let law = FacetLaw::new(mesh, map);
        Ok(DVector::from_iterator(field.len(), (0..field.len()).map(|f| law.eval(f, field[f]).1)))
    } else {
        Err(FitError::InvalidMaterial(format!("field length {} matches neither edges nor facets", field.len())))
    }
}

#[cfg(test)]
mod tests {
    use super::super::bh::{BhCurve, MU0};
    use super::super::mesh::Axis;
    use super::*;

    #[test]
    fn homogeneous_interior_entry() {
        let m = FitMesh::new([2, 2, 2], [0.1, 0.2, 0.3]).unwrap();
        let mats = build_materials(&m, &MaterialMap::uniform(&m, MU0)).unwrap();
        let e = m.edge(Axis::X, [0, 1, 1]);
        assert!((mats.m_mu[e] - MU0 * 0.2 * 0.3 / 0.1).abs() < 1e-20);
        assert_eq!(mats.m_sigma.amax(), 0.0);
        assert_eq!(mats.m_rho.amax(), 0.0);
    }

    #[test]
    fn half_spaces_average() {
        let m = FitMesh::new([1, 1, 2], [1.0; 3]).unwrap();
        let mut map = MaterialMap::uniform(&m, 1.0);
        map.law[1] = MagneticLaw::Linear { mu: 3.0 };
        let mats = build_materials(&m, &map).unwrap();
        let e = m.edge(Axis::X, [0, 0, 1]);
        assert!((mats.m_mu[e] - (0.25 * 1.0 + 0.25 * 3.0)).abs() < 1e-15);
        let f = m.facet(Axis::Z, [0, 0, 1]);
        assert!((mats.m_nu[f] - (0.5 / 1.0 + 0.5 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn differential_matrices() {
        let m = FitMesh::cube(2, 0.1).unwrap();
        let mut map = MaterialMap::uniform(&m, MU0);
        let lin = build_materials(&m, &map).unwrap();
        let h = DVector::from_fn(m.n_edges(), |e, _| (e as f64).sin());
        assert_eq!(differential_material(&m, &map, &h).unwrap(), lin.m_mu);
        let curve = BhCurve { mu_r: 500.0, h0: 50.0, mu_sat: 1.0 };
        map.law = vec![MagneticLaw::Saturating(curve); m.n_cells()];
        let zero = differential_material(&m, &map, &DVector::zeros(m.n_edges())).unwrap();
        let chord0 = build_materials(&m, &map).unwrap().m_mu;
        assert!((zero - chord0).amax() < 1e-20);
    }
}
