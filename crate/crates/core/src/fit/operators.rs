//! Topological FIT matrices. All entries are in {-1, 0, +1}.

use nalgebra::DMatrix;
use nalgebra_sparse::{convert::serial::convert_csr_dense, CooMatrix, CsrMatrix};

use super::mesh::{Axis, FitMesh};

/// Curl `C`: facets × edges, circulation right-handed about the facet normal.
pub fn curl(mesh: &FitMesh) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(mesh.n_facets(), mesh.n_edges());
    for f in 0..mesh.n_facets() {
        let (a, p) = mesh.facet_ijk(f);
        let (b, c) = a.others();
        let shift = |ax: Axis| {
            let mut q = p;
            q[ax.index()] += 1;
            q
        };
        coo.push(f, mesh.edge(b, p), 1.0);
        coo.push(f, mesh.edge(c, shift(b)), 1.0);
        coo.push(f, mesh.edge(b, shift(c)), -1.0);
        coo.push(f, mesh.edge(c, p), -1.0);
    }
    CsrMatrix::from(&coo)
}

/// Gradient `G`: edges × nodes, `+1` at the head node, `-1` at the tail.
pub fn gradient(mesh: &FitMesh) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(mesh.n_edges(), mesh.n_nodes());
    for e in 0..mesh.n_edges() {
        let (t, h) = mesh.edge_nodes(e);
        coo.push(e, t, -1.0);
        coo.push(e, h, 1.0);
    }
    CsrMatrix::from(&coo)
}

/// Primal divergence `S`: cells × facets, outward orientation.
pub fn divergence(mesh: &FitMesh) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(mesh.n_cells(), mesh.n_facets());
    for c in 0..mesh.n_cells() {
        let p = mesh.cell_ijk(c);
        for a in Axis::ALL {
            let mut q = p;
            q[a.index()] += 1;
            coo.push(c, mesh.facet(a, q), 1.0);
            coo.push(c, mesh.facet(a, p), -1.0);
        }
    }
    CsrMatrix::from(&coo)
}

/// Columns `cols` of a sparse matrix, in the given order.
pub fn select_columns(m: &CsrMatrix<f64>, cols: &[usize]) -> CsrMatrix<f64> {
    let mut map = vec![usize::MAX; m.ncols()];
    for (j, &c) in cols.iter().enumerate() {
        map[c] = j;
    }
    let mut coo = CooMatrix::new(m.nrows(), cols.len());
    for (r, c, &v) in m.triplet_iter() {
        if map[c] != usize::MAX && v != 0.0 {
            coo.push(r, map[c], v);
        }
    }
    CsrMatrix::from(&coo)
}

/// Sparse selection matrix: column `j` is the unit vector `e_{cols[j]}`.
pub fn selection(n_rows: usize, cols: &[usize]) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(n_rows, cols.len());
    for (j, &r) in cols.iter().enumerate() {
        coo.push(r, j, 1.0);
    }
    CsrMatrix::from(&coo)
}

pub fn dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
    convert_csr_dense(m)
}

pub fn is_exact_zero(m: &CsrMatrix<f64>) -> bool {
    m.values().iter().all(|&v| v == 0.0)
}

/// Operators with the magnetic scalar potential reduced by one pinned node.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub c: CsrMatrix<f64>,
    pub g: CsrMatrix<f64>,
    pub div: CsrMatrix<f64>,
    /// `S̃ᵀ = -G` restricted to the unpinned nodes: edges × ψ unknowns.
    pub s_tilde_t: CsrMatrix<f64>,
    pub psi_nodes: Vec<usize>,
    pub pinned: usize,
    /// Edges not lying in the outer boundary surface.
    pub interior_edges: Vec<usize>,
}

pub fn build_operators(mesh: &FitMesh, pinned: usize) -> DiscreteOperators {
    let c = curl(mesh);
    let g = gradient(mesh);
    let div = divergence(mesh);
    let psi_nodes: Vec<usize> = (0..mesh.n_nodes()).filter(|&n| n != pinned).collect();
    let mut s_tilde_t = select_columns(&g, &psi_nodes);
    s_tilde_t.values_mut().iter_mut().for_each(|v| *v = -*v);
    let interior_edges = (0..mesh.n_edges()).filter(|&e| !mesh.edge_on_boundary(e)).collect();
    DiscreteOperators { c, g, div, s_tilde_t, psi_nodes, pinned, interior_edges }
}

impl DiscreteOperators {
    pub fn s_tilde(&self) -> CsrMatrix<f64> {
        self.s_tilde_t.transpose()
    }

    /// `C S̃ᵀ` contains no nonzero entry.
    pub fn curl_grad_exact(&self) -> bool {
        is_exact_zero(&(&self.c * &self.s_tilde_t))
    }
}
