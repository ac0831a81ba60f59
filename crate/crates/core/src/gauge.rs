//! Tree-cotree gauging on FIT edge graphs.
//!
//! Trees are grown by a 0-1 Prim search: constrained edges (those already
//! fixed by a boundary condition or excluded from the gauged region) cost
//! nothing and are taken first, so the free tree edges are exactly the
//! ones whose potentials the gauge sets to zero.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;
use thiserror::Error;

use crate::fit::operators::{dense, selection};
use crate::fit::{FitMesh, FitModel};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaugeError {
    #[error("gauge region is not connected")]
    Disconnected,
    #[error("region not simply connected (Euler characteristic {0})")]
    NotSimplyConnected(i64),
    #[error("region encloses a cavity (Euler characteristic {0})")]
    Cavity(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TreeOptions {
    /// Root node; defaults to the lowest region node.
    pub root: Option<usize>,
    /// Visit neighbours in decreasing edge order.
    pub reverse: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugeRegion {
    Conducting,
    NonConducting,
}

#[derive(Debug, Clone)]
pub struct GaugeSelection {
    pub region: GaugeRegion,
    pub tree_edges: Vec<usize>,
    /// Kept edges, one per column of `p`.
    pub columns: Vec<usize>,
    pub p: CsrMatrix<f64>,
}

impl GaugeSelection {
    pub fn dense_p(&self) -> DMatrix<f64> {
        dense(&self.p)
    }
}

/// Nodes, edges and facets of the closure of `cells`, sorted.
pub fn region_complex(mesh: &FitMesh, cells: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut nodes: Vec<usize> = cells.iter().flat_map(|&c| mesh.cell_nodes(c)).collect();
    let mut edges: Vec<usize> = cells.iter().flat_map(|&c| mesh.cell_edges(c)).collect();
    let mut facets: Vec<usize> = cells.iter().flat_map(|&c| mesh.cell_facets(c)).collect();
    for v in [&mut nodes, &mut edges, &mut facets] {
        v.sort_unstable();
        v.dedup();
    }
    (nodes, edges, facets)
}

/// `V - E + F - C` of the closed cell complex.
pub fn euler_characteristic(mesh: &FitMesh, cells: &[usize]) -> i64 {
    let mut cells = cells.to_vec();
    cells.sort_unstable();
    cells.dedup();
    let (n, e, f) = region_complex(mesh, &cells);
    n.len() as i64 - e.len() as i64 + f.len() as i64 - cells.len() as i64
}

/// A connected region with `χ = 1` has neither handles nor cavities.
pub fn check_simply_connected(mesh: &FitMesh, cells: &[usize]) -> Result<(), GaugeError> {
    if cells.is_empty() {
        return Ok(());
    }
    let chi = euler_characteristic(mesh, cells);
    match chi {
        1 => Ok(()),
        c if c < 1 => Err(GaugeError::NotSimplyConnected(c)),
        c => Err(GaugeError::Cavity(c)),
    }
}

/// Spanning tree of the graph formed by `edges`, preferring `constrained`
/// edges. Returns the tree edges in insertion order.
pub fn spanning_tree(
    mesh: &FitMesh,
    edges: &[usize],
    constrained: &[bool],
    opts: TreeOptions,
) -> Result<Vec<usize>, GaugeError> {
    if edges.is_empty() {
        return Ok(Vec::new());
    }
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); mesh.n_nodes()];
    let mut in_region = vec![false; mesh.n_nodes()];
    let mut sorted = edges.to_vec();
    sorted.sort_unstable();
    if opts.reverse {
        sorted.reverse();
    }
    for &e in &sorted {
        let (a, b) = mesh.edge_nodes(e);
        adj[a].push((e, b));
        adj[b].push((e, a));
        in_region[a] = true;
        in_region[b] = true;
    }
    let n_region = in_region.iter().filter(|&&x| x).count();
    let root = match opts.root {
        Some(r) if in_region.get(r).copied().unwrap_or(false) => r,
        Some(_) => return Err(GaugeError::Disconnected),
        None => in_region.iter().position(|&x| x).expect("non-empty region"),
    };

    let mut visited = vec![false; mesh.n_nodes()];
    let mut tree = Vec::with_capacity(n_region - 1);
    let mut deque: VecDeque<(usize, usize)> = VecDeque::new();
    visited[root] = true;
    let push = |deque: &mut VecDeque<(usize, usize)>, node: usize, visited: &[bool]| {
        for &(e, nb) in &adj[node] {
            if !visited[nb] {
                if constrained[e] {
                    deque.push_front((e, nb));
                } else {
                    deque.push_back((e, nb));
                }
            }
        }
    };
    push(&mut deque, root, &visited);
    while let Some((e, nb)) = deque.pop_front() {
        if visited[nb] {
            continue;
        }
        visited[nb] = true;
        tree.push(e);
        push(&mut deque, nb, &visited);
    }
    if tree.len() + 1 != n_region {
        return Err(GaugeError::Disconnected);
    }
    Ok(tree)
}

/// Selection of `kept \ tree`, as unit columns of an `n_edges`-row matrix.
pub fn cotree_projector(mesh: &FitMesh, tree: &[usize], kept: &[usize], region: GaugeRegion) -> GaugeSelection {
    let mut in_tree = vec![false; mesh.n_edges()];
    for &e in tree {
        in_tree[e] = true;
    }
    let mut columns: Vec<usize> = kept.iter().copied().filter(|&e| !in_tree[e]).collect();
    columns.sort_unstable();
    columns.dedup();
    let p = selection(mesh.n_edges(), &columns);
    GaugeSelection { region, tree_edges: tree.to_vec(), columns, p }
}

/// Edges whose four surrounding cells all conduct: the support of `t`.
pub fn conductor_interior_edges(model: &FitModel) -> Vec<usize> {
    let mesh = &model.mesh;
    let (_, edges, _) = region_complex(mesh, &model.conductor);
    edges
        .into_iter()
        .filter(|&e| {
            let cells = mesh.edge_cells(e);
            cells.len() == 4 && cells.iter().all(|&(c, _)| model.map.is_conducting(c))
        })
        .collect()
}

/// Gauge for T-Ω: `t` on the conductor interior, zeroed on a tree grown
/// from the conductor surface.
pub fn gauge_tomega(model: &FitModel, opts: TreeOptions) -> Result<GaugeSelection, GaugeError> {
    let mesh = &model.mesh;
    check_simply_connected(mesh, &model.conductor)?;
    let (_, edges, _) = region_complex(mesh, &model.conductor);
    let interior = conductor_interior_edges(model);
    let mut constrained = vec![true; mesh.n_edges()];
    for &e in &interior {
        constrained[e] = false;
    }
    let tree = spanning_tree(mesh, &edges, &constrained, opts)?;
    Ok(cotree_projector(mesh, &tree, &interior, GaugeRegion::Conducting))
}

/// Gauge for A*: `a` on interior edges, zeroed on a tree of the
/// non-conducting region grown from the boundary and conductor edges.
pub fn gauge_astar(model: &FitModel, opts: TreeOptions) -> Result<GaugeSelection, GaugeError> {
    let mesh = &model.mesh;
    let all: Vec<usize> = (0..mesh.n_edges()).collect();
    let constrained: Vec<bool> =
        all.iter().map(|&e| mesh.edge_on_boundary(e) || model.mats.m_sigma[e] > 0.0).collect();
    let tree = spanning_tree(mesh, &all, &constrained, opts)?;
    let free_tree: Vec<usize> = tree.iter().copied().filter(|&e| !constrained[e]).collect();
    let mut sel = cotree_projector(mesh, &free_tree, &model.ops.interior_edges, GaugeRegion::NonConducting);
    sel.tree_edges = tree;
    Ok(sel)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaugeReport {
    pub checks: Vec<GaugeCheck>,
}

impl GaugeReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn push(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(GaugeCheck { name: name.to_string(), pass, detail });
    }
}

fn diag_sandwich(b: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut db = b.clone();
    for (r, &s) in d.iter().enumerate() {
        db.row_mut(r).scale_mut(s);
    }
    b.transpose() * db
}

/// `K_ρ = Pᵀ Cᵀ M_ρ C P` nonsingular and `[P | S̃ᵀ]` of full rank.
pub fn verify_gauge_tomega(model: &FitModel, gauge: &GaugeSelection) -> GaugeReport {
    let mut rep = GaugeReport::default();
    let p = gauge.dense_p();
    let cp = dense(&model.ops.c) * &p;
    let k_rho = diag_sandwich(&cp, model.mats.m_rho.as_slice());
    let (ok, detail) = if k_rho.nrows() == 0 {
        (true, "no t unknowns".to_string())
    } else {
        let sv = linalg::singular_values(&k_rho);
        let tol = linalg::rank_tolerance(k_rho.nrows(), k_rho.ncols(), sv.max());
        (sv.min() > tol, format!("sigma_min/sigma_max = {:.3e}", sv.min() / sv.max()))
    };
    rep.push("K_rho nonsingular", ok, detail);

    let st = dense(&model.ops.s_tilde_t);
    let rp = linalg::numerical_rank(&p);
    let rs = linalg::numerical_rank(&st);
    let r = linalg::numerical_rank(&linalg::hcat(&[&p, &st]));
    rep.push("cotree is not a gradient", r == rp + rs, format!("rank [P S~t] = {r}, rank P = {rp}, rank S~t = {rs}"));
    rep.push("S~t full column rank", rs == st.ncols(), format!("{rs} of {}", st.ncols()));
    rep
}

/// `M̄_σ + K_ν` positive definite on the gauged space.
pub fn verify_gauge_astar(model: &FitModel, gauge: &GaugeSelection) -> GaugeReport {
    let mut rep = GaugeReport::default();
    let p = gauge.dense_p();
    let m_sigma: Vec<f64> = gauge.columns.iter().map(|&e| model.mats.m_sigma[e]).collect();
    let cp = dense(&model.ops.c) * &p;
    let mut sum = diag_sandwich(&cp, model.mats.m_nu.as_slice());
    for (k, s) in m_sigma.iter().enumerate() {
        sum[(k, k)] += s;
    }
    let (ok, detail) = if sum.nrows() == 0 {
        (false, "no a unknowns".to_string())
    } else {
        let ev = sum.clone().symmetric_eigenvalues();
        let (lo, hi) = (ev.min(), ev.max());
        let tol = linalg::rank_tolerance(sum.nrows(), sum.ncols(), hi);
        (lo > tol, format!("lambda_min/lambda_max = {:.3e}", lo / hi))
    };
    rep.push("M_sigma + K_nu positive definite", ok, detail);
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::CellBox;

    fn cube_model(n: usize, conductor: Option<([usize; 3], [usize; 3])>) -> FitModel {
        let mut text = format!("grid.nx = {n}\ngrid.ny = {n}\ngrid.nz = {n}\ngrid.dx = 0.01\n");
        if let Some((lo, hi)) = conductor {
            text.push_str(&format!(
                "conductor.box = {},{},{},{},{},{}\nconductor.sigma = 1e6\n",
                lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]
            ));
        }
        FitModel::from_text(&text).unwrap()
    }

    #[test]
    fn single_cell_tree_and_cotree() {
        let m = FitMesh::cube(1, 1.0).unwrap();
        let edges: Vec<usize> = (0..12).collect();
        let tree = spanning_tree(&m, &edges, &[false; 12], TreeOptions::default()).unwrap();
        assert_eq!(tree.len(), 7);
        let sel = cotree_projector(&m, &tree, &edges, GaugeRegion::Conducting);
        assert_eq!(sel.columns.len(), 5);
        let p = sel.dense_p();
        assert_eq!(p.transpose() * &p, DMatrix::identity(5, 5));
        let empty = cotree_projector(&m, &[], &[], GaugeRegion::Conducting);
        assert_eq!(empty.p.ncols(), 0);
    }

    #[test]
    fn two_cell_tree() {
        let m = FitMesh::new([2, 1, 1], [1.0; 3]).unwrap();
        let edges: Vec<usize> = (0..m.n_edges()).collect();
        let tree = spanning_tree(&m, &edges, &vec![false; m.n_edges()], TreeOptions::default()).unwrap();
        assert_eq!(tree.len(), 11);
    }

    #[test]
    fn euler_characteristic_detects_torus_and_cavity() {
        let m = FitMesh::cube(3, 1.0).unwrap();
        let ring: Vec<usize> = m.cells_in(&CellBox { lo: [0, 0, 0], hi: [3, 3, 1] }).into_iter().filter(|&c| c != m.cell(1, 1, 0)).collect();
        assert_eq!(check_simply_connected(&m, &ring), Err(GaugeError::NotSimplyConnected(0)));
        let shell: Vec<usize> = (0..27).filter(|&c| c != m.cell(1, 1, 1)).collect();
        assert_eq!(check_simply_connected(&m, &shell), Err(GaugeError::Cavity(2)));
        assert_eq!(check_simply_connected(&m, &[0, 1, 2]), Ok(()));
    }

    #[test]
    fn disconnected_region_errors() {
        let m = FitMesh::cube(3, 1.0).unwrap();
        let mut edges = m.cell_edges(0);
        edges.extend(m.cell_edges(m.cell(2, 2, 2)));
        assert_eq!(spanning_tree(&m, &edges, &vec![false; m.n_edges()], TreeOptions::default()), Err(GaugeError::Disconnected));
    }

    #[test]
    fn tree_is_deterministic() {
        let model = cube_model(4, Some(([1, 1, 1], [3, 3, 3])));
        let a = gauge_tomega(&model, TreeOptions::default()).unwrap();
        let b = gauge_tomega(&model, TreeOptions::default()).unwrap();
        assert_eq!(a.tree_edges, b.tree_edges);
        assert_eq!(a.columns.len(), 5);
    }

    #[test]
    fn gauges_verify_on_centred_conductors() {
        for (n, lo, hi) in [(2, [0, 0, 0], [2, 2, 2]), (3, [1, 1, 1], [2, 2, 2]), (4, [1, 1, 1], [3, 3, 3])] {
            let model = cube_model(n, Some((lo, hi)));
            let t = gauge_tomega(&model, TreeOptions::default()).unwrap();
            let rep = verify_gauge_tomega(&model, &t);
            assert!(rep.pass(), "{n}: {rep:?}");
            let a = gauge_astar(&model, TreeOptions::default()).unwrap();
            let rep = verify_gauge_astar(&model, &a);
            assert!(rep.pass(), "{n}: {rep:?}");
        }
    }

    #[test]
    fn ungauged_curl_curl_fails() {
        let model = cube_model(3, None);
        let interior = model.ops.interior_edges.clone();
        let ungauged = cotree_projector(&model.mesh, &[], &interior, GaugeRegion::NonConducting);
        assert!(!verify_gauge_astar(&model, &ungauged).pass());
        let gauged = gauge_astar(&model, TreeOptions::default()).unwrap();
        assert!(verify_gauge_astar(&model, &gauged).pass());
    }
}
