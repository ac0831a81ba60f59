//! Stranded rectangular coils wound about the z axis.
//!
//! A frame is an outer cell box with a ring of width `w` cells. Each ring
//! offset `m < w` and z-layer carries one filament along the cell-centre
//! rectangle, with weight `N / (w · layers)`; all filaments run
//! counter-clockwise seen from `+z`.
//!
//! * `Y_s` (edges): the filament's spanning membrane, i.e. the z-edges at
//!   the nodes strictly inside the rectangle, so `C Y_s` is the facet
//!   current crossing the filament path.
//! * `X_s` (edges): the node loop obtained by shifting the filament by half
//!   a cell in `+x` and `+y`, averaged over the two z-planes of the layer.

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use super::mesh::{Axis, CellBox, FitMesh};
use super::FitError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoilFrame {
    pub outer: CellBox,
    pub width: usize,
    pub turns: f64,
}

impl CoilFrame {
    pub fn cells(&self, mesh: &FitMesh) -> Vec<usize> {
        let b = &self.outer;
        let w = self.width;
        mesh.cells_in(b)
            .into_iter()
            .filter(|&c| {
                let p = mesh.cell_ijk(c);
                p[0] < b.lo[0] + w || p[0] + w >= b.hi[0] || p[1] < b.lo[1] + w || p[1] + w >= b.hi[1]
            })
            .collect()
    }

    fn validate(&self, mesh: &FitMesh, index: usize) -> Result<(), FitError> {
        let b = &self.outer;
        if !mesh.box_fits(b) {
            return Err(FitError::CoilOutside(index));
        }
        let w = self.width;
        if w == 0 || b.hi[0] - b.lo[0] < 2 * w || b.hi[1] - b.lo[1] < 2 * w || self.turns.is_nan() || self.turns <= 0.0 {
            return Err(FitError::CoilNotClosed(index));
        }
        Ok(())
    }

    /// `(x-lo node, x-hi node, y-lo node, y-hi node)` of the node rectangle
    /// strictly inside filament `m`, as half-open node ranges.
    fn membrane(&self, m: usize) -> ([usize; 2], [usize; 2]) {
        let b = &self.outer;
        ([b.lo[0] + m + 1, b.hi[0] - m], [b.lo[1] + m + 1, b.hi[1] - m])
    }

    fn weight(&self) -> f64 {
        let layers = (self.outer.hi[2] - self.outer.lo[2]) as f64;
        self.turns / (self.width as f64 * layers)
    }
}

#[derive(Debug, Clone)]
pub struct WindingFunctions {
    pub x_s: DMatrix<f64>,
    pub y_s: DMatrix<f64>,
    pub j_s: DMatrix<f64>,
}

pub fn build_windings(
    mesh: &FitMesh,
    curl: &CsrMatrix<f64>,
    coils: &[CoilFrame],
    conductor: &[usize],
) -> Result<WindingFunctions, FitError> {
    let ne = mesh.n_edges();
    let mut y = CooMatrix::new(ne, coils.len());
    let mut zf = CooMatrix::new(mesh.n_facets(), coils.len());
    let mut occupied = vec![usize::MAX; mesh.n_cells()];

    for (r, coil) in coils.iter().enumerate() {
        coil.validate(mesh, r)?;
        for c in coil.cells(mesh) {
            if conductor.contains(&c) {
                return Err(FitError::CoilOverlapsConductor(r));
            }
            if occupied[c] != usize::MAX {
                return Err(FitError::CoilsOverlap(occupied[c], r));
            }
            occupied[c] = r;
        }
        let wgt = coil.weight();
        for k in coil.outer.lo[2]..coil.outer.hi[2] {
            for m in 0..coil.width {
                let ([xa, xb], [ya, yb]) = coil.membrane(m);
                for j in ya..yb {
                    for i in xa..xb {
                        y.push(mesh.edge(Axis::Z, [i, j, k]), r, wgt);
                    }
                }
                // Shifted node loop: bounds the z-facets [xa, xb) × [ya, yb).
                for kp in [k, k + 1] {
                    for j in ya..yb {
                        for i in xa..xb {
                            zf.push(mesh.facet(Axis::Z, [i, j, kp]), r, 0.5 * wgt);
                        }
                    }
                }
            }
        }
    }
    let y_s = super::operators::dense(&CsrMatrix::from(&y));
    let zf = CsrMatrix::from(&zf);
    let x_s = super::operators::dense(&(&curl.transpose() * &zf));
    let j_s = super::operators::dense(curl) * &y_s;
    Ok(WindingFunctions { x_s, y_s, j_s })
}

/// Net current through the half-plane `x = x_cut` (a node coordinate
/// offset by a half cell for edge currents), `y < y_max`, all `z`.
pub fn facet_current_through_plane(mesh: &FitMesh, j: &[f64], i: usize, y_max: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..mesh.n[2] {
        for jj in 0..y_max {
            s += j[mesh.facet(Axis::X, [i, jj, k])];
        }
    }
    s
}

pub fn edge_current_through_plane(mesh: &FitMesh, x: &[f64], i: usize, y_max: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..=mesh.n[2] {
        for jj in 0..y_max {
            s += x[mesh.edge(Axis::X, [i, jj, k])];
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::super::operators::{curl, dense, divergence, gradient};
    use super::*;

    fn frame(lo: [usize; 3], hi: [usize; 3], width: usize, turns: f64) -> CoilFrame {
        CoilFrame { outer: CellBox { lo, hi }, width, turns }
    }

    #[test]
    fn windings_are_solenoidal_and_carry_n_turns() {
        let m = FitMesh::cube(6, 0.1).unwrap();
        let c = curl(&m);
        let coil = frame([1, 1, 2], [5, 5, 4], 1, 7.0);
        let w = build_windings(&m, &c, &[coil], &[]).unwrap();
        let div = dense(&divergence(&m));
        assert!((&div * &w.j_s).amax() < 1e-12);
        let gt = dense(&gradient(&m)).transpose();
        assert!((&gt * &w.x_s).amax() < 1e-12);
        let jt = w.j_s.column(0).into_owned();
        assert!((facet_current_through_plane(&m, jt.as_slice(), 3, 3) - 7.0).abs() < 1e-12);
        let xt = w.x_s.column(0).into_owned();
        assert!((edge_current_through_plane(&m, xt.as_slice(), 3, 3) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_coils_and_errors() {
        let m = FitMesh::cube(8, 0.1).unwrap();
        let c = curl(&m);
        let a = frame([0, 0, 0], [3, 3, 1], 1, 1.0);
        let b = frame([4, 4, 5], [8, 8, 6], 1, 1.0);
        let w = build_windings(&m, &c, &[a, b], &[]).unwrap();
        for e in 0..m.n_edges() {
            assert!(w.x_s[(e, 0)] == 0.0 || w.x_s[(e, 1)] == 0.0);
        }
        let conductor = m.cells_in(&CellBox { lo: [0, 0, 0], hi: [1, 1, 1] });
        assert_eq!(build_windings(&m, &c, &[a], &conductor).unwrap_err(), FitError::CoilOverlapsConductor(0));
        assert_eq!(build_windings(&m, &c, &[frame([0, 0, 0], [3, 3, 1], 2, 1.0)], &[]).unwrap_err(), FitError::CoilNotClosed(0));
        assert_eq!(build_windings(&m, &c, &[frame([0, 0, 0], [9, 3, 1], 1, 1.0)], &[]).unwrap_err(), FitError::CoilOutside(0));
    }

    #[test]
    fn curl_relation_holds() {
        let m = FitMesh::cube(4, 1.0).unwrap();
        let c = curl(&m);
        let w = build_windings(&m, &c, &[frame([0, 0, 1], [4, 4, 2], 1, 3.0)], &[]).unwrap();
        assert!((dense(&c) * &w.y_s - &w.j_s).amax() == 0.0);
    }
}
