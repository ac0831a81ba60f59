//! Structured hexahedral grid with canonical FIT numbering.
//!
//! Node `(i,j,k)` has index `i + (nx+1)(j + (ny+1)k)`. Edges come in three
//! blocks (x, y, z), each numbered lexicographically with `i` fastest; an
//! edge points from its lower to its upper node. Facets are blocked by
//! normal direction the same way, cells as `i + nx(j + ny k)`.

use super::FitError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two remaining axes in cyclic order.
    pub fn others(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::Z, Axis::X),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitMesh {
    pub n: [usize; 3],
    pub d: [f64; 3],
}

/// Half-open box of cell indices `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl CellBox {
    pub fn contains(&self, c: [usize; 3]) -> bool {
        (0..3).all(|a| c[a] >= self.lo[a] && c[a] < self.hi[a])
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.hi[a] <= self.lo[a])
    }
}

impl FitMesh {
    pub fn new(n: [usize; 3], d: [f64; 3]) -> Result<Self, FitError> {
        if n.contains(&0) {
            return Err(FitError::InvalidGrid(format!("cell counts must be positive, got {n:?}")));
        }
        if d.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(FitError::InvalidGrid(format!("spacings must be positive, got {d:?}")));
        }
        Ok(FitMesh { n, d })
    }

    pub fn cube(n: usize, h: f64) -> Result<Self, FitError> {
        Self::new([n; 3], [h; 3])
    }

    pub fn n_nodes(&self) -> usize {
        (self.n[0] + 1) * (self.n[1] + 1) * (self.n[2] + 1)
    }

    pub fn n_cells(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    /// Index extents of the edges (or facets when `facet`) of one axis.
    fn extent(&self, axis: Axis, facet: bool) -> [usize; 3] {
        let a = axis.index();
        let mut e = [self.n[0] + 1, self.n[1] + 1, self.n[2] + 1];
        if facet {
            e = self.n;
            e[a] += 1;
        } else {
            e[a] -= 1;
        }
        e
    }

    fn block_len(&self, axis: Axis, facet: bool) -> usize {
        self.extent(axis, facet).iter().product()
    }

    fn block_start(&self, axis: Axis, facet: bool) -> usize {
        Axis::ALL[..axis.index()].iter().map(|&a| self.block_len(a, facet)).sum()
    }

    pub fn n_edges(&self) -> usize {
        Axis::ALL.iter().map(|&a| self.block_len(a, false)).sum()
    }

    pub fn n_facets(&self) -> usize {
        Axis::ALL.iter().map(|&a| self.block_len(a, true)).sum()
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.n[0] + 1) * (j + (self.n[1] + 1) * k)
    }

    pub fn node_ijk(&self, n: usize) -> [usize; 3] {
        let (sx, sy) = (self.n[0] + 1, self.n[1] + 1);
        [n % sx, (n / sx) % sy, n / (sx * sy)]
    }

    pub fn cell(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    pub fn cell_ijk(&self, c: usize) -> [usize; 3] {
        [c % self.n[0], (c / self.n[0]) % self.n[1], c / (self.n[0] * self.n[1])]
    }

    fn lex(ext: [usize; 3], p: [usize; 3]) -> usize {
        p[0] + ext[0] * (p[1] + ext[1] * p[2])
    }

    fn unlex(ext: [usize; 3], r: usize) -> [usize; 3] {
        [r % ext[0], (r / ext[0]) % ext[1], r / (ext[0] * ext[1])]
    }

    pub fn edge(&self, axis: Axis, p: [usize; 3]) -> usize {
        self.block_start(axis, false) + Self::lex(self.extent(axis, false), p)
    }

    pub fn facet(&self, axis: Axis, p: [usize; 3]) -> usize {
        self.block_start(axis, true) + Self::lex(self.extent(axis, true), p)
    }

    fn locate(&self, idx: usize, facet: bool) -> (Axis, [usize; 3]) {
        let mut r = idx;
        for a in Axis::ALL {
            let len = self.block_len(a, facet);
            if r < len {
                return (a, Self::unlex(self.extent(a, facet), r));
            }
            r -= len;
        }
        panic!("index {idx} out of range");
    }

    pub fn edge_ijk(&self, e: usize) -> (Axis, [usize; 3]) {
        self.locate(e, false)
    }

    pub fn facet_ijk(&self, f: usize) -> (Axis, [usize; 3]) {
        self.locate(f, true)
    }

    /// `(tail, head)` node indices.
    pub fn edge_nodes(&self, e: usize) -> (usize, usize) {
        let (a, p) = self.edge_ijk(e);
        let mut q = p;
        q[a.index()] += 1;
        (self.node(p[0], p[1], p[2]), self.node(q[0], q[1], q[2]))
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        self.d[self.edge_ijk(e).0.index()]
    }

    pub fn facet_area(&self, f: usize) -> f64 {
        let (a, _) = self.facet_ijk(f);
        let (b, c) = a.others();
        self.d[b.index()] * self.d[c.index()]
    }

    /// Cells around an edge with the part of the dual facet inside each.
    pub fn edge_cells(&self, e: usize) -> Vec<(usize, f64)> {
        let (a, p) = self.edge_ijk(e);
        let (b, c) = a.others();
        let part = 0.25 * self.d[b.index()] * self.d[c.index()];
        let mut out = Vec::with_capacity(4);
        for db in 0..2 {
            for dc in 0..2 {
                let mut q = p;
                let (bi, ci) = (b.index(), c.index());
                if p[bi] + db == 0 || p[ci] + dc == 0 {
                    continue;
                }
                q[bi] = p[bi] + db - 1;
                q[ci] = p[ci] + dc - 1;
                if q[bi] >= self.n[bi] || q[ci] >= self.n[ci] {
                    continue;
                }
                out.push((self.cell(q[0], q[1], q[2]), part));
            }
        }
        out.sort_by_key(|x| x.0);
        out
    }

    /// Cells on either side of a facet with the part of the dual edge inside each.
    pub fn facet_cells(&self, f: usize) -> Vec<(usize, f64)> {
        let (a, p) = self.facet_ijk(f);
        let ai = a.index();
        let part = 0.5 * self.d[ai];
        let mut out = Vec::with_capacity(2);
        if p[ai] > 0 {
            let mut q = p;
            q[ai] -= 1;
            out.push((self.cell(q[0], q[1], q[2]), part));
        }
        if p[ai] < self.n[ai] {
            out.push((self.cell(p[0], p[1], p[2]), part));
        }
        out
    }

    /// Edge lies in the outer boundary surface.
    pub fn edge_on_boundary(&self, e: usize) -> bool {
        let (a, p) = self.edge_ijk(e);
        let (b, c) = a.others();
        let on = |ax: Axis| p[ax.index()] == 0 || p[ax.index()] == self.n[ax.index()];
        on(b) || on(c)
    }

    pub fn node_on_boundary(&self, n: usize) -> bool {
        let p = self.node_ijk(n);
        (0..3).any(|a| p[a] == 0 || p[a] == self.n[a])
    }

    /// The 12 edges of a cell.
    pub fn cell_edges(&self, c: usize) -> Vec<usize> {
        let p = self.cell_ijk(c);
        let mut out = Vec::with_capacity(12);
        for a in Axis::ALL {
            let (b, cc) = a.others();
            for db in 0..2 {
                for dc in 0..2 {
                    let mut q = p;
                    q[b.index()] += db;
                    q[cc.index()] += dc;
                    out.push(self.edge(a, q));
                }
            }
        }
        out
    }

    pub fn cell_facets(&self, c: usize) -> Vec<usize> {
        let p = self.cell_ijk(c);
        let mut out = Vec::with_capacity(6);
        for a in Axis::ALL {
            for s in 0..2 {
                let mut q = p;
                q[a.index()] += s;
                out.push(self.facet(a, q));
            }
        }
        out
    }

    pub fn cell_nodes(&self, c: usize) -> Vec<usize> {
        let p = self.cell_ijk(c);
        let mut out = Vec::with_capacity(8);
        for dk in 0..2 {
            for dj in 0..2 {
                for di in 0..2 {
                    out.push(self.node(p[0] + di, p[1] + dj, p[2] + dk));
                }
            }
        }
        out
    }

    pub fn cells_in(&self, b: &CellBox) -> Vec<usize> {
        let mut out = Vec::new();
        for k in b.lo[2]..b.hi[2].min(self.n[2]) {
            for j in b.lo[1]..b.hi[1].min(self.n[1]) {
                for i in b.lo[0]..b.hi[0].min(self.n[0]) {
                    out.push(self.cell(i, j, k));
                }
            }
        }
        out
    }

    pub fn box_fits(&self, b: &CellBox) -> bool {
        !b.is_empty() && (0..3).all(|a| b.hi[a] <= self.n[a])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let m = FitMesh::cube(1, 1.0).unwrap();
        assert_eq!((m.n_nodes(), m.n_edges(), m.n_facets(), m.n_cells()), (8, 12, 6, 1));
        let m = FitMesh::cube(2, 1.0).unwrap();
        assert_eq!((m.n_nodes(), m.n_edges(), m.n_facets(), m.n_cells()), (27, 54, 36, 8));
        assert!(FitMesh::new([0, 1, 1], [1.0; 3]).is_err());
        assert!(FitMesh::new([1, 1, 1], [1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn index_round_trips() {
        let m = FitMesh::new([3, 2, 4], [1.0, 2.0, 3.0]).unwrap();
        for e in 0..m.n_edges() {
            let (a, p) = m.edge_ijk(e);
            assert_eq!(m.edge(a, p), e);
        }
        for f in 0..m.n_facets() {
            let (a, p) = m.facet_ijk(f);
            assert_eq!(m.facet(a, p), f);
        }
        for n in 0..m.n_nodes() {
            let p = m.node_ijk(n);
            assert_eq!(m.node(p[0], p[1], p[2]), n);
        }
    }

    #[test]
    fn adjacency_sizes() {
        let m = FitMesh::cube(2, 1.0).unwrap();
        let interior = m.edge(Axis::X, [0, 1, 1]);
        assert_eq!(m.edge_cells(interior).len(), 4);
        let corner = m.edge(Axis::X, [0, 0, 0]);
        assert_eq!(m.edge_cells(corner).len(), 1);
        assert!(m.edge_on_boundary(corner) && !m.edge_on_boundary(interior));
        assert_eq!(m.cell_edges(0).len(), 12);
        let mut all: Vec<usize> = (0..m.n_cells()).flat_map(|c| m.cell_edges(c)).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), m.n_edges());
    }
}
