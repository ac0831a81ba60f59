//! Reduced incidence matrices, well-posedness and topological index analysis.
//!
//! Orientation: a branch column carries `+1` in the row of its `n+` node and
//! `-1` in the row of its `n-` node; the ground row is dropped.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{self, Projector};
use crate::netlist::{BranchKind, NetlistDocument};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("nodes not connected to ground: {0:?}")]
    Disconnected(Vec<String>),
    #[error("circuit is not well posed: {0:?}")]
    NotWellPosed(Vec<Violation>),
}

/// Columns of one branch kind.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchBlock {
    pub labels: Vec<String>,
    /// Index into `NetlistDocument::branches` for each column.
    pub branch: Vec<usize>,
    /// Port number within the branch (nonzero only for multi-port `X`).
    pub port: Vec<usize>,
    /// R/C/L values, empty for other kinds.
    pub values: Vec<f64>,
    pub matrix: DMatrix<f64>,
}

impl BranchBlock {
    fn empty(n_e: usize) -> Self {
        BranchBlock { labels: vec![], branch: vec![], port: vec![], values: vec![], matrix: DMatrix::zeros(n_e, 0) }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One graph edge; node `n_e` stands for ground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphEdge {
    pub label: String,
    pub kind: BranchKind,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceBlocks {
    pub nodes: Vec<String>,
    pub ground: String,
    pub c: BranchBlock,
    pub r: BranchBlock,
    pub l: BranchBlock,
    pub v: BranchBlock,
    pub i: BranchBlock,
    pub lambda: BranchBlock,
    pub edges: Vec<GraphEdge>,
}

impl IncidenceBlocks {
    pub fn n_e(&self) -> usize {
        self.nodes.len()
    }

    pub fn block(&self, kind: BranchKind) -> &BranchBlock {
        match kind {
            BranchKind::C => &self.c,
            BranchKind::R => &self.r,
            BranchKind::L => &self.l,
            BranchKind::V => &self.v,
            BranchKind::I => &self.i,
            BranchKind::X => &self.lambda,
        }
    }

    /// `[A_C A_R A_L A_V A_I A_λ]`.
    pub fn full(&self) -> DMatrix<f64> {
        self.stack(&[BranchKind::C, BranchKind::R, BranchKind::L, BranchKind::V, BranchKind::I, BranchKind::X])
    }

    pub fn stack(&self, kinds: &[BranchKind]) -> DMatrix<f64> {
        let mats: Vec<&DMatrix<f64>> = kinds.iter().map(|k| &self.block(*k).matrix).collect();
        if mats.is_empty() {
            return DMatrix::zeros(self.n_e(), 0);
        }
        linalg::hcat(&mats)
    }

    pub fn node_label(&self, idx: usize) -> &str {
        if idx == self.n_e() {
            &self.ground
        } else {
            &self.nodes[idx]
        }
    }
}

pub fn incidence_blocks(doc: &NetlistDocument) -> Result<IncidenceBlocks, TopologyError> {
    let nodes = doc.non_ground_nodes();
    let n_e = nodes.len();
    let index_of = |name: &str| -> usize {
        if name == doc.ground {
            n_e
        } else {
            nodes.iter().position(|n| n == name).expect("node collected by parser")
        }
    };

    let mut blocks = [
        BranchBlock::empty(n_e),
        BranchBlock::empty(n_e),
        BranchBlock::empty(n_e),
        BranchBlock::empty(n_e),
        BranchBlock::empty(n_e),
        BranchBlock::empty(n_e),
    ];
    let slot = |k: BranchKind| match k {
        BranchKind::C => 0,
        BranchKind::R => 1,
        BranchKind::L => 2,
        BranchKind::V => 3,
        BranchKind::I => 4,
        BranchKind::X => 5,
    };
    let mut columns: [Vec<(usize, usize)>; 6] = Default::default();
    let mut edges = Vec::new();

    for (bi, b) in doc.branches.iter().enumerate() {
        let s = slot(b.kind);
        for (port, (p, m)) in b.terminals.iter().enumerate() {
            let (from, to) = (index_of(p), index_of(m));
            let label = b.port_label(port);
            blocks[s].labels.push(label.clone());
            blocks[s].branch.push(bi);
            blocks[s].port.push(port);
            if let Some(v) = b.value() {
                blocks[s].values.push(v);
            }
            columns[s].push((from, to));
            edges.push(GraphEdge { label, kind: b.kind, from, to });
        }
    }
    for (s, cols) in columns.iter().enumerate() {
        let mut m = DMatrix::zeros(n_e, cols.len());
        for (j, &(from, to)) in cols.iter().enumerate() {
            if from < n_e {
                m[(from, j)] = 1.0;
            }
            if to < n_e {
                m[(to, j)] = -1.0;
            }
        }
        blocks[s].matrix = m;
    }

    let comp = components(n_e + 1, edges.iter().map(|e| (e.from, e.to)));
    let stray: Vec<String> =
        (0..n_e).filter(|&k| comp[k] != comp[n_e]).map(|k| nodes[k].clone()).collect();
    if !stray.is_empty() {
        return Err(TopologyError::Disconnected(stray));
    }

    let [c, r, l, v, i, lambda] = blocks;
    Ok(IncidenceBlocks { nodes, ground: doc.ground.clone(), c, r, l, v, i, lambda, edges })
}

/// Connected-component label per vertex.
fn components(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..n).map(|x| find(&mut parent, x)).collect()
}

/// Node sets of the components of the subgraph spanned by `kinds` that do
/// not contain ground, with the remaining branches crossing their boundary.
fn floating_groups(b: &IncidenceBlocks, kinds: &[BranchKind]) -> Vec<(Vec<String>, Vec<String>)> {
    let n_e = b.n_e();
    let comp = components(
        n_e + 1,
        b.edges.iter().filter(|e| kinds.contains(&e.kind)).map(|e| (e.from, e.to)),
    );
    let roots: BTreeSet<usize> = (0..n_e).map(|k| comp[k]).filter(|&r| r != comp[n_e]).collect();
    roots
        .into_iter()
        .map(|root| {
            let nodes: Vec<String> =
                (0..n_e).filter(|&k| comp[k] == root).map(|k| b.nodes[k].clone()).collect();
            let mut cut: Vec<String> = b
                .edges
                .iter()
                .filter(|e| (comp[e.from] == root) != (comp[e.to] == root))
                .map(|e| e.label.clone())
                .collect();
            cut.sort();
            (nodes, cut)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Cutset made of current sources only.
    CurrentSourceCutset { nodes: Vec<String>, branches: Vec<String> },
    /// Loop made of voltage sources only.
    VoltageSourceLoop { branches: Vec<String> },
    NonPositiveValue { branch: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WellPosedness {
    pub violations: Vec<Violation>,
}

impl WellPosedness {
    pub fn is_well_posed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_well_posed(b: &IncidenceBlocks) -> WellPosedness {
    use BranchKind::*;
    let mut violations = Vec::new();

    let all_but_i = b.stack(&[R, C, V, L, X]);
    if linalg::numerical_rank(&all_but_i) < b.n_e() {
        for (nodes, branches) in floating_groups(b, &[R, C, V, L, X]) {
            violations.push(Violation::CurrentSourceCutset { nodes, branches });
        }
    }

    let av = &b.v.matrix;
    if linalg::numerical_rank(av) < av.ncols() {
        let ker = linalg::null_space(av);
        for y in ker.column_iter() {
            let big = y.amax();
            let branches = (0..y.len()).filter(|&k| y[k].abs() > 1e-8 * big).map(|k| b.v.labels[k].clone()).collect();
            violations.push(Violation::VoltageSourceLoop { branches });
        }
    }

    for blk in [&b.r, &b.c, &b.l] {
        for (k, &v) in blk.values.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                violations.push(Violation::NonPositiveValue { branch: blk.labels[k].clone() });
            }
        }
    }
    WellPosedness { violations }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutsetWitness {
    /// Node set separated from ground.
    pub nodes: Vec<String>,
    /// Inductor, current-source and field-element branches of the cutset.
    pub branches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexReport {
    pub index: u8,
    pub well_posed: WellPosedness,
    pub li_lambda_cutset: Option<Vec<CutsetWitness>>,
    pub cv_loop: Option<Vec<Vec<String>>>,
    /// Orthonormal basis of `im Q_CRV` (node space).
    pub index2_node_components: DMatrix<f64>,
    /// Orthonormal basis of `im Q̄_{V-C}` (voltage-source space).
    pub index2_vsource_components: DMatrix<f64>,
}

/// `(Q_CRV, Q̄_{V-C})`.
pub fn index2_components(b: &IncidenceBlocks) -> (Projector, Projector) {
    use BranchKind::*;
    let crv = b.stack(&[C, R, V]);
    let q_crv = linalg::kernel_projector(&crv, "A_C A_R A_V");
    let qbar = Projector::from_basis(&cv_kernel(b), b.v.len(), "Q_C^T A_V");
    (q_crv, qbar)
}

/// Orthonormal basis of `ker Q_Cᵀ A_V`.
fn cv_kernel(b: &IncidenceBlocks) -> DMatrix<f64> {
    if b.v.is_empty() {
        return DMatrix::zeros(0, 0);
    }
    let qc = linalg::kernel_projector(&b.c.matrix, "A_C");
    linalg::null_space(&(qc.q.transpose() * &b.v.matrix))
}

pub fn classify_index(b: &IncidenceBlocks) -> Result<IndexReport, TopologyError> {
    use BranchKind::*;
    let wp = check_well_posed(b);
    if !wp.is_well_posed() {
        return Err(TopologyError::NotWellPosed(wp.violations));
    }
    let node_basis = linalg::left_null_space(&b.stack(&[C, R, V]));
    let v_basis = cv_kernel(b);

    let li = if node_basis.ncols() > 0 {
        Some(
            floating_groups(b, &[C, R, V])
                .into_iter()
                .map(|(nodes, branches)| CutsetWitness { nodes, branches })
                .collect(),
        )
    } else {
        None
    };
    let cv = if v_basis.ncols() > 0 {
        Some(v_basis.column_iter().map(|y| cv_loop_witness(b, y.as_slice())).collect())
    } else {
        None
    };
    let index = if li.is_some() || cv.is_some() { 2 } else { 1 };
    Ok(IndexReport {
        index,
        well_posed: wp,
        li_lambda_cutset: li,
        cv_loop: cv,
        index2_node_components: node_basis,
        index2_vsource_components: v_basis,
    })
}

/// V branches in the support of `y`, each closed into a loop through
/// capacitors and the other supported V branches.
fn cv_loop_witness(b: &IncidenceBlocks, y: &[f64]) -> Vec<String> {
    let big = y.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let support: Vec<&str> =
        (0..y.len()).filter(|&k| y[k].abs() > 1e-8 * big).map(|k| b.v.labels[k].as_str()).collect();
    let mut allowed: Vec<&GraphEdge> = b
        .edges
        .iter()
        .filter(|e| e.kind == BranchKind::C || (e.kind == BranchKind::V && support.contains(&e.label.as_str())))
        .collect();
    allowed.sort_by(|a, b| a.label.cmp(&b.label));

    let mut out = BTreeSet::new();
    for vname in &support {
        let ve = b.edges.iter().find(|e| e.label == *vname).expect("V label");
        out.insert(ve.label.clone());
        let others: Vec<&GraphEdge> = allowed.iter().copied().filter(|e| e.label != ve.label).collect();
        if let Some(path) = bfs_path(b.n_e() + 1, &others, ve.to, ve.from) {
            out.extend(path);
        }
    }
    out.into_iter().collect()
}

fn bfs_path(n: usize, edges: &[&GraphEdge], start: usize, goal: usize) -> Option<Vec<String>> {
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut q = VecDeque::new();
    seen[start] = true;
    q.push_back(start);
    while let Some(u) = q.pop_front() {
        if u == goal {
            let mut path = Vec::new();
            let mut x = goal;
            while let Some((p, ei)) = prev[x] {
                path.push(edges[ei].label.clone());
                x = p;
            }
            return Some(path);
        }
        for (ei, e) in edges.iter().enumerate() {
            let w = if e.from == u {
                e.to
            } else if e.to == u {
                e.from
            } else {
                continue;
            };
            if !seen[w] {
                seen[w] = true;
                prev[w] = Some((u, ei));
                q.push_back(w);
            }
        }
    }
    None
}

/// True when removing `labels` leaves some node without a path to ground.
pub fn disconnects(b: &IncidenceBlocks, labels: &[String]) -> bool {
    let n_e = b.n_e();
    let comp = components(
        n_e + 1,
        b.edges.iter().filter(|e| !labels.contains(&e.label)).map(|e| (e.from, e.to)),
    );
    (0..n_e).any(|k| comp[k] != comp[n_e])
}

impl IndexReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "differential index: {}", self.index);
        let _ = writeln!(s, "well posed: yes");
        match &self.li_lambda_cutset {
            None => {
                let _ = writeln!(s, "LI-lambda cutsets: none");
            }
            Some(ws) => {
                for w in ws {
                    let _ = writeln!(
                        s,
                        "LI-lambda cutset: branches [{}] separating nodes [{}]",
                        w.branches.join(", "),
                        w.nodes.join(", ")
                    );
                }
            }
        }
        match &self.cv_loop {
            None => {
                let _ = writeln!(s, "CV loops: none");
            }
            Some(ls) => {
                for l in ls {
                    let _ = writeln!(s, "CV loop: branches [{}]", l.join(", "));
                }
            }
        }
        s
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "index={}", self.index);
        let _ = writeln!(s, "well_posed=true");
        let cut: Vec<String> = self
            .li_lambda_cutset
            .iter()
            .flatten()
            .map(|w| w.branches.join("+"))
            .collect();
        let _ = writeln!(s, "li_lambda_cutsets={}", cut.join(";"));
        let loops: Vec<String> = self.cv_loop.iter().flatten().map(|l| l.join("+")).collect();
        let _ = writeln!(s, "cv_loops={}", loops.join(";"));
        let _ = writeln!(s, "index2_node_rank={}", self.index2_node_components.ncols());
        let _ = writeln!(s, "index2_vsource_rank={}", self.index2_vsource_components.ncols());
        s
    }
}

impl WellPosedness {
    pub fn to_text(&self) -> String {
        let mut s = String::from("well posed: no\n");
        for v in &self.violations {
            let _ = match v {
                Violation::CurrentSourceCutset { nodes, branches } => writeln!(
                    s,
                    "violation: current-source cutset [{}] isolating nodes [{}]",
                    branches.join(", "),
                    nodes.join(", ")
                ),
                Violation::VoltageSourceLoop { branches } => {
                    writeln!(s, "violation: voltage-source loop [{}]", branches.join(", "))
                }
                Violation::NonPositiveValue { branch } => {
                    writeln!(s, "violation: non-positive value on {branch}")
                }
            };
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_netlist;

    fn blocks(text: &str) -> IncidenceBlocks {
        incidence_blocks(&parse_netlist(text).unwrap()).unwrap()
    }

    #[test]
    fn single_node_loop() {
        let b = blocks("V1 1 0 DC 1\nR1 1 0 1\n.ground 0");
        assert_eq!(b.v.matrix, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(b.r.matrix, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(b.c.matrix.shape(), (1, 0));
    }

    #[test]
    fn ladder_orientation() {
        let b = blocks("V1 1 0 DC 1\nR1 1 2 1\nL1 2 0 1\n.ground 0");
        assert_eq!(b.r.matrix, DMatrix::from_column_slice(2, 1, &[1.0, -1.0]));
        assert_eq!(b.full().ncols(), 3);
    }

    #[test]
    fn disconnected_graph_is_reported() {
        let doc = parse_netlist("R1 1 0 1\nR2 2 3 1\n.ground 0").unwrap();
        assert_eq!(incidence_blocks(&doc).unwrap_err(), TopologyError::Disconnected(vec!["2".into(), "3".into()]));
    }

    #[test]
    fn well_posedness_examples() {
        let wp = check_well_posed(&blocks("I1 1 0 DC 1\n.ground 0"));
        assert!(matches!(wp.violations[0], Violation::CurrentSourceCutset { .. }));
        let wp = check_well_posed(&blocks("V1 1 0 DC 1\nV2 1 0 DC 1\nR1 1 0 1\n.ground 0"));
        assert_eq!(wp.violations, vec![Violation::VoltageSourceLoop { branches: vec!["V1".into(), "V2".into()] }]);
        assert!(check_well_posed(&blocks("V1 1 0 DC 1\nR1 1 2 1\nL1 2 0 1\n.ground 0")).is_well_posed());
    }

    #[test]
    fn index_examples() {
        let r = classify_index(&blocks("V1 1 0 DC 1\nR1 1 2 1\nX1 2 0 field=a.fs\n.ground 0")).unwrap();
        assert_eq!(r.index, 1);
        let r = classify_index(&blocks("I1 0 1 DC 1\nX1 1 0 field=a.fs\n.ground 0")).unwrap();
        assert_eq!(r.index, 2);
        let w = &r.li_lambda_cutset.as_ref().unwrap()[0];
        assert_eq!(w.branches, vec!["I1", "X1"]);
        assert_eq!(r.index2_node_components.ncols(), 1);
        let r = classify_index(&blocks("V1 1 0 DC 1\nC1 1 0 1\nR1 1 0 1\n.ground 0")).unwrap();
        assert_eq!(r.index, 2);
        assert_eq!(r.cv_loop.as_ref().unwrap()[0], vec!["C1", "V1"]);
        assert_eq!(r.index2_vsource_components.ncols(), 1);
    }

    #[test]
    fn projector_ranks() {
        let (q, qb) = index2_components(&blocks("V1 1 0 DC 1\nR1 1 2 1\nL1 2 0 1\n.ground 0"));
        assert_eq!((q.rank(), qb.rank()), (0, 0));
        let (q, _) = index2_components(&blocks("I1 0 1 DC 1\nX1 1 0 field=a.fs\n.ground 0"));
        assert_eq!(q.rank(), 1);
        let (_, qb) = index2_components(&blocks("V1 1 0 DC 1\nC1 1 0 1\n.ground 0"));
        assert_eq!(qb.rank(), 1);
    }

    #[test]
    fn cv_loop_through_two_capacitors() {
        let r = classify_index(&blocks("V1 1 0 DC 1\nC1 1 2 1\nC2 2 0 1\nR1 2 0 1\n.ground 0")).unwrap();
        assert_eq!(r.cv_loop.unwrap(), vec![vec!["C1".to_string(), "C2".into(), "V1".into()]]);
    }
}
