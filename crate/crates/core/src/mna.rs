//! Modified nodal analysis with inductance-like element slots.
//!
//! Unknowns are ordered `e`, `i_L`, `i_V`, then `(x, i)` per element in
//! netlist order. Residual rows follow the same layout:
//!
//! ```text
//! A_C C A_Cᵀ ė + A_R G A_Rᵀ e + A_L i_L + A_V i_V + A_λ i_λ + A_I i_s(t) = 0
//! L di_L/dt - A_Lᵀ e = 0
//! A_Vᵀ e - v_s(t) = 0
//! F(ẋ, i̇, x, i, A_λᵀ e, t) = 0
//! ```

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::element::{ElementRef, ElementState};
use crate::netlist::{NetlistDocument, Waveform};
use crate::topology::{self, IncidenceBlocks, TopologyError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MnaError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("no element bound to field branch '{0}'")]
    Unbound(String),
    #[error("element '{name}' has {element} ports but the branch lists {branch}")]
    PortMismatch { name: String, element: usize, branch: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementSlot {
    pub name: String,
    pub x: Range<usize>,
    pub i: Range<usize>,
    /// Columns of `A_λ` owned by this element.
    pub lambda_cols: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnknownLayout {
    pub e: Range<usize>,
    pub i_l: Range<usize>,
    pub i_v: Range<usize>,
    pub elements: Vec<ElementSlot>,
    pub size: usize,
}

#[derive(Debug, Clone)]
pub struct CoupledDaeSystem {
    pub blocks: IncidenceBlocks,
    pub layout: UnknownLayout,
    pub elements: Vec<ElementRef>,
    pub v_sources: Vec<Waveform>,
    pub i_sources: Vec<Waveform>,
    cap: DMatrix<f64>,
    cond: DMatrix<f64>,
    ind: DVector<f64>,
}

pub fn assemble(doc: &NetlistDocument, elements: &BTreeMap<String, ElementRef>) -> Result<CoupledDaeSystem, MnaError> {
    let blocks = topology::incidence_blocks(doc)?;
    let n_e = blocks.n_e();
    let n_l = blocks.l.len();
    let n_v = blocks.v.len();

    let mut offset = n_e + n_l + n_v;
    let mut slots = Vec::new();
    let mut bound = Vec::new();
    let mut col = 0;
    for b in doc.branches.iter().filter(|b| b.field_spec().is_some()) {
        let el = elements.get(&b.name).ok_or_else(|| MnaError::Unbound(b.name.clone()))?;
        if el.n_ports() != b.port_count() {
            return Err(MnaError::PortMismatch { name: b.name.clone(), element: el.n_ports(), branch: b.port_count() });
        }
        let x = offset..offset + el.n_dof();
        let i = x.end..x.end + el.n_ports();
        offset = i.end;
        slots.push(ElementSlot { name: b.name.clone(), x, i, lambda_cols: col..col + el.n_ports() });
        col += el.n_ports();
        bound.push(el.clone());
    }

    let weighted = |a: &DMatrix<f64>, w: &[f64], invert: bool| -> DMatrix<f64> {
        let d = DVector::from_iterator(w.len(), w.iter().map(|&v| if invert { 1.0 / v } else { v }));
        a * DMatrix::from_diagonal(&d) * a.transpose()
    };
    let cap = weighted(&blocks.c.matrix, &blocks.c.values, false);
    let cond = weighted(&blocks.r.matrix, &blocks.r.values, true);
    let ind = DVector::from_column_slice(&blocks.l.values);
    let waves = |blk: &topology::BranchBlock| -> Vec<Waveform> {
        blk.branch.iter().map(|&k| *doc.branches[k].waveform().expect("source waveform")).collect()
    };
    let v_sources = waves(&blocks.v);
    let i_sources = waves(&blocks.i);

    let layout = UnknownLayout {
        e: 0..n_e,
        i_l: n_e..n_e + n_l,
        i_v: n_e + n_l..n_e + n_l + n_v,
        elements: slots,
        size: offset,
    };
    Ok(CoupledDaeSystem { blocks, layout, elements: bound, v_sources, i_sources, cap, cond, ind })
}

impl CoupledDaeSystem {
    pub fn size(&self) -> usize {
        self.layout.size
    }

    pub fn is_linear(&self) -> bool {
        self.elements.iter().all(|e| e.is_linear())
    }

    fn port_voltages(&self, y: &DVector<f64>, slot: &ElementSlot) -> DVector<f64> {
        let e = y.rows(0, self.blocks.n_e());
        let a = self.blocks.lambda.matrix.columns(slot.lambda_cols.start, slot.lambda_cols.len());
        a.transpose() * e
    }

    /// Branch currents of the current sources at `t`.
    pub fn source_currents(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.i_sources.len(), self.i_sources.iter().map(|w| w.eval(t)))
    }

    pub fn residual(&self, ydot: &DVector<f64>, y: &DVector<f64>, t: f64) -> DVector<f64> {
        let b = &self.blocks;
        let lay = &self.layout;
        let n_e = b.n_e();
        let mut f = DVector::zeros(self.size());
        let e = y.rows(0, n_e);
        let edot = ydot.rows(0, n_e);
        let il = y.rows(lay.i_l.start, lay.i_l.len());
        let iv = y.rows(lay.i_v.start, lay.i_v.len());

        let mut kcl = &self.cap * edot + &self.cond * e + &b.l.matrix * il + &b.v.matrix * iv;
        kcl += &b.i.matrix * self.source_currents(t);
        for slot in &lay.elements {
            let a = b.lambda.matrix.columns(slot.lambda_cols.start, slot.lambda_cols.len());
            kcl += a * y.rows(slot.i.start, slot.i.len());
        }
        f.rows_mut(0, n_e).copy_from(&kcl);

        let ildot = ydot.rows(lay.i_l.start, lay.i_l.len());
        let lrow = ildot.component_mul(&self.ind) - b.l.matrix.transpose() * e;
        f.rows_mut(lay.i_l.start, lay.i_l.len()).copy_from(&lrow);

        let vs = DVector::from_iterator(self.v_sources.len(), self.v_sources.iter().map(|w| w.eval(t)));
        let vrow = b.v.matrix.transpose() * e - vs;
        f.rows_mut(lay.i_v.start, lay.i_v.len()).copy_from(&vrow);

        for (slot, el) in lay.elements.iter().zip(&self.elements) {
            let v = self.port_voltages(y, slot);
            let st = ElementState {
                dx: &ydot.as_slice()[slot.x.clone()],
                di: &ydot.as_slice()[slot.i.clone()],
                x: &y.as_slice()[slot.x.clone()],
                i: &y.as_slice()[slot.i.clone()],
                v: v.as_slice(),
                t,
            };
            let r = el.residual(&st);
            f.rows_mut(slot.x.start, r.len()).copy_from(&r);
        }
        f
    }

    /// `(∂F/∂ẏ, ∂F/∂y)` at the given point.
    pub fn jacobians(&self, ydot: &DVector<f64>, y: &DVector<f64>, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let b = &self.blocks;
        let lay = &self.layout;
        let n = self.size();
        let n_e = b.n_e();
        let mut em = DMatrix::zeros(n, n);
        let mut am = DMatrix::zeros(n, n);

        em.view_mut((0, 0), (n_e, n_e)).copy_from(&self.cap);
        am.view_mut((0, 0), (n_e, n_e)).copy_from(&self.cond);
        am.view_mut((0, lay.i_l.start), (n_e, lay.i_l.len())).copy_from(&b.l.matrix);
        am.view_mut((0, lay.i_v.start), (n_e, lay.i_v.len())).copy_from(&b.v.matrix);
        for k in 0..lay.i_l.len() {
            em[(lay.i_l.start + k, lay.i_l.start + k)] = self.ind[k];
        }
        am.view_mut((lay.i_l.start, 0), (lay.i_l.len(), n_e)).copy_from(&(-b.l.matrix.transpose()));
        am.view_mut((lay.i_v.start, 0), (lay.i_v.len(), n_e)).copy_from(&b.v.matrix.transpose());

        for (slot, el) in lay.elements.iter().zip(&self.elements) {
            let a = b.lambda.matrix.columns(slot.lambda_cols.start, slot.lambda_cols.len()).into_owned();
            am.view_mut((0, slot.i.start), (n_e, slot.i.len())).copy_from(&a);
            let v = self.port_voltages(y, slot);
            let st = ElementState {
                dx: &ydot.as_slice()[slot.x.clone()],
                di: &ydot.as_slice()[slot.i.clone()],
                x: &y.as_slice()[slot.x.clone()],
                i: &y.as_slice()[slot.i.clone()],
                v: v.as_slice(),
                t,
            };
            let j = el.jacobian(&st);
            let r0 = slot.x.start;
            let rows = el.rows();
            em.view_mut((r0, slot.x.start), (rows, slot.x.len())).copy_from(&j.dx);
            em.view_mut((r0, slot.i.start), (rows, slot.i.len())).copy_from(&j.di);
            am.view_mut((r0, slot.x.start), (rows, slot.x.len())).copy_from(&j.x);
            am.view_mut((r0, slot.i.start), (rows, slot.i.len())).copy_from(&j.i);
            am.view_mut((r0, 0), (rows, n_e)).copy_from(&(&j.v * a.transpose()));
        }
        (em, am)
    }

    /// Labels for every unknown, used for output columns.
    pub fn unknown_labels(&self) -> Vec<String> {
        let b = &self.blocks;
        let mut out: Vec<String> = b.nodes.iter().map(|n| format!("e_{n}")).collect();
        out.extend(b.l.labels.iter().map(|l| format!("i_{l}")));
        out.extend(b.v.labels.iter().map(|l| format!("i_{l}")));
        for slot in &self.layout.elements {
            out.extend((0..slot.x.len()).map(|k| format!("x_{}[{k}]", slot.name)));
            out.extend(slot.lambda_cols.clone().map(|c| format!("i_{}", b.lambda.labels[c])));
        }
        out
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.blocks.nodes.iter().position(|n| n == name)
    }

    /// Port voltages `A_λᵀ e` of all elements, in `A_λ` column order.
    pub fn all_port_voltages(&self, y: &DVector<f64>) -> DVector<f64> {
        self.blocks.lambda.matrix.transpose() * y.rows(0, self.blocks.n_e())
    }

    /// Replaces the waveform of the named source branch.
    pub fn set_source(&mut self, label: &str, w: Waveform) -> bool {
        if let Some(k) = self.blocks.v.labels.iter().position(|l| l == label) {
            self.v_sources[k] = w;
            return true;
        }
        if let Some(k) = self.blocks.i.labels.iter().position(|l| l == label) {
            self.i_sources[k] = w;
            return true;
        }
        false
    }
}
