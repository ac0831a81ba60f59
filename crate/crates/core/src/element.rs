//! Inductance-like multi-port elements.
//!
//! An element owns `n_dof` internal unknowns `x` and `n_ports` port
//! currents `i`; it sees the port voltages `v` but never their derivative.
//! Its residual has `n_dof + n_ports` rows.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Clone, Copy)]
pub struct ElementState<'a> {
    pub dx: &'a [f64],
    pub di: &'a [f64],
    pub x: &'a [f64],
    pub i: &'a [f64],
    pub v: &'a [f64],
    pub t: f64,
}

/// Partial derivatives of the residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementJacobian {
    pub dx: DMatrix<f64>,
    pub di: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub i: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl ElementJacobian {
    pub fn zeros(rows: usize, n_dof: usize, n_ports: usize) -> Self {
        ElementJacobian {
            dx: DMatrix::zeros(rows, n_dof),
            di: DMatrix::zeros(rows, n_ports),
            x: DMatrix::zeros(rows, n_dof),
            i: DMatrix::zeros(rows, n_ports),
            v: DMatrix::zeros(rows, n_ports),
        }
    }
}

pub trait GeneralizedElement: fmt::Debug + Send + Sync {
    fn n_dof(&self) -> usize;
    fn n_ports(&self) -> usize;
    fn residual(&self, s: &ElementState<'_>) -> DVector<f64>;
    fn jacobian(&self, s: &ElementState<'_>) -> ElementJacobian;
    /// Residual affine in all arguments with constant coefficients.
    fn is_linear(&self) -> bool {
        false
    }
    fn rows(&self) -> usize {
        self.n_dof() + self.n_ports()
    }
}

pub type ElementRef = Arc<dyn GeneralizedElement>;

/// `L di/dt - v = 0` with a constant SPD matrix `L`.
#[derive(Debug, Clone)]
pub struct LinearInductorElement {
    pub l: DMatrix<f64>,
}

impl LinearInductorElement {
    pub fn new(l: DMatrix<f64>) -> Result<Self, ElementError> {
        if !l.is_square() || (&l - l.transpose()).amax() > 1e-12 * l.amax() || linalg::min_sym_eigenvalue(&l) <= 0.0 {
            return Err(ElementError::NotSpd);
        }
        Ok(LinearInductorElement { l })
    }

    pub fn scalar(l: f64) -> Result<Self, ElementError> {
        Self::new(DMatrix::from_element(1, 1, l))
    }
}

impl GeneralizedElement for LinearInductorElement {
    fn n_dof(&self) -> usize {
        0
    }
    fn n_ports(&self) -> usize {
        self.l.nrows()
    }
    fn residual(&self, s: &ElementState<'_>) -> DVector<f64> {
        &self.l * DVector::from_column_slice(s.di) - DVector::from_column_slice(s.v)
    }
    fn jacobian(&self, _s: &ElementState<'_>) -> ElementJacobian {
        let n = self.n_ports();
        let mut j = ElementJacobian::zeros(n, 0, n);
        j.di = self.l.clone();
        j.v = -DMatrix::identity(n, n);
        j
    }
    fn is_linear(&self) -> bool {
        true
    }
}

/// Single-port flux formulation: `dΦ/dt - v = 0`, `φ(i) - Φ = 0`.
pub struct FluxInductorElement {
    pub flux: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub inductance: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for FluxInductorElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FluxInductorElement")
    }
}

impl FluxInductorElement {
    pub fn new(
        flux: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inductance: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FluxInductorElement { flux: Box::new(flux), inductance: Box::new(inductance) }
    }
}

impl GeneralizedElement for FluxInductorElement {
    fn n_dof(&self) -> usize {
        1
    }
    fn n_ports(&self) -> usize {
        1
    }
    fn residual(&self, s: &ElementState<'_>) -> DVector<f64> {
        DVector::from_vec(vec![s.dx[0] - s.v[0], (self.flux)(s.i[0]) - s.x[0]])
    }
    fn jacobian(&self, s: &ElementState<'_>) -> ElementJacobian {
        let mut j = ElementJacobian::zeros(2, 1, 1);
        j.dx[(0, 0)] = 1.0;
        j.x[(1, 0)] = -1.0;
        j.i[(1, 0)] = (self.inductance)(s.i[0]);
        j.v[(0, 0)] = -1.0;
        j
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElementError {
    #[error("inductance matrix is not symmetric positive definite")]
    NotSpd,
    #[error("port voltage derivative would be required (algebraic rows depend on v)")]
    VoltageInConstraints,
    #[error("element is not inductance-like at the probe: differentiated system is singular")]
    SingularExtraction,
}

/// Operating point for [`verify_inductance_like`].
#[derive(Debug, Clone)]
pub struct Probe {
    pub dx: Vec<f64>,
    pub di: Vec<f64>,
    pub x: Vec<f64>,
    pub i: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl Probe {
    pub fn zero(el: &dyn GeneralizedElement) -> Self {
        let (n, p) = (el.n_dof(), el.n_ports());
        Probe { dx: vec![0.0; n], di: vec![0.0; p], x: vec![0.0; n], i: vec![0.0; p], v: vec![0.0; p], t: 0.0 }
    }

    pub fn state(&self) -> ElementState<'_> {
        ElementState { dx: &self.dx, di: &self.di, x: &self.x, i: &self.i, v: &self.v, t: self.t }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InductanceEstimate {
    pub l: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub spd: bool,
}

/// Extracts `L_λ` with `di/dt = L_λ⁻¹ v + f` from the element's Jacobians.
///
/// Rows are split into the range of `∂F/∂(ẋ, i̇)` and its left kernel; the
/// kernel rows are differentiated once, which brings `(ẋ, i̇)` in through
/// `∂F/∂(x, i)`. Both row sets are equilibrated first.
pub fn verify_inductance_like(el: &dyn GeneralizedElement, probe: &Probe) -> Result<InductanceEstimate, ElementError> {
    let j = el.jacobian(&probe.state());
    let (n, p) = (el.n_dof(), el.n_ports());
    let mut e = linalg::hcat(&[&j.dx, &j.di]);
    let mut a = linalg::hcat(&[&j.x, &j.i]);
    let mut b = j.v.clone();
    for r in 0..e.nrows() {
        let s = e.row(r).amax().max(a.row(r).amax()).max(b.row(r).amax());
        if s > 0.0 {
            e.row_mut(r).unscale_mut(s);
            a.row_mut(r).unscale_mut(s);
            b.row_mut(r).unscale_mut(s);
        }
    }
    let range = linalg::range_basis(&e);
    let z = linalg::left_null_space(&e);
    let zb = z.transpose() * &b;
    if zb.ncols() > 0 && zb.amax() > 1e-10 * b.amax().max(1.0) {
        return Err(ElementError::VoltageInConstraints);
    }
    let stacked = linalg::vcat(&[&(range.transpose() * &e), &(z.transpose() * &a)]);
    if stacked.nrows() != n + p {
        return Err(ElementError::SingularExtraction);
    }
    let rhs = linalg::vcat(&[&(-(range.transpose() * &b)), &DMatrix::zeros(z.ncols(), p)]);
    let lu = stacked.lu();
    let sol = lu.solve(&rhs).ok_or(ElementError::SingularExtraction)?;
    let inv = sol.rows(n, p).into_owned();
    let l = inv.try_inverse().ok_or(ElementError::SingularExtraction)?;
    let min_eigenvalue = linalg::min_sym_eigenvalue(&l);
    Ok(InductanceEstimate { spd: min_eigenvalue > 0.0, l, min_eigenvalue })
}

fn probe_field(pr: &mut Probe, which: usize) -> &mut Vec<f64> {
    match which {
        0 => &mut pr.dx,
        1 => &mut pr.di,
        2 => &mut pr.x,
        3 => &mut pr.i,
        _ => &mut pr.v,
    }
}

/// Fourth-order central-difference Jacobian check; returns the worst error relative to
/// the largest entry of each Jacobian block.
pub fn jacobian_fd_error(el: &dyn GeneralizedElement, probe: &Probe, h: f64) -> f64 {
    let j = el.jacobian(&probe.state());
    let blocks: [(&DMatrix<f64>, usize); 5] = [(&j.dx, 0), (&j.di, 1), (&j.x, 2), (&j.i, 3), (&j.v, 4)];
    let mut worst = 0.0_f64;
    for (analytic, which) in blocks {
        let block_scale = analytic.amax();
        for c in 0..analytic.ncols() {
            let base = probe_field(&mut probe.clone(), which)[c];
            let step = h * base.abs().max(1.0);
            let eval = |offset: f64| {
                let mut pr = probe.clone();
                probe_field(&mut pr, which)[c] = base + offset;
                el.residual(&pr.state())
            };
            let fd = ((eval(step) - eval(-step)) * 8.0 - (eval(2.0 * step) - eval(-2.0 * step))) / (12.0 * step);
            let col = analytic.column(c);
            let scale = block_scale.max(fd.amax()).max(1e-300);
            worst = worst.max((col - fd).amax() / scale);
        }
    }
    worst
}
