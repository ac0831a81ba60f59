//! Gauged T-Ω and A* field elements.
//!
//! T-Ω unknowns are `x = (t, Ψ)` with edge field `h = P t + S̃ᵀ Ψ + Y_s i`:
//!
//! ```text
//! K_ρ t + Pᵀ ḃ(h)   = 0
//! S̃ b(h)            = 0
//! Y_sᵀ ḃ(h) - v     = 0
//! ```
//!
//! A* unknowns are `x = a` with facet flux `b = C P a`:
//!
//! ```text
//! M̄_σ ȧ + Pᵀ Cᵀ h(b) - X̄_s i = 0
//! X̄_sᵀ ȧ - v                 = 0
//! ```

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::element::{ElementJacobian, ElementRef, ElementState, GeneralizedElement};
use crate::fit::materials::{EdgeLaw, FacetLaw};
use crate::fit::operators::dense;
use crate::fit::{FitError, FitModel, Formulation};
use crate::gauge::{self, GaugeError, GaugeReport, GaugeSelection, TreeOptions};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulationError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error("gauge verification failed: {0}")]
    GaugeCheck(String),
    #[error("L_mu = S~ M_mu S~t is singular")]
    SingularLmu,
    #[error("Pt W P is singular: the cotree space contains a gradient")]
    SingularPwp,
    #[error("winding matrix does not have full column rank")]
    WindingRank,
    #[error("winding function touches the conducting region")]
    WindingTouchesConductor,
    #[error("curl-curl matrix is singular on the non-conducting space")]
    SingularKnn,
    #[error("field model has no coils")]
    NoCoils,
}

fn gauge_failure(rep: &GaugeReport) -> FormulationError {
    let failed: Vec<String> = rep.checks.iter().filter(|c| !c.pass).map(|c| format!("{} ({})", c.name, c.detail)).collect();
    FormulationError::GaugeCheck(failed.join("; "))
}

/// `Bᵀ diag(d) B`.
fn weighted_gram(b: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut db = b.clone();
    for (r, &s) in d.iter().enumerate() {
        db.row_mut(r).scale_mut(s);
    }
    b.transpose() * db
}

#[derive(Debug, Clone)]
pub struct TOmegaElement {
    pub n_t: usize,
    pub n_psi: usize,
    pub n_s: usize,
    /// `[P | S̃ᵀ | Y_s]`, edges × (n_t + n_psi + n_s).
    pub basis: DMatrix<f64>,
    pub k_rho: DMatrix<f64>,
    law: EdgeLaw,
    linear: bool,
    linear_jacobian: Option<ElementJacobian>,
}

impl TOmegaElement {
    pub fn new(model: &FitModel, gauge: &GaugeSelection) -> Result<Self, FormulationError> {
        if model.n_coils() == 0 {
            return Err(FormulationError::NoCoils);
        }
        let rep = gauge::verify_gauge_tomega(model, gauge);
        if !rep.pass() {
            return Err(gauge_failure(&rep));
        }
        let p = gauge.dense_p();
        let st = dense(&model.ops.s_tilde_t);
        let y = &model.windings.y_s;
        let basis = linalg::hcat(&[&p, &st, y]);
        let cp = dense(&model.ops.c) * &p;
        let k_rho = weighted_gram(&cp, model.mats.m_rho.as_slice());
        let law = EdgeLaw::new(&model.mesh, &model.map);
        let mut el = TOmegaElement {
            n_t: p.ncols(),
            n_psi: st.ncols(),
            n_s: y.ncols(),
            basis,
            k_rho,
            law,
            linear: model.is_linear(),
            linear_jacobian: None,
        };
        if el.linear {
            let z = vec![0.0; el.n_dof()];
            let zi = vec![0.0; el.n_s];
            let s = ElementState { dx: &z, di: &zi, x: &z, i: &zi, v: &zi, t: 0.0 };
            el.linear_jacobian = Some(el.eval_jacobian(&s));
        }
        Ok(el)
    }

    fn fields(&self, s: &ElementState<'_>) -> (DVector<f64>, DVector<f64>) {
        let z = DVector::from_iterator(self.basis.ncols(), s.x.iter().chain(s.i.iter()).copied());
        let zd = DVector::from_iterator(self.basis.ncols(), s.dx.iter().chain(s.di.iter()).copied());
        (&self.basis * z, &self.basis * zd)
    }

    fn eval_jacobian(&self, s: &ElementState<'_>) -> ElementJacobian {
        let (h, hd) = self.fields(s);
        let ne = h.len();
        let mut d1 = vec![0.0; ne];
        let mut d2 = vec![0.0; ne];
        for e in 0..ne {
            let (_, db, d2b) = self.law.eval(e, h[e]);
            d1[e] = db;
            d2[e] = d2b * hd[e];
        }
        let g1 = weighted_gram(&self.basis, &d1);
        let g2 = if self.linear { None } else { Some(weighted_gram(&self.basis, &d2)) };
        let (nt, np, ns) = (self.n_t, self.n_psi, self.n_s);
        let n = nt + np;
        let mut j = ElementJacobian::zeros(n + ns, n, ns);
        let dyn_rows = (0..nt).chain(n..n + ns);
        for r in dyn_rows {
            for c in 0..n {
                j.dx[(r, c)] = g1[(r, c)];
                if let Some(g2) = &g2 {
                    j.x[(r, c)] = g2[(r, c)];
                }
            }
            for c in 0..ns {
                j.di[(r, c)] = g1[(r, n + c)];
                if let Some(g2) = &g2 {
                    j.i[(r, c)] = g2[(r, n + c)];
                }
            }
        }
        for r in 0..nt {
            for c in 0..nt {
                j.x[(r, c)] += self.k_rho[(r, c)];
            }
        }
        for r in nt..n {
            for c in 0..n {
                j.x[(r, c)] = g1[(r, c)];
            }
            for c in 0..ns {
                j.i[(r, c)] = g1[(r, n + c)];
            }
        }
        for k in 0..ns {
            j.v[(n + k, k)] = -1.0;
        }
        j
    }
}

impl GeneralizedElement for TOmegaElement {
    fn n_dof(&self) -> usize {
        self.n_t + self.n_psi
    }

    fn n_ports(&self) -> usize {
        self.n_s
    }

    fn residual(&self, s: &ElementState<'_>) -> DVector<f64> {
        let (h, hd) = self.fields(s);
        let ne = h.len();
        let mut bdot = DVector::zeros(ne);
        let mut b = DVector::zeros(ne);
        for e in 0..ne {
            let (be, db, _) = self.law.eval(e, h[e]);
            b[e] = be;
            bdot[e] = db * hd[e];
        }
        let dyn_part = self.basis.tr_mul(&bdot);
        let stat_part = self.basis.tr_mul(&b);
        let (nt, np, ns) = (self.n_t, self.n_psi, self.n_s);
        let n = nt + np;
        let mut r = DVector::zeros(n + ns);
        let t = DVector::from_column_slice(&s.x[..nt]);
        let kt = &self.k_rho * t;
        for k in 0..nt {
            r[k] = kt[k] + dyn_part[k];
        }
        for k in nt..n {
            r[k] = stat_part[k];
        }
        for k in 0..ns {
            r[n + k] = dyn_part[n + k] - s.v[k];
        }
        r
    }

    fn jacobian(&self, s: &ElementState<'_>) -> ElementJacobian {
        match &self.linear_jacobian {
            Some(j) => j.clone(),
            None => self.eval_jacobian(s),
        }
    }

    fn is_linear(&self) -> bool {
        self.linear
    }
}

#[derive(Debug, Clone)]
pub struct AStarElement {
    pub n_a: usize,
    pub n_s: usize,
    /// `C P`, facets × n_a.
    pub cp: DMatrix<f64>,
    pub x_bar: DMatrix<f64>,
    pub m_sigma: DVector<f64>,
    law: FacetLaw,
    linear: bool,
    linear_jacobian: Option<ElementJacobian>,
}

impl AStarElement {
    pub fn new(model: &FitModel, gauge: &GaugeSelection) -> Result<Self, FormulationError> {
        if model.n_coils() == 0 {
            return Err(FormulationError::NoCoils);
        }
        let rep = gauge::verify_gauge_astar(model, gauge);
        if !rep.pass() {
            return Err(gauge_failure(&rep));
        }
        let p = gauge.dense_p();
        let cp = dense(&model.ops.c) * &p;
        let x_bar = p.transpose() * &model.windings.x_s;
        let m_sigma = DVector::from_iterator(gauge.columns.len(), gauge.columns.iter().map(|&e| model.mats.m_sigma[e]));
        check_astar_winding(&x_bar, &m_sigma)?;
        let law = FacetLaw::new(&model.mesh, &model.map);
        let mut el = AStarElement {
            n_a: p.ncols(),
            n_s: x_bar.ncols(),
            cp,
            x_bar,
            m_sigma,
            law,
            linear: model.is_linear(),
            linear_jacobian: None,
        };
        if el.linear {
            let z = vec![0.0; el.n_a];
            let zi = vec![0.0; el.n_s];
            let s = ElementState { dx: &z, di: &zi, x: &z, i: &zi, v: &zi, t: 0.0 };
            el.linear_jacobian = Some(el.eval_jacobian(&s));
        }
        Ok(el)
    }

    fn eval_jacobian(&self, s: &ElementState<'_>) -> ElementJacobian {
        let (na, ns) = (self.n_a, self.n_s);
        let b = &self.cp * DVector::from_column_slice(s.x);
        let d: Vec<f64> = (0..b.len()).map(|f| self.law.eval(f, b[f]).1).collect();
        let k = weighted_gram(&self.cp, &d);
        let mut j = ElementJacobian::zeros(na + ns, na, ns);
        for r in 0..na {
            j.dx[(r, r)] = self.m_sigma[r];
            for c in 0..na {
                j.x[(r, c)] = k[(r, c)];
            }
            for c in 0..ns {
                j.i[(r, c)] = -self.x_bar[(r, c)];
                j.dx[(na + c, r)] = self.x_bar[(r, c)];
            }
        }
        for c in 0..ns {
            j.v[(na + c, c)] = -1.0;
        }
        j
    }
}

fn check_astar_winding(x_bar: &DMatrix<f64>, m_sigma: &DVector<f64>) -> Result<(), FormulationError> {
    if linalg::numerical_rank(x_bar) != x_bar.ncols() {
        return Err(FormulationError::WindingRank);
    }
    for r in 0..x_bar.nrows() {
        if m_sigma[r] > 0.0 && x_bar.row(r).amax() > 0.0 {
            return Err(FormulationError::WindingTouchesConductor);
        }
    }
    Ok(())
}

impl GeneralizedElement for AStarElement {
    fn n_dof(&self) -> usize {
        self.n_a
    }

    fn n_ports(&self) -> usize {
        self.n_s
    }

    fn residual(&self, s: &ElementState<'_>) -> DVector<f64> {
        let (na, ns) = (self.n_a, self.n_s);
        let a = DVector::from_column_slice(s.x);
        let ad = DVector::from_column_slice(s.dx);
        let i = DVector::from_column_slice(s.i);
        let b = &self.cp * a;
        let hb = DVector::from_iterator(b.len(), (0..b.len()).map(|f| self.law.eval(f, b[f]).0));
        let top = self.m_sigma.component_mul(&ad) + self.cp.tr_mul(&hb) - &self.x_bar * i;
        let bottom = self.x_bar.tr_mul(&ad);
        let mut r = DVector::zeros(na + ns);
        r.rows_mut(0, na).copy_from(&top);
        for k in 0..ns {
            r[na + k] = bottom[k] - s.v[k];
        }
        r
    }

    fn jacobian(&self, s: &ElementState<'_>) -> ElementJacobian {
        match &self.linear_jacobian {
            Some(j) => j.clone(),
            None => self.eval_jacobian(s),
        }
    }

    fn is_linear(&self) -> bool {
        self.linear
    }
}

pub fn build_tomega(model: &FitModel) -> Result<TOmegaElement, FormulationError> {
    let g = gauge::gauge_tomega(model, TreeOptions::default())?;
    TOmegaElement::new(model, &g)
}

pub fn build_astar(model: &FitModel) -> Result<AStarElement, FormulationError> {
    let g = gauge::gauge_astar(model, TreeOptions::default())?;
    AStarElement::new(model, &g)
}

/// The element selected by the spec's `formulation` key.
pub fn build_field_element(model: &FitModel) -> Result<ElementRef, FormulationError> {
    Ok(match model.spec.formulation {
        Formulation::TOmega => Arc::new(build_tomega(model)?),
        Formulation::AStar => Arc::new(build_astar(model)?),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LLambda {
    pub l: DMatrix<f64>,
    pub formulation: Formulation,
    pub min_eigenvalue: f64,
}

impl LLambda {
    fn new(l: DMatrix<f64>, formulation: Formulation) -> Self {
        let l = (&l + l.transpose()) * 0.5;
        let min_eigenvalue = linalg::min_sym_eigenvalue(&l);
        LLambda { l, formulation, min_eigenvalue }
    }

    pub fn is_spd(&self) -> bool {
        self.min_eigenvalue > 0.0
    }
}

fn scale_rows(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (r, &s) in d.iter().enumerate() {
        out.row_mut(r).scale_mut(s);
    }
    out
}

/// `L_λ = Y_sᵀ (W - W P (Pᵀ W P)⁻¹ Pᵀ W) Y_s` with
/// `W = M_μ - M_μ S̃ᵀ L_μ⁻¹ S̃ M_μ`, `L_μ = S̃ M_μ S̃ᵀ`.
pub fn l_lambda_tomega(model: &FitModel, gauge: &GaugeSelection) -> Result<LLambda, FormulationError> {
    let m = &model.mats.m_mu;
    let st = dense(&model.ops.s_tilde_t);
    let p = gauge.dense_p();
    let y = &model.windings.y_s;
    let l_mu = weighted_gram(&st, m.as_slice());
    let chol = l_mu.cholesky().ok_or(FormulationError::SingularLmu)?;
    let w_apply = |x: &DMatrix<f64>| -> DMatrix<f64> {
        let mx = scale_rows(x, m);
        let inner = chol.solve(&st.tr_mul(&mx));
        mx - scale_rows(&(&st * inner), m)
    };
    let wy = w_apply(y);
    let mut l = y.tr_mul(&wy);
    if p.ncols() > 0 {
        let wp = w_apply(&p);
        let pwp = p.tr_mul(&wp);
        let pwp_chol = pwp.cholesky().ok_or(FormulationError::SingularPwp)?;
        let pwy = p.tr_mul(&wy);
        l -= pwy.tr_mul(&pwp_chol.solve(&pwy));
    }
    Ok(LLambda::new(l, Formulation::TOmega))
}

/// `L_λ = X̄ᵀ Q_σ (Q_σ K_ν Q_σ + P_σ)⁻¹ Q_σ X̄` with `Q_σ` the orthogonal
/// projector onto `ker M̄_σ`.
pub fn l_lambda_astar(model: &FitModel, gauge: &GaugeSelection) -> Result<LLambda, FormulationError> {
    let p = gauge.dense_p();
    let cp = dense(&model.ops.c) * &p;
    let k = weighted_gram(&cp, model.mats.m_nu.as_slice());
    let x_bar = p.tr_mul(&model.windings.x_s);
    let m_sigma = DVector::from_iterator(gauge.columns.len(), gauge.columns.iter().map(|&e| model.mats.m_sigma[e]));
    check_astar_winding(&x_bar, &m_sigma)?;
    let n = k.nrows();
    let q = DVector::from_iterator(n, m_sigma.iter().map(|&s| if s > 0.0 { 0.0 } else { 1.0 }));
    let mut sys = scale_rows(&scale_rows(&k, &q).transpose(), &q);
    for r in 0..n {
        sys[(r, r)] += 1.0 - q[r];
    }
    let qx = scale_rows(&x_bar, &q);
    let chol = sys.cholesky().ok_or(FormulationError::SingularKnn)?;
    let l = qx.tr_mul(&chol.solve(&qx));
    Ok(LLambda::new(l, Formulation::AStar))
}

/// Closed-form `L_λ` of the spec's formulation with the default tree.
pub fn l_lambda(model: &FitModel) -> Result<LLambda, FormulationError> {
    match model.spec.formulation {
        Formulation::TOmega => l_lambda_tomega(model, &gauge::gauge_tomega(model, TreeOptions::default())?),
        Formulation::AStar => l_lambda_astar(model, &gauge::gauge_astar(model, TreeOptions::default())?),
    }
}

/// Least-squares split `x = S̃ᵀ x₁ + M_μ⁻¹ Cᵀ x₂`.
pub fn helmholtz_split(x: &DVector<f64>, model: &FitModel) -> (DVector<f64>, DVector<f64>) {
    let st = dense(&model.ops.s_tilde_t);
    let ct = dense(&model.ops.c).transpose();
    let inv_m = model.mats.m_mu.map(|v| 1.0 / v);
    let rot = scale_rows(&ct, &inv_m);
    let mut a = linalg::hcat(&[&st, &rot]);
    let scales: Vec<f64> = (0..a.ncols()).map(|c| a.column(c).norm().max(f64::MIN_POSITIVE)).collect();
    for (c, s) in scales.iter().enumerate() {
        a.column_mut(c).unscale_mut(*s);
    }
    let svd = a.clone().svd(true, true);
    let tol = linalg::rank_tolerance(a.nrows(), a.ncols(), svd.singular_values.max());
    let mut sol = svd.solve(x, tol).expect("svd computed with u and v");
    for (c, s) in scales.iter().enumerate() {
        sol[c] /= s;
    }
    let n1 = st.ncols();
    (sol.rows(0, n1).into_owned(), sol.rows(n1, ct.ncols()).into_owned())
}

/// `x - S̃ᵀ x₁ - M_μ⁻¹ Cᵀ x₂`.
pub fn helmholtz_residual(x: &DVector<f64>, x1: &DVector<f64>, x2: &DVector<f64>, model: &FitModel) -> DVector<f64> {
    let grad = &model.ops.s_tilde_t * x1;
    let rot = model.ops.c.transpose() * x2;
    let rot = DVector::from_iterator(rot.len(), rot.iter().zip(model.mats.m_mu.iter()).map(|(r, m)| r / m));
    x - grad - rot
}
