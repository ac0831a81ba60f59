//! Implicit Euler with Newton, consistent initialization and pencil index.

use nalgebra::linalg::LU;
use nalgebra::{DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::element::{GeneralizedElement, Probe};
use crate::linalg::{equilibrate_pencil, hcat};
use crate::mna::CoupledDaeSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("singular iteration matrix at t = {t:e}; {hint}")]
    Singular { t: f64, hint: String },
    #[error("Newton did not converge at t = {t:e} after {iterations} iterations (last increment {increment:e})")]
    NoConvergence { t: f64, iterations: usize, increment: f64 },
    #[error("no consistent initial value found (constraint residual {0:e})")]
    Inconsistent(f64),
    #[error("the matrix pencil is singular")]
    SingularPencil,
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Newton on the algebraic part only, differential components kept.
    ConsistentAlgebraic,
    /// Start from zero at `t0 - 2 dt` and take two steps.
    TwoStepWarmup,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t0: f64,
    pub t_end: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub init: InitMode,
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        SolverConfig { dt, t0: 0.0, t_end, newton_tol: 1e-10, newton_max_iter: 25, init: InitMode::TwoStepWarmup }
    }

    /// Number of steps; the last one lands on `t_end`.
    pub fn n_steps(&self) -> usize {
        ((self.t_end - self.t0) / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps() {
            self.t_end
        } else {
            self.t0 + k as f64 * self.dt
        }
    }

    fn validate(&self) -> Result<(), SolverError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SolverError::InvalidGrid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.t_end.is_nan() || self.t0.is_nan() || self.t_end < self.t0 {
            return Err(SolverError::InvalidGrid(format!("t_end {} precedes t0 {}", self.t_end, self.t0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OutputKind {
    Unknown(usize),
    PortVoltage(usize),
    SourceCurrent(usize),
}

/// Which quantities go into the output columns, and in which order:
/// node potentials, inductor, voltage-source and element port currents,
/// element port voltages, current-source currents.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSelection {
    pub labels: Vec<String>,
    kinds: Vec<OutputKind>,
}

impl OutputSelection {
    pub fn new(sys: &CoupledDaeSystem, nodes: Option<&[String]>) -> Result<Self, SolverError> {
        let b = &sys.blocks;
        let lay = &sys.layout;
        let mut labels = Vec::new();
        let mut kinds = Vec::new();
        let node_ids: Vec<usize> = match nodes {
            None => (0..b.n_e()).collect(),
            Some(list) => list
                .iter()
                .map(|n| sys.node_index(n).ok_or_else(|| SolverError::UnknownNode(n.clone())))
                .collect::<Result<_, _>>()?,
        };
        for k in node_ids {
            labels.push(format!("e_{}", b.nodes[k]));
            kinds.push(OutputKind::Unknown(k));
        }
        for (k, l) in b.l.labels.iter().enumerate() {
            labels.push(format!("i_{l}"));
            kinds.push(OutputKind::Unknown(lay.i_l.start + k));
        }
        for (k, l) in b.v.labels.iter().enumerate() {
            labels.push(format!("i_{l}"));
            kinds.push(OutputKind::Unknown(lay.i_v.start + k));
        }
        for slot in &lay.elements {
            for (j, c) in slot.lambda_cols.clone().enumerate() {
                labels.push(format!("i_{}", b.lambda.labels[c]));
                kinds.push(OutputKind::Unknown(slot.i.start + j));
            }
        }
        for (c, l) in b.lambda.labels.iter().enumerate() {
            labels.push(format!("v_{l}"));
            kinds.push(OutputKind::PortVoltage(c));
        }
        for (k, l) in b.i.labels.iter().enumerate() {
            labels.push(format!("i_{l}"));
            kinds.push(OutputKind::SourceCurrent(k));
        }
        Ok(OutputSelection { labels, kinds })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn extract(&self, sys: &CoupledDaeSystem, y: &DVector<f64>, t: f64) -> Vec<f64> {
        let pv = sys.all_port_voltages(y);
        self.kinds
            .iter()
            .map(|k| match *k {
                OutputKind::Unknown(i) => y[i],
                OutputKind::PortVoltage(c) => pv[c],
                OutputKind::SourceCurrent(s) => sys.i_sources[s].eval(t),
            })
            .collect()
    }
}

/// Sampled output columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn column(&self, label: &str) -> Option<Vec<f64>> {
        let c = self.labels.iter().position(|l| l == label)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }

    /// `max |self - other|` over all shared samples and columns.
    pub fn max_abs_difference(&self, other: &TimeSeries) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string()];
        header.extend(self.labels.iter().cloned());
        wr.write_record(&header)?;
        for (t, r) in self.times.iter().zip(&self.rows) {
            wr.write_record(std::iter::once(fmt_num(*t)).chain(r.iter().map(|v| fmt_num(*v))))?;
        }
        wr.flush()
    }
}

pub fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Outcome of one implicit Euler step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub y: DVector<f64>,
    /// Row-scaled residual infinity norms, one per Newton iterate.
    pub residuals: Vec<f64>,
    /// Infinity norms of the Newton increments.
    pub increments: Vec<f64>,
}

fn row_scale(j: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        j.nrows(),
        j.row_iter().map(|r| {
            let m = r.amax();
            if m > 0.0 {
                1.0 / m
            } else {
                1.0
            }
        }),
    )
}

type ScaledLu = (LU<f64, Dyn, Dyn>, DVector<f64>);

fn scaled_lu(j: &DMatrix<f64>, t: f64) -> Result<ScaledLu, SolverError> {
    let s = row_scale(j);
    let mut js = j.clone();
    for (i, mut r) in js.row_iter_mut().enumerate() {
        r.scale_mut(s[i]);
    }
    let lu = js.lu();
    let u = lu.u();
    let d: Vec<f64> = u.diagonal().iter().map(|x| x.abs()).collect();
    let hi = d.iter().cloned().fold(0.0, f64::max);
    let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
    if d.is_empty() || lo.is_nan() || lo <= 1e-14 * hi {
        return Err(SolverError::Singular {
            t,
            hint: "check for floating nodes, loops of voltage sources or cutsets of current sources".into(),
        });
    }
    Ok((lu, s))
}

/// Implicit Euler stepper. For linear systems the iteration matrix is
/// factored once and each step is a single solve.
pub struct Stepper<'a> {
    sys: &'a CoupledDaeSystem,
    dt: f64,
    tol: f64,
    max_iter: usize,
    cached: Option<(LU<f64, Dyn, Dyn>, DVector<f64>)>,
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a CoupledDaeSystem, cfg: &SolverConfig) -> Self {
        Stepper { sys, dt: cfg.dt, tol: cfg.newton_tol, max_iter: cfg.newton_max_iter, cached: None }
    }

    fn iteration_matrix(&self, ydot: &DVector<f64>, y: &DVector<f64>, t: f64) -> DMatrix<f64> {
        let (e, a) = self.sys.jacobians(ydot, y, t);
        e / self.dt + a
    }

    /// Advances `y_prev` to time `t`.
    pub fn step(&mut self, y_prev: &DVector<f64>, t: f64) -> Result<StepOutcome, SolverError> {
        let n = y_prev.len();
        let mut y = y_prev.clone();
        let mut residuals = Vec::new();
        let mut increments = Vec::new();
        if self.sys.is_linear() {
            if self.cached.is_none() {
                let j = self.iteration_matrix(&DVector::zeros(n), &y, t);
                self.cached = Some(scaled_lu(&j, t)?);
            }
            let (lu, s) = self.cached.as_ref().expect("factored");
            let f = self.sys.residual(&DVector::zeros(n), &y, t);
            let fs = f.component_mul(s);
            residuals.push(fs.amax());
            let d = lu.solve(&(-fs)).ok_or(SolverError::Singular { t, hint: "LU solve failed".into() })?;
            increments.push(d.amax());
            y += d;
            let f = self.sys.residual(&((&y - y_prev) / self.dt), &y, t);
            residuals.push(f.component_mul(s).amax());
            return Ok(StepOutcome { y, residuals, increments });
        }
        let mut last = f64::INFINITY;
        for _ in 0..self.max_iter {
            let ydot = (&y - y_prev) / self.dt;
            let f = self.sys.residual(&ydot, &y, t);
            let j = self.iteration_matrix(&ydot, &y, t);
            let (lu, s) = scaled_lu(&j, t)?;
            let fs = f.component_mul(&s);
            residuals.push(fs.amax());
            if fs.amax() == 0.0 {
                return Ok(StepOutcome { y, residuals, increments });
            }
            let d = lu.solve(&(-fs)).ok_or(SolverError::Singular { t, hint: "LU solve failed".into() })?;
            y += &d;
            last = d.amax();
            increments.push(last);
            if last <= self.tol * (1.0 + y.amax()) {
                let ydot = (&y - y_prev) / self.dt;
                residuals.push(self.sys.residual(&ydot, &y, t).component_mul(&s).amax());
                return Ok(StepOutcome { y, residuals, increments });
            }
        }
        Err(SolverError::NoConvergence { t, iterations: self.max_iter, increment: last })
    }
}

/// Convergence order estimate `ln(r₃/r₂) / ln(r₂/r₁)` from the last three
/// entries of a decreasing sequence (residuals or increments) above `floor`.
pub fn newton_order(residuals: &[f64], floor: f64) -> Option<f64> {
    let r: Vec<f64> = residuals.iter().cloned().filter(|&x| x > floor).collect();
    if r.len() < 3 {
        return None;
    }
    let k = r.len();
    let (a, b, c) = (r[k - 3], r[k - 2], r[k - 1]);
    Some((c / b).ln() / (b / a).ln())
}

/// Row-equilibrated left kernel basis of `E`, returned as `Zᵀ S`.
fn constraint_rows(e: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = e.nrows();
    let s = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let m = e.row(i).amax().max(a.row(i).amax());
            if m > 0.0 {
                1.0 / m
            } else {
                1.0
            }
        }),
    );
    let es = DMatrix::from_diagonal(&s) * e;
    let z = crate::linalg::left_null_space(&es);
    z.transpose() * DMatrix::from_diagonal(&s)
}

/// Relative residual of the algebraic constraints at `(y, t)`:
/// `‖Zᵀ F(0, y, t)‖ / ‖|Zᵀ| (|A| |y| + |F(0, 0, t)|)‖`, with `Z` spanning
/// the left kernel of `E` and `A` the Jacobian at `y`.
pub fn algebraic_residual(sys: &CoupledDaeSystem, y: &DVector<f64>, t: f64) -> f64 {
    let n = y.len();
    let zero = DVector::zeros(n);
    let (e, a) = sys.jacobians(&zero, y, t);
    let zt = constraint_rows(&e, &a);
    if zt.nrows() == 0 {
        return 0.0;
    }
    let f = sys.residual(&zero, y, t);
    let b = sys.residual(&zero, &zero, t);
    let num = (&zt * &f).norm();
    let mag = zt.abs() * (a.abs() * y.abs() + b.abs());
    let den = mag.norm();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Solves the algebraic constraints for `y0 + N w`, `N = ker E`.
pub fn consistent_algebraic(
    sys: &CoupledDaeSystem,
    y0: &DVector<f64>,
    t: f64,
    cfg: &SolverConfig,
) -> Result<DVector<f64>, SolverError> {
    let n = y0.len();
    let zero = DVector::zeros(n);
    let mut y = y0.clone();
    for _ in 0..cfg.newton_max_iter {
        let (e, a) = sys.jacobians(&zero, &y, t);
        let zt = constraint_rows(&e, &a);
        if zt.nrows() == 0 {
            return Ok(y);
        }
        let kern = crate::linalg::null_space(&e);
        let g = &zt * sys.residual(&zero, &y, t);
        let jg = &zt * a * &kern;
        if kern.ncols() == 0 || g.amax() == 0.0 {
            break;
        }
        let svd = jg.svd(true, true);
        let tol = 1e-12 * svd.singular_values.max();
        let w = svd.solve(&(-&g), tol).map_err(|_| SolverError::Inconsistent(g.norm()))?;
        let d = kern * w;
        y += &d;
        if d.amax() <= cfg.newton_tol * (1.0 + y.amax()) {
            break;
        }
    }
    let r = algebraic_residual(sys, &y, t);
    if r > 1e-8 {
        return Err(SolverError::Inconsistent(r));
    }
    Ok(y)
}

/// Zero state at `t0 - 2 dt`, then two implicit Euler steps.
pub fn two_step_warmup(sys: &CoupledDaeSystem, cfg: &SolverConfig) -> Result<DVector<f64>, SolverError> {
    let mut st = Stepper::new(sys, cfg);
    let y = DVector::zeros(sys.size());
    let y = st.step(&y, cfg.t0 - cfg.dt)?.y;
    Ok(st.step(&y, cfg.t0)?.y)
}

pub fn initial_state(
    sys: &CoupledDaeSystem,
    cfg: &SolverConfig,
    guess: Option<&DVector<f64>>,
) -> Result<DVector<f64>, SolverError> {
    match cfg.init {
        InitMode::TwoStepWarmup => two_step_warmup(sys, cfg),
        InitMode::ConsistentAlgebraic => {
            let y0 = guess.cloned().unwrap_or_else(|| DVector::zeros(sys.size()));
            consistent_algebraic(sys, &y0, cfg.t0, cfg)
        }
    }
}

/// Integrates over `[t0, t_end]` and hands each output row to `sink`.
pub fn implicit_euler<F>(
    sys: &CoupledDaeSystem,
    cfg: &SolverConfig,
    outputs: &OutputSelection,
    mut sink: F,
) -> Result<DVector<f64>, SolverError>
where
    F: FnMut(f64, Vec<f64>),
{
    cfg.validate()?;
    let mut y = initial_state(sys, cfg, None)?;
    sink(cfg.t0, outputs.extract(sys, &y, cfg.t0));
    let mut st = Stepper::new(sys, cfg);
    for k in 1..=cfg.n_steps() {
        let t = cfg.time(k);
        y = st.step(&y, t)?.y;
        sink(t, outputs.extract(sys, &y, t));
    }
    Ok(y)
}

pub fn simulate(sys: &CoupledDaeSystem, cfg: &SolverConfig, outputs: &OutputSelection) -> Result<TimeSeries, SolverError> {
    let mut ts = TimeSeries { labels: outputs.labels.clone(), ..Default::default() };
    implicit_euler(sys, cfg, outputs, |t, row| {
        ts.times.push(t);
        ts.rows.push(row);
    })?;
    Ok(ts)
}

/// `(E, A)` of the linearization at `(ẏ, y, t)`.
pub fn linearize(sys: &CoupledDaeSystem, ydot: &DVector<f64>, y: &DVector<f64>, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    sys.jacobians(ydot, y, t)
}

fn kernel_abs(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    let mut sq = DMatrix::zeros(r.max(c), c);
    sq.rows_mut(0, r).copy_from(m);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let keep: Vec<usize> = (0..c).filter(|&k| svd.singular_values[k] <= tol).collect();
    let mut out = DMatrix::zeros(c, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        out.set_column(j, &vt.row(k).transpose());
    }
    out
}

fn range_abs(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if c == 0 || r == 0 {
        return DMatrix::zeros(r, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > tol).collect();
    let mut out = DMatrix::zeros(r, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        out.set_column(j, &u.column(k));
    }
    out
}

fn full_rank(m: &DMatrix<f64>, tol: f64) -> bool {
    let sv = m.singular_values();
    sv.iter().all(|&s| s > tol)
}

/// Kronecker index of a regular pencil `E ẏ + A y`, computed from the
/// Wong sequence `W_{k+1} = E⁻¹(A W_k)` after Ruiz equilibration.
pub fn pencil_index(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<usize, SolverError> {
    let n = e.nrows();
    assert_eq!(e.shape(), (n, n));
    assert_eq!(a.shape(), (n, n));
    if n == 0 {
        return Ok(0);
    }
    let (e, a) = equilibrate_pencil(e, a);
    let scale = e.amax().max(a.amax());
    let tol = 1e-9 * scale * (n as f64).sqrt();
    if ![0.7390851332, -1.618034, 2.9].iter().any(|&l| full_rank(&(&e * l + &a), tol)) {
        return Err(SolverError::SingularPencil);
    }
    let mut w = DMatrix::<f64>::zeros(n, 0);
    for k in 0..=n {
        let r = range_abs(&(&a * &w), tol);
        let m = &e - &r * (r.transpose() * &e);
        let next = kernel_abs(&m, tol);
        if next.ncols() == w.ncols() {
            return Ok(k);
        }
        w = next;
    }
    Err(SolverError::SingularPencil)
}

/// Which port quantity is prescribed when probing an element alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Excitation {
    Voltage,
    Current,
}

/// Pencil of an element with its port voltages (or currents) given.
/// Unknowns are `(x, i)` for voltage and `(x, v)` for current excitation.
pub fn element_pencil(el: &dyn GeneralizedElement, probe: &Probe, mode: Excitation) -> (DMatrix<f64>, DMatrix<f64>) {
    let j = el.jacobian(&probe.state());
    match mode {
        Excitation::Voltage => (hcat(&[&j.dx, &j.di]), hcat(&[&j.x, &j.i])),
        Excitation::Current => {
            let zero = DMatrix::zeros(j.dx.nrows(), el.n_ports());
            (hcat(&[&j.dx, &zero]), hcat(&[&j.x, &j.v]))
        }
    }
}
