//! Netlist loading with field bindings, and the perturbation experiment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::element::ElementRef;
use crate::fit::{FitError, FitModel};
use crate::formulations::{build_field_element, FormulationError};
use crate::mna::{assemble, CoupledDaeSystem, MnaError};
use crate::netlist::{parse_netlist, NetlistDocument, ParseError, Waveform};
use crate::solver::{simulate, InitMode, OutputSelection, SolverConfig, SolverError, TimeSeries};
use crate::topology::{classify_index, TopologyError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CircuitError {
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("field spec for '{branch}': {err}")]
    Fit { branch: String, err: FitError },
    #[error("field element '{branch}': {err}")]
    Formulation { branch: String, err: FormulationError },
    #[error(transparent)]
    Mna(#[from] MnaError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{0}")]
    Experiment(String),
}

pub fn read_file(path: &Path) -> Result<String, CircuitError> {
    std::fs::read_to_string(path).map_err(|e| CircuitError::Io { path: path.to_path_buf(), msg: e.to_string() })
}

/// Builds every `field=` element, resolving spec paths against `base`.
pub fn bind_field_elements(doc: &NetlistDocument, base: &Path) -> Result<BTreeMap<String, ElementRef>, CircuitError> {
    let mut out = BTreeMap::new();
    for b in &doc.branches {
        let Some(spec) = b.field_spec() else { continue };
        let path = base.join(spec);
        let model = FitModel::from_text(&read_file(&path)?)
            .map_err(|err| CircuitError::Fit { branch: b.name.clone(), err })?;
        let el = build_field_element(&model).map_err(|err| CircuitError::Formulation { branch: b.name.clone(), err })?;
        out.insert(b.name.clone(), el);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LoadedCircuit {
    pub doc: NetlistDocument,
    pub system: CoupledDaeSystem,
}

pub fn load_circuit(path: &Path) -> Result<LoadedCircuit, CircuitError> {
    let doc = parse_netlist(&read_file(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let elements = bind_field_elements(&doc, base)?;
    let system = assemble(&doc, &elements)?;
    Ok(LoadedCircuit { doc, system })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationConfig {
    pub epsilon: f64,
    pub dt_list: Vec<f64>,
    pub t0: f64,
    pub t_end: f64,
    /// `f_p = fp_factor · f_s`; DC sources use `f_s = 1`.
    pub fp_factor: f64,
    pub init: InitMode,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            epsilon: 1e-4,
            dt_list: vec![8e-5, 4e-5, 2e-5, 1e-5],
            t0: 0.0,
            t_end: 0.5,
            fp_factor: 1e9,
            init: InitMode::TwoStepWarmup,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbationRun {
    pub dt: f64,
    pub base: TimeSeries,
    pub perturbed: TimeSeries,
    /// `max_t |perturbed - base|` over all output columns.
    pub deviation: f64,
}

#[derive(Debug, Clone)]
pub struct PerturbationResult {
    pub source: String,
    pub index: u8,
    pub epsilon: f64,
    /// Sorted by decreasing `dt`.
    pub runs: Vec<PerturbationRun>,
}

impl PerturbationResult {
    /// `D(dt_{k+1}) / D(dt_k)` over consecutive runs.
    pub fn ratios(&self) -> Vec<f64> {
        self.runs.windows(2).map(|w| w[1].deviation / w[0].deviation).collect()
    }

    pub fn bounded(&self) -> bool {
        self.runs.iter().all(|r| r.deviation <= 10.0 * self.epsilon)
    }

    pub fn grows_inverse_dt(&self) -> bool {
        let r = self.ratios();
        !r.is_empty() && r.iter().all(|q| (1.5..=2.5).contains(q))
    }

    /// No halving ratio reaches the lower edge of the 1/dt band.
    pub fn no_dt_growth(&self) -> bool {
        self.ratios().iter().all(|q| *q < 1.5)
    }

    pub fn verdict(&self) -> String {
        let r: Vec<String> = self.ratios().iter().map(|q| format!("{q:.3}")).collect();
        let r = r.join(", ");
        if self.bounded() && self.no_dt_growth() {
            "index-1: bounded, no dt growth".to_string()
        } else if self.grows_inverse_dt() {
            "index-2: D grows ∝ 1/dt".to_string()
        } else if self.bounded() {
            format!("inconclusive: D within 10·epsilon but halving ratios [{r}] show dt growth")
        } else {
            format!("unbounded: D exceeds 10·epsilon, halving ratios [{r}] outside [1.5, 2.5]")
        }
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("dt,D,D_over_epsilon\n");
        for r in &self.runs {
            s.push_str(&format!("{},{},{}\n", r.dt, r.deviation, r.deviation / self.epsilon));
        }
        s
    }
}

/// The single independent source of the circuit, with its waveform.
pub fn driving_source(sys: &CoupledDaeSystem) -> Result<(String, Waveform), CircuitError> {
    let b = &sys.blocks;
    let mut found: Vec<(String, Waveform)> = b.v.labels.iter().cloned().zip(sys.v_sources.iter().copied()).collect();
    found.extend(b.i.labels.iter().cloned().zip(sys.i_sources.iter().copied()));
    if found.len() != 1 {
        return Err(CircuitError::Experiment(format!("expected exactly one source, found {}", found.len())));
    }
    Ok(found.remove(0))
}

/// Runs base and perturbed excitations for every `dt`, in parallel.
pub fn perturbation_experiment(
    sys: &CoupledDaeSystem,
    cfg: &PerturbationConfig,
) -> Result<PerturbationResult, CircuitError> {
    if cfg.dt_list.is_empty() {
        return Err(CircuitError::Experiment("empty dt list".into()));
    }
    if sys.layout.elements.len() != 1 {
        return Err(CircuitError::Experiment(format!(
            "expected exactly one field element, found {}",
            sys.layout.elements.len()
        )));
    }
    let (label, w) = driving_source(sys)?;
    let fs = w.frequency().filter(|f| *f > 0.0).unwrap_or(1.0);
    let mut base = sys.clone();
    base.set_source(&label, w.base());
    let mut pert = sys.clone();
    pert.set_source(&label, w.perturbed(cfg.epsilon, cfg.fp_factor * fs));
    let index = classify_index(&sys.blocks)?.index;
    let outputs = OutputSelection::new(sys, None)?;

    let mut dts = cfg.dt_list.clone();
    dts.sort_by(|a, b| b.total_cmp(a));
    let runs: Result<Vec<PerturbationRun>, SolverError> = dts
        .par_iter()
        .map(|&dt| {
            let sc = SolverConfig { dt, t0: cfg.t0, t_end: cfg.t_end, init: cfg.init, ..SolverConfig::new(dt, cfg.t_end) };
            let b = simulate(&base, &sc, &outputs)?;
            let p = simulate(&pert, &sc, &outputs)?;
            let deviation = p.max_abs_difference(&b);
            Ok(PerturbationRun { dt, base: b, perturbed: p, deviation })
        })
        .collect();
    Ok(PerturbationResult { source: label, index, epsilon: cfg.epsilon, runs: runs? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::LinearInductorElement;
    use std::sync::Arc;

    fn rl(kind: &str) -> CoupledDaeSystem {
        let text = match kind {
            "V" => "V1 1 0 SIN 1 1\nX1 1 0 field=none\n.ground 0",
            _ => "I1 0 1 SIN 1 1\nX1 1 0 field=none\n.ground 0",
        };
        let doc = parse_netlist(text).unwrap();
        let mut els: BTreeMap<String, ElementRef> = BTreeMap::new();
        els.insert("X1".into(), Arc::new(LinearInductorElement::scalar(1.0).unwrap()));
        assemble(&doc, &els).unwrap()
    }

    #[test]
    fn voltage_driven_inductor_is_insensitive() {
        let cfg = PerturbationConfig { dt_list: vec![1e-3, 5e-4], t_end: 0.05, fp_factor: 13.0, ..Default::default() };
        let r = perturbation_experiment(&rl("V"), &cfg).unwrap();
        assert_eq!(r.index, 1);
        assert!(r.bounded(), "{}", r.summary_csv());
        assert_eq!(r.verdict(), "index-1: bounded, no dt growth");
    }

    #[test]
    fn current_driven_inductor_amplifies() {
        let cfg = PerturbationConfig { dt_list: vec![1e-3, 5e-4], t_end: 0.05, fp_factor: 13.0, ..Default::default() };
        let r = perturbation_experiment(&rl("I"), &cfg).unwrap();
        assert_eq!(r.index, 2);
        assert!(!r.bounded());
        assert!(!r.verdict().starts_with("index-1"));
        assert_eq!(r.source, "I1");
    }

    #[test]
    fn empty_dt_list_is_rejected() {
        let cfg = PerturbationConfig { dt_list: vec![], ..Default::default() };
        assert!(matches!(perturbation_experiment(&rl("V"), &cfg), Err(CircuitError::Experiment(_))));
    }
}
