//! Fixtures shared by the benchmarks.

pub use fcsim_core as core;

use std::collections::BTreeMap;

use fcsim_core::{assemble, parse_netlist, CoupledDaeSystem, ElementRef, FitModel};
use nalgebra::{DMatrix, DVector};

/// Square coil around a conducting core on an `n`³ grid of 4 cm total size.
pub fn coil_spec(n: usize, bh: &str) -> String {
    let (a, b) = (n / 4, n - n / 4);
    format!(
        "grid.nx = {n}\ngrid.ny = {n}\ngrid.nz = {n}\ngrid.dx = {}\n\
         conductor.box = {a},{a},{a},{b},{b},{b}\nconductor.sigma = 3.5e7\n\
         coil.1.frame = 0,0,{a},{n},{n},{b},{a}\ncoil.1.turns = 100\n\
         material.bh = {bh}\nformulation = tomega\n",
        0.04 / n as f64
    )
}

pub fn coil_model(n: usize, bh: &str) -> FitModel {
    FitModel::from_text(&coil_spec(n, bh)).expect("valid coil spec")
}

/// Source driving `x1` through a field element built from `model`.
pub fn coil_circuit(model: &FitModel, source: &str) -> CoupledDaeSystem {
    let doc = parse_netlist(&format!("{source}\nX1 1 0 field=coil.fs\n.ground 0\n")).expect("netlist");
    let el = fcsim_core::build_field_element(model).expect("field element");
    let els: BTreeMap<String, ElementRef> = [("X1".to_string(), el)].into();
    assemble(&doc, &els).expect("assembly")
}

/// RLC ladder with `n` sections fed by a voltage source.
pub fn ladder(n: usize) -> CoupledDaeSystem {
    let mut s = String::from("V1 1 0 SIN 1 50\n");
    for k in 1..=n {
        s.push_str(&format!("R{k} {} {} 1\nL{k} {} {} 1e-3\nC{k} {} 0 1e-6\n", 2 * k - 1, 2 * k, 2 * k, 2 * k + 1, 2 * k + 1));
    }
    s.push_str(".ground 0\n");
    assemble(&parse_netlist(&s).expect("netlist"), &BTreeMap::new()).expect("assembly")
}

/// `(E, A)` of `sys` linearized at the origin.
pub fn pencil(sys: &CoupledDaeSystem) -> (DMatrix<f64>, DMatrix<f64>) {
    let z = DVector::zeros(sys.size());
    fcsim_core::solver::linearize(sys, &z, &z, 0.0)
}
