//! Field/circuit coupled DAE simulation.
//!
//! Circuits are assembled with modified nodal analysis; magnetoquasistatic
//! field models discretized with the finite integration technique enter the
//! circuit as inductance-like multi-port elements.

pub mod element;
pub mod experiment;
pub mod fit;
pub mod formulations;
pub mod gauge;
pub mod linalg;
pub mod mna;
pub mod netlist;
pub mod solver;
pub mod topology;
pub mod verify;

pub use element::{ElementRef, GeneralizedElement, LinearInductorElement, FluxInductorElement};
pub use mna::{assemble, CoupledDaeSystem};
pub use netlist::{parse_netlist, NetlistDocument, Waveform};
pub use experiment::{load_circuit, perturbation_experiment, PerturbationConfig, PerturbationResult};
pub use fit::{FitModel, FieldSpec};
pub use formulations::{build_field_element, l_lambda, LLambda};
pub use solver::{pencil_index, simulate, InitMode, OutputSelection, SolverConfig, TimeSeries};
pub use topology::{classify_index, incidence_blocks, IncidenceBlocks, IndexReport};
