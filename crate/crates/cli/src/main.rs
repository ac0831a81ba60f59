use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fcsim_core::experiment::{load_circuit, perturbation_experiment, read_file, CircuitError, PerturbationConfig};
use fcsim_core::solver::{fmt_num, implicit_euler, InitMode, OutputSelection, SolverConfig};
use fcsim_core::topology::{check_well_posed, TopologyError};
use fcsim_core::verify::verify_field;
use fcsim_core::{classify_index, incidence_blocks, parse_netlist};

#[derive(Parser)]
#[command(name = "fcsim", version, about = "Field/circuit coupled DAE simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the differential index from circuit topology.
    Analyze { netlist: PathBuf },
    /// Run implicit Euler and write the outputs as CSV.
    Simulate(SimulateArgs),
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    #[command(subcommand)]
    Field(FieldCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    /// Zero state two steps before t0.
    Warmup,
    /// Solve the algebraic constraints at t0 from a zero guess.
    Consistent,
}

impl From<Init> for InitMode {
    fn from(i: Init) -> Self {
        match i {
            Init::Warmup => InitMode::TwoStepWarmup,
            Init::Consistent => InitMode::ConsistentAlgebraic,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    netlist: PathBuf,
    #[arg(long)]
    dt: f64,
    #[arg(long)]
    t_end: f64,
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    #[arg(long)]
    out: PathBuf,
    /// Node potentials to write (default: all).
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = Init::Warmup)]
    init: Init,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Base vs. perturbed excitation over a list of step sizes.
    Perturbation(PerturbationArgs),
}

#[derive(Args)]
struct PerturbationArgs {
    netlist: PathBuf,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    dt_list: Vec<f64>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    t_end: f64,
    /// Perturbation frequency as a multiple of the source frequency.
    #[arg(long, default_value_t = 1e9)]
    fp_factor: f64,
}

#[derive(Subcommand)]
enum FieldCommand {
    /// Run the verification suite on a field spec.
    Verify { spec: PathBuf },
    /// Print the closed-form L_lambda and its smallest eigenvalue.
    Inductance { spec: PathBuf },
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn analyze(path: &Path) -> ExitCode {
    let text = match read_file(path) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let doc = match parse_netlist(&text) {
        Ok(d) => d,
        Err(e) => return fail(format!("{}: {e}", path.display())),
    };
    let blocks = match incidence_blocks(&doc) {
        Ok(b) => b,
        Err(e) => {
            println!("well posed: no\n{e}");
            return ExitCode::from(2);
        }
    };
    match classify_index(&blocks) {
        Ok(rep) => {
            print!("{}", rep.to_text());
            ExitCode::SUCCESS
        }
        Err(TopologyError::NotWellPosed(_)) => {
            print!("{}", check_well_posed(&blocks).to_text());
            ExitCode::from(2)
        }
        Err(e) => {
            println!("well posed: no\n{e}");
            ExitCode::from(2)
        }
    }
}

fn simulate(a: &SimulateArgs) -> Result<usize, CircuitError> {
    let circuit = load_circuit(&a.netlist)?;
    let sys = &circuit.system;
    let outputs = OutputSelection::new(sys, a.nodes.as_deref())?;
    let cfg = SolverConfig { t0: a.t0, init: a.init.into(), ..SolverConfig::new(a.dt, a.t_end) };
    let io = |e: std::io::Error| CircuitError::Io { path: a.out.clone(), msg: e.to_string() };
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&a.out).map_err(io)?));
    let mut header = vec!["time".to_string()];
    header.extend(outputs.labels.iter().cloned());
    w.write_record(&header).map_err(|e| io(e.into()))?;
    let mut rows = 0;
    let mut write_err = None;
    implicit_euler(sys, &cfg, &outputs, |t, row| {
        if write_err.is_none() {
            let rec = std::iter::once(fmt_num(t)).chain(row.iter().map(|v| fmt_num(*v)));
            if let Err(e) = w.write_record(rec) {
                write_err = Some(e);
            }
            rows += 1;
        }
    })?;
    if let Some(e) = write_err {
        return Err(io(e.into()));
    }
    w.flush().map_err(io)?;
    Ok(rows)
}

fn dt_tag(dt: f64) -> String {
    format!("{dt:e}")
}

fn experiment(a: &PerturbationArgs) -> Result<String, CircuitError> {
    let circuit = load_circuit(&a.netlist)?;
    let cfg = PerturbationConfig {
        epsilon: a.epsilon,
        dt_list: a.dt_list.clone(),
        t_end: a.t_end,
        fp_factor: a.fp_factor,
        ..Default::default()
    };
    let res = perturbation_experiment(&circuit.system, &cfg)?;
    let io = |p: &Path, e: std::io::Error| CircuitError::Io { path: p.to_path_buf(), msg: e.to_string() };
    fs::create_dir_all(&a.out_dir).map_err(|e| io(&a.out_dir, e))?;
    for run in &res.runs {
        for (name, ts) in [("base", &run.base), ("perturbed", &run.perturbed)] {
            let p = a.out_dir.join(format!("{name}_dt{}.csv", dt_tag(run.dt)));
            let f = File::create(&p).map_err(|e| io(&p, e))?;
            ts.write_csv(BufWriter::new(f)).map_err(|e| io(&p, e))?;
        }
    }
    let p = a.out_dir.join("summary.csv");
    fs::write(&p, res.summary_csv()).map_err(|e| io(&p, e))?;

    let mut out = format!("source {}, topological index {}, epsilon {:e}\n", res.source, res.index, res.epsilon);
    out.push_str(&format!("{:>12} {:>14} {:>10}\n", "dt", "D", "D/eps"));
    for r in &res.runs {
        out.push_str(&format!("{:>12e} {:>14.6e} {:>10.3}\n", r.dt, r.deviation, r.deviation / res.epsilon));
    }
    let ratios: Vec<String> = res.ratios().iter().map(|q| format!("{q:.3}")).collect();
    out.push_str(&format!("halving ratios: [{}]\nverdict: {}\n", ratios.join(", "), res.verdict()));
    Ok(out)
}

fn field(cmd: &FieldCommand) -> ExitCode {
    let (FieldCommand::Verify { spec } | FieldCommand::Inductance { spec }) = cmd;
    let text = match read_file(spec) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let rep = match verify_field(&text) {
        Ok(r) => r,
        Err(e) => return fail(format!("{}: {e}", spec.display())),
    };
    match cmd {
        FieldCommand::Verify { .. } => {
            print!("{}", rep.to_text());
            if rep.pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        FieldCommand::Inductance { .. } => match rep.l_lambda {
            Some(l) => {
                println!("L_lambda [H] ({:?}):", l.formulation);
                for r in 0..l.l.nrows() {
                    let row: Vec<String> = l.l.row(r).iter().map(|v| format!("{v:.9e}")).collect();
                    println!("  {}", row.join("  "));
                }
                println!("smallest eigenvalue: {:.9e}", l.min_eigenvalue);
                ExitCode::SUCCESS
            }
            None => {
                let failed: Vec<String> =
                    rep.checks.iter().filter(|c| !c.pass).map(|c| format!("{}: {}", c.name, c.detail)).collect();
                fail(failed.join("; "))
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Analyze { netlist } => analyze(netlist),
        Command::Simulate(a) => match simulate(a) {
            Ok(rows) => {
                println!("wrote {rows} rows to {}", a.out.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Experiment(ExperimentCommand::Perturbation(a)) => match experiment(a) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Field(cmd) => field(cmd),
    }
}
