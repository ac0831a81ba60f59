//! Verification suite run on a single field spec.

use crate::element::{jacobian_fd_error, verify_inductance_like, GeneralizedElement, Probe};
use crate::fit::operators::{dense, is_exact_zero};
use crate::fit::{parse_field_spec, BhSpec, FitError, FitModel, Formulation};
use crate::formulations::{build_astar, build_tomega, l_lambda_astar, l_lambda_tomega, LLambda};
use crate::gauge::{self, gauge_astar, gauge_tomega, verify_gauge_astar, verify_gauge_tomega, TreeOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct FieldReport {
    pub checks: Vec<Check>,
    pub l_lambda: Option<LLambda>,
}

impl FieldReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn push(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.to_string(), pass, detail: detail.into() });
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!("{} {}: {}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail));
        }
        s
    }
}

/// Parses `text` and runs every check that applies. Only parse errors are
/// returned as `Err`; model problems become failed checks.
pub fn verify_field(text: &str) -> Result<FieldReport, FitError> {
    let spec = parse_field_spec(text)?;
    let mut rep = FieldReport::default();
    let model = match FitModel::build(&spec) {
        Ok(m) => {
            rep.push("coils and conductor admissible", true, format!("{} coil(s)", spec.coils.len()));
            m
        }
        Err(e) => {
            rep.push("coils and conductor admissible", false, e.to_string());
            return Ok(rep);
        }
    };

    let ops = &model.ops;
    rep.push("C S~t = 0", ops.curl_grad_exact(), "exact integer product");
    rep.push("div C = 0", is_exact_zero(&(&ops.div * &ops.c)), "exact integer product");
    let mats = &model.mats;
    let pos = mats.m_mu.iter().all(|&v| v > 0.0) && mats.m_nu.iter().all(|&v| v > 0.0);
    rep.push("material matrices positive", pos, format!("min M_mu {:.3e}", mats.m_mu.min()));
    let j_div = (dense(&ops.div) * &model.windings.j_s).amax();
    rep.push("winding current divergence-free", j_div == 0.0, format!("max |div J_s| = {j_div:e}"));
    let x_div = (dense(&ops.g).transpose() * &model.windings.x_s).amax();
    rep.push("winding loops closed", x_div <= 1e-12 * model.windings.x_s.amax().max(1e-300), format!("max |Gt X_s| = {x_div:e}"));

    if let Err(e) = gauge::check_simply_connected(&model.mesh, &model.conductor) {
        rep.push("conductor simply connected", false, e.to_string());
        return Ok(rep);
    }
    rep.push("conductor simply connected", true, format!("{} conducting cells", model.conductor.len()));

    if let BhSpec::Brauer(curve) = spec.bh {
        let p = curve.probes();
        rep.push(
            "B-H law admissible",
            p.pass(),
            format!("B(0)=0: {}, min dB/dH / mu0 = {:.4}, tail {:.2e}", p.zero_ok, p.min_slope_ratio, p.tail_deviation),
        );
    }

    let built: Result<(Box<dyn GeneralizedElement>, LLambda), String> = match spec.formulation {
        Formulation::TOmega => gauge_tomega(&model, TreeOptions::default()).map_err(|e| e.to_string()).and_then(|g| {
            let gr = verify_gauge_tomega(&model, &g);
            for c in gr.checks {
                rep.push(&c.name, c.pass, c.detail);
            }
            let l = l_lambda_tomega(&model, &g).map_err(|e| e.to_string())?;
            let el = build_tomega(&model).map_err(|e| e.to_string())?;
            Ok((Box::new(el) as Box<dyn GeneralizedElement>, l))
        }),
        Formulation::AStar => gauge_astar(&model, TreeOptions::default()).map_err(|e| e.to_string()).and_then(|g| {
            let gr = verify_gauge_astar(&model, &g);
            for c in gr.checks {
                rep.push(&c.name, c.pass, c.detail);
            }
            let l = l_lambda_astar(&model, &g).map_err(|e| e.to_string())?;
            let el = build_astar(&model).map_err(|e| e.to_string())?;
            Ok((Box::new(el) as Box<dyn GeneralizedElement>, l))
        }),
    };
    let (el, l) = match built {
        Ok(v) => v,
        Err(msg) => {
            rep.push("field element", false, msg);
            return Ok(rep);
        }
    };
    rep.push("L_lambda SPD", l.is_spd(), format!("min eigenvalue {:.6e} H", l.min_eigenvalue));
    match verify_inductance_like(el.as_ref(), &Probe::zero(el.as_ref())) {
        Ok(est) => {
            let err = (&est.l - &l.l).amax() / l.l.amax();
            rep.push("inductance-like", err <= 1e-8, format!("extracted vs closed form {err:.2e}"));
        }
        Err(e) => rep.push("inductance-like", false, e.to_string()),
    }
    if !el.is_linear() {
        let mut p = Probe::zero(el.as_ref());
        for (k, v) in p.x.iter_mut().enumerate() {
            *v = 1e-3 * ((k as f64) * 0.7).sin();
        }
        p.i.iter_mut().for_each(|v| *v = 1.0);
        let err = jacobian_fd_error(el.as_ref(), &p, 1e-5);
        rep.push("Jacobian matches finite differences", err < 1e-6, format!("{err:.2e}"));
    }
    rep.l_lambda = Some(l);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "grid.nx = 4\ngrid.ny = 4\ngrid.nz = 4\ngrid.dx = 0.01\n";

    #[test]
    fn shipped_style_coil_passes() {
        let text = format!(
            "{BASE}conductor.box = 1,1,1,3,3,3\nconductor.sigma = 3.5e7\ncoil.1.frame = 0,0,1,4,4,3,1\ncoil.1.turns = 100\n"
        );
        let r = verify_field(&text).unwrap();
        assert!(r.pass(), "{}", r.to_text());
        assert!(r.l_lambda.unwrap().is_spd());
    }

    #[test]
    fn overlapping_coil_fails_a_check() {
        let text = format!("{BASE}conductor.box = 0,0,0,2,2,2\nconductor.sigma = 1e6\ncoil.1.frame = 0,0,0,4,4,1,1\n");
        let r = verify_field(&text).unwrap();
        assert!(!r.pass());
        assert_eq!(r.checks[0].name, "coils and conductor admissible");
    }

    #[test]
    fn torus_fails_connectivity() {
        let mut boxes = Vec::new();
        for (x0, x1, y0, y1) in [(0, 3, 0, 1), (0, 3, 2, 3), (0, 1, 1, 2), (2, 3, 1, 2)] {
            boxes.push(format!("{x0},{y0},3,{x1},{y1},4"));
        }
        let text = format!("{BASE}conductor.box = {}\nconductor.sigma = 1e6\ncoil.1.frame = 0,0,0,4,4,1,1\n", boxes.join(";"));
        let r = verify_field(&text).unwrap();
        let c = r.checks.iter().find(|c| c.name == "conductor simply connected").unwrap();
        assert!(!c.pass, "{}", r.to_text());
    }

    #[test]
    fn parse_errors_propagate() {
        assert!(verify_field("grid.nx = 2\n").is_err());
    }
}
