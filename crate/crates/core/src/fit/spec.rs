//! Field specification files: `key = value` lines, `#` comments.
//!
//! ```text
//! grid.nx = 4
//! grid.ny = 4
//! grid.nz = 4
//! grid.dx = 0.01            # dy, dz default to dx
//! conductor.box = 1,1,1,3,3,3   # cell box [lo, hi); several boxes separated by ';'
//! conductor.sigma = 3.5e7
//! coil.1.frame = 0,0,1,4,4,3,1  # outer cell box, ring width
//! coil.1.turns = 100
//! material.mu_r = 1
//! material.bh = linear          # iron, or brauer:<mu_r>,<h0>,<mu_sat>
//! formulation = tomega          # or astar
//! ```

use std::collections::BTreeMap;

use super::bh::{BhCurve, SOFT_IRON};
use super::mesh::CellBox;
use super::windings::CoilFrame;
use super::FitError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    TOmega,
    AStar,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BhSpec {
    Linear,
    Brauer(BhCurve),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub n: [usize; 3],
    pub d: [f64; 3],
    pub conductor: Vec<CellBox>,
    pub sigma: f64,
    pub coils: Vec<CoilFrame>,
    pub mu_r: f64,
    pub bh: BhSpec,
    pub formulation: Formulation,
}

fn spec_err(line: usize, msg: impl Into<String>) -> FitError {
    FitError::Spec { line, msg: msg.into() }
}

fn ints(line: usize, v: &str, n: usize) -> Result<Vec<usize>, FitError> {
    let out: Result<Vec<usize>, _> = v.split(',').map(|s| s.trim().parse::<usize>()).collect();
    match out {
        Ok(o) if o.len() == n => Ok(o),
        _ => Err(spec_err(line, format!("expected {n} comma-separated cell indices, got '{v}'"))),
    }
}

fn real(line: usize, v: &str) -> Result<f64, FitError> {
    match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(spec_err(line, format!("expected a number, got '{v}'"))),
    }
}

fn cell_box(line: usize, v: &[usize]) -> Result<CellBox, FitError> {
    let b = CellBox { lo: [v[0], v[1], v[2]], hi: [v[3], v[4], v[5]] };
    if b.is_empty() {
        return Err(spec_err(line, "empty box"));
    }
    Ok(b)
}

pub fn parse_field_spec(text: &str) -> Result<FieldSpec, FitError> {
    let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(spec_err(ln, format!("expected key = value, got '{body}'")));
        };
        let key = k.trim().to_string();
        if kv.insert(key.clone(), (ln, v.trim().to_string())).is_some() {
            return Err(spec_err(ln, format!("duplicate key '{key}'")));
        }
    }

    let mut take = |key: &str| kv.remove(key);
    let mut n = [0usize; 3];
    for (a, key) in ["grid.nx", "grid.ny", "grid.nz"].iter().enumerate() {
        let (ln, v) = take(key).ok_or_else(|| spec_err(0, format!("missing {key}")))?;
        n[a] = v.parse().map_err(|_| spec_err(ln, format!("{key} must be a non-negative integer")))?;
    }
    let dx = match take("grid.dx") {
        Some((ln, v)) => real(ln, &v)?,
        None => 1.0,
    };
    let mut d = [dx; 3];
    for (a, key) in [(1, "grid.dy"), (2, "grid.dz")] {
        if let Some((ln, v)) = take(key) {
            d[a] = real(ln, &v)?;
        }
    }

    let mut conductor = Vec::new();
    if let Some((ln, v)) = take("conductor.box") {
        for part in v.split(';').filter(|p| !p.trim().is_empty()) {
            conductor.push(cell_box(ln, &ints(ln, part, 6)?)?);
        }
    }
    let sigma = match take("conductor.sigma") {
        Some((ln, v)) => real(ln, &v)?,
        None if conductor.is_empty() => 0.0,
        None => return Err(spec_err(0, "conductor.box given without conductor.sigma")),
    };
    if !conductor.is_empty() && sigma <= 0.0 {
        return Err(spec_err(0, "conductor.sigma must be positive"));
    }

    let mu_r = match take("material.mu_r") {
        Some((ln, v)) => real(ln, &v)?,
        None => 1.0,
    };
    if mu_r <= 0.0 {
        return Err(spec_err(0, "material.mu_r must be positive"));
    }
    let bh = match take("material.bh") {
        None => BhSpec::Linear,
        Some((_, v)) if v == "linear" => BhSpec::Linear,
        Some((_, v)) if v == "iron" => BhSpec::Brauer(SOFT_IRON),
        Some((ln, v)) => {
            let Some(args) = v.strip_prefix("brauer:") else {
                return Err(spec_err(ln, format!("unknown B-H law '{v}'")));
            };
            let p: Vec<f64> = args.split(',').map(|s| real(ln, s)).collect::<Result<_, _>>()?;
            if p.len() != 3 || p.iter().any(|x| *x <= 0.0) {
                return Err(spec_err(ln, "brauer takes three positive parameters mu_r,h0,mu_sat"));
            }
            BhSpec::Brauer(BhCurve { mu_r: p[0], h0: p[1], mu_sat: p[2] })
        }
    };
    let formulation = match take("formulation") {
        None => Formulation::TOmega,
        Some((_, v)) if v == "tomega" => Formulation::TOmega,
        Some((_, v)) if v == "astar" => Formulation::AStar,
        Some((ln, v)) => return Err(spec_err(ln, format!("unknown formulation '{v}'"))),
    };

    let coil_ids: Vec<(String, usize)> = kv
        .keys()
        .filter_map(|k| {
            let rest = k.strip_prefix("coil.")?;
            let (id, _) = rest.split_once('.')?;
            Some((id.to_string(), id.parse::<usize>().unwrap_or(usize::MAX)))
        })
        .collect();
    let mut ids: Vec<(usize, String)> = coil_ids.into_iter().map(|(s, n)| (n, s)).collect();
    ids.sort();
    ids.dedup();
    let mut coils = Vec::new();
    for (_, id) in ids {
        let (ln, frame) = kv
            .remove(&format!("coil.{id}.frame"))
            .ok_or_else(|| spec_err(0, format!("coil.{id}.frame missing")))?;
        let f = ints(ln, &frame, 7)?;
        let outer = cell_box(ln, &f[..6])?;
        let turns = match kv.remove(&format!("coil.{id}.turns")) {
            Some((ln, v)) => real(ln, &v)?,
            None => 1.0,
        };
        coils.push(CoilFrame { outer, width: f[6], turns });
    }
    if let Some((key, (ln, _))) = kv.into_iter().next() {
        return Err(spec_err(ln, format!("unknown key '{key}'")));
    }
    Ok(FieldSpec { n, d, conductor, sigma, coils, mu_r, bh, formulation })
}

impl FieldSpec {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "grid.nx = {}\ngrid.ny = {}\ngrid.nz = {}\ngrid.dx = {:?}\ngrid.dy = {:?}\ngrid.dz = {:?}\n",
            self.n[0], self.n[1], self.n[2], self.d[0], self.d[1], self.d[2]
        );
        if !self.conductor.is_empty() {
            let boxes: Vec<String> = self
                .conductor
                .iter()
                .map(|b| format!("{},{},{},{},{},{}", b.lo[0], b.lo[1], b.lo[2], b.hi[0], b.hi[1], b.hi[2]))
                .collect();
            s.push_str(&format!("conductor.box = {}\nconductor.sigma = {:?}\n", boxes.join(";"), self.sigma));
        }
        for (k, c) in self.coils.iter().enumerate() {
            let b = c.outer;
            s.push_str(&format!(
                "coil.{}.frame = {},{},{},{},{},{},{}\ncoil.{}.turns = {:?}\n",
                k + 1,
                b.lo[0],
                b.lo[1],
                b.lo[2],
                b.hi[0],
                b.hi[1],
                b.hi[2],
                c.width,
                k + 1,
                c.turns
            ));
        }
        s.push_str(&format!("material.mu_r = {:?}\n", self.mu_r));
        match self.bh {
            BhSpec::Linear => s.push_str("material.bh = linear\n"),
            BhSpec::Brauer(c) => s.push_str(&format!("material.bh = brauer:{:?},{:?},{:?}\n", c.mu_r, c.h0, c.mu_sat)),
        }
        s.push_str(match self.formulation {
            Formulation::TOmega => "formulation = tomega\n",
            Formulation::AStar => "formulation = astar\n",
        });
        s
    }
}
