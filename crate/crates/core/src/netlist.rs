//! Line-oriented circuit description.
//!
//! ```text
//! R1 1 2 10.0
//! V1 1 0 SIN 1.0 6.283185307179586 0.0 PERT 1e-4 6.283185307179586e9
//! X1 2 0 field=coil.fs
//! .ground 0
//! ```
//!
//! The device kind is the first letter of the name (`R`, `C`, `L`, `V`,
//! `I`, `X`). A lone kind letter followed by the name (`R load 1 2 10`) is
//! accepted as well. `#` starts a comment.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BranchKind {
    R,
    C,
    L,
    V,
    I,
    X,
}

impl BranchKind {
    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'R' => Some(BranchKind::R),
            'C' => Some(BranchKind::C),
            'L' => Some(BranchKind::L),
            'V' => Some(BranchKind::V),
            'I' => Some(BranchKind::I),
            'X' => Some(BranchKind::X),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            BranchKind::R => 'R',
            BranchKind::C => 'C',
            BranchKind::L => 'L',
            BranchKind::V => 'V',
            BranchKind::I => 'I',
            BranchKind::X => 'X',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub eps: f64,
    pub freq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Waveform {
    Dc(f64),
    Sin {
        amp: f64,
        freq: f64,
        phase: f64,
        pert: Option<Perturbation>,
    },
}

impl Waveform {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Waveform::Dc(v) => v,
            Waveform::Sin { amp, freq, phase, pert } => {
                let base = amp * (2.0 * PI * freq * t + phase).sin();
                match pert {
                    Some(p) => base + p.eps * (2.0 * PI * p.freq * t).sin(),
                    None => base,
                }
            }
        }
    }

    /// The same waveform with its perturbation removed.
    pub fn base(&self) -> Waveform {
        match *self {
            Waveform::Sin { amp, freq, phase, .. } => Waveform::Sin { amp, freq, phase, pert: None },
            w => w,
        }
    }

    /// Adds (or replaces) a perturbation `eps * sin(2π fp t)`. A DC source
    /// becomes a zero-frequency sine carrying its offset in the phase.
    pub fn perturbed(&self, eps: f64, fp: f64) -> Waveform {
        let pert = Some(Perturbation { eps, freq: fp });
        match *self {
            Waveform::Dc(v) => Waveform::Sin { amp: v, freq: 0.0, phase: PI / 2.0, pert },
            Waveform::Sin { amp, freq, phase, .. } => Waveform::Sin { amp, freq, phase, pert },
        }
    }

    pub fn frequency(&self) -> Option<f64> {
        match *self {
            Waveform::Dc(_) => None,
            Waveform::Sin { freq, .. } => Some(freq),
        }
    }
}

pub fn evaluate_waveform(w: &Waveform, t: f64) -> f64 {
    w.eval(t)
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchParam {
    Value(f64),
    Source(Waveform),
    Field(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub name: String,
    pub kind: BranchKind,
    /// Terminal pairs `(n+, n-)`; more than one only for multi-port `X`.
    pub terminals: Vec<(String, String)>,
    pub param: BranchParam,
}

impl Branch {
    pub fn node_plus(&self) -> &str {
        &self.terminals[0].0
    }

    pub fn node_minus(&self) -> &str {
        &self.terminals[0].1
    }

    pub fn value(&self) -> Option<f64> {
        match self.param {
            BranchParam::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn waveform(&self) -> Option<&Waveform> {
        match &self.param {
            BranchParam::Source(w) => Some(w),
            _ => None,
        }
    }

    pub fn field_spec(&self) -> Option<&str> {
        match &self.param {
            BranchParam::Field(p) => Some(p),
            _ => None,
        }
    }

    pub fn port_count(&self) -> usize {
        self.terminals.len()
    }

    /// Column label of port `k` (0-based).
    pub fn port_label(&self, k: usize) -> String {
        if self.terminals.len() == 1 {
            self.name.clone()
        } else {
            format!("{}.{}", self.name, k + 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetlistDocument {
    pub nodes: Vec<String>,
    pub ground: String,
    pub branches: Vec<Branch>,
    pub field_specs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownKind(String),
    DuplicateName(String),
    MissingGround,
    NonPositiveValue { name: String, what: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::UnknownKind(t) => write!(f, "unknown device kind in '{t}'"),
            ParseErrorKind::DuplicateName(n) => write!(f, "duplicate branch name '{n}'"),
            ParseErrorKind::MissingGround => write!(f, "missing .ground directive"),
            ParseErrorKind::NonPositiveValue { name, what } => {
                write!(f, "non-positive {what} for '{name}'")
            }
        }
    }
}

struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokenize(line: &str) -> Vec<Tok<'_>> {
    let body = match line.find('#') {
        Some(p) => &line[..p],
        None => line,
    };
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in body.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Tok { text: &body[s..i], col: s + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Tok { text: &body[s..], col: s + 1 });
    }
    out
}

fn err(line: usize, column: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, column, kind }
}

fn syntax(line: usize, column: usize, msg: impl Into<String>) -> ParseError {
    err(line, column, ParseErrorKind::Syntax(msg.into()))
}

fn number(tok: &Tok<'_>, line: usize) -> Result<f64, ParseError> {
    match tok.text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(syntax(line, tok.col, format!("expected a number, found '{}'", tok.text))),
    }
}

fn parse_waveform(toks: &[Tok<'_>], line: usize, end_col: usize) -> Result<Waveform, ParseError> {
    let Some(head) = toks.first() else {
        return Err(syntax(line, end_col, "missing source waveform"));
    };
    match head.text.to_ascii_uppercase().as_str() {
        "DC" => {
            if toks.len() != 2 {
                return Err(syntax(line, head.col, "DC takes exactly one value"));
            }
            Ok(Waveform::Dc(number(&toks[1], line)?))
        }
        "SIN" => {
            let pert_at = toks.iter().position(|t| t.text.eq_ignore_ascii_case("PERT"));
            let (args, pert_toks) = match pert_at {
                Some(p) => (&toks[1..p], Some(&toks[p..])),
                None => (&toks[1..], None),
            };
            if args.len() < 2 || args.len() > 3 {
                return Err(syntax(line, head.col, "SIN takes <amp> <freq> [<phase>]"));
            }
            let amp = number(&args[0], line)?;
            let freq = number(&args[1], line)?;
            let phase = if args.len() == 3 { number(&args[2], line)? } else { 0.0 };
            let pert = match pert_toks {
                None => None,
                Some(p) => {
                    if p.len() != 3 {
                        return Err(syntax(line, p[0].col, "PERT takes <eps> <fp>"));
                    }
                    Some(Perturbation { eps: number(&p[1], line)?, freq: number(&p[2], line)? })
                }
            };
            Ok(Waveform::Sin { amp, freq, phase, pert })
        }
        other => Err(syntax(line, head.col, format!("unknown waveform '{other}'"))),
    }
}

pub fn parse_netlist(text: &str) -> Result<NetlistDocument, ParseError> {
    let mut nodes: Vec<String> = Vec::new();
    let mut seen_nodes: HashSet<String> = HashSet::new();
    let mut names: HashSet<String> = HashSet::new();
    let mut branches = Vec::new();
    let mut field_specs = BTreeMap::new();
    let mut ground: Option<String> = None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        last_line = ln;
        let toks = tokenize(raw);
        let Some(first) = toks.first() else { continue };

        if let Some(directive) = first.text.strip_prefix('.') {
            match directive.to_ascii_lowercase().as_str() {
                "ground" => {
                    if toks.len() != 2 {
                        return Err(syntax(ln, first.col, ".ground takes one node name"));
                    }
                    if ground.is_some() {
                        return Err(syntax(ln, first.col, "ground declared twice"));
                    }
                    ground = Some(toks[1].text.to_string());
                }
                "end" => break,
                _ => return Err(syntax(ln, first.col, format!("unknown directive '{}'", first.text))),
            }
            continue;
        }

        let first_char = first.text.chars().next().unwrap_or(' ');
        let kind = BranchKind::from_char(first_char)
            .ok_or_else(|| err(ln, first.col, ParseErrorKind::UnknownKind(first.text.to_string())))?;
        let (name_tok, rest) = if first.text.len() == 1 {
            match toks.get(1) {
                Some(t) => (t, &toks[2..]),
                None => return Err(syntax(ln, first.col, "missing branch name")),
            }
        } else {
            (first, &toks[1..])
        };
        let name = name_tok.text.to_string();
        let end_col = raw.len() + 1;

        let (terminals, param) = match kind {
            BranchKind::X => {
                let field_pos = rest.iter().position(|t| t.text.starts_with("field="));
                let Some(fp) = field_pos else {
                    return Err(syntax(ln, end_col, "X element needs field=<path>"));
                };
                if fp + 1 != rest.len() {
                    return Err(syntax(ln, rest[fp + 1].col, "unexpected token after field="));
                }
                let node_toks = &rest[..fp];
                if node_toks.is_empty() || node_toks.len() % 2 != 0 {
                    return Err(syntax(ln, name_tok.col, "X element needs an even number of nodes"));
                }
                let path = &rest[fp].text["field=".len()..];
                if path.is_empty() {
                    return Err(syntax(ln, rest[fp].col, "empty field path"));
                }
                let terms = node_toks
                    .chunks(2)
                    .map(|p| (p[0].text.to_string(), p[1].text.to_string()))
                    .collect::<Vec<_>>();
                (terms, BranchParam::Field(path.to_string()))
            }
            _ => {
                if rest.len() < 3 {
                    return Err(syntax(ln, end_col, "expected <n+> <n-> and a value"));
                }
                let terms = vec![(rest[0].text.to_string(), rest[1].text.to_string())];
                let param = match kind {
                    BranchKind::V | BranchKind::I => {
                        BranchParam::Source(parse_waveform(&rest[2..], ln, end_col)?)
                    }
                    _ => {
                        if rest.len() != 3 {
                            return Err(syntax(ln, rest[3].col, "unexpected trailing token"));
                        }
                        let v = number(&rest[2], ln)?;
                        if v <= 0.0 {
                            let what = match kind {
                                BranchKind::R => "resistance",
                                BranchKind::C => "capacitance",
                                _ => "inductance",
                            };
                            return Err(err(ln, rest[2].col, ParseErrorKind::NonPositiveValue { name, what }));
                        }
                        BranchParam::Value(v)
                    }
                };
                (terms, param)
            }
        };

        for (a, b) in &terminals {
            if a == b {
                return Err(syntax(ln, name_tok.col, format!("branch '{name}' connects node '{a}' to itself")));
            }
        }
        if !names.insert(name.clone()) {
            return Err(err(ln, name_tok.col, ParseErrorKind::DuplicateName(name)));
        }
        for (a, b) in &terminals {
            for n in [a, b] {
                if seen_nodes.insert(n.clone()) {
                    nodes.push(n.clone());
                }
            }
        }
        if let BranchParam::Field(p) = &param {
            field_specs.insert(name.clone(), p.clone());
        }
        branches.push(Branch { name, kind, terminals, param });
    }

    let ground = ground.ok_or_else(|| err(last_line + 1, 1, ParseErrorKind::MissingGround))?;
    if seen_nodes.insert(ground.clone()) {
        nodes.push(ground.clone());
    }
    Ok(NetlistDocument { nodes, ground, branches, field_specs })
}

fn fmt_waveform(w: &Waveform) -> String {
    match *w {
        Waveform::Dc(v) => format!("DC {v:?}"),
        Waveform::Sin { amp, freq, phase, pert } => {
            let mut s = format!("SIN {amp:?} {freq:?} {phase:?}");
            if let Some(p) = pert {
                s.push_str(&format!(" PERT {:?} {:?}", p.eps, p.freq));
            }
            s
        }
    }
}

impl NetlistDocument {
    /// Canonical text form; `parse_netlist(doc.to_text())` reproduces `doc`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for b in &self.branches {
            let head = if b.name.len() > 1 && b.name.starts_with(b.kind.letter()) {
                b.name.clone()
            } else {
                format!("{} {}", b.kind.letter(), b.name)
            };
            out.push_str(&head);
            for (p, m) in &b.terminals {
                out.push_str(&format!(" {p} {m}"));
            }
            match &b.param {
                BranchParam::Value(v) => out.push_str(&format!(" {v:?}")),
                BranchParam::Source(w) => out.push_str(&format!(" {}", fmt_waveform(w))),
                BranchParam::Field(p) => out.push_str(&format!(" field={p}")),
            }
            out.push('\n');
        }
        out.push_str(&format!(".ground {}\n", self.ground));
        out
    }

    pub fn branch(&self, name: &str) -> Option<&Branch> {
        self.branches.iter().find(|b| b.name == name)
    }

    pub fn non_ground_nodes(&self) -> Vec<String> {
        self.nodes.iter().filter(|n| **n != self.ground).cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_source_and_resistor() {
        let doc = parse_netlist("V1 1 0 SIN 1.0 1.0\nR1 1 0 1.0\n.ground 0").unwrap();
        assert_eq!(doc.branches.len(), 2);
        assert_eq!(doc.nodes, vec!["1", "0"]);
        assert_eq!(doc.ground, "0");
        assert_eq!(doc.branches[0].kind, BranchKind::V);
    }

    #[test]
    fn rejects_negative_inductance() {
        let e = parse_netlist("L1 1 0 -2.0\n.ground 0").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::NonPositiveValue { what: "inductance", .. }));
        assert_eq!((e.line, e.column), (1, 8));
    }

    #[test]
    fn field_element_reference() {
        let doc = parse_netlist("X1 1 0 field=coil.fs\n.ground 0").unwrap();
        assert_eq!(doc.branches[0].field_spec(), Some("coil.fs"));
        assert_eq!(doc.field_specs["X1"], "coil.fs");
    }

    #[test]
    fn error_cases() {
        let e = parse_netlist("R1 1 0 1.0\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MissingGround);
        let e = parse_netlist("Q1 1 0 1\n.ground 0").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::UnknownKind(_)));
        let e = parse_netlist("R1 1 0 1\nR1 1 0 2\n.ground 0").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::DuplicateName("R1".into()));
        assert_eq!(e.line, 2);
        let e = parse_netlist("R1 1 0 abc\n.ground 0").unwrap_err();
        assert_eq!((e.line, e.column), (1, 8));
        assert!(parse_netlist("R1 1 1 1\n.ground 1").is_err());
        assert!(parse_netlist("V1 1 0 SIN 1\n.ground 0").is_err());
        assert!(parse_netlist("X1 1 0 2 field=a.fs\n.ground 0").is_err());
    }

    #[test]
    fn comments_separated_kind_and_multiport() {
        let text = "# header\nR load 1 2 5 # trailing\nX9 1 0 2 0 field=two.fs\n.ground 0\n";
        let doc = parse_netlist(text).unwrap();
        assert_eq!(doc.branches[0].name, "load");
        assert_eq!(doc.branches[1].port_count(), 2);
        assert_eq!(doc.branches[1].port_label(1), "X9.2");
    }

    #[test]
    fn waveforms() {
        let w = Waveform::Sin { amp: 1.0, freq: 2.0 * PI, phase: 0.0, pert: None };
        assert_eq!(w.eval(0.0), 0.0);
        let p = w.perturbed(1e-4, 2.0 * PI * 1e9);
        assert_eq!(p.eval(0.0), 0.0);
        assert_eq!(Waveform::Dc(3.3).eval(17.0), 3.3);
        let d = Waveform::Dc(2.0).perturbed(0.0, 5.0);
        assert!((d.eval(0.123) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn pert_grammar() {
        let doc = parse_netlist("I1 0 1 SIN 2 3 0.5 PERT 1e-4 7\nL1 1 0 1\n.ground 0").unwrap();
        let w = doc.branches[0].waveform().unwrap();
        assert_eq!(
            *w,
            Waveform::Sin { amp: 2.0, freq: 3.0, phase: 0.5, pert: Some(Perturbation { eps: 1e-4, freq: 7.0 }) }
        );
    }
}
