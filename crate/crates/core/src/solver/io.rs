use super::model::{Comparator, Model, VarKind};
use super::{Assignment, SolveStatus, SolverError};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelFormat {
    Lp,
    Mps,
}

impl ModelFormat {
    pub fn from_path(path: &Path) -> Option<ModelFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "lp" => Some(ModelFormat::Lp),
            "mps" => Some(ModelFormat::Mps),
            _ => None,
        }
    }
}

/// Formats like C's `%.12g`.
pub(crate) fn g12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.11e}", x);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..12).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn push_terms(out: &mut String, terms: impl Iterator<Item = (f64, String)>) {
    let mut any = false;
    for (k, (c, name)) in terms.enumerate() {
        if k > 0 && k % 8 == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {name}", g12(c.abs()));
        any = true;
    }
    if !any {
        out.push_str(" 0");
    }
}

/// CPLEX LP text for `model`.
pub fn write_lp(model: &Model) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "\\ Problem: {}", model.name);
    let _ = writeln!(s, "\\ Objective constant: {}", g12(model.objective_constant));
    s.push_str("Maximize\n obj:");
    let obj: Vec<(f64, String)> = model
        .objective
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, &c)| (c, model.variables[j].name.clone()))
        .collect();
    if obj.is_empty() && !model.variables.is_empty() {
        let _ = write!(s, " 0 {}", model.variables[0].name);
    } else {
        push_terms(&mut s, obj.into_iter());
    }
    s.push_str("\nSubject To\n");
    for c in &model.constraints {
        let _ = write!(s, " {}:", c.name);
        push_terms(&mut s, c.terms.iter().map(|&(j, a)| (a, model.variables[j].name.clone())));
        let op = match c.cmp {
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Eq => "=",
        };
        let _ = writeln!(s, " {op} {}", g12(c.rhs));
    }
    s.push_str("Bounds\n");
    for v in &model.variables {
        if v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0 {
            continue;
        }
        if v.lower == v.upper {
            let _ = writeln!(s, " {} = {}", v.name, g12(v.lower));
        } else {
            let _ = writeln!(s, " {} <= {} <= {}", g12(v.lower), v.name, g12(v.upper));
        }
    }
    let generals: Vec<&str> = model
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Integer)
        .map(|v| v.name.as_str())
        .collect();
    if !generals.is_empty() {
        s.push_str("General\n");
        for chunk in generals.chunks(8) {
            let _ = writeln!(s, " {}", chunk.join(" "));
        }
    }
    let binaries: Vec<&str> = model
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        s.push_str("Binary\n");
        for chunk in binaries.chunks(8) {
            let _ = writeln!(s, " {}", chunk.join(" "));
        }
    }
    s.push_str("End\n");
    s
}

/// Free-format MPS text for `model`.
pub fn write_mps(model: &Model) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "NAME {}", if model.name.is_empty() { "model" } else { &model.name });
    s.push_str("OBJSENSE\n    MAX\nROWS\n N  obj\n");
    for c in &model.constraints {
        let t = match c.cmp {
            Comparator::Le => 'L',
            Comparator::Ge => 'G',
            Comparator::Eq => 'E',
        };
        let _ = writeln!(s, " {t}  {}", c.name);
    }
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_vars()];
    for (r, c) in model.constraints.iter().enumerate() {
        for &(j, a) in &c.terms {
            by_col[j].push((r, a));
        }
    }
    s.push_str("COLUMNS\n");
    let mut in_int = false;
    for (j, v) in model.variables.iter().enumerate() {
        let int = v.kind.is_integral();
        if int != in_int {
            let tag = if int { "INTORG" } else { "INTEND" };
            let _ = writeln!(s, "    MARKER  'MARKER'  '{tag}'");
            in_int = int;
        }
        let c = model.objective[j];
        if c != 0.0 || by_col[j].is_empty() {
            let _ = writeln!(s, "    {}  obj  {}", v.name, g12(c));
        }
        for &(r, a) in &by_col[j] {
            let _ = writeln!(s, "    {}  {}  {}", v.name, model.constraints[r].name, g12(a));
        }
    }
    if in_int {
        s.push_str("    MARKER  'MARKER'  'INTEND'\n");
    }
    s.push_str("RHS\n");
    if model.objective_constant != 0.0 {
        let _ = writeln!(s, "    RHS  obj  {}", g12(-model.objective_constant));
    }
    for c in &model.constraints {
        if c.rhs != 0.0 {
            let _ = writeln!(s, "    RHS  {}  {}", c.name, g12(c.rhs));
        }
    }
    s.push_str("BOUNDS\n");
    for v in &model.variables {
        if v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0 {
            let _ = writeln!(s, " BV BND  {}", v.name);
        } else if v.lower == v.upper {
            let _ = writeln!(s, " FX BND  {}  {}", v.name, g12(v.lower));
        } else {
            let _ = writeln!(s, " LO BND  {}  {}", v.name, g12(v.lower));
            let _ = writeln!(s, " UP BND  {}  {}", v.name, g12(v.upper));
        }
    }
    s.push_str("ENDATA\n");
    s
}

pub fn export_model(model: &Model, format: ModelFormat, path: &Path) -> Result<(), SolverError> {
    let text = match format {
        ModelFormat::Lp => write_lp(model),
        ModelFormat::Mps => write_mps(model),
    };
    std::fs::write(path, text)?;
    Ok(())
}

impl Assignment {
    /// `name value` lines, readable by [`import_solution`].
    pub fn to_solution_text(&self, model: &Model) -> String {
        let mut s = String::new();
        for (v, x) in model.variables.iter().zip(&self.values) {
            let _ = writeln!(s, "{} {:?}", v.name, x);
        }
        s
    }
}

/// Reads a `name value` solution file and checks it against `model`.
pub fn import_solution(model: &Model, path: &Path) -> Result<Assignment, SolverError> {
    let text = std::fs::read_to_string(path)?;
    parse_solution(model, &text)
}

pub(crate) fn parse_solution(model: &Model, text: &str) -> Result<Assignment, SolverError> {
    let mut values = vec![f64::NAN; model.num_vars()];
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('\\') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(name), Some(val), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(SolverError::Parse {
                line: k + 1,
                msg: format!("expected `name value`, got {line:?}"),
            });
        };
        let j = model.var_index(name).ok_or_else(|| SolverError::Parse {
            line: k + 1,
            msg: format!("unknown variable {name}"),
        })?;
        values[j] = val.parse().map_err(|_| SolverError::Parse {
            line: k + 1,
            msg: format!("bad number {val:?}"),
        })?;
    }
    if let Some(j) = values.iter().position(|v| v.is_nan()) {
        return Err(SolverError::MissingVariable(model.variables[j].name.clone()));
    }
    let (worst, which) = model.max_violation(&values);
    if worst > 1e-6 {
        return Err(SolverError::Violation {
            name: which.unwrap_or_default(),
            amount: worst,
        });
    }
    for (v, x) in model.variables.iter().zip(values.iter_mut()) {
        if v.kind.is_integral() {
            *x = x.round();
        }
    }
    let objective = model.evaluate(&values);
    Ok(Assignment {
        values,
        objective,
        status: SolveStatus::Optimal,
        nodes: 0,
    })
}
