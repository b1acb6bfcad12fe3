use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub cmp: Comparator,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * values[j]).sum()
    }

    /// Amount by which `values` violate this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let act = self.activity(values);
        match self.cmp {
            Comparator::Le => (act - self.rhs).max(0.0),
            Comparator::Ge => (self.rhs - act).max(0.0),
            Comparator::Eq => (act - self.rhs).abs(),
        }
    }
}

/// A maximization model with bounded variables and linear rows.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Model {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Dense objective coefficients, one per variable.
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Model {
    pub fn new(name: impl Into<String>) -> Self {
        Model {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> usize {
        let name = name.into();
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        let j = self.variables.len();
        let prev = self.index.insert(name.clone(), j);
        assert!(prev.is_none(), "duplicate variable {name}");
        self.variables.push(Variable { name, kind, lower, upper });
        self.objective.push(0.0);
        j
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, terms: Vec<(usize, f64)>, cmp: Comparator, rhs: f64) {
        debug_assert!(terms.iter().all(|&(j, _)| j < self.variables.len()));
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            cmp,
            rhs,
        });
    }

    pub fn add_objective(&mut self, var: usize, coef: f64) {
        self.objective[var] += coef;
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        if self.index.len() != self.variables.len() {
            // deserialized models carry no index
            return self.variables.iter().position(|v| v.name == name);
        }
        self.index.get(name).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().zip(values).map(|(c, x)| c * x).sum::<f64>()
    }

    /// Largest bound, row or integrality violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> (f64, Option<String>) {
        let mut worst = 0.0;
        let mut which = None;
        for (v, &x) in self.variables.iter().zip(values) {
            let mut e = (v.lower - x).max(x - v.upper).max(0.0);
            if v.kind.is_integral() {
                e = e.max((x - x.round()).abs());
            }
            if e > worst {
                worst = e;
                which = Some(v.name.clone());
            }
        }
        for c in &self.constraints {
            let e = c.violation(values);
            if e > worst {
                worst = e;
                which = Some(c.name.clone());
            }
        }
        (worst, which)
    }
}
