//! MILP solving: a bounded dual simplex for relaxations, depth-first
//! branch-and-bound on top of it, and LP/MPS round-tripping for external
//! solvers.

mod io;
mod lu;
mod model;
mod simplex;

pub use io::{export_model, import_solution, write_lp, write_mps, ModelFormat};
pub use model::{Comparator, Constraint, Model, VarKind, Variable};
pub use simplex::{LpSolver, LpStatus};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::{Duration, Instant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub int_tol: f64,
    pub gap_tol: f64,
    pub node_limit: Option<u64>,
    #[serde(with = "opt_secs")]
    pub time_limit: Option<Duration>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            int_tol: 1e-6,
            gap_tol: 0.0,
            node_limit: None,
            time_limit: None,
        }
    }
}

mod opt_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_some(&d.as_secs_f64()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.map(Duration::from_secs_f64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    BoundLimit,
}

/// Variable values aligned with the model's variable list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub values: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub nodes: u64,
}

impl Assignment {
    pub fn value(&self, model: &Model, name: &str) -> Option<f64> {
        model.var_index(name).map(|j| self.values[j])
    }

    pub fn named(&self, model: &Model) -> BTreeMap<String, f64> {
        model
            .variables
            .iter()
            .zip(&self.values)
            .map(|(v, &x)| (v.name.clone(), x))
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("model is infeasible")]
    Infeasible,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("node or time limit reached before any integral solution was found")]
    NoIncumbent,
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("solution file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("solution file has no value for variable {0}")]
    MissingVariable(String),
    #[error("solution violates {name} by {amount:e}")]
    Violation { name: String, amount: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpResult {
    pub values: Vec<f64>,
    pub objective: f64,
}

/// Solves the continuous relaxation of `model`; `None` when infeasible.
pub fn solve_lp(model: &Model) -> Result<Option<LpResult>, SolverError> {
    let mut lp = LpSolver::new(model);
    match lp.solve() {
        LpStatus::Optimal => Ok(Some(LpResult {
            values: lp.values().to_vec(),
            objective: lp.objective() + model.objective_constant,
        })),
        LpStatus::Infeasible => Ok(None),
        LpStatus::IterationLimit | LpStatus::TimeLimit => Err(SolverError::Numerical("simplex iteration limit".into())),
    }
}

pub const HEURISTIC_PERIOD: u64 = 64;

struct Frame {
    var: usize,
    old: (f64, f64),
    second: (f64, f64),
    on_second: bool,
}

/// Depth-first branch-and-bound with most-fractional branching, binaries first.
pub fn solve(model: &Model, cfg: &SolverConfig) -> Result<Assignment, SolverError> {
    solve_with(model, cfg, |_| None)
}

/// Maps a node's LP values to a candidate assignment.
pub type Heuristic<'a> = dyn FnMut(&[f64]) -> Option<Vec<f64>> + 'a;

/// As [`solve`], with a primal heuristic tried at the root and then every
/// [`HEURISTIC_PERIOD`] nodes. Candidates are checked against the model.
pub fn solve_with(
    model: &Model,
    cfg: &SolverConfig,
    mut heuristic: impl FnMut(&[f64]) -> Option<Vec<f64>>,
) -> Result<Assignment, SolverError> {
    let started = Instant::now();
    let mut lp = LpSolver::new(model);
    lp.deadline = cfg.time_limit.map(|t| started + t);
    let ints: Vec<usize> = (0..model.num_vars())
        .filter(|&j| model.variables[j].kind.is_integral())
        .collect();
    // binaries are branched on before general integers
    let (bins, gens): (Vec<usize>, Vec<usize>) = ints.iter().partition(|&&j| model.variables[j].kind == VarKind::Binary);
    // integral bounds on integer variables
    for &j in &ints {
        let (l, h) = (lp.lower(j).ceil(), lp.upper(j).floor());
        lp.set_bounds(j, l, h);
    }

    let mut stack: Vec<Frame> = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut nodes = 0u64;
    let mut limited = false;

    'search: loop {
        if cfg.node_limit.is_some_and(|cap| nodes >= cap) || cfg.time_limit.is_some_and(|t| started.elapsed() >= t) {
            limited = true;
            break;
        }
        nodes += 1;
        let mut descend = None;
        match lp.solve() {
            LpStatus::IterationLimit => return Err(SolverError::Numerical("simplex iteration limit".into())),
            LpStatus::TimeLimit => {
                limited = true;
                break;
            }
            LpStatus::Infeasible => {}
            LpStatus::Optimal => {
                let bound = lp.objective();
                let pruned = best
                    .as_ref()
                    .is_some_and(|(_, inc)| bound <= inc + cfg.gap_tol.max(1e-9 * (1.0 + inc.abs())));
                if !pruned && (nodes - 1).is_multiple_of(HEURISTIC_PERIOD) {
                    if let Some(cand) = heuristic(lp.values()) {
                        let ok = cand.len() == model.num_vars()
                            && model.max_violation(&cand).0 <= 1e-7
                            && ints.iter().all(|&j| cand[j] == cand[j].round());
                        let value = model.evaluate(&cand) - model.objective_constant;
                        if ok && best.as_ref().is_none_or(|(_, inc)| value > *inc) {
                            best = Some((cand, value));
                        }
                    }
                }
                let pruned = best
                    .as_ref()
                    .is_some_and(|(_, inc)| bound <= inc + cfg.gap_tol.max(1e-9 * (1.0 + inc.abs())));
                if !pruned {
                    let x = lp.values();
                    let mut pick = None;
                    for group in [&bins, &gens] {
                        let mut pick_dist = cfg.int_tol;
                        for &j in group.iter() {
                            let f = x[j] - x[j].floor();
                            let dist = f.min(1.0 - f);
                            if dist > pick_dist {
                                pick_dist = dist;
                                pick = Some(j);
                            }
                        }
                        if pick.is_some() {
                            break;
                        }
                    }
                    match pick {
                        None => best = Some((x.to_vec(), bound)),
                        Some(j) => descend = Some((j, x[j])),
                    }
                }
            }
        }
        if let Some((j, v)) = descend {
            let old = (lp.lower(j), lp.upper(j));
            let down = (old.0, v.floor());
            let up = (v.ceil(), old.1);
            let (first, second) = if v - v.floor() >= 0.5 { (up, down) } else { (down, up) };
            lp.set_bounds(j, first.0, first.1);
            stack.push(Frame {
                var: j,
                old,
                second,
                on_second: false,
            });
            continue;
        }
        loop {
            let Some(top) = stack.last_mut() else {
                break 'search;
            };
            if !top.on_second {
                top.on_second = true;
                let (j, b) = (top.var, top.second);
                lp.set_bounds(j, b.0, b.1);
                continue 'search;
            }
            let (j, old) = (top.var, top.old);
            lp.set_bounds(j, old.0, old.1);
            stack.pop();
        }
    }

    let Some((mut values, _)) = best else {
        return Err(if limited { SolverError::NoIncumbent } else { SolverError::Infeasible });
    };
    for &j in &ints {
        values[j] = values[j].round();
    }
    let objective = model.evaluate(&values);
    Ok(Assignment {
        values,
        objective,
        status: if limited { SolveStatus::BoundLimit } else { SolveStatus::Optimal },
        nodes,
    })
}
