//! Comparison methods that share the engine's inputs and outputs.

use crate::canonical::Side;
use crate::error::{Error, Result};
use crate::probability::{derive_explanations, greedy_evidence, is_complete, ExplanationSet, Instance, Priors};
use crate::solver::{self, Comparator, Model, SolverConfig, VarKind};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

/// Written as `milp`, `greedy`, `threshold:<θ>` or `exactcover`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    #[default]
    Milp,
    Greedy,
    Threshold(f64),
    ExactCover,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Milp => write!(f, "milp"),
            Method::Greedy => write!(f, "greedy"),
            Method::Threshold(t) => write!(f, "threshold:{t}"),
            Method::ExactCover => write!(f, "exactcover"),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "milp" => return Ok(Method::Milp),
            "greedy" => return Ok(Method::Greedy),
            "exactcover" | "exact-cover" => return Ok(Method::ExactCover),
            _ => {}
        }
        if let Some(t) = s.strip_prefix("threshold") {
            let t = match t.strip_prefix(':') {
                Some(v) => v.parse::<f64>().map_err(|_| Error::Invalid(format!("bad threshold in {s:?}")))?,
                None if t.is_empty() => 0.9,
                None => return Err(Error::Invalid(format!("unknown method {s:?}"))),
            };
            // above 1 is allowed and keeps nothing
            if !(t >= 0.0) {
                return Err(Error::Invalid(format!("threshold {t} must be non-negative")));
            }
            return Ok(Method::Threshold(t));
        }
        Err(Error::Invalid(format!(
            "unknown method {s:?} (expected milp, greedy, threshold:<θ> or exactcover)"
        )))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub explanation: ExplanationSet,
    pub method: Method,
    pub wall_ms: f64,
    /// Whether the explanation set passes the completeness check.
    pub complete: bool,
}

fn finish(inst: &Instance, explanation: ExplanationSet, method: Method, started: Instant) -> BaselineResult {
    BaselineResult {
        complete: is_complete(inst, &explanation),
        explanation,
        method,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    }
}

/// Keeps matches with `p ≥ θ`, then drops the weakest ones until the
/// cardinality restriction holds.
pub fn threshold_evidence(inst: &Instance, theta: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = (0..inst.matches.len()).filter(|&k| inst.matches[k].p >= theta).collect();
    let mut dl = vec![0u32; inst.left.len()];
    let mut dr = vec![0u32; inst.right.len()];
    for &k in &kept {
        dl[inst.matches[k].left] += 1;
        dr[inst.matches[k].right] += 1;
    }
    let mut asc = kept.clone();
    asc.sort_by(|&a, &b| inst.matches[a].p.total_cmp(&inst.matches[b].p).then(a.cmp(&b)));
    let (cl, cr) = (inst.phi.constrains(Side::Left), inst.phi.constrains(Side::Right));
    let mut dropped = vec![false; inst.matches.len()];
    for k in asc {
        let m = inst.matches[k];
        if (cl && dl[m.left] > 1) || (cr && dr[m.right] > 1) {
            dropped[k] = true;
            dl[m.left] -= 1;
            dr[m.right] -= 1;
        }
    }
    kept.retain(|&k| !dropped[k]);
    kept
}

pub fn threshold_explain(inst: &Instance, theta: f64, priors: &Priors) -> BaselineResult {
    let started = Instant::now();
    let evidence = threshold_evidence(inst, theta);
    let e = derive_explanations(inst, &evidence, priors, true);
    finish(inst, e, Method::Threshold(theta), started)
}

pub fn greedy_explain(inst: &Instance, priors: &Priors) -> BaselineResult {
    let started = Instant::now();
    let mut order: Vec<usize> = (0..inst.matches.len()).collect();
    order.sort_by(|&a, &b| inst.matches[b].p.total_cmp(&inst.matches[a].p).then(a.cmp(&b)));
    let e = greedy_evidence(inst, &order, priors, true);
    finish(inst, e, Method::Greedy, started)
}

/// Chooses disjoint right-side sets over left-side elements, maximizing the
/// number of covered elements plus chosen sets. Impacts and probabilities
/// play no part.
pub fn exactcover_evidence(inst: &Instance, cfg: &SolverConfig) -> Result<Vec<usize>> {
    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); inst.right.len()];
    for (k, m) in inst.matches.iter().enumerate() {
        sets[m.right].push(k);
    }
    let mut model = Model::new("exactcover");
    let s: Vec<usize> = (0..inst.right.len())
        .map(|j| model.add_var(format!("s_{j}"), VarKind::Binary, 0.0, 1.0))
        .collect();
    for (j, members) in sets.iter().enumerate() {
        model.add_objective(s[j], members.len() as f64 + 1.0);
    }
    let mut by_element: Vec<Vec<usize>> = vec![Vec::new(); inst.left.len()];
    for m in &inst.matches {
        by_element[m.left].push(s[m.right]);
    }
    for (i, vars) in by_element.iter().enumerate() {
        if vars.len() > 1 {
            model.add_constraint(format!("elem_{i}"), vars.iter().map(|&v| (v, 1.0)).collect(), Comparator::Le, 1.0);
        }
    }
    let a = solver::solve(&model, cfg)?;
    let mut evidence: Vec<usize> = (0..inst.right.len())
        .filter(|&j| a.values[s[j]] > 0.5)
        .flat_map(|j| sets[j].iter().copied())
        .collect();
    evidence.sort_unstable();
    Ok(evidence)
}

pub fn exactcover_explain(inst: &Instance, priors: &Priors, cfg: &SolverConfig) -> Result<BaselineResult> {
    let started = Instant::now();
    let evidence = exactcover_evidence(inst, cfg)?;
    let e = derive_explanations(inst, &evidence, priors, true);
    Ok(finish(inst, e, Method::ExactCover, started))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::MatchRelation;
    use crate::matching::TupleMatch;
    use crate::milp::{solve_instance, MilpOptions};
    use crate::probability::{is_valid_mapping, log_probability, score_terms, TupleRef};

    fn tm(left: usize, right: usize, p: f64) -> TupleMatch {
        TupleMatch { left, right, p }
    }

    // A=0, B=1 on the left; A'=0, B'=1 on the right
    fn gadget() -> Instance {
        Instance::new(
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![tm(0, 0, 0.8), tm(1, 1, 0.8), tm(0, 1, 0.9), tm(1, 0, 0.5)],
            MatchRelation::Equiv,
        )
    }

    #[test]
    fn method_parsing() {
        assert_eq!("milp".parse::<Method>().unwrap(), Method::Milp);
        assert_eq!("threshold:0.75".parse::<Method>().unwrap(), Method::Threshold(0.75));
        assert_eq!("ExactCover".parse::<Method>().unwrap(), Method::ExactCover);
        assert!("threshold:x".parse::<Method>().is_err());
        assert!("simplex".parse::<Method>().is_err());
        let m = Method::Threshold(0.5);
        assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
    }

    #[test]
    fn greedy_takes_the_strongest_match_and_loses() {
        let inst = gadget();
        let pr = Priors::default();
        let g = greedy_explain(&inst, &pr);
        assert!(g.explanation.evidence.contains(&2));
        assert!(!g.explanation.evidence.contains(&0));
        let m = solve_instance(&inst, &pr, &MilpOptions::default(), &SolverConfig::default()).unwrap();
        assert_eq!(m.explanation.evidence, vec![0, 1]);
        assert!(log_probability(&inst, &g.explanation, &pr) < m.objective);
    }

    #[test]
    fn threshold_cases() {
        let pr = Priors::default();
        let inst = Instance::new(
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![tm(0, 0, 0.95), tm(1, 1, 0.6)],
            MatchRelation::Equiv,
        );
        let r = threshold_explain(&inst, 0.9, &pr);
        assert_eq!(r.explanation.evidence, vec![0]);
        assert!(r.explanation.delta.contains(&TupleRef::left(1)) && r.explanation.delta.contains(&TupleRef::right(1)));
        let none = threshold_explain(&inst, 1.1, &pr);
        assert!(none.explanation.evidence.is_empty());
        assert_eq!(none.explanation.delta.len(), 4);
        // an already valid mapping passes untouched at θ = 0
        assert_eq!(threshold_evidence(&inst, 0.0), vec![0, 1]);
    }

    #[test]
    fn threshold_drops_weakest_on_conflict() {
        let inst = Instance::new(
            vec![1.0],
            vec![1.0, 1.0],
            vec![tm(0, 0, 0.95), tm(0, 1, 0.92)],
            MatchRelation::Equiv,
        );
        assert_eq!(threshold_evidence(&inst, 0.9), vec![0]);
        let many = Instance { phi: MatchRelation::MoreGeneral, ..inst };
        assert_eq!(threshold_evidence(&many, 0.9), vec![0, 1]);
    }

    #[test]
    fn single_match_is_accepted_and_weak_matches_flag_incompleteness() {
        let pr = Priors::default();
        let one = Instance::new(vec![3.0], vec![3.0], vec![tm(0, 0, 0.9)], MatchRelation::Equiv);
        let r = greedy_explain(&one, &pr);
        assert_eq!(r.explanation.evidence, vec![0]);
        assert!(r.complete);
        let empty = ExplanationSet::default();
        assert!(score_terms(&one, &r.explanation, &pr) > score_terms(&one, &empty, &pr));
    }

    #[test]
    fn exactcover_ignores_impacts() {
        let pr = Priors::default();
        let cfg = SolverConfig::default();
        let perfect = Instance::new(
            vec![1.0, 2.0],
            vec![1.0, 2.0],
            vec![tm(0, 0, 0.9), tm(1, 1, 0.9)],
            MatchRelation::Equiv,
        );
        let r = exactcover_explain(&perfect, &pr, &cfg).unwrap();
        assert!(r.explanation.delta.is_empty());
        assert_eq!(r.explanation.evidence, vec![0, 1]);

        let lonely = Instance::new(vec![1.0, 1.0], vec![1.0], vec![tm(0, 0, 0.9)], MatchRelation::Equiv);
        let r = exactcover_explain(&lonely, &pr, &cfg).unwrap();
        assert!(r.explanation.delta.contains(&TupleRef::left(1)));

        // a weak many-element set beats a strong singleton on count alone
        let inst = Instance::new(
            vec![5.0, 1.0],
            vec![5.0, 1.0],
            vec![tm(0, 0, 0.99), tm(0, 1, 0.3), tm(1, 1, 0.3)],
            MatchRelation::LessGeneral,
        );
        let ec = exactcover_explain(&inst, &pr, &cfg).unwrap();
        assert_eq!(ec.explanation.evidence, vec![1, 2]);
        assert!(ec.explanation.delta.contains(&TupleRef::right(0)));
        let m = solve_instance(&inst, &pr, &MilpOptions::default(), &cfg).unwrap();
        assert_ne!(m.explanation.delta, ec.explanation.delta);
        assert!(m.objective > log_probability(&inst, &ec.explanation, &pr));
    }

    #[test]
    fn exactcover_evidence_is_many_to_one() {
        let inst = Instance::new(
            vec![1.0, 1.0, 1.0],
            vec![1.0, 1.0],
            vec![tm(0, 0, 0.5), tm(1, 0, 0.5), tm(1, 1, 0.5), tm(2, 1, 0.5)],
            MatchRelation::LessGeneral,
        );
        let ev = exactcover_evidence(&inst, &SolverConfig::default()).unwrap();
        assert!(is_valid_mapping(&inst, &ev));
        let mut seen = [0; 3];
        for &k in &ev {
            seen[inst.matches[k].left] += 1;
        }
        assert!(seen.iter().all(|&c| c <= 1));
        // the same cover breaks a one-to-one restriction and is flagged
        let strict = Instance { phi: MatchRelation::Equiv, ..inst };
        let r = exactcover_explain(&strict, &Priors::default(), &SolverConfig::default()).unwrap();
        assert!(!r.complete);
    }
}
