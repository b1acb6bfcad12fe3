//! MILP encoding of the most-probable explanation problem.

use crate::canonical::Side;
use crate::error::{Error, Result};
use crate::probability::{greedy_evidence, ln_complement, log_probability, ExplanationSet, Instance, Priors, TupleRef};
use crate::solver::{self, Comparator, Model, SolveStatus, SolverConfig, VarKind};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MilpOptions {
    /// Kept tuples must take part in at least one evidence match.
    pub coverage: bool,
    /// Add the pair cut forbidding unchanged, unequal, isolated pairs.
    pub pair_cuts: bool,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions {
            coverage: true,
            pair_cuts: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TupleVars {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub istar: usize,
    pub p: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MilpModel {
    pub model: Model,
    /// Impacts are multiplied by this before encoding.
    pub scale: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Scaled impact domain per flat vertex.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub tuples: Vec<TupleVars>,
    pub z: Vec<usize>,
    pub iaux: Vec<usize>,
}

/// Smallest power of ten (up to 10^6) making every impact integral.
pub fn impact_scale(impacts: impl IntoIterator<Item = f64> + Clone) -> Result<f64> {
    for s in 0..=6 {
        let f = 10f64.powi(s);
        if impacts.clone().into_iter().all(|v| {
            let x = v * f;
            (x - x.round()).abs() <= 1e-9 * x.abs().max(1.0)
        }) {
            return Ok(f);
        }
    }
    Err(Error::Invalid("impacts need more than six decimal digits".into()))
}

pub fn tuple_name(t: TupleRef) -> String {
    format!("{}{}", t.side.tag(), t.index)
}

/// Which side's tuples are the degree-one leaves of the evidence graph.
pub fn leaf_side(inst: &Instance) -> Side {
    if inst.phi.constrains(Side::Left) {
        Side::Left
    } else {
        Side::Right
    }
}

pub fn build_milp(inst: &Instance, priors: &Priors, opts: &MilpOptions) -> Result<MilpModel> {
    priors.validate()?;
    if let Some(m) = inst.matches.iter().find(|m| m.left >= inst.left.len() || m.right >= inst.right.len()) {
        return Err(Error::Invalid(format!("match ({}, {}) references a missing tuple", m.left, m.right)));
    }
    let scale = impact_scale(inst.left.iter().chain(&inst.right).copied())?;
    let n = inst.num_tuples();
    let imp: Vec<f64> = inst.tuples().map(|t| (inst.impact(t) * scale).round()).collect();
    let (a, b, c) = (priors.a(), priors.b(), priors.c());

    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, m) in inst.matches.iter().enumerate() {
        let (l, r) = (m.left, inst.left.len() + m.right);
        nbrs[l].push(r);
        nbrs[r].push(l);
        incident[l].push(k);
        incident[r].push(k);
    }
    let s_plus: Vec<f64> = (0..n).map(|v| nbrs[v].iter().map(|&u| imp[u].max(0.0)).sum()).collect();
    let s_minus: Vec<f64> = (0..n).map(|v| nbrs[v].iter().map(|&u| imp[u].min(0.0)).sum()).collect();
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for v in 0..n {
        let mut lo = imp[v].min(0.0).min(s_minus[v]);
        let mut hi = imp[v].max(0.0).max(s_plus[v]);
        for &j in &nbrs[v] {
            lo = lo.min(imp[j] - s_plus[j]);
            hi = hi.max(imp[j] - s_minus[j]);
        }
        lower[v] = lo;
        upper[v] = hi;
    }

    let mut model = Model::new("explanation");
    let (pl, pu) = (b.min(c).min(0.0), b.max(c).max(0.0));
    let mut tuples = Vec::with_capacity(n);
    for (v, t) in inst.tuples().enumerate() {
        let name = tuple_name(t);
        let x = model.add_var(format!("x_{name}"), VarKind::Binary, 0.0, 1.0);
        let y = model.add_var(format!("y_{name}"), VarKind::Binary, 0.0, 1.0);
        let w = model.add_var(format!("w_{name}"), VarKind::Binary, 0.0, 1.0);
        let istar = model.add_var(format!("Istar_{name}"), VarKind::Integer, lower[v], upper[v]);
        let p = model.add_var(format!("P_{name}"), VarKind::Continuous, pl, pu);
        model.add_objective(x, a);
        model.add_objective(p, 1.0);
        tuples.push(TupleVars { x, y, w, istar, p });
    }
    let mut z = Vec::with_capacity(inst.matches.len());
    let mut iaux = Vec::with_capacity(inst.matches.len());
    let leaves = leaf_side(inst);
    for m in &inst.matches {
        let name = format!("{}_{}", tuple_name(TupleRef::left(m.left)), tuple_name(TupleRef::right(m.right)));
        let zv = model.add_var(format!("z_{name}"), VarKind::Binary, 0.0, 1.0);
        let leaf = match leaves {
            Side::Left => m.left,
            Side::Right => inst.left.len() + m.right,
        };
        let av = model.add_var(format!("Iaux_{name}"), VarKind::Continuous, lower[leaf], upper[leaf]);
        model.add_objective(zv, m.p.ln() - ln_complement(m.p));
        model.objective_constant += ln_complement(m.p);
        z.push(zv);
        iaux.push(av);
    }

    let g = 1.0;
    for (v, t) in inst.tuples().enumerate() {
        let name = tuple_name(t);
        let tv = tuples[v];
        let (i, lo, hi) = (imp[v], lower[v], upper[v]);
        let big = (hi - i).max(i - lo);
        // y = 1 ⇔ I* = I, with w choosing the direction of a change
        model.add_constraint(format!("link_up_{name}"), vec![(tv.istar, 1.0), (tv.y, big)], Comparator::Le, i + big);
        model.add_constraint(format!("link_dn_{name}"), vec![(tv.istar, -1.0), (tv.y, big)], Comparator::Le, big - i);
        model.add_constraint(
            format!("gap_up_{name}"),
            vec![(tv.istar, 1.0), (tv.y, g + big), (tv.w, g + big)],
            Comparator::Ge,
            i + g,
        );
        model.add_constraint(
            format!("gap_dn_{name}"),
            vec![(tv.istar, -1.0), (tv.y, g + big), (tv.w, -(g + big))],
            Comparator::Ge,
            -i - big,
        );
        model.add_constraint(format!("sign_{name}"), vec![(tv.w, 1.0), (tv.y, 1.0)], Comparator::Le, 1.0);
        model.add_constraint(format!("keep_{name}"), vec![(tv.y, 1.0), (tv.x, -1.0)], Comparator::Ge, 0.0);
        // P = b, c or 0 for unchanged, changed and removed tuples
        let (pl, pu) = (c, b);
        model.add_constraint(format!("p1_{name}"), vec![(tv.p, 1.0), (tv.x, pu)], Comparator::Le, pu);
        model.add_constraint(format!("p2_{name}"), vec![(tv.p, 1.0), (tv.x, pl)], Comparator::Ge, pl);
        model.add_constraint(
            format!("p3_{name}"),
            vec![(tv.p, 1.0), (tv.y, -(b - c)), (tv.x, pl)],
            Comparator::Le,
            c,
        );
        model.add_constraint(
            format!("p4_{name}"),
            vec![(tv.p, 1.0), (tv.y, -(b - c)), (tv.x, pu)],
            Comparator::Ge,
            c,
        );
        model.add_constraint(
            format!("p_{name}"),
            vec![(tv.p, 1.0), (tv.y, -(b - c)), (tv.x, b)],
            Comparator::Eq,
            c,
        );

        let zs: Vec<(usize, f64)> = incident[v].iter().map(|&k| (z[k], 1.0)).collect();
        if opts.coverage {
            let mut terms = zs.clone();
            terms.push((tv.x, 1.0));
            model.add_constraint(format!("cover_{name}"), terms, Comparator::Ge, 1.0);
        }
        if inst.phi.constrains(t.side) && zs.len() > 1 {
            model.add_constraint(format!("degree_{name}"), zs.clone(), Comparator::Le, 1.0);
        }
        if t.side == leaves {
            if !opts.coverage {
                // a kept leaf outside every match carries no impact
                let mut up = vec![(tv.istar, 1.0), (tv.x, -hi)];
                let mut dn = vec![(tv.istar, 1.0), (tv.x, -lo)];
                up.extend(zs.iter().map(|&(j, _)| (j, -hi)));
                dn.extend(zs.iter().map(|&(j, _)| (j, -lo)));
                model.add_constraint(format!("idle_up_{name}"), up, Comparator::Le, 0.0);
                model.add_constraint(format!("idle_dn_{name}"), dn, Comparator::Ge, 0.0);
            }
        } else {
            // Σ Iaux over incoming matches equals I* while kept
            let mut terms: Vec<(usize, f64)> = incident[v].iter().map(|&k| (iaux[k], 1.0)).collect();
            terms.push((tv.istar, -1.0));
            terms.push((tv.x, i));
            model.add_constraint(format!("balance_{name}"), terms, Comparator::Eq, 0.0);
        }
    }

    for (k, m) in inst.matches.iter().enumerate() {
        let (l, r) = (m.left, inst.left.len() + m.right);
        let (leaf, center) = if leaves == Side::Left { (l, r) } else { (r, l) };
        let name = format!("{}_{}", tuple_name(TupleRef::left(m.left)), tuple_name(TupleRef::right(m.right)));
        let (zv, av) = (z[k], iaux[k]);
        model.add_constraint(format!("zl_{name}"), vec![(zv, 1.0), (tuples[l].x, 1.0)], Comparator::Le, 1.0);
        model.add_constraint(format!("zr_{name}"), vec![(zv, 1.0), (tuples[r].x, 1.0)], Comparator::Le, 1.0);
        let (lo, hi, is) = (lower[leaf], upper[leaf], tuples[leaf].istar);
        // Iaux = z · I*(leaf)
        model.add_constraint(format!("aux1_{name}"), vec![(av, 1.0), (zv, -hi)], Comparator::Le, 0.0);
        model.add_constraint(format!("aux2_{name}"), vec![(av, 1.0), (zv, -lo)], Comparator::Ge, 0.0);
        model.add_constraint(
            format!("aux3_{name}"),
            vec![(av, 1.0), (is, -1.0), (zv, -lo)],
            Comparator::Le,
            -lo,
        );
        model.add_constraint(
            format!("aux4_{name}"),
            vec![(av, 1.0), (is, -1.0), (zv, -hi)],
            Comparator::Ge,
            -hi,
        );
        // while the leaf is unchanged its contribution is exactly z · I
        let (il, big, y) = (imp[leaf], (hi - imp[leaf]).max(imp[leaf] - lo), tuples[leaf].y);
        model.add_constraint(
            format!("auxy_up_{name}"),
            vec![(av, 1.0), (zv, -il), (y, big)],
            Comparator::Le,
            big,
        );
        model.add_constraint(
            format!("auxy_dn_{name}"),
            vec![(av, 1.0), (zv, -il), (y, -big)],
            Comparator::Ge,
            -big,
        );
        if opts.pair_cuts && imp[leaf] != imp[center] {
            let mut terms = vec![(zv, 1.0), (tuples[leaf].y, 1.0), (tuples[center].y, 1.0)];
            terms.extend(incident[center].iter().filter(|&&o| o != k).map(|&o| (z[o], -1.0)));
            model.add_constraint(format!("pair_{name}"), terms, Comparator::Le, 2.0);
        }
    }

    Ok(MilpModel {
        model,
        scale,
        a,
        b,
        c,
        lower,
        upper,
        tuples,
        z,
        iaux,
    })
}

pub fn decode_solution(mm: &MilpModel, inst: &Instance, values: &[f64]) -> ExplanationSet {
    let mut delta = BTreeSet::new();
    let mut changes = BTreeMap::new();
    for (v, t) in inst.tuples().enumerate() {
        let tv = mm.tuples[v];
        if values[tv.x] > 0.5 {
            delta.insert(t);
        } else if values[tv.y] < 0.5 {
            changes.insert(t, values[tv.istar].round() / mm.scale);
        }
    }
    let evidence = (0..inst.matches.len()).filter(|&k| values[mm.z[k]] > 0.5).collect();
    ExplanationSet {
        delta,
        changes,
        evidence,
    }
}

/// Model values realizing a complete explanation set.
pub fn encode_solution(mm: &MilpModel, inst: &Instance, e: &ExplanationSet) -> Vec<f64> {
    let mut v = vec![0.0; mm.model.num_vars()];
    for (i, t) in inst.tuples().enumerate() {
        let tv = mm.tuples[i];
        let old = (inst.impact(t) * mm.scale).round();
        if e.delta.contains(&t) {
            v[tv.x] = 1.0;
            v[tv.y] = 1.0;
            v[tv.istar] = old;
        } else if let Some(&new) = e.changes.get(&t) {
            let new = (new * mm.scale).round();
            v[tv.istar] = new;
            v[tv.w] = if new > old { 0.0 } else { 1.0 };
            v[tv.p] = mm.c;
        } else {
            v[tv.y] = 1.0;
            v[tv.istar] = old;
            v[tv.p] = mm.b;
        }
    }
    let leaves = leaf_side(inst);
    for &k in &e.evidence {
        let m = &inst.matches[k];
        let leaf = match leaves {
            Side::Left => m.left,
            Side::Right => inst.left.len() + m.right,
        };
        v[mm.z[k]] = 1.0;
        v[mm.iaux[k]] = v[mm.tuples[leaf].istar];
    }
    v
}

/// Rounds an LP point to a complete explanation set: matches are offered
/// greedily in order of decreasing LP value.
pub fn rounding_heuristic(mm: &MilpModel, inst: &Instance, priors: &Priors, coverage: bool, lp: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..inst.matches.len()).filter(|&k| lp[mm.z[k]] > 1e-6).collect();
    order.sort_by(|&a, &b| {
        lp[mm.z[b]]
            .total_cmp(&lp[mm.z[a]])
            .then(inst.matches[b].p.total_cmp(&inst.matches[a].p))
            .then(a.cmp(&b))
    });
    let e = greedy_evidence(inst, &order, priors, coverage);
    encode_solution(mm, inst, &e)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solved {
    pub explanation: ExplanationSet,
    pub objective: f64,
    pub status: SolveStatus,
    pub nodes: u64,
}

/// Builds, solves and decodes one instance.
pub fn solve_instance(inst: &Instance, priors: &Priors, opts: &MilpOptions, cfg: &SolverConfig) -> Result<Solved> {
    let mm = build_milp(inst, priors, opts)?;
    let a = solver::solve_with(&mm.model, cfg, |lp| Some(rounding_heuristic(&mm, inst, priors, opts.coverage, lp)))?;
    let explanation = decode_solution(&mm, inst, &a.values);
    let objective = log_probability(inst, &explanation, priors);
    Ok(Solved {
        explanation,
        objective,
        status: a.status,
        nodes: a.nodes,
    })
}
