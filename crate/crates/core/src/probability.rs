//! Explanation sets, their log-probability, completeness, and an exhaustive
//! oracle for small instances.

use crate::canonical::{CanonicalRelation, MatchRelation, Side};
use crate::error::{Error, Result};
use crate::matching::{TupleMapping, TupleMatch};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

/// Floor for `1 − p` and `1 − α` inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

pub fn ln_complement(p: f64) -> f64 {
    (1.0 - p).max(LOG_FLOOR).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors { alpha: 0.9, beta: 0.9 }
    }
}

impl Priors {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = Priors { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.5 && v <= 1.0) {
                return Err(Error::Invalid(format!("{name} = {v} must lie in (0.5, 1]")));
            }
        }
        Ok(())
    }

    /// Removed tuple.
    pub fn a(&self) -> f64 {
        ln_complement(self.alpha)
    }

    /// Kept, impact unchanged.
    pub fn b(&self) -> f64 {
        self.alpha.ln() + self.beta.ln()
    }

    /// Kept, impact changed.
    pub fn c(&self) -> f64 {
        self.alpha.ln() + ln_complement(self.beta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TupleRef {
    pub side: Side,
    pub index: usize,
}

impl TupleRef {
    pub fn left(index: usize) -> Self {
        TupleRef { side: Side::Left, index }
    }

    pub fn right(index: usize) -> Self {
        TupleRef { side: Side::Right, index }
    }
}

/// Impacts on both sides with the candidate matches between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub matches: Vec<TupleMatch>,
    pub phi: MatchRelation,
}

impl Instance {
    pub fn new(left: Vec<f64>, right: Vec<f64>, matches: Vec<TupleMatch>, phi: MatchRelation) -> Self {
        Instance {
            left,
            right,
            matches,
            phi,
        }
    }

    pub fn from_canonical(
        t1: &CanonicalRelation,
        t2: &CanonicalRelation,
        mapping: &TupleMapping,
        phi: MatchRelation,
    ) -> Self {
        Instance::new(t1.impacts(), t2.impacts(), mapping.matches.clone(), phi)
    }

    pub fn num_tuples(&self) -> usize {
        self.left.len() + self.right.len()
    }

    pub fn impact(&self, t: TupleRef) -> f64 {
        match t.side {
            Side::Left => self.left[t.index],
            Side::Right => self.right[t.index],
        }
    }

    /// Flat vertex id: left tuples first, then right.
    pub fn vertex(&self, t: TupleRef) -> usize {
        match t.side {
            Side::Left => t.index,
            Side::Right => self.left.len() + t.index,
        }
    }

    pub fn tuple(&self, v: usize) -> TupleRef {
        if v < self.left.len() {
            TupleRef::left(v)
        } else {
            TupleRef::right(v - self.left.len())
        }
    }

    pub fn tuples(&self) -> impl Iterator<Item = TupleRef> + '_ {
        (0..self.left.len())
            .map(TupleRef::left)
            .chain((0..self.right.len()).map(TupleRef::right))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplanationSet {
    pub delta: BTreeSet<TupleRef>,
    /// New impact per changed tuple.
    pub changes: BTreeMap<TupleRef, f64>,
    /// Indices into the instance's matches, ascending.
    pub evidence: Vec<usize>,
}

impl ExplanationSet {
    fn tie_cmp(&self, other: &ExplanationSet) -> Ordering {
        self.delta
            .iter()
            .cmp(other.delta.iter())
            .then_with(|| {
                let a = self.changes.iter().map(|(k, v)| (*k, v.to_bits()));
                let b = other.changes.iter().map(|(k, v)| (*k, v.to_bits()));
                a.cmp(b)
            })
            .then_with(|| self.evidence.cmp(&other.evidence))
    }
}

pub fn is_valid_mapping(inst: &Instance, evidence: &[usize]) -> bool {
    let mut dl = vec![0u32; inst.left.len()];
    let mut dr = vec![0u32; inst.right.len()];
    for &k in evidence {
        let m = &inst.matches[k];
        dl[m.left] += 1;
        dr[m.right] += 1;
    }
    let ok = |side: Side, deg: &[u32]| !inst.phi.constrains(side) || deg.iter().all(|&d| d <= 1);
    ok(Side::Left, &dl) && ok(Side::Right, &dr)
}

pub(crate) struct UnionFind(Vec<usize>);

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            self.0[hi] = lo;
        }
    }
}

/// Components of the evidence graph over kept tuples, each a list of
/// vertices in ascending order, ordered by smallest vertex.
pub fn evidence_components(inst: &Instance, evidence: &[usize], delta: &BTreeSet<TupleRef>) -> Vec<Vec<usize>> {
    let n = inst.num_tuples();
    let mut uf = UnionFind::new(n);
    for &k in evidence {
        let m = &inst.matches[k];
        uf.union(m.left, inst.left.len() + m.right);
    }
    let mut slot = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for v in 0..n {
        if delta.contains(&inst.tuple(v)) {
            continue;
        }
        let r = uf.find(v);
        if slot[r] == usize::MAX {
            slot[r] = comps.len();
            comps.push(Vec::new());
        }
        comps[slot[r]].push(v);
    }
    comps
}

fn refined(inst: &Instance, e: &ExplanationSet, t: TupleRef) -> f64 {
    e.changes.get(&t).copied().unwrap_or_else(|| inst.impact(t))
}

fn balanced(left: f64, right: f64, magnitude: f64) -> bool {
    (left - right).abs() <= 1e-9 + 1e-12 * magnitude
}

pub fn impact_equality_holds(inst: &Instance, e: &ExplanationSet) -> bool {
    if e.evidence.iter().any(|&k| {
        let m = &inst.matches[k];
        e.delta.contains(&TupleRef::left(m.left)) || e.delta.contains(&TupleRef::right(m.right))
    }) {
        return false;
    }
    evidence_components(inst, &e.evidence, &e.delta).iter().all(|comp| {
        let (mut l, mut r, mut mag) = (0.0, 0.0, 0.0);
        for &v in comp {
            let t = inst.tuple(v);
            let x = refined(inst, e, t);
            mag += x.abs();
            match t.side {
                Side::Left => l += x,
                Side::Right => r += x,
            }
        }
        balanced(l, r, mag)
    })
}

fn well_formed(inst: &Instance, e: &ExplanationSet) -> bool {
    let in_range = |t: &TupleRef| match t.side {
        Side::Left => t.index < inst.left.len(),
        Side::Right => t.index < inst.right.len(),
    };
    e.delta.iter().all(in_range)
        && e.changes.keys().all(|t| in_range(t) && !e.delta.contains(t))
        && e.evidence.windows(2).all(|w| w[0] < w[1])
        && e.evidence.iter().all(|&k| k < inst.matches.len())
}

pub fn is_complete(inst: &Instance, e: &ExplanationSet) -> bool {
    well_formed(inst, e) && is_valid_mapping(inst, &e.evidence) && impact_equality_holds(inst, e)
}

/// The log-probability sum without the completeness gate.
pub fn score_terms(inst: &Instance, e: &ExplanationSet, priors: &Priors) -> f64 {
    let (a, b, c) = (priors.a(), priors.b(), priors.c());
    let mut total = 0.0;
    for t in inst.tuples() {
        total += if e.delta.contains(&t) {
            a
        } else if e.changes.contains_key(&t) {
            c
        } else {
            b
        };
    }
    let mut chosen = e.evidence.iter().peekable();
    for (k, m) in inst.matches.iter().enumerate() {
        if chosen.peek() == Some(&&k) {
            chosen.next();
            total += m.p.ln();
        } else {
            total += ln_complement(m.p);
        }
    }
    total
}

pub fn log_probability(inst: &Instance, e: &ExplanationSet, priors: &Priors) -> f64 {
    if is_complete(inst, e) {
        score_terms(inst, e, priors)
    } else {
        f64::NEG_INFINITY
    }
}

/// Completes an evidence set: tuples it leaves unmatched are removed (or,
/// without `coverage`, kept when that scores higher and needs no change),
/// and every unbalanced component gets one impact change.
pub fn derive_explanations(inst: &Instance, evidence: &[usize], priors: &Priors, coverage: bool) -> ExplanationSet {
    let mut evidence = evidence.to_vec();
    evidence.sort_unstable();
    evidence.dedup();
    let mut touched = vec![false; inst.num_tuples()];
    for &k in &evidence {
        let m = &inst.matches[k];
        touched[m.left] = true;
        touched[inst.left.len() + m.right] = true;
    }
    let mut delta = BTreeSet::new();
    for v in 0..inst.num_tuples() {
        if touched[v] {
            continue;
        }
        let t = inst.tuple(v);
        let keep_score = if inst.impact(t) == 0.0 { priors.b() } else { priors.c() };
        if coverage || priors.a() > keep_score {
            delta.insert(t);
        }
    }
    let mut changes = BTreeMap::new();
    for comp in evidence_components(inst, &evidence, &delta) {
        let (mut l, mut r, mut mag) = (0.0, 0.0, 0.0);
        let (mut nl, mut nr) = (0, 0);
        for &v in &comp {
            let t = inst.tuple(v);
            let x = inst.impact(t);
            mag += x.abs();
            match t.side {
                Side::Left => {
                    l += x;
                    nl += 1
                }
                Side::Right => {
                    r += x;
                    nr += 1
                }
            }
        }
        if balanced(l, r, mag) {
            continue;
        }
        let first_right = comp.iter().copied().find(|&v| v >= inst.left.len());
        let target = match first_right {
            Some(v) if nl != 1 && nr == 1 => inst.tuple(v),
            _ => inst.tuple(comp[0]),
        };
        let new = match target.side {
            Side::Left => inst.impact(target) + (r - l),
            Side::Right => inst.impact(target) + (l - r),
        };
        changes.insert(target, new);
    }
    ExplanationSet {
        delta,
        changes,
        evidence,
    }
}

/// Walks `order` and keeps each match whose addition keeps the evidence
/// valid and raises the score of the derived explanation set.
pub fn greedy_evidence(inst: &Instance, order: &[usize], priors: &Priors, coverage: bool) -> ExplanationSet {
    let mut dl = vec![0u32; inst.left.len()];
    let mut dr = vec![0u32; inst.right.len()];
    let mut chosen: Vec<usize> = Vec::new();
    let mut best = derive_explanations(inst, &chosen, priors, coverage);
    let mut best_score = score_terms(inst, &best, priors);
    for &k in order {
        let m = inst.matches[k];
        if (inst.phi.constrains(Side::Left) && dl[m.left] > 0) || (inst.phi.constrains(Side::Right) && dr[m.right] > 0) {
            continue;
        }
        chosen.push(k);
        let e = derive_explanations(inst, &chosen, priors, coverage);
        let s = score_terms(inst, &e, priors);
        if s > best_score + 1e-12 * (1.0 + best_score.abs()) {
            best = e;
            best_score = s;
            dl[m.left] += 1;
            dr[m.right] += 1;
        } else {
            chosen.pop();
        }
    }
    best
}

pub const ORACLE_MAX_TUPLES: usize = 14;
pub const ORACLE_MAX_MATCHES: usize = 22;

/// Exhaustive search over valid evidence sets.
pub fn brute_force_optimal(inst: &Instance, priors: &Priors, coverage: bool) -> Result<ExplanationSet> {
    if inst.num_tuples() > ORACLE_MAX_TUPLES || inst.matches.len() > ORACLE_MAX_MATCHES {
        return Err(Error::TooLarge(format!(
            "{} tuples and {} matches (limits {ORACLE_MAX_TUPLES} and {ORACLE_MAX_MATCHES})",
            inst.num_tuples(),
            inst.matches.len()
        )));
    }
    struct Search<'a> {
        inst: &'a Instance,
        priors: &'a Priors,
        coverage: bool,
        dl: Vec<u32>,
        dr: Vec<u32>,
        chosen: Vec<usize>,
        best: Option<(f64, ExplanationSet)>,
    }
    impl Search<'_> {
        fn go(&mut self, k: usize) {
            if k == self.inst.matches.len() {
                let e = derive_explanations(self.inst, &self.chosen, self.priors, self.coverage);
                let s = score_terms(self.inst, &e, self.priors);
                let better = match &self.best {
                    None => true,
                    Some((bs, be)) => {
                        let tol = 1e-12 * (1.0 + bs.abs());
                        s > bs + tol || (s >= bs - tol && e.tie_cmp(be) == Ordering::Less)
                    }
                };
                if better {
                    self.best = Some((s, e));
                }
                return;
            }
            self.go(k + 1);
            let m = self.inst.matches[k];
            let phi = self.inst.phi;
            if (phi.constrains(Side::Left) && self.dl[m.left] > 0) || (phi.constrains(Side::Right) && self.dr[m.right] > 0)
            {
                return;
            }
            self.dl[m.left] += 1;
            self.dr[m.right] += 1;
            self.chosen.push(k);
            self.go(k + 1);
            self.chosen.pop();
            self.dl[m.left] -= 1;
            self.dr[m.right] -= 1;
        }
    }
    let mut s = Search {
        inst,
        priors,
        coverage,
        dl: vec![0; inst.left.len()],
        dr: vec![0; inst.right.len()],
        chosen: Vec::new(),
        best: None,
    };
    s.go(0);
    Ok(s.best.expect("the empty evidence set is always valid").1)
}

/// File form of an explanation set, addressed by canonical row ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub delta: Vec<RemovedTuple>,
    pub value_changes: Vec<ValueChange>,
    pub evidence: Vec<crate::matching::MatchRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovedTuple {
    pub side: Side,
    pub row_id: String,
    pub impact: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueChange {
    pub side: Side,
    pub row_id: String,
    pub old: f64,
    pub new: f64,
}

impl ExplanationReport {
    pub fn new(e: &ExplanationSet, inst: &Instance, t1: &CanonicalRelation, t2: &CanonicalRelation) -> Self {
        let rel = |s: Side| if s == Side::Left { t1 } else { t2 };
        ExplanationReport {
            delta: e
                .delta
                .iter()
                .map(|t| RemovedTuple {
                    side: t.side,
                    row_id: rel(t.side).tuples[t.index].row_id.clone(),
                    impact: inst.impact(*t),
                })
                .collect(),
            value_changes: e
                .changes
                .iter()
                .map(|(t, &new)| ValueChange {
                    side: t.side,
                    row_id: rel(t.side).tuples[t.index].row_id.clone(),
                    old: inst.impact(*t),
                    new,
                })
                .collect(),
            evidence: e
                .evidence
                .iter()
                .map(|&k| {
                    let m = &inst.matches[k];
                    crate::matching::MatchRecord {
                        left: t1.tuples[m.left].row_id.clone(),
                        right: t2.tuples[m.right].row_id.clone(),
                        p: m.p,
                    }
                })
                .collect(),
        }
    }
}
