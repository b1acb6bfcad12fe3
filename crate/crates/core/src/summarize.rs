//! Compresses explanation tuples into conjunctive attribute-value patterns.

use crate::canonical::{CanonicalRelation, Side};
use crate::error::{Error, Result};
use crate::probability::ExplanationSet;
use crate::relational::{ProvenanceRelation, Value};
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

pub const DEFAULT_MAX_EXCEPTION_RATE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub side: Side,
    pub conjuncts: Vec<(String, Value)>,
    /// Explanation rows the pattern matches.
    pub covered: usize,
    /// Other rows it matches.
    pub exceptions: usize,
}

impl Pattern {
    pub fn exception_rate(&self) -> f64 {
        self.exceptions as f64 / (self.exceptions + self.covered).max(1) as f64
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = match self.side {
            Side::Left => "left",
            Side::Right => "right",
        };
        let body: Vec<String> = self.conjuncts.iter().map(|(a, v)| format!("{a}={v}")).collect();
        write!(
            f,
            "{side}: {} (covers {}, exceptions {})",
            body.join(" ∧ "),
            self.covered,
            self.exceptions
        )
    }
}

// attribute index and a kind-tagged rendering of the value
type Cell = (usize, u8, String);

fn cell(i: usize, v: &Value) -> Cell {
    let tag = match v {
        Value::Integer(_) => 0,
        Value::Real(_) => 1,
        Value::Text(_) => 2,
    };
    (i, tag, v.to_string())
}

struct Candidate {
    cells: Vec<Cell>,
    values: Vec<(usize, Value)>,
    targets: Vec<usize>,
    exceptions: usize,
}

fn side_patterns(side: Side, p: &ProvenanceRelation, is_target: &[bool], max_rate: f64) -> (Vec<Pattern>, Vec<bool>) {
    let arity = p.schema.len();
    let mut index: HashMap<Vec<Cell>, usize> = HashMap::new();
    let mut cands: Vec<Candidate> = Vec::new();
    // candidates come from target rows only; other rows add exceptions
    for pass in [true, false] {
        for (r, t) in p.tuples.iter().enumerate() {
            if is_target[r] != pass {
                continue;
            }
            let cells: Vec<Cell> = t.values.iter().enumerate().map(|(i, v)| cell(i, v)).collect();
            let mut keys: Vec<Vec<usize>> = (0..arity).map(|a| vec![a]).collect();
            for a in 0..arity {
                for b in a + 1..arity {
                    keys.push(vec![a, b]);
                }
            }
            for key in keys {
                let k: Vec<Cell> = key.iter().map(|&a| cells[a].clone()).collect();
                let slot = match index.get(&k) {
                    Some(&s) => s,
                    None if pass => {
                        index.insert(k.clone(), cands.len());
                        cands.push(Candidate {
                            cells: k,
                            values: key.iter().map(|&a| (a, t.values[a].clone())).collect(),
                            targets: Vec::new(),
                            exceptions: 0,
                        });
                        cands.len() - 1
                    }
                    None => continue,
                };
                if pass {
                    cands[slot].targets.push(r);
                } else {
                    cands[slot].exceptions += 1;
                }
            }
        }
    }

    let admissible = |c: &Candidate| {
        let n = c.targets.len();
        n >= 2 && (c.exceptions as f64) <= max_rate * (c.exceptions + n) as f64
    };
    // max-heap on (new coverage, fewer conjuncts, fewer exceptions, earliest)
    let mut heap: BinaryHeap<(usize, Reverse<(usize, usize, usize)>, usize)> = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<_>, gain: usize, c: &Candidate, id: usize| {
        heap.push((gain, Reverse((c.cells.len(), c.exceptions, id)), id));
    };
    for (id, c) in cands.iter().enumerate() {
        if admissible(c) {
            push(&mut heap, c.targets.len(), c, id);
        }
    }
    let mut covered = vec![false; p.tuples.len()];
    let mut out = Vec::new();
    while let Some((gain, _, id)) = heap.pop() {
        let c = &cands[id];
        let now = c.targets.iter().filter(|&&r| !covered[r]).count();
        if now < 2 {
            continue;
        }
        if now < gain {
            push(&mut heap, now, c, id);
            continue;
        }
        for &r in &c.targets {
            covered[r] = true;
        }
        out.push(Pattern {
            side,
            conjuncts: c.values.iter().map(|(a, v)| (p.schema[*a].name.clone(), v.clone())).collect(),
            covered: c.targets.len(),
            exceptions: c.exceptions,
        });
    }
    (out, covered)
}

fn singleton(side: Side, p: &ProvenanceRelation, t: &CanonicalRelation, index: usize, is_target: &[bool]) -> Pattern {
    let tuple = &t.tuples[index];
    let cols: Vec<usize> = t.attributes.iter().filter_map(|a| p.attr_index(&a.name)).collect();
    let first = &p.tuples[tuple.source_rows[0]].values;
    let want: Vec<Cell> = cols.iter().map(|&i| cell(i, &first[i])).collect();
    let mut covered = 0;
    let mut exceptions = 0;
    for (r, row) in p.tuples.iter().enumerate() {
        if cols.iter().zip(&want).all(|(&i, w)| cell(i, &row.values[i]) == *w) {
            if is_target[r] {
                covered += 1;
            } else {
                exceptions += 1;
            }
        }
    }
    Pattern {
        side,
        conjuncts: cols.iter().map(|&i| (p.schema[i].name.clone(), first[i].clone())).collect(),
        covered: covered.max(1),
        exceptions,
    }
}

/// Greedy cover of the provenance rows behind `Δ ∪ δ` by one- and
/// two-attribute patterns, with a per-tuple fallback for what remains.
pub fn summarize(
    e: &ExplanationSet,
    canon: [&CanonicalRelation; 2],
    prov: [&ProvenanceRelation; 2],
    max_exception_rate: f64,
) -> Result<Vec<Pattern>> {
    if !(0.0..1.0).contains(&max_exception_rate) {
        return Err(Error::Invalid(format!(
            "exception rate {max_exception_rate} must lie in [0, 1)"
        )));
    }
    let mut explained: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for t in e.delta.iter().chain(e.changes.keys()) {
        explained[t.side as usize].push(t.index);
    }
    let total: usize = explained.iter().map(|v| v.len()).sum();
    let mut greedy = Vec::new();
    let mut fallback = Vec::new();
    let mut singletons = Vec::new();
    for side in [Side::Left, Side::Right] {
        let (c, p) = (canon[side as usize], prov[side as usize]);
        let tuples = &explained[side as usize];
        let mut is_target = vec![false; p.tuples.len()];
        for &i in tuples {
            for &r in &c.tuples[i].source_rows {
                is_target[r] = true;
            }
        }
        let (found, covered) = side_patterns(side, p, &is_target, max_exception_rate);
        greedy.extend(found);
        for &i in tuples {
            let s = singleton(side, p, c, i, &is_target);
            if c.tuples[i].source_rows.iter().any(|&r| !covered[r]) {
                fallback.push(s.clone());
            }
            singletons.push(s);
        }
    }
    if greedy.len() + fallback.len() > total {
        return Ok(singletons);
    }
    greedy.extend(fallback);
    Ok(greedy)
}
