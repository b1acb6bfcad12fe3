//! Splitting large instances into bounded blocks that are solved
//! independently.

use crate::error::{Error, Result};
use crate::matching::TupleMatch;
use crate::milp::{solve_instance, MilpOptions, Solved};
use crate::probability::{log_probability, ExplanationSet, Instance, Priors, TupleRef, UnionFind};
use crate::solver::{SolveStatus, SolverConfig, SolverError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    pub theta_low: f64,
    pub theta_high: f64,
    pub reward: f64,
    pub batch_size: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            theta_low: 0.1,
            theta_high: 0.9,
            reward: 100.0,
            batch_size: 1000,
        }
    }
}

impl PartitionConfig {
    pub fn with_batch(batch_size: usize) -> Self {
        PartitionConfig {
            batch_size,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.theta_low && self.theta_low < self.theta_high && self.theta_high <= 1.0) {
            return Err(Error::Invalid("need 0 ≤ theta_low < theta_high ≤ 1".into()));
        }
        if !(self.reward > 1.0) {
            return Err(Error::Invalid("reward must exceed 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Invalid("batch size must be at least 2".into()));
        }
        Ok(())
    }

    /// Target block count for `n` tuples.
    pub fn blocks_for(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size).max(1)
    }
}

pub fn edge_weight(p: f64, cfg: &PartitionConfig) -> f64 {
    if p >= cfg.theta_high {
        p * cfg.reward
    } else if p <= cfg.theta_low {
        p / cfg.reward
    } else {
        p
    }
}

/// Vertices are numbered left tuples first, then right tuples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    pub num_left: usize,
    pub num_right: usize,
    /// `(left vertex, right vertex, p)`.
    pub edges: Vec<(usize, usize, f64)>,
}

impl BipartiteGraph {
    pub fn from_instance(inst: &Instance) -> Self {
        let n1 = inst.left.len();
        BipartiteGraph {
            num_left: n1,
            num_right: inst.right.len(),
            edges: inst.matches.iter().map(|m| (m.left, n1 + m.right, m.p)).collect(),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.num_left + self.num_right
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Vertices of each block, ascending.
    pub blocks: Vec<Vec<usize>>,
    pub assignment: Vec<usize>,
}

impl Partition {
    fn from_assignment(assignment: Vec<usize>) -> Self {
        let n = assignment.iter().map(|&b| b + 1).max().unwrap_or(0);
        let mut blocks = vec![Vec::new(); n];
        for (v, &b) in assignment.iter().enumerate() {
            blocks[b].push(v);
        }
        // drop empty blocks, keep order
        let mut renumber = vec![usize::MAX; n];
        let mut kept = Vec::new();
        for (b, vs) in blocks.into_iter().enumerate() {
            if !vs.is_empty() {
                renumber[b] = kept.len();
                kept.push(vs);
            }
        }
        Partition {
            assignment: assignment.iter().map(|&b| renumber[b]).collect(),
            blocks: kept,
        }
    }

    pub fn max_block(&self) -> usize {
        self.blocks.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Total weight of edges whose endpoints lie in different blocks.
    pub fn cut_weight(&self, g: &BipartiteGraph, cfg: &PartitionConfig) -> f64 {
        g.edges
            .iter()
            .filter(|e| self.assignment[e.0] != self.assignment[e.1])
            .map(|e| edge_weight(e.2, cfg))
            .sum()
    }
}

pub fn connected_components(g: &BipartiteGraph) -> Partition {
    let n = g.num_vertices();
    let mut uf = UnionFind::new(n);
    for e in &g.edges {
        uf.union(e.0, e.1);
    }
    let mut id = vec![usize::MAX; n];
    let mut next = 0;
    let assignment = (0..n)
        .map(|v| {
            let r = uf.find(v);
            if id[r] == usize::MAX {
                id[r] = next;
                next += 1;
            }
            id[r]
        })
        .collect();
    Partition::from_assignment(assignment)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coarsened {
    pub super_of: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    /// `(super a, super b, weight)` with `a < b`, one per pair.
    pub edges: Vec<(usize, usize, f64)>,
}

impl Coarsened {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Merges vertices joined by matches with `p ≥ θ_h`; parallel edges between
/// super-vertices sum their probabilities (capped at 1) before reweighting.
pub fn pre_partition(g: &BipartiteGraph, cfg: &PartitionConfig) -> Coarsened {
    let n = g.num_vertices();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in g.edges.iter().filter(|e| e.2 >= cfg.theta_high) {
        adj[e.0].push(e.1);
        adj[e.1].push(e.0);
    }
    let mut super_of = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::new();
    for s in 0..n {
        if super_of[s] != usize::MAX {
            continue;
        }
        let id = members.len();
        let mut group = Vec::new();
        super_of[s] = id;
        stack.push(s);
        while let Some(v) = stack.pop() {
            group.push(v);
            for &u in &adj[v] {
                if super_of[u] == usize::MAX {
                    super_of[u] = id;
                    stack.push(u);
                }
            }
        }
        group.sort_unstable();
        members.push(group);
    }
    let mut sums: HashMap<(usize, usize), f64> = HashMap::new();
    let mut order = Vec::new();
    for e in &g.edges {
        let (a, b) = (super_of[e.0], super_of[e.1]);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        let slot = sums.entry(key).or_insert_with(|| {
            order.push(key);
            0.0
        });
        *slot += e.2;
    }
    let edges = order
        .into_iter()
        .map(|k| (k.0, k.1, edge_weight(sums[&k].min(1.0), cfg)))
        .collect();
    Coarsened {
        super_of,
        members,
        edges,
    }
}

#[derive(PartialEq)]
struct Gain(f64, usize);

impl Eq for Gain {}

impl PartialOrd for Gain {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Gain {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

/// Bounded partitioning of the coarsened graph, expanded back to vertices.
///
/// Components that fit are kept whole and packed into the emptiest block
/// that can take them; larger components are grown greedily along heavy
/// edges. More than `k` blocks are opened when packing requires it.
pub fn graph_partition(c: &Coarsened, k: usize, l_max: usize) -> Result<Partition> {
    let ns = c.len();
    let size: Vec<usize> = c.members.iter().map(Vec::len).collect();
    if let Some(u) = (0..ns).find(|&u| size[u] > l_max) {
        return Err(Error::Partition(format!(
            "super-vertex {u} (containing vertex {}) has {} tuples, above the block bound {l_max}; \
             raise batch_size or theta_high",
            c.members[u][0], size[u]
        )));
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ns];
    let mut uf = UnionFind::new(ns);
    for &(a, b, w) in &c.edges {
        adj[a].push((b, w));
        adj[b].push((a, w));
        uf.union(a, b);
    }
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut comp_id = vec![usize::MAX; ns];
    for u in 0..ns {
        let r = uf.find(u);
        if comp_id[r] == usize::MAX {
            comp_id[r] = comps.len();
            comps.push(Vec::new());
        }
        comps[comp_id[r]].push(u);
    }

    // units: whole components, or greedily grown pieces of oversized ones
    let mut units: Vec<Vec<usize>> = Vec::new();
    let mut placed = vec![false; ns];
    for comp in comps {
        let total: usize = comp.iter().map(|&u| size[u]).sum();
        if total <= l_max {
            units.push(comp);
            continue;
        }
        let mut by_size = comp.clone();
        by_size.sort_by(|&a, &b| size[b].cmp(&size[a]).then(a.cmp(&b)));
        let mut conn: HashMap<usize, f64> = HashMap::new();
        for &seed in &by_size {
            if placed[seed] {
                continue;
            }
            let mut piece = Vec::new();
            let mut load = 0;
            let mut heap = BinaryHeap::new();
            conn.clear();
            heap.push(Gain(f64::INFINITY, seed));
            while let Some(Gain(_, u)) = heap.pop() {
                if placed[u] || load + size[u] > l_max {
                    continue;
                }
                placed[u] = true;
                load += size[u];
                piece.push(u);
                for &(v, w) in &adj[u] {
                    if !placed[v] {
                        let e = conn.entry(v).or_insert(0.0);
                        *e += w;
                        heap.push(Gain(*e, v));
                    }
                }
            }
            units.push(piece);
        }
    }

    // pack units, largest first, into the least loaded block that fits
    let unit_size: Vec<usize> = units.iter().map(|u| u.iter().map(|&s| size[s]).sum()).collect();
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by(|&a, &b| unit_size[b].cmp(&unit_size[a]).then(units[a][0].cmp(&units[b][0])));
    let mut loads = vec![0usize; k.max(1)];
    let mut block_of = vec![usize::MAX; ns];
    for &ui in &order {
        let fit = (0..loads.len())
            .filter(|&b| loads[b] + unit_size[ui] <= l_max)
            .min_by_key(|&b| (loads[b], b));
        let b = fit.unwrap_or_else(|| {
            loads.push(0);
            loads.len() - 1
        });
        loads[b] += unit_size[ui];
        for &s in &units[ui] {
            block_of[s] = b;
        }
    }

    // one boundary refinement pass
    for u in 0..ns {
        let cur = block_of[u];
        let mut towards: Vec<(usize, f64)> = Vec::new();
        for &(v, w) in &adj[u] {
            let b = block_of[v];
            match towards.iter_mut().find(|t| t.0 == b) {
                Some(t) => t.1 += w,
                None => towards.push((b, w)),
            }
        }
        let here = towards.iter().find(|t| t.0 == cur).map_or(0.0, |t| t.1);
        let best = towards
            .iter()
            .filter(|t| t.0 != cur && loads[t.0] + size[u] <= l_max && t.1 - here > 0.0)
            .max_by(|a, b| (a.1 - here).total_cmp(&(b.1 - here)).then(b.0.cmp(&a.0)));
        if let Some(&(b, _)) = best {
            loads[cur] -= size[u];
            loads[b] += size[u];
            block_of[u] = b;
        }
    }

    Ok(Partition::from_assignment(
        (0..c.super_of.len()).map(|v| block_of[c.super_of[v]]).collect(),
    ))
}

/// One block as an instance of its own, with maps back to the original.
#[derive(Clone, Debug)]
pub struct SubInstance {
    pub instance: Instance,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub matches: Vec<usize>,
}

pub fn sub_instance(inst: &Instance, block: &[usize]) -> SubInstance {
    let n1 = inst.left.len();
    let left: Vec<usize> = block.iter().copied().filter(|&v| v < n1).collect();
    let right: Vec<usize> = block.iter().filter(|&&v| v >= n1).map(|&v| v - n1).collect();
    let mut li = HashMap::new();
    let mut ri = HashMap::new();
    for (k, &i) in left.iter().enumerate() {
        li.insert(i, k);
    }
    for (k, &j) in right.iter().enumerate() {
        ri.insert(j, k);
    }
    let mut matches = Vec::new();
    let mut local = Vec::new();
    for (k, m) in inst.matches.iter().enumerate() {
        if let (Some(&l), Some(&r)) = (li.get(&m.left), ri.get(&m.right)) {
            matches.push(k);
            local.push(TupleMatch { left: l, right: r, p: m.p });
        }
    }
    SubInstance {
        instance: Instance::new(
            left.iter().map(|&i| inst.left[i]).collect(),
            right.iter().map(|&j| inst.right[j]).collect(),
            local,
            inst.phi,
        ),
        left,
        right,
        matches,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionedSolve {
    pub solved: Solved,
    pub blocks: usize,
    pub largest_block: usize,
    pub cut_weight: f64,
}

pub fn solve_partitioned(
    inst: &Instance,
    priors: &Priors,
    cfg: &PartitionConfig,
    opts: &MilpOptions,
    solver_cfg: &SolverConfig,
) -> Result<PartitionedSolve> {
    cfg.validate()?;
    let g = BipartiteGraph::from_instance(inst);
    let coarse = pre_partition(&g, cfg);
    let part = graph_partition(&coarse, cfg.blocks_for(g.num_vertices()), cfg.batch_size)?;
    if part.blocks.len() <= 1 {
        let solved = solve_instance(inst, priors, opts, solver_cfg)?;
        return Ok(PartitionedSolve {
            solved,
            blocks: part.blocks.len(),
            largest_block: part.max_block(),
            cut_weight: 0.0,
        });
    }
    let subs: Vec<SubInstance> = part.blocks.iter().map(|b| sub_instance(inst, b)).collect();
    let results: Vec<Result<Solved>> = subs
        .par_iter()
        .map(|s| match solve_instance(&s.instance, priors, opts, solver_cfg) {
            Err(Error::Solver(SolverError::Infeasible)) => {
                // removing every tuple is always complete
                let delta: BTreeSet<TupleRef> = s.instance.tuples().collect();
                Ok(Solved {
                    explanation: ExplanationSet {
                        delta,
                        ..Default::default()
                    },
                    objective: f64::NAN,
                    status: SolveStatus::Optimal,
                    nodes: 0,
                })
            }
            r => r,
        })
        .collect();
    let mut merged = ExplanationSet::default();
    let mut status = SolveStatus::Optimal;
    let mut nodes = 0;
    for (s, r) in subs.iter().zip(results) {
        let r = r?;
        let back = |t: TupleRef| match t.side {
            crate::canonical::Side::Left => TupleRef::left(s.left[t.index]),
            crate::canonical::Side::Right => TupleRef::right(s.right[t.index]),
        };
        merged.delta.extend(r.explanation.delta.iter().map(|&t| back(t)));
        merged
            .changes
            .extend(r.explanation.changes.iter().map(|(&t, &v)| (back(t), v)));
        merged.evidence.extend(r.explanation.evidence.iter().map(|&k| s.matches[k]));
        if r.status == SolveStatus::BoundLimit {
            status = SolveStatus::BoundLimit;
        }
        nodes += r.nodes;
    }
    merged.evidence.sort_unstable();
    let objective = log_probability(inst, &merged, priors);
    Ok(PartitionedSolve {
        solved: Solved {
            explanation: merged,
            objective,
            status,
            nodes,
        },
        blocks: part.blocks.len(),
        largest_block: part.max_block(),
        cut_weight: part.cut_weight(&g, cfg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::MatchRelation;

    fn graph(n1: usize, n2: usize, edges: &[(usize, usize, f64)]) -> BipartiteGraph {
        BipartiteGraph {
            num_left: n1,
            num_right: n2,
            edges: edges.iter().map(|&(l, r, p)| (l, n1 + r, p)).collect(),
        }
    }

    #[test]
    fn weights_follow_thresholds() {
        let c = PartitionConfig::default();
        assert_eq!(edge_weight(0.95, &c), 95.0);
        assert_eq!(edge_weight(0.05, &c), 0.0005);
        assert_eq!(edge_weight(0.5, &c), 0.5);
    }

    #[test]
    fn components() {
        let g = graph(2, 2, &[]);
        assert_eq!(connected_components(&g).blocks.len(), 4);
        let g = graph(2, 2, &[(0, 0, 0.5), (1, 0, 0.5), (1, 1, 0.5)]);
        assert_eq!(connected_components(&g).blocks.len(), 1);
    }

    #[test]
    fn high_probability_chain_merges() {
        // a—b—c as L0—R0—L1
        let g = graph(2, 1, &[(0, 0, 0.95), (1, 0, 0.95)]);
        let c = pre_partition(&g, &PartitionConfig::default());
        assert_eq!(c.len(), 1);
        let g = graph(2, 2, &[(0, 0, 0.5), (1, 1, 0.5), (1, 0, 0.5)]);
        let c = pre_partition(&g, &PartitionConfig::default());
        assert_eq!(c.len(), 4);
        assert_eq!(c.edges.len(), 3);
    }

    #[test]
    fn disjoint_components_are_not_cut() {
        let cfg = PartitionConfig::with_batch(2);
        let g = graph(2, 2, &[(0, 0, 0.5), (1, 1, 0.5)]);
        let p = graph_partition(&pre_partition(&g, &cfg), 2, 2).unwrap();
        assert_eq!(p.blocks.len(), 2);
        assert_eq!(p.cut_weight(&g, &cfg), 0.0);
    }

    #[test]
    fn heavy_edge_survives_forced_split() {
        // path L0 —0.05— R0 —0.95— L1 —0.05— R1, blocks of two
        let cfg = PartitionConfig::with_batch(2);
        let g = graph(2, 2, &[(0, 0, 0.05), (1, 0, 0.95), (1, 1, 0.05)]);
        let p = graph_partition(&pre_partition(&g, &cfg), 2, 2).unwrap();
        assert_eq!(p.assignment[1], p.assignment[2]);
        assert!(p.max_block() <= 2);
        assert!((p.cut_weight(&g, &cfg) - 0.001).abs() < 1e-12);
    }

    #[test]
    fn oversized_super_vertex_is_reported() {
        let g = graph(2, 1, &[(0, 0, 0.95), (1, 0, 0.95)]);
        let err = graph_partition(&pre_partition(&g, &PartitionConfig::default()), 1, 2).unwrap_err();
        assert!(err.to_string().contains("super-vertex 0"));
    }

    #[test]
    fn single_block_equals_unpartitioned() {
        let inst = Instance::new(
            vec![2.0, 1.0],
            vec![1.0, 1.0],
            vec![
                TupleMatch { left: 0, right: 0, p: 0.9 },
                TupleMatch { left: 1, right: 1, p: 0.6 },
            ],
            MatchRelation::Equiv,
        );
        let pr = Priors::default();
        let a = solve_partitioned(&inst, &pr, &PartitionConfig::default(), &MilpOptions::default(), &SolverConfig::default())
            .unwrap();
        let b = solve_instance(&inst, &pr, &MilpOptions::default(), &SolverConfig::default()).unwrap();
        assert_eq!(a.solved, b);
        let split = solve_partitioned(&inst, &pr, &PartitionConfig::with_batch(2), &MilpOptions::default(), &SolverConfig::default())
            .unwrap();
        assert_eq!(split.blocks, 2);
        assert_eq!(split.solved.objective, b.objective);
    }
}
