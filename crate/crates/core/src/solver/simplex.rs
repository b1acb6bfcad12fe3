//! Bounded dual simplex over a sparse basis factorization.
//!
//! Every structural variable carries finite bounds and every row gets a
//! logical variable whose bounds are the row bounds clipped to the row's
//! activity range, so every variable is boxed. A basis is then made dual
//! feasible just by moving nonbasic variables to the right bound, which lets
//! the dual simplex start cold from the slack basis and restart warm after
//! bound changes during branch-and-bound.

use super::lu::Factor;
use super::model::{Comparator, Model};

const NONE: usize = usize::MAX;
const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const DEGENERATE_LIMIT: usize = 300;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    TimeLimit,
}

#[derive(Clone)]
pub struct LpSolver {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    col_idx: Vec<usize>,
    col_val: Vec<f64>,
    row_start: Vec<usize>,
    row_idx: Vec<usize>,
    row_val: Vec<f64>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    d: Vec<f64>,
    head: Vec<usize>,
    slot: Vec<usize>,
    at_upper: Vec<bool>,
    factor: Factor,
    primal_dirty: bool,
    fresh: bool,
    trivially_infeasible: bool,
    pub iterations: usize,
    pub iteration_limit: usize,
    pub deadline: Option<std::time::Instant>,
    // scratch
    w_row: Vec<f64>,
    w_slot: Vec<f64>,
    alpha_row: Vec<f64>,
    touched: Vec<usize>,
    mark: Vec<bool>,
}

impl LpSolver {
    /// Sets up the relaxation of `model` (integrality is ignored).
    pub fn new(model: &Model) -> Self {
        let n = model.num_vars();
        let m = model.num_constraints();
        let mut lo = Vec::with_capacity(n + m);
        let mut hi = Vec::with_capacity(n + m);
        for v in &model.variables {
            assert!(v.lower.is_finite() && v.upper.is_finite(), "variable {} must be bounded", v.name);
            lo.push(v.lower);
            hi.push(v.upper);
        }
        let mut trivially_infeasible = lo.iter().zip(&hi).any(|(l, h)| l > h);

        let mut counts = vec![0usize; n];
        let mut row_start = vec![0];
        let mut row_idx = Vec::new();
        let mut row_val = Vec::new();
        for c in &model.constraints {
            let mut terms = c.terms.clone();
            terms.sort_by_key(|t| t.0);
            let mut amin = 0.0;
            let mut amax = 0.0;
            let mut last = NONE;
            for &(j, a) in &terms {
                if j == last {
                    *row_val.last_mut().unwrap() += a;
                } else {
                    row_idx.push(j);
                    row_val.push(a);
                    counts[j] += 1;
                    last = j;
                }
            }
            for t in *row_start.last().unwrap()..row_idx.len() {
                let (j, a) = (row_idx[t], row_val[t]);
                if a > 0.0 {
                    amin += a * lo[j];
                    amax += a * hi[j];
                } else {
                    amin += a * hi[j];
                    amax += a * lo[j];
                }
            }
            row_start.push(row_idx.len());
            let (mut l, mut h) = match c.cmp {
                Comparator::Le => (f64::NEG_INFINITY, c.rhs),
                Comparator::Ge => (c.rhs, f64::INFINITY),
                Comparator::Eq => (c.rhs, c.rhs),
            };
            let slack = 1e-9 * (1.0 + amin.abs().max(amax.abs()));
            if l > amax + slack || h < amin - slack {
                trivially_infeasible = true;
            }
            l = l.max(amin.min(h));
            h = h.min(amax.max(l));
            lo.push(l);
            hi.push(h);
        }

        let mut col_start = vec![0usize; n + 1];
        for j in 0..n {
            col_start[j + 1] = col_start[j] + counts[j];
        }
        let nnz = row_idx.len();
        let mut col_idx = vec![0usize; nnz];
        let mut col_val = vec![0.0; nnz];
        let mut fill = col_start.clone();
        for r in 0..m {
            for t in row_start[r]..row_start[r + 1] {
                let j = row_idx[t];
                col_idx[fill[j]] = r;
                col_val[fill[j]] = row_val[t];
                fill[j] += 1;
            }
        }

        let mut cost: Vec<f64> = model.objective.iter().map(|c| -c).collect();
        cost.resize(n + m, 0.0);
        let mut s = LpSolver {
            n,
            m,
            col_start,
            col_idx,
            col_val,
            row_start,
            row_idx,
            row_val,
            cost,
            lo,
            hi,
            x: vec![0.0; n + m],
            d: vec![0.0; n + m],
            head: (n..n + m).collect(),
            slot: vec![NONE; n + m],
            at_upper: vec![false; n + m],
            factor: Factor::default(),
            primal_dirty: true,
            fresh: false,
            trivially_infeasible,
            iterations: 0,
            iteration_limit: 50_000 + 40 * (n + m),
            deadline: None,
            w_row: vec![0.0; m],
            w_slot: vec![0.0; m],
            alpha_row: vec![0.0; n + m],
            touched: Vec::new(),
            mark: vec![false; n + m],
        };
        for r in 0..m {
            s.slot[n + r] = r;
        }
        s.refactor();
        s
    }

    pub fn num_structural(&self) -> usize {
        self.n
    }

    pub fn lower(&self, j: usize) -> f64 {
        self.lo[j]
    }

    pub fn upper(&self, j: usize) -> f64 {
        self.hi[j]
    }

    /// Current values of the structural variables.
    pub fn values(&self) -> &[f64] {
        &self.x[..self.n]
    }

    /// Objective in the maximization sense, without the model constant.
    pub fn objective(&self) -> f64 {
        -(0..self.n).map(|j| self.cost[j] * self.x[j]).sum::<f64>()
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
        if self.slot[j] == NONE {
            self.place_nonbasic(j);
        }
        self.primal_dirty = true;
    }

    fn place_nonbasic(&mut self, j: usize) {
        if self.d[j] > DUAL_TOL {
            self.at_upper[j] = false;
        } else if self.d[j] < -DUAL_TOL {
            self.at_upper[j] = true;
        }
        self.x[j] = if self.at_upper[j] { self.hi[j] } else { self.lo[j] };
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        if j < self.n {
            for t in self.col_start[j]..self.col_start[j + 1] {
                out[self.col_idx[t]] += self.col_val[t];
            }
        } else {
            out[j - self.n] -= 1.0;
        }
    }

    fn column_entries(&self, j: usize) -> Vec<(usize, f64)> {
        if j < self.n {
            (self.col_start[j]..self.col_start[j + 1])
                .map(|t| (self.col_idx[t], self.col_val[t]))
                .collect()
        } else {
            vec![(j - self.n, -1.0)]
        }
    }

    fn refactor(&mut self) {
        loop {
            let cols: Vec<Vec<(usize, f64)>> = self.head.iter().map(|&j| self.column_entries(j)).collect();
            match Factor::factorize(self.m, cols) {
                Ok(f) => {
                    self.factor = f;
                    break;
                }
                Err(sing) => {
                    // swap dependent columns for logicals of uncovered rows
                    for (&s, &r) in sing.slots.iter().zip(&sing.rows) {
                        let out = self.head[s];
                        let inn = self.n + r;
                        debug_assert_eq!(self.slot[inn], NONE);
                        self.slot[out] = NONE;
                        self.d[out] = 0.0;
                        self.head[s] = inn;
                        self.slot[inn] = s;
                        self.place_nonbasic(out);
                    }
                }
            }
        }
        self.compute_duals();
        for j in 0..self.n + self.m {
            if self.slot[j] == NONE {
                self.place_nonbasic(j);
            }
        }
        self.compute_primal();
        self.fresh = true;
    }

    fn compute_primal(&mut self) {
        let mut rhs = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if self.slot[j] == NONE {
                let xj = self.x[j];
                if xj != 0.0 {
                    if j < self.n {
                        for t in self.col_start[j]..self.col_start[j + 1] {
                            rhs[self.col_idx[t]] -= self.col_val[t] * xj;
                        }
                    } else {
                        rhs[j - self.n] += xj;
                    }
                }
            }
        }
        let mut xb = vec![0.0; self.m];
        self.factor.ftran(&mut rhs, &mut xb);
        for (s, &j) in self.head.iter().enumerate() {
            self.x[j] = xb[s];
        }
        self.primal_dirty = false;
    }

    fn compute_duals(&mut self) {
        let mut cb: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
        let mut y = vec![0.0; self.m];
        self.factor.btran(&mut cb, &mut y);
        for j in 0..self.n {
            if self.slot[j] != NONE {
                self.d[j] = 0.0;
                continue;
            }
            let mut dj = self.cost[j];
            for t in self.col_start[j]..self.col_start[j + 1] {
                dj -= y[self.col_idx[t]] * self.col_val[t];
            }
            self.d[j] = dj;
        }
        for r in 0..self.m {
            let j = self.n + r;
            self.d[j] = if self.slot[j] != NONE { 0.0 } else { y[r] };
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        let tol_l = PRIMAL_TOL * (1.0 + self.lo[j].abs());
        let tol_h = PRIMAL_TOL * (1.0 + self.hi[j].abs());
        if v < self.lo[j] - tol_l {
            self.lo[j] - v
        } else if v > self.hi[j] + tol_h {
            v - self.hi[j]
        } else {
            0.0
        }
    }

    fn refresh(&mut self) {
        self.refactor();
    }

    /// Runs the dual simplex from the current basis.
    pub fn solve(&mut self) -> LpStatus {
        if self.trivially_infeasible {
            return LpStatus::Infeasible;
        }
        if self.primal_dirty {
            self.compute_primal();
        }
        let mut degenerate = 0usize;
        let mut bland = false;
        let start = self.iterations;
        loop {
            if self.iterations - start > self.iteration_limit {
                return LpStatus::IterationLimit;
            }
            if self.iterations.is_multiple_of(64) && self.deadline.is_some_and(|d| std::time::Instant::now() >= d) {
                return LpStatus::TimeLimit;
            }
            if self.factor.num_etas() >= REFACTOR_EVERY
                || self.factor.eta_nnz() > 4 * self.factor.lu_nnz() + 10 * self.m
            {
                self.refresh();
            }

            // leaving row
            let mut r = NONE;
            let mut best = 0.0;
            for s in 0..self.m {
                let j = self.head[s];
                let inf = self.infeasibility(j);
                if inf > 0.0 {
                    if bland {
                        if r == NONE || j < self.head[r] {
                            r = s;
                        }
                    } else if inf > best {
                        best = inf;
                        r = s;
                    }
                }
            }
            if r == NONE {
                if self.fresh {
                    return LpStatus::Optimal;
                }
                self.refresh();
                continue;
            }
            let p = self.head[r];
            let to_lower = self.x[p] < self.lo[p];
            let target = if to_lower { self.lo[p] } else { self.hi[p] };

            // row r of B⁻¹N
            self.w_slot.iter_mut().for_each(|v| *v = 0.0);
            self.w_slot[r] = 1.0;
            let mut rho = std::mem::take(&mut self.w_row);
            let mut e = std::mem::take(&mut self.w_slot);
            self.factor.btran(&mut e, &mut rho);
            self.w_slot = e;
            for &j in &self.touched {
                self.alpha_row[j] = 0.0;
                self.mark[j] = false;
            }
            self.touched.clear();
            for i in 0..self.m {
                let ri = rho[i];
                if ri == 0.0 {
                    continue;
                }
                for t in self.row_start[i]..self.row_start[i + 1] {
                    let j = self.row_idx[t];
                    if !self.mark[j] {
                        self.mark[j] = true;
                        self.touched.push(j);
                    }
                    self.alpha_row[j] += ri * self.row_val[t];
                }
                let j = self.n + i;
                if !self.mark[j] {
                    self.mark[j] = true;
                    self.touched.push(j);
                }
                self.alpha_row[j] -= ri;
            }
            self.w_row = rho;

            // ratio test (Harris two-pass)
            let dir = if to_lower { -1.0 } else { 1.0 };
            let mut theta_max = f64::INFINITY;
            for &j in &self.touched {
                if self.slot[j] != NONE || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a = self.alpha_row[j];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let ok = if self.at_upper[j] { a * dir < 0.0 } else { a * dir > 0.0 };
                if !ok {
                    continue;
                }
                let dj = if self.at_upper[j] { -self.d[j] } else { self.d[j] };
                let ratio = (dj.max(0.0) + DUAL_TOL) / a.abs();
                if ratio < theta_max {
                    theta_max = ratio;
                }
            }
            let mut q = NONE;
            let mut q_abs = 0.0;
            let mut q_ratio = f64::INFINITY;
            for &j in &self.touched {
                if self.slot[j] != NONE || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a = self.alpha_row[j];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let ok = if self.at_upper[j] { a * dir < 0.0 } else { a * dir > 0.0 };
                if !ok {
                    continue;
                }
                let dj = if self.at_upper[j] { -self.d[j] } else { self.d[j] };
                let ratio = dj.max(0.0) / a.abs();
                if ratio > theta_max {
                    continue;
                }
                let better = if bland {
                    ratio < q_ratio - 1e-12 || (ratio <= q_ratio + 1e-12 && (q == NONE || j < q))
                } else {
                    a.abs() > q_abs || (a.abs() == q_abs && j < q)
                };
                if better {
                    q = j;
                    q_abs = a.abs();
                    q_ratio = ratio;
                }
            }
            if q == NONE {
                if self.fresh {
                    return LpStatus::Infeasible;
                }
                self.refresh();
                continue;
            }
            let alpha_rq = self.alpha_row[q];

            // entering column
            self.w_row.iter_mut().for_each(|v| *v = 0.0);
            let mut rhs = std::mem::take(&mut self.w_row);
            self.column(q, &mut rhs);
            let mut col = vec![0.0; self.m];
            self.factor.ftran(&mut rhs, &mut col);
            self.w_row = rhs;
            if (col[r] - alpha_rq).abs() > 1e-7 * (1.0 + alpha_rq.abs()) {
                if self.fresh {
                    // accept the column solve, it is the more accurate of the two
                } else {
                    self.refresh();
                    continue;
                }
            }
            let piv = col[r];
            if piv.abs() <= PIVOT_TOL {
                self.refresh();
                continue;
            }

            let theta_p = (self.x[p] - target) / piv;
            for s in 0..self.m {
                let c = col[s];
                if c != 0.0 {
                    let j = self.head[s];
                    self.x[j] -= theta_p * c;
                }
            }
            self.x[q] += theta_p;
            self.x[p] = target;

            let theta_d = self.d[q] / alpha_rq;
            for &j in &self.touched {
                if self.slot[j] == NONE {
                    self.d[j] -= theta_d * self.alpha_row[j];
                }
            }
            self.d[q] = 0.0;
            self.d[p] = -theta_d;

            self.head[r] = q;
            self.slot[q] = r;
            self.slot[p] = NONE;
            self.at_upper[p] = !to_lower;
            self.factor.add_eta(r, &col);
            self.fresh = false;
            self.iterations += 1;

            if theta_d.abs() < 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_LIMIT {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
        }
    }
}
