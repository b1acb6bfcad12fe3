//! Sparse LU factorization of a simplex basis.
//!
//! Right-looking Markowitz elimination with threshold pivoting, followed by
//! product-form eta updates between refactorizations.

const NONE: usize = usize::MAX;
const THRESHOLD: f64 = 0.01;
const SEARCH_LIMIT: usize = 4;

#[derive(Debug)]
pub(crate) struct Singular {
    /// Basis slots that could not be pivoted.
    pub slots: Vec<usize>,
    /// Rows left without a pivot, same length as `slots`.
    pub rows: Vec<usize>,
}

/// Intrusive doubly linked buckets keyed by a count.
struct Buckets {
    head: Vec<usize>,
    next: Vec<usize>,
    prev: Vec<usize>,
    key: Vec<usize>,
}

impl Buckets {
    fn new(items: usize, max_key: usize) -> Self {
        Buckets {
            head: vec![NONE; max_key + 1],
            next: vec![NONE; items],
            prev: vec![NONE; items],
            key: vec![NONE; items],
        }
    }

    fn insert(&mut self, i: usize, k: usize) {
        let h = self.head[k];
        self.next[i] = h;
        self.prev[i] = NONE;
        if h != NONE {
            self.prev[h] = i;
        }
        self.head[k] = i;
        self.key[i] = k;
    }

    fn remove(&mut self, i: usize) {
        let k = self.key[i];
        if k == NONE {
            return;
        }
        let (p, n) = (self.prev[i], self.next[i]);
        if p != NONE {
            self.next[p] = n;
        } else {
            self.head[k] = n;
        }
        if n != NONE {
            self.prev[n] = p;
        }
        self.key[i] = NONE;
    }

    fn update(&mut self, i: usize, k: usize) {
        if self.key[i] != k {
            self.remove(i);
            self.insert(i, k);
        }
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Factor {
    m: usize,
    piv_row: Vec<usize>,
    piv_col: Vec<usize>,
    piv_val: Vec<f64>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    eta_pos: Vec<usize>,
    eta_piv: Vec<f64>,
    eta_start: Vec<usize>,
    eta_idx: Vec<usize>,
    eta_val: Vec<f64>,
}

impl Factor {
    pub fn num_etas(&self) -> usize {
        self.eta_pos.len()
    }

    pub fn eta_nnz(&self) -> usize {
        self.eta_idx.len()
    }

    pub fn lu_nnz(&self) -> usize {
        self.l_idx.len() + self.u_idx.len() + self.m
    }

    /// Factorizes the `m × m` matrix given by its columns (row, value).
    pub fn factorize(m: usize, mut cols: Vec<Vec<(usize, f64)>>) -> Result<Factor, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut f = Factor {
            m,
            l_start: vec![0],
            u_start: vec![0],
            eta_start: vec![0],
            ..Default::default()
        };
        for c in cols.iter_mut() {
            c.retain(|e| e.1 != 0.0);
        }
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (j, c) in cols.iter().enumerate() {
            for &(i, _) in c {
                rows[i].push(j);
            }
        }
        let mut cb = Buckets::new(m, m);
        let mut rb = Buckets::new(m, m);
        for j in 0..m {
            cb.insert(j, cols[j].len());
        }
        for i in 0..m {
            rb.insert(i, rows[i].len());
        }
        let mut col_done = vec![false; m];
        let mut row_done = vec![false; m];
        let mut pos = vec![NONE; m];
        let mut lcol: Vec<(usize, f64)> = Vec::new();
        let mut urow: Vec<(usize, f64)> = Vec::new();

        for _step in 0..m {
            let Some((r, c)) = find_pivot(m, &cols, &rows, &cb, &rb) else {
                break;
            };
            let p = cols[c].iter().find(|e| e.0 == r).map(|e| e.1).unwrap();

            urow.clear();
            for &j in &rows[r] {
                if j == c {
                    continue;
                }
                let k = cols[j].iter().position(|e| e.0 == r).unwrap();
                urow.push((j, cols[j].swap_remove(k).1));
            }
            lcol.clear();
            for &(i, v) in &cols[c] {
                if i != r {
                    lcol.push((i, v / p));
                }
            }
            for &(i, _) in &lcol {
                let k = rows[i].iter().position(|&j| j == c).unwrap();
                rows[i].swap_remove(k);
            }
            for &(j, u) in &urow {
                for (k, e) in cols[j].iter().enumerate() {
                    pos[e.0] = k;
                }
                for &(i, l) in &lcol {
                    if pos[i] != NONE {
                        cols[j][pos[i]].1 -= l * u;
                    } else {
                        pos[i] = cols[j].len();
                        cols[j].push((i, -l * u));
                        rows[i].push(j);
                    }
                }
                for e in &cols[j] {
                    pos[e.0] = NONE;
                }
                cb.update(j, cols[j].len());
            }
            for &(i, _) in &lcol {
                rb.update(i, rows[i].len());
            }
            cb.remove(c);
            rb.remove(r);
            col_done[c] = true;
            row_done[r] = true;
            cols[c] = Vec::new();
            rows[r] = Vec::new();

            f.piv_row.push(r);
            f.piv_col.push(c);
            f.piv_val.push(p);
            for &(i, l) in &lcol {
                f.l_idx.push(i);
                f.l_val.push(l);
            }
            f.l_start.push(f.l_idx.len());
            for &(j, u) in &urow {
                f.u_idx.push(j);
                f.u_val.push(u);
            }
            f.u_start.push(f.u_idx.len());
        }

        if f.piv_row.len() < m {
            let slots: Vec<usize> = (0..m).filter(|&j| !col_done[j]).collect();
            let rows: Vec<usize> = (0..m).filter(|&i| !row_done[i]).collect();
            return Err(Singular { slots, rows });
        }
        Ok(f)
    }

    /// Solves `B x = rhs`. `rhs` is row-indexed and is overwritten; `out` is slot-indexed.
    pub fn ftran(&self, rhs: &mut [f64], out: &mut [f64]) {
        for k in 0..self.piv_row.len() {
            let v = rhs[self.piv_row[k]];
            if v != 0.0 {
                for t in self.l_start[k]..self.l_start[k + 1] {
                    rhs[self.l_idx[t]] -= self.l_val[t] * v;
                }
            }
        }
        for k in (0..self.piv_row.len()).rev() {
            let mut v = rhs[self.piv_row[k]];
            for t in self.u_start[k]..self.u_start[k + 1] {
                v -= self.u_val[t] * out[self.u_idx[t]];
            }
            out[self.piv_col[k]] = v / self.piv_val[k];
        }
        for e in 0..self.eta_pos.len() {
            let p = self.eta_pos[e];
            let xp = out[p] / self.eta_piv[e];
            out[p] = xp;
            if xp != 0.0 {
                for t in self.eta_start[e]..self.eta_start[e + 1] {
                    out[self.eta_idx[t]] -= self.eta_val[t] * xp;
                }
            }
        }
    }

    /// Solves `Bᵀ y = e`. `e` is slot-indexed and is overwritten; `y` is row-indexed.
    pub fn btran(&self, e: &mut [f64], y: &mut [f64]) {
        for k in (0..self.eta_pos.len()).rev() {
            let p = self.eta_pos[k];
            let mut v = e[p];
            for t in self.eta_start[k]..self.eta_start[k + 1] {
                v -= self.eta_val[t] * e[self.eta_idx[t]];
            }
            e[p] = v / self.eta_piv[k];
        }
        for k in 0..self.piv_row.len() {
            let t_k = e[self.piv_col[k]] / self.piv_val[k];
            y[self.piv_row[k]] = t_k;
            if t_k != 0.0 {
                for t in self.u_start[k]..self.u_start[k + 1] {
                    e[self.u_idx[t]] -= self.u_val[t] * t_k;
                }
            }
        }
        for k in (0..self.piv_row.len()).rev() {
            let r = self.piv_row[k];
            let mut s = y[r];
            for t in self.l_start[k]..self.l_start[k + 1] {
                s -= self.l_val[t] * y[self.l_idx[t]];
            }
            y[r] = s;
        }
    }

    /// Records the replacement of basis slot `p` by a column whose
    /// representation in the current basis is `alpha` (slot-indexed).
    pub fn add_eta(&mut self, p: usize, alpha: &[f64]) {
        self.eta_pos.push(p);
        self.eta_piv.push(alpha[p]);
        for (i, &a) in alpha.iter().enumerate() {
            if i != p && a.abs() > 1e-14 {
                self.eta_idx.push(i);
                self.eta_val.push(a);
            }
        }
        self.eta_start.push(self.eta_idx.len());
    }
}

fn find_pivot(
    m: usize,
    cols: &[Vec<(usize, f64)>],
    rows: &[Vec<usize>],
    cb: &Buckets,
    rb: &Buckets,
) -> Option<(usize, usize)> {
    let col_max = |j: usize| cols[j].iter().fold(0.0f64, |a, e| a.max(e.1.abs()));
    let mut best: Option<(usize, usize)> = None;
    let mut best_cost = usize::MAX;
    let mut examined = 0;
    for k in 1..=m {
        let mut j = cb.head[k];
        while j != NONE {
            let cmax = col_max(j);
            for &(i, v) in &cols[j] {
                if v.abs() >= THRESHOLD * cmax && v.abs() > 1e-11 {
                    let cost = (rows[i].len() - 1) * (k - 1);
                    if cost < best_cost {
                        best_cost = cost;
                        best = Some((i, j));
                    }
                }
            }
            examined += 1;
            if best.is_some() && (k == 1 || examined >= SEARCH_LIMIT) {
                return best;
            }
            j = cb.next[j];
        }
        let mut i = rb.head[k];
        while i != NONE {
            for &j in &rows[i] {
                let v = cols[j].iter().find(|e| e.0 == i).map(|e| e.1).unwrap_or(0.0);
                if v.abs() >= THRESHOLD * col_max(j) && v.abs() > 1e-11 {
                    let cost = (k - 1) * (cols[j].len() - 1);
                    if cost < best_cost {
                        best_cost = cost;
                        best = Some((i, j));
                    }
                }
            }
            examined += 1;
            if best.is_some() && examined >= SEARCH_LIMIT {
                return best;
            }
            i = rb.next[i];
        }
        if best.is_some() {
            return best;
        }
    }
    best
}
