//! Two-phase dense-tableau simplex for small linear programs.
//!
//! Minimizes `c . x` over `x >= 0` subject to mixed `<=` / `>=` / `=`
//! rows. Entering and leaving variables follow Bland's smallest-index
//! rule, so the iteration cannot cycle on degenerate vertices; problems
//! here are tiny (tens of variables), so the dense tableau is fine.

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

/// `minimize c . x  s.t.  rows, x >= 0`.
#[derive(Debug, Clone)]
pub struct Lp {
    pub n: usize,
    pub c: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Rel, f64)>,
}

impl Lp {
    pub fn new(n: usize) -> Self {
        Lp { n, c: vec![0.0; n], rows: Vec::new() }
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, rel: Rel, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.n);
        self.rows.push((coeffs, rel, rhs));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// Constraint rows, each `width` long with the rhs in the last cell.
    rows: Vec<Vec<f64>>,
    /// Reduced-cost row, same layout; last cell is minus the objective.
    cost: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let inv = 1.0 / self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v *= inv;
        }
        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, p) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
        let f = self.cost[col];
        if f != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
        }
        self.basis[row] = col;
    }

    /// Run simplex to optimality over columns `0..ncols`.
    /// Returns false when the objective is unbounded below.
    fn optimize(&mut self, ncols: usize) -> bool {
        loop {
            // Bland: smallest-index column with a negative reduced cost.
            let Some(enter) = (0..ncols).find(|&j| self.cost[j] < -EPS) else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, r) in self.rows.iter().enumerate() {
                if r[enter] > EPS {
                    let ratio = r[self.width - 1] / r[enter];
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - EPS
                                || (ratio < lr + EPS && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((row, _)) => self.pivot(row, enter),
                None => return false,
            }
        }
    }
}

/// Solve the program. Deterministic for a given input.
pub fn solve(lp: &Lp) -> LpOutcome {
    let n = lp.n;
    let m = lp.rows.len();

    // Column layout: structural | slack/surplus | artificial | rhs.
    let n_slack = lp.rows.iter().filter(|(_, rel, _)| *rel != Rel::Eq).count();
    let mut n_art = 0;
    let width = n + n_slack + m + 1; // upper bound on artificials: one per row
    let mut t = Tableau {
        rows: Vec::with_capacity(m),
        cost: vec![0.0; width],
        basis: Vec::with_capacity(m),
        width,
    };

    let mut slack_at = n;
    let art_base = n + n_slack;
    for (coeffs, rel, rhs) in &lp.rows {
        assert_eq!(coeffs.len(), n, "constraint width mismatch");
        let mut row = vec![0.0; width];
        let flip = *rhs < 0.0;
        let sign = if flip { -1.0 } else { 1.0 };
        for (j, &a) in coeffs.iter().enumerate() {
            row[j] = sign * a;
        }
        row[width - 1] = sign * rhs;
        let rel = match (rel, flip) {
            (Rel::Le, true) => Rel::Ge,
            (Rel::Ge, true) => Rel::Le,
            (r, _) => *r,
        };
        let basic = match rel {
            Rel::Le => {
                row[slack_at] = 1.0;
                slack_at += 1;
                slack_at - 1
            }
            Rel::Ge => {
                row[slack_at] = -1.0;
                slack_at += 1;
                let a = art_base + n_art;
                n_art += 1;
                row[a] = 1.0;
                a
            }
            Rel::Eq => {
                let a = art_base + n_art;
                n_art += 1;
                row[a] = 1.0;
                a
            }
        };
        t.basis.push(basic);
        t.rows.push(row);
    }

    let ncols = art_base + n_art;

    // Phase 1: minimize the artificial sum. The cost row starts as
    // sum(artificials) canonicalized against the initial basis.
    if n_art > 0 {
        for j in art_base..ncols {
            t.cost[j] = 1.0;
        }
        for (i, &b) in t.basis.iter().enumerate() {
            if b >= art_base {
                let row = t.rows[i].clone();
                for (v, p) in t.cost.iter_mut().zip(&row) {
                    *v -= p;
                }
            }
        }
        if !t.optimize(ncols) {
            unreachable!("phase-1 objective is bounded below by zero");
        }
        if -t.cost[width - 1] > 1e-7 {
            return LpOutcome::Infeasible;
        }
        // Pivot residual artificials out of the basis, dropping rows that
        // are redundant (all structural/slack coefficients zero).
        let mut i = 0;
        while i < t.rows.len() {
            if t.basis[i] >= art_base {
                if let Some(col) = (0..art_base).find(|&j| t.rows[i][j].abs() > EPS) {
                    t.pivot(i, col);
                } else {
                    t.rows.remove(i);
                    t.basis.remove(i);
                    continue;
                }
            }
            i += 1;
        }
    }

    // Phase 2 cost row: structural objective, canonicalized.
    for v in t.cost.iter_mut() {
        *v = 0.0;
    }
    for (j, &cj) in lp.c.iter().enumerate() {
        t.cost[j] = cj;
    }
    for i in 0..t.rows.len() {
        let b = t.basis[i];
        let cb = if b < n { lp.c[b] } else { 0.0 };
        if cb != 0.0 {
            let row = t.rows[i].clone();
            for (v, p) in t.cost.iter_mut().zip(&row) {
                *v -= cb * p;
            }
        }
    }
    // Artificial columns are dead: bar them from re-entering.
    for j in art_base..ncols {
        t.cost[j] = 0.0;
    }
    if !t.optimize(art_base) {
        return LpOutcome::Unbounded;
    }

    let mut x = vec![0.0; n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rows[i][width - 1];
        }
    }
    let objective = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    LpOutcome::Optimal { x, objective }
}
