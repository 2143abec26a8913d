//! Dense two-phase simplex for the small feasibility problems that show up in
//! cone membership, interior detection and the half-space witness search.
//!
//! Problems are in standard form `A x = b, x >= 0`. Pivoting uses Bland's
//! rule, so degenerate problems cannot cycle. Sizes here are tiny (tens of
//! rows), so the tableau is recomputed naively and nothing is sparse.

const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal {
        x: Vec<f64>,
        value: f64,
    },
    /// Phase one could not drive the artificials to zero; `residual` is the
    /// smallest achievable `|A x - b|_1` over `x >= 0`.
    Infeasible {
        residual: f64,
    },
    Unbounded,
}

impl LpOutcome {
    pub fn point(&self) -> Option<&[f64]> {
        match self {
            LpOutcome::Optimal { x, .. } => Some(x),
            _ => None,
        }
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost . x` from the current basic feasible solution.
    /// Columns with `allowed[j] == false` never enter the basis.
    fn run(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        let m = self.rows.len();
        let max_iter = 50 * (m + self.ncols) + 1000;
        for _ in 0..max_iter {
            // Bland: lowest-index column with negative reduced cost.
            let mut entering = None;
            for j in 0..self.ncols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut r = cost[j];
                for i in 0..m {
                    r -= cost[self.basis[i]] * self.rows[i][j];
                }
                if r < -1e-11 {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else {
                return true;
            };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.rows[i][c];
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    leaving = match leaving {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14
                                || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leaving {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
        // Bland's rule terminates; reaching this means numerical trouble.
        true
    }

    fn solution(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.rhs(i).max(0.0);
            }
        }
        x
    }
}

/// Minimizes `c . x` subject to `A x = b`, `x >= 0`.
///
/// `a` is given row by row. Feasibility is declared when the phase-one
/// objective is at most `feas_tol * (1 + |b|_1)`.
pub fn minimize(c: &[f64], a: &[Vec<f64>], b: &[f64], feas_tol: f64) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    debug_assert!(a.iter().all(|row| row.len() == n));
    debug_assert_eq!(b.len(), m);

    // Columns: n structural, m artificial, then rhs.
    let ncols = n + m;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; ncols + 1];
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[n + i] = 1.0;
        row[ncols] = sign * b[i];
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        basis: (n..n + m).collect(),
        ncols,
    };

    let mut phase1_cost = vec![0.0; ncols];
    for v in phase1_cost.iter_mut().skip(n) {
        *v = 1.0;
    }
    let all = vec![true; ncols];
    t.run(&phase1_cost, &all);
    let infeas: f64 = (0..m)
        .filter(|&i| t.basis[i] >= n)
        .map(|i| t.rhs(i).abs())
        .sum();
    let b_scale: f64 = 1.0 + b.iter().map(|v| v.abs()).sum::<f64>();
    if infeas > feas_tol * b_scale {
        return LpOutcome::Infeasible { residual: infeas };
    }

    // Drive zero-valued artificials out of the basis where possible.
    for i in 0..m {
        if t.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| !t.basis.contains(&j) && t.rows[i][j].abs() > 1e-9) {
                t.pivot(i, j);
            }
        }
    }

    let mut cost = vec![0.0; ncols];
    cost[..n].copy_from_slice(c);
    let mut allowed = vec![false; ncols];
    for v in allowed.iter_mut().take(n) {
        *v = true;
    }
    if !t.run(&cost, &allowed) {
        return LpOutcome::Unbounded;
    }
    let x = t.solution(n);
    let value = crate::linalg::dot(c, &x);
    LpOutcome::Optimal { x, value }
}

/// Phase one only: a point with `A x = b`, `x >= 0`, or the minimal L1 residual.
pub fn feasible_point(a: &[Vec<f64>], b: &[f64], feas_tol: f64) -> LpOutcome {
    let n = a.first().map_or(0, |r| r.len());
    minimize(&vec![0.0; n], a, b, feas_tol)
}
