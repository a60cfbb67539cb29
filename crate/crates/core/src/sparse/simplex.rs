//! Dense dual simplex for `min cᵀx  s.t.  Ax ≤ b, x ≥ 0` with `c ≥ 0`.
//!
//! With nonnegative costs the all-slack basis is dual feasible, so no phase
//! one is needed: the dual simplex walks from `x = 0` until every slack is
//! nonnegative. The tableau is the compact (nonbasic-columns-only) dictionary
//! `x_B = β − T x_N`, stored column-major so the rank-one pivot update runs
//! over contiguous columns.

use crate::linalg::{Matrix, Vector};
use crate::{Error, Result};

const PRIMAL_TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vector, objective: f64, pivots: usize },
    Infeasible { row: usize },
}

/// Solves the LP. `Err` only when the pivot budget is exhausted.
pub fn solve(a: &Matrix, b: &[f64], c: &[f64]) -> Result<LpOutcome> {
    let mut t = Tableau::new(a, b, c)?;
    t.run()
}

/// Dual-feasible starting tableau for a fixed constraint matrix.
///
/// Cloning a `Tableau` and replacing the right-hand side lets callers solve a
/// family of LPs sharing `A` and `c` without rebuilding the matrix.
#[derive(Debug, Clone)]
pub struct Tableau {
    m: usize,
    n: usize,
    /// Column-major `m × n`.
    t: Vec<f64>,
    beta: Vec<f64>,
    /// Squared norms of the tableau rows (plus one), for pricing.
    weight: Vec<f64>,
    cost: Vec<f64>,
    /// Variable id of each row's basic variable (ids `< n` are structural).
    row_var: Vec<usize>,
    /// Variable id of each nonbasic column.
    col_var: Vec<usize>,
    a: Matrix,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl Tableau {
    pub fn new(a: &Matrix, b: &[f64], c: &[f64]) -> Result<Self> {
        let (m, n) = a.shape();
        if b.len() != m || c.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "LP with A {m}×{n}, b {}, c {}",
                b.len(),
                c.len()
            )));
        }
        if c.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument("dual simplex needs nonnegative costs".into()));
        }
        Ok(Self {
            m,
            n,
            t: a.as_slice().to_vec(),
            beta: b.to_vec(),
            weight: row_weights(a.as_slice(), m, n),
            cost: c.to_vec(),
            row_var: (n..n + m).collect(),
            col_var: (0..n).collect(),
            a: a.clone(),
            b: b.to_vec(),
            c: c.to_vec(),
        })
    }

    /// Same `A` and `c`, different `b`; only valid on an unpivoted tableau.
    pub fn with_rhs(&self, b: &[f64]) -> Self {
        assert_eq!(b.len(), self.m);
        let mut next = self.clone();
        next.beta = b.to_vec();
        next.b = b.to_vec();
        next
    }

    pub fn run(&mut self) -> Result<LpOutcome> {
        let (m, n) = (self.m, self.n);
        let budget = 50 * (m + n) + 100;
        let mut pivots = 0;
        let mut pivot_col = vec![0.0; m];
        let mut pivot_row = vec![0.0; n];
        loop {
            // leaving row: largest infeasibility relative to the row norm
            let mut r = usize::MAX;
            let mut worst = 0.0;
            for (i, &v) in self.beta.iter().enumerate() {
                if v < -PRIMAL_TOL {
                    let score = v * v / self.weight[i];
                    if score > worst {
                        worst = score;
                        r = i;
                    }
                }
            }
            if r == usize::MAX {
                break;
            }
            if pivots >= budget {
                return Err(Error::NotConverged {
                    solver: "dual simplex",
                    iterations: pivots,
                });
            }
            // entering column: dual ratio test, ties to the largest |T_rk|
            let mut col = usize::MAX;
            let mut best_ratio = f64::INFINITY;
            let mut best_mag = 0.0;
            for k in 0..n {
                let v = self.t[k * m + r];
                if v < -PIVOT_TOL {
                    let ratio = self.cost[k].max(0.0) / -v;
                    let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio.abs());
                    if (ratio < best_ratio && !tie) || (tie && -v > best_mag) {
                        best_ratio = ratio;
                        best_mag = -v;
                        col = k;
                    }
                }
            }
            if col == usize::MAX {
                return Ok(LpOutcome::Infeasible { row: r });
            }
            self.pivot(r, col, &mut pivot_col, &mut pivot_row);
            pivots += 1;
        }
        let x = self.polished_solution();
        let objective = x.iter().zip(&self.c).map(|(x, c)| x * c).sum();
        Ok(LpOutcome::Optimal { x, objective, pivots })
    }

    fn pivot(&mut self, r: usize, c: usize, col_buf: &mut [f64], row_buf: &mut [f64]) {
        let (m, n) = (self.m, self.n);
        let piv = self.t[c * m + r];
        col_buf.copy_from_slice(&self.t[c * m..(c + 1) * m]);
        for k in 0..n {
            row_buf[k] = self.t[k * m + r] / piv;
        }
        row_buf[c] = 1.0 / piv;

        let beta_r = self.beta[r] / piv;
        for i in 0..m {
            self.beta[i] -= col_buf[i] * beta_r;
        }
        self.beta[r] = beta_r;

        let d_c = self.cost[c];
        for k in 0..n {
            self.cost[k] -= d_c * row_buf[k];
        }
        self.cost[c] = -d_c / piv;

        let weight = &mut self.weight;
        weight.fill(1.0);
        for k in 0..n {
            let f = row_buf[k];
            let column = &mut self.t[k * m..(k + 1) * m];
            if k == c {
                for i in 0..m {
                    column[i] = -col_buf[i] / piv;
                }
            } else if f != 0.0 {
                for (v, &ci) in column.iter_mut().zip(col_buf.iter()) {
                    *v -= ci * f;
                }
            }
            column[r] = f;
            for (w, v) in weight.iter_mut().zip(column.iter()) {
                *w += v * v;
            }
        }
        std::mem::swap(&mut self.row_var[r], &mut self.col_var[c]);
    }

    /// Basic solution recomputed from the original data on the final basis.
    fn polished_solution(&self) -> Vector {
        let n = self.n;
        let mut x = Vector::zeros(n);
        let basic: Vec<(usize, usize)> = self
            .row_var
            .iter()
            .enumerate()
            .filter(|(_, &v)| v < n)
            .map(|(i, &v)| (i, v))
            .collect();
        for &(i, v) in &basic {
            x[v] = self.beta[i];
        }
        // active constraints are the rows whose slacks are nonbasic
        let active: Vec<usize> = self
            .col_var
            .iter()
            .filter(|&&v| v >= n)
            .map(|&v| v - n)
            .collect();
        let vars: Vec<usize> = basic.iter().map(|&(_, v)| v).collect();
        if active.len() != vars.len() || vars.is_empty() {
            return x;
        }
        let k = vars.len();
        let sub = Matrix::from_fn(k, k, |i, j| self.a[(active[i], vars[j])]);
        let rhs = Vector::from_iterator(k, active.iter().map(|&i| self.b[i]));
        if let Some(sol) = sub.lu().solve(&rhs) {
            let consistent = sol
                .iter()
                .zip(&vars)
                .all(|(s, &v)| (s - x[v]).abs() <= 1e-6 * (1.0 + x[v].abs()));
            if consistent {
                for (s, &v) in sol.iter().zip(&vars) {
                    x[v] = s.max(0.0);
                }
            }
        }
        x
    }
}

fn row_weights(t: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut w = vec![1.0; m];
    for k in 0..n {
        for (wi, v) in w.iter_mut().zip(&t[k * m..(k + 1) * m]) {
            *wi += v * v;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp() {
        // min x + y  s.t.  x + 2y ≥ 4, 3x + y ≥ 6  (written as ≤ with negation)
        let a = Matrix::from_row_slice(2, 2, &[-1.0, -2.0, -3.0, -1.0]);
        match solve(&a, &[-4.0, -6.0], &[1.0, 1.0]).unwrap() {
            LpOutcome::Optimal { x, objective, .. } => {
                assert!((x[0] - 1.6).abs() < 1e-12);
                assert!((x[1] - 1.2).abs() < 1e-12);
                assert!((objective - 2.8).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_infeasibility() {
        // x ≤ 1 and x ≥ 2
        let a = Matrix::from_row_slice(2, 1, &[1.0, -1.0]);
        assert!(matches!(
            solve(&a, &[1.0, -2.0], &[1.0]).unwrap(),
            LpOutcome::Infeasible { .. }
        ));
    }

    #[test]
    fn zero_is_optimal_when_feasible() {
        let a = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        match solve(&a, &[3.0], &[1.0, 2.0]).unwrap() {
            LpOutcome::Optimal { x, pivots, .. } => {
                assert_eq!(pivots, 0);
                assert!(x.iter().all(|&v| v == 0.0));
            }
            other => panic!("{other:?}"),
        }
    }
}
