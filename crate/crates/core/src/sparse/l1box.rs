//! Dual simplex for `min |θ|₁  s.t.  |Aθ − b|_∞ ≤ ϱ`.
//!
//! Each row gets one boxed slack, `aᵢᵀθ + sᵢ = bᵢ + ϱ` with `0 ≤ sᵢ ≤ 2ϱ`,
//! and `θ` stays free with its kinked cost handled directly: a nonbasic `θₖ`
//! sits at the kink and may leave it in either direction, a basic one lives
//! on one linear piece. The dictionary is therefore `m × p` rather than the
//! `2m × 2p` of the split-sign LP, and the all-slack start (`θ = 0`, dual
//! `y = 0`) is dual feasible for every `b` and `ϱ`.

use crate::linalg::{Matrix, Vector};
use crate::{Error, Result};

const PRIMAL_TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum L1BoxOutcome {
    /// `dual` is a certificate: `|Aᵀy|_∞ ≤ 1` and
    /// `bᵀy − ϱ|y|₁ = |θ|₁` at optimality.
    Optimal {
        theta: Vector,
        dual: Vector,
        pivots: usize,
    },
    Infeasible { row: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Kink(usize),
    SlackLower(usize),
    SlackUpper(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Basic {
    /// Structural variable and the sign of its linear piece.
    Theta(usize, f64),
    Slack(usize),
}

/// Shared starting dictionary for a fixed `A`.
#[derive(Debug, Clone)]
pub struct L1BoxProblem {
    a: Matrix,
    weight: Vec<f64>,
}

impl L1BoxProblem {
    pub fn new(a: &Matrix) -> Self {
        let (m, p) = a.shape();
        let mut weight = vec![1.0; m];
        for k in 0..p {
            for (w, v) in weight.iter_mut().zip(a.column(k).iter()) {
                *w += v * v;
            }
        }
        Self { a: a.clone(), weight }
    }

    pub fn solve(&self, b: &[f64], rho: f64) -> Result<L1BoxOutcome> {
        self.check(b, rho)?;
        let mut d = self.cold(b, rho);
        d.run(&self.a, b)
    }

    fn check(&self, b: &[f64], rho: f64) -> Result<()> {
        let m = self.a.nrows();
        if b.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has {} entries for {m} rows",
                b.len()
            )));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidArgument(format!("box radius must be positive, got {rho}")));
        }
        Ok(())
    }

    fn cold(&self, b: &[f64], rho: f64) -> Dictionary {
        let (m, p) = self.a.shape();
        Dictionary {
            m,
            p,
            rho,
            t: self.a.as_slice().to_vec(),
            beta: b.iter().map(|v| v + rho).collect(),
            weight: self.weight.clone(),
            w: vec![0.0; p],
            rows: (0..m).map(Basic::Slack).collect(),
            slots: (0..p).map(Slot::Kink).collect(),
            col_buf: vec![0.0; m],
        }
    }
}

enum Step {
    Optimal,
    Infeasible(usize),
    Continue,
}

struct Dictionary {
    m: usize,
    p: usize,
    rho: f64,
    /// `x_B = β − T x_N`, column-major `m × p`.
    t: Vec<f64>,
    beta: Vec<f64>,
    /// One plus the squared row norms of `T`.
    weight: Vec<f64>,
    /// `yᵀaₖ` for the variable in each slot.
    w: Vec<f64>,
    rows: Vec<Basic>,
    slots: Vec<Slot>,
    col_buf: Vec<f64>,
}


impl Dictionary {
    fn run(&mut self, a: &Matrix, b: &[f64]) -> Result<L1BoxOutcome> {
        let budget = 50 * (self.m + self.p) + 100;
        for pivots in 0..=budget {
            match self.step() {
                Step::Optimal => {
                    return Ok(L1BoxOutcome::Optimal {
                        theta: self.polished_theta(a, b),
                        dual: self.dual(),
                        pivots,
                    })
                }
                Step::Infeasible(row) => return Ok(L1BoxOutcome::Infeasible { row }),
                Step::Continue => {}
            }
        }
        Err(Error::NotConverged {
            solver: "l1-box dual simplex",
            iterations: budget,
        })
    }

    fn bounds(&self, basic: Basic) -> (f64, f64) {
        match basic {
            Basic::Slack(_) => (0.0, 2.0 * self.rho),
            Basic::Theta(_, s) if s > 0.0 => (0.0, f64::INFINITY),
            Basic::Theta(..) => (f64::NEG_INFINITY, 0.0),
        }
    }

    #[inline]
    fn entry(&self, i: usize, k: usize) -> f64 {
        self.t[k * self.m + i]
    }

    fn step(&mut self) -> Step {
        // leaving row: largest scaled infeasibility
        let mut leave = None;
        let mut best = 0.0;
        for i in 0..self.m {
            let (lo, hi) = self.bounds(self.rows[i]);
            let inf = if self.beta[i] < lo - PRIMAL_TOL {
                lo - self.beta[i]
            } else if self.beta[i] > hi + PRIMAL_TOL {
                self.beta[i] - hi
            } else {
                continue;
            };
            let score = inf * inf / self.weight[i];
            if score > best {
                best = score;
                leave = Some(i);
            }
        }
        let Some(r) = leave else {
            return Step::Optimal;
        };
        let (lo, hi) = self.bounds(self.rows[r]);
        // +1: x_Br must rise to `lo`; −1: fall to `hi`
        let s = if self.beta[r] < lo { 1.0 } else { -1.0 };
        let target = if s > 0.0 { lo } else { hi };

        let mut enter: Option<(usize, f64, f64)> = None; // slot, direction, ratio
        let mut enter_mag = 0.0;
        for k in 0..self.p {
            let a = self.entry(r, k);
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let dir = -s * a.signum();
            let cost = match (self.slots[k], dir > 0.0) {
                (Slot::Kink(_), true) => 1.0 - self.w[k],
                (Slot::Kink(_), false) => 1.0 + self.w[k],
                (Slot::SlackLower(_), true) => -self.w[k],
                (Slot::SlackUpper(_), false) => self.w[k],
                _ => continue,
            };
            let ratio = cost.max(0.0) / a.abs();
            let better = match enter {
                None => true,
                Some((_, _, q)) => {
                    ratio < q - TIE_TOL || (ratio <= q + TIE_TOL && a.abs() > enter_mag)
                }
            };
            if better {
                enter = Some((k, dir, ratio));
                enter_mag = a.abs();
            }
        }

        // a basic θ may instead cross zero onto its other piece, which costs
        // a dual step of 2
        if let Basic::Theta(j, sign) = self.rows[r] {
            if enter.is_none_or(|(_, _, q)| q > 2.0 + TIE_TOL) {
                let tau = -2.0 * sign;
                for k in 0..self.p {
                    self.w[k] += tau * self.entry(r, k);
                }
                self.rows[r] = Basic::Theta(j, -sign);
                return Step::Continue;
            }
        }
        let Some((q, dir, _)) = enter else {
            return Step::Infeasible(r);
        };

        let arq = self.entry(r, q);
        let c_enter = match self.slots[q] {
            Slot::Kink(_) => dir,
            _ => 0.0,
        };
        let tau = (c_enter - self.w[q]) / arq;
        for k in 0..self.p {
            self.w[k] += tau * self.entry(r, k);
        }
        let c_leave = match self.rows[r] {
            Basic::Theta(_, sign) => sign,
            Basic::Slack(_) => 0.0,
        };
        let leaving = self.rows[r];

        // primal move
        let delta = (self.beta[r] - target) / arq;
        let start = match self.slots[q] {
            Slot::SlackUpper(_) => 2.0 * self.rho,
            _ => 0.0,
        };
        for i in 0..self.m {
            self.beta[i] -= self.entry(i, q) * delta;
        }
        self.beta[r] = start + delta;
        self.rows[r] = match self.slots[q] {
            Slot::Kink(j) => Basic::Theta(j, dir),
            Slot::SlackLower(i) | Slot::SlackUpper(i) => Basic::Slack(i),
        };
        self.slots[q] = match leaving {
            Basic::Theta(j, _) => Slot::Kink(j),
            Basic::Slack(i) if s > 0.0 => Slot::SlackLower(i),
            Basic::Slack(i) => Slot::SlackUpper(i),
        };
        self.w[q] = c_leave + tau;
        self.pivot(r, q);
        Step::Continue
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let m = self.m;
        let piv = self.entry(r, q);
        self.col_buf.copy_from_slice(&self.t[q * m..(q + 1) * m]);
        let col = &self.col_buf;
        self.weight.fill(1.0);
        for k in 0..self.p {
            let column = &mut self.t[k * m..(k + 1) * m];
            let f;
            if k == q {
                f = 1.0 / piv;
                for (v, &ci) in column.iter_mut().zip(col.iter()) {
                    *v = -ci / piv;
                }
            } else {
                f = column[r] / piv;
                if f != 0.0 {
                    for (v, &ci) in column.iter_mut().zip(col.iter()) {
                        *v -= ci * f;
                    }
                }
            }
            column[r] = f;
            for (wi, v) in self.weight.iter_mut().zip(column.iter()) {
                *wi += v * v;
            }
        }
    }

    fn dual(&self) -> Vector {
        let mut y = Vector::zeros(self.m);
        for (k, slot) in self.slots.iter().enumerate() {
            if let Slot::SlackLower(i) | Slot::SlackUpper(i) = *slot {
                y[i] = self.w[k];
            }
        }
        y
    }

    /// Basic `θ` re-solved from the original rows that are tight.
    fn polished_theta(&self, a: &Matrix, b: &[f64]) -> Vector {
        let mut theta = Vector::zeros(self.p);
        let mut vars = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            if let Basic::Theta(j, _) = *row {
                theta[j] = self.beta[i];
                vars.push(j);
            }
        }
        let tight: Vec<(usize, f64)> = self
            .slots
            .iter()
            .filter_map(|slot| match *slot {
                Slot::SlackLower(i) => Some((i, b[i] + self.rho)),
                Slot::SlackUpper(i) => Some((i, b[i] - self.rho)),
                Slot::Kink(_) => None,
            })
            .collect();
        let k = vars.len();
        if k == 0 || tight.len() != k {
            return theta;
        }
        let sub = Matrix::from_fn(k, k, |i, j| a[(tight[i].0, vars[j])]);
        let rhs = Vector::from_iterator(k, tight.iter().map(|&(_, v)| v));
        if let Some(sol) = sub.lu().solve(&rhs) {
            let consistent = sol.iter().zip(&vars).all(|(s, &j)| {
                (s - theta[j]).abs() <= 1e-6 * (1.0 + theta[j].abs())
                    && (s * theta[j] >= 0.0 || theta[j].abs() < 1e-9)
            });
            if consistent {
                for (s, &j) in sol.iter().zip(&vars) {
                    theta[j] = *s;
                }
            }
        }
        theta
    }
}
