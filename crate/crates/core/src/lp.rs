//! Exact linear programming over rationals.
//!
//! A dense two-phase tableau simplex with Bland's rule solves small programs
//! `maximize c.x  s.t.  rows (<=, >=, =),  x >= 0` without rounding. Game values,
//! maximin strategies and linear functionals over `P_U(w)` are built on top.

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::game::{PayoffMatrix, ProbVector};
use crate::rational::{self, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    fn flipped(self) -> Self {
        match self {
            Relation::Le => Relation::Ge,
            Relation::Ge => Relation::Le,
            Relation::Eq => Relation::Eq,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<Rational>,
    pub relation: Relation,
    pub rhs: Rational,
}

/// `maximize objective.x` subject to the constraints and `x >= 0`.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub objective: Vec<Rational>,
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SimplexOutcome {
    Optimal { value: Rational, x: Vec<Rational> },
    Infeasible,
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Feasible,
    Infeasible,
    Unbounded,
}

/// Optimum and maximizing mixed strategy of a game-shaped program.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub optimum: Option<Rational>,
    pub argmax: Option<ProbVector>,
}

impl LpSolution {
    fn infeasible() -> Self {
        LpSolution {
            status: LpStatus::Infeasible,
            optimum: None,
            argmax: None,
        }
    }
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let inv = self.rows[r][c].recip();
        for x in self.rows[r].iter_mut() {
            if !x.is_zero() {
                *x *= &inv;
            }
        }
        let pivot_row = self.rows[r].clone();
        for (k, row) in self.rows.iter_mut().enumerate() {
            if k == r || row[c].is_zero() {
                continue;
            }
            let factor = row[c].clone();
            for (x, p) in row.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *x -= &factor * p;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Runs Bland's-rule simplex maximizing `cost`; only columns `< allowed` may enter.
    /// Returns false on unboundedness.
    fn optimize(&mut self, cost: &[Rational], allowed: usize) -> bool {
        let rhs = self.width;
        loop {
            let mut entering = None;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut reduced = cost[j].clone();
                for (row, &b) in self.rows.iter().zip(&self.basis) {
                    if !row[j].is_zero() && !cost[b].is_zero() {
                        reduced -= &cost[b] * &row[j];
                    }
                }
                if reduced.is_positive() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return true };
            let mut leaving: Option<(usize, Rational)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if !row[c].is_positive() {
                    continue;
                }
                let ratio = &row[rhs] / &row[c];
                let better = match &leaving {
                    None => true,
                    Some((lr, best)) => {
                        ratio < *best || (ratio == *best && self.basis[r] < self.basis[*lr])
                    }
                };
                if better {
                    leaving = Some((r, ratio));
                }
            }
            match leaving {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }

    fn objective(&self, cost: &[Rational]) -> Rational {
        self.rows
            .iter()
            .zip(&self.basis)
            .map(|(row, &b)| &cost[b] * &row[self.width])
            .sum()
    }
}

impl LinearProgram {
    pub fn solve(&self) -> SimplexOutcome {
        let n = self.objective.len();
        let rows: Vec<Constraint> = self
            .constraints
            .iter()
            .map(|c| {
                debug_assert_eq!(c.coeffs.len(), n);
                if c.rhs.is_negative() {
                    Constraint {
                        coeffs: c.coeffs.iter().map(|x| -x).collect(),
                        relation: c.relation.flipped(),
                        rhs: -&c.rhs,
                    }
                } else {
                    c.clone()
                }
            })
            .collect();
        let m = rows.len();
        let n_slack = rows.iter().filter(|c| c.relation != Relation::Eq).count();
        let n_art = rows.iter().filter(|c| c.relation != Relation::Le).count();
        let width = n + n_slack + n_art;
        let mut tab = Tableau {
            rows: Vec::with_capacity(m),
            basis: Vec::with_capacity(m),
            width,
        };
        let (mut s, mut a) = (n, n + n_slack);
        for c in &rows {
            let mut row = vec![rational::zero(); width + 1];
            row[..n].clone_from_slice(&c.coeffs);
            row[width] = c.rhs.clone();
            match c.relation {
                Relation::Le => {
                    row[s] = rational::one();
                    tab.basis.push(s);
                    s += 1;
                }
                Relation::Ge => {
                    row[s] = -rational::one();
                    row[a] = rational::one();
                    tab.basis.push(a);
                    s += 1;
                    a += 1;
                }
                Relation::Eq => {
                    row[a] = rational::one();
                    tab.basis.push(a);
                    a += 1;
                }
            }
            tab.rows.push(row);
        }

        let first_art = n + n_slack;
        if n_art > 0 {
            let mut phase1 = vec![rational::zero(); width];
            for c in phase1.iter_mut().skip(first_art) {
                *c = -rational::one();
            }
            tab.optimize(&phase1, width);
            if tab.objective(&phase1).is_negative() {
                return SimplexOutcome::Infeasible;
            }
            // Drive remaining zero-level artificials out of the basis; drop redundant rows.
            let mut r = 0;
            while r < tab.rows.len() {
                if tab.basis[r] >= first_art {
                    match (0..first_art).find(|&j| !tab.rows[r][j].is_zero()) {
                        Some(j) => tab.pivot(r, j),
                        None => {
                            tab.rows.remove(r);
                            tab.basis.remove(r);
                            continue;
                        }
                    }
                }
                r += 1;
            }
        }

        let mut cost = vec![rational::zero(); width];
        cost[..n].clone_from_slice(&self.objective);
        if !tab.optimize(&cost, first_art) {
            return SimplexOutcome::Unbounded;
        }
        let mut x = vec![rational::zero(); n];
        for (row, &b) in tab.rows.iter().zip(&tab.basis) {
            if b < n {
                x[b] = row[width].clone();
            }
        }
        SimplexOutcome::Optimal {
            value: tab.objective(&cost),
            x,
        }
    }
}

/// Maximin program: variables `p_1..p_n, t` with `t = w - m_lo >= 0`.
pub fn game_value(game: &PayoffMatrix) -> LpSolution {
    let n = game.rows();
    let m_lo = game.m_lo();
    let mut constraints = Vec::with_capacity(game.cols() + 1);
    for j in 0..game.cols() {
        let mut coeffs: Vec<Rational> = (0..n).map(|i| game.entry(i, j) - m_lo).collect();
        coeffs.push(-rational::one());
        constraints.push(Constraint {
            coeffs,
            relation: Relation::Ge,
            rhs: rational::zero(),
        });
    }
    let mut simplex_row = vec![rational::one(); n];
    simplex_row.push(rational::zero());
    constraints.push(Constraint {
        coeffs: simplex_row,
        relation: Relation::Eq,
        rhs: rational::one(),
    });
    let mut objective = vec![rational::zero(); n];
    objective.push(rational::one());
    match (LinearProgram {
        objective,
        constraints,
    })
    .solve()
    {
        SimplexOutcome::Optimal { value, mut x } => {
            x.pop();
            LpSolution {
                status: LpStatus::Feasible,
                optimum: Some(value + m_lo),
                argmax: Some(ProbVector::new(x).expect("simplex solution is a pmf")),
            }
        }
        other => unreachable!("maximin program is feasible and bounded: {other:?}"),
    }
}

/// `Val(U + a 1^T)`, the value of the game with row incentives `a`.
pub fn incentive_value(game: &PayoffMatrix, a: &[Rational]) -> Result<Rational> {
    let shifted = game.with_row_incentives(a)?;
    Ok(shifted.w_star())
}

/// Maximizes `sum_i a_i p_i` over `P_U(w)`; infeasible exactly when `w > w*`.
pub fn max_linear_over_polytope(
    game: &PayoffMatrix,
    w: &Rational,
    a: &[Rational],
) -> Result<LpSolution> {
    Error::check_len(game.rows(), a.len())?;
    let n = game.rows();
    let mut constraints: Vec<Constraint> = (0..game.cols())
        .map(|j| Constraint {
            coeffs: (0..n).map(|i| game.entry(i, j).clone()).collect(),
            relation: Relation::Ge,
            rhs: w.clone(),
        })
        .collect();
    constraints.push(Constraint {
        coeffs: vec![rational::one(); n],
        relation: Relation::Eq,
        rhs: rational::one(),
    });
    Ok(
        match (LinearProgram {
            objective: a.to_vec(),
            constraints,
        })
        .solve()
        {
            SimplexOutcome::Optimal { value, x } => LpSolution {
                status: LpStatus::Feasible,
                optimum: Some(value),
                argmax: Some(ProbVector::new(x).expect("simplex solution is a pmf")),
            },
            SimplexOutcome::Infeasible => LpSolution::infeasible(),
            SimplexOutcome::Unbounded => unreachable!("the simplex is bounded"),
        },
    )
}

/// The basis vector `e_i` as a rational incentive vector.
pub fn unit(n: usize, i: usize) -> Vec<Rational> {
    ProbVector::point(n, i).probs().to_vec()
}
