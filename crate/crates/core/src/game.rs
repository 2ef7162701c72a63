//! Payoff matrices, mixed strategies and security levels.

use std::fmt;
use std::sync::OnceLock;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LpSolution};
use crate::rational::{self, Rational};

/// A finite probability vector with exact rational entries summing to one.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ProbVector(Vec<Rational>);

impl ProbVector {
    pub fn new(probs: Vec<Rational>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Validation("empty probability vector".into()));
        }
        if let Some(i) = probs.iter().position(|p| p.is_negative()) {
            return Err(Error::Validation(format!(
                "negative probability {} at index {}",
                rational::format(&probs[i]),
                i + 1
            )));
        }
        let total: Rational = probs.iter().sum();
        if total != rational::one() {
            return Err(Error::Validation(format!(
                "probabilities sum to {} instead of 1",
                rational::format(&total)
            )));
        }
        Ok(ProbVector(probs))
    }

    /// Parses entries such as `"1/3"` or `"0.25"`.
    pub fn parse(entries: &[&str]) -> Result<Self> {
        Self::new(entries.iter().map(|s| rational::parse(s)).collect::<Result<_>>()?)
    }

    pub fn uniform(k: usize) -> Self {
        ProbVector(vec![rational::ratio(1, k as i64); k])
    }

    /// The deterministic vector `e_i`.
    pub fn point(k: usize, i: usize) -> Self {
        let mut probs = vec![rational::zero(); k];
        probs[i] = rational::one();
        ProbVector(probs)
    }

    pub fn probs(&self) -> &[Rational] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(rational::to_f64).collect()
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        self.0
            .iter()
            .filter(|p| !p.is_zero())
            .map(|p| -rational::to_f64(p) * rational::log2(p))
            .sum()
    }

    pub fn is_deterministic(&self) -> bool {
        self.0.iter().any(|p| *p == rational::one())
    }
}

impl TryFrom<Vec<String>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        ProbVector::new(v.iter().map(|s| rational::parse(s)).collect::<Result<_>>()?)
    }
}

impl From<ProbVector> for Vec<String> {
    fn from(p: ProbVector) -> Self {
        p.0.iter().map(rational::format).collect()
    }
}

impl fmt::Display for ProbVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(rational::format).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Alice's payoff table `U`, rows are Alice's actions and columns Bob's.
#[derive(Clone, Debug)]
pub struct PayoffMatrix {
    entries: Vec<Vec<Rational>>,
    m_lo: Rational,
    m_hi: Rational,
    v: Rational,
    value: OnceLock<LpSolution>,
}

impl PartialEq for PayoffMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Eq for PayoffMatrix {}

impl PayoffMatrix {
    /// Validates a rectangular, non-empty grid and caches `m_lo`, `m_hi` and `v`.
    pub fn new(entries: Vec<Vec<Rational>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Validation("payoff matrix has no rows".into()));
        }
        let cols = entries[0].len();
        if cols == 0 {
            return Err(Error::Validation("payoff matrix row 1 is empty".into()));
        }
        for (i, row) in entries.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Validation(format!(
                    "ragged payoff matrix: row {} has {} entries, row 1 has {}",
                    i + 1,
                    row.len(),
                    cols
                )));
            }
        }
        let m_lo = entries.iter().flatten().min().cloned().unwrap();
        let m_hi = entries.iter().flatten().max().cloned().unwrap();
        let v = entries
            .iter()
            .map(|row| row.iter().min().cloned().unwrap())
            .max()
            .unwrap();
        Ok(PayoffMatrix {
            entries,
            m_lo,
            m_hi,
            v,
            value: OnceLock::new(),
        })
    }

    pub fn from_ints(rows: &[&[i64]]) -> Result<Self> {
        Self::new(
            rows.iter()
                .map(|r| r.iter().map(|&x| rational::int(x)).collect())
                .collect(),
        )
    }

    /// Cells may be integers, decimals or `p/q`.
    pub fn parse(rows: &[&[&str]]) -> Result<Self> {
        let mut grid = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let mut parsed = Vec::with_capacity(row.len());
            for (j, cell) in row.iter().enumerate() {
                parsed.push(rational::parse(cell).map_err(|e| {
                    Error::Validation(format!("cell ({}, {}): {e}", i + 1, j + 1))
                })?);
            }
            grid.push(parsed);
        }
        Self::new(grid)
    }

    /// Float grid, converted through shortest decimal form. Non-finite cells are rejected by position.
    pub fn from_f64_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let mut grid = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let mut parsed = Vec::with_capacity(row.len());
            for (j, &x) in row.iter().enumerate() {
                parsed.push(rational::from_f64(x).map_err(|_| {
                    Error::Validation(format!("non-finite entry {x} at cell ({}, {})", i + 1, j + 1))
                })?);
            }
            grid.push(parsed);
        }
        Self::new(grid)
    }

    pub fn rows(&self) -> usize {
        self.entries.len()
    }

    pub fn cols(&self) -> usize {
        self.entries[0].len()
    }

    pub fn entry(&self, i: usize, j: usize) -> &Rational {
        &self.entries[i][j]
    }

    pub fn entries(&self) -> &[Vec<Rational>] {
        &self.entries
    }

    pub fn m_lo(&self) -> &Rational {
        &self.m_lo
    }

    pub fn m_hi(&self) -> &Rational {
        &self.m_hi
    }

    /// Pure-strategy security level `max_i min_j u_ij`.
    pub fn v(&self) -> &Rational {
        &self.v
    }

    /// Lowest-index row attaining `v`.
    pub fn maximin_row(&self) -> usize {
        self.entries
            .iter()
            .position(|row| row.iter().min() == Some(&self.v))
            .unwrap()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> Rational {
        std::cmp::max(self.m_lo.abs(), self.m_hi.abs())
    }

    /// Solution of the maximin linear program, computed once.
    pub fn value(&self) -> &LpSolution {
        self.value.get_or_init(|| lp::game_value(self))
    }

    /// The game value `w*`.
    pub fn w_star(&self) -> Rational {
        self.value().optimum.clone().expect("finite games always have a value")
    }

    pub fn nash(&self) -> ProbVector {
        self.value().argmax.clone().expect("finite games always have a value")
    }

    /// Expected payoff of every column under `p`.
    pub fn column_payoffs(&self, p: &ProbVector) -> Result<Vec<Rational>> {
        Error::check_len(self.rows(), p.len())?;
        Ok((0..self.cols())
            .map(|j| {
                self.entries
                    .iter()
                    .zip(p.probs())
                    .filter(|(_, pi)| !pi.is_zero())
                    .map(|(row, pi)| &row[j] * pi)
                    .sum()
            })
            .collect())
    }

    /// `K(p) = min_j sum_i p_i u_ij`.
    pub fn security_level(&self, p: &ProbVector) -> Result<Rational> {
        Ok(self.column_payoffs(p)?.into_iter().min().unwrap())
    }

    /// Whether `p` guarantees at least `w`.
    pub fn in_polytope(&self, w: &Rational, p: &ProbVector) -> Result<bool> {
        Ok(&self.security_level(p)? >= w)
    }

    /// Entry `u1[i1][j1] + u2[i2][j2]` at row `(i1, i2)` and column `(j1, j2)`, second index fastest.
    pub fn direct_sum(&self, other: &PayoffMatrix) -> PayoffMatrix {
        let mut grid = Vec::with_capacity(self.rows() * other.rows());
        for r1 in &self.entries {
            for r2 in &other.entries {
                let mut row = Vec::with_capacity(r1.len() * r2.len());
                for a in r1 {
                    for b in r2 {
                        row.push(a + b);
                    }
                }
                grid.push(row);
            }
        }
        PayoffMatrix::new(grid).expect("direct sum of valid games is valid")
    }

    /// `U + a 1^T`: adds `a_i` to every entry of row `i`.
    pub fn with_row_incentives(&self, a: &[Rational]) -> Result<PayoffMatrix> {
        Error::check_len(self.rows(), a.len())?;
        PayoffMatrix::new(
            self.entries
                .iter()
                .zip(a)
                .map(|(row, ai)| row.iter().map(|x| x + ai).collect())
                .collect(),
        )
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|row| row.iter().map(rational::to_f64).collect())
            .collect()
    }
}

/// Builds a validated game from a raw grid.
pub fn validate_game(raw: Vec<Vec<Rational>>) -> Result<PayoffMatrix> {
    PayoffMatrix::new(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn mp() -> PayoffMatrix {
        PayoffMatrix::from_ints(&[&[1, 0], &[0, 1]]).unwrap()
    }

    fn u_ex() -> PayoffMatrix {
        PayoffMatrix::parse(&[&["-1", "1", "1"], &["1", "0.5", "1"], &["1", "1", "0.5"]]).unwrap()
    }

    #[test]
    fn cached_parameters() {
        let g = mp();
        assert_eq!((g.m_lo(), g.m_hi(), g.v()), (&int(0), &int(1), &int(0)));
        let g = u_ex();
        assert_eq!((g.m_lo(), g.m_hi(), g.v()), (&int(-1), &int(1), &ratio(1, 2)));
        let g = PayoffMatrix::from_ints(&[&[3], &[5]]).unwrap();
        assert_eq!((g.m_lo(), g.m_hi(), g.v()), (&int(3), &int(5), &int(5)));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(PayoffMatrix::new(vec![]).is_err());
        assert!(PayoffMatrix::new(vec![vec![]]).is_err());
        let err = PayoffMatrix::from_ints(&[&[1, 2], &[3]]).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        let err = PayoffMatrix::from_f64_rows(&[vec![1.0, f64::NAN]]).unwrap_err();
        assert!(err.to_string().contains("(1, 2)"), "{err}");
    }

    #[test]
    fn security_levels() {
        let g = mp();
        assert_eq!(g.security_level(&ProbVector::uniform(2)).unwrap(), ratio(1, 2));
        assert_eq!(g.security_level(&ProbVector::point(2, 0)).unwrap(), int(0));
        let p = ProbVector::parse(&["1/9", "4/9", "4/9"]).unwrap();
        assert_eq!(u_ex().security_level(&p).unwrap(), ratio(7, 9));
        assert!(g.security_level(&ProbVector::uniform(3)).is_err());
    }

    #[test]
    fn polytope_membership() {
        let g = mp();
        let half = ratio(1, 2);
        assert!(g.in_polytope(&half, &ProbVector::uniform(2)).unwrap());
        let p = ProbVector::parse(&["0.6", "0.4"]).unwrap();
        assert!(!g.in_polytope(&half, &p).unwrap());
        let p = ProbVector::parse(&["1/9", "4/9", "4/9"]).unwrap();
        assert!(u_ex().in_polytope(&ratio(7, 9), &p).unwrap());
    }

    #[test]
    fn direct_sums() {
        let s = mp().direct_sum(&mp());
        let expected =
            PayoffMatrix::from_ints(&[&[2, 1, 1, 0], &[1, 2, 0, 1], &[1, 0, 2, 1], &[0, 1, 1, 2]])
                .unwrap();
        assert_eq!(s, expected);
        let c = PayoffMatrix::from_ints(&[&[5]]).unwrap();
        let shifted = u_ex().direct_sum(&c);
        let by_hand = u_ex().with_row_incentives(&[int(5), int(5), int(5)]).unwrap();
        assert_eq!(shifted, by_hand);
        let sum = u_ex().direct_sum(&mp());
        assert_eq!(sum.m_lo(), &int(-1));
        assert_eq!(sum.m_hi(), &int(2));
        assert_eq!(sum.v(), &ratio(1, 2));
    }

    #[test]
    fn probvector_validation() {
        assert!(ProbVector::parse(&["0.5", "0.6"]).is_err());
        assert!(ProbVector::parse(&["1.5", "-0.5"]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
        let p = ProbVector::parse(&["0.25", "0.75"]).unwrap();
        assert!((p.entropy() - 0.811_278_124_459_132_9).abs() < 1e-12);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"["1/4","3/4"]"#);
        let back: ProbVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
