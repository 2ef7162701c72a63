//! Information measures on finite distributions.
//!
//! Masses are exact rationals where they come from user input; entropies and
//! divergences are evaluated in `f64`.

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

/// A joint pmf `p(x, y)` stored row-major by `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPmf {
    exact: Vec<Vec<Rational>>,
    table: Vec<Vec<f64>>,
    px: Vec<f64>,
    py: Vec<f64>,
}

impl JointPmf {
    pub fn new(exact: Vec<Vec<Rational>>) -> Result<Self> {
        if exact.is_empty() || exact[0].is_empty() {
            return Err(Error::Validation("joint pmf must have at least one cell".into()));
        }
        let ny = exact[0].len();
        for (x, row) in exact.iter().enumerate() {
            if row.len() != ny {
                return Err(Error::Validation(format!(
                    "ragged joint pmf: row x={} has {} entries, expected {ny}",
                    x + 1,
                    row.len()
                )));
            }
            if let Some(y) = row.iter().position(|p| p.is_negative()) {
                return Err(Error::Validation(format!(
                    "negative mass at (x={}, y={})",
                    x + 1,
                    y + 1
                )));
            }
        }
        let total: Rational = exact.iter().flatten().sum();
        if total != rational::one() {
            return Err(Error::Validation(format!(
                "joint pmf sums to {} instead of 1",
                rational::format(&total)
            )));
        }
        let table: Vec<Vec<f64>> = exact
            .iter()
            .map(|row| row.iter().map(rational::to_f64).collect())
            .collect();
        let px = table.iter().map(|row| row.iter().sum()).collect();
        let py = (0..ny).map(|y| table.iter().map(|row| row[y]).sum()).collect();
        Ok(JointPmf {
            exact,
            table,
            px,
            py,
        })
    }

    pub fn parse(rows: &[&[&str]]) -> Result<Self> {
        Self::new(
            rows.iter()
                .map(|r| r.iter().map(|s| rational::parse(s)).collect::<Result<Vec<_>>>())
                .collect::<Result<_>>()?,
        )
    }

    /// `X` with the given marginal and a constant `Y`.
    pub fn without_side_info(px: &[Rational]) -> Result<Self> {
        Self::new(px.iter().map(|p| vec![p.clone()]).collect())
    }

    /// Binary `X ~ Bern(q)` observed by Bob with probability `alpha`; `Y` is `X` or a null symbol (last column).
    pub fn leak(q: &Rational, alpha: &Rational) -> Result<Self> {
        let one = rational::one();
        let p0 = &one - q;
        let hidden = &one - alpha;
        Self::new(vec![
            vec![&p0 * alpha, rational::zero(), &p0 * &hidden],
            vec![rational::zero(), q * alpha, q * &hidden],
        ])
    }

    pub fn nx(&self) -> usize {
        self.table.len()
    }

    pub fn ny(&self) -> usize {
        self.table[0].len()
    }

    pub fn exact(&self) -> &[Vec<Rational>] {
        &self.exact
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    pub fn p(&self, x: usize, y: usize) -> f64 {
        self.table[x][y]
    }

    pub fn px(&self) -> &[f64] {
        &self.px
    }

    pub fn py(&self) -> &[f64] {
        &self.py
    }

    pub fn exact_px(&self) -> Vec<Rational> {
        self.exact.iter().map(|row| row.iter().sum()).collect()
    }

    /// Number of cells with positive mass.
    pub fn support_size(&self) -> usize {
        self.exact.iter().flatten().filter(|p| !p.is_zero()).count()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.table.iter().flatten().copied().collect()
    }
}

pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum()
}

/// Binary entropy `h(q)`.
pub fn binary_entropy(q: f64) -> f64 {
    entropy(&[q, 1.0 - q])
}

pub fn conditional_entropy(j: &JointPmf) -> f64 {
    entropy(&j.flat()) - entropy(j.py())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RenyiOrder {
    Finite(f64),
    Infinity,
}

pub fn renyi_entropy(p: &[f64], order: RenyiOrder) -> Result<f64> {
    match order {
        RenyiOrder::Infinity => Ok(-p.iter().cloned().fold(0.0, f64::max).log2()),
        RenyiOrder::Finite(a) if a > 0.0 && a != 1.0 && a.is_finite() => {
            let s: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| x.powf(a)).sum();
            Ok(s.log2() / (1.0 - a))
        }
        RenyiOrder::Finite(a) => Err(Error::Domain(format!(
            "Renyi order must be positive and different from 1, got {a}"
        ))),
    }
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    Error::check_len(p.len(), q.len())?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Exact total variation distance between rational vectors.
pub fn tv_distance_exact(p: &[Rational], q: &[Rational]) -> Result<Rational> {
    Error::check_len(p.len(), q.len())?;
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<Rational>() / rational::int(2))
}

/// `log2 sum p_i^2 / q_i`, with `0/0 = 0` and `x/0 = inf`.
pub fn d2_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    Error::check_len(p.len(), q.len())?;
    if p == q {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(f64::INFINITY);
        }
        s += a * a / b;
    }
    Ok(s.log2().max(0.0))
}

/// `H2(p_XY | q_Y) = -log2 sum p(x,y)^2 / q(y)`.
pub fn collision_entropy_cond(j: &JointPmf, qy: &[f64]) -> Result<f64> {
    Error::check_len(j.ny(), qy.len())?;
    let mut s = 0.0;
    for row in j.table() {
        for (&p, &q) in row.iter().zip(qy) {
            if p == 0.0 {
                continue;
            }
            if q == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            s += p * p / q;
        }
    }
    Ok(-s.log2())
}

/// The reference `q_Y` maximizing `H2(p_XY | q_Y)`: proportional to `sqrt(sum_x p(x,y)^2)`.
pub fn optimal_collision_reference(j: &JointPmf) -> Vec<f64> {
    let norms: Vec<f64> = (0..j.ny())
        .map(|y| j.table().iter().map(|row| row[y] * row[y]).sum::<f64>().sqrt())
        .collect();
    let total: f64 = norms.iter().sum();
    norms.into_iter().map(|r| r / total).collect()
}

/// `H2(p_XY | Y)`, the maximum over `q_Y`, in closed form `-2 log2 sum_y sqrt(sum_x p(x,y)^2)`.
pub fn collision_entropy_given_y(j: &JointPmf) -> f64 {
    let s: f64 = (0..j.ny())
        .map(|y| j.table().iter().map(|row| row[y] * row[y]).sum::<f64>().sqrt())
        .sum();
    -2.0 * s.log2()
}

/// Typical-set lower bound on the smooth collision entropy of `n` i.i.d. copies.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct TypicalBound {
    /// `max(0, n (H(X|Y) - eps))` in bits.
    pub bits: f64,
    /// Mass outside the conditionally typical set, exact or a Chebyshev upper bound.
    pub atypical_mass: f64,
    pub method: TypicalMethod,
    pub certified: bool,
    pub vacuous: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TypicalMethod {
    Enumeration,
    Chebyshev,
}

pub const TYPICAL_ENUMERATION_CAP: f64 = 4_194_304.0; // 2^22 sequence pairs

pub fn typical_collision_bound(j: &JointPmf, n: usize, eps: f64) -> Result<TypicalBound> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if n == 0 {
        return Err(Error::Domain("block length must be at least 1".into()));
    }
    let h = conditional_entropy(j);
    let raw = n as f64 * (h - eps);
    // Per-symbol self-information -log2 p(x|y) over the support.
    let mut cells = Vec::new();
    for row in j.table() {
        for (y, &p) in row.iter().enumerate() {
            if p > 0.0 {
                cells.push((p, -(p / j.py()[y]).log2()));
            }
        }
    }
    let pairs = (j.nx() as f64 * j.ny() as f64).powi(n as i32);
    let (atypical_mass, method) = if pairs <= TYPICAL_ENUMERATION_CAP {
        // The average self-information depends only on how often each cell occurs,
        // so walk cell-count compositions instead of individual sequences.
        (atypical_mass_by_types(&cells, n, h, eps), TypicalMethod::Enumeration)
    } else {
        let var: f64 = cells.iter().map(|&(p, s)| p * (s - h) * (s - h)).sum();
        ((var / (n as f64 * eps * eps)).min(1.0), TypicalMethod::Chebyshev)
    };
    Ok(TypicalBound {
        bits: raw.max(0.0),
        atypical_mass,
        method,
        certified: atypical_mass <= eps,
        vacuous: raw <= 0.0,
    })
}

fn atypical_mass_by_types(cells: &[(f64, f64)], n: usize, h: f64, eps: f64) -> f64 {
    // Multinomial recursion over cells: mass of compositions with |mean - h| > eps.
    fn walk(
        cells: &[(f64, f64)],
        k: usize,
        left: usize,
        log_mass: f64,
        info: f64,
        n: usize,
        h: f64,
        eps: f64,
        lgam: &[f64],
    ) -> f64 {
        let (p, s) = cells[k];
        if k + 1 == cells.len() {
            let c = left;
            let lm = log_mass + c as f64 * p.ln() - lgam[c];
            let mean = (info + c as f64 * s) / n as f64;
            return if (mean - h).abs() > eps + 1e-12 { lm.exp() } else { 0.0 };
        }
        let mut total = 0.0;
        for c in 0..=left {
            let lm = log_mass + c as f64 * p.ln() - lgam[c];
            total += walk(cells, k + 1, left - c, lm, info + c as f64 * s, n, h, eps, lgam);
        }
        total
    }
    let mut lgam = vec![0.0; n + 1];
    for i in 1..=n {
        lgam[i] = lgam[i - 1] + (i as f64).ln();
    }
    walk(cells, 0, n, lgam[n], 0.0, n, h, eps, &lgam).min(1.0)
}
