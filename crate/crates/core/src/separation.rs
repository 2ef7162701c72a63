//! Distance lower bounds between `P(w1)` and the complement of `P(w2)`, the
//! Chapman-Robbins variance inequality, and a sampling harness that exercises them.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::PayoffMatrix;
use crate::info::{d2_divergence, tv_distance};
use crate::minentropy::polytope_vertices;
use crate::rational::{self, Rational};
use crate::rng::{self, Stream};

pub const D1_TOL: f64 = 1e-12;
pub const D2_TOL: f64 = 1e-9;
pub const MAX_ATTEMPTS: usize = 1_000_000;
const OUTWARD_STEP: f64 = 1e-6;

fn check_order(game: &PayoffMatrix, w1: &Rational, w2: &Rational) -> Result<()> {
    let w_star = game.w_star();
    if !(game.v() <= w2 && w2 <= w1 && w1 <= &w_star) {
        return Err(Error::Domain(format!(
            "need v <= w2 <= w1 <= w*, got v = {}, w2 = {}, w1 = {}, w* = {}",
            rational::format(game.v()),
            rational::format(w2),
            rational::format(w1),
            rational::format(&w_star)
        )));
    }
    Ok(())
}

/// `|w1 - w2| / (m_hi - m_lo)`, exact.
pub fn d1_separation_bound(game: &PayoffMatrix, w1: &Rational, w2: &Rational) -> Result<Rational> {
    check_order(game, w1, w2)?;
    let span = game.m_hi() - game.m_lo();
    if w1 == w2 {
        return Ok(rational::zero());
    }
    Ok((w1 - w2) / span)
}

/// `log2(1 + (w1-w2)^2 / ((w1-m_lo)(m_hi-w1)))`; `+inf` when `w1 = m_hi > w2`.
pub fn d2_separation_bound(game: &PayoffMatrix, w1: &Rational, w2: &Rational) -> Result<f64> {
    check_order(game, w1, w2)?;
    let ratio = variance_ratio(w1, w2, game.m_lo(), game.m_hi());
    Ok(ratio.map_or(f64::INFINITY, |r| rational::log2(&(rational::one() + r)).max(0.0)))
}

fn variance_ratio(w1: &Rational, w2: &Rational, m_lo: &Rational, m_hi: &Rational) -> Option<Rational> {
    let num = (w1 - w2) * (w1 - w2);
    if num == rational::zero() {
        return Some(rational::zero());
    }
    let den = (w1 - m_lo) * (m_hi - w1);
    if den == rational::zero() {
        None
    } else {
        Some(num / den)
    }
}

/// `(w1-w2)^2 / ((w1-m_lo)(m_hi-w1))`, the smallest `(E W - w2)^2 / Var W` over `W` in
/// `[m_lo, m_hi]` with mean at least `w1`. `+inf` on a vanishing denominator.
pub fn variance_ratio_bound(w1: &Rational, w2: &Rational, m_lo: &Rational, m_hi: &Rational) -> Result<f64> {
    if !(m_lo <= w2 && w2 < w1 && w1 <= m_hi) {
        return Err(Error::Domain("need m_lo <= w2 < w1 <= m_hi".into()));
    }
    Ok(variance_ratio(w1, w2, m_lo, m_hi).map_or(f64::INFINITY, |r| rational::to_f64(&r)))
}

/// `g(mu) = (mu - w2)^2 / ((m_hi - mu)(mu - m_lo))`.
pub fn g_mu(mu: f64, w2: f64, m_lo: f64, m_hi: f64) -> f64 {
    (mu - w2).powi(2) / ((m_hi - mu) * (mu - m_lo))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChapmanRobbins {
    pub chi2: f64,
    pub ratio: f64,
    pub gap: f64,
    /// `Var_q[W] = 0` while the two means differ.
    pub support_violation: bool,
}

/// `chi^2(p, q)` against `(E_q W - E_p W)^2 / Var_q W` where `W` takes value `x_i`.
pub fn chapman_robbins(p: &[f64], q: &[f64], x: &[f64]) -> Result<ChapmanRobbins> {
    Error::check_len(p.len(), q.len())?;
    Error::check_len(p.len(), x.len())?;
    let mut chi2 = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if b == 0.0 {
            if a > 0.0 {
                chi2 = f64::INFINITY;
            }
            continue;
        }
        chi2 += (a - b) * (a - b) / b;
    }
    let mean_q: f64 = q.iter().zip(x).map(|(a, b)| a * b).sum();
    let mean_p: f64 = p.iter().zip(x).map(|(a, b)| a * b).sum();
    let var_q: f64 = q.iter().zip(x).map(|(a, b)| a * (b - mean_q) * (b - mean_q)).sum();
    let diff2 = (mean_q - mean_p).powi(2);
    let (ratio, support_violation) = if var_q > 0.0 {
        (diff2 / var_q, false)
    } else if diff2 == 0.0 {
        (0.0, false)
    } else {
        (f64::INFINITY, true)
    };
    Ok(ChapmanRobbins {
        chi2,
        ratio,
        gap: chi2 - ratio,
        support_violation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationCheck {
    #[serde(with = "rational::serde_string")]
    pub w1: Rational,
    #[serde(with = "rational::serde_string")]
    pub w2: Rational,
    pub bound_d1: f64,
    pub bound_d2: f64,
    pub min_d1: f64,
    pub min_d2: f64,
    /// Pairs actually checked, including the deterministic vertex pairs.
    pub samples: usize,
    pub violations: usize,
    /// Rejection sampling ran out of attempts before reaching the requested count.
    pub partial: bool,
}

fn dirichlet<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

fn security(u: &[Vec<f64>], p: &[f64]) -> f64 {
    (0..u[0].len())
        .map(|j| p.iter().zip(u).map(|(pi, row)| pi * row[j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Moves a vertex slightly across each binding column facet, keeping it in the simplex.
fn outward(u: &[Vec<f64>], p: &[f64], w: f64) -> Vec<Vec<f64>> {
    let n = p.len();
    let mut out = Vec::new();
    for j in 0..u[0].len() {
        let pay: f64 = p.iter().zip(u).map(|(pi, row)| pi * row[j]).sum();
        if (pay - w).abs() > 1e-12 {
            continue;
        }
        let col: Vec<f64> = u.iter().map(|row| row[j]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let dir: Vec<f64> = col.iter().map(|c| c - mean).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let mut moved: Vec<f64> = p.iter().zip(&dir).map(|(pi, d)| (pi - OUTWARD_STEP * d / norm).max(0.0)).collect();
        let total: f64 = moved.iter().sum();
        moved.iter_mut().for_each(|m| *m /= total);
        out.push(moved);
    }
    out
}

/// Samples pairs `p` outside `P(w2)` and `q` inside `P(w1)` and checks both distance bounds.
///
/// Besides the random pairs, every vertex of `P(w1)` is paired with every vertex of `P(w2)`
/// pushed just outside its binding facets. Any violation aborts with the offending pair.
pub fn sample_check_separation(
    game: &PayoffMatrix,
    w1: &Rational,
    w2: &Rational,
    n_samples: usize,
    seed: u64,
) -> Result<SeparationCheck> {
    if n_samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let bound_d1 = rational::to_f64(&d1_separation_bound(game, w1, w2)?);
    let bound_d2 = d2_separation_bound(game, w1, w2)?;
    let u = game.to_f64();
    let n = game.rows();
    let (w1f, w2f) = (rational::to_f64(w1), rational::to_f64(w2));
    let inner: Vec<Vec<f64>> = polytope_vertices(game, w1)?.vertices.iter().map(|p| p.to_f64()).collect();
    let boundary: Vec<Vec<f64>> = polytope_vertices(game, w2)?
        .vertices
        .iter()
        .flat_map(|p| outward(&u, &p.to_f64(), w2f))
        .filter(|p| security(&u, p) < w2f)
        .collect();

    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for p in &boundary {
        for q in &inner {
            pairs.push((p.clone(), q.clone()));
        }
    }
    let mut rng = rng::stream(seed, Stream::Separation, 0);
    let mut attempts = 0usize;
    let mut partial = false;
    let mut drawn = 0;
    while drawn < n_samples {
        let p = loop {
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                break None;
            }
            let p = dirichlet(&mut rng, n);
            if security(&u, &p) < w2f {
                break Some(p);
            }
        };
        // P(w1) may be thin (a single point at w*), so q is a random mixture of its
        // vertices, or a rejection draw when one lands inside quickly.
        let q = {
            let mut found = None;
            for _ in 0..16 {
                attempts += 1;
                let cand = dirichlet(&mut rng, n);
                if security(&u, &cand) >= w1f {
                    found = Some(cand);
                    break;
                }
            }
            found.unwrap_or_else(|| {
                let mix = dirichlet(&mut rng, inner.len());
                (0..n).map(|i| inner.iter().zip(&mix).map(|(v, m)| v[i] * m).sum()).collect()
            })
        };
        let Some(p) = p else {
            partial = true;
            break;
        };
        pairs.push((p, q));
        drawn += 1;
    }

    let mut check = SeparationCheck {
        w1: w1.clone(),
        w2: w2.clone(),
        bound_d1,
        bound_d2,
        min_d1: f64::INFINITY,
        min_d2: f64::INFINITY,
        samples: pairs.len(),
        violations: 0,
        partial,
    };
    let mut diagnostics = Vec::new();
    for (p, q) in &pairs {
        let d1 = tv_distance(p, q)?;
        let d2 = d2_divergence(p, q)?;
        check.min_d1 = check.min_d1.min(d1);
        check.min_d2 = check.min_d2.min(d2);
        if d1 < bound_d1 - D1_TOL || d2 < bound_d2 - D2_TOL {
            check.violations += 1;
            if diagnostics.len() < 5 {
                diagnostics.push(format!("p = {p:?}, q = {q:?}, d1 = {d1}, d2 = {d2}"));
            }
        }
    }
    if check.violations > 0 {
        return Err(Error::Invariant(format!(
            "{} separation violations (bounds d1 >= {bound_d1}, d2 >= {bound_d2}): {}",
            check.violations,
            diagnostics.join("; ")
        )));
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minentropy::bounds_closed_form;
    use crate::rational::ratio;
    use proptest::prelude::*;

    fn mp() -> PayoffMatrix {
        PayoffMatrix::from_ints(&[&[1, 0], &[0, 1]]).unwrap()
    }

    fn u_ex() -> PayoffMatrix {
        PayoffMatrix::parse(&[&["-1", "1", "1"], &["1", "0.5", "1"], &["1", "1", "0.5"]]).unwrap()
    }

    #[test]
    fn d1_bounds() {
        assert_eq!(d1_separation_bound(&mp(), &ratio(1, 2), &ratio(1, 4)).unwrap(), ratio(1, 4));
        assert_eq!(d1_separation_bound(&mp(), &ratio(1, 4), &ratio(1, 4)).unwrap(), ratio(0, 1));
        assert_eq!(d1_separation_bound(&u_ex(), &ratio(7, 9), &ratio(1, 2)).unwrap(), ratio(5, 36));
        assert!(d1_separation_bound(&mp(), &ratio(1, 4), &ratio(1, 2)).is_err());
    }

    #[test]
    fn d2_bounds() {
        let d = d2_separation_bound(&mp(), &ratio(1, 2), &ratio(1, 4)).unwrap();
        assert!((d - 1.25f64.log2()).abs() < 1e-12);
        assert_eq!(d2_separation_bound(&mp(), &ratio(1, 3), &ratio(1, 3)).unwrap(), 0.0);
        let d = d2_separation_bound(&u_ex(), &ratio(3, 4), &ratio(1, 2)).unwrap();
        assert!((d - (8.0f64 / 7.0).log2()).abs() < 1e-12);
    }

    #[test]
    fn d2_bound_at_v_is_g2() {
        for g in [mp(), u_ex()] {
            let v = g.v().clone();
            for k in 0..=6 {
                let w = &v + (g.w_star() - &v) * ratio(k, 6);
                let d2 = d2_separation_bound(&g, &w, &v).unwrap();
                assert_eq!(d2, bounds_closed_form(&g, &w).unwrap().g2);
            }
        }
    }

    #[test]
    fn chapman_robbins_examples() {
        let (p, q) = ([0.5, 0.5], [0.25, 0.75]);
        let c = chapman_robbins(&p, &q, &[1.0, -1.0 / 3.0]).unwrap();
        assert!((c.chi2 - 1.0 / 3.0).abs() < 1e-12);
        assert!((c.ratio - 1.0 / 3.0).abs() < 1e-12);
        assert!(c.gap.abs() < 1e-12);
        let c = chapman_robbins(&p, &p, &[3.0, -2.0]).unwrap();
        assert_eq!((c.chi2, c.ratio), (0.0, 0.0));
        let c = chapman_robbins(&p, &q, &[1.0, 0.0]).unwrap();
        let by_hand = (0.25f64 - 0.5).powi(2) / (0.25 * 0.75);
        assert!((c.ratio - by_hand).abs() < 1e-12);
        assert!(c.ratio <= c.chi2 + 1e-12);
        let c = chapman_robbins(&[0.5, 0.5], &[1.0, 0.0], &[1.0, 2.0]).unwrap();
        assert!(c.support_violation);
    }

    #[test]
    fn variance_ratio_examples() {
        let r = variance_ratio_bound(&ratio(1, 2), &ratio(1, 4), &ratio(0, 1), &ratio(1, 1)).unwrap();
        assert!((r - 0.25).abs() < 1e-15);
        assert!(variance_ratio_bound(&ratio(1, 4), &ratio(1, 4), &ratio(0, 1), &ratio(1, 1)).is_err());
        // The two-point variable on {m_lo, m_hi} with mean w1 attains the bound.
        let (w1, w2, lo, hi): (f64, f64, f64, f64) = (0.6, 0.2, -1.0, 2.0);
        let t = (w1 - lo) / (hi - lo);
        let var = t * (hi - w1).powi(2) + (1.0 - t) * (lo - w1).powi(2);
        let attained = (w1 - w2).powi(2) / var;
        let bound = variance_ratio_bound(&ratio(3, 5), &ratio(1, 5), &ratio(-1, 1), &ratio(2, 1)).unwrap();
        assert!((attained - bound).abs() < 1e-12);
        assert!((g_mu(w1, w2, lo, hi) - bound).abs() < 1e-12);
    }

    #[test]
    fn harness_examples() {
        let c = sample_check_separation(&mp(), &ratio(1, 2), &ratio(1, 4), 1000, 7).unwrap();
        assert_eq!(c.violations, 0);
        assert!(c.min_d1 >= c.bound_d1 - D1_TOL);
        let c = sample_check_separation(&mp(), &ratio(1, 3), &ratio(1, 3), 100, 7).unwrap();
        assert_eq!((c.bound_d1, c.bound_d2, c.violations), (0.0, 0.0, 0));
        let c = sample_check_separation(&u_ex(), &ratio(3, 4), &ratio(3, 5), 1000, 7).unwrap();
        assert_eq!(c.violations, 0);
        assert!(c.min_d2 >= c.bound_d2 - D2_TOL);
        let json = serde_json::to_value(&c).unwrap();
        for key in ["w1", "w2", "bound_d1", "bound_d2", "min_d1", "min_d2", "samples", "violations"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    proptest! {
        #[test]
        fn chapman_robbins_gap(p in prop::collection::vec(0.01f64..1.0, 4),
                               q in prop::collection::vec(0.01f64..1.0, 4),
                               x in prop::collection::vec(-3.0f64..3.0, 4)) {
            let norm = |v: Vec<f64>| { let s: f64 = v.iter().sum(); v.into_iter().map(|a| a / s).collect::<Vec<_>>() };
            let (p, q) = (norm(p), norm(q));
            let c = chapman_robbins(&p, &q, &x).unwrap();
            prop_assert!(c.gap >= -1e-10);
            let eq: Vec<f64> = p.iter().zip(&q).map(|(a, b)| (a - b) / b).collect();
            prop_assert!(chapman_robbins(&p, &q, &eq).unwrap().gap.abs() <= 1e-10);
        }

        #[test]
        fn g_is_nondecreasing_above_w2(lo in -5.0f64..0.0, span in 0.5f64..5.0, a in 0.0f64..1.0) {
            let hi = lo + span;
            let w2 = lo + a * span * 0.9;
            let steps = 100;
            let mut last = g_mu(w2, w2, lo, hi);
            for k in 1..steps {
                let mu = w2 + (hi - w2) * k as f64 / steps as f64;
                let g = g_mu(mu, w2, lo, hi);
                prop_assert!(g >= last - 1e-12);
                last = g;
            }
        }
    }
}
