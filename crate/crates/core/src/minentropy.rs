//! The min-entropy function `F(w)`, its inverse curves and the bound families.
//!
//! `F(w)` is the least Shannon entropy of a strategy in
//! `P(w) = { p : sum_i p_i u_ij >= w for every column j }`. Entropy is concave, so the
//! minimum sits at a vertex; vertices are enumerated exactly by active-set search.
//!
//! | quantity | meaning |
//! |----------|---------|
//! | `G1`     | `-log2` of the largest single-action probability over `P(w)` |
//! | `G2`     | `log2(1 + (w-v)^2 / ((w-m_lo)(m_hi-w)))` |
//! | `G3`     | `-log2(1 - (w-v)/(m_hi-m_lo))` |
//! | `G4`     | entropy of the flattest table compatible with `m_hi` |
//! | `Q1..Q3` | entropies of explicit feasible strategies |

use std::collections::HashSet;

use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{PayoffMatrix, ProbVector};
use crate::info::binary_entropy;
use crate::lp::{self, LpStatus};
use crate::rational::{self, Rational};

pub const MAX_ROWS: usize = 10;
pub const MAX_SUBSETS: u128 = 2_000_000;
pub const DEFAULT_GRID: usize = 129;
/// Tolerance for float comparisons between entropy curves.
pub const SANDWICH_TOL: f64 = 1e-9;

/// Vertices of `P(w)` with their tight constraints.
///
/// Constraint `i < n` is `p_i >= 0`; constraint `n + j` is column `j` paying at least `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexSet {
    pub w: Rational,
    pub vertices: Vec<ProbVector>,
    pub active_sets: Vec<Vec<usize>>,
}

impl VertexSet {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Lowest-entropy vertex, first in enumeration order on ties.
    pub fn min_entropy(&self) -> Option<(f64, &ProbVector)> {
        let mut best: Option<(f64, &ProbVector)> = None;
        for p in &self.vertices {
            let h = p.entropy();
            if best.map_or(true, |(b, _)| h < b) {
                best = Some((h, p));
            }
        }
        best
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[pos] += 1;
        for i in pos + 1..k {
            idx[i] = idx[i - 1] + 1;
        }
    }
}

/// Solves the square system `a x = b` exactly; `None` when singular.
fn solve_square(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = a[col][col].recip();
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] * &inv;
            for c in col..n {
                let delta = &factor * &a[col][c];
                a[r][c] -= delta;
            }
            let delta = &factor * &b[col];
            b[r] -= delta;
        }
    }
    let mut x = vec![rational::zero(); n];
    for r in (0..n).rev() {
        let mut acc = b[r].clone();
        for c in r + 1..n {
            acc -= &a[r][c] * &x[c];
        }
        x[r] = acc / &a[r][r];
    }
    Some(x)
}

fn check_caps(game: &PayoffMatrix, forced: usize) -> Result<()> {
    let n = game.rows();
    let total = n + game.cols();
    if n > MAX_ROWS {
        return Err(Error::BlowUp(format!(
            "{n} rows exceed the vertex-enumeration cap of {MAX_ROWS} (about {} subsets)",
            binomial(total, n - 1)
        )));
    }
    let count = binomial(total - forced, (n - 1).saturating_sub(forced));
    if count > MAX_SUBSETS {
        return Err(Error::BlowUp(format!(
            "{count} constraint subsets exceed the cap of {MAX_SUBSETS}"
        )));
    }
    Ok(())
}

/// Vertices of `P(w)` whose tight sets contain every constraint in `forced`.
///
/// With `forced` empty this is the full vertex set; with one column constraint it is the
/// face where that column pays exactly `w`.
pub fn face_vertices(game: &PayoffMatrix, w: &Rational, forced: &[usize]) -> Result<VertexSet> {
    let n = game.rows();
    let cols = game.cols();
    check_caps(game, forced.len())?;
    let mut out = VertexSet {
        w: w.clone(),
        vertices: Vec::new(),
        active_sets: Vec::new(),
    };
    if forced.len() > n - 1 {
        return Ok(out);
    }
    let free: Vec<usize> = (0..n + cols).filter(|c| !forced.contains(c)).collect();
    let mut seen: HashSet<Vec<Rational>> = HashSet::new();
    for_each_combination(free.len(), n - 1 - forced.len(), |chosen| {
        let mut zero = vec![false; n];
        let mut tight_cols = Vec::new();
        for &c in chosen.iter().map(|&k| &free[k]).chain(forced) {
            if c < n {
                zero[c] = true;
            } else {
                tight_cols.push(c - n);
            }
        }
        let support: Vec<usize> = (0..n).filter(|&i| !zero[i]).collect();
        if support.is_empty() {
            return;
        }
        let mut a = Vec::with_capacity(support.len());
        let mut b = Vec::with_capacity(support.len());
        a.push(vec![rational::one(); support.len()]);
        b.push(rational::one());
        for &j in &tight_cols {
            a.push(support.iter().map(|&i| game.entry(i, j).clone()).collect());
            b.push(w.clone());
        }
        let Some(x) = solve_square(a, b) else { return };
        if x.iter().any(|xi| xi.is_negative()) {
            return;
        }
        let mut p = vec![rational::zero(); n];
        for (&i, xi) in support.iter().zip(x) {
            p[i] = xi;
        }
        let feasible = (0..cols).all(|j| {
            let pay: Rational = (0..n).filter(|&i| !p[i].is_zero()).map(|i| game.entry(i, j) * &p[i]).sum();
            &pay >= w
        });
        if feasible && seen.insert(p.clone()) {
            let active = active_set(game, w, &p);
            out.vertices.push(ProbVector::new(p).expect("vertex is a pmf"));
            out.active_sets.push(active);
        }
    });
    Ok(out)
}

fn active_set(game: &PayoffMatrix, w: &Rational, p: &[Rational]) -> Vec<usize> {
    let n = game.rows();
    let mut active: Vec<usize> = (0..n).filter(|&i| p[i].is_zero()).collect();
    for j in 0..game.cols() {
        let pay: Rational = (0..n).map(|i| game.entry(i, j) * &p[i]).sum();
        if &pay == w {
            active.push(n + j);
        }
    }
    active
}

/// All vertices of `P(w)`; empty exactly when `w > w*`.
pub fn polytope_vertices(game: &PayoffMatrix, w: &Rational) -> Result<VertexSet> {
    face_vertices(game, w, &[])
}

/// Minimum entropy and a minimizing vertex; `None` when `P(w)` is empty.
pub fn min_entropy_vertex(game: &PayoffMatrix, w: &Rational) -> Result<Option<(f64, ProbVector)>> {
    if w <= game.v() {
        return Ok(Some((0.0, ProbVector::point(game.rows(), game.maximin_row()))));
    }
    if w > &game.w_star() {
        return Ok(None);
    }
    let set = polytope_vertices(game, w)?;
    Ok(set.min_entropy().map(|(h, p)| (h, p.clone())))
}

/// `F(w)`: `0` for `w <= v`, `+inf` for `w > w*`.
pub fn min_entropy_f(game: &PayoffMatrix, w: &Rational) -> Result<f64> {
    Ok(min_entropy_vertex(game, w)?.map_or(f64::INFINITY, |(h, _)| h))
}

pub const BISECTION_STEPS: usize = 64;

/// `J(h) = max { w : F(w) <= h }` by bisection on `[v, w*]`.
pub fn j_of_h(game: &PayoffMatrix, h: f64) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(Error::Domain(format!("entropy budget must be nonnegative, got {h}")));
    }
    let w_star = game.w_star();
    if min_entropy_f(game, &w_star)? <= h {
        return Ok(rational::to_f64(&w_star));
    }
    let mut lo = game.v().clone();
    let mut hi = w_star;
    let two = rational::int(2);
    for _ in 0..BISECTION_STEPS {
        let mid = (&lo + &hi) / &two;
        if min_entropy_f(game, &mid)? <= h {
            lo = mid;
        } else {
            hi = mid;
        }
        // Keep denominators in check: snap to a nearby dyadic once the interval is tiny.
        if lo.denom().bits() > 256 {
            lo = snap_down(&lo, 200);
        }
    }
    Ok(rational::to_f64(&lo))
}

fn snap_down(r: &Rational, bits: u32) -> Rational {
    let scale = num_bigint::BigInt::one() << bits;
    let scaled = (r * Rational::from_integer(scale.clone())).floor();
    scaled / Rational::from_integer(scale)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopePoint {
    pub h: f64,
    #[serde(with = "rational::serde_string")]
    pub w: Rational,
    pub vertex: ProbVector,
}

/// Upper concave envelope of sampled `(F(w), w)` points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Envelope {
    pub samples: Vec<EnvelopePoint>,
    /// Indices into `samples`, increasing in `h`.
    pub hull: Vec<usize>,
    /// Spacing of the `w` grid, a resolution caveat on the envelope.
    #[serde(with = "rational::serde_string")]
    pub spacing: Rational,
}

/// A point on the envelope written as a mixture of two sampled strategies.
#[derive(Clone, Debug, PartialEq)]
pub struct Support<'a> {
    /// Weight on `left`.
    pub gamma: f64,
    pub left: &'a EnvelopePoint,
    pub right: &'a EnvelopePoint,
    pub value: f64,
}

impl Envelope {
    pub fn new(game: &PayoffMatrix, grid_size: usize) -> Result<Self> {
        if grid_size < 3 {
            return Err(Error::Domain(format!("grid size must be at least 3, got {grid_size}")));
        }
        let v = game.v().clone();
        let w_star = game.w_star();
        let spacing = (&w_star - &v) / rational::int(grid_size as i64 - 1);
        let mut samples = vec![EnvelopePoint {
            h: 0.0,
            w: v.clone(),
            vertex: ProbVector::point(game.rows(), game.maximin_row()),
        }];
        if w_star > v {
            for k in 1..grid_size {
                let w = &v + &spacing * rational::int(k as i64);
                let (h, vertex) = min_entropy_vertex(game, &w)?.expect("w <= w* is feasible");
                samples.push(EnvelopePoint { h, w, vertex });
            }
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| {
            samples[a]
                .h
                .total_cmp(&samples[b].h)
                .then_with(|| samples[b].w.cmp(&samples[a].w))
        });
        let mut hull: Vec<usize> = Vec::new();
        for idx in order {
            if let Some(&last) = hull.last() {
                if samples[last].h == samples[idx].h {
                    continue;
                }
            }
            let p = (&samples[idx].h, rational::to_f64(&samples[idx].w));
            while hull.len() >= 2 {
                let o = &samples[hull[hull.len() - 2]];
                let a = &samples[hull[hull.len() - 1]];
                let (oh, ow) = (o.h, rational::to_f64(&o.w));
                let (ah, aw) = (a.h, rational::to_f64(&a.w));
                let cross = (ah - oh) * (p.1 - ow) - (aw - ow) * (p.0 - oh);
                if cross >= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(idx);
        }
        Ok(Envelope {
            samples,
            hull,
            spacing,
        })
    }

    pub fn support(&self, h: f64) -> Support<'_> {
        let first = &self.samples[self.hull[0]];
        let last = &self.samples[*self.hull.last().unwrap()];
        if h <= first.h {
            return Support {
                gamma: 1.0,
                left: first,
                right: first,
                value: rational::to_f64(&first.w),
            };
        }
        if h >= last.h {
            return Support {
                gamma: 1.0,
                left: last,
                right: last,
                value: rational::to_f64(&last.w),
            };
        }
        let k = self
            .hull
            .windows(2)
            .position(|s| self.samples[s[1]].h >= h)
            .unwrap();
        let (a, b) = (&self.samples[self.hull[k]], &self.samples[self.hull[k + 1]]);
        let gamma = (b.h - h) / (b.h - a.h);
        Support {
            gamma,
            left: a,
            right: b,
            value: gamma * rational::to_f64(&a.w) + (1.0 - gamma) * rational::to_f64(&b.w),
        }
    }

    pub fn eval(&self, h: f64) -> f64 {
        self.support(h).value
    }
}

/// `J_cav(h)` from a `grid_size`-point envelope.
pub fn j_cav(game: &PayoffMatrix, h: f64, grid_size: usize) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(Error::Domain(format!("entropy budget must be nonnegative, got {h}")));
    }
    Ok(Envelope::new(game, grid_size)?.eval(h))
}

fn require_range(game: &PayoffMatrix, w: &Rational, hi: &Rational, what: &str) -> Result<()> {
    if w < game.v() || w > hi {
        return Err(Error::Domain(format!(
            "{what} needs v <= w <= {}, got w = {}",
            rational::format(hi),
            rational::format(w)
        )));
    }
    Ok(())
}

fn neg_log2(r: &Rational) -> f64 {
    if r.is_zero() {
        f64::INFINITY
    } else {
        -rational::log2(r)
    }
}

/// `G1`: exact form from linear programs over `P(w)`, relaxed form from incentive games.
pub fn bound_g1(game: &PayoffMatrix, w: &Rational, relaxed: bool) -> Result<f64> {
    let n = game.rows();
    let mut best: Option<Rational> = None;
    for i in 0..n {
        let e = lp::unit(n, i);
        let candidate = if relaxed {
            lp::incentive_value(game, &e)? - w
        } else {
            let sol = lp::max_linear_over_polytope(game, w, &e)?;
            if sol.status != LpStatus::Feasible {
                return Ok(f64::INFINITY);
            }
            sol.optimum.unwrap()
        };
        if best.as_ref().map_or(true, |b| candidate > *b) {
            best = Some(candidate);
        }
    }
    let best = best.unwrap();
    if !best.is_positive() {
        return Ok(f64::INFINITY);
    }
    Ok(neg_log2(&best).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosedForm {
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
}

/// `2^G2` as an exact rational; `None` when the numerator and denominator both vanish.
pub fn g2_argument(game: &PayoffMatrix, w: &Rational) -> Option<Rational> {
    let num = (w - game.v()) * (w - game.v());
    let den = (w - game.m_lo()) * (game.m_hi() - w);
    if num.is_zero() {
        Some(rational::one())
    } else if den.is_zero() {
        None
    } else {
        Some(rational::one() + num / den)
    }
}

/// `2^G3` as an exact rational.
pub fn g3_argument(game: &PayoffMatrix, w: &Rational) -> Option<Rational> {
    let span = game.m_hi() - game.m_lo();
    if span.is_zero() {
        return Some(rational::one());
    }
    let rest = rational::one() - (w - game.v()) / span;
    if rest.is_zero() {
        None
    } else {
        Some(rest.recip())
    }
}

/// `G2`, `G3`, `G4` for `w` in `[v, m_hi]`.
pub fn bounds_closed_form(game: &PayoffMatrix, w: &Rational) -> Result<ClosedForm> {
    require_range(game, w, game.m_hi(), "closed-form bounds")?;
    let log_or_inf = |arg: Option<Rational>| arg.map_or(f64::INFINITY, |a| rational::log2(&a).max(0.0));
    let g2 = log_or_inf(g2_argument(game, w));
    let g3 = log_or_inf(g3_argument(game, w));
    let top = game.m_hi() - game.v();
    let g4 = if top.is_zero() {
        0.0
    } else if w == game.m_hi() {
        f64::INFINITY
    } else {
        let gap = game.m_hi() - w;
        let k = (&top / &gap).floor();
        let r = &gap / &top;
        let kr = &k * &r;
        let rest = rational::one() - &kr;
        let term = |x: &Rational| if x.is_zero() { 0.0 } else { -rational::to_f64(x) * rational::log2(x) };
        (rational::to_f64(&k) * term(&r) + term(&rest)).max(0.0)
    };
    Ok(ClosedForm { g2, g3, g4 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UpperBounds {
    pub q1: f64,
    pub q2: f64,
    /// Restricted to vertices of each column face.
    pub q3: f64,
}

/// `Q1`, `Q2`, `Q3` for `w` in `[v, w*]`.
pub fn bounds_upper(game: &PayoffMatrix, w: &Rational) -> Result<UpperBounds> {
    let vertices = polytope_vertices(game, w)?;
    bounds_upper_with(game, w, &vertices)
}

fn bounds_upper_with(game: &PayoffMatrix, w: &Rational, vertices: &VertexSet) -> Result<UpperBounds> {
    let w_star = game.w_star();
    require_range(game, w, &w_star, "upper bounds")?;
    let v = game.v();
    let h_star = game.nash().entropy();
    let frac = if w_star == *v {
        1.0
    } else {
        rational::to_f64(&((w - v) / (&w_star - v)))
    };
    let q1 = h_star.min(frac * h_star + binary_entropy(frac));

    let n = game.rows();
    let mut q2 = f64::INFINITY;
    for i in 0..n {
        let sol = lp::max_linear_over_polytope(game, w, &lp::unit(n, i))?;
        q2 = q2.min(sol.argmax.expect("w <= w* is feasible").entropy());
    }

    // A column face of P(w) is itself a polytope whose vertices are the vertices of P(w)
    // with that column tight.
    let mut q3 = f64::INFINITY;
    for j in 0..game.cols() {
        let face_max = vertices
            .vertices
            .iter()
            .zip(&vertices.active_sets)
            .filter(|(_, act)| act.contains(&(n + j)))
            .map(|(p, _)| p.entropy())
            .fold(f64::NEG_INFINITY, f64::max);
        if face_max.is_finite() {
            q3 = q3.min(face_max);
        }
    }
    Ok(UpperBounds { q1, q2, q3 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsRow {
    #[serde(with = "rational::serde_string")]
    pub w: Rational,
    pub f: f64,
    pub g1: f64,
    pub g1_relaxed: f64,
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl BoundsRow {
    pub fn lower_max(&self) -> f64 {
        [self.g1, self.g1_relaxed, self.g2, self.g3, self.g4]
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn upper_min(&self) -> f64 {
        self.q1.min(self.q2).min(self.q3)
    }

    pub fn sandwich_holds(&self) -> bool {
        self.lower_max() <= self.f + SANDWICH_TOL && self.f <= self.upper_min() + SANDWICH_TOL
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsReport {
    pub rows: Vec<BoundsRow>,
    #[serde(with = "rational::serde_string")]
    pub v: Rational,
    #[serde(with = "rational::serde_string")]
    pub w_star: Rational,
    pub q3_vertex_restricted: bool,
}

pub const CSV_HEADER: [&str; 10] = ["w", "F", "G1", "G1_relaxed", "G2", "G3", "G4", "Q1", "Q2", "Q3"];

/// Evaluates every bound at `w`.
pub fn bounds_row(game: &PayoffMatrix, w: &Rational) -> Result<BoundsRow> {
    let annotate = |e: Error| match e {
        Error::Domain(m) => Error::Domain(format!("at w = {}: {m}", rational::format(w))),
        other => other,
    };
    require_range(game, w, &game.w_star(), "bounds report").map_err(annotate)?;
    let vertices = polytope_vertices(game, w).map_err(annotate)?;
    let f = if w <= game.v() {
        0.0
    } else {
        vertices.min_entropy().map_or(f64::INFINITY, |(h, _)| h)
    };
    let closed = bounds_closed_form(game, w).map_err(annotate)?;
    let upper = bounds_upper_with(game, w, &vertices).map_err(annotate)?;
    Ok(BoundsRow {
        w: w.clone(),
        f,
        g1: bound_g1(game, w, false).map_err(annotate)?,
        g1_relaxed: bound_g1(game, w, true).map_err(annotate)?,
        g2: closed.g2,
        g3: closed.g3,
        g4: closed.g4,
        q1: upper.q1,
        q2: upper.q2,
        q3: upper.q3,
    })
}

/// One row per grid point; fails if any row breaks `max G <= F <= min Q`.
pub fn bounds_report(game: &PayoffMatrix, grid: &[Rational]) -> Result<BoundsReport> {
    let mut rows = Vec::with_capacity(grid.len());
    for w in grid {
        let row = bounds_row(game, w)?;
        if !row.sandwich_holds() {
            return Err(Error::Invariant(format!(
                "bound sandwich fails at w = {}: {row:?}",
                rational::format(w)
            )));
        }
        rows.push(row);
    }
    Ok(BoundsReport {
        rows,
        v: game.v().clone(),
        w_star: game.w_star(),
        q3_vertex_restricted: true,
    })
}

/// `steps` evenly spaced points from `lo` to `hi`, both included.
pub fn linear_grid(lo: &Rational, hi: &Rational, steps: usize) -> Vec<Rational> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo.clone()],
        _ => {
            let d = (hi - lo) / rational::int(steps as i64 - 1);
            (0..steps).map(|k| lo + &d * rational::int(k as i64)).collect()
        }
    }
}

/// Integer floor of a rational, exposed for the optimal-table construction in tests.
pub fn floor_ratio(a: &Rational, b: &Rational) -> num_bigint::BigInt {
    let q = a / b;
    q.numer().div_floor(q.denom())
}
