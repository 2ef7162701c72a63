//! Team secret-correlation value: a team of `m` players against one adversary who
//! observes their joint action through a noisy channel.
//!
//! The value is `max pi(A|R)` over `p(r) p(q|r) prod_i p(a_i|q)` subject to
//! `H(QA|SR) >= H(Q|R)`, with `|R| = 2` and `|Q| = 2|A|`. The problem is nonconvex;
//! the search below returns a feasible point, hence a lower bound on the value.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::PayoffMatrix;
use crate::rng::{self, Stream};

pub const SLACK_TOL: f64 = 1e-10;
const PMF_TOL: f64 = 1e-9;
const MAX_JOINT: usize = 8;
const MAX_COLS: usize = 4;
const MAX_SIGNALS: usize = 8;
/// Product-grid evaluations before the grid is coarsened.
const GRID_BUDGET: usize = 50_000;
const MIN_STEP: f64 = 1e-9;
const IMPROVE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TeamGameSpec {
    pub players: Vec<usize>,
    /// `payoff[a][b]`, joint actions indexed with player 1 most significant.
    pub payoff: Vec<Vec<f64>>,
    /// `channel[a][s] = p(s|a)`.
    pub channel: Vec<Vec<f64>>,
}

fn check_pmf(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < -PMF_TOL) {
        return Err(Error::Validation(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > PMF_TOL {
        return Err(Error::Validation(format!("{what} sums to {total}")));
    }
    Ok(())
}

impl TeamGameSpec {
    pub fn new(players: Vec<usize>, payoff: Vec<Vec<f64>>, channel: Vec<Vec<f64>>) -> Result<Self> {
        if players.is_empty() || players.contains(&0) {
            return Err(Error::Validation("every player needs at least one action".into()));
        }
        let joint: usize = players.iter().product();
        Error::check_len(joint, payoff.len())?;
        Error::check_len(joint, channel.len())?;
        let cols = payoff[0].len();
        let signals = channel[0].len();
        if cols == 0 || signals == 0 {
            return Err(Error::Validation("payoff and channel rows must be nonempty".into()));
        }
        for (a, row) in payoff.iter().enumerate() {
            Error::check_len(cols, row.len())?;
            if row.iter().any(|u| !u.is_finite()) {
                return Err(Error::Validation(format!("non-finite payoff for joint action {a}")));
            }
        }
        for (a, row) in channel.iter().enumerate() {
            Error::check_len(signals, row.len())?;
            check_pmf(row, &format!("channel row {a}"))?;
        }
        Ok(TeamGameSpec {
            players,
            payoff,
            channel,
        })
    }

    pub fn joint_actions(&self) -> usize {
        self.payoff.len()
    }

    pub fn cols(&self) -> usize {
        self.payoff[0].len()
    }

    pub fn signals(&self) -> usize {
        self.channel[0].len()
    }

    /// `|Q| = 2|A|`.
    pub fn q_size(&self) -> usize {
        2 * self.joint_actions()
    }

    /// Individual actions of joint action `a`.
    pub fn decode(&self, mut a: usize) -> Vec<usize> {
        let mut out = vec![0; self.players.len()];
        for (i, &k) in self.players.iter().enumerate().rev() {
            out[i] = a % k;
            a /= k;
        }
        out
    }

    /// The single-player game in which the team picks joint actions with full correlation.
    pub fn flattened(&self) -> Result<PayoffMatrix> {
        PayoffMatrix::from_f64_rows(&self.payoff)
    }

    fn product(&self, marginals: &[Vec<f64>]) -> Vec<f64> {
        (0..self.joint_actions())
            .map(|a| {
                self.decode(a)
                    .iter()
                    .zip(marginals)
                    .map(|(&ai, m)| m[ai])
                    .product()
            })
            .collect()
    }

    fn worst_column(&self, pa: &[f64]) -> f64 {
        (0..self.cols())
            .map(|b| pa.iter().zip(&self.payoff).map(|(p, row)| p * row[b]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TeamDistribution {
    pub p_r: Vec<f64>,
    /// `p_q_given_r[r][q]`.
    pub p_q_given_r: Vec<Vec<f64>>,
    /// `p_ai_given_q[i][q][a_i]`.
    pub p_ai_given_q: Vec<Vec<Vec<f64>>>,
}

impl TeamDistribution {
    /// `R` and `Q` constant, players independent with the given marginals.
    pub fn product(spec: &TeamGameSpec, marginals: &[Vec<f64>]) -> Self {
        let qn = spec.q_size();
        let mut p_q = vec![0.0; qn];
        p_q[0] = 1.0;
        TeamDistribution {
            p_r: vec![1.0, 0.0],
            p_q_given_r: vec![p_q.clone(), p_q],
            p_ai_given_q: marginals.iter().map(|m| vec![m.clone(); qn]).collect(),
        }
    }

    pub fn validate(&self, spec: &TeamGameSpec) -> Result<()> {
        let qn = spec.q_size();
        Error::check_len(2, self.p_r.len())?;
        check_pmf(&self.p_r, "p_r")?;
        Error::check_len(2, self.p_q_given_r.len())?;
        for (r, row) in self.p_q_given_r.iter().enumerate() {
            Error::check_len(qn, row.len())?;
            check_pmf(row, &format!("p(q|r={r})"))?;
        }
        Error::check_len(spec.players.len(), self.p_ai_given_q.len())?;
        for (i, rows) in self.p_ai_given_q.iter().enumerate() {
            Error::check_len(qn, rows.len())?;
            for (q, row) in rows.iter().enumerate() {
                Error::check_len(spec.players[i], row.len())?;
                check_pmf(row, &format!("p(a_{}|q={q})", i + 1))?;
            }
        }
        Ok(())
    }

    /// `p(a|q) = prod_i p(a_i|q)`, indexed `[q][a]`.
    fn joint_given_q(&self, spec: &TeamGameSpec) -> Vec<Vec<f64>> {
        (0..spec.q_size())
            .map(|q| {
                let marginals: Vec<Vec<f64>> = self.p_ai_given_q.iter().map(|rows| rows[q].clone()).collect();
                spec.product(&marginals)
            })
            .collect()
    }
}

fn security(spec: &TeamGameSpec, d: &TeamDistribution) -> f64 {
    let pa_q = d.joint_given_q(spec);
    let na = spec.joint_actions();
    (0..2)
        .filter(|&r| d.p_r[r] > 0.0)
        .map(|r| {
            let mut pa = vec![0.0; na];
            for (q, &pq) in d.p_q_given_r[r].iter().enumerate() {
                if pq > 0.0 {
                    for a in 0..na {
                        pa[a] += pq * pa_q[q][a];
                    }
                }
            }
            d.p_r[r] * spec.worst_column(&pa)
        })
        .sum()
}

fn h(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

fn slack(spec: &TeamGameSpec, d: &TeamDistribution) -> f64 {
    let pa_q = d.joint_given_q(spec);
    let (na, qn, ns) = (spec.joint_actions(), spec.q_size(), spec.signals());
    let (mut h_rqas, mut h_rq, mut h_r) = (0.0, 0.0, 0.0);
    let mut p_rs = vec![0.0; 2 * ns];
    for r in 0..2 {
        h_r += h(d.p_r[r]);
        for q in 0..qn {
            let prq = d.p_r[r] * d.p_q_given_r[r][q];
            if prq == 0.0 {
                continue;
            }
            h_rq += h(prq);
            for a in 0..na {
                let prqa = prq * pa_q[q][a];
                if prqa == 0.0 {
                    continue;
                }
                for s in 0..ns {
                    let p = prqa * spec.channel[a][s];
                    h_rqas += h(p);
                    p_rs[r * ns + s] += p;
                }
            }
        }
    }
    let h_rs: f64 = p_rs.iter().map(|&p| h(p)).sum();
    (h_rqas - h_rs) - (h_rq - h_r)
}

/// `pi(A|R) = sum_r p(r) min_b E[u_{A,b} | R = r]`.
pub fn team_security(spec: &TeamGameSpec, d: &TeamDistribution) -> Result<f64> {
    d.validate(spec)?;
    Ok(security(spec, d))
}

/// `H(QA|SR) - H(Q|R)`; the distribution is feasible when this is at least `-1e-10`.
pub fn entropy_constraint_slack(spec: &TeamGameSpec, d: &TeamDistribution) -> Result<f64> {
    d.validate(spec)?;
    Ok(slack(spec, d))
}

fn check_search_size(spec: &TeamGameSpec) -> Result<()> {
    if spec.joint_actions() > MAX_JOINT || spec.cols() > MAX_COLS || spec.signals() > MAX_SIGNALS {
        return Err(Error::Cap(format!(
            "team search supports |A| <= {MAX_JOINT}, |B| <= {MAX_COLS}, |S| <= {MAX_SIGNALS}; got {}, {}, {}",
            spec.joint_actions(),
            spec.cols(),
            spec.signals()
        )));
    }
    Ok(())
}

/// All pmfs on `k` points with masses in multiples of `1/steps`.
fn simplex_grid(k: usize, steps: usize) -> Vec<Vec<f64>> {
    fn walk(k: usize, left: usize, steps: usize, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if cur.len() + 1 == k {
            cur.push(left as f64 / steps as f64);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c as f64 / steps as f64);
            walk(k, left - c, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    walk(k, steps, steps, &mut Vec::new(), &mut out);
    out
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Finest per-player resolution not exceeding `grid` whose product grid fits the budget.
fn product_grid(players: &[usize], grid: usize) -> Vec<Vec<Vec<f64>>> {
    let mut steps = grid.max(1);
    while steps > 1 {
        let size: f64 = players.iter().map(|&k| binom(steps + k - 1, k - 1)).product();
        if size <= GRID_BUDGET as f64 {
            break;
        }
        steps -= 1;
    }
    let grids: Vec<Vec<Vec<f64>>> = players.iter().map(|&k| simplex_grid(k, steps)).collect();
    let mut out: Vec<Vec<Vec<f64>>> = vec![Vec::new()];
    for g in &grids {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                g.iter().map(move |m| {
                    let mut next = prefix.clone();
                    next.push(m.clone());
                    next
                })
            })
            .collect();
    }
    out
}

fn nash_marginals(spec: &TeamGameSpec, nash: &[f64]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = spec.players.iter().map(|&k| vec![0.0; k]).collect();
    for (a, &p) in nash.iter().enumerate() {
        for (i, ai) in spec.decode(a).into_iter().enumerate() {
            out[i][ai] += p;
        }
    }
    out
}

/// Pairwise mass transfers within each row, accepted when they raise `value` and keep `ok`.
fn ascend<T: Clone>(
    mut x: T,
    rows: impl Fn(&mut T) -> Vec<&mut Vec<f64>>,
    value: impl Fn(&T) -> f64,
    ok: impl Fn(&T) -> bool,
) -> (T, f64) {
    let mut best = value(&x);
    let mut step = 0.25;
    while step >= MIN_STEP {
        let mut idle = 0;
        loop {
            let mut improved = false;
            let n_rows = rows(&mut x).len();
            for r in 0..n_rows {
                let len = rows(&mut x)[r].len();
                for from in 0..len {
                    for to in 0..len {
                        if from == to {
                            continue;
                        }
                        let mut cand = x.clone();
                        {
                            let mut rs = rows(&mut cand);
                            let row = &mut rs[r];
                            let delta = step.min(row[from]);
                            if delta <= 0.0 {
                                continue;
                            }
                            row[from] -= delta;
                            row[to] += delta;
                        }
                        let v = value(&cand);
                        if v > best + IMPROVE_TOL && ok(&cand) {
                            x = cand;
                            best = v;
                            improved = true;
                        }
                    }
                }
            }
            idle += 1;
            if !improved || idle >= 50 {
                break;
            }
        }
        step /= 2.0;
    }
    (x, best)
}

fn product_rows(m: &mut Vec<Vec<f64>>) -> Vec<&mut Vec<f64>> {
    m.iter_mut().collect()
}

/// Best product strategy against perfect monitoring, with its marginals.
pub fn perfect_monitoring_product(spec: &TeamGameSpec, grid: usize) -> Result<(f64, Vec<Vec<f64>>)> {
    check_search_size(spec)?;
    let flat = spec.flattened()?;
    let nash: Vec<f64> = flat.nash().to_f64();
    let mut seeds = vec![nash_marginals(spec, &nash)];
    let value = |m: &Vec<Vec<f64>>| spec.worst_column(&spec.product(m));
    let mut grid_best: Option<(f64, Vec<Vec<f64>>)> = None;
    for m in product_grid(&spec.players, grid) {
        let v = value(&m);
        if grid_best.as_ref().map_or(true, |(b, _)| v > *b + IMPROVE_TOL) {
            grid_best = Some((v, m));
        }
    }
    seeds.extend(grid_best.map(|(_, m)| m));
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for seed in seeds {
        let (m, v) = ascend(seed, product_rows, value, |_| true);
        if best.as_ref().map_or(true, |(b, _)| v > *b) {
            best = Some((v, m));
        }
    }
    Ok(best.expect("at least one seed"))
}

/// `max_{p in products} min_b E[u_{A,b}]`, the value when the adversary sees the joint action.
pub fn perfect_monitoring_value(spec: &TeamGameSpec) -> Result<f64> {
    Ok(perfect_monitoring_product(spec, 20)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub slack: f64,
    pub feasible: bool,
    /// Upper bound from full correlation, `w*` of the flattened matrix.
    pub w_star_flat: f64,
    /// The perfect-monitoring value, a lower bound the search always meets.
    pub perfect_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TeamSearchResult {
    /// Value of the best feasible point found: a lower bound on the team value.
    pub w_hat: f64,
    pub best: TeamDistribution,
    pub certificate: FeasibilityReport,
}

fn all_rows(d: &mut TeamDistribution) -> Vec<&mut Vec<f64>> {
    let mut rows: Vec<&mut Vec<f64>> = vec![&mut d.p_r];
    rows.extend(d.p_q_given_r.iter_mut());
    for per_player in d.p_ai_given_q.iter_mut() {
        rows.extend(per_player.iter_mut());
    }
    rows
}

fn dirichlet<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// Searches for `max pi(A|R)` over feasible distributions.
///
/// Structured candidates come first: products on a grid (always feasible with constant
/// `Q`), the flattened game's equilibrium support played through `Q`, and two-regime
/// mixtures over `R` that pair an independent product with that correlated support.
/// Then coordinate ascent runs from the best candidates and `restarts` random products.
pub fn team_maxmin_search(spec: &TeamGameSpec, restarts: usize, grid: usize, seed: u64) -> Result<TeamSearchResult> {
    check_search_size(spec)?;
    let flat = spec.flattened()?;
    let nash: Vec<f64> = flat.nash().to_f64();
    let (perfect_value, perfect) = perfect_monitoring_product(spec, grid)?;
    let qn = spec.q_size();

    let support: Vec<(usize, f64)> = nash.iter().copied().enumerate().filter(|&(_, p)| p > 0.0).collect();
    let point = |k: usize, i: usize| {
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        v
    };
    // Regime 1 plays the equilibrium support through q = 1..; q = 0 carries a product.
    let correlated = |r_mix: f64, banked: &[Vec<f64>]| {
        let mut d = TeamDistribution::product(spec, banked);
        d.p_r = vec![1.0 - r_mix, r_mix];
        let mut row = vec![0.0; qn];
        for (k, &(_, p)) in support.iter().enumerate() {
            row[k + 1] = p;
        }
        d.p_q_given_r[1] = row;
        for (k, &(a, _)) in support.iter().enumerate() {
            for (i, ai) in spec.decode(a).into_iter().enumerate() {
                d.p_ai_given_q[i][k + 1] = point(spec.players[i], ai);
            }
        }
        d
    };

    let mut candidates: Vec<TeamDistribution> = vec![
        TeamDistribution::product(spec, &perfect),
        TeamDistribution::product(spec, &nash_marginals(spec, &nash)),
    ];
    for banked in [perfect.clone(), nash_marginals(spec, &nash)] {
        for k in 0..=grid.max(1) {
            candidates.push(correlated(k as f64 / grid.max(1) as f64, &banked));
        }
    }
    let feasible = |d: &TeamDistribution| slack(spec, d) >= -SLACK_TOL;
    let value = |d: &TeamDistribution| security(spec, d);

    let mut scored: Vec<(f64, TeamDistribution)> = candidates
        .into_iter()
        .filter(|d| feasible(d))
        .map(|d| (value(&d), d))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.truncate(3);

    let mut starts: Vec<TeamDistribution> = scored.into_iter().map(|(_, d)| d).collect();
    for k in 0..restarts {
        let mut rng = rng::stream(seed, Stream::Team, k as u64);
        let marginals: Vec<Vec<f64>> = spec.players.iter().map(|&n| dirichlet(&mut rng, n)).collect();
        starts.push(TeamDistribution::product(spec, &marginals));
    }

    let mut best: Option<(f64, TeamDistribution)> = None;
    for start in starts {
        let (d, v) = ascend(start, all_rows, value, feasible);
        if best.as_ref().map_or(true, |(b, _)| v > *b) {
            best = Some((v, d));
        }
    }
    let (w_hat, best) = best.expect("constant Q with a product is always feasible");
    let s = slack(spec, &best);
    Ok(TeamSearchResult {
        w_hat,
        certificate: FeasibilityReport {
            slack: s,
            feasible: s >= -SLACK_TOL,
            w_star_flat: crate::rational::to_f64(&flat.w_star()),
            perfect_value,
        },
        best,
    })
}
