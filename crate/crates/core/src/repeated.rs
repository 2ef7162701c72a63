//! Repeated zero-sum game in which Alice's only randomness is a leaked i.i.d. source.
//!
//! Alice plays a block-Markov strategy: block 1 is the pure first action, and every
//! later block is `psi_L` applied to the source symbols of the block before. Bob sees
//! the leak `Y`, all past actions, and knows `psi_L`.

use std::fmt;
use std::str::FromStr;

use num_traits::{Signed, Zero};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{PayoffMatrix, ProbVector};
use crate::info::{conditional_entropy, JointPmf};
use crate::minentropy::{j_cav, Envelope, DEFAULT_GRID};
use crate::randomness::{compose_block_map, BlockMap, ComposeOptions, DEFAULT_EPS, DEFAULT_MAX_TRIES, TABLE_CAP};
use crate::rational::{self, Rational};
use crate::rng::{self, Stream};

/// Ties in Bob's expected payoff closer than this go to the lowest column.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BobKind {
    /// Best response to the exact posterior of Alice's current action.
    Myopic,
    /// Always the given column.
    Fixed(usize),
    /// Uniformly random column each stage.
    Uniform,
}

impl FromStr for BobKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "myopic" => Ok(BobKind::Myopic),
            "uniform" => Ok(BobKind::Uniform),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|j| j.parse().ok())
                .map(BobKind::Fixed)
                .ok_or_else(|| Error::Usage(format!("unknown Bob strategy {s:?}; use myopic, uniform or fixed:<column>"))),
        }
    }
}

impl fmt::Display for BobKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BobKind::Myopic => write!(f, "myopic"),
            BobKind::Uniform => write!(f, "uniform"),
            BobKind::Fixed(j) => write!(f, "fixed:{j}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// Read `(gamma, p1, p2)` off the concave envelope at `H(X|Y) (1 - 1/L)`.
    Auto,
    Manual {
        gamma: f64,
        p1: ProbVector,
        p2: ProbVector,
    },
}

#[derive(Clone, Debug)]
pub struct RepeatedGameConfig {
    pub game: PayoffMatrix,
    pub source: JointPmf,
    pub block_len: usize,
    /// Blocks after the first.
    pub blocks: usize,
    pub targets: Targets,
    pub seed: u64,
    pub bob: BobKind,
    /// Stages appended to block 1 when the horizon is not a multiple of `L`.
    pub extra_stages: usize,
    pub eps: f64,
    pub rate: Option<f64>,
    pub max_tries: u64,
    pub grid: usize,
}

impl RepeatedGameConfig {
    pub fn new(game: PayoffMatrix, source: JointPmf, block_len: usize, blocks: usize, seed: u64) -> Self {
        RepeatedGameConfig {
            game,
            source,
            block_len,
            blocks,
            targets: Targets::Auto,
            seed,
            bob: BobKind::Myopic,
            extra_stages: 0,
            eps: DEFAULT_EPS,
            rate: None,
            max_tries: DEFAULT_MAX_TRIES,
            grid: DEFAULT_GRID,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.block_len == 0 || self.blocks == 0 {
            return Err(Error::Domain("block length and block count must be at least 1".into()));
        }
        if (self.source.nx() as f64).powi(self.block_len as i32) > TABLE_CAP {
            return Err(Error::Cap(format!(
                "{}^{} source blocks exceed the posterior cap {TABLE_CAP:.3e}",
                self.source.nx(),
                self.block_len
            )));
        }
        if let BobKind::Fixed(j) = self.bob {
            if j >= self.game.cols() {
                return Err(Error::Validation(format!(
                    "fixed column {j} out of range for {} columns",
                    self.game.cols()
                )));
            }
        }
        Ok(())
    }
}

/// `J_cav(H(X|Y))`, the maxmin value of the repeated game with this source.
pub fn theoretical_maxmin(game: &PayoffMatrix, source: &JointPmf) -> Result<f64> {
    j_cav(game, conditional_entropy(source), DEFAULT_GRID)
}

#[derive(Clone, Debug, Serialize)]
pub struct AliceStrategy {
    pub gamma: f64,
    pub p1: ProbVector,
    pub p2: ProbVector,
    pub block_map: BlockMap,
}

impl AliceStrategy {
    /// Actions of a block from the previous block's source symbols.
    pub fn block_actions(&self, prev_x: &[usize]) -> &[u8] {
        self.block_map.apply(prev_x)
    }
}

pub fn alice_block_strategy(cfg: &RepeatedGameConfig) -> Result<AliceStrategy> {
    cfg.validate()?;
    let (gamma, p1, p2) = match &cfg.targets {
        Targets::Manual { gamma, p1, p2 } => {
            Error::check_len(cfg.game.rows(), p1.len())?;
            Error::check_len(cfg.game.rows(), p2.len())?;
            (*gamma, p1.clone(), p2.clone())
        }
        Targets::Auto => {
            let h = conditional_entropy(&cfg.source) * (1.0 - 1.0 / cfg.block_len as f64);
            let env = Envelope::new(&cfg.game, cfg.grid)?;
            let s = env.support(h.max(0.0));
            (s.gamma, s.left.vertex.clone(), s.right.vertex.clone())
        }
    };
    let opts = ComposeOptions {
        rate: cfg.rate,
        max_tries: cfg.max_tries,
        family: None,
    };
    let block_map = compose_block_map(&cfg.source, cfg.block_len, &p1, &p2, gamma, cfg.eps, cfg.seed, &opts)?;
    Ok(AliceStrategy { gamma, p1, p2, block_map })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageRecord {
    pub t: usize,
    pub x: usize,
    pub y: usize,
    pub a: usize,
    pub b: usize,
    #[serde(with = "rational::serde_string")]
    pub payoff: Rational,
    /// `E[u(A_t, b_t) | Bob's history]` under Bob's posterior.
    pub expected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockRecord {
    pub block: usize,
    pub stages: usize,
    /// Exact TV between the block's action law and the target product.
    #[serde(with = "rational::serde_string")]
    pub tv: Rational,
    pub avg_payoff: f64,
    /// Exact expected and ideal per-stage payoff against a fixed column.
    #[serde(skip_serializing_if = "Option::is_none", with = "opt_rational")]
    pub expected_payoff: Option<Rational>,
    #[serde(skip_serializing_if = "Option::is_none", with = "opt_rational")]
    pub ideal_payoff: Option<Rational>,
}

mod opt_rational {
    use super::*;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match r {
            Some(r) => s.serialize_str(&rational::format(r)),
            None => s.serialize_none(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub lambda_t: f64,
    #[serde(with = "rational::serde_string")]
    pub lambda_exact: Rational,
    /// Mean of the per-stage posterior expectations, a lower-variance estimate of `E lambda_T`.
    pub lambda_expected: f64,
    pub target: f64,
    #[serde(rename = "L")]
    pub block_len: usize,
    #[serde(rename = "N")]
    pub blocks: usize,
    pub seed: u64,
    pub stages: usize,
    pub bob: String,
    pub gamma: f64,
    pub p1: ProbVector,
    pub p2: ProbVector,
    pub conditional_entropy: f64,
    pub target_rate: f64,
    pub rate: f64,
    pub ell: usize,
    pub extractor_tv: f64,
    pub measured_joint_tv: f64,
    pub marginal_tv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationTrace {
    pub stages: Vec<StageRecord>,
    pub blocks: Vec<BlockRecord>,
    pub summary: Summary,
}

fn sample_cell<R: Rng>(rng: &mut R, cum: &[(f64, usize, usize)]) -> (usize, usize) {
    let u: f64 = rng.random();
    let i = cum.partition_point(|c| c.0 <= u).min(cum.len() - 1);
    (cum[i].1, cum[i].2)
}

/// Consistent previous-block inputs with their posterior weights and the leaf `psi` maps them to.
fn candidates(source: &JointPmf, alice: &AliceStrategy, ys: &[usize]) -> Vec<(f64, usize)> {
    let table = source.table();
    let sim = &alice.block_map.simulator;
    let ext = &alice.block_map.extractor;
    let mut out = Vec::new();
    let mut xs = vec![0usize; ys.len()];
    fn walk(
        t: usize,
        w: f64,
        xs: &mut Vec<usize>,
        ys: &[usize],
        table: &[Vec<f64>],
        f: &mut dyn FnMut(&[usize], f64),
    ) {
        if t == ys.len() {
            f(xs, w);
            return;
        }
        for x in 0..table.len() {
            let p = table[x][ys[t]];
            if p > 0.0 {
                xs[t] = x;
                walk(t + 1, w * p, xs, ys, table, f);
            }
        }
    }
    walk(0, 1.0, &mut xs, ys, table, &mut |xs, w| {
        out.push((w, sim.leaf_index(ext.apply(xs) as u64)));
    });
    out
}

/// Column minimizing `sum_a post(a) u(a, b)`, lowest index on ties.
fn best_response(u: &[Vec<f64>], post: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for b in 0..u[0].len() {
        let e: f64 = post.iter().zip(u).map(|(p, row)| p * row[b]).sum();
        if e < best.1 - TIE_TOL {
            best = (b, e);
        }
    }
    best
}

/// Simulates `T = (1 + N) L + extra` stages.
pub fn run(cfg: &RepeatedGameConfig) -> Result<SimulationTrace> {
    let alice = alice_block_strategy(cfg)?;
    let map = &alice.block_map;
    let sim = &map.simulator;
    let game = &cfg.game;
    let u = game.to_f64();
    let (n_rows, n_cols) = (game.rows(), game.cols());
    let l = cfg.block_len;

    let mut cum = Vec::new();
    let mut acc = 0.0;
    for (x, row) in cfg.source.table().iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                cum.push((acc, x, y));
            }
        }
    }
    let mut src_rng = rng::stream(cfg.seed, Stream::Source, 0);
    let mut bob_rng = rng::stream(cfg.seed, Stream::Bob, 0);

    // Per-stage ideal law and the exact block-level quantities shared by blocks >= 2.
    let pure_first = vec![0usize; l];
    let tv_first = rational::one() - sim.target_prob(&pure_first);
    let ideal_and_expected = match cfg.bob {
        BobKind::Fixed(j) => {
            let lr = rational::int(l as i64);
            let ideal: Rational = (0..l)
                .map(|t| {
                    let p = if t < sim.first_len { &alice.p1 } else { &alice.p2 };
                    p.probs().iter().enumerate().map(|(a, q)| q * game.entry(a, j)).sum::<Rational>()
                })
                .sum::<Rational>()
                / &lr;
            let expected: Rational = map
                .leaf_probs()
                .iter()
                .enumerate()
                .map(|(leaf, p)| {
                    p * sim.leaf_symbols(leaf).iter().map(|&a| game.entry(a as usize, j).clone()).sum::<Rational>()
                })
                .sum::<Rational>()
                / &lr;
            Some((ideal, expected, game.entry(0, j).clone()))
        }
        _ => None,
    };

    let total_stages = (1 + cfg.blocks) * l + cfg.extra_stages;
    let mut stages = Vec::with_capacity(total_stages);
    let mut blocks = Vec::with_capacity(1 + cfg.blocks);
    let mut sum = rational::zero();
    let mut expected_sum = 0.0;
    let mut prev_x: Vec<usize> = Vec::with_capacity(l);
    let mut prev_y: Vec<usize> = Vec::with_capacity(l);

    for block in 0..=cfg.blocks {
        let len = if block == 0 { l + cfg.extra_stages } else { l };
        // Alice's actions and Bob's candidate set for this block.
        let (actions, mut alive): (Vec<usize>, Vec<(f64, usize)>) = if block == 0 {
            (vec![0; len], Vec::new())
        } else {
            (
                alice.block_actions(&prev_x).iter().map(|&a| a as usize).collect(),
                candidates(&cfg.source, &alice, &prev_y),
            )
        };
        let mut block_sum = rational::zero();
        let mut cur_x = Vec::with_capacity(len);
        let mut cur_y = Vec::with_capacity(len);
        for s in 0..len {
            let (x, y) = sample_cell(&mut src_rng, &cum);
            let a = actions[s];
            let mut post = vec![0.0; n_rows];
            if block == 0 {
                post[0] = 1.0;
            } else {
                let total: f64 = alive.iter().map(|c| c.0).sum();
                for &(w, leaf) in &alive {
                    post[sim.leaf_symbols(leaf)[s] as usize] += w / total;
                }
            }
            let (b, expected) = match cfg.bob {
                BobKind::Myopic => best_response(&u, &post),
                BobKind::Fixed(j) => (j, post.iter().zip(&u).map(|(p, row)| p * row[j]).sum()),
                BobKind::Uniform => {
                    let j = bob_rng.random_range(0..n_cols);
                    (j, post.iter().zip(&u).map(|(p, row)| p * row[j]).sum())
                }
            };
            if block > 0 {
                alive.retain(|&(_, leaf)| sim.leaf_symbols(leaf)[s] as usize == a);
            }
            let payoff = game.entry(a, b).clone();
            block_sum += &payoff;
            expected_sum += expected;
            stages.push(StageRecord {
                t: stages.len() + 1,
                x,
                y,
                a,
                b,
                payoff,
                expected,
            });
            // Only the last L source symbols of a block feed the next one.
            if s + l >= len {
                cur_x.push(x);
                cur_y.push(y);
            }
        }
        let (tv, expected_payoff, ideal_payoff) = match &ideal_and_expected {
            Some((ideal, expected, first)) => {
                let e = if block == 0 { first.clone() } else { expected.clone() };
                (if block == 0 { tv_first.clone() } else { map.marginal_tv.clone() }, Some(e), Some(ideal.clone()))
            }
            None => (if block == 0 { tv_first.clone() } else { map.marginal_tv.clone() }, None, None),
        };
        if let (Some(e), Some(i)) = (&expected_payoff, &ideal_payoff) {
            let slack = rational::int(2) * game.max_abs() * &tv;
            if (e - i).abs() > slack {
                return Err(Error::Invariant(format!(
                    "block {}: expected payoff {} differs from ideal {} by more than 2 M TV = {}",
                    block + 1,
                    rational::format(e),
                    rational::format(i),
                    rational::format(&slack)
                )));
            }
        }
        sum += &block_sum;
        blocks.push(BlockRecord {
            block: block + 1,
            stages: len,
            tv,
            avg_payoff: rational::to_f64(&(block_sum / rational::int(len as i64))),
            expected_payoff,
            ideal_payoff,
        });
        prev_x = cur_x;
        prev_y = cur_y;
    }

    let lambda_exact = sum / rational::int(total_stages as i64);
    let summary = Summary {
        lambda_t: rational::to_f64(&lambda_exact),
        lambda_exact,
        lambda_expected: expected_sum / total_stages as f64,
        target: theoretical_maxmin(game, &cfg.source)?,
        block_len: l,
        blocks: cfg.blocks,
        seed: cfg.seed,
        stages: total_stages,
        bob: cfg.bob.to_string(),
        gamma: alice.gamma,
        p1: alice.p1.clone(),
        p2: alice.p2.clone(),
        conditional_entropy: map.available,
        target_rate: map.target_rate,
        rate: map.rate,
        ell: map.extractor.ell,
        extractor_tv: map.extractor.measured_tv,
        measured_joint_tv: map.measured_joint_tv,
        marginal_tv: rational::to_f64(&map.marginal_tv),
    };
    Ok(SimulationTrace {
        stages,
        blocks,
        summary,
    })
}

impl SimulationTrace {
    /// Whether any stage payoff differs from zero; used by callers reporting degenerate runs.
    pub fn all_zero(&self) -> bool {
        self.stages.iter().all(|s| s.payoff.is_zero())
    }
}
