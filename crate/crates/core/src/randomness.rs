//! Randomness extraction by universal hashing, source simulation from uniform bits,
//! and their composition into block maps `x^L -> a^L`.
//!
//! Extractors are certified by enumerating the joint law of `(f(X^n), Y^n)`. Two
//! reductions keep that tractable: side-information symbols with identical
//! conditionals `p(x|y)` are merged, and for linear hashes over `GF(2)` so are symbols
//! whose conditionals differ by an XOR shift of `x`, since a linear map turns that
//! shift into a relabeling of its output.

use std::collections::HashMap;

use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::ProbVector;
use crate::info::{collision_entropy_given_y, conditional_entropy, typical_collision_bound, JointPmf};
use crate::rational::{self, Rational};
use crate::rng::{self, Stream};

pub const DEFAULT_MAX_TRIES: u64 = 64;
pub const DEFAULT_EPS: f64 = 0.05;
/// Largest uniform index width accepted by the simulator.
pub const MAX_INPUT_BITS: u32 = 22;
/// Enumerated `(x^n, y^n)` pairs after merging equivalent side-information symbols.
pub const PAIR_CAP: f64 = 16_777_216.0;
/// Hash tables and exact block distributions range over at most this many inputs.
pub const TABLE_CAP: f64 = 4_194_304.0;
const MAX_OUTPUT_BITS: usize = 24;
const BUCKET_WORK_CAP: f64 = 268_435_456.0;

/// `2 eps + (1/2) 2^{-(h2 - ell)/2}`.
pub fn leftover_bound(h2: f64, ell: usize, eps: f64) -> f64 {
    2.0 * eps + 0.5 * (-(h2 - ell as f64) / 2.0).exp2()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HashFamily {
    /// Uniform random `ell x (n log2|X|)` matrix over `GF(2)` applied to the bit encoding.
    Linear,
    /// Independent uniform output for every input sequence.
    RandomTable,
}

impl HashFamily {
    fn default_for(nx: usize) -> Self {
        if nx.is_power_of_two() {
            HashFamily::Linear
        } else {
            HashFamily::RandomTable
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Stop at the first draw whose exact TV meets the certified bound.
    FirstCertified,
    /// Keep the draw with the smallest exact TV among all tries.
    MinTv,
}

#[derive(Clone, Debug)]
enum Hash {
    /// Output bits contributed by symbol `x` at position `t`, XOR-combined.
    Linear { contrib: Vec<Vec<u32>> },
    /// Mixed-radix input code with per-position weights, looked up in `table`.
    Table { weights: Vec<u64>, table: Vec<u32> },
}

impl Hash {
    fn draw(family: HashFamily, nx: usize, n: usize, ell: usize, seed: u64, try_index: u64) -> Hash {
        let mut rng = rng::stream(seed, Stream::Hash, try_index);
        match family {
            HashFamily::Linear => {
                let b = nx.trailing_zeros() as usize;
                let width = n * b;
                let mask = if width >= 64 { u64::MAX } else { (1u64 << width) - 1 };
                let rows: Vec<u64> = (0..ell).map(|_| rng.random::<u64>() & mask).collect();
                let contrib = (0..n)
                    .map(|t| {
                        (0..nx)
                            .map(|x| {
                                let code = if b == 0 { 0 } else { (x as u64) << (b * t) };
                                rows.iter()
                                    .enumerate()
                                    .fold(0u32, |acc, (k, r)| acc | (((r & code).count_ones() & 1) << k))
                            })
                            .collect()
                    })
                    .collect();
                Hash::Linear { contrib }
            }
            HashFamily::RandomTable => {
                let weights: Vec<u64> = (0..n).map(|t| (nx as u64).pow(t as u32)).collect();
                let size = (nx as u64).pow(n as u32);
                let table = (0..size).map(|_| rng.random_range(0..1u64 << ell) as u32).collect();
                Hash::Table { weights, table }
            }
        }
    }

    #[inline]
    fn step(&self, state: u64, t: usize, x: usize) -> u64 {
        match self {
            Hash::Linear { contrib } => state ^ contrib[t][x] as u64,
            Hash::Table { weights, .. } => state + weights[t] * x as u64,
        }
    }

    #[inline]
    fn finish(&self, state: u64) -> usize {
        match self {
            Hash::Linear { .. } => state as usize,
            Hash::Table { table, .. } => table[state as usize] as usize,
        }
    }

    fn apply(&self, xs: &[usize]) -> usize {
        self.finish(xs.iter().enumerate().fold(0, |s, (t, &x)| self.step(s, t, x)))
    }
}

/// A merged group of side-information symbols sharing one conditional law of `X`.
#[derive(Clone, Debug)]
struct Class {
    weight: f64,
    cond: Vec<(usize, f64)>,
}

fn y_classes(j: &JointPmf, translate: bool) -> Vec<Class> {
    let nx = j.nx();
    let mut index: HashMap<Vec<Rational>, usize> = HashMap::new();
    let mut classes: Vec<Class> = Vec::new();
    for y in 0..j.ny() {
        let py: Rational = j.exact().iter().map(|row| &row[y]).sum();
        if py.is_zero() {
            continue;
        }
        let cond: Vec<Rational> = j.exact().iter().map(|row| &row[y] / &py).collect();
        let key = if translate {
            (0..nx)
                .map(|c| (0..nx).map(|x| cond[x ^ c].clone()).collect::<Vec<_>>())
                .min()
                .unwrap()
        } else {
            cond
        };
        let weight = rational::to_f64(&py);
        match index.get(&key) {
            Some(&i) => classes[i].weight += weight,
            None => {
                index.insert(key.clone(), classes.len());
                classes.push(Class {
                    weight,
                    cond: key
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| !p.is_zero())
                        .map(|(x, p)| (x, rational::to_f64(p)))
                        .collect(),
                });
            }
        }
    }
    classes
}

fn check_enumeration(classes: &[Class], n: usize, ell: usize) -> Result<()> {
    let pairs = (classes.iter().map(|c| c.cond.len()).sum::<usize>() as f64).powi(n as i32);
    if pairs > PAIR_CAP {
        return Err(Error::Cap(format!(
            "exact TV needs {pairs:.3e} sequence pairs, cap is {PAIR_CAP:.3e}"
        )));
    }
    let work = (classes.len() as f64).powi(n as i32) * (1u64 << ell) as f64;
    if work > BUCKET_WORK_CAP {
        return Err(Error::Cap(format!(
            "exact TV needs {work:.3e} bucket updates, cap is {BUCKET_WORK_CAP:.3e}"
        )));
    }
    Ok(())
}

fn fill(hash: &Hash, classes: &[Class], seq: &[usize], t: usize, state: u64, prob: f64, buckets: &mut [f64]) {
    if t == seq.len() {
        buckets[hash.finish(state)] += prob;
        return;
    }
    for &(x, p) in &classes[seq[t]].cond {
        fill(hash, classes, seq, t + 1, hash.step(state, t, x), prob * p, buckets);
    }
}

/// `sum_{y^n} p(y^n) score(p(f(X^n) = . | y^n))` over class sequences, abandoning
/// the sum once it exceeds `abort_above`.
fn enumerate_tv(
    hash: &Hash,
    classes: &[Class],
    n: usize,
    ell: usize,
    abort_above: f64,
    mut score: impl FnMut(&[f64]) -> f64,
) -> Option<f64> {
    let mut buckets = vec![0.0; 1usize << ell];
    let mut seq = vec![0usize; n];
    let mut total = 0.0;
    loop {
        let weight: f64 = seq.iter().map(|&c| classes[c].weight).product();
        buckets.iter_mut().for_each(|b| *b = 0.0);
        fill(hash, classes, &seq, 0, 0, 1.0, &mut buckets);
        total += weight * score(&buckets);
        if total > abort_above {
            return None;
        }
        // Odometer over class sequences.
        let mut t = 0;
        loop {
            if t == n {
                return Some(total.min(1.0));
            }
            seq[t] += 1;
            if seq[t] < classes.len() {
                break;
            }
            seq[t] = 0;
            t += 1;
        }
    }
}

fn uniform_score(ell: usize) -> impl FnMut(&[f64]) -> f64 {
    let u = 1.0 / (1u64 << ell) as f64;
    move |b: &[f64]| 0.5 * b.iter().map(|p| (p - u).abs()).sum::<f64>()
}

struct Certificate {
    bound: f64,
    /// The bound rests on an entropy estimate strictly above `ell`.
    meaningful: bool,
}

fn certificate(j: &JointPmf, n: usize, ell: usize, eps: f64) -> Result<Certificate> {
    let h2 = n as f64 * collision_entropy_given_y(j);
    let plain = leftover_bound(h2, ell, 0.0);
    let mut best: Option<f64> = (h2 > ell as f64).then_some(plain);
    if eps > 0.0 {
        let typical = typical_collision_bound(j, n, eps)?;
        if typical.certified && typical.bits > ell as f64 {
            let smooth = leftover_bound(typical.bits, ell, eps);
            best = Some(best.map_or(smooth, |b| b.min(smooth)));
        }
    }
    Ok(match best {
        Some(bound) => Certificate {
            bound,
            meaningful: true,
        },
        None => Certificate {
            bound: plain,
            meaningful: false,
        },
    })
}

/// A hash `f: X^n -> {0,1}^ell` with its exact distance from uniform given `Y^n`.
#[derive(Clone, Debug, Serialize)]
pub struct Extractor {
    pub n: usize,
    pub ell: usize,
    pub nx: usize,
    pub seed: u64,
    /// Counter of the generator stream that drew this hash.
    pub try_index: u64,
    pub family: HashFamily,
    /// `|| p_{f(X^n) Y^n} - U_ell x p_{Y^n} ||_TV`, enumerated.
    pub measured_tv: f64,
    pub certified_bound: f64,
    pub certified: bool,
    /// Draws evaluated by the search that produced this extractor.
    pub tries: u64,
    #[serde(skip)]
    hash: Hash,
}

impl Extractor {
    /// Output index in `[0, 2^ell)` for a block `x^n`.
    pub fn apply(&self, xs: &[usize]) -> usize {
        self.hash.apply(xs)
    }
}

#[derive(Clone, Debug)]
pub struct ExtractorSearch {
    pub n: usize,
    pub ell: usize,
    pub seed: u64,
    pub max_tries: u64,
    pub eps: f64,
    /// `None` picks linear hashing when `|X|` is a power of two.
    pub family: Option<HashFamily>,
    pub selection: Selection,
}

impl ExtractorSearch {
    pub fn new(n: usize, ell: usize, seed: u64) -> Self {
        ExtractorSearch {
            n,
            ell,
            seed,
            max_tries: DEFAULT_MAX_TRIES,
            eps: DEFAULT_EPS,
            family: None,
            selection: Selection::FirstCertified,
        }
    }
}

struct Setup {
    family: HashFamily,
    classes: Vec<Class>,
    cert: Certificate,
}

fn setup(j: &JointPmf, n: usize, ell: usize, family: Option<HashFamily>, eps: f64) -> Result<Setup> {
    let nx = j.nx();
    if n == 0 {
        return Err(Error::Domain("block length must be at least 1".into()));
    }
    if !(eps >= 0.0) {
        return Err(Error::Domain(format!("eps must be nonnegative, got {eps}")));
    }
    let capacity = n as f64 * (nx as f64).log2();
    if ell as f64 > capacity + 1e-9 {
        return Err(Error::Domain(format!(
            "cannot extract {ell} bits from {n} symbols of a {nx}-letter alphabet ({capacity:.3} bits)"
        )));
    }
    if ell > MAX_OUTPUT_BITS {
        return Err(Error::Cap(format!("{ell} output bits, cap is {MAX_OUTPUT_BITS}")));
    }
    let family = family.unwrap_or_else(|| HashFamily::default_for(nx));
    match family {
        HashFamily::Linear if !nx.is_power_of_two() => {
            return Err(Error::Validation(format!(
                "linear hashing needs a power-of-two alphabet, got {nx} symbols"
            )))
        }
        HashFamily::Linear if n * nx.trailing_zeros() as usize > 64 => {
            return Err(Error::Cap("linear hash input exceeds 64 bits".into()))
        }
        HashFamily::RandomTable if (nx as f64).powi(n as i32) > TABLE_CAP => {
            return Err(Error::Cap(format!(
                "hash table over {nx}^{n} inputs exceeds cap {TABLE_CAP:.3e}"
            )))
        }
        _ => {}
    }
    let classes = y_classes(j, family == HashFamily::Linear);
    check_enumeration(&classes, n, ell)?;
    Ok(Setup {
        family,
        classes,
        cert: certificate(j, n, ell, eps)?,
    })
}

fn evaluate(j: &JointPmf, s: &Setup, n: usize, ell: usize, seed: u64, try_index: u64, abort_above: f64) -> Option<Extractor> {
    let hash = Hash::draw(s.family, j.nx(), n, ell, seed, try_index);
    let tv = enumerate_tv(&hash, &s.classes, n, ell, abort_above, uniform_score(ell))?;
    Some(Extractor {
        n,
        ell,
        nx: j.nx(),
        seed,
        try_index,
        family: s.family,
        measured_tv: tv,
        certified_bound: s.cert.bound,
        certified: tv <= s.cert.bound && (s.cert.meaningful || tv == 0.0),
        tries: 1,
        hash,
    })
}

/// The single hash drawn from stream counter `try_index`.
pub fn draw_extractor(
    j: &JointPmf,
    n: usize,
    ell: usize,
    seed: u64,
    try_index: u64,
    family: Option<HashFamily>,
    eps: f64,
) -> Result<Extractor> {
    let s = setup(j, n, ell, family, eps)?;
    Ok(evaluate(j, &s, n, ell, seed, try_index, f64::INFINITY).expect("no abort threshold"))
}

/// Searches seeded hash draws for a certified extractor.
///
/// Returns the first certified draw, or the best one (uncertified) after `max_tries`.
/// With [`Selection::MinTv`] every try is evaluated and the smallest TV wins.
pub fn build_extractor(j: &JointPmf, search: &ExtractorSearch) -> Result<Extractor> {
    if search.max_tries == 0 {
        return Err(Error::Domain("max_tries must be at least 1".into()));
    }
    let (n, ell) = (search.n, search.ell);
    let s = setup(j, n, ell, search.family, search.eps)?;
    let mut best: Option<Extractor> = None;
    let mut tries = 0;
    for try_index in 0..search.max_tries {
        tries += 1;
        let limit = best.as_ref().map_or(f64::INFINITY, |b| b.measured_tv);
        let Some(ext) = evaluate(j, &s, n, ell, search.seed, try_index, limit) else {
            continue;
        };
        let done = ext.measured_tv == 0.0 || (search.selection == Selection::FirstCertified && ext.certified);
        if best.as_ref().map_or(true, |b| ext.measured_tv < b.measured_tv) {
            best = Some(ext);
        }
        if done {
            break;
        }
    }
    let mut best = best.expect("the first try is never aborted");
    best.tries = tries;
    Ok(best)
}

#[derive(Clone, Debug)]
struct Leaf {
    start: u64,
    count: u64,
    target: Rational,
}

/// Interval-algorithm map from `input_bits` uniform bits to `a^L`.
///
/// The first `ceil(gamma L)` symbols target `p1`, the rest `p2`. Index `k` stands for
/// the point `(k + 1/2) / 2^input_bits`, which falls in exactly one cell of the
/// lexicographic CDF partition of `[0, 1)`; that cell's sequence is the output.
#[derive(Clone, Debug, Serialize)]
pub struct SourceSimulator {
    pub p1: ProbVector,
    pub p2: ProbVector,
    pub gamma: f64,
    pub block_len: usize,
    pub input_bits: u32,
    pub first_len: usize,
    /// Exact TV between the induced law of `a^L` and the target product.
    #[serde(with = "rational::serde_string")]
    pub measured_tv: Rational,
    #[serde(skip)]
    leaves: Vec<Leaf>,
    #[serde(skip)]
    symbols: Vec<u8>,
}

fn ceil_u64(r: &Rational) -> u64 {
    r.ceil().to_integer().to_u64().unwrap_or(0)
}

impl SourceSimulator {
    pub fn new(p1: ProbVector, p2: ProbVector, gamma: f64, block_len: usize, input_bits: u32) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Domain(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        if block_len == 0 {
            return Err(Error::Domain("block length must be at least 1".into()));
        }
        Error::check_len(p1.len(), p2.len())?;
        if p1.len() > 256 {
            return Err(Error::Cap(format!("alphabet of {} symbols, cap is 256", p1.len())));
        }
        if input_bits > MAX_INPUT_BITS {
            return Err(Error::Cap(format!("{input_bits} input bits, cap is {MAX_INPUT_BITS}")));
        }
        let first_len = ((gamma * block_len as f64 - 1e-9).ceil().max(0.0) as usize).min(block_len);
        let mut sim = SourceSimulator {
            p1,
            p2,
            gamma,
            block_len,
            input_bits,
            first_len,
            measured_tv: rational::zero(),
            leaves: Vec::new(),
            symbols: Vec::new(),
        };
        let mut prefix = Vec::with_capacity(block_len);
        sim.descend(rational::zero(), rational::one(), &mut prefix);
        let atoms = Rational::from_integer((1u64 << input_bits).into());
        let mut sum = rational::zero();
        let mut covered = rational::zero();
        for leaf in &sim.leaves {
            let mass = Rational::from_integer(leaf.count.into()) / &atoms;
            sum += (mass - &leaf.target).abs();
            covered += &leaf.target;
        }
        sim.measured_tv = (sum + rational::one() - covered) / rational::int(2);
        Ok(sim)
    }

    fn target_at(&self, t: usize) -> &ProbVector {
        if t < self.first_len {
            &self.p1
        } else {
            &self.p2
        }
    }

    fn descend(&mut self, lo: Rational, width: Rational, prefix: &mut Vec<u8>) {
        let atoms = Rational::from_integer((1u64 << self.input_bits).into());
        let half = rational::ratio(1, 2);
        let first = ceil_u64(&(&lo * &atoms - &half));
        let end = ceil_u64(&((&lo + &width) * &atoms - &half));
        if first >= end {
            return;
        }
        let t = prefix.len();
        if t == self.block_len {
            self.leaves.push(Leaf {
                start: first,
                count: end - first,
                target: width,
            });
            self.symbols.extend_from_slice(prefix);
            return;
        }
        let probs = self.target_at(t).probs().to_vec();
        let mut offset = lo;
        for (a, p) in probs.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let w = &width * p;
            prefix.push(a as u8);
            self.descend(offset.clone(), w.clone(), prefix);
            prefix.pop();
            offset += w;
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Leaf holding uniform index `k`.
    pub fn leaf_index(&self, k: u64) -> usize {
        self.leaves.partition_point(|l| l.start + l.count <= k)
    }

    pub fn leaf_symbols(&self, leaf: usize) -> &[u8] {
        &self.symbols[leaf * self.block_len..(leaf + 1) * self.block_len]
    }

    pub fn leaf_target(&self, leaf: usize) -> &Rational {
        &self.leaves[leaf].target
    }

    /// Atoms assigned to `leaf`, out of `2^input_bits`.
    pub fn leaf_atoms(&self, leaf: usize) -> u64 {
        self.leaves[leaf].count
    }

    /// Probability of each output sequence with at least one atom, exact.
    pub fn output_pmf(&self) -> Vec<(Vec<usize>, Rational)> {
        let atoms = Rational::from_integer((1u64 << self.input_bits).into());
        (0..self.leaves.len())
            .map(|i| {
                (
                    self.leaf_symbols(i).iter().map(|&a| a as usize).collect(),
                    Rational::from_integer(self.leaves[i].count.into()) / &atoms,
                )
            })
            .collect()
    }

    /// Target probability of an arbitrary sequence.
    pub fn target_prob(&self, seq: &[usize]) -> Rational {
        seq.iter()
            .enumerate()
            .map(|(t, &a)| self.target_at(t).probs()[a].clone())
            .product()
    }

    pub fn simulate(&self, index: u64) -> Result<Vec<usize>> {
        if index >= 1u64 << self.input_bits {
            return Err(Error::Domain(format!(
                "index {index} outside [0, 2^{})",
                self.input_bits
            )));
        }
        Ok(self
            .leaf_symbols(self.leaf_index(index))
            .iter()
            .map(|&a| a as usize)
            .collect())
    }
}

/// `phi(index)`: the sequence the interval algorithm assigns to a uniform index.
pub fn simulate_source(sim: &SourceSimulator, uniform_index: u64) -> Result<Vec<usize>> {
    sim.simulate(uniform_index)
}

#[derive(Clone, Debug)]
pub struct ComposeOptions {
    /// Extraction rate `R` in bits per symbol; the midpoint of the admissible range by default.
    pub rate: Option<f64>,
    pub max_tries: u64,
    pub family: Option<HashFamily>,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        ComposeOptions {
            rate: None,
            max_tries: DEFAULT_MAX_TRIES,
            family: None,
        }
    }
}

/// `psi = phi o B`: hash a source block to `ell` bits, then simulate the target block.
#[derive(Clone, Debug, Serialize)]
pub struct BlockMap {
    pub block_len: usize,
    /// `gamma H(p1) + (1 - gamma) H(p2)`.
    pub target_rate: f64,
    pub rate: f64,
    /// `H(X|Y)`.
    pub available: f64,
    pub extractor: Extractor,
    pub simulator: SourceSimulator,
    /// `|| p_{psi(X^L), Y^L} - p_{Y^L} x target ||_TV`, enumerated in floating point.
    pub measured_joint_tv: f64,
    /// Exact TV between the law of `psi(X^L)` and the target product.
    #[serde(with = "rational::serde_string")]
    pub marginal_tv: Rational,
    #[serde(skip)]
    leaf_probs: Vec<Rational>,
}

impl BlockMap {
    pub fn apply(&self, xs: &[usize]) -> &[u8] {
        let k = self.extractor.apply(xs) as u64;
        self.simulator.leaf_symbols(self.simulator.leaf_index(k))
    }

    /// Exact law of `psi(X^L)`: one probability per simulator leaf.
    pub fn leaf_probs(&self) -> &[Rational] {
        &self.leaf_probs
    }
}

/// Exact law of the extractor output, by enumerating `x^n` under the marginal of `X`.
fn output_law(ext: &Extractor, px: &[Rational]) -> Result<Vec<Rational>> {
    let n = ext.n;
    if (px.len() as f64).powi(n as i32) > TABLE_CAP {
        return Err(Error::Cap(format!(
            "exact block law over {}^{n} inputs exceeds cap {TABLE_CAP:.3e}",
            px.len()
        )));
    }
    fn walk(h: &Hash, px: &[Rational], t: usize, n: usize, state: u64, prob: Rational, out: &mut [Rational]) {
        if t == n {
            out[h.finish(state)] += prob;
            return;
        }
        for (x, p) in px.iter().enumerate() {
            if !p.is_zero() {
                walk(h, px, t + 1, n, h.step(state, t, x), &prob * p, out);
            }
        }
    }
    let mut out = vec![rational::zero(); 1usize << ext.ell];
    walk(&ext.hash, px, 0, n, 0, rational::one(), &mut out);
    Ok(out)
}

/// Builds `psi_L` for source `j` and target split `(p1, p2, gamma)`.
///
/// The rate budget `gamma H(p1) + (1 - gamma) H(p2) < R < H(X|Y)` must hold; the hash
/// outputs `floor(R L)` bits. Among `max_tries` seeded hashes the one closest to uniform
/// is kept. A target with zero entropy needs no randomness and yields a constant map.
#[allow(clippy::too_many_arguments)]
pub fn compose_block_map(
    j: &JointPmf,
    block_len: usize,
    p1: &ProbVector,
    p2: &ProbVector,
    gamma: f64,
    eps: f64,
    seed: u64,
    opts: &ComposeOptions,
) -> Result<BlockMap> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let target_rate = gamma * p1.entropy() + (1.0 - gamma) * p2.entropy();
    let available = conditional_entropy(j);
    let degenerate = p1.is_deterministic() && p2.is_deterministic();
    let rate = if degenerate {
        0.0
    } else {
        let rate = opts.rate.unwrap_or((target_rate + available) / 2.0);
        if !(target_rate < rate && rate < available) {
            return Err(Error::EntropyDeficit {
                target: target_rate,
                rate,
                available,
            });
        }
        rate
    };
    let ell = (rate * block_len as f64 + 1e-9).floor() as usize;
    let bits = u32::try_from(ell).map_err(|_| Error::Cap("output width overflow".into()))?;
    let simulator = SourceSimulator::new(p1.clone(), p2.clone(), gamma, block_len, bits)?;
    let mut search = ExtractorSearch::new(block_len, ell, seed);
    search.max_tries = opts.max_tries;
    search.eps = eps;
    search.family = opts.family;
    search.selection = Selection::MinTv;
    let extractor = build_extractor(j, &search)?;

    let leaf_of: Vec<usize> = (0..1u64 << ell).map(|k| simulator.leaf_index(k)).collect();
    let targets: Vec<f64> = (0..simulator.leaf_count())
        .map(|i| rational::to_f64(simulator.leaf_target(i)))
        .collect();
    let uncovered = 1.0 - targets.iter().sum::<f64>();
    let mut folded = vec![0.0; targets.len()];
    let classes = y_classes(j, false);
    check_enumeration(&classes, block_len, ell)?;
    let joint = enumerate_tv(&extractor.hash, &classes, block_len, ell, f64::INFINITY, |b| {
        folded.iter_mut().for_each(|f| *f = 0.0);
        for (k, &p) in b.iter().enumerate() {
            folded[leaf_of[k]] += p;
        }
        0.5 * (folded.iter().zip(&targets).map(|(f, q)| (f - q).abs()).sum::<f64>() + uncovered.max(0.0))
    })
    .expect("no abort threshold");

    let law = output_law(&extractor, &j.exact_px())?;
    let mut leaf_probs = vec![rational::zero(); simulator.leaf_count()];
    for (k, p) in law.into_iter().enumerate() {
        leaf_probs[leaf_of[k]] += p;
    }
    let mut sum = rational::zero();
    let mut covered = rational::zero();
    for (i, p) in leaf_probs.iter().enumerate() {
        sum += (p - simulator.leaf_target(i)).abs();
        covered += simulator.leaf_target(i);
    }
    let marginal_tv = (sum + rational::one() - covered) / rational::int(2);

    Ok(BlockMap {
        block_len,
        target_rate,
        rate,
        available,
        extractor,
        simulator,
        measured_joint_tv: joint,
        marginal_tv,
        leaf_probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use proptest::prelude::*;

    fn fair() -> JointPmf {
        JointPmf::without_side_info(&[ratio(1, 2), ratio(1, 2)]).unwrap()
    }

    fn bern(q: &str) -> JointPmf {
        let q = rational::parse(q).unwrap();
        JointPmf::without_side_info(&[rational::one() - &q, q]).unwrap()
    }

    fn pv(p: &[&str]) -> ProbVector {
        ProbVector::parse(p).unwrap()
    }

    #[test]
    fn leftover_examples() {
        assert!((leftover_bound(8.0, 4, 0.0) - 0.125).abs() < 1e-15);
        assert!((leftover_bound(6.0, 0, 0.0) - 0.5 * 2f64.powf(-3.0)).abs() < 1e-15);
        assert_eq!(leftover_bound(5.0, 5, 0.0), 0.5);
        assert!((leftover_bound(8.0, 4, 0.1) - 0.325).abs() < 1e-15);
    }

    #[test]
    fn uniform_input_extracts_exactly() {
        let e = build_extractor(&fair(), &ExtractorSearch::new(4, 2, 3)).unwrap();
        assert_eq!(e.measured_tv, 0.0);
        assert!(e.certified);
        assert_eq!(e.family, HashFamily::Linear);
    }

    #[test]
    fn bernoulli_extractor_certifies() {
        let mut s = ExtractorSearch::new(10, 3, 11);
        s.eps = 0.05;
        let e = build_extractor(&bern("0.3"), &s).unwrap();
        assert!(e.certified, "{e:?}");
        assert!(e.measured_tv <= e.certified_bound);
        // Recompute the winning draw's TV by brute force over all 2^10 inputs.
        let mut counts = vec![0.0; 8];
        for code in 0..1usize << 10 {
            let xs: Vec<usize> = (0..10).map(|t| (code >> t) & 1).collect();
            let ones = xs.iter().sum::<usize>() as i32;
            counts[e.apply(&xs)] += 0.3f64.powi(ones) * 0.7f64.powi(10 - ones);
        }
        let tv = 0.5 * counts.iter().map(|c| (c - 0.125).abs()).sum::<f64>();
        assert!((tv - e.measured_tv).abs() < 1e-12);
    }

    #[test]
    fn full_width_of_a_biased_source_is_not_certified() {
        let e = build_extractor(&bern("0.3"), &ExtractorSearch::new(6, 6, 1)).unwrap();
        assert!(!e.certified);
        assert_eq!(e.tries, DEFAULT_MAX_TRIES);
        assert!(build_extractor(&bern("0.3"), &ExtractorSearch::new(6, 7, 1)).is_err());
    }

    #[test]
    fn side_information_matches_brute_force() {
        let j = JointPmf::leak(&ratio(1, 3), &ratio(1, 2)).unwrap();
        let e = draw_extractor(&j, 5, 2, 9, 4, None, 0.0).unwrap();
        let table = JointPmf::table(&j);
        let mut tv = 0.0;
        for ycode in 0..3usize.pow(5) {
            let ys: Vec<usize> = (0..5).map(|t| (ycode / 3usize.pow(t)) % 3).collect();
            let mut b = vec![0.0; 4];
            for code in 0..32usize {
                let xs: Vec<usize> = (0..5).map(|t| (code >> t) & 1).collect();
                let p: f64 = xs.iter().zip(&ys).map(|(&x, &y)| table[x][y]).product();
                b[e.apply(&xs)] += p;
            }
            let py: f64 = b.iter().sum();
            tv += 0.5 * b.iter().map(|c| (c - py / 4.0).abs()).sum::<f64>();
        }
        assert!((tv - e.measured_tv).abs() < 1e-12, "{tv} vs {}", e.measured_tv);
    }

    #[test]
    fn random_table_family_for_ternary_alphabet() {
        let j = JointPmf::parse(&[&["1/3"], &["1/3"], &["1/3"]]).unwrap();
        let e = draw_extractor(&j, 4, 2, 5, 0, None, 0.0).unwrap();
        assert_eq!(e.family, HashFamily::RandomTable);
        assert!(e.measured_tv > 0.0 && e.measured_tv < 1.0);
        assert!(draw_extractor(&j, 4, 2, 5, 0, Some(HashFamily::Linear), 0.0).is_err());
    }

    #[test]
    fn interval_algorithm_examples() {
        let sim = SourceSimulator::new(pv(&["1/2", "1/2"]), pv(&["1/2", "1/2"]), 1.0, 6, 6).unwrap();
        assert_eq!(sim.measured_tv, rational::zero());
        let third = pv(&["1/3", "2/3"]);
        let sim = SourceSimulator::new(third.clone(), third.clone(), 1.0, 1, 8).unwrap();
        assert_eq!(sim.measured_tv, ratio(1, 768));
        let pmf = sim.output_pmf();
        assert_eq!(pmf[0], (vec![0], ratio(85, 256)));
        assert_eq!(simulate_source(&sim, 84).unwrap(), vec![0]);
        assert_eq!(simulate_source(&sim, 85).unwrap(), vec![1]);
        assert!(simulate_source(&sim, 256).is_err());
        let sim = SourceSimulator::new(third.clone(), pv(&["1", "0"]), 1.0, 3, 10).unwrap();
        assert_eq!(sim.first_len, 3);
        assert!(sim.output_pmf().iter().all(|(s, _)| s.len() == 3));
    }

    #[test]
    fn interval_split_uses_both_targets() {
        let sim = SourceSimulator::new(pv(&["1", "0"]), pv(&["1/2", "1/2"]), 0.25, 4, 3).unwrap();
        assert_eq!(sim.first_len, 1);
        assert_eq!(sim.measured_tv, rational::zero());
        for (seq, p) in sim.output_pmf() {
            assert_eq!(seq[0], 0);
            assert_eq!(p, ratio(1, 8));
        }
    }

    #[test]
    fn interval_tv_nonincreasing_in_bits() {
        let third = pv(&["1/3", "2/3"]);
        for len in 1..=3 {
            let mut last = rational::one();
            for bits in 1..=14 {
                let tv = SourceSimulator::new(third.clone(), third.clone(), 1.0, len, bits)
                    .unwrap()
                    .measured_tv;
                assert!(tv <= last, "L={len} bits={bits}");
                last = tv;
            }
        }
    }

    #[test]
    fn compose_on_fair_bits() {
        let half = pv(&["1/2", "1/2"]);
        let m = compose_block_map(&fair(), 8, &pv(&["1", "0"]), &half, 0.125, 0.05, 1, &ComposeOptions::default())
            .unwrap();
        assert_eq!(m.extractor.ell, 7);
        assert_eq!(m.measured_joint_tv, 0.0);
        assert_eq!(m.marginal_tv, rational::zero());
        assert_eq!(m.apply(&[1, 0, 1, 1, 0, 0, 1, 0])[0], 0);
        // Target rate equal to the available entropy violates the strict budget.
        let err = compose_block_map(&fair(), 8, &half, &half, 1.0, 0.05, 1, &ComposeOptions::default());
        assert!(matches!(err, Err(Error::EntropyDeficit { .. })));
    }

    #[test]
    fn compose_on_leaky_source() {
        let j = JointPmf::leak(&ratio(1, 2), &ratio(1, 2)).unwrap();
        let half = pv(&["1/2", "1/2"]);
        let err = compose_block_map(&j, 12, &half, &half, 1.0, 0.05, 1, &ComposeOptions::default());
        assert!(matches!(err, Err(Error::EntropyDeficit { .. })));
        let p = pv(&["0.9533", "0.0467"]);
        let opts = ComposeOptions {
            rate: Some(0.4),
            ..ComposeOptions::default()
        };
        let m = compose_block_map(&j, 12, &p, &p, 1.0, 0.05, 3, &opts).unwrap();
        assert_eq!(m.extractor.ell, 4);
        assert!(m.measured_joint_tv > 0.0 && m.measured_joint_tv < 1.0);
        assert!(rational::to_f64(&m.marginal_tv) <= m.measured_joint_tv + 1e-12);
        let total: Rational = m.leaf_probs().iter().sum();
        assert_eq!(total, rational::one());
    }

    #[test]
    fn constant_target_needs_no_randomness() {
        let j = JointPmf::leak(&ratio(1, 2), &ratio(1, 1)).unwrap();
        let pure = pv(&["0", "1"]);
        let m = compose_block_map(&j, 6, &pure, &pure, 1.0, 0.05, 1, &ComposeOptions::default()).unwrap();
        assert_eq!(m.measured_joint_tv, 0.0);
        assert_eq!(m.apply(&[0, 1, 0, 1, 1, 0]), &[1, 1, 1, 1, 1, 1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn average_leftover_hash(cells in prop::collection::vec(1u32..20, 4), n in 3usize..6, ell in 1usize..3) {
            let total: u32 = cells.iter().sum();
            let j = JointPmf::new(vec![
                vec![ratio(cells[0] as i64, total as i64), ratio(cells[1] as i64, total as i64)],
                vec![ratio(cells[2] as i64, total as i64), ratio(cells[3] as i64, total as i64)],
            ]).unwrap();
            let draws = 200;
            let mean = (0..draws)
                .map(|t| draw_extractor(&j, n, ell, 17, t, None, 0.0).unwrap().measured_tv)
                .sum::<f64>() / draws as f64;
            let bound = leftover_bound(n as f64 * collision_entropy_given_y(&j), ell, 0.0);
            prop_assert!(mean <= bound + 1e-9, "{} > {}", mean, bound);
        }

        #[test]
        fn full_rank_linear_map_of_uniform_bits(seed in 0u64..1000) {
            let e = draw_extractor(&fair(), 6, 3, seed, 0, None, 0.0).unwrap();
            let Hash::Linear { contrib } = &e.hash else { unreachable!() };
            // Rank of the 3 x 6 matrix whose columns are the per-bit contributions.
            let mut cols: Vec<u32> = contrib.iter().map(|c| c[1]).collect();
            let mut rank = 0;
            for bit in 0..3 {
                if let Some(pos) = (rank..cols.len()).find(|&i| cols[i] >> bit & 1 == 1) {
                    cols.swap(rank, pos);
                    let pivot = cols[rank];
                    for i in 0..cols.len() {
                        if i != rank && cols[i] >> bit & 1 == 1 {
                            cols[i] ^= pivot;
                        }
                    }
                    rank += 1;
                }
            }
            if rank == 3 {
                prop_assert_eq!(e.measured_tv, 0.0);
            } else {
                prop_assert!(e.measured_tv > 0.0);
            }
        }
    }
}
