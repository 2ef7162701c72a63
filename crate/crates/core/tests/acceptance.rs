//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! Runs under `cargo test`; the heavier criteria assume the optimized test profile.

use std::process::Command;
use std::time::{Duration, Instant};

use entrogame::game::ProbVector;
use entrogame::info::{binary_entropy, collision_entropy_given_y, JointPmf};
use entrogame::minentropy::{bounds_row, j_cav, linear_grid, min_entropy_f, min_entropy_vertex};
use entrogame::randomness::{
    build_extractor, draw_extractor, leftover_bound, ExtractorSearch, SourceSimulator,
};
use entrogame::rational::{self, int, ratio, Rational};
use entrogame::repeated::{run, theoretical_maxmin, BobKind, RepeatedGameConfig};
use entrogame::separation::{chapman_robbins, sample_check_separation};
use entrogame::team::{team_maxmin_search, TeamGameSpec};
use entrogame::PayoffMatrix;
use num_traits::Signed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn mp() -> PayoffMatrix {
    PayoffMatrix::from_ints(&[&[1, 0], &[0, 1]]).unwrap()
}

fn u_ex() -> PayoffMatrix {
    PayoffMatrix::parse(&[&["-1", "1", "1"], &["1", "1/2", "1"], &["1", "1", "1/2"]]).unwrap()
}

fn fair() -> JointPmf {
    JointPmf::without_side_info(&[ratio(1, 2), ratio(1, 2)]).unwrap()
}

fn leak(alpha: Rational) -> JointPmf {
    JointPmf::leak(&ratio(1, 2), &alpha).unwrap()
}

fn random_game(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> PayoffMatrix {
    let grid: Vec<Vec<Rational>> = (0..rows)
        .map(|_| (0..cols).map(|_| int(rng.random_range(-5..=5))).collect())
        .collect();
    PayoffMatrix::new(grid).unwrap()
}

/// A random point of `[v, w*]` on a grid of 1000 steps.
fn random_level(rng: &mut ChaCha8Rng, g: &PayoffMatrix) -> Rational {
    let k = rng.random_range(0..=1000);
    g.v() + (g.w_star() - g.v()) * ratio(k, 1000)
}

fn game_value() -> Outcome {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/u_ex.json");
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_entrogame"))
        .args(["value", path])
        .output()
        .unwrap();
    let secs = start.elapsed().as_secs_f64();
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap_or_default();
    let w = doc["w_star"].as_str().unwrap_or("?").to_string();
    outcome(
        out.status.success() && w == "7/9" && secs < 0.1,
        format!("w* = {w}, {:.1} ms", secs * 1e3),
    )
}

fn matching_pennies_curve() -> Outcome {
    let g = mp();
    let mut worst_f = 0.0f64;
    for w in linear_grid(&int(0), &ratio(1, 2), 21) {
        let f = min_entropy_f(&g, &w).unwrap();
        worst_f = worst_f.max((f - binary_entropy(rational::to_f64(&w))).abs());
    }
    let mut worst_j = 0.0f64;
    for h in [0.25, 0.5, 0.75, 1.0] {
        worst_j = worst_j.max((j_cav(&g, h, 129).unwrap() - h / 2.0).abs());
    }
    outcome(
        worst_f <= 1e-9 && worst_j <= 2e-2,
        format!("max |F - h| = {worst_f:.2e}, max |J_cav - h/2| = {worst_j:.2e}"),
    )
}

fn bound_sandwich() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = Instant::now();
    let (mut checked, mut violations, mut errors) = (0, 0, 0);
    for _ in 0..200 {
        let (r, c) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let g = random_game(&mut rng, r, c);
        for _ in 0..10 {
            let w = random_level(&mut rng, &g);
            match bounds_row(&g, &w) {
                Ok(row) if row.sandwich_holds() => checked += 1,
                Ok(_) => violations += 1,
                Err(_) => errors += 1,
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        violations == 0 && errors == 0 && secs < 60.0,
        format!("{checked} points, {violations} violations, {errors} errors, {secs:.1} s"),
    )
}

fn diagonal_lift(p: &ProbVector) -> ProbVector {
    let n = p.len();
    let mut lifted = vec![rational::zero(); n * n];
    for (i, pi) in p.probs().iter().enumerate() {
        lifted[i * n + i] = pi.clone();
    }
    ProbVector::new(lifted).unwrap()
}

fn direct_sum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut exact_failures, mut points) = (0.0f64, 0, 0);
    for rows in [2, 3] {
        for _ in 0..50 {
            let g = random_game(&mut rng, rows, 2);
            let gg = g.direct_sum(&g);
            for _ in 0..10 {
                let w = random_level(&mut rng, &gg);
                let half = &w / int(2);
                let f2 = min_entropy_f(&gg, &w).unwrap();
                let f1 = min_entropy_f(&g, &half).unwrap();
                worst = worst.max((f2 - f1).abs());
                // Playing the same optimal row in both copies doubles every payoff exactly.
                let (_, p) = min_entropy_vertex(&g, &half).unwrap().expect("w/2 is securable");
                let lifted = diagonal_lift(&p);
                let k1 = g.security_level(&p).unwrap();
                let k2 = gg.security_level(&lifted).unwrap();
                if k2 != &k1 * int(2) || k2 < w || gg.column_payoffs(&lifted).unwrap().iter().any(|u| u < &w) {
                    exact_failures += 1;
                }
                points += 1;
            }
        }
    }
    outcome(
        worst <= 1e-10 && exact_failures == 0,
        format!("{points} points, max entropy gap {worst:.2e}, {exact_failures} exact payoff mismatches"),
    )
}

fn separation() -> Outcome {
    let cases = [
        (mp(), "MP", [("1/2", "0"), ("1/2", "1/4"), ("3/8", "1/8")]),
        (u_ex(), "U_ex", [("7/9", "1/2"), ("3/4", "1/2"), ("3/4", "3/5")]),
    ];
    let mut notes = Vec::new();
    let mut pass = true;
    for (g, name, pairs) in &cases {
        for (w1, w2) in pairs {
            let (w1, w2) = (rational::parse(w1).unwrap(), rational::parse(w2).unwrap());
            match sample_check_separation(g, &w1, &w2, 10_000, 5) {
                Ok(c) => pass &= c.violations == 0,
                Err(e) => {
                    pass = false;
                    notes.push(format!("{name}: {e}"));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut min_gap, mut worst_eq) = (f64::INFINITY, 0.0f64);
    for _ in 0..10_000 {
        let k = rng.random_range(2..=6);
        let simplex = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let (p, q) = (simplex(&mut rng), simplex(&mut rng));
        let x: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        min_gap = min_gap.min(chapman_robbins(&p, &q, &x).unwrap().gap);
        let opt: Vec<f64> = p.iter().zip(&q).map(|(pi, qi)| (pi - qi) / qi).collect();
        worst_eq = worst_eq.max(chapman_robbins(&p, &q, &opt).unwrap().gap.abs());
    }
    pass &= min_gap >= -1e-10 && worst_eq <= 1e-10;
    notes.push(format!("6 polytope pairs x 1e4 samples; CR min gap {min_gap:.2e}, equality gap {worst_eq:.2e}"));
    outcome(pass, notes.join("; "))
}

/// A random joint of `X` and `Y` with positive integer weights.
fn random_joint(rng: &mut ChaCha8Rng, nx: usize, ny: usize) -> JointPmf {
    let cells: Vec<Vec<i64>> = (0..nx).map(|_| (0..ny).map(|_| rng.random_range(1..=20)).collect()).collect();
    let total: i64 = cells.iter().flatten().sum();
    JointPmf::new(cells.iter().map(|r| r.iter().map(|&c| ratio(c, total)).collect()).collect()).unwrap()
}

fn leftover_hash() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut average_failures, mut cases, mut certified) = (0, 0, 0);
    let mut worst_ratio = 0.0f64;
    for _ in 0..20 {
        let nx = rng.random_range(2..=4);
        let ny = rng.random_range(1..=2);
        let j = random_joint(&mut rng, nx, ny);
        // Longest block with |X|^n <= 2^12, shortened so the joint enumeration stays small.
        let n = (12.0 / (nx as f64).log2()).floor() as usize;
        let n = n.min(if ny > 1 { 8 } else { 12 });
        let h2 = n as f64 * collision_entropy_given_y(&j);
        for ell in 1..=4 {
            let seed = rng.random::<u64>();
            let mean = (0..200)
                .map(|t| draw_extractor(&j, n, ell, seed, t, None, 0.0).unwrap().measured_tv)
                .sum::<f64>()
                / 200.0;
            let bound = leftover_bound(h2, ell, 0.0);
            worst_ratio = worst_ratio.max(mean / bound);
            if mean > bound + 1e-9 {
                average_failures += 1;
            }
            let mut search = ExtractorSearch::new(n, ell, seed);
            search.eps = 0.05;
            cases += 1;
            if build_extractor(&j, &search).unwrap().certified {
                certified += 1;
            }
        }
    }
    let rate = certified as f64 / cases as f64;
    outcome(
        average_failures == 0 && rate >= 0.95,
        format!(
            "{cases} cases, {average_failures} above the average bound (worst mean/bound {worst_ratio:.3}), \
             certified {certified}/{cases}"
        ),
    )
}

fn source_simulation() -> Outcome {
    let third = ProbVector::new(vec![ratio(1, 3), ratio(2, 3)]).unwrap();
    let tv8 = SourceSimulator::new(third.clone(), third.clone(), 1.0, 1, 8).unwrap().measured_tv;
    let mut monotone = true;
    for len in 1..=3 {
        let mut last = rational::one();
        for bits in 1..=16 {
            let tv = SourceSimulator::new(third.clone(), third.clone(), 1.0, len, bits).unwrap().measured_tv;
            monotone &= tv <= last;
            last = tv;
        }
    }
    outcome(
        tv8 == ratio(1, 768) && monotone,
        format!("TV at 8 bits = {}, nonincreasing in bits for L <= 3: {monotone}", rational::format(&tv8)),
    )
}

const SEEDS: u64 = 20;
const LENGTHS: [usize; 4] = [6, 8, 10, 12];

struct Sweep {
    expected: Vec<f64>,
    realized: Vec<f64>,
    elapsed: Duration,
    /// `(L, realized lambda, theoretical maxmin)` of every run.
    runs: Vec<(usize, f64, f64)>,
}

fn sweep(source: &JointPmf) -> Sweep {
    let start = Instant::now();
    let maxmin = theoretical_maxmin(&mp(), source).unwrap();
    let (mut expected, mut realized, mut runs) = (Vec::new(), Vec::new(), Vec::new());
    for len in LENGTHS {
        let (mut e, mut r) = (0.0, 0.0);
        for seed in 0..SEEDS {
            let cfg = RepeatedGameConfig::new(mp(), source.clone(), len, 50, seed);
            let s = run(&cfg).unwrap().summary;
            e += s.lambda_expected;
            r += s.lambda_t;
            runs.push((len, s.lambda_t, maxmin));
        }
        expected.push(e / SEEDS as f64);
        realized.push(r / SEEDS as f64);
    }
    Sweep {
        expected,
        realized,
        elapsed: start.elapsed(),
        runs,
    }
}

fn increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

fn fmt(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

fn secure_side(fair: &Sweep, leaky: &Sweep) -> Outcome {
    let pass = increasing(&fair.expected)
        && fair.expected[3] >= 0.43
        && leaky.expected[3] >= 0.18
        && fair.elapsed.as_secs() < 300
        && leaky.elapsed.as_secs() < 300;
    outcome(
        pass,
        format!(
            "fair coin E[lambda] by L: {} (realized {}), {:.1} s; leak 1/2: {} (realized {}), {:.1} s",
            fmt(&fair.expected),
            fmt(&fair.realized),
            fair.elapsed.as_secs_f64(),
            fmt(&leaky.expected),
            fmt(&leaky.realized),
            leaky.elapsed.as_secs_f64(),
        ),
    )
}

fn defend_side(sweeps: &[&Sweep]) -> Outcome {
    let mut runs: Vec<(usize, f64, f64)> = sweeps.iter().flat_map(|s| s.runs.iter().copied()).collect();
    // Extra configurations: a full leak and the 3x3 example.
    for seed in 0..5 {
        for (game, source) in [(mp(), leak(int(1))), (u_ex(), fair()), (u_ex(), leak(ratio(1, 2)))] {
            let maxmin = theoretical_maxmin(&game, &source).unwrap();
            let cfg = RepeatedGameConfig::new(game, source, 10, 50, 100 + seed);
            runs.push((10, run(&cfg).unwrap().summary.lambda_t, maxmin));
        }
    }
    let eligible: Vec<_> = runs.iter().filter(|(len, _, _)| *len >= 10).collect();
    let worst = eligible.iter().map(|(_, l, m)| l - m).fold(f64::NEG_INFINITY, f64::max);
    outcome(
        worst <= 0.02,
        format!("{} runs with L >= 10, max lambda - maxmin = {worst:.4}", eligible.len()),
    )
}

fn match_game(channel: Vec<Vec<f64>>) -> TeamGameSpec {
    let payoff = vec![vec![0.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]];
    TeamGameSpec::new(vec![2, 2], payoff, channel).unwrap()
}

fn bsc_pair(flip: f64) -> Vec<Vec<f64>> {
    let f = |same: bool| if same { 1.0 - flip } else { flip };
    (0..4)
        .map(|a: usize| (0..4).map(|s: usize| f(a >> 1 == s >> 1) * f(a & 1 == s & 1)).collect())
        .collect()
}

fn team_game() -> Outcome {
    let start = Instant::now();
    let mut single_ok = true;
    for g in [mp(), u_ex(), PayoffMatrix::from_ints(&[&[3, -1, 0], &[-2, 4, 1]]).unwrap()] {
        let spec = TeamGameSpec::new(vec![g.rows()], g.to_f64(), vec![vec![1.0]; g.rows()]).unwrap();
        let w = team_maxmin_search(&spec, 4, 20, 1).unwrap().w_hat;
        single_ok &= (w - rational::to_f64(&g.w_star())).abs() <= 1e-12;
    }
    let perfect = team_maxmin_search(&match_game(bsc_pair(0.0)), 8, 20, 1).unwrap().w_hat;
    let blind = team_maxmin_search(&match_game(vec![vec![1.0]; 4]), 8, 20, 1).unwrap().w_hat;
    let noisy = team_maxmin_search(&match_game(bsc_pair(0.25)), 8, 20, 1).unwrap().w_hat;
    let secs = start.elapsed().as_secs_f64();
    let pass = single_ok
        && (perfect - 0.25).abs() <= 1e-3
        && (blind - 0.5).abs() <= 1e-3
        && blind >= noisy - 1e-6
        && noisy >= perfect - 1e-6
        && secs < 120.0;
    outcome(
        pass,
        format!(
            "single player matches w*: {single_ok}; match game perfect {perfect:.4}, noisy {noisy:.4}, \
             blind {blind:.4}; {secs:.1} s"
        ),
    )
}

fn payoff_bridge() -> Outcome {
    let (mut blocks, mut violations) = (0, 0);
    let configs = [(mp(), fair()), (mp(), leak(ratio(1, 2))), (u_ex(), fair())];
    for (game, source) in configs {
        let m = game.max_abs();
        for col in 0..game.cols() {
            for (len, seed) in [(6, 1), (10, 2)] {
                let mut cfg = RepeatedGameConfig::new(game.clone(), source.clone(), len, 20, seed);
                cfg.bob = BobKind::Fixed(col);
                let trace = match run(&cfg) {
                    Ok(t) => t,
                    Err(_) => {
                        violations += 1;
                        continue;
                    }
                };
                for b in &trace.blocks {
                    blocks += 1;
                    let (Some(e), Some(i)) = (&b.expected_payoff, &b.ideal_payoff) else {
                        violations += 1;
                        continue;
                    };
                    if (e - i).abs() > int(2) * &m * &b.tv {
                        violations += 1;
                    }
                }
            }
        }
    }
    outcome(violations == 0, format!("{blocks} blocks, {violations} violations"))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |id: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        results.push((id, name, o, start.elapsed().as_secs_f64()));
        let (id, name, o, secs) = results.last().unwrap();
        println!(
            "{} {id:>2} {name}: {} [{secs:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    };
    timed(1, "game value", &game_value);
    timed(2, "matching pennies curve", &matching_pennies_curve);
    timed(3, "bound sandwich", &bound_sandwich);
    timed(4, "direct sum", &direct_sum);
    timed(5, "separation", &separation);
    timed(6, "leftover hash", &leftover_hash);
    timed(7, "source simulation", &source_simulation);
    let fair_sweep = sweep(&fair());
    let leak_sweep = sweep(&leak(ratio(1, 2)));
    timed(8, "repeated game secure side", &|| secure_side(&fair_sweep, &leak_sweep));
    timed(9, "repeated game defend side", &|| defend_side(&[&fair_sweep, &leak_sweep]));
    timed(10, "team game", &team_game);
    timed(11, "payoff-TV bridge", &payoff_bridge);
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
