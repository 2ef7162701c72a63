//! The `entrogame` command line.
//!
//! JSON results go to stdout (or `--out`) with a `manifest` member recording the command,
//! input hashes, seed and version. CSV outputs get the manifest in a sidecar
//! `<out>.manifest.json`. Files are written to a temporary sibling and renamed into place.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid input, 3 resource cap, 4 failed internal check.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats::{parse_game, parse_source, parse_team, read_text};
use crate::game::ProbVector;
use crate::minentropy::{bounds_report, linear_grid, CSV_HEADER};
use crate::randomness::{build_extractor, ExtractorSearch, HashFamily, DEFAULT_EPS, DEFAULT_MAX_TRIES};
use crate::rational::{self, Rational};
use crate::repeated::{run, BobKind, RepeatedGameConfig, Targets};
use crate::separation::sample_check_separation;
use crate::team::team_maxmin_search;

#[derive(Debug, Parser)]
#[command(name = "entrogame", version, about = "Entropy-payoff trade-off toolkit for zero-sum games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Game value, an optimal strategy, and the payoff range.
    Value(ValueArgs),
    /// Min-entropy function and its bounds on a grid of payoffs, as CSV.
    Bounds(BoundsArgs),
    /// Repeated game with a leaked randomness source.
    Simulate(SimulateArgs),
    /// Team maxmin value under imperfect monitoring.
    Team(TeamArgs),
    /// Search for a certified hashing extractor.
    Extract(ExtractArgs),
    /// Sample-based check of the distance bounds between strategy polytopes.
    Separation(SeparationArgs),
}

#[derive(Debug, Args)]
struct ValueArgs {
    game: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_rational(s: &str) -> std::result::Result<Rational, String> {
    rational::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
struct BoundsArgs {
    game: PathBuf,
    #[arg(long, value_parser = parse_rational, allow_hyphen_values = true)]
    w_min: Option<Rational>,
    #[arg(long, value_parser = parse_rational, allow_hyphen_values = true)]
    w_max: Option<Rational>,
    /// Number of grid points.
    #[arg(long, default_value_t = 21, value_parser = clap::value_parser!(u32).range(1..))]
    steps: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    source: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    block_len: u32,
    /// Blocks after the first.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    blocks: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `myopic`, `uniform` or `fixed:<column>`.
    #[arg(long, default_value = "myopic")]
    bob: String,
    /// Stage trace CSV; block rows go to `<stem>.blocks.csv` beside it.
    #[arg(long)]
    out: PathBuf,
    /// Extra stages appended to the first block.
    #[arg(long, default_value_t = 0)]
    extra_stages: u32,
    /// Extraction rate in bits per symbol.
    #[arg(long)]
    rate: Option<f64>,
    /// Manual targets: weight of the first sub-block, then the two strategies as comma lists.
    #[arg(long, requires_all = ["p1", "p2"])]
    gamma: Option<f64>,
    #[arg(long, requires = "gamma")]
    p1: Option<String>,
    #[arg(long, requires = "gamma")]
    p2: Option<String>,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
}

#[derive(Debug, Args)]
struct TeamArgs {
    team: PathBuf,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    grid: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    source: PathBuf,
    /// Block length.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    n: u32,
    /// Output bits.
    #[arg(long)]
    bits: u32,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_TRIES, value_parser = clap::value_parser!(u64).range(1..))]
    max_tries: u64,
    /// `linear` or `random-table`; chosen from the alphabet size by default.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SeparationArgs {
    game: PathBuf,
    #[arg(long, value_parser = parse_rational, allow_hyphen_values = true)]
    w1: Rational,
    #[arg(long, value_parser = parse_rational, allow_hyphen_values = true)]
    w2: Rational,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct InputHash {
    path: String,
    sha256: String,
}

/// Provenance of an output: enough to rerun it bit for bit.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    command: String,
    args: Vec<String>,
    inputs: Vec<InputHash>,
    seed: Option<u64>,
    version: &'static str,
    timestamp_unix: u64,
}

impl RunManifest {
    fn new(command: &str, args: &[String], inputs: &[(&Path, &str)], seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            args: args.to_vec(),
            inputs: inputs
                .iter()
                .map(|(path, text)| InputHash {
                    path: path.display().to_string(),
                    sha256: format!("{:x}", Sha256::digest(text.as_bytes())),
                })
                .collect(),
            seed,
            version: env!("CARGO_PKG_VERSION"),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

fn emit_json(mut value: Value, manifest: RunManifest, out: Option<&Path>) -> Result<()> {
    value["manifest"] = serde_json::to_value(manifest).expect("manifest serializes");
    let text = serde_json::to_string_pretty(&value).expect("value serializes") + "\n";
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sidecar(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
    write_atomic(Path::new(&name), text.as_bytes())
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Validation(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    w.into_inner()
        .map_err(|e| Error::Validation(format!("csv encoding failed: {e}")))
}

fn f(x: f64) -> String {
    // Negative zero prints as "-0".
    format!("{}", if x == 0.0 { 0.0 } else { x })
}

fn parse_probs(text: &str) -> Result<ProbVector> {
    let cells: Vec<&str> = text.split(',').map(str::trim).collect();
    ProbVector::parse(&cells).map_err(|e| Error::Usage(format!("bad strategy {text:?}: {e}")))
}

fn cmd_value(a: &ValueArgs, argv: &[String]) -> Result<()> {
    let text = read_text(&a.game)?;
    let game = parse_game(&text)?;
    let value = json!({
        "w_star": rational::format(&game.w_star()),
        "nash": game.nash(),
        "v": rational::format(game.v()),
        "m_lo": rational::format(game.m_lo()),
        "m_hi": rational::format(game.m_hi()),
    });
    emit_json(value, RunManifest::new("value", argv, &[(&a.game, &text)], None), a.out.as_deref())
}

fn cmd_bounds(a: &BoundsArgs, argv: &[String]) -> Result<()> {
    let text = read_text(&a.game)?;
    let game = parse_game(&text)?;
    let (v, w_star) = (game.v().clone(), game.w_star());
    let clamp = |w: Option<&Rational>, default: &Rational| {
        w.map_or(default.clone(), |w| w.clone().max(v.clone()).min(w_star.clone()))
    };
    let lo = clamp(a.w_min.as_ref(), &v);
    let hi = clamp(a.w_max.as_ref(), &w_star);
    if lo > hi {
        return Err(Error::Usage("--w-min exceeds --w-max".into()));
    }
    let report = bounds_report(&game, &linear_grid(&lo, &hi, a.steps as usize))?;
    let bytes = csv_bytes(
        &CSV_HEADER,
        report.rows.iter().map(|r| {
            vec![
                rational::format(&r.w),
                f(r.f),
                f(r.g1),
                f(r.g1_relaxed),
                f(r.g2),
                f(r.g3),
                f(r.g4),
                f(r.q1),
                f(r.q2),
                f(r.q3),
            ]
        }),
    )?;
    write_atomic(&a.out, &bytes)?;
    let manifest = RunManifest::new("bounds", argv, &[(&a.game, &text)], None);
    sidecar(&a.out, &manifest)?;
    let summary = json!({
        "rows": report.rows.len(),
        "v": rational::format(&report.v),
        "m_lo": rational::format(game.m_lo()),
        "m_hi": rational::format(game.m_hi()),
        "w_star": rational::format(&report.w_star),
        "sandwich_holds": report.rows.iter().all(|r| r.sandwich_holds()),
        "q3_vertex_restricted": report.q3_vertex_restricted,
        "out": a.out.display().to_string(),
    });
    emit_json(summary, manifest, None)
}

fn blocks_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or("trace".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.blocks.csv"))
}

fn cmd_simulate(a: &SimulateArgs, argv: &[String]) -> Result<()> {
    let game_text = read_text(&a.game)?;
    let source_text = read_text(&a.source)?;
    let mut cfg = RepeatedGameConfig::new(
        parse_game(&game_text)?,
        parse_source(&source_text)?,
        a.block_len as usize,
        a.blocks as usize,
        a.seed,
    );
    cfg.bob = a.bob.parse::<BobKind>()?;
    cfg.extra_stages = a.extra_stages as usize;
    cfg.rate = a.rate;
    cfg.eps = a.eps;
    if let (Some(gamma), Some(p1), Some(p2)) = (a.gamma, &a.p1, &a.p2) {
        cfg.targets = Targets::Manual {
            gamma,
            p1: parse_probs(p1)?,
            p2: parse_probs(p2)?,
        };
    }
    let trace = run(&cfg)?;
    let stages = csv_bytes(
        &["t", "x", "y", "a", "b", "payoff"],
        trace.stages.iter().map(|s| {
            vec![
                s.t.to_string(),
                s.x.to_string(),
                s.y.to_string(),
                s.a.to_string(),
                s.b.to_string(),
                rational::format(&s.payoff),
            ]
        }),
    )?;
    let blocks = csv_bytes(
        &["block", "tv", "avg_payoff"],
        trace
            .blocks
            .iter()
            .map(|b| vec![b.block.to_string(), f(rational::to_f64(&b.tv)), f(b.avg_payoff)]),
    )?;
    let block_out = blocks_path(&a.out);
    write_atomic(&a.out, &stages)?;
    write_atomic(&block_out, &blocks)?;
    let inputs = [(a.game.as_path(), game_text.as_str()), (a.source.as_path(), source_text.as_str())];
    let manifest = RunManifest::new("simulate", argv, &inputs, Some(a.seed));
    sidecar(&a.out, &manifest)?;
    let mut summary = serde_json::to_value(&trace.summary).expect("summary serializes");
    summary["trace"] = json!(a.out.display().to_string());
    summary["blocks_csv"] = json!(block_out.display().to_string());
    emit_json(summary, manifest, None)
}

fn cmd_team(a: &TeamArgs, argv: &[String]) -> Result<()> {
    let text = read_text(&a.team)?;
    let spec = parse_team(&text)?;
    let res = team_maxmin_search(&spec, a.restarts, a.grid as usize, a.seed)?;
    let value = json!({
        "w_hat": res.w_hat,
        "w_hat_is": "lower bound (value of a feasible point)",
        "slack": res.certificate.slack,
        "dist": res.best,
        "certificate": res.certificate,
    });
    emit_json(value, RunManifest::new("team", argv, &[(&a.team, &text)], Some(a.seed)), a.out.as_deref())
}

fn cmd_extract(a: &ExtractArgs, argv: &[String]) -> Result<()> {
    let text = read_text(&a.source)?;
    let j = parse_source(&text)?;
    let mut search = ExtractorSearch::new(a.n as usize, a.bits as usize, a.seed);
    search.eps = a.eps;
    search.max_tries = a.max_tries;
    search.family = match a.family.as_deref() {
        None => None,
        Some("linear") => Some(HashFamily::Linear),
        Some("random-table") => Some(HashFamily::RandomTable),
        Some(other) => return Err(Error::Usage(format!("unknown hash family {other:?}"))),
    };
    let ext = build_extractor(&j, &search)?;
    let value = serde_json::to_value(&ext).expect("extractor serializes");
    emit_json(value, RunManifest::new("extract", argv, &[(&a.source, &text)], Some(a.seed)), a.out.as_deref())
}

fn cmd_separation(a: &SeparationArgs, argv: &[String]) -> Result<()> {
    let text = read_text(&a.game)?;
    let game = parse_game(&text)?;
    let check = sample_check_separation(&game, &a.w1, &a.w2, a.samples, a.seed)?;
    let value = serde_json::to_value(&check).expect("check serializes");
    emit_json(value, RunManifest::new("separation", argv, &[(&a.game, &text)], Some(a.seed)), a.out.as_deref())
}

fn dispatch(cli: &Cli, argv: &[String]) -> Result<()> {
    match &cli.command {
        Command::Value(a) => cmd_value(a, argv),
        Command::Bounds(a) => cmd_bounds(a, argv),
        Command::Simulate(a) => cmd_simulate(a, argv),
        Command::Team(a) => cmd_team(a, argv),
        Command::Extract(a) => cmd_extract(a, argv),
        Command::Separation(a) => cmd_separation(a, argv),
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
