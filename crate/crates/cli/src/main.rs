use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use hypermatch::affinity::{build_affinity, sample_hyperedges, PointSet};
use hypermatch::bench::{self, SweepConfig, SyntheticConfig};
use hypermatch::oracle::brute_force;
use hypermatch::solver::{self, check_stationarity, qppg_solve, Mode, SolverConfig};
use hypermatch::{AssignmentVector, SparseAffinityTensor};

#[derive(Parser)]
#[command(name = "hypermatch", version, about = "Hypergraph matching of 2-D point sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic pair of point sets and the ground-truth matching.
    Gen {
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        n2: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        rotation: f64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Prepended to V1.csv, V2.csv and truth.csv (a directory needs a trailing slash).
        #[arg(long, default_value = "")]
        out_prefix: String,
    },
    /// Sample hyperedges on V1 and build the affinity tensor.
    Tensorize {
        #[arg(long)]
        v1: PathBuf,
        #[arg(long)]
        v2: PathBuf,
        /// Neighbours kept per hyperedge.
        #[arg(long, default_value_t = 100)]
        s: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the penalty solver and write the result JSON and iteration trace.
    Solve {
        #[arg(long)]
        tensor: PathBuf,
        /// `row` or `perm`; overrides the config file.
        #[arg(long)]
        mode: Option<Mode>,
        /// `key = value` file with solver settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ground truth CSV; adds accuracy to the result.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Trace CSV path, by default next to `--out` with a `.trace.csv` suffix.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also write the final iterate (before rounding).
        #[arg(long)]
        x_out: Option<PathBuf>,
    },
    /// Exhaustive search for the best binary assignment of a small instance.
    Oracle {
        #[arg(long)]
        tensor: PathBuf,
        #[arg(long, default_value = "row")]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a synthetic parameter sweep.
    Bench {
        #[arg(long)]
        sweep_config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stationarity diagnostics for an iterate of the penalty subproblem.
    Check {
        #[arg(long)]
        tensor: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        sigma: f64,
        #[arg(long = "M", default_value_t = 10_000.0)]
        m: f64,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_tensor(path: &Path) -> Result<SparseAffinityTensor> {
    SparseAffinityTensor::from_text(&read(path)?).with_context(|| format!("parsing tensor {}", path.display()))
}

fn load_points(path: &Path) -> Result<PointSet> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    PointSet::read_csv(BufReader::new(file)).with_context(|| format!("parsing points {}", path.display()))
}

fn gen(cfg: SyntheticConfig, prefix: &str) -> Result<()> {
    let inst = bench::gen_synthetic(&cfg)?;
    let path = |name: &str| PathBuf::from(format!("{prefix}{name}"));
    let mut buf = Vec::new();
    inst.v1.write_csv(&mut buf)?;
    fs::write(path("V1.csv"), &buf)?;
    buf.clear();
    inst.v2.write_csv(&mut buf)?;
    fs::write(path("V2.csv"), &buf)?;
    buf.clear();
    bench::write_truth(&inst.truth, &mut buf)?;
    fs::write(path("truth.csv"), &buf)?;
    Ok(())
}

fn tensorize(v1: &Path, v2: &Path, s: usize, seed: u64, out: &Path) -> Result<()> {
    let v1 = load_points(v1)?;
    let v2 = load_points(v2)?;
    let edges = sample_hyperedges(&v1, v1.size() * v2.size(), seed)?;
    let t = build_affinity(&v1, &v2, &edges, s)?;
    write(out, &t.to_text())
}

#[allow(clippy::too_many_arguments)]
fn solve(
    tensor: &Path,
    mode: Option<Mode>,
    config: Option<&Path>,
    truth: Option<&Path>,
    out: &Path,
    trace: Option<&Path>,
    x_out: Option<&Path>,
) -> Result<()> {
    let t = load_tensor(tensor)?;
    let mut cfg = match config {
        Some(p) => SolverConfig::from_kv(&read(p)?).with_context(|| format!("parsing config {}", p.display()))?,
        None => SolverConfig::default(),
    };
    if let Some(m) = mode {
        cfg.mode = m;
    }
    let mut result = qppg_solve(&t, &cfg)?;
    if let Some(p) = truth {
        let truth = bench::read_truth(read(p)?.as_bytes())?;
        result.accuracy = Some(bench::accuracy(&result.assignment, &truth)?);
    }
    write(out, &(result.to_json() + "\n"))?;
    let trace_path = match trace {
        Some(p) => p.to_path_buf(),
        None => out.with_extension("trace.csv"),
    };
    write(&trace_path, &solver::trace_csv(&result.trace))?;
    if let Some(p) = x_out {
        write(p, &result.x.to_text())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleJson<'a> {
    mode: String,
    assignment: &'a [usize],
    score: f64,
}

fn oracle(tensor: &Path, mode: Mode, out: Option<&Path>) -> Result<()> {
    let t = load_tensor(tensor)?;
    let (best, score) = brute_force(&t, mode)?;
    let json = serde_json::to_string_pretty(&OracleJson {
        mode: mode.to_string(),
        assignment: best.columns(),
        score,
    })? + "\n";
    match out {
        Some(p) => write(p, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn run_bench(sweep_config: &Path, out: &Path) -> Result<()> {
    let sweep = SweepConfig::from_kv(&read(sweep_config)?)
        .with_context(|| format!("parsing sweep config {}", sweep_config.display()))?;
    let report = bench::run_experiment(&sweep)?;
    write(out, &report.to_csv())
}

#[derive(Serialize)]
struct CheckJson {
    kkt_residual: f64,
    tolerance: f64,
    h: Vec<f64>,
    upper_bounds: Vec<f64>,
    support_size: usize,
    all_pass: bool,
}

fn check(tensor: &Path, x: &Path, sigma: f64, m: f64) -> Result<()> {
    let t = load_tensor(tensor)?;
    let x = AssignmentVector::from_text(&read(x)?).with_context(|| format!("parsing iterate {}", x.display()))?;
    if x.n1() != t.n1() || x.n2() != t.n2() {
        bail!(
            "iterate is {}x{} but the tensor is {}x{}",
            x.n1(),
            x.n2(),
            t.n1(),
            t.n2()
        );
    }
    let report = check_stationarity(&t, &x, sigma, m)?;
    let json = CheckJson {
        kkt_residual: report.kkt_residual,
        tolerance: report.tolerance,
        h: report.blocks.iter().map(|b| b.h).collect(),
        upper_bounds: report.blocks.iter().map(|b| b.upper).collect(),
        support_size: x.support_size(SolverConfig::default().support_tau),
        all_pass: report.all_pass,
    };
    println!("{}", serde_json::to_string_pretty(&json)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            n1,
            n2,
            noise,
            seed,
            rotation,
            scale,
            out_prefix,
        } => gen(
            SyntheticConfig {
                n1,
                n2,
                noise_sigma: noise,
                rotation,
                scale,
                seed,
                ..SyntheticConfig::default()
            },
            &out_prefix,
        ),
        Command::Tensorize { v1, v2, s, seed, out } => tensorize(&v1, &v2, s, seed, &out),
        Command::Solve {
            tensor,
            mode,
            config,
            truth,
            out,
            trace,
            x_out,
        } => solve(
            &tensor,
            mode,
            config.as_deref(),
            truth.as_deref(),
            &out,
            trace.as_deref(),
            x_out.as_deref(),
        ),
        Command::Oracle { tensor, mode, out } => oracle(&tensor, mode, out.as_deref()),
        Command::Bench { sweep_config, out } => run_bench(&sweep_config, &out),
        Command::Check { tensor, x, sigma, m } => check(&tensor, &x, sigma, m),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
