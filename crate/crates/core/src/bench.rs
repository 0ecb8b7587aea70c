//! Synthetic matching instances, accuracy metric and parameter sweeps.
//!
//! An instance draws `n1` standard-normal points, maps them through a 2-D
//! similarity transform (rotation + uniform scale), perturbs them with
//! Gaussian noise, pads with `n2 - n1` standard-normal outliers and shuffles.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::affinity::{build_affinity, sample_hyperedges, PointSet};
use crate::error::{Error, Result};
use crate::rounding::BinaryAssignment;
use crate::solver::{qppg_solve, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n1: usize,
    pub n2: usize,
    pub noise_sigma: f64,
    pub rotation: f64,
    pub scale: f64,
    pub seed: u64,
    pub trials: usize,
    /// Shuffle the second point set. Without shuffling the ground truth is
    /// the identity on the first `n1` points.
    pub shuffle: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n1: 20,
            n2: 20,
            noise_sigma: 0.0,
            rotation: 0.0,
            scale: 1.0,
            seed: 0,
            trials: 100,
            shuffle: true,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n1 > self.n2 {
            return Err(Error::Config(format!(
                "n1 must not exceed n2 (got {} > {})",
                self.n1, self.n2
            )));
        }
        if self.n1 < 3 {
            return Err(Error::Config(format!("n1 must be at least 3, got {}", self.n1)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise must be nonnegative, got {}", self.noise_sigma)));
        }
        if !(self.scale > 0.0) {
            return Err(Error::Config(format!("scale must be positive, got {}", self.scale)));
        }
        if !self.rotation.is_finite() {
            return Err(Error::Config("rotation must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub v1: PointSet,
    pub v2: PointSet,
    /// `truth[i]` is the index in `v2` of the image of point `i` of `v1`.
    pub truth: Vec<usize>,
}

/// Instance for trial 0.
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticInstance> {
    gen_synthetic_trial(cfg, 0)
}

/// Instance for a given trial; each trial reads its own stream of the seeded generator.
pub fn gen_synthetic_trial(cfg: &SyntheticConfig, trial: u64) -> Result<SyntheticInstance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };

    let v1: Vec<[f64; 2]> = (0..cfg.n1).map(|_| [normal(), normal()]).collect();
    let (sin, cos) = cfg.rotation.sin_cos();
    let mut v2: Vec<[f64; 2]> = v1
        .iter()
        .map(|p| {
            let x = cfg.scale * (cos * p[0] - sin * p[1]);
            let y = cfg.scale * (sin * p[0] + cos * p[1]);
            [x + cfg.noise_sigma * normal(), y + cfg.noise_sigma * normal()]
        })
        .collect();
    v2.extend((cfg.n1..cfg.n2).map(|_| [normal(), normal()]));

    let mut order: Vec<usize> = (0..cfg.n2).collect();
    if cfg.shuffle {
        order.shuffle(&mut rng);
    }
    // position j of the shuffled set holds original point order[j]
    let shuffled: Vec<[f64; 2]> = order.iter().map(|&o| v2[o]).collect();
    let mut truth = vec![0; cfg.n1];
    for (j, &o) in order.iter().enumerate() {
        if o < cfg.n1 {
            truth[o] = j;
        }
    }
    Ok(SyntheticInstance {
        v1: PointSet::new(v1)?,
        v2: PointSet::new(shuffled)?,
        truth,
    })
}

/// Fraction of rows whose predicted column equals the ground truth.
pub fn accuracy(pred: &BinaryAssignment, truth: &[usize]) -> Result<f64> {
    if pred.n1() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: pred.n1(),
        });
    }
    if truth.is_empty() {
        return Ok(1.0);
    }
    let correct = pred
        .columns()
        .iter()
        .zip(truth)
        .filter(|(a, b)| a == b)
        .count();
    Ok(correct as f64 / truth.len() as f64)
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthRecord {
    row: usize,
    col: usize,
}

/// Writes the ground truth as `row,col` CSV.
pub fn write_truth<W: Write>(truth: &[usize], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for (row, &col) in truth.iter().enumerate() {
        wtr.serialize(TruthRecord { row, col })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(r: R) -> Result<Vec<usize>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut truth = Vec::new();
    for (i, rec) in rdr.deserialize::<TruthRecord>().enumerate() {
        let rec = rec?;
        if rec.row != i {
            return Err(Error::InvalidInput(format!(
                "truth rows must be 0..n1 in order: row {i} has index {}",
                rec.row
            )));
        }
        truth.push(rec.col);
    }
    Ok(truth)
}

/// Grid of synthetic experiments. Every combination of the list-valued
/// fields is run `trials` times.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n1: Vec<usize>,
    /// Empty means `n2 = n1`.
    pub n2: Vec<usize>,
    pub noise: Vec<f64>,
    pub s: Vec<usize>,
    pub m: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub rotation: f64,
    pub scale: f64,
    pub solver: SolverConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n1: vec![20],
            n2: Vec::new(),
            noise: vec![0.0, 0.025, 0.05, 0.1],
            s: vec![100],
            m: vec![10_000.0],
            trials: 100,
            seed: 0,
            rotation: 0.0,
            scale: 1.0,
            solver: SolverConfig::default(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("invalid value '{s}' for {key}")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{v}' for {key}")))
}

impl SweepConfig {
    /// Parses `key = value` lines. Grid keys (`n1`, `n2`, `noise`, `s`, `M`)
    /// take comma-separated lists; any other key is forwarded to the solver
    /// configuration.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected 'key = value', got '{line}'"),
                })?;
            let key = k.trim();
            let res = match key {
                "n1" => parse_list(key, v).map(|l| cfg.n1 = l),
                "n2" => parse_list(key, v).map(|l| cfg.n2 = l),
                "noise" => parse_list(key, v).map(|l| cfg.noise = l),
                "s" => parse_list(key, v).map(|l| cfg.s = l),
                "M" | "m" => parse_list(key, v).map(|l| cfg.m = l),
                "trials" => parse_one(key, v).map(|x| cfg.trials = x),
                "seed" => parse_one(key, v).map(|x| cfg.seed = x),
                "rotation" => parse_one(key, v).map(|x| cfg.rotation = x),
                "scale" => parse_one(key, v).map(|x| cfg.scale = x),
                _ => cfg.solver.set(key, v),
            };
            res.map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1.is_empty() || self.noise.is_empty() || self.s.is_empty() || self.m.is_empty() {
            return Err(Error::Config("n1, noise, s and M need at least one value".into()));
        }
        if !self.n2.is_empty() && self.n2.len() != self.n1.len() {
            return Err(Error::Config("n2 must be empty or pair up with n1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.s.contains(&0) {
            return Err(Error::Config("s must be at least 1".into()));
        }
        self.solver.validate()
    }

    fn sizes(&self) -> Vec<(usize, usize)> {
        if self.n2.is_empty() {
            self.n1.iter().map(|&n| (n, n)).collect()
        } else {
            self.n1.iter().copied().zip(self.n2.iter().copied()).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub n1: usize,
    pub n2: usize,
    pub noise: f64,
    pub s: usize,
    #[serde(rename = "M")]
    pub m: f64,
    pub trial: usize,
    pub accuracy: f64,
    pub score: f64,
    pub time_s: f64,
    pub outer_iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSummary {
    pub n1: usize,
    pub n2: usize,
    pub noise: f64,
    pub s: usize,
    pub m: f64,
    pub accuracy: f64,
    pub score: f64,
    pub time_s: f64,
    pub outer_iters: f64,
    pub converged: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    pub summaries: Vec<GridSummary>,
}

pub const RESULTS_HEADER: &str = "n1,n2,noise,s,M,trial,accuracy,score,time_s,outer_iters,converged";

impl ExperimentReport {
    /// Raw rows followed by one summary row per grid point whose `trial`
    /// column reads `mean` (and `converged` holds the converged fraction).
    pub fn to_csv(&self) -> String {
        let mut s = String::from(RESULTS_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.n1, r.n2, r.noise, r.s, r.m, r.trial, r.accuracy, r.score, r.time_s, r.outer_iters, r.converged
            ));
        }
        for g in &self.summaries {
            s.push_str(&format!(
                "{},{},{},{},{},mean,{},{},{},{},{}\n",
                g.n1, g.n2, g.noise, g.s, g.m, g.accuracy, g.score, g.time_s, g.outer_iters, g.converged
            ));
        }
        s
    }
}

/// Runs one synthetic trial end to end: instance, tensor, solve, accuracy.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    syn: &SyntheticConfig,
    trial: usize,
    s: usize,
    solver: &SolverConfig,
) -> Result<crate::solver::MatchResult> {
    let inst = gen_synthetic_trial(syn, trial as u64)?;
    let edge_seed = syn
        .seed
        .wrapping_add(trial as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let e1 = sample_hyperedges(&inst.v1, syn.n1 * syn.n2, edge_seed)?;
    let tensor = build_affinity(&inst.v1, &inst.v2, &e1, s)?;
    let mut result = qppg_solve(&tensor, solver)?;
    result.accuracy = Some(accuracy(&result.assignment, &inst.truth)?);
    Ok(result)
}

/// Sweeps the grid. A failing trial is recorded as a non-converged row with
/// zero accuracy and score, and the sweep moves on.
pub fn run_experiment(sweep: &SweepConfig) -> Result<ExperimentReport> {
    sweep.validate()?;
    let mut report = ExperimentReport::default();
    for (n1, n2) in sweep.sizes() {
        for &noise in &sweep.noise {
            for &s in &sweep.s {
                for &m in &sweep.m {
                    let syn = SyntheticConfig {
                        n1,
                        n2,
                        noise_sigma: noise,
                        rotation: sweep.rotation,
                        scale: sweep.scale,
                        seed: sweep.seed,
                        trials: sweep.trials,
                        shuffle: true,
                    };
                    let solver = SolverConfig {
                        m,
                        ..sweep.solver.clone()
                    };
                    let start = report.rows.len();
                    for trial in 0..sweep.trials {
                        let row = match run_trial(&syn, trial, s, &solver) {
                            Ok(r) => ExperimentRow {
                                n1,
                                n2,
                                noise,
                                s,
                                m,
                                trial,
                                accuracy: r.accuracy.unwrap_or(0.0),
                                score: r.score,
                                time_s: r.wall_time,
                                outer_iters: r.outer_iterations,
                                converged: r.converged,
                            },
                            Err(_) => ExperimentRow {
                                n1,
                                n2,
                                noise,
                                s,
                                m,
                                trial,
                                accuracy: 0.0,
                                score: 0.0,
                                time_s: 0.0,
                                outer_iters: 0,
                                converged: false,
                            },
                        };
                        report.rows.push(row);
                    }
                    let rows = &report.rows[start..];
                    let k = rows.len() as f64;
                    let mean = |f: fn(&ExperimentRow) -> f64| rows.iter().map(f).sum::<f64>() / k;
                    report.summaries.push(GridSummary {
                        n1,
                        n2,
                        noise,
                        s,
                        m,
                        accuracy: mean(|r| r.accuracy),
                        score: mean(|r| r.score),
                        time_s: mean(|r| r.time_s),
                        outer_iters: mean(|r| r.outer_iters as f64),
                        converged: mean(|r| f64::from(u8::from(r.converged))),
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_unshuffled_is_identity() {
        let cfg = SyntheticConfig {
            n1: 10,
            n2: 10,
            shuffle: false,
            ..Default::default()
        };
        let inst = gen_synthetic(&cfg).unwrap();
        assert_eq!(inst.v1, inst.v2);
        assert_eq!(inst.truth, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn generation_is_deterministic_and_trial_dependent() {
        let cfg = SyntheticConfig {
            n1: 12,
            n2: 15,
            noise_sigma: 0.05,
            rotation: 0.3,
            scale: 1.5,
            seed: 99,
            ..Default::default()
        };
        let a = gen_synthetic_trial(&cfg, 3).unwrap();
        assert_eq!(a, gen_synthetic_trial(&cfg, 3).unwrap());
        assert_ne!(a, gen_synthetic_trial(&cfg, 4).unwrap());
    }

    #[test]
    fn outliers_pad_second_set() {
        let cfg = SyntheticConfig {
            n1: 20,
            n2: 30,
            seed: 5,
            ..Default::default()
        };
        let inst = gen_synthetic(&cfg).unwrap();
        assert_eq!(inst.v1.size(), 20);
        assert_eq!(inst.v2.size(), 30);
        // noiseless + identity transform: every truth column holds its point
        for (i, &j) in inst.truth.iter().enumerate() {
            assert_eq!(inst.v1.points()[i], inst.v2.points()[j]);
        }
        let mut cols = inst.truth.clone();
        cols.sort();
        cols.dedup();
        assert_eq!(cols.len(), 20);
    }

    #[test]
    fn similarity_transform_is_applied() {
        let cfg = SyntheticConfig {
            n1: 5,
            n2: 5,
            rotation: std::f64::consts::FRAC_PI_2,
            scale: 2.0,
            shuffle: false,
            ..Default::default()
        };
        let inst = gen_synthetic(&cfg).unwrap();
        for (p, q) in inst.v1.points().iter().zip(inst.v2.points()) {
            assert!((q[0] + 2.0 * p[1]).abs() < 1e-12);
            assert!((q[1] - 2.0 * p[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = |f: fn(&mut SyntheticConfig)| {
            let mut c = SyntheticConfig::default();
            f(&mut c);
            gen_synthetic(&c).is_err()
        };
        assert!(bad(|c| c.n1 = 30));
        assert!(bad(|c| c.noise_sigma = -1.0));
        assert!(bad(|c| c.scale = 0.0));
    }

    #[test]
    fn accuracy_examples() {
        let truth: Vec<usize> = (0..30).collect();
        let b = BinaryAssignment::new(truth.clone(), 30).unwrap();
        assert_eq!(accuracy(&b, &truth).unwrap(), 1.0);
        let wrong = BinaryAssignment::new((0..30).map(|i| (i + 1) % 30).collect(), 30).unwrap();
        assert_eq!(accuracy(&wrong, &truth).unwrap(), 0.0);
        let half = BinaryAssignment::new((0..30).map(|i| if i < 15 { i } else { (i + 1) % 30 }).collect(), 30).unwrap();
        assert_eq!(accuracy(&half, &truth).unwrap(), 0.5);
        assert!(accuracy(&b, &truth[..10]).is_err());
    }

    #[test]
    fn truth_csv_round_trip() {
        let truth = vec![2, 0, 1];
        let mut buf = Vec::new();
        write_truth(&truth, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "row,col\n0,2\n1,0\n2,1\n");
        assert_eq!(read_truth(buf.as_slice()).unwrap(), truth);
    }

    #[test]
    fn sweep_config_parsing() {
        let cfg = SweepConfig::from_kv(
            "# figure-2 style\nn1 = 20\nM = 1, 100, 10000\nnoise = 0\ntrials = 3\nseed = 7\ninner_steps = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.n1, vec![20]);
        assert_eq!(cfg.m, vec![1.0, 100.0, 10000.0]);
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.solver.inner_steps, 2);
        assert!(SweepConfig::from_kv("bogus = 1\n").is_err());
        assert!(SweepConfig::from_kv("trials = 0\n").is_err());
        assert!(SweepConfig::from_kv("n1 20\n").is_err());
        assert_eq!(SweepConfig::default().trials, 100);
    }

    #[test]
    fn single_point_single_trial_sweep() {
        let sweep = SweepConfig {
            n1: vec![6],
            noise: vec![0.0],
            s: vec![20],
            trials: 1,
            seed: 1,
            ..Default::default()
        };
        let report = run_experiment(&sweep).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.summaries.len(), 1);
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], RESULTS_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[2].contains(",mean,"));
    }

    #[test]
    fn sweep_row_count_is_grid_times_trials() {
        let sweep = SweepConfig {
            n1: vec![5, 6],
            noise: vec![0.0, 0.05],
            s: vec![10],
            m: vec![1.0, 10000.0],
            trials: 2,
            seed: 3,
            ..Default::default()
        };
        let report = run_experiment(&sweep).unwrap();
        assert_eq!(report.rows.len(), 2 * 2 * 2 * 2);
        assert_eq!(report.summaries.len(), 8);
        assert_eq!(report.to_csv().lines().count(), 1 + 16 + 8);
    }
}
