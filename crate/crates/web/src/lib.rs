//! Browser bindings. Each export takes plain numbers and returns a JSON
//! string that the page draws on a canvas.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use hypermatch::affinity::{build_affinity, sample_hyperedges};
use hypermatch::bench::{self, SyntheticConfig, SyntheticInstance};
use hypermatch::oracle::brute_force;
use hypermatch::solver::{qppg_solve, Mode, SolverConfig};

/// Largest size accepted by [`oracle_gap_json`].
pub const ORACLE_MAX_N: usize = 6;

#[derive(Serialize)]
struct Scene<'a> {
    v1: &'a [[f64; 2]],
    v2: &'a [[f64; 2]],
    truth: &'a [usize],
}

#[derive(Serialize)]
struct Matched<'a> {
    #[serde(flatten)]
    scene: Scene<'a>,
    assignment: &'a [usize],
    accuracy: f64,
    score: f64,
    iterations: usize,
    support_history: &'a [usize],
    sigma_history: Vec<f64>,
    tensor_entries: usize,
}

#[derive(Serialize)]
struct OracleGap<'a> {
    solver_assignment: &'a [usize],
    solver_score: f64,
    optimal_assignment: &'a [usize],
    optimal_score: f64,
    ratio: f64,
}

fn instance(n1: usize, n2: usize, noise: f64, rotation: f64, seed: u64) -> Result<SyntheticInstance, String> {
    let cfg = SyntheticConfig {
        n1,
        n2,
        noise_sigma: noise,
        rotation,
        seed,
        ..SyntheticConfig::default()
    };
    bench::gen_synthetic(&cfg).map_err(|e| e.to_string())
}

fn scene(inst: &SyntheticInstance) -> Scene<'_> {
    Scene {
        v1: inst.v1.points(),
        v2: inst.v2.points(),
        truth: &inst.truth,
    }
}

/// Point sets and ground truth of one synthetic instance.
pub fn scene_json(n1: usize, n2: usize, noise: f64, rotation: f64, seed: u64) -> Result<String, String> {
    let inst = instance(n1, n2, noise, rotation, seed)?;
    serde_json::to_string(&scene(&inst)).map_err(|e| e.to_string())
}

/// Builds the affinity tensor with `s` neighbours per hyperedge and solves.
#[allow(clippy::too_many_arguments)]
pub fn match_json(
    n1: usize,
    n2: usize,
    noise: f64,
    rotation: f64,
    seed: u64,
    s: usize,
    permutation: bool,
) -> Result<String, String> {
    let inst = instance(n1, n2, noise, rotation, seed)?;
    let edges = sample_hyperedges(&inst.v1, n1 * n2, seed).map_err(|e| e.to_string())?;
    let t = build_affinity(&inst.v1, &inst.v2, &edges, s).map_err(|e| e.to_string())?;
    let cfg = SolverConfig {
        mode: if permutation { Mode::RowAndColumn } else { Mode::Row },
        ..SolverConfig::default()
    };
    let r = qppg_solve(&t, &cfg).map_err(|e| e.to_string())?;
    let accuracy = bench::accuracy(&r.assignment, &inst.truth).map_err(|e| e.to_string())?;
    serde_json::to_string(&Matched {
        scene: scene(&inst),
        assignment: r.assignment.columns(),
        accuracy,
        score: r.score,
        iterations: r.outer_iterations,
        support_history: &r.support_history,
        sigma_history: r.trace.iter().map(|row| row.sigma).collect(),
        tensor_entries: t.nnz(),
    })
    .map_err(|e| e.to_string())
}

/// Solver score against the exhaustive optimum on a small square instance.
pub fn oracle_gap_json(n: usize, noise: f64, seed: u64, s: usize) -> Result<String, String> {
    if n > ORACLE_MAX_N {
        return Err(format!("n = {n} is too large for exhaustive search (at most {ORACLE_MAX_N})"));
    }
    let inst = instance(n, n, noise, 0.0, seed)?;
    let edges = sample_hyperedges(&inst.v1, n * n, seed).map_err(|e| e.to_string())?;
    let t = build_affinity(&inst.v1, &inst.v2, &edges, s).map_err(|e| e.to_string())?;
    let r = qppg_solve(&t, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let (best, best_score) = brute_force(&t, Mode::Row).map_err(|e| e.to_string())?;
    let ratio = if best_score > 0.0 { r.score / best_score } else { 1.0 };
    serde_json::to_string(&OracleGap {
        solver_assignment: r.assignment.columns(),
        solver_score: r.score,
        optimal_assignment: best.columns(),
        optimal_score: best_score,
        ratio,
    })
    .map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn generate(n1: usize, n2: usize, noise: f64, rotation: f64, seed: u32) -> Result<String, JsValue> {
    js(scene_json(n1, n2, noise, rotation, seed.into()))
}

#[wasm_bindgen]
pub fn match_points(
    n1: usize,
    n2: usize,
    noise: f64,
    rotation: f64,
    seed: u32,
    s: usize,
    permutation: bool,
) -> Result<String, JsValue> {
    js(match_json(n1, n2, noise, rotation, seed.into(), s, permutation))
}

#[wasm_bindgen]
pub fn oracle_gap(n: usize, noise: f64, seed: u32, s: usize) -> Result<String, JsValue> {
    js(oracle_gap_json(n, noise, seed.into(), s))
}
