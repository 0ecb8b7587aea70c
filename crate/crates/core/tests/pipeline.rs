use hypermatch::affinity::{build_affinity, sample_hyperedges, HyperedgeSet, PointSet};
use hypermatch::bench::{self, SweepConfig, SyntheticConfig};
use hypermatch::oracle::brute_force;
use hypermatch::solver::{qppg_solve, Mode, SolverConfig, StopReason};
use hypermatch::{matching_score, AssignmentVector, SparseAffinityTensor};
use proptest::prelude::*;

fn instance(n1: usize, n2: usize, noise: f64, seed: u64) -> (bench::SyntheticInstance, SparseAffinityTensor) {
    let syn = SyntheticConfig {
        n1,
        n2,
        noise_sigma: noise,
        rotation: 0.4,
        scale: 1.5,
        seed,
        ..SyntheticConfig::default()
    };
    let inst = bench::gen_synthetic(&syn).unwrap();
    let e1 = sample_hyperedges(&inst.v1, n1 * n2, seed).unwrap();
    let t = build_affinity(&inst.v1, &inst.v2, &e1, 100).unwrap();
    (inst, t)
}

#[test]
fn files_round_trip_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, t) = instance(10, 12, 0.01, 3);

    let v1_path = dir.path().join("V1.csv");
    inst.v1.write_csv(std::fs::File::create(&v1_path).unwrap()).unwrap();
    let v1 = PointSet::read_csv(std::fs::File::open(&v1_path).unwrap()).unwrap();
    assert_eq!(v1, inst.v1);

    let mut truth = Vec::new();
    bench::write_truth(&inst.truth, &mut truth).unwrap();
    assert_eq!(bench::read_truth(truth.as_slice()).unwrap(), inst.truth);

    let edges = sample_hyperedges(&v1, 120, 3).unwrap();
    let mut buf = Vec::new();
    edges.write_csv(&mut buf).unwrap();
    assert_eq!(HyperedgeSet::read_csv(buf.as_slice(), 10).unwrap(), edges);

    let t_path = dir.path().join("T.txt");
    t.write_text(std::fs::File::create(&t_path).unwrap()).unwrap();
    let back = SparseAffinityTensor::read_text(std::io::BufReader::new(std::fs::File::open(&t_path).unwrap())).unwrap();
    assert_eq!(back, t);

    let a = qppg_solve(&t, &SolverConfig::default()).unwrap();
    let b = qppg_solve(&back, &SolverConfig::default()).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn noiseless_instances_are_recovered() {
    for seed in 0..5 {
        let (inst, t) = instance(15, 15, 0.0, seed);
        let r = qppg_solve(&t, &SolverConfig::default()).unwrap();
        assert_eq!(bench::accuracy(&r.assignment, &inst.truth).unwrap(), 1.0, "seed {seed}");
        assert!(r.converged);
    }
}

#[test]
fn outliers_do_not_break_recovery() {
    let (inst, t) = instance(10, 15, 0.0, 11);
    let r = qppg_solve(&t, &SolverConfig::default()).unwrap();
    assert_eq!(bench::accuracy(&r.assignment, &inst.truth).unwrap(), 1.0);
}

#[test]
fn permutation_mode_returns_a_valid_assignment() {
    let (inst, t) = instance(12, 12, 0.0, 5);
    let cfg = SolverConfig {
        mode: Mode::RowAndColumn,
        ..SolverConfig::default()
    };
    let r = qppg_solve(&t, &cfg).unwrap();
    assert_eq!(r.assignment.n1(), 12);
    assert_eq!(bench::accuracy(&r.assignment, &inst.truth).unwrap(), 1.0);
}

#[test]
fn solver_never_beats_enumeration() {
    for seed in 0..10 {
        let (_, t) = instance(4, 5, 0.05, seed);
        let r = qppg_solve(&t, &SolverConfig::default()).unwrap();
        let (best, score) = brute_force(&t, Mode::Row).unwrap();
        assert!(r.score <= score);
        assert_eq!(matching_score(&t, &best), score);
    }
}

#[test]
fn iteration_cap_is_reported() {
    let (_, t) = instance(10, 10, 0.0, 2);
    let cfg = SolverConfig {
        max_outer: 3,
        ..SolverConfig::default()
    };
    let r = qppg_solve(&t, &cfg).unwrap();
    if r.outer_iterations == 3 && r.stop_reason == StopReason::IterationLimit {
        assert!(!r.converged);
    }
    assert!(r.outer_iterations <= 3);
    assert_eq!(r.trace.len(), r.outer_iterations);
}

#[test]
fn sweep_produces_rows_and_means() {
    let sweep = SweepConfig::from_kv("n1 = 6, 8\nnoise = 0, 0.05\ns = 30\ntrials = 2\nseed = 1\n").unwrap();
    let report = bench::run_experiment(&sweep).unwrap();
    assert_eq!(report.rows.len(), 2 * 2 * 2);
    assert_eq!(report.summaries.len(), 4);
    let csv = report.to_csv();
    assert!(csv.starts_with(bench::RESULTS_HEADER));
    assert_eq!(csv.lines().filter(|l| l.contains(",mean,")).count(), 4);
    assert_eq!(bench::run_experiment(&sweep).unwrap().rows.len(), report.rows.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rounded_output_is_always_a_row_assignment(seed in 0u64..500, n1 in 3usize..8, extra in 0usize..3) {
        let (_, t) = instance(n1, n1 + extra, 0.03, seed);
        let r = qppg_solve(&t, &SolverConfig::default()).unwrap();
        prop_assert_eq!(r.assignment.n1(), n1);
        prop_assert!(r.assignment.columns().iter().all(|&c| c < n1 + extra));
        prop_assert!(r.x.as_slice().iter().all(|&v| (0.0..=10_000.0).contains(&v)));
        prop_assert!(r.support_history.iter().all(|&s| s <= n1 * (n1 + extra)));
        let sigmas: Vec<f64> = r.trace.iter().map(|row| row.sigma).collect();
        prop_assert!(sigmas.windows(2).all(|w| w[1] >= w[0] && w[1] <= 1e5));
        prop_assert_eq!(r.score, -t.objective(&r.assignment.to_vector()).unwrap());
    }

    #[test]
    fn objective_is_cubic_in_scaling(seed in 0u64..200, c in 0.1f64..3.0) {
        let (_, t) = instance(5, 5, 0.02, seed);
        let x = AssignmentVector::filled(5, 5, 0.3);
        let y = AssignmentVector::filled(5, 5, 0.3 * c);
        let fx = t.objective(&x).unwrap();
        let fy = t.objective(&y).unwrap();
        prop_assert!((fy - c.powi(3) * fx).abs() <= 1e-9 * fx.abs().max(1.0));
    }
}
