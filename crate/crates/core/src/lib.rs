//! Hypergraph matching between two 2-D point sets.
//!
//! Matching maximizes the total affinity of corresponding point triples. The
//! affinity is a sparse symmetric order-3 tensor over the `n1 * n2`
//! assignment variables; the binary problem is relaxed to a box-constrained
//! quadratic penalty problem whose iterates quickly collapse onto one
//! nonzero per row, and the final iterate is rounded to the nearest binary
//! assignment.
//!
//! ```
//! use hypermatch::{affinity, bench, solver};
//!
//! let syn = bench::SyntheticConfig { n1: 8, n2: 8, seed: 3, ..Default::default() };
//! let inst = bench::gen_synthetic(&syn).unwrap();
//! let edges = affinity::sample_hyperedges(&inst.v1, 64, 1).unwrap();
//! let tensor = affinity::build_affinity(&inst.v1, &inst.v2, &edges, 50).unwrap();
//! let result = solver::qppg_solve(&tensor, &solver::SolverConfig::default()).unwrap();
//! assert_eq!(result.assignment.n1(), 8);
//! ```

pub mod affinity;
pub mod bench;
pub mod error;
pub mod knn;
pub mod oracle;
pub mod rounding;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use rounding::{matching_score, nearest_assignment, BinaryAssignment};
pub use solver::{qppg_solve, MatchResult, Mode, SolverConfig};
pub use tensor::{AssignmentVector, SparseAffinityTensor, Triple};
