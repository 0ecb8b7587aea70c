//! Projection onto binary row assignments, support sparsification of relaxed
//! minimizers, and the matching score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{AssignmentVector, SparseAffinityTensor};

/// A binary assignment with exactly one selected column per row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryAssignment {
    columns: Vec<usize>,
    n2: usize,
}

impl BinaryAssignment {
    pub fn new(columns: Vec<usize>, n2: usize) -> Result<Self> {
        if let Some(&c) = columns.iter().find(|&&c| c >= n2) {
            return Err(Error::IndexOutOfRange { index: c, limit: n2 });
        }
        Ok(Self { columns, n2 })
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn n1(&self) -> usize {
        self.columns.len()
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    /// Vectorized form `x_B` with a single 1 per block.
    pub fn to_vector(&self) -> AssignmentVector {
        let mut x = AssignmentVector::zeros(self.n1(), self.n2);
        for (i, &c) in self.columns.iter().enumerate() {
            x.block_mut(i)[c] = 1.0;
        }
        x
    }

    /// Indices `i * n2 + columns[i]` of the selected variables.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.columns
            .iter()
            .enumerate()
            .map(move |(i, &c)| i * self.n2 + c)
    }

    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.n2];
        self.columns
            .iter()
            .all(|&c| !std::mem::replace(&mut seen[c], true))
    }
}

/// First index attaining the block maximum.
fn argmax_first(block: &[f64]) -> usize {
    let mut best = 0;
    for (p, &v) in block.iter().enumerate().skip(1) {
        if v > block[best] {
            best = p;
        }
    }
    best
}

/// Nearest binary assignment: the largest entry of each block, lowest index on ties.
pub fn nearest_assignment(x: &AssignmentVector) -> BinaryAssignment {
    BinaryAssignment {
        columns: x.blocks().take(x.n1()).map(argmax_first).collect(),
        n2: x.n2(),
    }
}

/// Feasibility band used when checking that each block of a relaxed point sums to one.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Collapses every block with more than one positive entry onto its largest
/// entry (lowest index on ties), yielding a point with exactly `n1` nonzeros.
///
/// For a stationary point of the simplex relaxation the objective value is
/// unchanged; callers that need that guarantee should compare the objective
/// before and after.
pub fn sparsify_minimizer(t: &SparseAffinityTensor, y: &AssignmentVector) -> Result<AssignmentVector> {
    if y.n1() != t.n1() || y.n2() != t.n2() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            actual: y.len(),
        });
    }
    for (i, block) in y.blocks().enumerate() {
        let sum: f64 = block.iter().sum();
        let in_box = block.iter().all(|&v| (0.0..=1.0).contains(&v));
        if (sum - 1.0).abs() > FEASIBILITY_TOL || !in_box {
            return Err(Error::Infeasible { block: i, sum });
        }
    }
    let mut x = y.clone();
    for i in 0..x.n1() {
        let block = x.block_mut(i);
        if block.iter().filter(|&&v| v > 0.0).count() > 1 {
            let p = argmax_first(block);
            block.fill(0.0);
            block[p] = 1.0;
        }
    }
    Ok(x)
}

/// `(1/6) A x_B^3`: total value of stored entries whose three indices are all selected.
pub fn matching_score(t: &SparseAffinityTensor, b: &BinaryAssignment) -> f64 {
    let n2 = t.n2();
    let selected = |idx: usize| b.columns.get(idx / n2) == Some(&(idx % n2));
    t.triples()
        .iter()
        .filter(|tr| selected(tr.l) && selected(tr.j) && selected(tr.k))
        .map(|tr| tr.value)
        .sum()
}
