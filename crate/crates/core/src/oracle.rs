//! Independent reference computations: exhaustive enumeration of binary
//! assignments, central finite differences, and the literal six-permutation
//! expansion of the cubic form. Nothing on the solver path calls into here.

use crate::error::{Error, Result};
use crate::rounding::{matching_score, BinaryAssignment};
use crate::solver::Mode;
use crate::tensor::SparseAffinityTensor;

/// Upper bound on `n2^n1` for row-mode enumeration.
pub const MAX_ROW_ASSIGNMENTS: u128 = 10_000_000;
/// Largest `n1` accepted for permutation enumeration.
pub const MAX_PERMUTATION_ROWS: usize = 9;
/// Largest dimension accepted by [`full_expand_objective`].
pub const MAX_EXPAND_DIM: usize = 200;

/// Best binary assignment by exhaustive enumeration. Ties go to the
/// lexicographically smallest column vector.
pub fn brute_force(t: &SparseAffinityTensor, mode: Mode) -> Result<(BinaryAssignment, f64)> {
    let (n1, n2) = (t.n1(), t.n2());
    match mode {
        Mode::Row => {
            let count = (n2 as u128).checked_pow(n1 as u32).unwrap_or(u128::MAX);
            if count > MAX_ROW_ASSIGNMENTS {
                return Err(Error::TooLarge(format!(
                    "n2^n1 = {n2}^{n1} exceeds {MAX_ROW_ASSIGNMENTS}"
                )));
            }
        }
        Mode::RowAndColumn => {
            if n1 != n2 {
                return Err(Error::NotSquare { n1, n2 });
            }
            if n1 > MAX_PERMUTATION_ROWS {
                return Err(Error::TooLarge(format!(
                    "n1 = {n1} exceeds {MAX_PERMUTATION_ROWS} for permutation enumeration"
                )));
            }
        }
    }

    let mut cols = vec![0usize; n1];
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let valid = match mode {
            Mode::Row => true,
            Mode::RowAndColumn => {
                let mut seen = vec![false; n2];
                cols.iter().all(|&c| !std::mem::replace(&mut seen[c], true))
            }
        };
        if valid {
            let b = BinaryAssignment::new(cols.clone(), n2)?;
            let score = matching_score(t, &b);
            // enumeration is lexicographic, so strict `>` keeps the smallest tie
            if best.as_ref().is_none_or(|(_, s)| score > *s) {
                best = Some((cols.clone(), score));
            }
        }
        // odometer increment, last row fastest
        let mut pos = n1;
        loop {
            if pos == 0 {
                let (c, s) = best.expect("at least one assignment enumerated");
                return Ok((BinaryAssignment::new(c, n2)?, s));
            }
            pos -= 1;
            cols[pos] += 1;
            if cols[pos] < n2 {
                break;
            }
            cols[pos] = 0;
        }
    }
}

/// Central differences `(f(x + h e_l) - f(x - h e_l)) / 2h` for every coordinate.
pub fn fd_gradient<F>(objective: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut work = x.to_vec();
    (0..x.len())
        .map(|l| {
            work[l] = x[l] + step;
            let fp = objective(&work);
            work[l] = x[l] - step;
            let fm = objective(&work);
            work[l] = x[l];
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

/// `-(1/6) sum_{l,j,k} A_ljk x_l x_j x_k` with every stored entry expanded
/// into its six index permutations.
pub fn full_expand_objective(t: &SparseAffinityTensor, x: &[f64]) -> Result<f64> {
    if t.dim() > MAX_EXPAND_DIM {
        return Err(Error::TooLarge(format!(
            "n = {} exceeds {MAX_EXPAND_DIM} for full expansion",
            t.dim()
        )));
    }
    if x.len() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            actual: x.len(),
        });
    }
    let mut acc = 0.0;
    for tr in t.triples() {
        let (a, b, c) = (tr.l, tr.j, tr.k);
        for (p, q, r) in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)] {
            acc += tr.value * x[p] * x[q] * x[r];
        }
    }
    Ok(-acc / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Triple;

    #[test]
    fn brute_force_examples() {
        let t = SparseAffinityTensor::new(3, 3, vec![Triple { l: 0, j: 4, k: 8, value: 1.0 }]).unwrap();
        let (b, s) = brute_force(&t, Mode::Row).unwrap();
        assert_eq!(b.columns(), &[0, 1, 2]);
        assert_eq!(s, 1.0);
        let (b, s) = brute_force(&t, Mode::RowAndColumn).unwrap();
        assert_eq!(b.columns(), &[0, 1, 2]);
        assert_eq!(s, 1.0);

        let (b, s) = brute_force(&SparseAffinityTensor::empty(4, 3), Mode::Row).unwrap();
        assert_eq!(b.columns(), &[0, 0, 0, 0]);
        assert_eq!(s, 0.0);
        let (b, _) = brute_force(&SparseAffinityTensor::empty(3, 3), Mode::RowAndColumn).unwrap();
        assert_eq!(b.columns(), &[0, 1, 2]);

        let (_, s) = brute_force(&SparseAffinityTensor::empty(2, 2), Mode::Row).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn brute_force_guards() {
        assert!(matches!(
            brute_force(&SparseAffinityTensor::empty(8, 8), Mode::Row),
            Err(Error::TooLarge(_))
        ));
        assert!(brute_force(&SparseAffinityTensor::empty(7, 10), Mode::Row).is_ok());
        assert!(matches!(
            brute_force(&SparseAffinityTensor::empty(10, 10), Mode::RowAndColumn),
            Err(Error::TooLarge(_))
        ));
        assert!(matches!(
            brute_force(&SparseAffinityTensor::empty(3, 4), Mode::RowAndColumn),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn fd_examples() {
        let g = fd_gradient(|_| 3.5, &[1.0, 2.0], 1e-3);
        assert_eq!(g, vec![0.0, 0.0]);
        let c = [2.0, -1.0, 0.5];
        let g = fd_gradient(|x| x.iter().zip(&c).map(|(a, b)| a * b).sum(), &[0.3, 0.1, 4.0], 1e-5);
        for (a, b) in g.iter().zip(&c) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn expansion_examples() {
        let t = SparseAffinityTensor::new(3, 3, vec![Triple { l: 0, j: 3, k: 6, value: 2.0 }]).unwrap();
        assert_eq!(full_expand_objective(&t, &[1.0; 9]).unwrap(), -2.0);
        assert_eq!(full_expand_objective(&t, &[0.0; 9]).unwrap(), 0.0);
        assert!(full_expand_objective(&SparseAffinityTensor::empty(15, 15), &[0.0; 225]).is_err());
    }
}
