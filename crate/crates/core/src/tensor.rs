//! Sparse symmetric order-3 affinity tensor and its contractions.
//!
//! Only canonical entries `l < j < k` are stored. Each one stands for the six
//! symmetric permutations of the full tensor, so the cubic form
//! `A x^3 = sum_{l,j,k} A_ljk x_l x_j x_k` equals six times the sum over stored
//! entries and the objective `f(x) = -(1/6) A x^3` is simply the negated sum.
//!
//! Indices are 0-based: row `r` and column `c` of the assignment matrix map to
//! `r * n2 + c`. Every stored entry touches three distinct rows (blocks).

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// One canonical entry of the tensor, `l < j < k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple {
    pub l: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

impl Triple {
    #[inline]
    pub fn key(&self) -> (usize, usize, usize) {
        (self.l, self.j, self.k)
    }
}

/// Nonnegative symmetric order-3 tensor over `n = n1 * n2` assignment variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffinityTensor {
    n1: usize,
    n2: usize,
    triples: Vec<Triple>,
}

/// The assignment variable `x`, laid out as `n1` consecutive blocks of length `n2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentVector {
    n1: usize,
    n2: usize,
    entries: Vec<f64>,
}

impl AssignmentVector {
    pub fn new(n1: usize, n2: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n1 * n2 {
            return Err(Error::DimensionMismatch {
                expected: n1 * n2,
                actual: entries.len(),
            });
        }
        Ok(Self { n1, n2, entries })
    }

    pub fn filled(n1: usize, n2: usize, value: f64) -> Self {
        Self {
            n1,
            n2,
            entries: vec![value; n1 * n2],
        }
    }

    pub fn ones(n1: usize, n2: usize) -> Self {
        Self::filled(n1, n2, 1.0)
    }

    pub fn zeros(n1: usize, n2: usize) -> Self {
        Self::filled(n1, n2, 0.0)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.entries
    }

    /// Block `i`, i.e. row `i` of the assignment matrix.
    pub fn block(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n2..(i + 1) * self.n2]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.entries[i * self.n2..(i + 1) * self.n2]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.n2.max(1))
    }

    /// Number of entries strictly greater than `tau`.
    pub fn support_size(&self, tau: f64) -> usize {
        self.entries.iter().filter(|&&v| v > tau).count()
    }

    /// Text form: a header `n1 n2`, then one line of `n2` values per block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.n1, self.n2);
        for block in self.blocks().take(self.n1) {
            let row: Vec<String> = block.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: hline,
                msg: format!("expected 'n1 n2', got '{header}'"),
            });
        }
        let n1: usize = parse_field(fields[0], hline)?;
        let n2: usize = parse_field(fields[1], hline)?;
        let mut entries = Vec::with_capacity(n1 * n2);
        for (lineno, line) in lines {
            let row = line
                .split_whitespace()
                .map(|f| parse_field::<f64>(f, lineno))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != n2 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {n2} values, got {}", row.len()),
                });
            }
            entries.extend(row);
        }
        Self::new(n1, n2, entries)
    }
}

impl SparseAffinityTensor {
    /// Builds a tensor from entries that already satisfy every invariant.
    /// Entries may arrive in any order; they are sorted lexicographically.
    pub fn new(n1: usize, n2: usize, triples: Vec<Triple>) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidTensor(format!(
                "n1 and n2 must be positive (got {n1}, {n2})"
            )));
        }
        let mut triples = triples;
        let n = n1 * n2;
        for t in &triples {
            check_triple(t, n, n2)?;
        }
        triples.sort_by_key(Triple::key);
        if let Some(w) = triples.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(Error::InvalidTensor(format!(
                "duplicate entry ({}, {}, {})",
                w[0].l, w[0].j, w[0].k
            )));
        }
        Ok(Self { n1, n2, triples })
    }

    pub fn empty(n1: usize, n2: usize) -> Self {
        Self {
            n1,
            n2,
            triples: Vec::new(),
        }
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn dim(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn nnz(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    fn check_dims(&self, x: &AssignmentVector) -> Result<()> {
        if x.n1 != self.n1 || x.n2 != self.n2 {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// `f(x) = -(1/6) A x^3`.
    pub fn objective(&self, x: &AssignmentVector) -> Result<f64> {
        self.check_dims(x)?;
        Ok(self.objective_raw(&x.entries))
    }

    /// [`objective`](Self::objective) on a plain slice of length `n1 * n2`.
    pub fn objective_slice(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        Ok(self.objective_raw(x))
    }

    pub(crate) fn objective_raw(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for t in &self.triples {
            acc += t.value * x[t.l] * x[t.j] * x[t.k];
        }
        -acc
    }

    /// `grad f(x)`.
    pub fn gradient(&self, x: &AssignmentVector) -> Result<Vec<f64>> {
        self.check_dims(x)?;
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(&x.entries, &mut g);
        Ok(g)
    }

    pub fn gradient_slice(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(x, &mut g);
        Ok(g)
    }

    /// Overwrites `out` with `grad f(x)`. Both slices must have length `n`.
    pub(crate) fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.triples {
            let (xl, xj, xk) = (x[t.l], x[t.j], x[t.k]);
            out[t.l] -= t.value * xj * xk;
            out[t.j] -= t.value * xl * xk;
            out[t.k] -= t.value * xl * xj;
        }
    }

    /// `f^i = x_i^T grad_{x_i} f(x)`: the part of the objective carried by block `i`.
    pub fn block_objective(&self, x: &AssignmentVector, i: usize) -> Result<f64> {
        self.check_dims(x)?;
        if i >= self.n1 {
            return Err(Error::IndexOutOfRange {
                index: i,
                limit: self.n1,
            });
        }
        let g = self.gradient(x)?;
        let lo = i * self.n2;
        let hi = lo + self.n2;
        Ok(x.entries[lo..hi]
            .iter()
            .zip(&g[lo..hi])
            .map(|(a, b)| a * b)
            .sum())
    }

    /// `u_l`: total value of stored entries that contain index `l`.
    pub fn degree_vector(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.dim()];
        for t in &self.triples {
            u[t.l] += t.value;
            u[t.j] += t.value;
            u[t.k] += t.value;
        }
        u
    }

    /// `c_i = M^2 max_p (u_i)_p` for every block.
    pub fn penalty_cap(&self, m: f64) -> Vec<f64> {
        let u = self.degree_vector();
        u.chunks(self.n2)
            .map(|block| m * m * block.iter().copied().fold(0.0, f64::max))
            .collect()
    }

    /// Serializes in the line-oriented text format: a header `n1 n2 nnz`
    /// followed by one `l j k value` line per stored entry.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(32 * (self.triples.len() + 1));
        let _ = writeln!(s, "{} {} {}", self.n1, self.n2, self.triples.len());
        for t in &self.triples {
            let _ = writeln!(s, "{} {} {} {:?}", t.l, t.j, t.k, t.value);
        }
        s
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header = header?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: hline,
                msg: format!("expected 'n1 n2 nnz', got '{header}'"),
            });
        }
        let n1: usize = parse_field(fields[0], hline)?;
        let n2: usize = parse_field(fields[1], hline)?;
        let nnz: usize = parse_field(fields[2], hline)?;

        let mut triples = Vec::with_capacity(nnz);
        for (lineno, line) in lines {
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 'l j k value', got '{line}'"),
                });
            }
            let t = Triple {
                l: parse_field(f[0], lineno)?,
                j: parse_field(f[1], lineno)?,
                k: parse_field(f[2], lineno)?,
                value: parse_field(f[3], lineno)?,
            };
            if t.l >= t.j || t.j >= t.k {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("indices must satisfy l < j < k, got {} {} {}", t.l, t.j, t.k),
                });
            }
            triples.push(t);
        }
        if triples.len() != nnz {
            return Err(Error::InvalidTensor(format!(
                "header declares {nnz} entries, found {}",
                triples.len()
            )));
        }
        Self::new(n1, n2, triples)
    }

    pub fn from_text(s: &str) -> Result<Self> {
        Self::read_text(s.as_bytes())
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| Error::Parse {
        line,
        msg: format!("'{s}': {e}"),
    })
}

fn check_triple(t: &Triple, n: usize, n2: usize) -> Result<()> {
    if !(t.l < t.j && t.j < t.k) {
        return Err(Error::InvalidTensor(format!(
            "entry ({}, {}, {}) is not strictly increasing",
            t.l, t.j, t.k
        )));
    }
    if t.k >= n {
        return Err(Error::InvalidTensor(format!(
            "index {} out of range for n = {n}",
            t.k
        )));
    }
    let (bl, bj, bk) = (t.l / n2, t.j / n2, t.k / n2);
    if bl == bj || bj == bk || bl == bk {
        return Err(Error::InvalidTensor(format!(
            "entry ({}, {}, {}) repeats a block",
            t.l, t.j, t.k
        )));
    }
    if !(t.value >= 0.0) || !t.value.is_finite() {
        return Err(Error::InvalidTensor(format!(
            "entry ({}, {}, {}) has invalid value {}",
            t.l, t.j, t.k, t.value
        )));
    }
    Ok(())
}

/// Accumulates entries in any index order, canonicalizes them to `l < j < k`
/// and keeps the maximum value when the same key is inserted twice.
#[derive(Debug, Clone)]
pub struct TensorBuilder {
    n1: usize,
    n2: usize,
    triples: Vec<Triple>,
}

impl TensorBuilder {
    pub fn new(n1: usize, n2: usize) -> Self {
        Self {
            n1,
            n2,
            triples: Vec::new(),
        }
    }

    pub fn with_capacity(n1: usize, n2: usize, cap: usize) -> Self {
        Self {
            n1,
            n2,
            triples: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, a: usize, b: usize, c: usize, value: f64) {
        let mut idx = [a, b, c];
        idx.sort_unstable();
        self.triples.push(Triple {
            l: idx[0],
            j: idx[1],
            k: idx[2],
            value,
        });
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn build(mut self) -> Result<SparseAffinityTensor> {
        self.triples.sort_by(|a, b| {
            a.key()
                .cmp(&b.key())
                .then_with(|| b.value.total_cmp(&a.value))
        });
        // after the sort the first entry of each key carries the max value
        self.triples.dedup_by_key(|t| t.key());
        SparseAffinityTensor::new(self.n1, self.n2, self.triples)
    }
}
