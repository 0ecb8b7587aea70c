//! Affinity tensor construction from two 2-D point sets.
//!
//! Pipeline: sample hyperedges in the first set, describe every triangle by
//! the sines of its interior angles, look up the `s` nearest ordered triangles
//! of the second set in feature space, and score each match with
//! `exp(-gamma * distance)` where `gamma` is the reciprocal mean distance of
//! all selected matches.

use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::{FeatureIndex, Neighbor};
use crate::tensor::{SparseAffinityTensor, TensorBuilder};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Point>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRecord {
    id: usize,
    x: f64,
    y: f64,
}

impl PointSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(i) = points
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        Ok(Self { points })
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Reads the `id,x,y` CSV format; ids must run `0..size` in order.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["id", "x", "y"] {
            return Err(Error::InvalidInput(format!(
                "point CSV header must be 'id,x,y', got '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut points = Vec::new();
        for (row, rec) in rdr.deserialize::<PointRecord>().enumerate() {
            let rec = rec?;
            if rec.id != row {
                return Err(Error::InvalidInput(format!(
                    "point ids must be 0..size in order: row {row} has id {}",
                    rec.id
                )));
            }
            points.push([rec.x, rec.y]);
        }
        Self::new(points)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for (id, p) in self.points.iter().enumerate() {
            wtr.serialize(PointRecord {
                id,
                x: p[0],
                y: p[1],
            })?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// A list of point triples, each with three distinct members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperedgeSet {
    triples: Vec<[usize; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    a: usize,
    b: usize,
    c: usize,
}

impl HyperedgeSet {
    pub fn new(triples: Vec<[usize; 3]>, point_count: usize) -> Result<Self> {
        for (i, t) in triples.iter().enumerate() {
            if t.iter().any(|&v| v >= point_count) {
                return Err(Error::InvalidInput(format!(
                    "hyperedge {i} {t:?} references a point outside 0..{point_count}"
                )));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidInput(format!(
                    "hyperedge {i} {t:?} repeats a point"
                )));
            }
        }
        Ok(Self { triples })
    }

    pub fn triples(&self) -> &[[usize; 3]] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn read_csv<R: Read>(r: R, point_count: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let triples = rdr
            .deserialize::<EdgeRecord>()
            .map(|rec| rec.map(|e| [e.a, e.b, e.c]))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(triples, point_count)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for t in &self.triples {
            wtr.serialize(EdgeRecord {
                a: t[0],
                b: t[1],
                c: t[2],
            })?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Sines of the interior angles of a triangle, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleFeature(pub [f64; 3]);

/// Draws `count` hyperedges of three distinct points, uniformly and reproducibly.
pub fn sample_hyperedges(v: &PointSet, count: usize, seed: u64) -> Result<HyperedgeSet> {
    if v.size() < 3 {
        return Err(Error::TooFewPoints(v.size()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triples = (0..count)
        .map(|_| {
            let s = sample(&mut rng, v.size(), 3);
            [s.index(0), s.index(1), s.index(2)]
        })
        .collect();
    Ok(HyperedgeSet { triples })
}

/// Feature of the triangle `(p, q, r)`: sines of the angles at `p`, `q` and `r`.
/// Zero-area triangles map to the zero vector.
pub fn triangle_feature(p: Point, q: Point, r: Point) -> TriangleFeature {
    let pq = [q[0] - p[0], q[1] - p[1]];
    let pr = [r[0] - p[0], r[1] - p[1]];
    let qr = [r[0] - q[0], r[1] - q[1]];
    let a = pq[0].hypot(pq[1]);
    let b = pr[0].hypot(pr[1]);
    let c = qr[0].hypot(qr[1]);
    // |cross| is twice the area
    let cross = (pq[0] * pr[1] - pq[1] * pr[0]).abs();
    let scale = a.max(b).max(c);
    if scale == 0.0 || cross <= 1e-12 * scale * scale {
        return TriangleFeature([0.0; 3]);
    }
    let clamp = |v: f64| v.min(1.0);
    TriangleFeature([
        clamp(cross / (a * b)),
        clamp(cross / (a * c)),
        clamp(cross / (b * c)),
    ])
}

/// An ordered triangle of the second point set together with its feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub triple: [usize; 3],
    pub feature: TriangleFeature,
}

/// All ordered triples of distinct points in `v2`, in lexicographic order.
pub fn candidate_features(v2: &PointSet) -> Result<Vec<Candidate>> {
    let n = v2.size();
    if n < 3 {
        return Err(Error::TooFewPoints(n));
    }
    let pts = v2.points();
    let mut out = Vec::with_capacity(n * (n - 1) * (n - 2));
    for a in 0..n {
        for b in 0..n {
            if b == a {
                continue;
            }
            for c in 0..n {
                if c == a || c == b {
                    continue;
                }
                out.push(Candidate {
                    triple: [a, b, c],
                    feature: triangle_feature(pts[a], pts[b], pts[c]),
                });
            }
        }
    }
    Ok(out)
}

/// Indices of the `s` candidates closest to `query` in feature space, nearest
/// first, with ties going to the lower candidate index.
pub fn knn_features(query: &TriangleFeature, candidates: &[Candidate], s: usize) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let index = FeatureIndex::new(candidates.iter().map(|c| c.feature.0).collect());
    Ok(index
        .nearest(&query.0, s)
        .into_iter()
        .map(|n| n.index)
        .collect())
}

/// Builds the sparse affinity tensor for matching `v1` into `v2`.
pub fn build_affinity(
    v1: &PointSet,
    v2: &PointSet,
    e1: &HyperedgeSet,
    s: usize,
) -> Result<SparseAffinityTensor> {
    let (n1, n2) = (v1.size(), v2.size());
    if n1 > n2 {
        return Err(Error::InvalidInput(format!(
            "first point set must not be larger than the second ({n1} > {n2})"
        )));
    }
    if s == 0 {
        return Err(Error::InvalidInput("s must be at least 1".into()));
    }
    if let Some(t) = e1.triples().iter().find(|t| t.iter().any(|&v| v >= n1)) {
        return Err(Error::InvalidInput(format!(
            "hyperedge {t:?} references a point outside 0..{n1}"
        )));
    }
    let candidates = candidate_features(v2)?;
    let index = FeatureIndex::new(candidates.iter().map(|c| c.feature.0).collect());

    // pass 1: neighbours and distances, so gamma sees every selected pair
    let p1 = v1.points();
    let selected: Vec<(usize, Vec<Neighbor>)> = e1
        .triples()
        .iter()
        .enumerate()
        .map(|(h, t)| {
            let f = triangle_feature(p1[t[0]], p1[t[1]], p1[t[2]]);
            (h, index.nearest(&f.0, s))
        })
        .collect();

    let (sum, count) = selected
        .iter()
        .flat_map(|(_, nn)| nn.iter())
        .fold((0.0, 0usize), |(s, c), n| (s + n.dist2.sqrt(), c + 1));
    let mean = if count > 0 { sum / count as f64 } else { 0.0 };

    // pass 2: values
    let mut builder = TensorBuilder::with_capacity(n1, n2, count);
    for (h, nn) in &selected {
        let t1 = e1.triples()[*h];
        for n in nn {
            let t2 = candidates[n.index].triple;
            let value = if mean > 0.0 {
                (-n.dist2.sqrt() / mean).exp()
            } else {
                1.0
            };
            builder.push(
                t1[0] * n2 + t2[0],
                t1[1] * n2 + t2[1],
                t1[2] * n2 + t2[2],
                value,
            );
        }
    }
    builder.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ps(points: &[Point]) -> PointSet {
        PointSet::new(points.to_vec()).unwrap()
    }

    #[test]
    fn feature_examples() {
        let h = 3f64.sqrt() / 2.0;
        let f = triangle_feature([0.0, 0.0], [1.0, 0.0], [0.5, h]);
        for v in f.0 {
            assert_abs_diff_eq!(v, 0.8660, epsilon = 1e-4);
        }
        assert_eq!(
            triangle_feature([0.0, 0.0], [1.0, 0.0], [2.0, 0.0]).0,
            [0.0; 3]
        );
        assert_eq!(
            triangle_feature([1.0, 1.0], [1.0, 1.0], [2.0, 0.0]).0,
            [0.0; 3]
        );
        let f = triangle_feature([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]);
        assert_abs_diff_eq!(f.0[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(f.0[1], 0.7071, epsilon = 1e-4);
        assert_abs_diff_eq!(f.0[2], 0.7071, epsilon = 1e-4);
    }

    #[test]
    fn feature_is_similarity_invariant() {
        let (p, q, r) = ([0.3, -1.2], [2.0, 0.7], [-0.4, 1.9]);
        let f = triangle_feature(p, q, r);
        let (c, s, k) = (0.7f64.cos(), 0.7f64.sin(), 2.5);
        let tf = |v: Point| [k * (c * v[0] - s * v[1]) + 4.0, k * (s * v[0] + c * v[1]) - 1.0];
        let g = triangle_feature(tf(p), tf(q), tf(r));
        for i in 0..3 {
            assert_abs_diff_eq!(f.0[i], g.0[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn sampling() {
        let v = ps(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let e = sample_hyperedges(&v, 1, 7).unwrap();
        let mut t = e.triples()[0];
        t.sort();
        assert_eq!(t, [0, 1, 2]);

        let v30 = ps(&(0..30).map(|i| [i as f64, (i * i) as f64]).collect::<Vec<_>>());
        let e = sample_hyperedges(&v30, 900, 42).unwrap();
        assert_eq!(e.len(), 900);
        assert!(e
            .triples()
            .iter()
            .all(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2] && t.iter().all(|&i| i < 30)));
        assert_eq!(e, sample_hyperedges(&v30, 900, 42).unwrap());
        assert_ne!(e, sample_hyperedges(&v30, 900, 43).unwrap());

        assert!(matches!(
            sample_hyperedges(&ps(&[[0.0, 0.0], [1.0, 1.0]]), 1, 0),
            Err(Error::TooFewPoints(2))
        ));
    }

    #[test]
    fn candidate_counts() {
        let mk = |n: usize| ps(&(0..n).map(|i| [i as f64, (i * i) as f64]).collect::<Vec<_>>());
        assert_eq!(candidate_features(&mk(3)).unwrap().len(), 6);
        assert_eq!(candidate_features(&mk(4)).unwrap().len(), 24);
        assert_eq!(candidate_features(&mk(30)).unwrap().len(), 24360);
        assert!(candidate_features(&mk(2)).is_err());
    }

    #[test]
    fn knn_examples() {
        let cand = |f: [f64; 3]| Candidate {
            triple: [0, 1, 2],
            feature: TriangleFeature(f),
        };
        let cs = vec![cand([0.3, 0.0, 0.0]), cand([0.1, 0.0, 0.0]), cand([0.2, 0.0, 0.0])];
        let q = TriangleFeature([0.0; 3]);
        assert_eq!(knn_features(&q, &cs, 2).unwrap(), vec![1, 2]);
        assert_eq!(knn_features(&q, &cs, 10).unwrap(), vec![1, 2, 0]);
        assert_eq!(
            knn_features(&TriangleFeature([0.2, 0.0, 0.0]), &cs, 1).unwrap(),
            vec![2]
        );
        assert!(matches!(knn_features(&q, &[], 1), Err(Error::EmptyCandidates)));
    }

    #[test]
    fn identical_sets_single_edge_gives_unit_entry() {
        let v = ps(&[[0.0, 0.0], [1.0, 0.2], [0.3, 1.5]]);
        let e = HyperedgeSet::new(vec![[0, 1, 2]], 3).unwrap();
        let t = build_affinity(&v, &v, &e, 1).unwrap();
        assert_eq!(t.nnz(), 1);
        let tr = t.triples()[0];
        assert_eq!(tr.key(), (0, 4, 8));
        assert_eq!(tr.value, 1.0);
    }

    #[test]
    fn equal_distances_give_exp_minus_one() {
        // v2 is an equilateral triangle, v1 a right isosceles one: all six
        // orderings of v2 sit at the same feature distance.
        let h = 3f64.sqrt() / 2.0;
        let v1 = ps(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let v2 = ps(&[[0.0, 0.0], [1.0, 0.0], [0.5, h]]);
        let e = HyperedgeSet::new(vec![[0, 1, 2]], 3).unwrap();
        let t = build_affinity(&v1, &v2, &e, 6).unwrap();
        assert_eq!(t.nnz(), 6);
        for tr in t.triples() {
            assert_abs_diff_eq!(tr.value, (-1.0f64).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn affinity_invariants_on_random_sets() {
        let mut pts = Vec::new();
        let mut z = 12345u64;
        for _ in 0..8 {
            z = z.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = (z >> 11) as f64 / (1u64 << 53) as f64;
            z = z.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = (z >> 11) as f64 / (1u64 << 53) as f64;
            pts.push([a, b]);
        }
        let v1 = ps(&pts[..6]);
        let v2 = ps(&pts);
        let e = sample_hyperedges(&v1, 48, 3).unwrap();
        let t = build_affinity(&v1, &v2, &e, 10).unwrap();
        assert!(t.nnz() <= 480);
        for tr in t.triples() {
            assert!(tr.value > 0.0 && tr.value <= 1.0);
        }
        // deterministic down to the serialized bytes
        assert_eq!(t.to_text(), build_affinity(&v1, &v2, &e, 10).unwrap().to_text());
    }

    #[test]
    fn self_matching_gets_maximal_value() {
        let v = ps(&[[0.0, 0.0], [1.0, 0.2], [0.3, 1.5], [2.0, 2.2], [-1.0, 0.7]]);
        let e = sample_hyperedges(&v, 25, 9).unwrap();
        let t = build_affinity(&v, &v, &e, 5).unwrap();
        let n2 = 5;
        for h in e.triples() {
            let mut key = [h[0] * n2 + h[0], h[1] * n2 + h[1], h[2] * n2 + h[2]];
            key.sort();
            let found = t
                .triples()
                .iter()
                .find(|tr| tr.key() == (key[0], key[1], key[2]))
                .expect("identity correspondence present");
            assert_eq!(found.value, 1.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let v3 = ps(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let v4 = ps(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let e = HyperedgeSet::new(vec![[0, 1, 2]], 3).unwrap();
        assert!(build_affinity(&v4, &v3, &e, 1).is_err());
        assert!(build_affinity(&v3, &v4, &e, 0).is_err());
        assert!(HyperedgeSet::new(vec![[0, 0, 1]], 3).is_err());
        assert!(HyperedgeSet::new(vec![[0, 1, 3]], 3).is_err());
        assert!(PointSet::new(vec![[f64::NAN, 0.0]]).is_err());
    }

    #[test]
    fn csv_formats() {
        let v = ps(&[[0.0, 0.5], [1.25, -2.0]]);
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,x,y\n"));
        assert_eq!(PointSet::read_csv(buf.as_slice()).unwrap(), v);
        assert!(PointSet::read_csv("id,x,y\n1,0,0\n".as_bytes()).is_err());
        assert!(PointSet::read_csv("a,b,c\n0,0,0\n".as_bytes()).is_err());

        let e = HyperedgeSet::new(vec![[0, 1, 2], [2, 0, 1]], 3).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("a,b,c\n"));
        assert_eq!(HyperedgeSet::read_csv(buf.as_slice(), 3).unwrap(), e);
    }
}
