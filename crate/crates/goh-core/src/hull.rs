//! Finite-vertex convex sets of vectors or matrices.
//!
//! `ConvexHullSet` stores the vertices of a convex compact set (matrices are
//! flattened row-major). Reduction to a minimal vertex representation runs a
//! pairwise dedup followed by an extreme-point filter, and distances to the
//! hull are computed with Wolfe's min-norm-point algorithm, which is exact up
//! to floating error for the small vertex counts that occur here.

use serde::Serialize;

const DEDUP_TOL: f64 = 1e-10;

/// Construction provenance carried along with a hull.
#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct HullMeta {
    pub estimator: String,
    pub radii: Vec<f64>,
    pub samples_accepted: usize,
}

/// Convex hull of finitely many points in `R^(rows*cols)`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ConvexHullSet {
    pub rows: usize,
    pub cols: usize,
    pub vertices: Vec<Vec<f64>>,
    pub meta: HullMeta,
}

impl ConvexHullSet {
    /// Build from raw points and reduce to a minimal representation.
    pub fn from_points(rows: usize, cols: usize, points: Vec<Vec<f64>>, meta: HullMeta) -> Self {
        assert!(!points.is_empty(), "hull needs at least one vertex");
        let dim = rows * cols;
        debug_assert!(points.iter().all(|p| p.len() == dim));
        let vertices = reduce(points);
        ConvexHullSet {
            rows,
            cols,
            vertices,
            meta,
        }
    }

    pub fn singleton(rows: usize, cols: usize, point: Vec<f64>, meta: HullMeta) -> Self {
        ConvexHullSet {
            rows,
            cols,
            vertices: vec![point],
            meta,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_singleton(&self) -> bool {
        self.vertices.len() == 1
    }

    /// Euclidean distance from `z` to the hull.
    pub fn distance(&self, z: &[f64]) -> f64 {
        assert_eq!(z.len(), self.dim());
        let shifted: Vec<Vec<f64>> = self
            .vertices
            .iter()
            .map(|v| v.iter().zip(z.iter()).map(|(a, b)| a - b).collect())
            .collect();
        norm(&min_norm_point(&shifted))
    }

    /// Largest pairwise vertex distance.
    pub fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in self.vertices.iter().skip(i + 1) {
                best = best.max(dist(a, b));
            }
        }
        best
    }

    /// Symmetric Hausdorff distance between two hulls.
    pub fn hausdorff(&self, other: &ConvexHullSet) -> f64 {
        assert_eq!(self.dim(), other.dim());
        let d1 = self
            .vertices
            .iter()
            .map(|v| other.distance(v))
            .fold(0.0, f64::max);
        let d2 = other
            .vertices
            .iter()
            .map(|v| self.distance(v))
            .fold(0.0, f64::max);
        d1.max(d2)
    }

    /// Image under a linear map given as a dense `out_dim × dim` matrix
    /// (hulls map to hulls of mapped vertices).
    pub fn map_linear(&self, matrix: &nalgebra::DMatrix<f64>) -> ConvexHullSet {
        assert_eq!(matrix.ncols(), self.dim());
        let out_dim = matrix.nrows();
        let points: Vec<Vec<f64>> = self
            .vertices
            .iter()
            .map(|v| {
                (0..out_dim)
                    .map(|r| (0..self.dim()).map(|c| matrix[(r, c)] * v[c]).sum())
                    .collect()
            })
            .collect();
        ConvexHullSet::from_points(out_dim, 1, points, self.meta.clone())
    }

    /// Exact negation, vertex for vertex.
    pub fn negated(&self) -> ConvexHullSet {
        ConvexHullSet {
            rows: self.rows,
            cols: self.cols,
            vertices: self
                .vertices
                .iter()
                .map(|v| v.iter().map(|x| -x).collect())
                .collect(),
            meta: self.meta.clone(),
        }
    }

    /// `max_v ⟨v, dir⟩` over the hull.
    pub fn support(&self, dir: &[f64]) -> f64 {
        self.vertices
            .iter()
            .map(|v| dot(v, dir))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// True if the hull is contained in `other` inflated by `tol`.
    pub fn contained_in(&self, other: &ConvexHullSet, tol: f64) -> bool {
        self.vertices.iter().all(|v| other.distance(v) <= tol)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Dedup within tolerance, then drop every point lying in the hull of the
/// rest. Input order is normalized by sorting, so the result is deterministic.
fn reduce(mut points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    points.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if !kept.iter().any(|q| dist(&p, q) <= DEDUP_TOL) {
            kept.push(p);
        }
    }
    if kept.len() <= 2 {
        return kept;
    }
    // Extreme-point filter: remove interior points one at a time.
    let mut i = 0;
    while i < kept.len() && kept.len() > 1 {
        let candidate = kept[i].clone();
        let others: Vec<Vec<f64>> = kept
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, q)| q.clone())
            .collect();
        let shifted: Vec<Vec<f64>> = others
            .iter()
            .map(|q| q.iter().zip(candidate.iter()).map(|(a, b)| a - b).collect())
            .collect();
        if norm(&min_norm_point(&shifted)) <= DEDUP_TOL {
            kept.remove(i);
        } else {
            i += 1;
        }
    }
    kept
}

/// Wolfe's algorithm: the point of minimum Euclidean norm in the convex hull
/// of `points`.
pub fn min_norm_point(points: &[Vec<f64>]) -> Vec<f64> {
    assert!(!points.is_empty());
    let dim = points[0].len();
    if dim == 0 {
        return Vec::new();
    }
    let eps = 1e-13 * (1.0 + points.iter().map(|p| dot(p, p)).fold(0.0, f64::max));

    // Start from the shortest input point.
    let mut best_idx = 0;
    for (i, p) in points.iter().enumerate() {
        if dot(p, p) < dot(&points[best_idx], &points[best_idx]) {
            best_idx = i;
        }
    }
    let mut corral: Vec<usize> = vec![best_idx];
    let mut lambda: Vec<f64> = vec![1.0];
    let mut x = points[best_idx].clone();

    let max_major = 16 * points.len() + 64;
    for _ in 0..max_major {
        // Most violating vertex.
        let xx = dot(&x, &x);
        let mut j_star = 0;
        let mut best = f64::INFINITY;
        for (j, p) in points.iter().enumerate() {
            let v = dot(&x, p);
            if v < best {
                best = v;
                j_star = j;
            }
        }
        if best >= xx - eps {
            break;
        }
        if !corral.contains(&j_star) {
            corral.push(j_star);
            lambda.push(0.0);
        }

        // Minor cycle: project onto affine hulls, trimming until the affine
        // minimizer has nonnegative weights.
        loop {
            let alpha = affine_min_weights(points, &corral);
            let Some(alpha) = alpha else {
                // Degenerate Gram system; accept current x.
                return x;
            };
            if alpha.iter().all(|&a| a > -1e-12) {
                lambda = alpha;
                x = combine(points, &corral, &lambda);
                break;
            }
            // Walk from lambda toward alpha until a weight hits zero.
            let mut theta = 1.0f64;
            for (l, a) in lambda.iter().zip(alpha.iter()) {
                if *a < *l {
                    let t = l / (l - a);
                    if t < theta {
                        theta = t;
                    }
                }
            }
            lambda = lambda
                .iter()
                .zip(alpha.iter())
                .map(|(l, a)| l + theta * (a - l))
                .collect();
            // Remove vanished members.
            let mut keep_c = Vec::new();
            let mut keep_l = Vec::new();
            for (idx, l) in corral.iter().zip(lambda.iter()) {
                if *l > 1e-12 {
                    keep_c.push(*idx);
                    keep_l.push(*l);
                }
            }
            if keep_c.is_empty() {
                keep_c.push(corral[0]);
                keep_l.push(1.0);
            }
            let total: f64 = keep_l.iter().sum();
            corral = keep_c;
            lambda = keep_l.iter().map(|l| l / total).collect();
            x = combine(points, &corral, &lambda);
        }
    }
    x
}

fn combine(points: &[Vec<f64>], corral: &[usize], lambda: &[f64]) -> Vec<f64> {
    let dim = points[0].len();
    let mut x = vec![0.0; dim];
    for (idx, l) in corral.iter().zip(lambda.iter()) {
        for (xi, pi) in x.iter_mut().zip(points[*idx].iter()) {
            *xi += l * pi;
        }
    }
    x
}

/// Weights of the minimum-norm point over the affine hull of the corral:
/// solve the bordered Gram system [[0, 1ᵀ],[1, G]] (μ, α) = (1, 0).
fn affine_min_weights(points: &[Vec<f64>], corral: &[usize]) -> Option<Vec<f64>> {
    let m = corral.len();
    let mut a = vec![vec![0.0; m + 1]; m + 1];
    let mut b = vec![0.0; m + 1];
    b[0] = 1.0;
    for i in 0..m {
        a[0][i + 1] = 1.0;
        a[i + 1][0] = 1.0;
        for j in 0..m {
            a[i + 1][j + 1] = dot(&points[corral[i]], &points[corral[j]]);
        }
    }
    solve_dense(&mut a, &mut b).map(|sol| sol[1..].to_vec())
}

/// Gaussian elimination with partial pivoting; None on (near-)singularity.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Some(x)
}
