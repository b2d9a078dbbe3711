//! Exact spectral quantities on desk-scale graphs: the ground truth the sampled estimators
//! are measured against.

use nalgebra::{DMatrix, DVector};
use crate::error::{Error, Result};
use crate::graph::RegularGraph;
use crate::linalg::{self, KrylovOptions};

/// Largest n handled by the exact routines.
pub const DENSE_LIMIT: usize = 5000;

/// Below this size the full dense Jacobi solve is cheaper than Krylov iteration.
const JACOBI_LIMIT: usize = 300;

fn check_dense(g: &RegularGraph) -> Result<()> {
    if g.n() > DENSE_LIMIT {
        return Err(Error::Capability(format!(
            "exact spectral routines are limited to n <= {DENSE_LIMIT}, got n={}",
            g.n()
        )));
    }
    Ok(())
}

/// L = I - A/d, self-loops included in A.
pub fn normalized_laplacian(g: &RegularGraph) -> Result<DMatrix<f64>> {
    check_dense(g)?;
    let n = g.n();
    let d = g.d() as f64;
    let mut counts = DMatrix::<f64>::zeros(n, n);
    for x in 0..n {
        for &y in g.adjacency(x) {
            counts[(x, y as usize)] += 1.0;
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        (delta * d - counts[(i, j)]) / d
    }))
}

/// Applies (I + A/d)/2, whose eigenvalues are 1 - λ/2 for the Laplacian eigenvalues λ.
fn apply_lazy_walk(g: &RegularGraph, x: &[f64], y: &mut [f64]) {
    let d = g.d();
    let w = 0.5 / d as f64;
    for v in 0..g.n() {
        let s: f64 = g.adjacency(v).iter().map(|&u| x[u as usize]).sum();
        y[v] = 0.5 * x[v] + w * s;
    }
}

struct BottomPairs {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    residual: f64,
}

fn bottom_pairs(g: &RegularGraph, count: usize, strict: usize) -> Result<BottomPairs> {
    check_dense(g)?;
    let n = g.n();
    if count == 0 || count > n {
        return Err(Error::usage(format!("cannot take {count} eigenpairs of an n={n} graph")));
    }
    if n <= JACOBI_LIMIT {
        let l = normalized_laplacian(g)?;
        let eig = linalg::symmetric_eig(&l)?;
        let idx: Vec<usize> = (0..count).map(|i| n - 1 - i).collect();
        let vectors: Vec<Vec<f64>> =
            idx.iter().map(|&c| eig.vectors.column(c).iter().cloned().collect()).collect();
        let values: Vec<f64> = idx.iter().map(|&c| eig.values[c]).collect();
        let residual = laplacian_residual(g, &values, &vectors);
        return Ok(BottomPairs { values, vectors, residual });
    }
    let opts = KrylovOptions {
        strict,
        tol_strict: 1e-9,
        tol_loose: 1e-7,
        max_restarts: 200,
        ..Default::default()
    };
    let top = linalg::top_eigenpairs(n, count, |x, y| apply_lazy_walk(g, x, y), &opts)?;
    if !top.converged {
        return Err(Error::Numerical(format!(
            "bottom Laplacian eigenpairs did not converge (residuals {:?})",
            top.residuals
        )));
    }
    let values: Vec<f64> = top.values.iter().map(|&m| (2.0 * (1.0 - m)).max(0.0)).collect();
    let residual = laplacian_residual(g, &values[..strict.min(count)], &top.vectors[..strict.min(count)]);
    Ok(BottomPairs { values, vectors: top.vectors, residual })
}

fn laplacian_residual(g: &RegularGraph, values: &[f64], vectors: &[Vec<f64>]) -> f64 {
    let n = g.n();
    let mut worst = 0.0f64;
    let mut y = vec![0.0; n];
    for (lam, v) in values.iter().zip(vectors) {
        apply_lazy_walk(g, v, &mut y);
        for i in 0..n {
            // L v = 2 (v - M v)
            let lv = 2.0 * (v[i] - y[i]);
            worst = worst.max((lv - lam * v[i]).abs());
        }
    }
    worst
}

/// The `count` smallest Laplacian eigenvalues, ascending.
pub fn bottom_eigenvalues(g: &RegularGraph, count: usize) -> Result<Vec<f64>> {
    Ok(bottom_pairs(g, count, count.saturating_sub(1))?.values)
}

/// Coordinates of every vertex in the span of the bottom-k eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    pub k: usize,
    /// k x n; column x is f_x.
    pub f: DMatrix<f64>,
    /// λ_1 .. λ_{k+1} ascending (the last one only when k < n).
    pub eigenvalues: Vec<f64>,
    /// λ_k and λ_{k+1} coincide to 1e-10, so the Gram target is ill-defined.
    pub degenerate_gap: bool,
    /// Max entry of L v - λ v over the k returned vectors.
    pub residual: f64,
}

impl SpectralEmbedding {
    pub fn n(&self) -> usize {
        self.f.ncols()
    }

    pub fn lambda_k(&self) -> f64 {
        self.eigenvalues[self.k - 1]
    }

    pub fn lambda_k1(&self) -> Option<f64> {
        self.eigenvalues.get(self.k).copied()
    }

    /// sqrt(2 λ_{k+1}), the inner-conductance proxy.
    pub fn phi_hat(&self) -> Option<f64> {
        self.lambda_k1().map(|l| (2.0 * l).sqrt())
    }

    pub fn column(&self, x: usize) -> DVector<f64> {
        self.f.column(x).into_owned()
    }

    /// F^T F.
    pub fn gram(&self) -> DMatrix<f64> {
        self.f.transpose() * &self.f
    }
}

pub fn bottom_k_embedding(g: &RegularGraph, k: usize) -> Result<SpectralEmbedding> {
    let n = g.n();
    if k == 0 || k >= n {
        return Err(Error::usage(format!("embedding dimension k={k} must satisfy 1 <= k < n={n}")));
    }
    let pairs = bottom_pairs(g, k + 1, k)?;
    let mut f = DMatrix::zeros(k, n);
    for (i, v) in pairs.vectors.iter().take(k).enumerate() {
        for x in 0..n {
            f[(i, x)] = v[x];
        }
    }
    let degenerate_gap = (pairs.values[k] - pairs.values[k - 1]).abs() < 1e-10;
    Ok(SpectralEmbedding { k, f, eigenvalues: pairs.values, degenerate_gap, residual: pairs.residual })
}

/// ⟨f_x, f_y⟩.
pub fn exact_dot(e: &SpectralEmbedding, x: usize, y: usize) -> f64 {
    e.f.column(x).dot(&e.f.column(y))
}

fn check_partition(e: &SpectralEmbedding, partition: &[Vec<usize>]) -> Result<()> {
    let n = e.n();
    let mut seen = vec![false; n];
    for c in partition {
        if c.is_empty() {
            return Err(Error::usage("partition contains an empty cluster"));
        }
        for &v in c {
            if v >= n || std::mem::replace(&mut seen[v], true) {
                return Err(Error::usage(format!("vertex {v} out of range or repeated in partition")));
            }
        }
    }
    Ok(())
}

/// μ_i = mean of f_x over C_i, one column per cluster.
pub fn cluster_means(e: &SpectralEmbedding, partition: &[Vec<usize>]) -> Result<DMatrix<f64>> {
    check_partition(e, partition)?;
    let mut mu = DMatrix::zeros(e.k, partition.len());
    for (i, c) in partition.iter().enumerate() {
        for &x in c {
            let mut col = mu.column_mut(i);
            col += e.f.column(x);
        }
        mu.column_mut(i).scale_mut(1.0 / c.len() as f64);
    }
    Ok(mu)
}

/// Σ_i Σ_{x∈C_i} ⟨f_x - μ_i, α⟩² for a unit direction α.
pub fn directional_variance(
    e: &SpectralEmbedding,
    partition: &[Vec<usize>],
    alpha: &DVector<f64>,
) -> Result<f64> {
    if alpha.len() != e.k || (alpha.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::usage("direction must be a unit vector of length k"));
    }
    let mu = cluster_means(e, partition)?;
    let mut total = 0.0;
    for (i, c) in partition.iter().enumerate() {
        let centre = mu.column(i).dot(alpha);
        for &x in c {
            total += (e.f.column(x).dot(alpha) - centre).powi(2);
        }
    }
    Ok(total)
}

/// Fraction of coordinates with |u(x)| ≥ β·sqrt(10 / min_cluster_size).
pub fn tail_fraction(u: &[f64], beta: f64, min_cluster_size: usize) -> Result<f64> {
    if !(beta > 1.0) {
        return Err(Error::usage(format!("tail threshold needs beta > 1, got {beta}")));
    }
    if u.is_empty() || min_cluster_size == 0 {
        return Err(Error::usage("empty vector or zero cluster size"));
    }
    let cut = beta * (10.0 / min_cluster_size as f64).sqrt();
    Ok(u.iter().filter(|v| v.abs() >= cut).count() as f64 / u.len() as f64)
}

/// Exact projection onto the complement of a set of cluster means.
#[derive(Debug, Clone)]
pub struct ExactProjection {
    /// k x k orthogonal projector.
    pub pi: DMatrix<f64>,
    /// Π μ_i for every cluster.
    pub projected_means: DMatrix<f64>,
}

impl ExactProjection {
    /// ⟨f_x, Π f_y⟩.
    pub fn dot(&self, e: &SpectralEmbedding, x: usize, y: usize) -> f64 {
        e.f.column(x).dot(&(&self.pi * e.f.column(y)))
    }

    /// ⟨f_x, Π v⟩ for an arbitrary vector v.
    pub fn dot_with(&self, e: &SpectralEmbedding, x: usize, v: &DVector<f64>) -> f64 {
        e.f.column(x).dot(&(&self.pi * v))
    }

    /// ‖Π μ_i‖².
    pub fn mean_norm2(&self, i: usize) -> f64 {
        self.projected_means.column(i).norm_squared()
    }
}

/// Builds Π by Gram-Schmidt on the removed means.
pub fn exact_projected_quantities(
    e: &SpectralEmbedding,
    partition: &[Vec<usize>],
    removed: &[usize],
) -> Result<ExactProjection> {
    let mu = cluster_means(e, partition)?;
    projection_from_vectors(e.k, removed.iter().map(|&i| mu.column(i).into_owned()), &mu)
}

/// Same projector for arbitrary removed vectors (for example averages over sampled sets).
pub fn projection_from_vectors(
    k: usize,
    removed: impl IntoIterator<Item = DVector<f64>>,
    means: &DMatrix<f64>,
) -> Result<ExactProjection> {
    let mut q: Vec<DVector<f64>> = Vec::new();
    for v in removed {
        if v.len() != k {
            return Err(Error::usage("removed vector has wrong dimension"));
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &q {
                let c = w.dot(b);
                w -= b * c;
            }
        }
        let norm = w.norm();
        if norm > 1e-12 * v.norm().max(f64::MIN_POSITIVE) {
            q.push(w / norm);
        }
    }
    let mut pi = DMatrix::<f64>::identity(k, k);
    for b in &q {
        pi -= b * b.transpose();
    }
    let projected_means = &pi * means;
    Ok(ExactProjection { pi, projected_means })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::{cycle, padded_cliques};
    use crate::graph::{generate_clusterable, GeneratorConfig};
    use crate::rng::Seed;

    #[test]
    fn laplacian_small_cases() {
        let single = RegularGraph::from_slots(1, 3, vec![0, 0, 0]).unwrap();
        assert_eq!(normalized_laplacian(&single).unwrap()[(0, 0)], 0.0);
        let pair = RegularGraph::from_slots(2, 2, vec![1, 1, 0, 0]).unwrap();
        let l = normalized_laplacian(&pair).unwrap();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn cycle_spectrum_is_circulant() {
        let l = normalized_laplacian(&cycle(6)).unwrap();
        let eig = linalg::symmetric_eig(&l).unwrap();
        let mut expect: Vec<f64> =
            (0..6).map(|j| 1.0 - (2.0 * std::f64::consts::PI * j as f64 / 6.0).cos()).collect();
        expect.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in eig.values.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn connected_graph_has_constant_bottom_vector() {
        let g = cycle(9);
        let e = bottom_k_embedding(&g, 1).unwrap();
        assert!(e.lambda_k().abs() < 1e-12);
        for x in 0..9 {
            assert!((e.f[(0, x)].abs() - 1.0 / 3.0).abs() < 1e-10);
            assert!((exact_dot(&e, x, x) - 1.0 / 9.0).abs() < 1e-10);
        }
    }

    #[test]
    fn cliques_give_indicator_gram() {
        let g = padded_cliques(&[5, 7, 6], 8);
        let e = bottom_k_embedding(&g, 3).unwrap();
        let cl = [0usize; 5].iter().chain(&[1; 7]).chain(&[2; 6]).cloned().collect::<Vec<_>>();
        let sizes = [5.0, 7.0, 6.0];
        let gram = e.gram();
        for x in 0..18 {
            for y in 0..18 {
                let expect = if cl[x] == cl[y] { 1.0 / sizes[cl[x]] } else { 0.0 };
                assert!((gram[(x, y)] - expect).abs() < 1e-8);
            }
        }
        let parts = vec![(0..5).collect(), (5..12).collect(), (12..18).collect::<Vec<_>>()];
        let mu = cluster_means(&e, &parts).unwrap();
        for i in 0..3 {
            assert!((mu.column(i).norm_squared() - 1.0 / sizes[i]).abs() < 1e-10);
        }
        for _ in 0..5 {
            let a = DVector::from_vec(vec![0.6, 0.0, 0.8]);
            assert!(directional_variance(&e, &parts, &a).unwrap() < 1e-9);
        }
        let all = exact_projected_quantities(&e, &parts, &[0, 1, 2]).unwrap();
        for i in 0..3 {
            assert!(all.mean_norm2(i) < 1e-12);
        }
        let none = exact_projected_quantities(&e, &parts, &[]).unwrap();
        assert_eq!(none.pi, DMatrix::identity(3, 3));
    }

    #[test]
    fn krylov_path_matches_dense_path() {
        let cfg = GeneratorConfig { k: 2, sizes: vec![200, 200], d: 8, p_cross: 0.5, certify: false, ..Default::default() };
        let inst = generate_clusterable(&cfg, Seed::new(5)).unwrap();
        let e = bottom_k_embedding(&inst.graph, 2).unwrap();
        assert!(e.residual < 1e-8, "residual {}", e.residual);
        let dense = linalg::symmetric_eig(&normalized_laplacian(&inst.graph).unwrap()).unwrap();
        let n = 400;
        for i in 0..3 {
            assert!((e.eigenvalues[i] - dense.values[n - 1 - i]).abs() < 1e-9);
        }
        let mut p = DMatrix::zeros(n, n);
        for c in 0..2 {
            let v = dense.vectors.column(n - 1 - c);
            p += &v * v.transpose();
        }
        let diff = (&p - e.gram()).abs().max();
        assert!(diff < 1e-8, "gram diff {diff}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let e = bottom_k_embedding(&cycle(6), 2).unwrap();
        assert!(directional_variance(&e, &[vec![0, 1, 2], vec![3, 4, 5]], &DVector::from_vec(vec![1.0, 1.0])).is_err());
        assert!(tail_fraction(&[0.1], 1.0, 3).is_err());
        assert!(bottom_k_embedding(&cycle(6), 6).is_err());
    }

    #[test]
    fn tail_fraction_counts() {
        let u = vec![1.0 / 10.0; 100];
        assert_eq!(tail_fraction(&u, 2.0, 50).unwrap(), 0.0);
        // indicator of a 20-vertex cluster inside n=100
        let mut ind = vec![0.0; 100];
        for v in ind.iter_mut().take(20) {
            *v = 1.0 / 20f64.sqrt();
        }
        assert_eq!(tail_fraction(&ind, 1.0001, 250).unwrap(), 0.2);
    }
}
