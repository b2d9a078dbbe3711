//! Lazy random walks: empirical endpoint distributions, sampled transition matrices and
//! median-boosted collision Gram matrices.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RegularGraph;
use crate::rng::{Purpose, Seed};

/// Largest n for [`exact_walk_distribution`].
pub const WALK_DENSE_LIMIT: usize = 50_000;

/// Endpoint counts of R walks of length t from one start. Mass of y is count(y)/R.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkDistribution {
    pub start: u32,
    pub t: usize,
    pub walks: u32,
    /// (vertex, count) sorted by vertex, counts positive and summing to `walks`.
    entries: Vec<(u32, u32)>,
}

impl WalkDistribution {
    pub(crate) fn from_entries(start: u32, t: usize, walks: u32, entries: Vec<(u32, u32)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert_eq!(entries.iter().map(|e| e.1 as u64).sum::<u64>(), walks as u64);
        WalkDistribution { start, t, walks, entries }
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn count(&self, y: usize) -> u32 {
        self.entries
            .binary_search_by_key(&(y as u32), |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    pub fn mass(&self, y: usize) -> f64 {
        self.count(y) as f64 / self.walks as f64
    }

    pub fn iter_mass(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.walks as f64;
        self.entries.iter().map(move |&(v, c)| (v as usize, c as f64 / r))
    }

    /// Dense probability vector of length n.
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (v, m) in self.iter_mass() {
            out[v] = m;
        }
        out
    }

    /// ½ Σ |mass(y) - p(y)|.
    pub fn total_variation(&self, p: &[f64]) -> f64 {
        let mut diff: f64 = p.iter().map(|x| x.abs()).sum();
        for (v, m) in self.iter_mass() {
            diff += (m - p[v]).abs() - p[v].abs();
        }
        0.5 * diff
    }

    /// ‖m̂‖²₂.
    pub fn norm2(&self) -> f64 {
        let r = self.walks as f64;
        self.entries.iter().map(|&(_, c)| (c as f64 / r).powi(2)).sum()
    }
}

/// Endpoint counts for walks `first_walk..first_walk+walks` and the number of slot moves.
pub(crate) fn walk_endpoints(
    g: &RegularGraph,
    walks: u32,
    first_walk: u64,
    t: usize,
    x: usize,
    seed: &Seed,
    tag: Purpose,
    rep: u32,
) -> (Vec<(u32, u32)>, u64) {
    let d = g.d() as u64;
    let two_d = 2 * d;
    let slots = g.raw_slots();
    let mut ends: Vec<u32> = Vec::with_capacity(walks as usize);
    let mut moves = 0u64;
    for w in 0..walks as u64 {
        let stream = seed.walk_stream(tag, x as u32, rep, first_walk + w);
        let mut v = x as u32;
        for step in 0..t as u32 {
            let c = stream.outcome(step, two_d);
            if c >= d {
                v = slots[v as usize * d as usize + (c - d) as usize];
                moves += 1;
            }
        }
        ends.push(v);
    }
    ends.sort_unstable();
    let mut entries: Vec<(u32, u32)> = Vec::new();
    for v in ends {
        match entries.last_mut() {
            Some(last) if last.0 == v => last.1 += 1,
            _ => entries.push((v, 1)),
        }
    }
    (entries, moves)
}

/// R lazy walks of length t from x. Walk w of repetition `rep` uses keys (tag, x, rep, w, step).
pub fn run_random_walks(
    g: &RegularGraph,
    walks: u32,
    t: usize,
    x: usize,
    seed: &Seed,
    tag: Purpose,
    rep: u32,
) -> Result<WalkDistribution> {
    run_walk_block(g, walks, 0, t, x, seed, tag, rep)
}

#[allow(clippy::too_many_arguments)]
fn run_walk_block(
    g: &RegularGraph,
    walks: u32,
    first_walk: u64,
    t: usize,
    x: usize,
    seed: &Seed,
    tag: Purpose,
    rep: u32,
) -> Result<WalkDistribution> {
    if walks == 0 {
        return Err(Error::usage("walk count must be at least 1"));
    }
    if x >= g.n() {
        return Err(Error::usage(format!("start vertex {x} out of range")));
    }
    let (entries, moves) = walk_endpoints(g, walks, first_walk, t, x, seed, tag, rep);
    g.add_probes(moves);
    Ok(WalkDistribution::from_entries(x as u32, t, walks, entries))
}

/// M^t 1_x by repeated dense products, M = ½(I + A/d).
pub fn exact_walk_distribution(g: &RegularGraph, t: usize, x: usize) -> Result<Vec<f64>> {
    let n = g.n();
    if n > WALK_DENSE_LIMIT {
        return Err(Error::Capability(format!(
            "exact walk distribution limited to n <= {WALK_DENSE_LIMIT}, got {n}"
        )));
    }
    if x >= n {
        return Err(Error::usage(format!("start vertex {x} out of range")));
    }
    let mut p = vec![0.0; n];
    p[x] = 1.0;
    let mut next = vec![0.0; n];
    let w = 0.5 / g.d() as f64;
    for _ in 0..t {
        for v in 0..n {
            let s: f64 = g.adjacency(v).iter().map(|&u| p[u as usize]).sum();
            next[v] = 0.5 * p[v] + w * s;
        }
        std::mem::swap(&mut p, &mut next);
    }
    Ok(p)
}

/// Columns of walk distributions from a sampled vertex multiset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionSample {
    pub sample: Vec<u32>,
    pub columns: Vec<WalkDistribution>,
    pub walks: u32,
    pub t: usize,
}

/// Column j runs walks keyed (tag, sample[j], rep, j·R + w), so repeated starts get
/// independent columns.
pub fn estimate_transition_matrix(
    g: &RegularGraph,
    sample: &[u32],
    walks: u32,
    t: usize,
    seed: &Seed,
    tag: Purpose,
    rep: u32,
) -> Result<TransitionSample> {
    if sample.is_empty() {
        return Err(Error::usage("transition sample needs at least one start vertex"));
    }
    let columns = sample
        .par_iter()
        .enumerate()
        .map(|(j, &x)| run_walk_block(g, walks, j as u64 * walks as u64, t, x as usize, seed, tag, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(TransitionSample { sample: sample.to_vec(), columns, walks, t })
}

/// Sparse rows: for each vertex, the (column, count) pairs of a transition sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexRows {
    row_ptr: Vec<u64>,
    cols: Vec<u32>,
    counts: Vec<u32>,
    pub s: usize,
    pub walks: u32,
}

impl VertexRows {
    pub fn from_sample(ts: &TransitionSample, n: usize) -> Self {
        let cols: Vec<&[(u32, u32)]> = ts.columns.iter().map(|c| c.entries()).collect();
        Self::from_columns(&cols, n, ts.walks)
    }

    /// Builds rows from per-column (vertex, count) lists.
    pub fn from_columns(columns: &[&[(u32, u32)]], n: usize, walks: u32) -> Self {
        let mut deg = vec![0u64; n + 1];
        for c in columns {
            for &(v, _) in c.iter() {
                deg[v as usize + 1] += 1;
            }
        }
        for i in 0..n {
            deg[i + 1] += deg[i];
        }
        let nnz = deg[n] as usize;
        let mut fill = deg.clone();
        let mut cols = vec![0u32; nnz];
        let mut counts = vec![0u32; nnz];
        for (j, c) in columns.iter().enumerate() {
            for &(v, cnt) in c.iter() {
                let at = fill[v as usize] as usize;
                cols[at] = j as u32;
                counts[at] = cnt;
                fill[v as usize] += 1;
            }
        }
        VertexRows { row_ptr: deg, cols, counts, s: columns.len(), walks }
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn row(&self, v: usize) -> (&[u32], &[u32]) {
        let (a, b) = (self.row_ptr[v] as usize, self.row_ptr[v + 1] as usize);
        (&self.cols[a..b], &self.counts[a..b])
    }

    /// Column-major view: for each column, its (vertex, count) pairs sorted by vertex.
    pub fn to_columns(&self) -> Vec<Vec<(u32, u32)>> {
        let mut out = vec![Vec::new(); self.s];
        for v in 0..self.n() {
            let (c, k) = self.row(v);
            for (&j, &cnt) in c.iter().zip(k) {
                out[j as usize].push((v as u32, cnt));
            }
        }
        out
    }

    /// Integer products Σ_y cnt_dist(y)·cnt_rows(y, j) for every column j.
    pub(crate) fn accumulate(&self, dist: &[(u32, u32)], acc: &mut [u64]) {
        acc.iter_mut().for_each(|a| *a = 0);
        for &(y, cm) in dist {
            let (c, k) = self.row(y as usize);
            for (&j, &cq) in c.iter().zip(k) {
                acc[j as usize] += cm as u64 * cq as u64;
            }
        }
    }
}

/// C + Cᵀ with C = P̂ᵀQ̂ in raw counts (upper triangle, row-major, including diagonal).
fn symmetric_collision_counts(p: &TransitionSample, q_rows: &VertexRows) -> Vec<u64> {
    let s = p.columns.len();
    let rows: Vec<Vec<u64>> = p
        .columns
        .par_iter()
        .map(|col| {
            let mut acc = vec![0u64; s];
            q_rows.accumulate(col.entries(), &mut acc);
            acc
        })
        .collect();
    let mut upper = Vec::with_capacity(s * (s + 1) / 2);
    for a in 0..s {
        for b in a..s {
            upper.push(rows[a][b] + rows[b][a]);
        }
    }
    upper
}

/// Entrywise median over m repetitions of ½(P̂ᵢᵀQ̂ᵢ + Q̂ᵢᵀP̂ᵢ).
pub fn estimate_collision_probabilities(
    g: &RegularGraph,
    sample: &[u32],
    walks: u32,
    t: usize,
    m: usize,
    seed: &Seed,
) -> Result<DMatrix<f64>> {
    if m == 0 || m % 2 == 0 {
        return Err(Error::usage(format!("repetition count must be odd, got {m}")));
    }
    let s = sample.len();
    let mut reps: Vec<Vec<u64>> = Vec::with_capacity(m);
    for i in 0..m as u32 {
        let p = estimate_transition_matrix(g, sample, walks, t, seed, Purpose::CollisionLeft, i)?;
        let q = estimate_transition_matrix(g, sample, walks, t, seed, Purpose::CollisionRight, i)?;
        let q_rows = VertexRows::from_sample(&q, g.n());
        drop(q);
        reps.push(symmetric_collision_counts(&p, &q_rows));
    }
    let scale = 1.0 / (2.0 * walks as f64 * walks as f64);
    let mut out = DMatrix::zeros(s, s);
    let mut vals = vec![0u64; m];
    let mut idx = 0;
    for a in 0..s {
        for b in a..s {
            for (i, r) in reps.iter().enumerate() {
                vals[i] = r[idx];
            }
            vals.sort_unstable();
            let v = vals[m / 2] as f64 * scale;
            out[(a, b)] = v;
            out[(b, a)] = v;
            idx += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::{cycle, padded_cliques};

    fn loops_only() -> RegularGraph {
        RegularGraph::from_slots(3, 4, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]).unwrap()
    }

    #[test]
    fn zero_length_walks_stay_home() {
        let g = cycle(6);
        let m = run_random_walks(&g, 50, 0, 4, &Seed::new(1), Purpose::WalkInit, 0).unwrap();
        assert_eq!(m.entries(), &[(4, 50)]);
        assert_eq!(g.probe_count(), 0);
    }

    #[test]
    fn self_loop_vertex_is_absorbing() {
        let g = loops_only();
        let m = run_random_walks(&g, 100, 25, 1, &Seed::new(1), Purpose::WalkInit, 0).unwrap();
        assert_eq!(m.entries(), &[(1, 100)]);
    }

    #[test]
    fn cycle_walks_match_exact_distribution() {
        let g = cycle(6);
        let m = run_random_walks(&g, 100_000, 3, 0, &Seed::new(7), Purpose::WalkInit, 0).unwrap();
        let p = exact_walk_distribution(&g, 3, 0).unwrap();
        assert!(m.total_variation(&p) <= 0.01);
        assert_eq!(m.entries().iter().map(|e| e.1).sum::<u32>(), 100_000);
        assert!(g.probe_count() <= 300_000);
    }

    #[test]
    fn probes_equal_moves() {
        let g = cycle(10);
        let seed = Seed::new(3);
        let m = run_random_walks(&g, 500, 7, 2, &seed, Purpose::WalkQuery, 1).unwrap();
        // Replay with explicit step choices.
        let mut moves = 0;
        for w in 0..500u64 {
            let s = seed.walk_stream(Purpose::WalkQuery, 2, 1, w);
            for step in 0..7 {
                if s.outcome(step, 4) >= 2 {
                    moves += 1;
                }
            }
        }
        assert_eq!(g.probe_count(), moves);
        assert_eq!(m.walks, 500);
    }

    #[test]
    fn exact_distribution_examples() {
        let g = cycle(5);
        let p0 = exact_walk_distribution(&g, 0, 2).unwrap();
        assert_eq!(p0, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let pair = RegularGraph::from_slots(2, 2, vec![1, 1, 0, 0]).unwrap();
        assert_eq!(exact_walk_distribution(&pair, 1, 0).unwrap(), vec![0.5, 0.5]);
        let cl = padded_cliques(&[6, 9], 10);
        let p = exact_walk_distribution(&cl, 200, 7).unwrap();
        for (v, &pv) in p.iter().enumerate() {
            let expect = if v >= 6 { 1.0 / 9.0 } else { 0.0 };
            assert!((pv - expect).abs() < 1e-6);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn transition_columns_and_duplicates() {
        let g = cycle(12);
        let seed = Seed::new(4);
        let single = estimate_transition_matrix(&g, &[3], 200, 5, &seed, Purpose::WalkInit, 0).unwrap();
        let direct = run_random_walks(&g, 200, 5, 3, &seed, Purpose::WalkInit, 0).unwrap();
        assert_eq!(single.columns[0], direct);
        let dup = estimate_transition_matrix(&g, &[3, 3], 200, 5, &seed, Purpose::WalkInit, 0).unwrap();
        assert_eq!(dup.columns[0].start, dup.columns[1].start);
        assert_ne!(dup.columns[0], dup.columns[1]);
    }

    #[test]
    fn collision_gram_examples() {
        let g = loops_only();
        let gram = estimate_collision_probabilities(&g, &[2], 10, 4, 3, &Seed::new(1)).unwrap();
        assert_eq!(gram[(0, 0)], 1.0);
        let g = cycle(20);
        let gram = estimate_collision_probabilities(&g, &[0, 5, 5, 11], 300, 6, 5, &Seed::new(2)).unwrap();
        assert_eq!(gram, gram.transpose());
        assert!(gram.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(estimate_collision_probabilities(&g, &[0], 10, 4, 2, &Seed::new(1)).is_err());
    }

    #[test]
    fn vertex_rows_round_trip() {
        let g = cycle(15);
        let ts = estimate_transition_matrix(&g, &[0, 4, 4, 9], 40, 6, &Seed::new(6), Purpose::WalkInit, 2).unwrap();
        let rows = VertexRows::from_sample(&ts, 15);
        let cols = rows.to_columns();
        for (j, c) in ts.columns.iter().enumerate() {
            assert_eq!(c.entries(), &cols[j][..]);
        }
    }

    #[test]
    fn results_independent_of_thread_count() {
        let g = cycle(40);
        let sample: Vec<u32> = (0..40).step_by(3).collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                estimate_collision_probabilities(&g, &sample, 200, 9, 3, &Seed::new(8)).unwrap()
            })
        };
        assert_eq!(run(1), run(4));
    }
}
