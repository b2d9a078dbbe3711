//! d-regular graphs with probe-counted neighbor access.

mod generate;
mod io;

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

pub use generate::{generate_clusterable, ClusterableInstance, GeneratorConfig, InstanceMetadata};
pub use io::{contiguous_ranges, read_graph_file, write_graph_file, GraphFile};

/// Largest cluster for which inner conductance is computed by subset enumeration.
pub const EXHAUSTIVE_LIMIT: usize = 20;

/// Adjacency in fixed slot form: vertex `x` owns slots `x*d .. x*d+d`.
#[derive(Debug)]
pub struct RegularGraph {
    n: usize,
    d: usize,
    slots: Vec<u32>,
    probes: AtomicU64,
}

impl Clone for RegularGraph {
    /// The clone starts with a fresh probe counter.
    fn clone(&self) -> Self {
        RegularGraph { n: self.n, d: self.d, slots: self.slots.clone(), probes: AtomicU64::new(0) }
    }
}

impl PartialEq for RegularGraph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.d == other.d && self.slots == other.slots
    }
}

impl RegularGraph {
    /// Builds a graph from raw slots, checking ranges and slot symmetry.
    pub fn from_slots(n: usize, d: usize, slots: Vec<u32>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::usage("graph needs n >= 1 and d >= 1"));
        }
        if n > u32::MAX as usize {
            return Err(Error::Capability(format!("{n} vertices exceed the u32 id space")));
        }
        if slots.len() != n * d {
            return Err(Error::format(format!(
                "expected {} slots for n={n}, d={d}, got {}",
                n * d,
                slots.len()
            )));
        }
        if let Some(bad) = slots.iter().find(|&&y| y as usize >= n) {
            return Err(Error::format(format!("neighbor id {bad} out of range for n={n}")));
        }
        let g = RegularGraph { n, d, slots, probes: AtomicU64::new(0) };
        g.check_symmetric()?;
        Ok(g)
    }

    fn check_symmetric(&self) -> Result<()> {
        let mut fwd: Vec<(u32, u32)> = Vec::with_capacity(self.slots.len());
        for x in 0..self.n {
            for &y in self.adjacency(x) {
                if y as usize != x {
                    fwd.push((x as u32, y));
                }
            }
        }
        let mut rev: Vec<(u32, u32)> = fwd.iter().map(|&(a, b)| (b, a)).collect();
        fwd.sort_unstable();
        rev.sort_unstable();
        if fwd != rev {
            let bad = fwd.iter().zip(&rev).find(|(a, b)| a != b).map(|(a, _)| a.0);
            return Err(Error::format(format!(
                "neighbor multiset is not symmetric (first mismatch near vertex {bad:?})"
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// The vertex in slot `i` of `x`. Counts one probe.
    pub fn neighbor(&self, x: usize, i: usize) -> Result<usize> {
        if x >= self.n || i >= self.d {
            return Err(Error::usage(format!(
                "neighbor({x}, {i}) out of range for n={}, d={}",
                self.n, self.d
            )));
        }
        self.probes.fetch_add(1, Ordering::Relaxed);
        Ok(self.slots[x * self.d + i] as usize)
    }

    /// Total neighbor reads so far.
    pub fn probe_count(&self) -> u64 {
        self.probes.load(Ordering::Relaxed)
    }

    pub(crate) fn add_probes(&self, count: u64) {
        if count > 0 {
            self.probes.fetch_add(count, Ordering::Relaxed);
        }
    }

    /// Raw slot table for walk batches, which account probes themselves.
    #[inline]
    pub(crate) fn raw_slots(&self) -> &[u32] {
        &self.slots
    }

    /// Slots of `x` without counting probes. Meant for offline consumers (exact
    /// baselines, serialization), never for the sublinear query path.
    pub fn adjacency(&self, x: usize) -> &[u32] {
        &self.slots[x * self.d..(x + 1) * self.d]
    }

    /// Number of non-loop edges, each counted once.
    pub fn edge_count(&self) -> usize {
        (0..self.n)
            .map(|x| self.adjacency(x).iter().filter(|&&y| y as usize != x).count())
            .sum::<usize>()
            / 2
    }

    /// Order-sensitive fingerprint of the slot table.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.d as u64).to_le_bytes());
        for &y in &self.slots {
            h.update(y.to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Pads each adjacency list to `d` slots with self-loops. Lists must be symmetric
/// (y appears in x's list as often as x in y's); a self-loop takes one slot.
pub fn degree_regularize(adjacency: &[Vec<usize>], d: usize) -> Result<RegularGraph> {
    let n = adjacency.len();
    let mut slots = Vec::with_capacity(n * d);
    for (x, list) in adjacency.iter().enumerate() {
        if list.len() > d {
            return Err(Error::DegreeOverflow { vertex: x, degree: list.len(), d });
        }
        for &y in list {
            if y >= n {
                return Err(Error::usage(format!("vertex {x} lists neighbor {y} >= n={n}")));
            }
            slots.push(y as u32);
        }
        slots.extend(std::iter::repeat(x as u32).take(d - list.len()));
    }
    RegularGraph::from_slots(n, d, slots)
}

fn membership(n: usize, set: &[usize], what: &str) -> Result<(Vec<bool>, usize)> {
    let mut mask = vec![false; n];
    let mut size = 0;
    for &v in set {
        if v >= n {
            return Err(Error::usage(format!("{what} contains vertex {v} >= n={n}")));
        }
        if !mask[v] {
            mask[v] = true;
            size += 1;
        }
    }
    Ok((mask, size))
}

/// |E(S, C∖S)| / (d|S|). Self-loops never cross.
pub fn conductance_within(g: &RegularGraph, s: &[usize], c: &[usize]) -> Result<f64> {
    let (in_s, s_size) = membership(g.n, s, "S")?;
    let (in_c, _) = membership(g.n, c, "C")?;
    if s_size == 0 {
        return Err(Error::usage("conductance of an empty set"));
    }
    if let Some(v) = (0..g.n).find(|&v| in_s[v] && !in_c[v]) {
        return Err(Error::usage(format!("S is not a subset of C (vertex {v})")));
    }
    let crossing = crossing_edges(g, &in_s, |y| in_c[y]);
    Ok(crossing as f64 / (g.d * s_size) as f64)
}

fn crossing_edges(g: &RegularGraph, in_s: &[bool], in_target: impl Fn(usize) -> bool) -> usize {
    let mut crossing = 0;
    for x in (0..g.n).filter(|&x| in_s[x]) {
        for &y in g.adjacency(x) {
            let y = y as usize;
            if !in_s[y] && in_target(y) {
                crossing += 1;
            }
        }
    }
    crossing
}

/// |E(C, V∖C)| / (d|C|).
pub fn outer_conductance(g: &RegularGraph, c: &[usize]) -> Result<f64> {
    let (in_c, size) = membership(g.n, c, "C")?;
    if size == 0 {
        return Err(Error::usage("outer conductance of an empty set"));
    }
    Ok(crossing_edges(g, &in_c, |_| true) as f64 / (g.d * size) as f64)
}

/// Minimum of `conductance_within(S, C)` over nonempty S ⊆ C with |S| ≤ |C|/2, by
/// enumerating subsets in Gray-code order. Singletons have inner conductance 1.
pub fn inner_conductance(g: &RegularGraph, c: &[usize]) -> Result<f64> {
    inner_conductance_with_limit(g, c, EXHAUSTIVE_LIMIT)
}

pub fn inner_conductance_with_limit(g: &RegularGraph, c: &[usize], limit: usize) -> Result<f64> {
    let (mask, size) = membership(g.n, c, "C")?;
    if size == 0 {
        return Err(Error::usage("inner conductance of an empty set"));
    }
    if size > limit {
        return Err(Error::Capability(format!(
            "exact inner conductance enumerates 2^{size} subsets (limit {limit}); \
             use the spectral lower bound from the exact baseline instead"
        )));
    }
    if size == 1 {
        return Ok(1.0);
    }
    let members: Vec<usize> = (0..g.n).filter(|&v| mask[v]).collect();
    let mut local = vec![usize::MAX; g.n];
    for (i, &v) in members.iter().enumerate() {
        local[v] = i;
    }
    // w[i][j]: slots from member i to member j (multi-edges counted, loops dropped).
    let m = members.len();
    let mut w = vec![vec![0i64; m]; m];
    for (i, &v) in members.iter().enumerate() {
        for &y in g.adjacency(v) {
            let j = local[y as usize];
            if j != usize::MAX && j != i {
                w[i][j] += 1;
            }
        }
    }
    let mut in_s = vec![false; m];
    let mut s_size = 0usize;
    let mut cut = 0i64;
    let mut best = f64::INFINITY;
    for step in 1u64..(1u64 << m) {
        let v = step.trailing_zeros() as usize;
        let to_s: i64 = (0..m).filter(|&j| in_s[j]).map(|j| w[v][j]).sum();
        let deg_in_c: i64 = w[v].iter().sum();
        if in_s[v] {
            in_s[v] = false;
            s_size -= 1;
            cut += 2 * to_s - deg_in_c;
        } else {
            in_s[v] = true;
            s_size += 1;
            cut += deg_in_c - 2 * to_s;
        }
        if s_size > 0 && 2 * s_size <= m {
            best = best.min(cut as f64 / (g.d * s_size) as f64);
        }
    }
    Ok(best)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn cycle(n: usize) -> RegularGraph {
        let adj: Vec<Vec<usize>> = (0..n).map(|x| vec![(x + 1) % n, (x + n - 1) % n]).collect();
        degree_regularize(&adj, 2).unwrap()
    }

    pub fn padded_cliques(sizes: &[usize], d: usize) -> RegularGraph {
        let mut adj = Vec::new();
        let mut off = 0;
        for &s in sizes {
            for i in 0..s {
                adj.push((0..s).filter(|&j| j != i).map(|j| off + j).collect());
            }
            off += s;
        }
        degree_regularize(&adj, d).unwrap()
    }

    fn brute_force_within(g: &RegularGraph, s: &[usize], c: &[usize]) -> f64 {
        let mut crossing = 0;
        for x in 0..g.n() {
            for &y in g.adjacency(x) {
                let y = y as usize;
                if s.contains(&x) && c.contains(&y) && !s.contains(&y) {
                    crossing += 1;
                }
            }
        }
        crossing as f64 / (g.d() * s.len()) as f64
    }

    #[test]
    fn self_loop_slot_returns_self() {
        let g = padded_cliques(&[3], 4);
        let slots: Vec<usize> = (0..4).map(|i| g.neighbor(0, i).unwrap()).collect();
        assert_eq!(slots.iter().filter(|&&y| y == 0).count(), 2);
    }

    #[test]
    fn cycle_neighbors() {
        let g = cycle(6);
        let mut nb = vec![g.neighbor(0, 0).unwrap(), g.neighbor(0, 1).unwrap()];
        nb.sort();
        assert_eq!(nb, vec![1, 5]);
        assert!(g.neighbor(6, 0).is_err());
        assert!(g.neighbor(0, 2).is_err());
    }

    #[test]
    fn probes_count_every_read() {
        let g = cycle(6);
        let before = g.probe_count();
        for k in 0..37 {
            g.neighbor(k % 6, k % 2).unwrap();
        }
        assert_eq!(g.probe_count() - before, 37);
    }

    #[test]
    fn regularize_examples() {
        let g = degree_regularize(&[vec![]], 3).unwrap();
        assert_eq!(g.adjacency(0), &[0, 0, 0]);

        let path = degree_regularize(&[vec![1], vec![0, 2], vec![1]], 2).unwrap();
        assert_eq!(path.adjacency(0).iter().filter(|&&y| y == 0).count(), 1);
        assert_eq!(path.adjacency(1).iter().filter(|&&y| y == 1).count(), 0);
        assert_eq!(path.adjacency(2).iter().filter(|&&y| y == 2).count(), 1);

        let c = cycle(5);
        let adj: Vec<Vec<usize>> =
            (0..5).map(|x| c.adjacency(x).iter().map(|&y| y as usize).collect()).collect();
        assert_eq!(degree_regularize(&adj, 2).unwrap(), c);
    }

    #[test]
    fn regularize_rejects_overflow() {
        let err = degree_regularize(&[vec![1, 1, 1], vec![0, 0, 0]], 2).unwrap_err();
        assert!(matches!(err, Error::DegreeOverflow { vertex: 0, .. }));
    }

    #[test]
    fn asymmetric_slots_rejected() {
        assert!(RegularGraph::from_slots(2, 1, vec![1, 1]).is_err());
    }

    #[test]
    fn conductance_examples() {
        let g = cycle(6);
        let all: Vec<usize> = (0..6).collect();
        assert!((conductance_within(&g, &[0, 1, 2], &all).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(conductance_within(&g, &[0, 1, 2], &[0, 1, 2]).unwrap(), 0.0);
        assert!(conductance_within(&g, &[], &all).is_err());
        assert!(conductance_within(&g, &[0, 4], &[0, 1]).is_err());
        assert_eq!(outer_conductance(&g, &all).unwrap(), 0.0);

        let two = padded_cliques(&[5, 5], 4);
        assert_eq!(outer_conductance(&two, &[0, 1, 2, 3, 4]).unwrap(), 0.0);
        assert!(outer_conductance(&two, &[]).is_err());
    }

    #[test]
    fn conductance_matches_brute_force_on_random_graph() {
        use rand::{seq::SliceRandom, Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 20;
        let mut adj = vec![Vec::new(); n];
        for _ in 0..40 {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b && adj[a].len() < 6 && adj[b].len() < 6 {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let g = degree_regularize(&adj, 6).unwrap();
        for _ in 0..20 {
            let mut c: Vec<usize> = (0..n).collect();
            c.shuffle(&mut rng);
            c.truncate(rng.gen_range(2..=n));
            let s: Vec<usize> = c[..rng.gen_range(1..=c.len())].to_vec();
            let expect = brute_force_within(&g, &s, &c);
            assert!((conductance_within(&g, &s, &c).unwrap() - expect).abs() < 1e-15);
            let all: Vec<usize> = (0..n).collect();
            let expect = brute_force_within(&g, &c, &all);
            assert!((outer_conductance(&g, &c).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn inner_conductance_examples() {
        let g = cycle(6);
        assert_eq!(inner_conductance(&g, &[2]).unwrap(), 1.0);
        let all: Vec<usize> = (0..6).collect();
        assert!((inner_conductance(&g, &all).unwrap() - 1.0 / 3.0).abs() < 1e-15);

        let k4 = padded_cliques(&[4], 4);
        assert!((inner_conductance(&k4, &[0, 1, 2, 3]).unwrap() - 0.5).abs() < 1e-15);

        let big = cycle(30);
        let c: Vec<usize> = (0..21).collect();
        assert!(matches!(inner_conductance(&big, &c), Err(Error::Capability(_))));
    }

    #[test]
    fn inner_conductance_matches_naive_enumeration() {
        let g = padded_cliques(&[4, 5], 6);
        let c: Vec<usize> = (0..9).collect();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << 9) {
            let s: Vec<usize> = (0..9).filter(|&i| mask >> i & 1 == 1).collect();
            if 2 * s.len() <= 9 {
                best = best.min(brute_force_within(&g, &s, &c));
            }
        }
        assert_eq!(inner_conductance(&g, &c).unwrap(), best);
    }
}
