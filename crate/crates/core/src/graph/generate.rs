//! Synthetic clusterable instances: random expanders per cluster, sparse rewired cross edges.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{degree_regularize, outer_conductance, RegularGraph};
use crate::error::{Error, Result};
use crate::exact;
use crate::rng::{Purpose, Seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub k: usize,
    pub sizes: Vec<usize>,
    pub d: usize,
    /// Expected number of cross-cluster slots per vertex.
    pub p_cross: f64,
    pub max_size_ratio: f64,
    /// Minimum accepted λ_{k+1} of the normalized Laplacian.
    pub lambda_floor: f64,
    pub max_retries: usize,
    /// Run the eigenvalue certificate when n is within the dense limit.
    pub certify: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            k: 3,
            sizes: vec![1000, 1000, 1000],
            d: 12,
            p_cross: 0.3,
            max_size_ratio: 4.0,
            lambda_floor: 0.2,
            max_retries: 5,
            certify: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetadata {
    /// Exact outer conductance of each ground-truth cluster.
    pub outer_conductance: Vec<f64>,
    pub lambda_k: Option<f64>,
    pub lambda_k1: Option<f64>,
    pub max_size_ratio: f64,
    pub retries: usize,
    pub certified: bool,
}

impl InstanceMetadata {
    /// Largest cluster outer conductance.
    pub fn eps_hat(&self) -> f64 {
        self.outer_conductance.iter().cloned().fold(0.0, f64::max)
    }

    /// sqrt(2 λ_{k+1}), when the spectrum was computed.
    pub fn phi_hat(&self) -> Option<f64> {
        self.lambda_k1.map(|l| (2.0 * l).max(0.0).sqrt())
    }
}

#[derive(Debug, Clone)]
pub struct ClusterableInstance {
    pub graph: RegularGraph,
    /// Ground-truth clusters, each a sorted list of vertex ids.
    pub clusters: Vec<Vec<usize>>,
    pub k: usize,
    pub target_phi: f64,
    pub target_eps: f64,
    pub seed: Seed,
    pub metadata: InstanceMetadata,
}

impl ClusterableInstance {
    /// 0-based cluster index of every vertex.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.graph.n()];
        for (i, c) in self.clusters.iter().enumerate() {
            for &v in c {
                labels[v] = i;
            }
        }
        labels
    }

    pub fn min_cluster_size(&self) -> usize {
        self.clusters.iter().map(Vec::len).min().unwrap_or(0)
    }
}

fn validate(cfg: &GeneratorConfig) -> Result<()> {
    if cfg.k == 0 || cfg.sizes.len() != cfg.k {
        return Err(Error::usage(format!("need exactly k={} cluster sizes, got {}", cfg.k, cfg.sizes.len())));
    }
    if cfg.d < 2 {
        return Err(Error::usage("degree must be at least 2"));
    }
    if let Some(&s) = cfg.sizes.iter().find(|&&s| s < cfg.d + 1) {
        return Err(Error::usage(format!("cluster size {s} below d+1={}", cfg.d + 1)));
    }
    if !(0.0..cfg.d as f64).contains(&cfg.p_cross) {
        return Err(Error::usage(format!("p_cross must lie in [0, d), got {}", cfg.p_cross)));
    }
    if cfg.k == 1 && cfg.p_cross > 0.0 {
        return Err(Error::usage("a single cluster has no cross edges; set p_cross = 0"));
    }
    let max = *cfg.sizes.iter().max().unwrap() as f64;
    let min = *cfg.sizes.iter().min().unwrap() as f64;
    if max / min > cfg.max_size_ratio {
        return Err(Error::usage(format!(
            "size ratio {} exceeds max_size_ratio {}",
            max / min,
            cfg.max_size_ratio
        )));
    }
    Ok(())
}

/// Builds a (k, φ, ε)-clusterable d-regular graph with contiguous clusters.
pub fn generate_clusterable(cfg: &GeneratorConfig, seed: Seed) -> Result<ClusterableInstance> {
    validate(cfg)?;
    let n: usize = cfg.sizes.iter().sum();
    let certify = cfg.certify && n <= exact::DENSE_LIMIT;
    let mut last_report = String::new();
    for attempt in 0..=cfg.max_retries {
        let attempt_seed = if attempt == 0 { seed } else { seed.derive(attempt as u64) };
        let (graph, clusters) = build(cfg, attempt_seed)?;
        let outer: Vec<f64> = clusters
            .iter()
            .map(|c| outer_conductance(&graph, c))
            .collect::<Result<_>>()?;
        let eps = outer.iter().cloned().fold(0.0, f64::max);
        let (lambda_k, lambda_k1) = if certify {
            let spectrum = exact::bottom_eigenvalues(&graph, cfg.k + 1)?;
            (Some(spectrum[cfg.k - 1]), Some(spectrum[cfg.k]))
        } else {
            (None, None)
        };
        if let (Some(lk), Some(lk1)) = (lambda_k, lambda_k1) {
            if lk1 < cfg.lambda_floor || lk > 2.0 * eps + 1e-9 {
                last_report = format!(
                    "attempt {attempt}: lambda_k={lk:.6}, lambda_k+1={lk1:.6}, floor={}, max outer conductance={eps:.6}",
                    cfg.lambda_floor
                );
                continue;
            }
        }
        let max = *cfg.sizes.iter().max().unwrap() as f64;
        let min = *cfg.sizes.iter().min().unwrap() as f64;
        return Ok(ClusterableInstance {
            graph,
            clusters,
            k: cfg.k,
            target_phi: (2.0 * cfg.lambda_floor).sqrt(),
            target_eps: cfg.p_cross / cfg.d as f64,
            seed,
            metadata: InstanceMetadata {
                outer_conductance: outer,
                lambda_k,
                lambda_k1,
                max_size_ratio: max / min,
                retries: attempt,
                certified: certify,
            },
        });
    }
    Err(Error::Generation(format!(
        "expansion certificate failed after {} retries; last {last_report}",
        cfg.max_retries
    )))
}

fn build(cfg: &GeneratorConfig, seed: Seed) -> Result<(RegularGraph, Vec<Vec<usize>>)> {
    let seed_bytes = seed.root().to_le_bytes();
    let mut key = [0u8; 32];
    key[..16].copy_from_slice(&seed_bytes);
    key[16] = Purpose::Generator as u8;
    let mut rng = ChaCha8Rng::from_seed(key);

    let n: usize = cfg.sizes.iter().sum();
    let mut adj: Vec<Vec<usize>> = vec![Vec::with_capacity(cfg.d); n];
    let mut clusters = Vec::with_capacity(cfg.k);
    let mut cluster_of = vec![0usize; n];
    let mut offset = 0;
    for (ci, &size) in cfg.sizes.iter().enumerate() {
        let members: Vec<usize> = (offset..offset + size).collect();
        for &v in &members {
            cluster_of[v] = ci;
        }
        let mut order = members.clone();
        for _ in 0..cfg.d / 2 {
            order.shuffle(&mut rng);
            for j in 0..size {
                let (a, b) = (order[j], order[(j + 1) % size]);
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        if cfg.d % 2 == 1 {
            order.shuffle(&mut rng);
            for pair in order.chunks(2) {
                match *pair {
                    [a, b] => {
                        adj[a].push(b);
                        adj[b].push(a);
                    }
                    [a] => adj[a].push(a),
                    _ => unreachable!(),
                }
            }
        }
        clusters.push(members);
        offset += size;
    }

    let swaps = (cfg.p_cross * n as f64 / 4.0).round() as usize;
    for _ in 0..swaps {
        let (a, ia, b) = pick_intra(&adj, &cluster_of, &mut rng, n, None)?;
        let (c, ic, e) = pick_intra(&adj, &cluster_of, &mut rng, n, Some(cluster_of[a]))?;
        let ib = adj[b].iter().position(|&y| y == a).expect("symmetric slot");
        let ie = adj[e].iter().position(|&y| y == c).expect("symmetric slot");
        adj[a][ia] = c;
        adj[c][ic] = a;
        adj[b][ib] = e;
        adj[e][ie] = b;
    }
    Ok((degree_regularize(&adj, cfg.d)?, clusters))
}

/// A random slot (x, i) whose endpoint y is a different vertex in x's own cluster.
/// With `avoid`, x is drawn outside that cluster.
fn pick_intra(
    adj: &[Vec<usize>],
    cluster_of: &[usize],
    rng: &mut ChaCha8Rng,
    n: usize,
    avoid: Option<usize>,
) -> Result<(usize, usize, usize)> {
    for _ in 0..10_000 {
        let x = rng.gen_range(0..n);
        if avoid == Some(cluster_of[x]) {
            continue;
        }
        let i = rng.gen_range(0..adj[x].len());
        let y = adj[x][i];
        if y != x && cluster_of[y] == cluster_of[x] {
            return Ok((x, i, y));
        }
    }
    Err(Error::Generation("cross-edge budget exhausted the intra-cluster edges".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k: usize, sizes: &[usize], d: usize, p_cross: f64) -> GeneratorConfig {
        GeneratorConfig { k, sizes: sizes.to_vec(), d, p_cross, ..Default::default() }
    }

    #[test]
    fn single_cluster_has_no_boundary() {
        let inst = generate_clusterable(&cfg(1, &[50], 6, 0.0), Seed::new(1)).unwrap();
        assert_eq!(inst.metadata.outer_conductance, vec![0.0]);
        assert_eq!(inst.graph.n(), 50);
    }

    #[test]
    fn disconnected_pair_has_zero_lambda_two() {
        let inst = generate_clusterable(&cfg(2, &[100, 100], 8, 0.0), Seed::new(2)).unwrap();
        assert!(inst.metadata.lambda_k.unwrap().abs() < 1e-8);
        let phi = inst.metadata.phi_hat().unwrap();
        assert!(inst.metadata.lambda_k1.unwrap() >= phi * phi / 2.0 - 1e-12);
        for x in 0..100 {
            assert!(inst.graph.adjacency(x).iter().all(|&y| (y as usize) < 100));
        }
    }

    #[test]
    fn cross_edge_rate_matches_target() {
        let inst = generate_clusterable(&cfg(3, &[200, 200, 200], 12, 0.3), Seed::new(3)).unwrap();
        for &phi in &inst.metadata.outer_conductance {
            assert!((phi - 0.025).abs() <= 0.3 * 0.025, "outer conductance {phi}");
        }
    }

    #[test]
    fn neighbor_reads_match_stored_slots() {
        let inst = generate_clusterable(&cfg(2, &[30, 30], 5, 0.5), Seed::new(4)).unwrap();
        let g = &inst.graph;
        for x in 0..g.n() {
            for i in 0..g.d() {
                assert_eq!(g.neighbor(x, i).unwrap(), g.adjacency(x)[i] as usize);
            }
        }
        assert_eq!(g.probe_count(), (g.n() * g.d()) as u64);
    }

    #[test]
    fn generation_is_deterministic() {
        let c = cfg(2, &[40, 40], 6, 0.4);
        let a = generate_clusterable(&c, Seed::new(9)).unwrap();
        let b = generate_clusterable(&c, Seed::new(9)).unwrap();
        assert_eq!(a.graph, b.graph);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate_clusterable(&cfg(2, &[5, 40], 6, 0.0), Seed::new(1)).is_err());
        assert!(generate_clusterable(&cfg(2, &[20, 100], 6, 0.0), Seed::new(1)).is_err());
        assert!(generate_clusterable(&cfg(1, &[20], 6, 0.5), Seed::new(1)).is_err());
        assert!(generate_clusterable(&cfg(2, &[20, 20], 6, 6.0), Seed::new(1)).is_err());
    }

    #[test]
    fn impossible_floor_reports_generation_error() {
        let mut c = cfg(2, &[20, 20], 4, 0.0);
        c.lambda_floor = 1.9;
        c.max_retries = 1;
        assert!(matches!(generate_clusterable(&c, Seed::new(1)), Err(Error::Generation(_))));
    }
}
