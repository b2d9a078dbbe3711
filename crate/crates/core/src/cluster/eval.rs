use pathfinding::kuhn_munkres::kuhn_munkres_min;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{outer_conductance, RegularGraph};

/// Agreement between output labels and a ground-truth partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    /// matching[i] is the output label (1-based) paired with true cluster i.
    pub matching: Vec<u32>,
    /// |C_i △ Ĉ_matching[i]| / |C_i|.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub sizes: Vec<usize>,
    /// Exact outer conductance of each matched output cluster, when a graph was given.
    pub output_conductances: Option<Vec<f64>>,
}

const SCALE: f64 = 1e12;

/// Matches output labels to true clusters so as to minimize the worst ratio, then the
/// total, and reports per-cluster symmetric differences.
pub fn evaluate_clustering(labels: &[u32], truth: &[Vec<usize>], g: Option<&RegularGraph>) -> Result<ClusteringReport> {
    let n = labels.len();
    let k = truth.len();
    if k == 0 {
        return Err(Error::usage("ground truth has no clusters"));
    }
    if labels.contains(&0) {
        return Err(Error::usage("labels are 1-based"));
    }
    let mut seen = vec![false; n];
    for &v in truth.iter().flatten() {
        if v >= n || std::mem::replace(&mut seen[v], true) {
            return Err(Error::usage("ground truth must be a partition of the labelled vertices"));
        }
    }
    let label_count = labels.iter().max().map_or(0, |&m| m as usize);
    let dim = k.max(label_count);
    let mut out_sizes = vec![0usize; dim];
    for &l in labels {
        out_sizes[l as usize - 1] += 1;
    }
    let mut overlap = vec![vec![0usize; dim]; dim];
    for (i, c) in truth.iter().enumerate() {
        for &v in c {
            overlap[i][labels[v] as usize - 1] += 1;
        }
    }
    // Rows past k are padding clusters of size zero.
    let ratio = |i: usize, j: usize| -> f64 {
        if i >= k {
            return 0.0;
        }
        let size = truth[i].len();
        if size == 0 {
            return 0.0;
        }
        (size + out_sizes[j] - 2 * overlap[i][j]) as f64 / size as f64
    };
    let mut thresholds: Vec<f64> = (0..k).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| ratio(i, j)).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let feasible = |thr: f64| {
        let m = Matrix::from_fn(dim, dim, |(i, j)| i64::from(ratio(i, j) > thr));
        kuhn_munkres_min(&m).0 == 0
    };
    let (mut lo, mut hi) = (0, thresholds.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(thresholds[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let thr = thresholds[lo];
    let big = (SCALE * (dim as f64 + 1.0) * 4.0) as i64;
    let costs = Matrix::from_fn(dim, dim, |(i, j)| {
        let r = ratio(i, j);
        if r > thr { big } else { (r * SCALE).round() as i64 }
    });
    let (_, assign) = kuhn_munkres_min(&costs);
    let ratios: Vec<f64> = (0..k).map(|i| ratio(i, assign[i])).collect();
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let output_conductances = match g {
        None => None,
        Some(g) => {
            if g.n() != n {
                return Err(Error::usage("graph size differs from label count"));
            }
            let mut members = vec![Vec::new(); dim];
            for (v, &l) in labels.iter().enumerate() {
                members[l as usize - 1].push(v);
            }
            Some(
                (0..k)
                    .map(|i| {
                        let c = &members[assign[i]];
                        if c.is_empty() { Ok(0.0) } else { outer_conductance(g, c) }
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        }
    };
    Ok(ClusteringReport {
        matching: (0..k).map(|i| assign[i] as u32 + 1).collect(),
        ratios,
        max_ratio,
        sizes: truth.iter().map(Vec::len).collect(),
        output_conductances,
    })
}
