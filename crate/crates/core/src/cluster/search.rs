use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{compute_ordered_partition, ClusterParams, OrderedPartition, StageRecord};
use crate::error::{Error, Result, RoundDiagnostics};
use crate::oracle::DotEngine;
use crate::rng::{sample_vertices, Purpose, Seed};
use crate::subspace::CenterRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    /// Try every partition of a small vertex sample into k parts.
    Exhaustive,
    /// Start from the ground-truth labels of a sample. For benchmarking only.
    Warmstart,
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchMode::Exhaustive => "exhaustive",
            SearchMode::Warmstart => "warmstart",
        })
    }
}

impl FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(SearchMode::Exhaustive),
            "warmstart" => Ok(SearchMode::Warmstart),
            _ => Err(Error::usage(format!("unknown search mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Allowed failure probability; sets the number of rounds.
    pub eta: f64,
    pub mode: SearchMode,
    /// Exhaustive sample size; defaults to the smaller of 8 and the budget cap.
    pub sample_size: Option<usize>,
    /// Largest k^s the exhaustive search may enumerate.
    pub budget: u64,
    /// Warmstart sample size per cluster.
    pub warm_per_cluster: usize,
    /// Relabelled variants tried after the unperturbed warmstart partition.
    pub perturbations: usize,
    pub rounds: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            eta: 0.1,
            mode: SearchMode::Exhaustive,
            sample_size: None,
            budget: 200_000,
            warm_per_cluster: 40,
            perturbations: 2,
            rounds: None,
        }
    }
}

impl SearchConfig {
    pub fn rounds(&self) -> Result<usize> {
        if let Some(r) = self.rounds {
            return if r == 0 { Err(Error::usage("rounds must be positive")) } else { Ok(r) };
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::usage(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        Ok((2.0 / self.eta).ln().ceil().max(1.0) as usize)
    }

    /// Largest sample whose k-part labelings fit in the budget.
    pub fn sample_cap(&self, k: usize) -> usize {
        if k <= 1 {
            return usize::MAX;
        }
        let mut s = 0;
        let mut pow: u64 = 1;
        while let Some(next) = pow.checked_mul(k as u64).filter(|&p| p <= self.budget) {
            pow = next;
            s += 1;
        }
        s
    }

    pub fn exhaustive_sample(&self, k: usize) -> Result<usize> {
        let cap = self.sample_cap(k);
        let s = match self.sample_size {
            Some(s) if s > cap => {
                return Err(Error::Capability(format!("{k}^{s} partitions exceed the budget {}", self.budget)))
            }
            Some(s) => s,
            None => cap.min(8),
        };
        if s < k {
            return Err(Error::usage(format!("sample size {s} cannot hold {k} parts")));
        }
        Ok(s)
    }
}

/// Set partitions of `0..s` into exactly `k` blocks, as restricted growth strings in
/// lexicographic order.
pub fn restricted_growth_partitions(s: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut state: Option<Vec<usize>> = if s == 0 || k == 0 { None } else { Some(vec![0; s]) };
    std::iter::from_fn(move || loop {
        let cur = state.take()?;
        // Advance: rightmost position that can grow.
        let mut next = None;
        let mut prefix_max = vec![0; s];
        for i in 1..s {
            prefix_max[i] = prefix_max[i - 1].max(cur[i - 1]);
        }
        for i in (1..s).rev() {
            if cur[i] <= prefix_max[i] && cur[i] + 1 < k {
                let mut a = cur.clone();
                a[i] += 1;
                a[i + 1..].iter_mut().for_each(|v| *v = 0);
                next = Some(a);
                break;
            }
        }
        state = next;
        if cur.iter().max().map_or(0, |m| m + 1) == k {
            return Some(cur);
        }
    })
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Accepted partition, centers in stage order.
    pub partition: OrderedPartition,
    pub mode: SearchMode,
    /// 0-based round that produced the partition.
    pub round: usize,
    pub rounds: Vec<RoundDiagnostics>,
    pub records: Vec<StageRecord>,
}

fn centers_from_labels(sample: &[u32], labels: &[usize], k: usize) -> Option<Vec<CenterRef>> {
    let mut parts = vec![Vec::new(); k];
    for (&v, &l) in sample.iter().zip(labels) {
        parts[l].push(v);
    }
    parts.into_iter().map(|p| CenterRef::new(p).ok()).collect()
}

/// Searches for k centers whose induced partition passes the conductance test.
///
/// `truth` holds the 0-based ground-truth cluster of every vertex and is required in
/// warmstart mode.
pub fn find_centers(
    outer: &DotEngine<'_>,
    inner: &DotEngine<'_>,
    params: &ClusterParams,
    cfg: &SearchConfig,
    truth: Option<&[usize]>,
    seed: &Seed,
) -> Result<SearchOutcome> {
    params.validate()?;
    let k = params.k;
    let n = outer.n();
    let rounds = cfg.rounds()?;
    let sample_size = match cfg.mode {
        SearchMode::Exhaustive => cfg.exhaustive_sample(k)?,
        SearchMode::Warmstart => {
            let t = truth.ok_or_else(|| Error::usage("warmstart needs ground-truth labels"))?;
            if t.len() != n || t.iter().any(|&l| l >= k) {
                return Err(Error::usage("ground-truth labels must cover every vertex with values below k"));
            }
            cfg.warm_per_cluster.max(1) * k
        }
    };
    if sample_size > n {
        return Err(Error::usage(format!("sample size {sample_size} exceeds n={n}")));
    }
    let mut diags = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let round_seed = seed.derive(round as u64);
        let sample = sample_vertices(&round_seed, Purpose::SampleS, sample_size, n, false)?;
        let candidates: Box<dyn Iterator<Item = Vec<usize>>> = match cfg.mode {
            SearchMode::Exhaustive => Box::new(restricted_growth_partitions(sample_size, k)),
            SearchMode::Warmstart => {
                let t = truth.unwrap();
                let base: Vec<usize> = sample.iter().map(|&v| t[v as usize]).collect();
                let mut list = vec![base.clone()];
                for j in 0..cfg.perturbations.min(sample_size) {
                    let mut p = base.clone();
                    p[j] = (p[j] + 1) % k;
                    list.push(p);
                }
                Box::new(list.into_iter())
            }
        };
        let mut d = RoundDiagnostics { round, sample_size, partitions_tried: 0, invalid_candidates: 0 };
        for labels in candidates {
            let Some(centers) = centers_from_labels(&sample, &labels, k) else {
                continue;
            };
            d.partitions_tried += 1;
            let attempt = compute_ordered_partition(outer, inner, &centers, params, &round_seed.derive(1 << 40))?;
            if attempt.invalid.is_some() {
                d.invalid_candidates += 1;
            }
            if let Some(p) = attempt.partition {
                diags.push(d);
                return Ok(SearchOutcome {
                    partition: p.canonical(),
                    mode: cfg.mode,
                    round,
                    rounds: diags,
                    records: attempt.records,
                });
            }
        }
        diags.push(d);
    }
    Err(Error::SearchFailure { rounds: diags })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stirling2(n: usize, k: usize) -> usize {
        if n == 0 && k == 0 {
            return 1;
        }
        if n == 0 || k == 0 {
            return 0;
        }
        k * stirling2(n - 1, k) + stirling2(n - 1, k - 1)
    }

    #[test]
    fn enumeration_counts_and_order() {
        for s in 1..=8 {
            for k in 1..=4 {
                let all: Vec<_> = restricted_growth_partitions(s, k).collect();
                assert_eq!(all.len(), stirling2(s, k), "s={s} k={k}");
                assert!(all.windows(2).all(|w| w[0] < w[1]));
                for a in &all {
                    assert_eq!(a[0], 0);
                    let mut m = 0;
                    for &v in &a[1..] {
                        assert!(v <= m + 1);
                        m = m.max(v);
                    }
                    assert_eq!(m + 1, k);
                }
            }
        }
        let three: Vec<_> = restricted_growth_partitions(3, 2).collect();
        assert_eq!(three, vec![vec![0, 0, 1], vec![0, 1, 0], vec![0, 1, 1]]);
    }

    #[test]
    fn budget_cap() {
        let cfg = SearchConfig::default();
        assert_eq!(cfg.sample_cap(2), 17);
        assert_eq!(cfg.sample_cap(3), 11);
        assert_eq!(cfg.exhaustive_sample(3).unwrap(), 8);
        let big = SearchConfig { sample_size: Some(12), ..cfg.clone() };
        assert!(matches!(big.exhaustive_sample(3), Err(Error::Capability(_))));
        assert_eq!(SearchConfig { eta: 0.01, ..cfg }.rounds().unwrap(), 6);
    }
}
