//! Cluster-membership oracle built on projected threshold sets.
//!
//! A set of estimated centers is organized into stages. A vertex belongs to the first
//! stage at which exactly one still-active center's threshold set contains it. Candidate
//! center sets are accepted when every induced cluster has small sampled outer
//! conductance.

mod eval;
mod format;
mod search;

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RegularGraph;
use crate::oracle::{DotEngine, Role};
use crate::rng::{sample_vertices, Purpose, Seed};
use crate::subspace::{build_subspace, CenterRef, ProjectedCenter, SubspaceContext};

pub use eval::{evaluate_clustering, ClusteringReport};
pub use format::{read_partition_file, write_partition_file, PartitionFile};
pub use search::{find_centers, restricted_growth_partitions, SearchConfig, SearchMode, SearchOutcome};

/// x is in the threshold set of c when ⟨f_x, Πc⟩ ≥ θ‖Πc‖².
pub const MEMBERSHIP_THRESHOLD: f64 = 0.93;

/// Constants of the acceptance test and the conductance sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub k: usize,
    /// Outer-conductance proxy used in the acceptance threshold.
    pub eps_hat: f64,
    /// Inner-conductance proxy.
    pub phi_hat: f64,
    /// τ(i) = c_tau · eps_hat · i · ln(k+1) / phi_hat².
    pub c_tau: f64,
    /// Smallest cluster size ratio assumed when deriving the default size floor.
    pub max_size_ratio: f64,
    /// Candidates estimated below this many vertices get an infinite conductance.
    pub size_floor: Option<f64>,
    pub s1: Option<usize>,
    pub s2: Option<usize>,
    /// Cap on the derived s2, which diverges as eps_hat goes to zero.
    pub s2_cap: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            k: 3,
            eps_hat: 0.02,
            phi_hat: 0.6,
            c_tau: 8.0,
            max_size_ratio: 4.0,
            size_floor: None,
            s1: None,
            s2: None,
            s2_cap: 4000,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::usage("k must be positive"));
        }
        if !(self.phi_hat > 0.0) || !(self.eps_hat >= 0.0) || !(self.c_tau >= 0.0) {
            return Err(Error::usage("need phi_hat > 0, eps_hat >= 0 and c_tau >= 0"));
        }
        if !(self.max_size_ratio >= 1.0) {
            return Err(Error::usage("max_size_ratio must be at least 1"));
        }
        if self.s1 == Some(0) || self.s2 == Some(0) || self.s2_cap == 0 {
            return Err(Error::usage("sample sizes must be positive"));
        }
        Ok(())
    }

    /// Acceptance threshold at 1-based stage `stage`.
    pub fn tau(&self, stage: usize) -> f64 {
        self.c_tau * self.eps_hat * stage as f64 * ((self.k + 1) as f64).ln() / (self.phi_hat * self.phi_hat)
    }

    pub fn floor(&self, n: usize) -> f64 {
        self.size_floor.unwrap_or(n as f64 / (2.0 * self.k as f64 * self.max_size_ratio))
    }

    pub fn s1(&self) -> usize {
        let k = self.k as f64;
        self.s1.unwrap_or_else(|| (40.0 * k * k.ln().max(1.0)).ceil() as usize)
    }

    pub fn s2(&self) -> usize {
        self.s2.unwrap_or_else(|| {
            let k = self.k as f64;
            let raw = 40.0 * k * self.phi_hat * self.phi_hat / self.eps_hat;
            if raw.is_finite() { (raw.ceil() as usize).clamp(1, self.s2_cap) } else { self.s2_cap }
        })
    }

    /// Largest number of stages an accepted partition may use.
    pub fn max_stages(&self) -> usize {
        (self.k as f64).log2().ceil() as usize + 1
    }
}

/// Centers grouped into stages. Indices refer to `centers`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderedPartition {
    pub centers: Vec<CenterRef>,
    pub stages: Vec<Vec<usize>>,
}

impl OrderedPartition {
    pub fn new(centers: Vec<CenterRef>, stages: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; centers.len()];
        for &c in stages.iter().flatten() {
            if c >= centers.len() || std::mem::replace(&mut seen[c], true) {
                return Err(Error::usage("stages must be disjoint and index existing centers"));
            }
        }
        Ok(OrderedPartition { centers, stages })
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Every center is in some stage.
    pub fn is_final(&self) -> bool {
        self.stages.iter().map(Vec::len).sum::<usize>() == self.centers.len()
    }

    /// Reorders centers so that a center's index equals its position in stage order.
    pub fn canonical(&self) -> OrderedPartition {
        let order: Vec<usize> = self.stages.iter().flatten().cloned().collect();
        let mut next = 0;
        let stages = self
            .stages
            .iter()
            .map(|s| {
                let ids = (next..next + s.len()).collect();
                next += s.len();
                ids
            })
            .collect();
        let mut centers: Vec<CenterRef> = order.iter().map(|&i| self.centers[i].clone()).collect();
        for (i, c) in self.centers.iter().enumerate() {
            if !order.contains(&i) {
                centers.push(c.clone());
            }
        }
        OrderedPartition { centers, stages }
    }
}

/// Result of classifying one vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Claim {
    Stage { stage: usize, center: usize },
    Unassigned,
}

struct StageSets {
    ctx: Option<SubspaceContext>,
    contenders: Vec<(usize, ProjectedCenter)>,
    members: Vec<usize>,
}

/// Staged threshold-set classifier over a fixed list of centers.
///
/// Stage i removes the centers of all earlier stages by projection. A vertex is claimed
/// at stage i by a center of that stage when no other still-active center also holds it.
pub struct Classifier<'e> {
    outer: &'e DotEngine<'e>,
    inner: &'e DotEngine<'e>,
    stages: Vec<StageSets>,
    memo: Mutex<HashMap<u32, Claim>>,
}

impl<'e> Classifier<'e> {
    /// `stages` followed by an optional last stage `remaining` whose members all stay active.
    pub fn new(
        outer: &'e DotEngine<'e>,
        inner: &'e DotEngine<'e>,
        centers: &[CenterRef],
        stages: &[Vec<usize>],
        remaining: Option<&[usize]>,
    ) -> Result<Self> {
        let mut groups: Vec<&[usize]> = stages.iter().map(Vec::as_slice).collect();
        if let Some(r) = remaining {
            groups.push(r);
        }
        let mut built = Vec::with_capacity(groups.len());
        for (i, members) in groups.iter().enumerate() {
            let removed: Vec<CenterRef> = groups[..i].iter().flat_map(|g| g.iter()).map(|&c| centers[c].clone()).collect();
            let ctx = if removed.is_empty() {
                None
            } else {
                Some(build_subspace(inner, &removed).map_err(|e| match e {
                    Error::ContextFailure { .. } => Error::CandidateInvalid(e.to_string()),
                    other => other,
                })?)
            };
            let active: Vec<usize> = groups[i..].iter().flat_map(|g| g.iter()).cloned().collect();
            let contenders = active
                .par_iter()
                .map(|&c| ProjectedCenter::new(outer, inner, &centers[c], ctx.as_ref()).map(|p| (c, p)))
                .collect::<Result<Vec<_>>>()?;
            built.push(StageSets { ctx, contenders, members: members.to_vec() });
        }
        Ok(Classifier { outer, inner, stages: built, memo: Mutex::new(HashMap::new()) })
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    fn classify(&self, x: usize) -> Result<Claim> {
        for (i, st) in self.stages.iter().enumerate() {
            let mut holder = None;
            let mut holders = 0;
            for (c, p) in &st.contenders {
                if p.dot(self.outer, self.inner, x, st.ctx.as_ref())? >= MEMBERSHIP_THRESHOLD * p.norm2() {
                    holders += 1;
                    holder = Some(*c);
                }
            }
            if let (1, Some(c)) = (holders, holder) {
                if st.members.contains(&c) {
                    return Ok(Claim::Stage { stage: i, center: c });
                }
            }
        }
        Ok(Claim::Unassigned)
    }

    pub fn claim(&self, x: usize) -> Result<Claim> {
        if let Some(c) = self.memo.lock().unwrap().get(&(x as u32)) {
            return Ok(*c);
        }
        let c = self.classify(x)?;
        self.memo.lock().unwrap().insert(x as u32, c);
        Ok(c)
    }

    /// Claims for many vertices, computing walks in parallel.
    pub fn claim_many(&self, xs: &[u32]) -> Result<Vec<Claim>> {
        self.outer.prefetch(xs, Role::Primary)?;
        if !std::ptr::eq(self.outer, self.inner) {
            self.inner.prefetch(xs, Role::Primary)?;
        }
        xs.par_iter().map(|&x| self.claim(x as usize)).collect()
    }

    /// Whether x is claimed by `center` at the last stage.
    pub fn is_inside(&self, x: usize, center: usize) -> Result<bool> {
        Ok(self.claim(x)? == Claim::Stage { stage: self.stages.len() - 1, center })
    }
}

/// Membership of x in the cluster of `center` given the earlier `stages` and the
/// still-unprocessed centers `remaining` (which must contain `center`).
pub fn is_inside(
    outer: &DotEngine<'_>,
    inner: &DotEngine<'_>,
    x: usize,
    center: usize,
    centers: &[CenterRef],
    stages: &[Vec<usize>],
    remaining: &[usize],
) -> Result<bool> {
    if !remaining.contains(&center) {
        return Err(Error::usage("center must be among the remaining centers"));
    }
    Classifier::new(outer, inner, centers, stages, Some(remaining))?.is_inside(x, center)
}

/// Center index claiming x under a final partition, if any.
pub fn hyperplane_partitioning(
    outer: &DotEngine<'_>,
    inner: &DotEngine<'_>,
    x: usize,
    partition: &OrderedPartition,
) -> Result<Option<usize>> {
    if !partition.is_final() {
        return Err(Error::usage("partition is not final"));
    }
    match Classifier::new(outer, inner, &partition.centers, &partition.stages, None)?.claim(x)? {
        Claim::Stage { center, .. } => Ok(Some(center)),
        Claim::Unassigned => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductanceEstimate {
    /// e/a, or infinity when the size gate fails or no sampled vertex was inside.
    pub value: f64,
    pub size_estimate: f64,
    pub samples_used: (usize, usize),
    pub inside: usize,
    pub boundary: usize,
}

impl ConductanceEstimate {
    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }
}

/// Sampled outer conductance of the last-stage cluster of `center` in `classifier`.
pub fn outer_conductance_estimate(
    classifier: &Classifier<'_>,
    center: usize,
    s1: usize,
    s2: usize,
    floor: f64,
    seed: &Seed,
) -> Result<ConductanceEstimate> {
    let last = classifier.stage_count() - 1;
    let target = Claim::Stage { stage: last, center };
    sampled_outer_conductance(
        classifier.outer.graph(),
        |xs| Ok(classifier.claim_many(xs)?.into_iter().map(|c| c == target).collect()),
        s1,
        s2,
        floor,
        seed,
    )
}

/// Two-phase sampling estimate of the outer conductance of the set described by `inside`,
/// which answers membership for a batch of vertices.
///
/// Phase one estimates the set size from `s1` uniform vertices and gives up (infinity)
/// below `floor`. Phase two picks one random neighbor slot of every inside vertex among
/// `s2` uniform vertices and returns the fraction of those slots leaving the set.
pub fn sampled_outer_conductance(
    g: &RegularGraph,
    inside: impl Fn(&[u32]) -> Result<Vec<bool>>,
    s1: usize,
    s2: usize,
    floor: f64,
    seed: &Seed,
) -> Result<ConductanceEstimate> {
    if s1 == 0 || s2 == 0 {
        return Err(Error::usage("s1 and s2 must be positive"));
    }
    let n = g.n();
    let first = sample_vertices(&seed.derive(1), Purpose::ConductanceSampling, s1, n, true)?;
    let cnt = inside(&first)?.iter().filter(|&&b| b).count();
    let size_estimate = n as f64 * cnt as f64 / s1 as f64;
    let mut est = ConductanceEstimate { value: f64::INFINITY, size_estimate, samples_used: (s1, 0), inside: 0, boundary: 0 };
    if size_estimate < floor {
        return Ok(est);
    }

    let second = sample_vertices(&seed.derive(2), Purpose::ConductanceSampling, s2, n, true)?;
    let flags = inside(&second)?;
    let slots = seed.derive(3);
    let mut neighbors = Vec::new();
    for (i, (&x, &b)) in second.iter().zip(&flags).enumerate() {
        if b {
            let slot = slots.uniform_below(Purpose::ConductanceSampling, i as u64, 0, g.d() as u64) as usize;
            neighbors.push(g.neighbor(x as usize, slot)? as u32);
        }
    }
    let outside = inside(&neighbors)?.iter().filter(|&&b| !b).count();
    est.samples_used.1 = s2;
    est.inside = neighbors.len();
    est.boundary = outside;
    if !neighbors.is_empty() {
        est.value = outside as f64 / neighbors.len() as f64;
    }
    Ok(est)
}

/// Per-stage conductance estimates gathered while building an ordered partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub tau: f64,
    pub estimates: Vec<(usize, ConductanceEstimate)>,
}

#[derive(Debug, Clone)]
pub struct PartitionAttempt {
    pub partition: Option<OrderedPartition>,
    pub records: Vec<StageRecord>,
    /// Set when some center set made the projection singular.
    pub invalid: Option<String>,
}

impl PartitionAttempt {
    pub fn accepted(&self) -> bool {
        self.partition.is_some()
    }
}

/// Moves centers whose clusters look well separated into successive stages; accepts
/// when every center has been placed.
pub fn compute_ordered_partition(
    outer: &DotEngine<'_>,
    inner: &DotEngine<'_>,
    centers: &[CenterRef],
    params: &ClusterParams,
    seed: &Seed,
) -> Result<PartitionAttempt> {
    params.validate()?;
    if centers.len() != params.k {
        return Err(Error::usage(format!("expected {} centers, got {}", params.k, centers.len())));
    }
    let floor = params.floor(outer.n());
    let (s1, s2) = (params.s1(), params.s2());
    let mut stages: Vec<Vec<usize>> = Vec::new();
    let mut remaining: Vec<usize> = (0..centers.len()).collect();
    let mut records = Vec::new();
    for stage in 1..=params.max_stages() {
        if remaining.is_empty() {
            break;
        }
        let classifier = match Classifier::new(outer, inner, centers, &stages, Some(&remaining)) {
            Ok(c) => c,
            Err(Error::CandidateInvalid(msg)) => {
                return Ok(PartitionAttempt { partition: None, records, invalid: Some(msg) })
            }
            Err(e) => return Err(e),
        };
        let tau = params.tau(stage);
        let stage_seed = seed.derive(stage as u64);
        let mut estimates = Vec::with_capacity(remaining.len());
        for &c in &remaining {
            estimates.push((c, outer_conductance_estimate(&classifier, c, s1, s2, floor, &stage_seed)?));
        }
        let passed: Vec<usize> = estimates.iter().filter(|(_, e)| e.value <= tau).map(|(c, _)| *c).collect();
        records.push(StageRecord { stage, tau, estimates });
        if !passed.is_empty() {
            remaining.retain(|c| !passed.contains(c));
            stages.push(passed);
        }
    }
    let partition = if remaining.is_empty() {
        Some(OrderedPartition::new(centers.to_vec(), stages)?)
    } else {
        None
    };
    Ok(PartitionAttempt { partition, records, invalid: None })
}

/// Consistent query access to the partition induced by accepted centers.
pub struct ClusterOracle<'e> {
    classifier: Classifier<'e>,
    k: usize,
    seed: Seed,
}

impl<'e> ClusterOracle<'e> {
    pub fn new(outer: &'e DotEngine<'e>, inner: &'e DotEngine<'e>, partition: &OrderedPartition, seed: Seed) -> Result<Self> {
        if !partition.is_final() {
            return Err(Error::usage("partition is not final"));
        }
        let p = partition.canonical();
        let classifier = Classifier::new(outer, inner, &p.centers, &p.stages, None)?;
        Ok(ClusterOracle { classifier, k: p.k(), seed })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Label in 1..=k. Unclaimed vertices get a fixed pseudo-random label.
    pub fn assign(&self, x: usize) -> Result<u32> {
        Ok(match self.classifier.claim(x)? {
            Claim::Stage { center, .. } => center as u32 + 1,
            Claim::Unassigned => self.fallback(x),
        })
    }

    fn fallback(&self, x: usize) -> u32 {
        self.seed.uniform_below(Purpose::TieBreak, x as u64, 0, self.k as u64) as u32 + 1
    }

    /// Center claiming x in canonical numbering, before the fallback.
    pub fn claim(&self, x: usize) -> Result<Option<usize>> {
        Ok(match self.classifier.claim(x)? {
            Claim::Stage { center, .. } => Some(center),
            Claim::Unassigned => None,
        })
    }

    pub fn assign_many(&self, xs: &[u32]) -> Result<Vec<u32>> {
        let claims = self.classifier.claim_many(xs)?;
        Ok(xs
            .iter()
            .zip(claims)
            .map(|(&x, c)| match c {
                Claim::Stage { center, .. } => center as u32 + 1,
                Claim::Unassigned => self.fallback(x as usize),
            })
            .collect())
    }
}

/// Label of x under an accepted partition.
pub fn assign_query(
    outer: &DotEngine<'_>,
    inner: &DotEngine<'_>,
    x: usize,
    partition: &OrderedPartition,
    seed: Seed,
) -> Result<u32> {
    ClusterOracle::new(outer, inner, partition, seed)?.assign(x)
}
