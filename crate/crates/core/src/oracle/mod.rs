//! Spectral dot-product oracle: a sampled sketch of the walk matrix that answers
//! ⟨f_x, f_y⟩ queries from a sublinear number of walks.

mod format;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RegularGraph;
use crate::linalg::{self, KrylovOptions};
use crate::rng::{sample_vertices, Purpose, Seed};
use crate::walks::{estimate_collision_probabilities, estimate_transition_matrix, walk_endpoints, VertexRows};

pub use format::{read_oracle_file, write_oracle_file};

/// Sizes of the dense eigenproblem solved by full Jacobi rather than Krylov iteration.
const JACOBI_MAX_S: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub delta: f64,
    pub xi: f64,
    pub t: usize,
    pub r_init: u32,
    pub r_query: u32,
    pub s: usize,
    pub m: usize,
    pub k: usize,
}

impl OracleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(Error::usage(format!("delta must lie in (0, 1/2], got {}", self.delta)));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::usage(format!("xi must lie in (0, 1), got {}", self.xi)));
        }
        if self.r_init == 0 || self.r_query == 0 || self.s == 0 || self.k == 0 {
            return Err(Error::usage("walk counts, sample size and k must be positive"));
        }
        if self.m % 2 == 0 {
            return Err(Error::usage(format!("repetition count m must be odd, got {}", self.m)));
        }
        if self.s < self.k {
            return Err(Error::usage(format!("sample size s={} below k={}", self.s, self.k)));
        }
        Ok(())
    }
}

/// Recipe for deriving [`OracleParams`] from the graph size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub delta: f64,
    pub xi: f64,
    pub k: usize,
    /// Inner-conductance value used in the walk-length formula.
    pub phi: f64,
    /// t = ceil(walk_coeff · ln n / φ²).
    pub walk_coeff: f64,
    /// R_init = ceil(c_r · n^(1-δ) · k² / ξ²), R_query = ceil(c_r · n^δ · k² / ξ²).
    pub c_r: f64,
    /// s = c_s · k² · ceil(ln n).
    pub c_s: f64,
    pub t: Option<usize>,
    pub r_init: Option<u32>,
    pub r_query: Option<u32>,
    pub s: Option<usize>,
    pub m: Option<usize>,
    /// Smallest acceptable k-th eigenvalue of the scaled collision Gram matrix.
    pub eig_floor: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            delta: 0.5,
            xi: 0.5,
            k: 3,
            phi: 0.6,
            walk_coeff: 20.0,
            c_r: 1.0,
            c_s: 10.0,
            t: None,
            r_init: None,
            r_query: None,
            s: None,
            m: None,
            eig_floor: 1e-9,
        }
    }
}

impl OracleConfig {
    pub fn params(&self, n: usize) -> Result<OracleParams> {
        let ln = (n.max(2) as f64).ln();
        let k2 = (self.k * self.k) as f64;
        let xi2 = self.xi * self.xi;
        let walks = |exp: f64| -> u32 {
            (self.c_r * (n as f64).powf(exp) * k2 / xi2).ceil().clamp(1.0, u32::MAX as f64) as u32
        };
        if !(self.phi > 0.0) {
            return Err(Error::usage("phi must be positive"));
        }
        let p = OracleParams {
            delta: self.delta,
            xi: self.xi,
            t: self.t.unwrap_or_else(|| (self.walk_coeff * ln / (self.phi * self.phi)).ceil() as usize),
            r_init: self.r_init.unwrap_or_else(|| walks(1.0 - self.delta)),
            r_query: self.r_query.unwrap_or_else(|| walks(self.delta)),
            s: self.s.unwrap_or_else(|| (self.c_s * k2 * ln.ceil()).ceil() as usize),
            m: self.m.unwrap_or_else(|| 2 * (n.max(2) as f64).log2().ceil() as usize + 1),
            k: self.k,
        };
        p.validate()?;
        Ok(p)
    }
}

/// The preprocessed sketch.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleData {
    pub params: OracleParams,
    pub seed: Seed,
    pub n: usize,
    /// Sampled start vertices I_S.
    pub sample: Vec<u32>,
    /// Q̂_1..Q̂_m as vertex-major sparse counts.
    pub qhats: Vec<VertexRows>,
    /// s x s, symmetric PSD of rank ≤ k.
    pub psi: DMatrix<f64>,
    /// Top k+1 eigenvalues of (n/s)·𝒢, descending.
    pub eigen_report: Vec<f64>,
    pub graph_digest: [u8; 32],
    pub config_hash: [u8; 32],
}

impl OracleData {
    pub fn check_graph(&self, g: &RegularGraph) -> Result<()> {
        if g.n() != self.n || g.digest() != self.graph_digest {
            return Err(Error::usage("oracle was built for a different graph"));
        }
        Ok(())
    }
}

/// Top eigenpairs of a dense symmetric matrix; `want` clipped to its size.
fn top_dense(m: &DMatrix<f64>, want: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let s = m.nrows();
    let want = want.min(s);
    if s <= JACOBI_MAX_S {
        let e = linalg::symmetric_eig(m)?;
        let vecs = (0..want).map(|c| e.vectors.column(c).iter().cloned().collect()).collect();
        return Ok((e.values[..want].to_vec(), vecs));
    }
    let opts = KrylovOptions { max_restarts: 300, tol_strict: 1e-9, tol_loose: 1e-9, ..Default::default() };
    let top = linalg::top_eigenpairs(
        s,
        want,
        |x, y| {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = m.column(i).iter().zip(x).map(|(a, b)| a * b).sum();
            }
        },
        &opts,
    )?;
    if !top.converged {
        return Err(Error::Numerical(format!("Gram eigensolve did not converge: residuals {:?}", top.residuals)));
    }
    Ok((top.values, top.vectors))
}

/// Samples I_S, builds Q̂_1..Q̂_m and the collision Gram matrix, and sets
/// Ψ = (n/s)·W_k Σ_k^{-2} W_kᵀ from the top-k eigenpairs of (n/s)·𝒢.
pub fn initialize_oracle(g: &RegularGraph, params: &OracleParams, seed: Seed, eig_floor: f64) -> Result<OracleData> {
    params.validate()?;
    let n = g.n();
    let s = params.s;
    let sample = sample_vertices(&seed, Purpose::SampleIs, s, n, true)?;
    let mut qhats = Vec::with_capacity(params.m);
    for rep in 0..params.m as u32 {
        let ts = estimate_transition_matrix(g, &sample, params.r_init, params.t, &seed, Purpose::WalkInit, rep)?;
        qhats.push(VertexRows::from_sample(&ts, n));
    }
    let gram = estimate_collision_probabilities(g, &sample, params.r_init, params.t, params.m, &seed)?;
    let scale = n as f64 / s as f64;
    let scaled = gram * scale;
    let (values, vectors) = top_dense(&scaled, params.k + 1)?;
    let eigen_report = values.clone();
    let kth = values[params.k - 1];
    if !(kth > eig_floor) {
        return Err(Error::InitFailure { index: params.k, value: kth, floor: eig_floor, eigen_report });
    }
    let mut psi = DMatrix::zeros(s, s);
    for i in 0..params.k {
        let w = &vectors[i];
        let c = scale / (values[i] * values[i]);
        for a in 0..s {
            let ca = c * w[a];
            for b in a..s {
                psi[(a, b)] += ca * w[b];
            }
        }
    }
    for a in 0..s {
        for b in 0..a {
            psi[(a, b)] = psi[(b, a)];
        }
    }
    Ok(OracleData {
        params: *params,
        seed,
        n,
        sample,
        qhats,
        psi,
        eigen_report,
        graph_digest: g.digest(),
        config_hash: [0; 32],
    })
}

/// Which walk stream a query vector uses. The second factor of a self-product uses
/// the mirror stream so that ⟨f_x, f_x⟩ is estimated from independent walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Primary,
    Mirror,
}

impl Role {
    fn tag(self) -> Purpose {
        match self {
            Role::Primary => Purpose::WalkQuery,
            Role::Mirror => Purpose::WalkQueryMirror,
        }
    }
}

/// α_x: entrywise median over repetitions of Q̂_iᵀ m̂_x^i.
pub fn query_vector(g: &RegularGraph, data: &OracleData, x: usize, role: Role) -> Result<Vec<f64>> {
    query_vector_with(g, data, x, role, data.params.r_query)
}

/// [`query_vector`] with an explicit number of walks per repetition.
pub fn query_vector_with(
    g: &RegularGraph,
    data: &OracleData,
    x: usize,
    role: Role,
    r_query: u32,
) -> Result<Vec<f64>> {
    if r_query == 0 {
        return Err(Error::usage("query walk count must be positive"));
    }
    if x >= g.n() {
        return Err(Error::usage(format!("vertex {x} out of range")));
    }
    let p = &data.params;
    let s = p.s;
    let mut per_rep: Vec<Vec<u64>> = Vec::with_capacity(p.m);
    let mut moves = 0;
    for (i, q) in data.qhats.iter().enumerate() {
        let (dist, mv) = walk_endpoints(g, r_query, 0, p.t, x, &data.seed, role.tag(), i as u32);
        moves += mv;
        let mut acc = vec![0u64; s];
        q.accumulate(&dist, &mut acc);
        per_rep.push(acc);
    }
    g.add_probes(moves);
    let scale = 1.0 / (r_query as f64 * p.r_init as f64);
    let mut vals = vec![0u64; p.m];
    Ok((0..s)
        .map(|j| {
            for (i, r) in per_rep.iter().enumerate() {
                vals[i] = r[j];
            }
            let mid = p.m / 2;
            *vals.select_nth_unstable(mid).1 as f64 * scale
        })
        .collect())
}

fn quad(psi: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let pb = psi_times(psi, b);
    a.iter().zip(&pb).map(|(x, y)| x * y).sum()
}

fn psi_times(psi: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    // Ψ is symmetric, so column i doubles as row i.
    (0..psi.ncols()).map(|i| psi.column(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// ⟨f_x, f_y⟩_apx = α_xᵀ Ψ α_y, recomputing all walks.
pub fn spectral_dot_product(g: &RegularGraph, x: usize, y: usize, data: &OracleData) -> Result<f64> {
    let ax = query_vector(g, data, x, Role::Primary)?;
    let ay = query_vector(g, data, y, if x == y { Role::Mirror } else { Role::Primary })?;
    Ok(quad(&data.psi, &ax, &ay))
}

/// Query vector with its image under Ψ.
#[derive(Debug)]
pub struct QueryEntry {
    pub alpha: Vec<f64>,
    pub psi_alpha: Vec<f64>,
}

/// Memoizing front end for the oracle. Values are pure functions of (graph, seed,
/// vertex, role), so caching does not change any result.
pub struct DotEngine<'a> {
    g: &'a RegularGraph,
    data: &'a OracleData,
    r_query: u32,
    cache: Mutex<HashMap<(u32, Role), Arc<Slot>>>,
}

/// Filled exactly once, so concurrent requests for one vertex run its walks once and
/// probe counts do not depend on scheduling.
type Slot = OnceLock<std::result::Result<Arc<QueryEntry>, String>>;

impl<'a> DotEngine<'a> {
    pub fn new(g: &'a RegularGraph, data: &'a OracleData) -> Self {
        Self::with_query_walks(g, data, data.params.r_query)
    }

    /// Engine running `r_query` walks per repetition instead of the sketch's setting.
    pub fn with_query_walks(g: &'a RegularGraph, data: &'a OracleData, r_query: u32) -> Self {
        DotEngine { g, data, r_query: r_query.max(1), cache: Mutex::new(HashMap::new()) }
    }

    pub fn query_walks(&self) -> u32 {
        self.r_query
    }

    pub fn graph(&self) -> &'a RegularGraph {
        self.g
    }

    pub fn data(&self) -> &'a OracleData {
        self.data
    }

    pub fn n(&self) -> usize {
        self.g.n()
    }

    fn compute(&self, x: usize, role: Role) -> Result<Arc<QueryEntry>> {
        let alpha = query_vector_with(self.g, self.data, x, role, self.r_query)?;
        let psi_alpha = psi_times(&self.data.psi, &alpha);
        Ok(Arc::new(QueryEntry { alpha, psi_alpha }))
    }

    fn slot(&self, x: usize, role: Role) -> Arc<Slot> {
        self.cache.lock().unwrap().entry((x as u32, role)).or_default().clone()
    }

    pub fn entry(&self, x: usize, role: Role) -> Result<Arc<QueryEntry>> {
        if x >= self.n() {
            return Err(Error::usage(format!("vertex {x} out of range")));
        }
        self.slot(x, role)
            .get_or_init(|| self.compute(x, role).map_err(|e| e.to_string()))
            .clone()
            .map_err(Error::Numerical)
    }

    /// Computes missing entries in parallel.
    pub fn prefetch(&self, xs: &[u32], role: Role) -> Result<()> {
        let mut todo: Vec<u32> = {
            let cache = self.cache.lock().unwrap();
            xs.iter()
                .filter(|&&x| cache.get(&(x, role)).map_or(true, |c| c.get().is_none()))
                .cloned()
                .collect()
        };
        todo.sort_unstable();
        todo.dedup();
        todo.par_iter().try_for_each(|&x| self.entry(x as usize, role).map(|_| ()))
    }

    /// Same value as [`spectral_dot_product`].
    pub fn dot(&self, x: usize, y: usize) -> Result<f64> {
        let ax = self.entry(x, Role::Primary)?;
        let ay = self.entry(y, if x == y { Role::Mirror } else { Role::Primary })?;
        Ok(ax.alpha.iter().zip(&ay.psi_alpha).map(|(a, b)| a * b).sum())
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}
