//! Run configuration, metrics and the end-to-end pipeline behind the CLI.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{evaluate_clustering, find_centers, ClusterOracle, ClusterParams, ClusteringReport, PartitionFile, SearchConfig, SearchMode};
use crate::error::{Error, Result};
use crate::exact::{self, SpectralEmbedding};
use crate::graph::{generate_clusterable, ClusterableInstance, GeneratorConfig, RegularGraph};
use crate::oracle::{initialize_oracle, query_vector, DotEngine, OracleConfig, OracleData, OracleParams, Role};
use crate::rng::{sample_vertices, Purpose, Seed};

/// Everything a run depends on. `k` is taken from the generator section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: Seed,
    pub generator: GeneratorConfig,
    pub oracle: OracleConfig,
    pub cluster: ClusterParams,
    pub search: SearchConfig,
    /// Replace eps_hat, phi_hat and the size floor by values measured on the instance.
    pub use_instance_metadata: bool,
    /// Query walks for the projection terms, as a multiple of the oracle's.
    pub inner_walk_scale: f64,
    /// Random pairs compared against the exact embedding; 0 disables.
    pub dot_pairs: usize,
    /// Fresh query vectors used to measure per-query probes.
    pub probe_queries: usize,
    pub thresholds: Thresholds,
    /// Not part of the config hash.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub max_ratio: Option<f64>,
    /// Fraction of dot pairs within ξ/n.
    pub dot_within: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: Seed::new(1),
            generator: GeneratorConfig::default(),
            oracle: OracleConfig { t: Some(20), ..Default::default() },
            cluster: ClusterParams::default(),
            search: SearchConfig::default(),
            use_instance_metadata: true,
            inner_walk_scale: 1.0,
            dot_pairs: 500,
            probe_queries: 20,
            thresholds: Thresholds::default(),
            output_dir: None,
        }
    }
}

impl RunConfig {
    /// Parses TOML, or JSON when the text starts with '{'.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::format(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| Error::format(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format(e.to_string()))
    }

    /// k consistent across all sections.
    pub fn normalized(&self) -> RunConfig {
        let mut c = self.clone();
        c.oracle.k = c.generator.k;
        c.cluster.k = c.generator.k;
        c.output_dir = None;
        c
    }

    /// SHA-256 of the canonical JSON form, output paths excluded.
    pub fn hash_bytes(&self) -> [u8; 32] {
        let json = serde_json::to_vec(&self.normalized()).expect("config serializes");
        Sha256::digest(&json).into()
    }

    pub fn hash(&self) -> String {
        hex(&self.hash_bytes())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Labels of the sub-seeds used by each pipeline stage.
pub mod seeds {
    pub const GENERATE: u64 = 1;
    pub const ORACLE: u64 = 2;
    pub const SEARCH: u64 = 3;
    pub const QUERY: u64 = 4;
    pub const EVAL: u64 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Generate,
    Spectrum,
    InitOracle,
    FindCenters,
    Sweep,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).unwrap();
        f.write_str(s.as_str().unwrap())
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub sizes: Vec<usize>,
    pub eps_hat: f64,
    pub phi_hat: Option<f64>,
    pub lambda_k: Option<f64>,
    pub lambda_k1: Option<f64>,
    pub true_conductances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotErrorSummary {
    pub pairs: usize,
    /// Quantiles of n·|apx − exact| at 0.5, 0.9, 0.99 and 1.
    pub scaled_quantiles: [f64; 4],
    /// Fraction of pairs with error at most ξ/n.
    pub within_xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbeCounts {
    pub init: u64,
    pub search: u64,
    pub sweep: u64,
    pub per_query_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WallClock {
    pub init_ms: u64,
    pub search_ms: u64,
    pub sweep_ms: u64,
    pub total_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config_hash: String,
    pub seed: Seed,
    pub n: usize,
    pub k: usize,
    pub mode: SearchMode,
    pub params: OracleParams,
    pub cluster: ClusterParams,
    pub instance: InstanceSummary,
    pub eigen_report: Vec<f64>,
    pub accepted_round: usize,
    pub stage_sizes: Vec<usize>,
    pub clustering: ClusteringReport,
    pub unassigned: usize,
    pub dot_error: Option<DotErrorSummary>,
    pub probes: ProbeCounts,
    pub thresholds_met: bool,
    pub wall_clock: WallClock,
}

impl MetricsReport {
    /// Pretty JSON with the wall-clock section zeroed.
    pub fn deterministic_json(&self) -> String {
        let mut r = self.clone();
        r.wall_clock = WallClock::default();
        serde_json::to_string_pretty(&r).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub struct PipelineOutput {
    pub report: MetricsReport,
    pub partition: PartitionFile,
    pub labels: Vec<u32>,
    pub instance: ClusterableInstance,
}

fn elapsed_ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

/// ClusterParams with instance measurements substituted when configured.
pub fn cluster_params_for(cfg: &RunConfig, inst: &ClusterableInstance, emb: Option<&SpectralEmbedding>) -> ClusterParams {
    let mut p = cfg.normalized().cluster;
    if cfg.use_instance_metadata {
        p.eps_hat = inst.metadata.eps_hat();
        if let Some(phi) = emb.and_then(SpectralEmbedding::phi_hat).or_else(|| inst.metadata.phi_hat()) {
            p.phi_hat = phi;
        }
        p.size_floor = Some(inst.min_cluster_size() as f64 / 2.0);
    }
    p
}

/// Mean probes of computing fresh primary query vectors for `count` sampled vertices.
pub fn measure_query_probes(g: &RegularGraph, data: &OracleData, count: usize, seed: &Seed) -> Result<f64> {
    if count == 0 {
        return Ok(0.0);
    }
    let xs = sample_vertices(seed, Purpose::SampleS, count, g.n(), true)?;
    let before = g.probe_count();
    for &x in &xs {
        query_vector(g, data, x as usize, Role::Primary)?;
    }
    Ok((g.probe_count() - before) as f64 / count as f64)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Error of the oracle against the exact embedding on random vertex pairs.
pub fn dot_errors(engine: &DotEngine<'_>, emb: &SpectralEmbedding, pairs: usize, seed: &Seed) -> Result<DotErrorSummary> {
    let n = engine.n();
    let xs = sample_vertices(seed, Purpose::SampleS, pairs, n, true)?;
    let ys = sample_vertices(&seed.derive(1), Purpose::SampleS, pairs, n, true)?;
    engine.prefetch(&xs, Role::Primary)?;
    engine.prefetch(&ys, Role::Primary)?;
    let same: Vec<u32> = xs.iter().zip(&ys).filter(|(a, b)| a == b).map(|(a, _)| *a).collect();
    engine.prefetch(&same, Role::Mirror)?;
    let mut errs = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let apx = engine.dot(x as usize, y as usize)?;
            Ok((apx - exact::exact_dot(emb, x as usize, y as usize)).abs() * n as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    errs.sort_by(f64::total_cmp);
    let xi = engine.data().params.xi;
    Ok(DotErrorSummary {
        pairs,
        scaled_quantiles: [quantile(&errs, 0.5), quantile(&errs, 0.9), quantile(&errs, 0.99), quantile(&errs, 1.0)],
        within_xi: errs.iter().filter(|&&e| e <= xi).count() as f64 / pairs as f64,
    })
}

/// generate → spectrum → init-oracle → find-centers → full sweep → evaluation.
pub fn run_full_pipeline(cfg: &RunConfig) -> std::result::Result<PipelineOutput, StageError> {
    let start = Instant::now();
    let ncfg = cfg.normalized();
    let hash = cfg.hash();
    let k = ncfg.generator.k;

    let inst = generate_clusterable(&ncfg.generator, cfg.seed.derive(seeds::GENERATE)).at(Stage::Generate)?;
    let g = &inst.graph;
    let n = g.n();
    let emb = if n <= exact::DENSE_LIMIT && (ncfg.dot_pairs > 0 || cfg.use_instance_metadata) {
        Some(exact::bottom_k_embedding(g, k).at(Stage::Spectrum)?)
    } else {
        None
    };
    let cluster = cluster_params_for(cfg, &inst, emb.as_ref());

    let t_init = Instant::now();
    let params = ncfg.oracle.params(n).at(Stage::InitOracle)?;
    let p0 = g.probe_count();
    let mut data = initialize_oracle(g, &params, cfg.seed.derive(seeds::ORACLE), ncfg.oracle.eig_floor).at(Stage::InitOracle)?;
    data.config_hash = cfg.hash_bytes();
    let init_probes = g.probe_count() - p0;
    let init_ms = elapsed_ms(t_init);

    let outer = DotEngine::new(g, &data);
    let inner_walks = (params.r_query as f64 * cfg.inner_walk_scale).ceil().max(1.0) as u32;
    let inner_own = (inner_walks != params.r_query).then(|| DotEngine::with_query_walks(g, &data, inner_walks));
    let inner = inner_own.as_ref().unwrap_or(&outer);

    let t_search = Instant::now();
    let p1 = g.probe_count();
    let truth_labels = inst.labels();
    let truth = (ncfg.search.mode == SearchMode::Warmstart).then_some(truth_labels.as_slice());
    let found = find_centers(&outer, inner, &cluster, &ncfg.search, truth, &cfg.seed.derive(seeds::SEARCH)).at(Stage::FindCenters)?;
    let search_probes = g.probe_count() - p1;
    let search_ms = elapsed_ms(t_search);

    let t_sweep = Instant::now();
    let p2 = g.probe_count();
    let oracle = ClusterOracle::new(&outer, inner, &found.partition, cfg.seed.derive(seeds::QUERY)).at(Stage::Sweep)?;
    let all: Vec<u32> = (0..n as u32).collect();
    let labels = oracle.assign_many(&all).at(Stage::Sweep)?;
    let mut unassigned = 0;
    for x in 0..n {
        if oracle.claim(x).at(Stage::Sweep)?.is_none() {
            unassigned += 1;
        }
    }
    let sweep_probes = g.probe_count() - p2;
    let sweep_ms = elapsed_ms(t_sweep);

    let clustering = evaluate_clustering(&labels, &inst.clusters, Some(g)).at(Stage::Evaluate)?;
    let eval_seed = cfg.seed.derive(seeds::EVAL);
    let dot_error = match (&emb, ncfg.dot_pairs) {
        (Some(e), p) if p > 0 => Some(dot_errors(&outer, e, p, &eval_seed).at(Stage::Evaluate)?),
        _ => None,
    };
    let per_query_mean = measure_query_probes(g, &data, ncfg.probe_queries, &eval_seed.derive(2)).at(Stage::Evaluate)?;

    let thresholds_met = cfg.thresholds.max_ratio.map_or(true, |t| clustering.max_ratio <= t)
        && match (cfg.thresholds.dot_within, &dot_error) {
            (Some(t), Some(d)) => d.within_xi >= t,
            (Some(_), None) => false,
            (None, _) => true,
        };

    let partition = PartitionFile::from_partition(&found.partition, found.mode, cfg.seed, hash.clone()).at(Stage::FindCenters)?;
    let report = MetricsReport {
        config_hash: hash,
        seed: cfg.seed,
        n,
        k,
        mode: found.mode,
        params,
        cluster,
        instance: InstanceSummary {
            sizes: inst.clusters.iter().map(Vec::len).collect(),
            eps_hat: inst.metadata.eps_hat(),
            phi_hat: emb.as_ref().and_then(SpectralEmbedding::phi_hat).or_else(|| inst.metadata.phi_hat()),
            lambda_k: emb.as_ref().map(SpectralEmbedding::lambda_k).or(inst.metadata.lambda_k),
            lambda_k1: emb.as_ref().and_then(SpectralEmbedding::lambda_k1).or(inst.metadata.lambda_k1),
            true_conductances: inst.metadata.outer_conductance.clone(),
        },
        eigen_report: data.eigen_report.clone(),
        accepted_round: found.round,
        stage_sizes: found.partition.stages.iter().map(Vec::len).collect(),
        clustering,
        unassigned,
        dot_error,
        probes: ProbeCounts { init: init_probes, search: search_probes, sweep: sweep_probes, per_query_mean },
        thresholds_met,
        wall_clock: WallClock { init_ms, search_ms, sweep_ms, total_ms: elapsed_ms(start) },
    };
    drop(oracle);
    drop(inner_own);
    drop(outer);
    Ok(PipelineOutput { report, partition, labels, instance: inst })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub params: OracleParams,
    pub init_probes: u64,
    pub query_probe_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub config_hash: String,
    pub rows: Vec<ScalingRow>,
    /// (n_small, n_large, query probe ratio, init probe ratio) for consecutive rows.
    pub ratios: Vec<(usize, usize, f64, f64)>,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,delta,t,r_init,r_query,s,m,init_probes,query_probe_mean\n");
        for r in &self.rows {
            let p = &r.params;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.n, p.delta, p.t, p.r_init, p.r_query, p.s, p.m, r.init_probes, r.query_probe_mean
            ));
        }
        out
    }
}

/// Equal cluster sizes summing to n.
pub fn equal_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// Probe counts of initialization and of single queries across graph sizes.
pub fn cmd_bench_scaling(cfg: &RunConfig, ns: &[usize], queries: usize) -> Result<ScalingReport> {
    if ns.is_empty() {
        return Err(Error::usage("need at least one n"));
    }
    let ncfg = cfg.normalized();
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let gen = GeneratorConfig { sizes: equal_sizes(n, ncfg.generator.k), ..ncfg.generator.clone() };
        let inst = generate_clusterable(&gen, cfg.seed.derive(seeds::GENERATE)).map_err(|e| match e {
            Error::Generation(m) => Error::Generation(format!("n={n}: {m}")),
            other => other,
        })?;
        let g = &inst.graph;
        let params = ncfg.oracle.params(n)?;
        let before = g.probe_count();
        let data = initialize_oracle(g, &params, cfg.seed.derive(seeds::ORACLE), ncfg.oracle.eig_floor)?;
        let init_probes = g.probe_count() - before;
        let query_probe_mean = measure_query_probes(g, &data, queries, &cfg.seed.derive(seeds::EVAL))?;
        rows.push(ScalingRow { n, params, init_probes, query_probe_mean });
    }
    let ratios = rows
        .windows(2)
        .map(|w| {
            (w[0].n, w[1].n, w[1].query_probe_mean / w[0].query_probe_mean, w[1].init_probes as f64 / w[0].init_probes as f64)
        })
        .collect();
    Ok(ScalingReport { config_hash: cfg.hash(), rows, ratios })
}
