use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use spectral_lca::cluster::{
    evaluate_clustering, find_centers, read_partition_file, write_partition_file, ClusterOracle, ClusterParams, SearchMode,
};
use spectral_lca::exact;
use spectral_lca::graph::{generate_clusterable, read_graph_file, write_graph_file, GraphFile};
use spectral_lca::harness::{self, cmd_bench_scaling, hex, run_full_pipeline, seeds, RunConfig};
use spectral_lca::oracle::{initialize_oracle, read_oracle_file, write_oracle_file, DotEngine, OracleData};
use spectral_lca::rng::{sample_vertices, Purpose};
use spectral_lca::walks::{exact_walk_distribution, run_random_walks};
use spectral_lca::{Error, Result, Seed};

/// Sublinear spectral clustering oracle.
#[derive(Parser)]
#[command(name = "spectral-lca", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML or JSON). Flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed as hex.
    #[arg(long)]
    seed: Option<Seed>,
    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, env = "SPECTRAL_LCA_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        Ok(c)
    }

    fn output(&self, explicit: &Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
        if let Some(p) = explicit {
            return Ok(p.clone());
        }
        std::fs::create_dir_all(&self.out_dir)?;
        Ok(self.out_dir.join(default_name))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a clusterable instance.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: Option<usize>,
        /// Comma-separated cluster sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        pcross: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Total-variation distance of sampled walk distributions from the exact ones.
    WalkStats {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 10_000)]
        walks: u32,
        #[arg(long, default_value_t = 20)]
        starts: usize,
    },
    /// Bottom k+1 normalized Laplacian eigenvalues.
    Spectrum {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Build and save the dot-product oracle.
    InitOracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        c_r: Option<f64>,
        #[arg(long)]
        s: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Approximate ⟨f_x, f_y⟩.
    Dot {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long)]
        x: usize,
        #[arg(long)]
        y: usize,
    },
    /// Search for accepted cluster centers.
    FindCenters {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        mode: Option<SearchMode>,
        #[arg(long)]
        sample_size: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster labels of vertices.
    Query {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<usize>,
    },
    /// Sweep all vertices and compare with the graph's ground truth.
    Eval {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probe counts of initialization and queries across n.
    BenchScaling {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        queries: usize,
    },
    /// gen, init, find-centers, sweep and evaluation in one run.
    FullPipeline {
        #[command(flatten)]
        common: Common,
    },
}

/// Writes to stdout, ignoring a closed pipe.
fn print_text(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_json(v: &impl serde::Serialize) {
    print_text(&serde_json::to_string_pretty(v).expect("serializable"));
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn load_oracle(graph: &Path, oracle: &Path) -> Result<(GraphFile, OracleData)> {
    let gf = read_graph_file(graph)?;
    let data = read_oracle_file(oracle)?;
    data.check_graph(&gf.graph)?;
    Ok((gf, data))
}

/// Cluster constants, taking measured values from the graph file when it has them.
fn cluster_params(cfg: &RunConfig, gf: &GraphFile, k: usize) -> ClusterParams {
    let mut p = ClusterParams { k, ..cfg.cluster.clone() };
    if cfg.use_instance_metadata {
        let num = |key| gf.comment_value(key).and_then(|v| v.parse::<f64>().ok());
        if let Some(e) = num("eps_hat") {
            p.eps_hat = e;
        }
        if let Some(f) = num("phi_hat") {
            p.phi_hat = f;
        }
        if let Some(m) = num("min_cluster_size") {
            p.size_floor = Some(m / 2.0);
        }
    }
    p
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Gen { common, k, sizes, d, pcross, out } => {
            let mut cfg = common.config()?;
            if let Some(s) = sizes {
                cfg.generator.k = k.unwrap_or(s.len());
                cfg.generator.sizes = s;
            } else if let Some(k) = k {
                let n: usize = cfg.generator.sizes.iter().sum();
                cfg.generator.k = k;
                cfg.generator.sizes = harness::equal_sizes(n, k);
            }
            if let Some(d) = d {
                cfg.generator.d = d;
            }
            if let Some(p) = pcross {
                cfg.generator.p_cross = p;
            }
            let inst = generate_clusterable(&cfg.generator, cfg.seed.derive(seeds::GENERATE))?;
            let md = &inst.metadata;
            let mut comments = vec![
                format!("seed {}", cfg.seed),
                format!("config_hash {}", cfg.hash()),
                format!("eps_hat {}", md.eps_hat()),
                format!("min_cluster_size {}", inst.min_cluster_size()),
                format!("retries {}", md.retries),
            ];
            if let (Some(lk), Some(lk1)) = (md.lambda_k, md.lambda_k1) {
                comments.push(format!("lambda_k {lk}"));
                comments.push(format!("lambda_k1 {lk1}"));
                comments.push(format!("phi_hat {}", md.phi_hat().unwrap()));
            }
            let ranges = spectral_lca::graph::contiguous_ranges(&inst.clusters).expect("generator emits contiguous clusters");
            let path = common.output(&out, "graph.txt")?;
            write_graph_file(&path, &GraphFile { graph: inst.graph.clone(), ranges, comments })?;
            print_json(&json!({
                "graph": path,
                "n": inst.graph.n(),
                "seed": cfg.seed,
                "config_hash": cfg.hash(),
                "metadata": md,
            }));
        }
        Cmd::WalkStats { common, graph, t, walks, starts } => {
            let cfg = common.config()?;
            let g = read_graph_file(&graph)?.graph;
            let xs = sample_vertices(&cfg.seed, Purpose::SampleS, starts, g.n(), false)?;
            let mut rows = Vec::new();
            for &x in &xs {
                let exact = exact_walk_distribution(&g, t, x as usize)?;
                let est = run_random_walks(&g, walks, t, x as usize, &cfg.seed, Purpose::WalkQuery, 0)?;
                rows.push(json!({ "start": x, "tv": est.total_variation(&exact) }));
            }
            let max = rows.iter().map(|r| r["tv"].as_f64().unwrap()).fold(0.0, f64::max);
            print_json(&json!({ "t": t, "walks": walks, "seed": cfg.seed, "max_tv": max, "starts": rows }));
        }
        Cmd::Spectrum { graph, k } => {
            let g = read_graph_file(&graph)?.graph;
            let vals = exact::bottom_eigenvalues(&g, k + 1)?;
            let (lk, lk1) = (vals[k - 1], vals.get(k).cloned());
            print_json(&json!({
                "eigenvalues": vals,
                "lambda_k": lk,
                "lambda_k1": lk1,
                "gap": lk1.map(|l| l - lk),
                "phi_hat": lk1.map(|l| (2.0 * l).max(0.0).sqrt()),
            }));
        }
        Cmd::InitOracle { common, graph, delta, xi, k, t, c_r, s, m, out } => {
            let mut cfg = common.config()?;
            let gf = read_graph_file(&graph)?;
            let o = &mut cfg.oracle;
            o.k = k.unwrap_or(if gf.ranges.is_empty() { cfg.generator.k } else { gf.ranges.len() });
            cfg.generator.k = o.k;
            o.delta = delta.unwrap_or(o.delta);
            o.xi = xi.unwrap_or(o.xi);
            o.c_r = c_r.unwrap_or(o.c_r);
            o.t = t.or(o.t);
            o.s = s.or(o.s);
            o.m = m.or(o.m);
            let params = cfg.oracle.params(gf.graph.n())?;
            let mut data = initialize_oracle(&gf.graph, &params, cfg.seed.derive(seeds::ORACLE), cfg.oracle.eig_floor)?;
            data.config_hash = cfg.hash_bytes();
            let path = common.output(&out, "oracle.bin")?;
            write_oracle_file(&path, &data)?;
            print_json(&json!({
                "oracle": path,
                "params": params,
                "eigen_report": data.eigen_report,
                "init_probes": gf.graph.probe_count(),
                "seed": cfg.seed,
                "config_hash": hex(&data.config_hash),
            }));
        }
        Cmd::Dot { graph, oracle, x, y } => {
            let (gf, data) = load_oracle(&graph, &oracle)?;
            let v = spectral_lca::oracle::spectral_dot_product(&gf.graph, x, y, &data)?;
            print_json(&json!({ "x": x, "y": y, "dot": v, "probes": gf.graph.probe_count() }));
        }
        Cmd::FindCenters { common, graph, oracle, eta, mode, sample_size, out } => {
            let mut cfg = common.config()?;
            let (gf, data) = load_oracle(&graph, &oracle)?;
            cfg.search.eta = eta.unwrap_or(cfg.search.eta);
            cfg.search.mode = mode.unwrap_or(cfg.search.mode);
            cfg.search.sample_size = sample_size.or(cfg.search.sample_size);
            let k = data.params.k;
            let params = cluster_params(&cfg, &gf, k);
            let engine = DotEngine::new(&gf.graph, &data);
            let truth: Option<Vec<usize>> = (cfg.search.mode == SearchMode::Warmstart).then(|| {
                let mut l = vec![0; gf.graph.n()];
                for (i, &(a, b)) in gf.ranges.iter().enumerate() {
                    l[a..b].iter_mut().for_each(|v| *v = i);
                }
                l
            });
            if truth.is_some() && gf.ranges.len() != k {
                return Err(Error::Usage("warmstart needs ground-truth ranges for k clusters in the graph file".into()));
            }
            let found = find_centers(&engine, &engine, &params, &cfg.search, truth.as_deref(), &cfg.seed.derive(seeds::SEARCH))?;
            let mut file = spectral_lca::cluster::PartitionFile::from_partition(&found.partition, found.mode, cfg.seed, cfg.hash())?;
            file.graph = Some(graph.display().to_string());
            file.oracle = Some(oracle.display().to_string());
            let path = common.output(&out, "partition.json")?;
            write_partition_file(&path, &file)?;
            print_json(&json!({
                "partition": path,
                "mode": found.mode,
                "warmstart": found.mode == SearchMode::Warmstart,
                "round": found.round,
                "rounds": found.rounds,
                "stage_sizes": found.partition.stages.iter().map(Vec::len).collect::<Vec<_>>(),
                "probes": gf.graph.probe_count(),
                "seed": cfg.seed,
            }));
        }
        Cmd::Query { graph, oracle, partition, x } => {
            let (gf, data) = load_oracle(&graph, &oracle)?;
            let pf = read_partition_file(&partition)?;
            let engine = DotEngine::new(&gf.graph, &data);
            let co = ClusterOracle::new(&engine, &engine, &pf.partition()?, pf.seed.derive(seeds::QUERY))?;
            let labels = x.iter().map(|&v| co.assign(v).map(|l| json!({ "x": v, "label": l }))).collect::<Result<Vec<_>>>()?;
            print_json(&json!({ "labels": labels, "probes": gf.graph.probe_count(), "seed": pf.seed }));
        }
        Cmd::Eval { graph, oracle, partition, out } => {
            let (gf, data) = load_oracle(&graph, &oracle)?;
            let pf = read_partition_file(&partition)?;
            let engine = DotEngine::new(&gf.graph, &data);
            let co = ClusterOracle::new(&engine, &engine, &pf.partition()?, pf.seed.derive(seeds::QUERY))?;
            let all: Vec<u32> = (0..gf.graph.n() as u32).collect();
            let labels = co.assign_many(&all)?;
            let report = evaluate_clustering(&labels, &gf.clusters(), Some(&gf.graph))?;
            let true_conductances = gf
                .clusters()
                .iter()
                .map(|c| spectral_lca::graph::outer_conductance(&gf.graph, c))
                .collect::<Result<Vec<_>>>()?;
            let v = json!({
                "ratios": report.ratios,
                "max_ratio": report.max_ratio,
                "matching": report.matching,
                "output_conductances": report.output_conductances,
                "true_conductances": true_conductances,
                "probes": gf.graph.probe_count(),
                "seed": pf.seed,
                "config_hash": pf.config_hash,
                "mode": pf.mode,
            });
            if let Some(p) = out {
                write_text(&p, &serde_json::to_string_pretty(&v).unwrap())?;
            }
            print_json(&v);
        }
        Cmd::BenchScaling { common, ns, queries } => {
            let cfg = common.config()?;
            let report = cmd_bench_scaling(&cfg, &ns, queries)?;
            std::fs::create_dir_all(&common.out_dir)?;
            write_text(&common.out_dir.join("scaling.json"), &serde_json::to_string_pretty(&report).unwrap())?;
            write_text(&common.out_dir.join("scaling.csv"), &report.to_csv())?;
            print_json(&report);
        }
        Cmd::FullPipeline { common } => {
            let cfg = common.config()?;
            let out = match run_full_pipeline(&cfg) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(ExitCode::from(1));
                }
            };
            std::fs::create_dir_all(&common.out_dir)?;
            write_text(&common.out_dir.join("metrics.json"), &out.report.to_json())?;
            write_partition_file(&common.out_dir.join("partition.json"), &out.partition)?;
            print_text(&out.report.to_json());
            if !out.report.thresholds_met {
                eprintln!("configured thresholds not met");
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Usage(_) | Error::Format(_) => 2,
                _ => 1,
            })
        }
    }
}
