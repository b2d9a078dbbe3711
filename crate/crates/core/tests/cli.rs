use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spectral-lca"))
        .args(args)
        .env("SPECTRAL_LCA_OUT_DIR", dir)
        .output()
        .expect("binary runs")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = cli(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn gen_init_search_query_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();

    let gen = ok_json(dir, &["gen", "--seed", "5", "--sizes", "150,150", "--d", "12", "--pcross", "0.1"]);
    assert_eq!(gen["n"], 300);
    let text = std::fs::read_to_string(p("graph.txt")).unwrap();
    assert!(text.starts_with("# seed"));
    assert!(text.contains("# eps_hat"));

    let spectrum = ok_json(dir, &["spectrum", "--graph", &p("graph.txt"), "--k", "2"]);
    assert!(spectrum["gap"].as_f64().unwrap() > 0.1);

    let init = ok_json(
        dir,
        &["init-oracle", "--seed", "5", "--graph", &p("graph.txt"), "--t", "10", "--s", "40", "--m", "5"],
    );
    assert_eq!(init["params"]["k"], 2);
    let graph = p("graph.txt");
    let oracle = p("oracle.bin");

    let dot = ok_json(dir, &["dot", "--graph", &graph, "--oracle", &oracle, "--x", "0", "--y", "1"]);
    assert!(dot["dot"].as_f64().unwrap().is_finite());

    let found = ok_json(
        dir,
        &["find-centers", "--seed", "5", "--graph", &graph, "--oracle", &oracle, "--mode", "warmstart"],
    );
    assert_eq!(found["warmstart"], true);
    let partition = p("partition.json");

    let q = ok_json(dir, &["query", "--graph", &graph, "--oracle", &oracle, "--partition", &partition, "--x", "0,1,299"]);
    let labels: Vec<u64> = q["labels"].as_array().unwrap().iter().map(|v| v["label"].as_u64().unwrap()).collect();
    assert_eq!(labels.len(), 3);
    assert!(labels.iter().all(|&l| l == 1 || l == 2));
    // Same answers on a second invocation.
    let again = ok_json(dir, &["query", "--graph", &graph, "--oracle", &oracle, "--partition", &partition, "--x", "0,1,299"]);
    assert_eq!(q["labels"], again["labels"]);

    let eval = ok_json(
        dir,
        &["eval", "--graph", &graph, "--oracle", &oracle, "--partition", &partition, "--out", &p("eval.json")],
    );
    assert!(eval["max_ratio"].as_f64().unwrap() < 0.5, "{eval}");
    assert!(dir.join("eval.json").exists());
}

#[test]
fn errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(cli(dir, &["no-such-command"]).status.code(), Some(2));
    assert_eq!(cli(dir, &["gen", "--seed", "not-hex"]).status.code(), Some(2));

    let missing = dir.join("missing.txt");
    let out = cli(dir, &["spectrum", "--graph", missing.to_str().unwrap(), "--k", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let bad = dir.join("bad.txt");
    std::fs::write(&bad, "3 2 1\n0 3\n1 2\n").unwrap();
    assert_eq!(cli(dir, &["spectrum", "--graph", bad.to_str().unwrap(), "--k", "1"]).status.code(), Some(2));
}
