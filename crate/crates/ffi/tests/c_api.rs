use std::ffi::{CStr, CString};
use std::fmt::Write as _;
use std::ptr;

use spectral_lca_ffi::*;

/// Two 6-cliques, each vertex padded to degree 6 with a self-loop.
fn clique_file(dir: &std::path::Path) -> CString {
    let mut text = String::from("12 6 2\n0 6\n6 12\n");
    for x in 0..12 {
        let base = x / 6 * 6;
        let row: Vec<String> = (base..base + 6).map(|y| y.to_string()).collect();
        writeln!(text, "{}", row.join(" ")).unwrap();
    }
    let path = dir.join("cliques.txt");
    std::fs::write(&path, text).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(slca_last_error()).to_string_lossy().into_owned() }
}

#[test]
fn end_to_end_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let path = clique_file(dir.path());
    let seed = CString::new("2a").unwrap();
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(slca_graph_load(path.as_ptr(), &mut g), SlcaStatus::Ok);
        assert_eq!(slca_graph_vertex_count(g), 12);
        assert_eq!(slca_graph_cluster_of(g, 7), 1);

        let params = SlcaOracleParams { delta: 0.5, xi: 0.5, t: 4, r_init: 600, r_query: 600, s: 12, m: 3, k: 2 };
        let mut o = ptr::null_mut();
        assert_eq!(slca_oracle_init(g, &params, seed.as_ptr(), &mut o), SlcaStatus::Ok, "{}", last_error());
        assert!(slca_oracle_probe_count(o) > 0);

        let (mut same, mut cross) = (0.0, 0.0);
        assert_eq!(slca_oracle_dot(o, 0, 1, &mut same), SlcaStatus::Ok);
        assert_eq!(slca_oracle_dot(o, 0, 7, &mut cross), SlcaStatus::Ok);
        assert!(same > 5.0 * cross.abs(), "{same} {cross}");

        let saved = CString::new(dir.path().join("o.bin").to_str().unwrap()).unwrap();
        assert_eq!(slca_oracle_save(o, saved.as_ptr()), SlcaStatus::Ok);
        let mut o2 = ptr::null_mut();
        assert_eq!(slca_oracle_load(g, saved.as_ptr(), &mut o2), SlcaStatus::Ok);
        let mut again = 0.0;
        assert_eq!(slca_oracle_dot(o2, 0, 1, &mut again), SlcaStatus::Ok);
        assert_eq!(again, same);
        slca_oracle_free(o2);

        let mut c = ptr::null_mut();
        let st = slca_clusterer_find(o, 0.0, 0.9, 0.01, 6, seed.as_ptr(), &mut c);
        assert_eq!(st, SlcaStatus::Ok, "{}", last_error());
        let mut labels = Vec::new();
        for x in 0..12 {
            let mut l = 0;
            assert_eq!(slca_clusterer_assign(c, x, &mut l), SlcaStatus::Ok);
            labels.push(l);
        }
        assert!(labels[..6].iter().all(|&l| l == labels[0]));
        assert!(labels[6..].iter().all(|&l| l == labels[6]));
        assert_ne!(labels[0], labels[6]);

        slca_clusterer_free(c);
        slca_oracle_free(o);
        slca_graph_free(g);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let missing = CString::new("/nonexistent/graph.txt").unwrap();
    let bad_seed = CString::new("xyz").unwrap();
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(slca_graph_load(missing.as_ptr(), &mut g), SlcaStatus::Io);
        assert!(!last_error().is_empty());
        assert_eq!(slca_graph_load(ptr::null(), &mut g), SlcaStatus::NullPointer);
        assert_eq!(slca_graph_load(missing.as_ptr(), ptr::null_mut()), SlcaStatus::NullPointer);

        let sizes = [10usize, 10];
        assert_eq!(slca_graph_generate(2, sizes.as_ptr(), 4, 0.1, bad_seed.as_ptr(), &mut g), SlcaStatus::InvalidArgument);
        let seed = CString::new("1").unwrap();
        assert_eq!(slca_graph_generate(2, sizes.as_ptr(), 4, 0.1, seed.as_ptr(), &mut g), SlcaStatus::Ok, "{}", last_error());

        let even_m = SlcaOracleParams { delta: 0.5, xi: 0.5, t: 4, r_init: 10, r_query: 10, s: 4, m: 2, k: 2 };
        let mut o = ptr::null_mut();
        assert_eq!(slca_oracle_init(g, &even_m, seed.as_ptr(), &mut o), SlcaStatus::InvalidArgument);
        assert!(last_error().contains("odd"));
        assert!(o.is_null());

        let mut v = 0.0;
        assert_eq!(slca_oracle_dot(ptr::null(), 0, 0, &mut v), SlcaStatus::NullPointer);
        assert_eq!(slca_graph_vertex_count(ptr::null()), 0);
        slca_graph_free(g);
        slca_graph_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/spectral_lca.h")).unwrap();
    for name in [
        "slca_last_error",
        "slca_graph_load",
        "slca_graph_generate",
        "slca_graph_free",
        "slca_oracle_init",
        "slca_oracle_load",
        "slca_oracle_save",
        "slca_oracle_dot",
        "slca_oracle_free",
        "slca_clusterer_open",
        "slca_clusterer_find",
        "slca_clusterer_assign",
        "slca_clusterer_free",
        "SLCA_STATUS_OK",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
