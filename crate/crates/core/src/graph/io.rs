//! Line-oriented text format:
//!
//! ```text
//! # optional comment lines
//! n d k
//! start end        (k lines, half-open vertex ranges of the clusters)
//! y_0 ... y_{d-1}  (n lines, slot order preserved)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::RegularGraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GraphFile {
    pub graph: RegularGraph,
    /// Half-open cluster ranges; empty when the file declares k = 0.
    pub ranges: Vec<(usize, usize)>,
    /// Comment lines without the leading '#'.
    pub comments: Vec<String>,
}

impl GraphFile {
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        self.ranges.iter().map(|&(a, b)| (a..b).collect()).collect()
    }

    /// Value of a `key value` comment line, if present.
    pub fn comment_value(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let mut it = c.split_whitespace();
            (it.next() == Some(key)).then(|| it.next()).flatten()
        })
    }

    pub fn to_text(&self) -> String {
        let g = &self.graph;
        let mut out = String::with_capacity(g.n() * g.d() * 6);
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "{} {} {}", g.n(), g.d(), self.ranges.len());
        for &(a, b) in &self.ranges {
            let _ = writeln!(out, "{a} {b}");
        }
        for x in 0..g.n() {
            let row: Vec<String> = g.adjacency(x).iter().map(u32::to_string).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut comments = Vec::new();
        let mut lines = text.lines().enumerate().filter_map(|(i, l)| {
            let l = l.trim();
            if let Some(c) = l.strip_prefix('#') {
                comments.push(c.trim().to_string());
                None
            } else if l.is_empty() {
                None
            } else {
                Some((i + 1, l))
            }
        });
        let (ln, header) = lines.next().ok_or_else(|| Error::format("empty graph file"))?;
        let head = numbers(header, ln)?;
        let [n, d, k] = head[..] else {
            return Err(Error::format(format!("line {ln}: header must be `n d k`")));
        };
        let mut ranges = Vec::with_capacity(k);
        for _ in 0..k {
            let (ln, l) = lines.next().ok_or_else(|| Error::format("missing cluster range line"))?;
            match numbers(l, ln)?[..] {
                [a, b] if a < b && b <= n => ranges.push((a, b)),
                _ => return Err(Error::format(format!("line {ln}: bad cluster range"))),
            }
        }
        let mut slots = Vec::with_capacity(n * d);
        for x in 0..n {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| Error::format(format!("missing adjacency line for vertex {x}")))?;
            let row = numbers(l, ln)?;
            if row.len() != d {
                return Err(Error::format(format!("line {ln}: expected {d} slots, got {}", row.len())));
            }
            slots.extend(row.into_iter().map(|y| y as u32));
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::format(format!("line {ln}: trailing content")));
        }
        drop(lines);
        Ok(GraphFile { graph: RegularGraph::from_slots(n, d, slots)?, ranges, comments })
    }
}

fn numbers(line: &str, ln: usize) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| Error::format(format!("line {ln}: bad integer {t:?}"))))
        .collect()
}

pub fn write_graph_file(path: &Path, file: &GraphFile) -> Result<()> {
    std::fs::write(path, file.to_text())?;
    Ok(())
}

pub fn read_graph_file(path: &Path) -> Result<GraphFile> {
    GraphFile::parse(&std::fs::read_to_string(path)?)
}

/// Contiguous half-open ranges for a list of clusters, if they are contiguous.
pub fn contiguous_ranges(clusters: &[Vec<usize>]) -> Option<Vec<(usize, usize)>> {
    clusters
        .iter()
        .map(|c| {
            let (a, b) = (*c.first()?, *c.last()? + 1);
            (b - a == c.len() && c.windows(2).all(|w| w[1] == w[0] + 1)).then_some((a, b))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_clusterable, GeneratorConfig};
    use crate::rng::Seed;

    #[test]
    fn round_trip_preserves_slot_order() {
        let cfg = GeneratorConfig { k: 2, sizes: vec![20, 25], d: 5, p_cross: 0.5, ..Default::default() };
        let inst = generate_clusterable(&cfg, Seed::new(8)).unwrap();
        let file = GraphFile {
            graph: inst.graph.clone(),
            ranges: contiguous_ranges(&inst.clusters).unwrap(),
            comments: vec!["seed 08".into()],
        };
        let text = file.to_text();
        let back = GraphFile::parse(&text).unwrap();
        assert_eq!(back.graph, inst.graph);
        assert_eq!(back.clusters(), inst.clusters);
        assert_eq!(back.comment_value("seed"), Some("08"));
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn malformed_inputs_rejected() {
        assert!(GraphFile::parse("").is_err());
        assert!(GraphFile::parse("2 1 0\n1\n").is_err());
        assert!(GraphFile::parse("2 1 0\n1\n0\n0\n").is_err());
        assert!(GraphFile::parse("2 1 1\n0 3\n1\n0\n").is_err());
        assert!(GraphFile::parse("2 1 0\n1\n1\n").is_err());
        assert!(GraphFile::parse("2 1 1\n0 2\n1\n0\n").is_ok());
    }
}
