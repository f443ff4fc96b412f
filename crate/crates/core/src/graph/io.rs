//! Plain-text graph formats.
//!
//! * edge file: one `i j` pair per line, `#` comments ignored. A `# nodes: N`
//!   directive fixes the node count.
//! * sensitive file: one integer per line, line index = node id. A
//!   `# categories: K` directive fixes `|S|`.
//! * feature file: CSV, row index = node id. A non-numeric first row is
//!   treated as a header.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{Edge, Graph};
use crate::error::{DeaError, Result};

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    /// Overrides node-count inference (and any `# nodes:` directive).
    pub num_nodes: Option<usize>,
    /// Overrides `|S|` inference (and any `# categories:` directive).
    pub num_sensitive: Option<usize>,
}

/// Paths written by [`write_graph`].
#[derive(Clone, Debug)]
pub struct GraphFiles {
    pub edges: PathBuf,
    pub sensitive: PathBuf,
    pub features: Option<PathBuf>,
}

pub fn load_graph(
    edge_path: impl AsRef<Path>,
    feature_path: Option<&Path>,
    sensitive_path: impl AsRef<Path>,
) -> Result<Graph> {
    load_graph_with(edge_path, feature_path, sensitive_path, &LoadOptions::default())
}

pub fn load_graph_with(
    edge_path: impl AsRef<Path>,
    feature_path: Option<&Path>,
    sensitive_path: impl AsRef<Path>,
    opts: &LoadOptions,
) -> Result<Graph> {
    let edge_path = edge_path.as_ref();
    let sensitive_path = sensitive_path.as_ref();
    let (edges, nodes_directive) = parse_edges(edge_path, &read(edge_path)?)?;
    let (sensitive, categories_directive) = parse_sensitive(sensitive_path, &read(sensitive_path)?)?;

    let inferred = edges
        .iter()
        .map(|&(i, j)| i.max(j) + 1)
        .max()
        .unwrap_or(0)
        .max(sensitive.len());
    let n = opts.num_nodes.or(nodes_directive).unwrap_or(inferred);
    if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i.max(j) >= n) {
        return Err(DeaError::Validation(format!(
            "{}: edge ({i}, {j}) exceeds declared node count {n}",
            edge_path.display()
        )));
    }
    if sensitive.len() != n {
        return Err(DeaError::Validation(format!(
            "{}: {} sensitive entries for {n} nodes",
            sensitive_path.display(),
            sensitive.len()
        )));
    }
    let max_s = sensitive.iter().copied().max().unwrap_or(0);
    let num_sensitive = match opts.num_sensitive.or(categories_directive) {
        Some(k) => {
            if let Some((node, s)) = sensitive.iter().enumerate().find(|(_, &s)| s >= k) {
                return Err(DeaError::Validation(format!(
                    "{}: node {node} has sensitive index {s}, outside 0..{k}",
                    sensitive_path.display()
                )));
            }
            k
        }
        None => (max_s + 1).max(2),
    };

    let features = match feature_path {
        Some(p) => Some(parse_features(p, &read(p)?, n)?),
        None => None,
    };
    Graph::new(n, edges, sensitive, num_sensitive, features)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| DeaError::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> DeaError {
    DeaError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn directive(line: &str, key: &str) -> Option<String> {
    let rest = line.strip_prefix('#')?.trim_start();
    let rest = rest.strip_prefix(key)?.trim_start();
    Some(rest.strip_prefix(':')?.trim().to_string())
}

fn parse_edges(path: &Path, text: &str) -> Result<(Vec<Edge>, Option<usize>)> {
    let mut edges = Vec::new();
    let mut nodes = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(v) = directive(line, "nodes") {
                nodes = Some(
                    v.parse()
                        .map_err(|_| parse_err(path, lineno, format!("bad node count {v:?}")))?,
                );
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(path, lineno, format!("expected two integers, got {line:?}")));
        };
        let i = a
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad node id {a:?}")))?;
        let j = b
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad node id {b:?}")))?;
        edges.push((i, j));
    }
    Ok((edges, nodes))
}

fn parse_sensitive(path: &Path, text: &str) -> Result<(Vec<usize>, Option<usize>)> {
    let mut values = Vec::new();
    let mut categories = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(v) = directive(line, "categories") {
                categories = Some(
                    v.parse()
                        .map_err(|_| parse_err(path, lineno, format!("bad category count {v:?}")))?,
                );
            }
            continue;
        }
        values.push(
            line.parse()
                .map_err(|_| parse_err(path, lineno, format!("bad sensitive value {line:?}")))?,
        );
    }
    Ok((values, categories))
}

fn parse_features(path: &Path, text: &str, n: usize) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = rows.first() {
                    if first.len() != row.len() {
                        return Err(parse_err(
                            path,
                            lineno,
                            format!("expected {} columns, got {}", first.len(), row.len()),
                        ));
                    }
                }
                rows.push(row);
            }
            Err(_) if rows.is_empty() => continue, // header
            Err(e) => return Err(parse_err(path, lineno, e.to_string())),
        }
    }
    if rows.len() != n {
        return Err(DeaError::Validation(format!(
            "{}: {} feature rows for {n} nodes",
            path.display(),
            rows.len()
        )));
    }
    let d = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, d), flat).map_err(|e| DeaError::Validation(e.to_string()))
}

/// Writes `edges.txt`, `sensitive.txt` and (if present) `features.csv` into `dir`.
/// Output is a pure function of the graph, so regenerated files are byte-identical.
pub fn write_graph(g: &Graph, dir: impl AsRef<Path>) -> Result<GraphFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DeaError::io(dir, e))?;

    let mut edges = format!("# nodes: {}\n", g.num_nodes());
    for &(i, j) in g.edges() {
        let _ = writeln!(edges, "{i} {j}");
    }
    let mut sens = format!("# categories: {}\n", g.num_sensitive());
    for s in g.sensitive() {
        let _ = writeln!(sens, "{s}");
    }
    let files = GraphFiles {
        edges: dir.join("edges.txt"),
        sensitive: dir.join("sensitive.txt"),
        features: g.features().map(|_| dir.join("features.csv")),
    };
    fs::write(&files.edges, edges).map_err(|e| DeaError::io(&files.edges, e))?;
    fs::write(&files.sensitive, sens).map_err(|e| DeaError::io(&files.sensitive, e))?;
    if let (Some(x), Some(path)) = (g.features(), &files.features) {
        let mut out = String::new();
        for row in x.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| DeaError::io(path, e))?;
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn dedups_and_drops_self_loops() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e", "0 1\n1 0\n1 1");
        let s = write(dir.path(), "s", "0\n1");
        let g = load_graph(&e, None, &s).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(g.num_sensitive(), 2);
    }

    #[test]
    fn empty_edge_file() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e", "");
        let s = write(dir.path(), "s", "0\n1\n0\n");
        let g = load_graph(&e, None, &s).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn star_into_node_two() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e", "0 2\n1 2\n");
        let s = write(dir.path(), "s", "0\n0\n1\n");
        let g = load_graph(&e, None, &s).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.edges(), &[(0, 2), (1, 2)]);
        assert_eq!(g.num_sensitive(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e", "# comment\n0 1\n1 x\n");
        let s = write(dir.path(), "s", "0\n1\n");
        match load_graph(&e, None, &s) {
            Err(DeaError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let e = write(dir.path(), "e2", "0 1 2\n");
        assert!(matches!(load_graph(&e, None, &s), Err(DeaError::Parse { line: 1, .. })));
    }

    #[test]
    fn sensitive_out_of_declared_range() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e", "0 1\n");
        let s = write(dir.path(), "s", "# categories: 2\n0\n2\n");
        assert!(matches!(load_graph(&e, None, &s), Err(DeaError::Validation(_))));
        let s = write(dir.path(), "s2", "0\n");
        assert!(matches!(load_graph(&e, None, &s), Err(DeaError::Validation(_))));
    }

    #[test]
    fn node_directive_overrides_inference() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e", "# nodes: 4\n0 1\n");
        let s = write(dir.path(), "s", "0\n1\n1\n0\n");
        let g = load_graph(&e, None, &s).unwrap();
        assert_eq!(g.num_nodes(), 4);
    }

    #[test]
    fn features_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e", "0 1\n");
        let s = write(dir.path(), "s", "0\n1\n");
        let f = write(dir.path(), "f", "a,b\n1.5,2\n-3,0.25\n");
        let g = load_graph(&e, Some(&f), &s).unwrap();
        let x = g.features().unwrap();
        assert_eq!(x.dim(), (2, 2));
        assert_eq!(x[[1, 0]], -3.0);
        let bad = write(dir.path(), "f2", "1,2\n3\n");
        assert!(matches!(load_graph(&e, Some(&bad), &s), Err(DeaError::Parse { line: 2, .. })));
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let x = Array2::from_shape_fn((3, 2), |(i, j)| (i as f64 + 0.1) / (j as f64 + 3.0));
        let g = Graph::new(3, vec![(0, 1), (1, 2)], vec![0, 1, 2], 3, Some(x)).unwrap();
        let files = write_graph(&g, dir.path()).unwrap();
        let back = load_graph(&files.edges, files.features.as_deref(), &files.sensitive).unwrap();
        assert_eq!(back, g);
    }
}
