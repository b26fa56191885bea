use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::folds::label_anomalies;
use super::{degrees, Graph, GraphDataset, GraphError};

fn file_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

/// Directory holding `<name>_A.txt`: either `root/<name>/` or `root/`.
pub fn resolve_dataset_dir(root: &Path, name: &str) -> Result<PathBuf, GraphError> {
    let nested = root.join(name);
    for dir in [nested.as_path(), root] {
        if file_path(dir, name, "A").is_file() {
            return Ok(dir.to_path_buf());
        }
    }
    Err(GraphError::MissingFile(file_path(&nested, name, "A")))
}

fn read_required(path: PathBuf) -> Result<(PathBuf, String), GraphError> {
    if !path.is_file() {
        return Err(GraphError::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|source| GraphError::Io {
        path: path.clone(),
        source,
    })?;
    Ok((path, text))
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn tokens(line: &str) -> impl Iterator<Item = &str> {
    line.split([',', ' ', '\t']).filter(|t| !t.is_empty())
}

fn parse_token<T: std::str::FromStr>(file: &Path, line: usize, token: &str) -> Result<T, GraphError> {
    token.parse().map_err(|_| GraphError::Parse {
        file: file.to_path_buf(),
        line,
        message: format!("cannot parse `{token}` as a number"),
    })
}

fn single_column<T: std::str::FromStr>(file: &Path, text: &str) -> Result<Vec<T>, GraphError> {
    lines(text)
        .map(|(no, l)| {
            let mut it = tokens(l);
            let tok = it.next().unwrap_or(l);
            if it.next().is_some() {
                return Err(GraphError::Parse {
                    file: file.to_path_buf(),
                    line: no,
                    message: "expected a single value".into(),
                });
            }
            parse_token(file, no, tok)
        })
        .collect()
}

/// Reads a TUDataset collection.
///
/// Node ids in the edge file are 1-indexed and global; they are remapped to
/// 0-indexed ids local to each graph. Edges are symmetrized, duplicates and
/// self-loops dropped. Without a node attribute file, node degrees are used.
pub fn parse_tudataset(root_dir: &Path, name: &str) -> Result<GraphDataset, GraphError> {
    let dir = resolve_dataset_dir(root_dir, name)?;
    let (a_path, a_text) = read_required(file_path(&dir, name, "A"))?;
    let (ind_path, ind_text) = read_required(file_path(&dir, name, "graph_indicator"))?;
    let (lab_path, lab_text) = read_required(file_path(&dir, name, "graph_labels"))?;

    let indicator: Vec<i64> = single_column(&ind_path, &ind_text)?;
    let raw_labels: Vec<i64> = single_column(&lab_path, &lab_text)?;
    let graph_count = raw_labels.len();
    if graph_count == 0 {
        return Err(GraphError::Structural(format!("{name}: no graph labels")));
    }

    // node -> (graph index, local index)
    let mut local = Vec::with_capacity(indicator.len());
    let mut sizes = vec![0usize; graph_count];
    for (node, &gid) in indicator.iter().enumerate() {
        if gid < 1 || gid as usize > graph_count {
            return Err(GraphError::Structural(format!(
                "node {} belongs to graph {gid}, but only {graph_count} graphs are labeled",
                node + 1
            )));
        }
        let g = gid as usize - 1;
        local.push((g, sizes[g]));
        sizes[g] += 1;
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(GraphError::Structural(format!("graph {} has no nodes", g + 1)));
    }

    let mut adjacency: Vec<Vec<u8>> = sizes.iter().map(|&n| vec![0u8; n * n]).collect();
    for (no, l) in lines(&a_text) {
        let ids: Vec<usize> = tokens(l)
            .map(|t| parse_token(&a_path, no, t))
            .collect::<Result<_, _>>()?;
        let [u, v] = ids[..] else {
            return Err(GraphError::Parse {
                file: a_path.clone(),
                line: no,
                message: format!("expected two node ids, found {}", ids.len()),
            });
        };
        let lookup = |id: usize| {
            id.checked_sub(1)
                .and_then(|i| local.get(i).copied())
                .ok_or_else(|| {
                    GraphError::Structural(format!(
                        "{}:{no}: node id {id} outside 1..={}",
                        a_path.display(),
                        local.len()
                    ))
                })
        };
        let ((gu, iu), (gv, iv)) = (lookup(u)?, lookup(v)?);
        if gu != gv {
            return Err(GraphError::Structural(format!(
                "{}:{no}: edge ({u}, {v}) joins graphs {} and {}",
                a_path.display(),
                gu + 1,
                gv + 1
            )));
        }
        if iu != iv {
            let n = sizes[gu];
            adjacency[gu][iu * n + iv] = 1;
            adjacency[gu][iv * n + iu] = 1;
        }
    }

    let attr_path = file_path(&dir, name, "node_attributes");
    let attributes: Option<(Vec<Vec<f64>>, usize)> = if attr_path.is_file() {
        let (path, text) = read_required(attr_path)?;
        let rows: Vec<Vec<f64>> = lines(&text)
            .map(|(no, l)| tokens(l).map(|t| parse_token(&path, no, t)).collect())
            .collect::<Result<_, _>>()?;
        if rows.len() != indicator.len() {
            return Err(GraphError::Structural(format!(
                "{}: {} attribute rows for {} nodes",
                path.display(),
                rows.len(),
                indicator.len()
            )));
        }
        let d = rows[0].len();
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(GraphError::Parse {
                file: path,
                line: bad + 1,
                message: format!("expected {d} attributes"),
            });
        }
        Some((rows, d))
    } else {
        None
    };

    let labels = label_anomalies(&raw_labels)?;
    let mut per_graph_attrs: Vec<Vec<f64>> = vec![Vec::new(); graph_count];
    if let Some((rows, _)) = &attributes {
        for (node, row) in rows.iter().enumerate() {
            per_graph_attrs[local[node].0].extend_from_slice(row);
        }
    }

    let graphs = adjacency
        .into_iter()
        .enumerate()
        .map(|(g, adj)| {
            let n = sizes[g];
            let (attrs, d) = match &attributes {
                Some((_, d)) => (std::mem::take(&mut per_graph_attrs[g]), *d),
                None => (degrees(&adj, n), 1),
            };
            Graph::new(g + 1, adj, attrs, d, labels[g], raw_labels[g])
        })
        .collect::<Result<Vec<_>, _>>()?;
    GraphDataset::new(name, graphs)
}

/// Writes `dataset` as TUDataset files under `dir` (edges in both
/// directions, attributes always written, raw class labels preserved).
pub fn write_tudataset(dataset: &GraphDataset, dir: &Path) -> Result<(), GraphError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| GraphError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let name = dataset.name();
    let (mut a, mut ind, mut lab, mut attr) = (String::new(), String::new(), String::new(), String::new());
    let mut offset = 0usize;
    for (g, graph) in dataset.graphs().iter().enumerate() {
        let n = graph.node_count();
        let mut edges = BTreeMap::new();
        for (i, j) in graph.edges() {
            edges.insert((i, j), ());
            edges.insert((j, i), ());
        }
        for &(i, j) in edges.keys() {
            writeln!(a, "{}, {}", offset + i + 1, offset + j + 1).expect("string write");
        }
        let d = graph.attribute_dim();
        for i in 0..n {
            writeln!(ind, "{}", g + 1).expect("string write");
            let row: Vec<String> = graph.attributes()[i * d..(i + 1) * d]
                .iter()
                .map(|v| format!("{v:?}"))
                .collect();
            writeln!(attr, "{}", row.join(", ")).expect("string write");
        }
        writeln!(lab, "{}", graph.raw_label()).expect("string write");
        offset += n;
    }
    for (suffix, body) in [
        ("A", a),
        ("graph_indicator", ind),
        ("graph_labels", lab),
        ("node_attributes", attr),
    ] {
        let p = file_path(dir, name, suffix);
        fs::write(&p, body).map_err(io(&p))?;
    }
    Ok(())
}
