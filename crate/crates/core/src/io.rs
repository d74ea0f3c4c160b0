//! JSON and CSV file formats.
//!
//! Trees are stored as `{"nodes":[{"id","m","n"}],"edges":[[i,j]],"root":r}`
//! with the block sizes carried per node. TSS representations wrap the tree
//! together with the rank profile and every node's generators, matrices
//! written as row-major nested arrays. Dense matrices and vectors are headerless
//! CSV.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::blockmat::BlockLayout;
use crate::error::{Result, TssError};
use crate::tree::{DirectedEdge, Node, RootedTree};
use crate::tss::{RankProfile, SpinnerTable, TssMatrix};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NodeJson {
    pub id: usize,
    pub m: usize,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TreeJson {
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<[usize; 2]>,
    pub root: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LayoutJson {
    pub m: Vec<usize>,
    pub n: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProfileEntry {
    pub from: usize,
    pub to: usize,
    pub rho: usize,
}

type Nested = Vec<Vec<f64>>;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpinnerJson {
    pub node: usize,
    #[serde(rename = "D")]
    pub d: Nested,
    /// Keyed by the neighbour id the edge leads to.
    #[serde(rename = "Inp")]
    pub inp: BTreeMap<String, Nested>,
    /// Keyed by the neighbour id the edge comes from.
    #[serde(rename = "Out")]
    pub out: BTreeMap<String, Nested>,
    /// Keyed by `"to,from"` neighbour ids.
    #[serde(rename = "Trans")]
    pub trans: BTreeMap<String, Nested>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TssJson {
    pub tree: TreeJson,
    pub layout: LayoutJson,
    pub profile: Vec<ProfileEntry>,
    pub spinners: Vec<SpinnerJson>,
}

fn parse_err(msg: impl Into<String>) -> TssError {
    TssError::Parse(msg.into())
}

pub fn tree_to_json(tree: &RootedTree, layout: &BlockLayout) -> TreeJson {
    TreeJson {
        nodes: tree
            .nodes()
            .map(|k| NodeJson {
                id: k.id(),
                m: layout.m(k),
                n: layout.n(k),
            })
            .collect(),
        edges: tree
            .undirected_edges()
            .iter()
            .map(|(a, b)| [a.id(), b.id()])
            .collect(),
        root: tree.root().id(),
    }
}

pub fn tree_from_json(json: &TreeJson) -> Result<(RootedTree, BlockLayout)> {
    let count = json.nodes.len();
    let mut m = vec![None; count];
    let mut n = vec![0; count];
    for node in &json.nodes {
        if node.id == 0 || node.id > count {
            return Err(TssError::BadNodeId { id: node.id, count });
        }
        if m[node.id - 1].replace(node.m).is_some() {
            return Err(TssError::DuplicateNode(node.id));
        }
        n[node.id - 1] = node.n;
    }
    let edges: Vec<(usize, usize)> = json.edges.iter().map(|&[a, b]| (a, b)).collect();
    let tree = RootedTree::new(count, &edges, json.root)?;
    let m = m.into_iter().map(|v| v.expect("every id seen once")).collect();
    Ok((tree, BlockLayout::new(m, n)?))
}

pub fn parse_tree(text: &str) -> Result<(RootedTree, BlockLayout)> {
    tree_from_json(&serde_json::from_str(text)?)
}

pub fn read_tree(path: impl AsRef<Path>) -> Result<(RootedTree, BlockLayout)> {
    parse_tree(&fs::read_to_string(path)?)
}

pub fn write_tree(path: impl AsRef<Path>, tree: &RootedTree, layout: &BlockLayout) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&tree_to_json(tree, layout))?)?;
    Ok(())
}

fn nested(m: &DMatrix<f64>) -> Nested {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Rebuilds a matrix from nested rows. Arrays with no entries take the
/// expected shape when that shape is empty as well, since `[]` cannot carry
/// a column count.
fn unnested(rows: &Nested, expected: (usize, usize), what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(parse_err(format!("{what}: ragged rows")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TssError::NonFiniteInput);
    }
    if r * c == 0 && expected.0 * expected.1 == 0 {
        return Ok(DMatrix::zeros(expected.0, expected.1));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn tss_to_json(t: &TssMatrix) -> TssJson {
    let tree = t.tree();
    TssJson {
        tree: tree_to_json(tree, t.layout()),
        layout: LayoutJson {
            m: t.layout().output_sizes().to_vec(),
            n: t.layout().input_sizes().to_vec(),
        },
        profile: t
            .profile()
            .iter()
            .map(|(e, rho)| ProfileEntry {
                from: e.from.id(),
                to: e.to.id(),
                rho,
            })
            .collect(),
        spinners: tree
            .nodes()
            .map(|k| {
                let s = t.spinner(k);
                SpinnerJson {
                    node: k.id(),
                    d: nested(&s.d),
                    inp: s.inp.iter().map(|(j, g)| (j.id().to_string(), nested(g))).collect(),
                    out: s.out.iter().map(|(i, g)| (i.id().to_string(), nested(g))).collect(),
                    trans: s
                        .trans
                        .iter()
                        .map(|((i, j), g)| (format!("{},{}", i.id(), j.id()), nested(g)))
                        .collect(),
                }
            })
            .collect(),
    }
}

fn parse_id(tree: &RootedTree, key: &str) -> Result<Node> {
    let id: usize = key
        .trim()
        .parse()
        .map_err(|_| parse_err(format!("bad node id {key:?}")))?;
    tree.node(id)
}

pub fn tss_from_json(json: &TssJson) -> Result<TssMatrix> {
    let (tree, tree_layout) = tree_from_json(&json.tree)?;
    let layout = BlockLayout::new(json.layout.m.clone(), json.layout.n.clone())?;
    if layout != tree_layout {
        return Err(TssError::LayoutMismatch(
            "layout disagrees with the block sizes on the tree nodes".into(),
        ));
    }
    let mut ranks = BTreeMap::new();
    for p in &json.profile {
        let e = DirectedEdge::new(tree.node(p.from)?, tree.node(p.to)?);
        ranks.insert(e, p.rho);
    }
    let profile = RankProfile::new(&tree, ranks)?;

    let count = tree.node_count();
    let mut spinners: Vec<Option<SpinnerTable>> = vec![None; count];
    for sj in &json.spinners {
        let k = tree.node(sj.node)?;
        let mut s = SpinnerTable::new(unnested(&sj.d, (layout.m(k), layout.n(k)), "D")?);
        for (key, g) in &sj.inp {
            let j = parse_id(&tree, key)?;
            let shape = (profile.get(k, j), layout.n(k));
            s.inp.insert(j, unnested(g, shape, "Inp")?);
        }
        for (key, g) in &sj.out {
            let i = parse_id(&tree, key)?;
            let shape = (layout.m(k), profile.get(i, k));
            s.out.insert(i, unnested(g, shape, "Out")?);
        }
        for (key, g) in &sj.trans {
            let (a, b) = key
                .split_once(',')
                .ok_or_else(|| parse_err(format!("bad transition key {key:?}")))?;
            let (i, j) = (parse_id(&tree, a)?, parse_id(&tree, b)?);
            let shape = (profile.get(k, i), profile.get(j, k));
            s.trans.insert((i, j), unnested(g, shape, "Trans")?);
        }
        if spinners[k.index()].replace(s).is_some() {
            return Err(TssError::DuplicateNode(k.id()));
        }
    }
    let spinners = spinners
        .into_iter()
        .enumerate()
        .map(|(idx, s)| {
            s.ok_or(TssError::MissingGenerator {
                node: idx + 1,
                generator: "D".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TssMatrix::new(Arc::new(tree), layout, profile, spinners)
}

pub fn parse_tss(text: &str) -> Result<TssMatrix> {
    tss_from_json(&serde_json::from_str(text)?)
}

pub fn read_tss(path: impl AsRef<Path>) -> Result<TssMatrix> {
    parse_tss(&fs::read_to_string(path)?)
}

pub fn write_tss(path: impl AsRef<Path>, t: &TssMatrix) -> Result<()> {
    fs::write(path, serde_json::to_string(&tss_to_json(t))?)?;
    Ok(())
}

/// Parses headerless CSV of decimal floats, one matrix row per line.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(format!("row {}: not a number: {f:?}", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TssError::NonFiniteInput);
    }
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(parse_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

/// Formats a matrix as headerless CSV using shortest round-trip decimals.
pub fn format_matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_matrix_csv(&fs::read_to_string(path)?)
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix_csv(m))?;
    Ok(())
}

/// Vectors are single-column CSV. A single row is accepted as well.
pub fn parse_vector_csv(text: &str) -> Result<DVector<f64>> {
    let m = parse_matrix_csv(text)?;
    match m.shape() {
        (_, 1) | (0, 0) => Ok(DVector::from_iterator(m.nrows(), m.iter().copied())),
        (1, _) => Ok(DVector::from_iterator(m.ncols(), m.iter().copied())),
        (r, c) => Err(parse_err(format!("expected a vector, got {r}x{c}"))),
    }
}

pub fn format_vector_csv(v: &DVector<f64>) -> String {
    v.iter().map(|x| format!("{x:?}\n")).collect()
}

pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    parse_vector_csv(&fs::read_to_string(path)?)
}

pub fn write_vector_csv(path: impl AsRef<Path>, v: &DVector<f64>) -> Result<()> {
    fs::write(path, format_vector_csv(v))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::random_tss;

    const FIXTURE: &str = r#"{"nodes":[{"id":1,"m":2,"n":2},{"id":2,"m":1,"n":1},{"id":3,"m":2,"n":2},
        {"id":4,"m":1,"n":1},{"id":5,"m":0,"n":0},{"id":6,"m":0,"n":0},{"id":7,"m":1,"n":1}],
        "edges":[[1,5],[2,5],[5,7],[6,7],[3,6],[4,6]],"root":7}"#;

    #[test]
    fn tree_roundtrip() {
        let (tree, layout) = parse_tree(FIXTURE).unwrap();
        assert_eq!(tree.root().id(), 7);
        assert_eq!(layout.m(Node::from_id(1)), 2);
        let back = tree_from_json(&tree_to_json(&tree, &layout)).unwrap();
        assert_eq!(back, (tree, layout));
    }

    #[test]
    fn tree_errors() {
        let dup = r#"{"nodes":[{"id":1,"m":1,"n":1},{"id":1,"m":1,"n":1}],"edges":[[1,2]],"root":1}"#;
        assert!(matches!(parse_tree(dup), Err(TssError::DuplicateNode(1))));
        let bad = r#"{"nodes":[{"id":1,"m":1,"n":1},{"id":3,"m":1,"n":1}],"edges":[[1,3]],"root":1}"#;
        assert!(matches!(parse_tree(bad), Err(TssError::BadNodeId { id: 3, count: 2 })));
        assert!(matches!(parse_tree("{"), Err(TssError::Json(_))));
    }

    #[test]
    fn tss_roundtrip_with_empty_blocks() {
        let (tree, layout) = parse_tree(FIXTURE).unwrap();
        let tree = Arc::new(tree);
        let mut profile = RankProfile::uniform(&tree, 1);
        profile.set(DirectedEdge::new(Node::from_id(1), Node::from_id(5)), 0);
        let t = random_tss(tree, layout, profile, 3).unwrap();
        let text = serde_json::to_string(&tss_to_json(&t)).unwrap();
        let back = parse_tss(&text).unwrap();
        assert_eq!(back.profile(), t.profile());
        assert_eq!(back.spinners(), t.spinners());
    }

    #[test]
    fn tss_shape_errors_surface() {
        let tree = Arc::new(RootedTree::line(2).unwrap());
        let t = random_tss(tree.clone(), BlockLayout::uniform(2, 2), RankProfile::uniform(&tree, 1), 0).unwrap();
        let mut json = tss_to_json(&t);
        let key = json.spinners[0].inp.keys().next().unwrap().clone();
        json.spinners[0].inp.insert(key, vec![vec![1.0], vec![2.0]]);
        assert!(matches!(tss_from_json(&json), Err(TssError::ShapeMismatch { .. })));
        let mut json = tss_to_json(&t);
        json.spinners.pop();
        assert!(matches!(tss_from_json(&json), Err(TssError::MissingGenerator { .. })));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.0, 1e-300, 3.5e20, f64::MIN_POSITIVE, 1.0 / 3.0]);
        let text = format_matrix_csv(&m);
        assert_eq!(parse_matrix_csv(&text).unwrap(), m);
        let v = DVector::from_vec(vec![1.0, -0.25, 7e-9]);
        assert_eq!(parse_vector_csv(&format_vector_csv(&v)).unwrap(), v);
        assert_eq!(parse_vector_csv("1, 2, 3\n").unwrap().len(), 3);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(parse_matrix_csv("1,2\n3\n"), Err(TssError::Parse(_))));
        assert!(matches!(parse_matrix_csv("1,x\n"), Err(TssError::Parse(_))));
        assert!(matches!(parse_matrix_csv("1,NaN\n"), Err(TssError::NonFiniteInput)));
        assert!(matches!(parse_vector_csv("1,2\n3,4\n"), Err(TssError::Parse(_))));
    }
}
