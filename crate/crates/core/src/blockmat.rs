//! Graph-partitioned dense matrices.
//!
//! Block `(i, j)` maps the `n_j` inputs of node `j` to the `m_i` outputs of
//! node `i`. Zero-sized blocks are allowed; they model empty nodes.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Result, TssError};
use crate::tree::{DirectedEdge, Node, NodeSet, RootedTree};

/// Per-node output (`m`) and input (`n`) sizes with prefix offsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    m: Vec<usize>,
    n: Vec<usize>,
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
}

fn prefix(sizes: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(sizes.len() + 1);
    out.push(0);
    let mut acc = 0;
    for &s in sizes {
        acc += s;
        out.push(acc);
    }
    out
}

impl BlockLayout {
    /// `m[k]`, `n[k]` are the sizes of node with index `k`.
    pub fn new(m: Vec<usize>, n: Vec<usize>) -> Result<Self> {
        if m.len() != n.len() {
            return Err(TssError::LayoutMismatch(format!(
                "{} output sizes but {} input sizes",
                m.len(),
                n.len()
            )));
        }
        Ok(BlockLayout {
            row_offsets: prefix(&m),
            col_offsets: prefix(&n),
            m,
            n,
        })
    }

    /// Every node gets an `s x s` block.
    pub fn uniform(count: usize, s: usize) -> Self {
        BlockLayout::new(vec![s; count], vec![s; count]).expect("equal lengths")
    }

    /// Square `s x s` blocks except the listed nodes, which get `0 x 0`.
    pub fn with_empty(count: usize, s: usize, empty: &[Node]) -> Self {
        let mut sizes = vec![s; count];
        for e in empty {
            sizes[e.index()] = 0;
        }
        BlockLayout::new(sizes.clone(), sizes).expect("equal lengths")
    }

    pub fn node_count(&self) -> usize {
        self.m.len()
    }

    pub fn m(&self, node: Node) -> usize {
        self.m[node.index()]
    }

    pub fn n(&self, node: Node) -> usize {
        self.n[node.index()]
    }

    pub fn output_sizes(&self) -> &[usize] {
        &self.m
    }

    pub fn input_sizes(&self) -> &[usize] {
        &self.n
    }

    /// `M`
    pub fn total_rows(&self) -> usize {
        *self.row_offsets.last().unwrap_or(&0)
    }

    /// `N`
    pub fn total_cols(&self) -> usize {
        *self.col_offsets.last().unwrap_or(&0)
    }

    pub fn rows(&self, node: Node) -> Range<usize> {
        self.row_offsets[node.index()]..self.row_offsets[node.index() + 1]
    }

    pub fn cols(&self, node: Node) -> Range<usize> {
        self.col_offsets[node.index()]..self.col_offsets[node.index() + 1]
    }

    pub fn row_indices(&self, set: &NodeSet) -> Vec<usize> {
        set.iter().flat_map(|k| self.rows(k)).collect()
    }

    pub fn col_indices(&self, set: &NodeSet) -> Vec<usize> {
        set.iter().flat_map(|k| self.cols(k)).collect()
    }

    /// Rows and columns swapped: the layout of the transpose.
    pub fn transposed(&self) -> Self {
        BlockLayout::new(self.n.clone(), self.m.clone()).expect("equal lengths")
    }
}

/// Dense gather `values[rows, cols]`.
pub(crate) fn gather(values: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| values[(rows[r], cols[c])])
}

/// A dense matrix partitioned into blocks by the nodes of a tree.
#[derive(Clone, Debug)]
pub struct GraphPartitionedMatrix {
    tree: Arc<RootedTree>,
    layout: BlockLayout,
    values: DMatrix<f64>,
}

impl GraphPartitionedMatrix {
    pub fn new(tree: Arc<RootedTree>, layout: BlockLayout, values: DMatrix<f64>) -> Result<Self> {
        if layout.node_count() != tree.node_count() {
            return Err(TssError::LayoutMismatch(format!(
                "layout has {} nodes, tree has {}",
                layout.node_count(),
                tree.node_count()
            )));
        }
        if values.shape() != (layout.total_rows(), layout.total_cols()) {
            return Err(TssError::LayoutMismatch(format!(
                "matrix is {}x{}, layout expects {}x{}",
                values.nrows(),
                values.ncols(),
                layout.total_rows(),
                layout.total_cols()
            )));
        }
        Ok(GraphPartitionedMatrix {
            tree,
            layout,
            values,
        })
    }

    pub fn tree(&self) -> &Arc<RootedTree> {
        &self.tree
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// Same tree and layout, new entries.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        GraphPartitionedMatrix::new(self.tree.clone(), self.layout.clone(), values)
    }

    /// `T<i, j>`
    pub fn block(&self, i: Node, j: Node) -> DMatrix<f64> {
        let (r, c) = (self.layout.rows(i), self.layout.cols(j));
        self.values
            .view((r.start, c.start), (r.len(), c.len()))
            .into_owned()
    }

    fn check_set(&self, set: &NodeSet) -> Result<()> {
        for k in set.iter() {
            self.tree.check(k)?;
        }
        Ok(())
    }

    /// `T<rows, cols>` with blocks in the order the sets list them.
    pub fn submatrix(&self, rows: &NodeSet, cols: &NodeSet) -> Result<DMatrix<f64>> {
        self.check_set(rows)?;
        self.check_set(cols)?;
        Ok(gather(
            &self.values,
            &self.layout.row_indices(rows),
            &self.layout.col_indices(cols),
        ))
    }

    /// Hankel block induced by `set`: rows on the complement (ascending),
    /// columns on `set` in the order given.
    pub fn hankel_induced(&self, set: &NodeSet) -> Result<DMatrix<f64>> {
        let count = self.tree.node_count();
        if set.is_empty() || set.len() >= count {
            return Err(TssError::EmptyOrFullSubset);
        }
        self.check_set(set)?;
        self.submatrix(&set.complement(count), set)
    }

    /// Unit Hankel block of a directed tree edge.
    ///
    /// For a child-to-parent edge `(i, j)` this is `T<V \ D(i), D(i)>`; for the
    /// parent-to-child edge `(j, i)` it is `T<D(i), V \ D(i)>`.
    pub fn unit_hankel(&self, edge: DirectedEdge) -> Result<DMatrix<f64>> {
        let (rows, cols) = unit_hankel_sets(&self.tree, edge)?;
        self.submatrix(&rows, &cols)
    }
}

/// Row and column node sets of the unit Hankel block of `edge`.
pub fn unit_hankel_sets(tree: &RootedTree, edge: DirectedEdge) -> Result<(NodeSet, NodeSet)> {
    tree.check_edge(edge)?;
    if tree.is_up_edge(edge) {
        Ok((tree.non_descendants(edge.from), tree.descendants(edge.from)))
    } else {
        Ok((tree.descendants(edge.to), tree.non_descendants(edge.to)))
    }
}

/// Number of tree edges with exactly one endpoint in `set`.
pub fn border_edge_count(tree: &RootedTree, set: &NodeSet) -> Result<usize> {
    let count = tree.node_count();
    if set.is_empty() || set.len() >= count {
        return Err(TssError::EmptyOrFullSubset);
    }
    let mut member = vec![false; count];
    for k in set.iter() {
        tree.check(k)?;
        member[k.index()] = true;
    }
    Ok(tree
        .undirected_edges()
        .iter()
        .filter(|(a, b)| member[a.index()] != member[b.index()])
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(id: usize) -> Node {
        Node::from_id(id)
    }

    fn fixture_tree() -> Arc<RootedTree> {
        Arc::new(
            RootedTree::new(7, &[(1, 5), (2, 5), (5, 7), (6, 7), (3, 6), (4, 6)], 7).unwrap(),
        )
    }

    fn indexed(tree: Arc<RootedTree>) -> GraphPartitionedMatrix {
        let k = tree.node_count();
        let values = DMatrix::from_fn(k, k, |r, c| (10 * r + c) as f64);
        GraphPartitionedMatrix::new(tree, BlockLayout::uniform(k, 1), values).unwrap()
    }

    #[test]
    fn layout_offsets() {
        let l = BlockLayout::new(vec![2, 0, 3], vec![1, 1, 0]).unwrap();
        assert_eq!(l.total_rows(), 5);
        assert_eq!(l.total_cols(), 2);
        assert_eq!(l.rows(n(3)), 2..5);
        assert_eq!(l.rows(n(2)), 2..2);
        assert_eq!(l.cols(n(3)), 2..2);
        assert!(BlockLayout::new(vec![1], vec![1, 2]).is_err());
    }

    #[test]
    fn submatrix_respects_order() {
        let tree = Arc::new(RootedTree::line(3).unwrap());
        let values = DMatrix::from_fn(3, 3, |r, c| (3 * r + c) as f64);
        let t = GraphPartitionedMatrix::new(tree, BlockLayout::uniform(3, 1), values.clone())
            .unwrap();
        let s = t
            .submatrix(&NodeSet::from_ids(&[3, 1]).unwrap(), &NodeSet::from_ids(&[2]).unwrap())
            .unwrap();
        assert_eq!(s, DMatrix::from_column_slice(2, 1, &[values[(2, 1)], values[(0, 1)]]));
        let all = NodeSet::from_ids(&[1, 2, 3]).unwrap();
        assert_eq!(t.submatrix(&all, &all).unwrap(), values);
        assert_eq!(t.block(n(2), n(2)), DMatrix::from_element(1, 1, 4.0));
        assert!(t
            .submatrix(&NodeSet::from_ids(&[4]).unwrap(), &all)
            .is_err());
    }

    #[test]
    fn hankel_blocks() {
        let t = indexed(fixture_tree());
        let h = t.hankel_induced(&NodeSet::from_ids(&[1]).unwrap()).unwrap();
        assert_eq!(h.shape(), (6, 1));
        assert_eq!(h[(0, 0)], 10.0);
        let h = t.hankel_induced(&t.tree().descendants(n(5))).unwrap();
        let expect = t
            .submatrix(
                &NodeSet::from_ids(&[3, 4, 6, 7]).unwrap(),
                &NodeSet::from_ids(&[1, 2, 5]).unwrap(),
            )
            .unwrap();
        assert_eq!(h, expect);
        assert!(matches!(
            t.hankel_induced(&NodeSet::default()),
            Err(TssError::EmptyOrFullSubset)
        ));
        assert!(matches!(
            t.hankel_induced(&NodeSet::from_ids(&[1, 2, 3, 4, 5, 6, 7]).unwrap()),
            Err(TssError::EmptyOrFullSubset)
        ));
    }

    #[test]
    fn unit_hankel_orientation() {
        let tree = fixture_tree();
        let (rows, cols) = unit_hankel_sets(&tree, DirectedEdge::new(n(1), n(5))).unwrap();
        assert_eq!(rows.ids(), vec![2, 3, 4, 5, 6, 7]);
        assert_eq!(cols.ids(), vec![1]);
        let (rows, cols) = unit_hankel_sets(&tree, DirectedEdge::new(n(7), n(5))).unwrap();
        assert_eq!(rows.ids(), vec![1, 2, 5]);
        assert_eq!(cols.ids(), vec![3, 4, 6, 7]);
        assert!(matches!(
            unit_hankel_sets(&tree, DirectedEdge::new(n(1), n(7))),
            Err(TssError::NotATreeEdge { from: 1, to: 7 })
        ));

        let k = tree.node_count();
        let eye = GraphPartitionedMatrix::new(
            tree.clone(),
            BlockLayout::uniform(k, 2),
            DMatrix::identity(2 * k, 2 * k),
        )
        .unwrap();
        for e in tree.directed_edges() {
            assert_eq!(eye.unit_hankel(e).unwrap().amax(), 0.0);
        }
    }

    #[test]
    fn border_edges() {
        let tree = fixture_tree();
        assert_eq!(
            border_edge_count(&tree, &NodeSet::from_ids(&[5, 6]).unwrap()).unwrap(),
            6
        );
        assert_eq!(border_edge_count(&tree, &tree.descendants(n(6))).unwrap(), 1);
        assert_eq!(
            border_edge_count(&tree, &NodeSet::from_ids(&[3]).unwrap()).unwrap(),
            1
        );
        assert_eq!(
            border_edge_count(&tree, &NodeSet::from_ids(&[1, 7]).unwrap()).unwrap(),
            3
        );
    }
}
