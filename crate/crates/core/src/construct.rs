//! Dense to TSS conversion.
//!
//! The upsweep visits child-to-parent edges from the deepest level up and
//! produces the `B`, `C` and `U` generators; the downsweep visits
//! parent-to-child edges from the top down and produces `P`, `Q`, `W` and `V`.
//! Each step compresses a thin matrix `F_e` whose column span equals that of
//! the unit Hankel block `H_e`; `F_e` is assembled from the left factors of
//! previously compressed edges plus one block column of `T`, so no Hankel
//! block is ever formed explicitly.
//!
//! Each compression is stored as `H_e = X_e Y_e` with `Y_e` having orthonormal
//! rows, so `F_e` has the same singular values as `H_e`. Truncation is at
//! `tol * max(sigma_max(F_e), |T|_F)`, the same rule [`hankel_rank_profile`]
//! applies to the Hankel blocks directly.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::blockmat::{gather, unit_hankel_sets, BlockLayout, GraphPartitionedMatrix};
use crate::error::Result;
use crate::lowrank::{numerical_rank_scaled, rank_reveal_scaled};
use crate::tree::{DirectedEdge, Node, NodeSet, RootedTree};
use crate::tss::{RankProfile, SpinnerTable, TssMatrix};

/// A matrix whose rows (or columns) are grouped by node.
#[derive(Clone, Debug)]
struct NodeIndexed {
    nodes: NodeSet,
    mat: DMatrix<f64>,
    // start offset of each node's block, indexed by node index
    start: Vec<Option<usize>>,
}

impl NodeIndexed {
    fn new(nodes: NodeSet, sizes: &[usize], mat: DMatrix<f64>) -> Self {
        let mut start = vec![None; sizes.len()];
        let mut at = 0;
        for k in nodes.iter() {
            start[k.index()] = Some(at);
            at += sizes[k.index()];
        }
        NodeIndexed { nodes, mat, start }
    }

    fn indices(&self, subset: &NodeSet, sizes: &[usize]) -> Vec<usize> {
        subset
            .iter()
            .flat_map(|k| {
                let s = self.start[k.index()].expect("node present in factor");
                s..s + sizes[k.index()]
            })
            .collect()
    }

    /// Rows belonging to `subset`, in its order.
    fn rows(&self, subset: &NodeSet, sizes: &[usize]) -> DMatrix<f64> {
        let idx = self.indices(subset, sizes);
        let cols: Vec<usize> = (0..self.mat.ncols()).collect();
        gather(&self.mat, &idx, &cols)
    }

    /// Columns belonging to `subset`, in its order.
    fn cols(&self, subset: &NodeSet, sizes: &[usize]) -> DMatrix<f64> {
        let idx = self.indices(subset, sizes);
        let rows: Vec<usize> = (0..self.mat.nrows()).collect();
        gather(&self.mat, &rows, &idx)
    }
}

/// Factors recorded for one directed edge during construction.
#[derive(Clone, Debug)]
pub struct EdgeFactors {
    /// Row nodes of the unit Hankel block, ascending.
    pub row_nodes: NodeSet,
    /// Column nodes of the unit Hankel block, ascending.
    pub col_nodes: NodeSet,
    /// The matrix that was compressed.
    pub f: DMatrix<f64>,
    /// Block-diagonal expansion with `F * G = H`, columns in ascending node order.
    pub g: DMatrix<f64>,
    /// Left factor, columns scaled by the retained singular values.
    pub x: DMatrix<f64>,
    /// Right factor with orthonormal rows and `X * Y ~ H`, columns in
    /// ascending node order.
    pub y: DMatrix<f64>,
}

/// Per-edge intermediate factors of a construction run.
#[derive(Clone, Debug, Default)]
pub struct SweepTrace {
    pub edges: BTreeMap<DirectedEdge, EdgeFactors>,
}

struct Sweep<'a> {
    tree: &'a RootedTree,
    layout: &'a BlockLayout,
    t: &'a GraphPartitionedMatrix,
    tol: f64,
    scale: f64,
    x: BTreeMap<DirectedEdge, NodeIndexed>,
    y: BTreeMap<DirectedEdge, NodeIndexed>,
    ranks: BTreeMap<DirectedEdge, usize>,
    spinners: Vec<SpinnerTable>,
    trace: SweepTrace,
}

impl Sweep<'_> {
    /// Compresses `F = [blocks | T<rows, own>]` for `edge` and returns the
    /// column groups of `Z`, the trailing one belonging to `own`.
    ///
    /// `blocks` lists `(edge', column nodes of H_edge' to reuse)`; the left
    /// factor of each is restricted to `rows`.
    fn compress(
        &mut self,
        edge: DirectedEdge,
        rows: &NodeSet,
        reused: &[DirectedEdge],
        own: Node,
    ) -> Result<Vec<DMatrix<f64>>> {
        let m = self.layout.output_sizes();
        let n = self.layout.input_sizes();
        let mut parts: Vec<DMatrix<f64>> = reused
            .iter()
            .map(|e| self.x[e].rows(rows, m))
            .collect();
        let own_set = NodeSet::canonical(vec![own]);
        parts.push(self.t.submatrix(rows, &own_set)?);

        let widths: Vec<usize> = parts.iter().map(|p| p.ncols()).collect();
        let total: usize = widths.iter().sum();
        let row_count = self.layout.row_indices(rows).len();
        let mut f = DMatrix::zeros(row_count, total);
        let mut at = 0;
        for p in &parts {
            f.view_mut((0, at), (row_count, p.ncols())).copy_from(p);
            at += p.ncols();
        }

        let mut lr = rank_reveal_scaled(&f, self.tol, self.scale)?;
        let rank = lr.rank;
        // Move the singular values from the right factor to the left one.
        for (k, &s) in lr.sigma.iter().enumerate() {
            lr.left.column_mut(k).scale_mut(s);
            lr.right.row_mut(k).unscale_mut(s);
        }

        // G = blockdiag(Y_reused..., I) with columns in ascending node order.
        let (_, col_nodes) = unit_hankel_sets(self.tree, edge)?;
        let col_count = self.layout.col_indices(&col_nodes).len();
        let mut g = DMatrix::zeros(total, col_count);
        let col_pos = NodeIndexed::new(col_nodes.clone(), n, DMatrix::zeros(0, 0));
        let mut row_at = 0;
        for (e, &w) in reused.iter().zip(&widths) {
            let y = &self.y[e];
            for c in y.nodes.iter().filter(|&c| col_nodes.contains(c)) {
                let one = NodeSet::canonical(vec![c]);
                let dst = col_pos.start[c.index()].expect("column node present");
                g.view_mut((row_at, dst), (w, n[c.index()]))
                    .copy_from(&y.cols(&one, n));
            }
            row_at += w;
        }
        let dst = col_pos.start[own.index()].expect("own node is a column node");
        g.view_mut((row_at, dst), (n[own.index()], n[own.index()]))
            .fill_with_identity();

        let y = &lr.right * &g;
        let mut groups = Vec::with_capacity(widths.len());
        let mut at = 0;
        for &w in &widths {
            groups.push(lr.right.columns(at, w).into_owned());
            at += w;
        }

        self.ranks.insert(edge, rank);
        self.x
            .insert(edge, NodeIndexed::new(rows.clone(), m, lr.left.clone()));
        self.y
            .insert(edge, NodeIndexed::new(col_nodes.clone(), n, y.clone()));
        self.trace.edges.insert(
            edge,
            EdgeFactors {
                row_nodes: rows.clone(),
                col_nodes,
                f,
                g,
                x: lr.left,
                y,
            },
        );
        Ok(groups)
    }

    fn left_rows_at(&self, edge: DirectedEdge, node: Node) -> DMatrix<f64> {
        self.x[&edge].rows(
            &NodeSet::canonical(vec![node]),
            self.layout.output_sizes(),
        )
    }

    fn upsweep(&mut self) -> Result<()> {
        let tree = self.tree;
        for level in (1..=tree.depth()).rev() {
            for &i in tree.level_nodes(level) {
                let j = tree.parent(i).expect("level >= 1");
                let children = tree.children(i);
                let reused: Vec<_> = children.iter().map(|&w| DirectedEdge::new(w, i)).collect();
                let edge = DirectedEdge::new(i, j);
                let rows = tree.non_descendants(i);
                let mut groups = self.compress(edge, &rows, &reused, i)?;

                let b = groups.pop().expect("own column group");
                let s = &mut self.spinners[i.index()];
                s.inp.insert(j, b);
                for (&w, u) in children.iter().zip(groups) {
                    s.trans.insert((j, w), u);
                }
                let c = self.left_rows_at(edge, j);
                self.spinners[j.index()].out.insert(i, c);
            }
        }
        Ok(())
    }

    fn downsweep(&mut self) -> Result<()> {
        let tree = self.tree;
        for level in 1..=tree.depth() {
            for &i in tree.level_nodes(level) {
                let j = tree.parent(i).expect("level >= 1");
                let grandparent = tree.parent(j);
                let siblings = tree.siblings(i);
                let mut reused = Vec::with_capacity(siblings.len() + 1);
                if let Some(k) = grandparent {
                    reused.push(DirectedEdge::new(k, j));
                }
                reused.extend(siblings.iter().map(|&v| DirectedEdge::new(v, j)));
                let edge = DirectedEdge::new(j, i);
                let rows = tree.descendants(i);
                let mut groups = self.compress(edge, &rows, &reused, j)?.into_iter();

                let s = &mut self.spinners[j.index()];
                if let Some(k) = grandparent {
                    s.trans.insert((i, k), groups.next().expect("parent group"));
                }
                for &v in &siblings {
                    s.trans.insert((i, v), groups.next().expect("sibling group"));
                }
                s.inp.insert(i, groups.next().expect("own column group"));
                let q = self.left_rows_at(edge, i);
                self.spinners[i.index()].out.insert(j, q);
            }
        }
        Ok(())
    }
}

/// Converts a dense graph-partitioned matrix into a minimal TSS
/// representation, truncating each compression at relative tolerance `tol`.
pub fn construct_tss(t: &GraphPartitionedMatrix, tol: f64) -> Result<TssMatrix> {
    construct_tss_traced(t, tol).map(|(tss, _)| tss)
}

/// Like [`construct_tss`], also returning every intermediate `F`, `G`, `X`, `Y`.
pub fn construct_tss_traced(
    t: &GraphPartitionedMatrix,
    tol: f64,
) -> Result<(TssMatrix, SweepTrace)> {
    if t.values().iter().any(|v| !v.is_finite()) {
        return Err(crate::error::TssError::NonFiniteInput);
    }
    let tree = t.tree();
    let layout = t.layout();
    let spinners = tree
        .nodes()
        .map(|k| SpinnerTable::new(t.block(k, k)))
        .collect();
    let mut sweep = Sweep {
        tree,
        layout,
        t,
        tol,
        scale: t.values().norm(),
        x: BTreeMap::new(),
        y: BTreeMap::new(),
        ranks: BTreeMap::new(),
        spinners,
        trace: SweepTrace::default(),
    };
    sweep.upsweep()?;
    sweep.downsweep()?;

    let profile = RankProfile::new(tree, sweep.ranks)?;
    let tss = TssMatrix::new(tree.clone(), layout.clone(), profile, sweep.spinners)?;
    Ok((tss, sweep.trace))
}

/// Ranks of all unit Hankel blocks, computed directly. Singular values at or
/// below `tol * max(sigma_max(H_e), |T|_F)` are treated as zero.
pub fn hankel_rank_profile(t: &GraphPartitionedMatrix, tol: f64) -> Result<RankProfile> {
    let tree = t.tree();
    let scale = t.values().norm();
    let mut ranks = BTreeMap::new();
    for e in tree.directed_edges() {
        ranks.insert(e, numerical_rank_scaled(&t.unit_hankel(e)?, tol, scale)?);
    }
    RankProfile::new(tree, ranks)
}
