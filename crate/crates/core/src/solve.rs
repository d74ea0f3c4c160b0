//! Linear solves through the sparse system in inputs and edge states.
//!
//! Node `j` owns the unknowns `[x_j; g_(i,j) for each neighbour i]` and the
//! equations `[output equation of j; state equation of g_(j,i) for each
//! neighbour i]`. Every off-diagonal block of the resulting matrix therefore
//! sits on a tree edge, and eliminating nodes from the leaves up creates no
//! blocks outside that pattern.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, LU};

use crate::apply::EdgeStates;
use crate::error::{Result, TssError};
use crate::tree::{DirectedEdge, Node, RootedTree};
use crate::tss::TssMatrix;

/// Offsets inside one node's block: the leading input or output segment,
/// then one state segment per neighbour in ascending order.
#[derive(Clone, Debug)]
struct Segments {
    head: usize,
    states: Vec<(Node, Range<usize>)>,
    len: usize,
}

impl Segments {
    fn new(head: usize, states: impl Iterator<Item = (Node, usize)>) -> Self {
        let mut at = head;
        let states = states
            .map(|(k, r)| {
                let range = at..at + r;
                at += r;
                (k, range)
            })
            .collect();
        Segments { head, states, len: at }
    }

    fn state(&self, k: Node) -> Range<usize> {
        self.states
            .iter()
            .find(|(n, _)| *n == k)
            .map(|(_, r)| r.clone())
            .expect("neighbour segment")
    }
}

/// Block-sparse lifted system `Xi theta = beta`.
#[derive(Clone, Debug)]
pub struct LiftedSystem {
    tree: Arc<RootedTree>,
    unknowns: Vec<Segments>,
    equations: Vec<Segments>,
    blocks: BTreeMap<(Node, Node), DMatrix<f64>>,
    rhs: Vec<DVector<f64>>,
}

impl LiftedSystem {
    pub fn tree(&self) -> &Arc<RootedTree> {
        &self.tree
    }

    /// Block `(row node, column node)` if structurally present.
    pub fn block(&self, row: Node, col: Node) -> Option<&DMatrix<f64>> {
        self.blocks.get(&(row, col))
    }

    /// Structurally present blocks.
    pub fn pattern(&self) -> BTreeSet<(Node, Node)> {
        self.blocks.keys().copied().collect()
    }

    pub fn unknown_count(&self) -> usize {
        self.unknowns.iter().map(|s| s.len).sum()
    }

    pub fn equation_count(&self) -> usize {
        self.equations.iter().map(|s| s.len).sum()
    }

    pub fn rhs(&self, k: Node) -> &DVector<f64> {
        &self.rhs[k.index()]
    }

    fn offsets(segs: &[Segments]) -> Vec<usize> {
        segs.iter()
            .scan(0, |acc, s| {
                let at = *acc;
                *acc += s.len;
                Some(at)
            })
            .collect()
    }

    /// Dense `Xi` and `beta`, node blocks in ascending order.
    pub fn to_dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let ro = Self::offsets(&self.equations);
        let co = Self::offsets(&self.unknowns);
        let mut xi = DMatrix::zeros(self.equation_count(), self.unknown_count());
        for (&(a, b), blk) in &self.blocks {
            xi.view_mut((ro[a.index()], co[b.index()]), blk.shape())
                .copy_from(blk);
        }
        let mut beta = DVector::zeros(self.equation_count());
        for k in self.tree.nodes() {
            beta.rows_mut(ro[k.index()], self.rhs[k.index()].len())
                .copy_from(&self.rhs[k.index()]);
        }
        (xi, beta)
    }

    /// Stacks `x` and edge states into the unknown vector `theta`.
    pub fn pack(&self, x: &DVector<f64>, states: &EdgeStates) -> DVector<f64> {
        let mut theta = DVector::zeros(self.unknown_count());
        let offsets = Self::offsets(&self.unknowns);
        let mut x_at = 0;
        for k in self.tree.nodes() {
            let seg = &self.unknowns[k.index()];
            let base = offsets[k.index()];
            theta
                .rows_mut(base, seg.head)
                .copy_from(&x.rows(x_at, seg.head));
            x_at += seg.head;
            for (i, r) in &seg.states {
                if let Some(g) = states.get(DirectedEdge::new(*i, k)) {
                    theta.rows_mut(base + r.start, r.len()).copy_from(g);
                }
            }
        }
        theta
    }

    fn unpack(&self, theta: &[DVector<f64>]) -> (DVector<f64>, EdgeStates) {
        let total: usize = self.unknowns.iter().map(|s| s.head).sum();
        let mut x = DVector::zeros(total);
        let mut states = EdgeStates::new();
        let mut at = 0;
        for k in self.tree.nodes() {
            let seg = &self.unknowns[k.index()];
            let th = &theta[k.index()];
            x.rows_mut(at, seg.head).copy_from(&th.rows(0, seg.head));
            at += seg.head;
            for (i, r) in &seg.states {
                states.insert(
                    DirectedEdge::new(*i, k),
                    th.rows(r.start, r.len()).into_owned(),
                );
            }
        }
        (x, states)
    }
}

/// Builds the lifted system for `T x = b`.
pub fn assemble_lifted(t: &TssMatrix, b: &DVector<f64>) -> Result<LiftedSystem> {
    let layout = t.layout();
    if layout.total_rows() != layout.total_cols() {
        return Err(TssError::NotSquare {
            rows: layout.total_rows(),
            cols: layout.total_cols(),
        });
    }
    if b.len() != layout.total_rows() {
        return Err(TssError::LengthMismatch {
            expected: layout.total_rows(),
            got: b.len(),
        });
    }
    let tree = t.tree().clone();
    let profile = t.profile();
    let unknowns: Vec<Segments> = tree
        .nodes()
        .map(|j| {
            let nb = tree.neighbors(j).iter().map(|&i| (i, profile.get(i, j)));
            Segments::new(layout.n(j), nb)
        })
        .collect();
    let equations: Vec<Segments> = tree
        .nodes()
        .map(|j| {
            let nb = tree.neighbors(j).iter().map(|&i| (i, profile.get(j, i)));
            Segments::new(layout.m(j), nb)
        })
        .collect();

    let mut blocks = BTreeMap::new();
    let mut rhs = Vec::with_capacity(tree.node_count());
    for j in tree.nodes() {
        let eq = &equations[j.index()];
        let un = &unknowns[j.index()];
        let mut diag = DMatrix::zeros(eq.len, un.len);
        // D^j x_j + sum_i Out^j_i g_(i,j) = b_j
        diag.view_mut((0, 0), (eq.head, un.head)).copy_from(t.d(j));
        for (i, cols) in &un.states {
            diag.view_mut((0, cols.start), (eq.head, cols.len()))
                .copy_from(t.out(j, *i));
        }
        // g_(j,i) - Inp^j_i x_j - sum_w Trans^j_{i,w} g_(w,j) = 0
        for (i, rows) in &eq.states {
            diag.view_mut((rows.start, 0), (rows.len(), un.head))
                .copy_from(&-t.inp(j, *i));
            for (w, cols) in &un.states {
                if w != i {
                    diag.view_mut((rows.start, cols.start), (rows.len(), cols.len()))
                        .copy_from(&-t.trans(j, *i, *w));
                }
            }
            if rows.is_empty() {
                continue;
            }
            let mut sel = DMatrix::zeros(eq.len, unknowns[i.index()].len);
            let target = unknowns[i.index()].state(j);
            sel.view_mut((rows.start, target.start), (rows.len(), target.len()))
                .fill_with_identity();
            blocks.insert((j, *i), sel);
        }
        blocks.insert((j, j), diag);

        let r = layout.rows(j);
        let mut beta = DVector::zeros(eq.len);
        beta.rows_mut(0, eq.head).copy_from(&b.rows(r.start, r.len()));
        rhs.push(beta);
    }
    Ok(LiftedSystem {
        tree,
        unknowns,
        equations,
        blocks,
        rhs,
    })
}

/// Result of eliminating a lifted system.
#[derive(Clone, Debug)]
pub struct LiftedSolution {
    pub x: DVector<f64>,
    pub states: EdgeStates,
    /// Blocks written during elimination that were absent from the pattern.
    pub fill: Vec<(Node, Node)>,
    /// Scalar multiply-adds spent in elimination and back-substitution.
    pub opcount: usize,
}

fn factor_pivot(node: Node, a: &DMatrix<f64>) -> Result<LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    if a.nrows() != a.ncols() {
        return Err(TssError::NonSquarePivotBlock {
            node: node.id(),
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let lu = a.clone().lu();
    if a.nrows() > 0 && !pivots_ok(&lu.u(), a) {
        return Err(TssError::SingularPivotBlock { node: node.id() });
    }
    Ok(lu)
}

fn pivots_ok(u: &DMatrix<f64>, a: &DMatrix<f64>) -> bool {
    let cut = a.amax() * a.nrows() as f64 * f64::EPSILON;
    a.amax() > 0.0 && u.diagonal().iter().all(|d| d.abs() > cut)
}

/// Block Gaussian elimination from the leaves to the root, followed by
/// back-substitution from the root. Pivoting stays inside each node's block.
pub fn solve_lifted(sys: &LiftedSystem) -> Result<LiftedSolution> {
    solve_lifted_in_order(sys, &sys.tree.leaves_to_root())
}

/// Block elimination in an arbitrary node order; fill outside the initial
/// pattern is recorded rather than prevented.
pub fn solve_lifted_in_order(sys: &LiftedSystem, order: &[Node]) -> Result<LiftedSolution> {
    let count = sys.tree.node_count();
    let mut seen = vec![false; count];
    for &k in order {
        sys.tree.check(k)?;
        if std::mem::replace(&mut seen[k.index()], true) {
            return Err(TssError::DuplicateNode(k.id()));
        }
    }
    if order.len() != count {
        return Err(TssError::LengthMismatch {
            expected: count,
            got: order.len(),
        });
    }

    let mut blocks = sys.blocks.clone();
    let mut rhs = sys.rhs.clone();
    let mut eliminated = vec![false; count];
    let mut fill = Vec::new();
    let mut ops = 0usize;
    let mut factors = Vec::with_capacity(count);

    for &v in order {
        let a = blocks
            .get(&(v, v))
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(sys.equations[v.index()].len, sys.unknowns[v.index()].len));
        let lu = factor_pivot(v, &a)?;
        let p = a.nrows();
        ops += p * p * p / 3;
        eliminated[v.index()] = true;

        let live = |(r, c): &(Node, Node)| !eliminated[r.index()] && !eliminated[c.index()];
        let rows_a: Vec<Node> = blocks.keys().filter(|&&(r, c)| c == v && live(&(r, r))).map(|&(r, _)| r).collect();
        let cols_b: Vec<Node> = blocks.keys().filter(|&&(r, c)| r == v && live(&(c, c))).map(|&(_, c)| c).collect();

        let solve = |m: &DMatrix<f64>| lu.solve(m).expect("pivot block checked nonsingular");
        let r_v = lu.solve(&rhs[v.index()]).expect("pivot block checked nonsingular");
        ops += p * p;
        let s_b: Vec<DMatrix<f64>> = cols_b
            .iter()
            .map(|&b| {
                let m = &blocks[&(v, b)];
                ops += p * p * m.ncols();
                solve(m)
            })
            .collect();
        for &a_node in &rows_a {
            let l = blocks[&(a_node, v)].clone();
            rhs[a_node.index()] -= &l * &r_v;
            ops += l.nrows() * l.ncols();
            for (&b, s) in cols_b.iter().zip(&s_b) {
                let update = &l * s;
                ops += l.nrows() * l.ncols() * s.ncols();
                match blocks.get_mut(&(a_node, b)) {
                    Some(blk) => *blk -= update,
                    None => {
                        fill.push((a_node, b));
                        blocks.insert((a_node, b), -update);
                    }
                }
            }
        }
        factors.push((v, lu, cols_b));
    }

    let mut theta: Vec<DVector<f64>> = sys.unknowns.iter().map(|s| DVector::zeros(s.len)).collect();
    for (v, lu, cols_b) in factors.iter().rev() {
        let mut r = rhs[v.index()].clone();
        for b in cols_b {
            let m = &blocks[&(*v, *b)];
            r -= m * &theta[b.index()];
            ops += m.nrows() * m.ncols();
        }
        theta[v.index()] = lu.solve(&r).expect("pivot block checked nonsingular");
        ops += r.len() * r.len();
    }
    let (x, states) = sys.unpack(&theta);
    Ok(LiftedSolution {
        x,
        states,
        fill,
        opcount: ops,
    })
}

/// Dense LU with partial pivoting.
pub fn dense_solve(t: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if t.nrows() != t.ncols() {
        return Err(TssError::NotSquare {
            rows: t.nrows(),
            cols: t.ncols(),
        });
    }
    if b.len() != t.nrows() {
        return Err(TssError::LengthMismatch {
            expected: t.nrows(),
            got: b.len(),
        });
    }
    if t.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(TssError::NonFiniteInput);
    }
    if t.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    checked_lu(t)?.solve(b).ok_or(TssError::SingularMatrix)
}

/// LU of a nonempty square matrix, rejecting numerically zero pivots.
pub(crate) fn checked_lu(t: &DMatrix<f64>) -> Result<LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let lu = t.clone().lu();
    if !pivots_ok(&lu.u(), t) {
        return Err(TssError::SingularMatrix);
    }
    Ok(lu)
}

/// Which path produced a solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Lifted,
    DenseFallback,
}

/// Solves `T x = b`, preferring the lifted tree solve.
pub fn solve(t: &TssMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    solve_with_method(t, b, true).map(|(x, _)| x)
}

/// Like [`solve`]; with `fallback == false` pivot-block failures are returned
/// instead of retried densely.
pub fn solve_with_method(t: &TssMatrix, b: &DVector<f64>, fallback: bool) -> Result<(DVector<f64>, SolveMethod)> {
    let sys = assemble_lifted(t, b)?;
    match solve_lifted(&sys) {
        Ok(sol) => Ok((sol.x, SolveMethod::Lifted)),
        Err(TssError::SingularPivotBlock { .. } | TssError::NonSquarePivotBlock { .. }) if fallback => {
            Ok((dense_solve(t.to_dense().values(), b)?, SolveMethod::DenseFallback))
        }
        Err(e) => Err(e),
    }
}
