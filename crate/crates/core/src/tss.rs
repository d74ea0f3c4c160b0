//! Tree semi-separable representations.
//!
//! Every node `k` owns a spinner table of generators:
//!
//! * `D`: `m_k x n_k`, the node's own input-to-output map;
//! * `Inp[j]`: `rho(k,j) x n_k`, input of `k` onto the edge towards neighbour `j`;
//! * `Out[i]`: `m_k x rho(i,k)`, state arriving from neighbour `i` to the output;
//! * `Trans[i,j]`: `rho(k,i) x rho(j,k)`, state arriving from `j` forwarded towards `i`.
//!
//! The off-diagonal block `T<i,j>` is the product of generators along the
//! unique path from `j` to `i`: `Out^i ... Trans ... Inp^j`.
//!
//! Once a root is fixed the generators also go by their rooted names: for a
//! node `k` with parent `p` and children `c`, `B = Inp[p]`, `P_c = Inp[c]`,
//! `Q = Out[p]`, `C_c = Out[c]`, `U_c = Trans[p,c]`, `W_c = Trans[c,p]` and
//! `V_{c,c'} = Trans[c,c']`.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::blockmat::{BlockLayout, GraphPartitionedMatrix};
use crate::error::{Result, TssError};
use crate::tree::{DirectedEdge, Node, RootedTree};

/// State dimension for both orientations of every tree edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankProfile {
    ranks: BTreeMap<DirectedEdge, usize>,
}

impl RankProfile {
    /// Requires exactly the directed edges of `tree`.
    pub fn new(tree: &RootedTree, ranks: BTreeMap<DirectedEdge, usize>) -> Result<Self> {
        for e in tree.directed_edges() {
            if !ranks.contains_key(&e) {
                return Err(TssError::LayoutMismatch(format!("rank profile misses edge {e}")));
            }
        }
        if let Some(e) = ranks.keys().find(|e| !tree.is_edge(e.from, e.to)) {
            return Err(TssError::NotATreeEdge {
                from: e.from.id(),
                to: e.to.id(),
            });
        }
        Ok(RankProfile { ranks })
    }

    pub fn uniform(tree: &RootedTree, rank: usize) -> Self {
        RankProfile {
            ranks: tree.directed_edges().into_iter().map(|e| (e, rank)).collect(),
        }
    }

    pub fn zeros(tree: &RootedTree) -> Self {
        RankProfile::uniform(tree, 0)
    }

    /// Rank of `edge`; 0 for edges outside the tree.
    pub fn rank(&self, edge: DirectedEdge) -> usize {
        self.ranks.get(&edge).copied().unwrap_or(0)
    }

    /// `rho(from, to)`
    pub fn get(&self, from: Node, to: Node) -> usize {
        self.rank(DirectedEdge::new(from, to))
    }

    pub fn set(&mut self, edge: DirectedEdge, rank: usize) {
        if let Some(r) = self.ranks.get_mut(&edge) {
            *r = rank;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (DirectedEdge, usize)> + '_ {
        self.ranks.iter().map(|(&e, &r)| (e, r))
    }

    pub fn max(&self) -> usize {
        self.ranks.values().copied().max().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.ranks.values().sum()
    }

    /// Entrywise `self <= other`.
    pub fn bounded_by(&self, other: &RankProfile) -> bool {
        self.iter().all(|(e, r)| r <= other.rank(e))
    }

    /// Entrywise sum.
    pub fn plus(&self, other: &RankProfile) -> RankProfile {
        RankProfile {
            ranks: self.iter().map(|(e, r)| (e, r + other.rank(e))).collect(),
        }
    }

    /// Edges where the two profiles differ, as `(edge, self, other)`.
    pub fn differences(&self, other: &RankProfile) -> Vec<(DirectedEdge, usize, usize)> {
        self.iter()
            .filter(|&(e, r)| r != other.rank(e))
            .map(|(e, r)| (e, r, other.rank(e)))
            .collect()
    }
}

/// Generators owned by one node.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinnerTable {
    pub d: DMatrix<f64>,
    /// Keyed by the neighbour the edge leads to.
    pub inp: BTreeMap<Node, DMatrix<f64>>,
    /// Keyed by the neighbour the edge comes from.
    pub out: BTreeMap<Node, DMatrix<f64>>,
    /// Keyed by `(to, from)` neighbours.
    pub trans: BTreeMap<(Node, Node), DMatrix<f64>>,
}

impl SpinnerTable {
    pub fn new(d: DMatrix<f64>) -> Self {
        SpinnerTable {
            d,
            inp: BTreeMap::new(),
            out: BTreeMap::new(),
            trans: BTreeMap::new(),
        }
    }
}

/// Expected generator shapes of node `k`, named for error reporting.
#[derive(Debug)]
enum Slot {
    D,
    Inp(Node),
    Out(Node),
    Trans(Node, Node),
}

impl Slot {
    fn name(&self) -> String {
        match self {
            Slot::D => "D".to_string(),
            Slot::Inp(j) => format!("Inp[{j}]"),
            Slot::Out(i) => format!("Out[{i}]"),
            Slot::Trans(i, j) => format!("Trans[{i},{j}]"),
        }
    }
}

fn slots(tree: &RootedTree, layout: &BlockLayout, profile: &RankProfile, k: Node) -> Vec<(Slot, (usize, usize))> {
    let mut out = vec![(Slot::D, (layout.m(k), layout.n(k)))];
    let nbrs = tree.neighbors(k);
    for &j in nbrs {
        out.push((Slot::Inp(j), (profile.get(k, j), layout.n(k))));
        out.push((Slot::Out(j), (layout.m(k), profile.get(j, k))));
    }
    for &i in nbrs {
        for &j in nbrs {
            if i != j {
                out.push((Slot::Trans(i, j), (profile.get(k, i), profile.get(j, k))));
            }
        }
    }
    out
}

/// A tree semi-separable matrix.
#[derive(Clone, Debug)]
pub struct TssMatrix {
    tree: Arc<RootedTree>,
    layout: BlockLayout,
    profile: RankProfile,
    spinners: Vec<SpinnerTable>,
}

impl TssMatrix {
    /// Assembles and validates a representation.
    pub fn new(
        tree: Arc<RootedTree>,
        layout: BlockLayout,
        profile: RankProfile,
        spinners: Vec<SpinnerTable>,
    ) -> Result<Self> {
        let t = TssMatrix {
            tree,
            layout,
            profile,
            spinners,
        };
        t.validate()?;
        Ok(t)
    }

    /// Checks that every generator is present with the shape implied by the
    /// layout and rank profile, and that no stray generators exist.
    pub fn validate(&self) -> Result<()> {
        let count = self.tree.node_count();
        if self.layout.node_count() != count || self.spinners.len() != count {
            return Err(TssError::LayoutMismatch(format!(
                "tree has {count} nodes, layout {}, spinner tables {}",
                self.layout.node_count(),
                self.spinners.len()
            )));
        }
        // Re-check the profile against this tree.
        RankProfile::new(&self.tree, self.profile.ranks.clone())?;
        for k in self.tree.nodes() {
            let s = &self.spinners[k.index()];
            let expected = slots(&self.tree, &self.layout, &self.profile, k);
            for (slot, shape) in &expected {
                let got = match slot {
                    Slot::D => Some(&s.d),
                    Slot::Inp(j) => s.inp.get(j),
                    Slot::Out(i) => s.out.get(i),
                    Slot::Trans(i, j) => s.trans.get(&(*i, *j)),
                };
                match got {
                    None => {
                        return Err(TssError::MissingGenerator {
                            node: k.id(),
                            generator: slot.name(),
                        })
                    }
                    Some(g) if g.shape() != *shape => {
                        return Err(TssError::ShapeMismatch {
                            node: k.id(),
                            generator: slot.name(),
                            expected: *shape,
                            got: g.shape(),
                        })
                    }
                    Some(g) if g.iter().any(|v| !v.is_finite()) => {
                        return Err(TssError::NonFiniteInput)
                    }
                    Some(_) => {}
                }
            }
            let nbrs = self.tree.neighbors(k);
            let stray = s.inp.keys().chain(s.out.keys()).find(|j| !nbrs.contains(j));
            let stray_trans = s
                .trans
                .keys()
                .find(|(i, j)| i == j || !nbrs.contains(i) || !nbrs.contains(j));
            if let Some(j) = stray {
                return Err(TssError::LayoutMismatch(format!(
                    "node {k} has a generator for non-neighbour {j}"
                )));
            }
            if let Some((i, j)) = stray_trans {
                return Err(TssError::LayoutMismatch(format!(
                    "node {k} has a stray Trans[{i},{j}]"
                )));
            }
        }
        Ok(())
    }

    /// Random generators with standard normal entries, deterministic per seed.
    pub fn random(
        tree: Arc<RootedTree>,
        layout: BlockLayout,
        profile: RankProfile,
        seed: u64,
    ) -> Result<Self> {
        if layout.node_count() != tree.node_count() {
            return Err(TssError::LayoutMismatch(format!(
                "layout has {} nodes, tree has {}",
                layout.node_count(),
                tree.node_count()
            )));
        }
        RankProfile::new(&tree, profile.ranks.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |(r, c): (usize, usize)| {
            DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng))
        };
        let mut spinners = Vec::with_capacity(tree.node_count());
        for k in tree.nodes() {
            let mut s = SpinnerTable::new(DMatrix::zeros(0, 0));
            for (slot, shape) in slots(&tree, &layout, &profile, k) {
                let g = normal(shape);
                match slot {
                    Slot::D => s.d = g,
                    Slot::Inp(j) => {
                        s.inp.insert(j, g);
                    }
                    Slot::Out(i) => {
                        s.out.insert(i, g);
                    }
                    Slot::Trans(i, j) => {
                        s.trans.insert((i, j), g);
                    }
                }
            }
            spinners.push(s);
        }
        TssMatrix::new(tree, layout, profile, spinners)
    }

    /// All ranks zero; `T` is block diagonal with the given blocks.
    pub fn block_diagonal(tree: Arc<RootedTree>, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let layout = BlockLayout::new(
            blocks.iter().map(|b| b.nrows()).collect(),
            blocks.iter().map(|b| b.ncols()).collect(),
        )?;
        let profile = RankProfile::zeros(&tree);
        let spinners = tree
            .nodes()
            .zip(blocks)
            .map(|(k, d)| {
                let mut s = SpinnerTable::new(d);
                for (slot, shape) in slots(&tree, &layout, &profile, k) {
                    let z = DMatrix::zeros(shape.0, shape.1);
                    match slot {
                        Slot::D => {}
                        Slot::Inp(j) => {
                            s.inp.insert(j, z);
                        }
                        Slot::Out(i) => {
                            s.out.insert(i, z);
                        }
                        Slot::Trans(i, j) => {
                            s.trans.insert((i, j), z);
                        }
                    }
                }
                s
            })
            .collect();
        TssMatrix::new(tree, layout, profile, spinners)
    }

    /// Identity with square blocks of the given sizes.
    pub fn identity(tree: Arc<RootedTree>, sizes: &[usize]) -> Result<Self> {
        let blocks = sizes.iter().map(|&s| DMatrix::identity(s, s)).collect();
        TssMatrix::block_diagonal(tree, blocks)
    }

    pub fn tree(&self) -> &Arc<RootedTree> {
        &self.tree
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn profile(&self) -> &RankProfile {
        &self.profile
    }

    pub fn spinner(&self, k: Node) -> &SpinnerTable {
        &self.spinners[k.index()]
    }

    pub fn spinners(&self) -> &[SpinnerTable] {
        &self.spinners
    }

    /// Mutable access; the caller is responsible for re-validating.
    pub fn spinner_mut(&mut self, k: Node) -> &mut SpinnerTable {
        &mut self.spinners[k.index()]
    }

    pub fn d(&self, k: Node) -> &DMatrix<f64> {
        &self.spinners[k.index()].d
    }

    /// `Inp^k_j`
    pub fn inp(&self, k: Node, j: Node) -> &DMatrix<f64> {
        &self.spinners[k.index()].inp[&j]
    }

    /// `Out^k_i`
    pub fn out(&self, k: Node, i: Node) -> &DMatrix<f64> {
        &self.spinners[k.index()].out[&i]
    }

    /// `Trans^k_{i,j}`: state from `j` through `k` towards `i`.
    pub fn trans(&self, k: Node, i: Node, j: Node) -> &DMatrix<f64> {
        &self.spinners[k.index()].trans[&(i, j)]
    }

    fn parent_of(&self, k: Node) -> Node {
        self.tree.parent(k).expect("rooted name needs a parent")
    }

    /// `B^k`: input of `k` towards its parent.
    pub fn b(&self, k: Node) -> &DMatrix<f64> {
        self.inp(k, self.parent_of(k))
    }

    /// `P^k_c`: input of `k` towards child `c`.
    pub fn p(&self, k: Node, c: Node) -> &DMatrix<f64> {
        self.inp(k, c)
    }

    /// `C^k_c`: output of `k` from child `c`.
    pub fn c(&self, k: Node, c: Node) -> &DMatrix<f64> {
        self.out(k, c)
    }

    /// `Q^k`: output of `k` from its parent.
    pub fn q(&self, k: Node) -> &DMatrix<f64> {
        self.out(k, self.parent_of(k))
    }

    /// `U^k_{parent,c}`: child state forwarded upwards.
    pub fn u(&self, k: Node, c: Node) -> &DMatrix<f64> {
        self.trans(k, self.parent_of(k), c)
    }

    /// `W^k_{c,parent}`: parent state forwarded down to child `c`.
    pub fn w(&self, k: Node, c: Node) -> &DMatrix<f64> {
        self.trans(k, c, self.parent_of(k))
    }

    /// `V^k_{to,from}` between two children of `k`.
    pub fn v(&self, k: Node, to: Node, from: Node) -> &DMatrix<f64> {
        self.trans(k, to, from)
    }

    /// `T<i, j>` evaluated as the generator product along the path `j -> i`.
    pub fn block_entry(&self, i: Node, j: Node) -> Result<DMatrix<f64>> {
        self.tree.check(i)?;
        self.tree.check(j)?;
        if i == j {
            return Ok(self.d(i).clone());
        }
        let path = self.tree.path_between(j, i)?;
        let mut state = self.inp(j, path[1]).clone();
        for w in path.windows(3) {
            state = self.trans(w[1], w[2], w[0]) * state;
        }
        Ok(self.out(i, path[path.len() - 2]) * state)
    }

    /// Dense reconstruction. Propagates partial products outwards from every
    /// source node; the multiplication order matches [`Self::block_entry`].
    pub fn to_dense(&self) -> GraphPartitionedMatrix {
        let layout = &self.layout;
        let mut values = DMatrix::zeros(layout.total_rows(), layout.total_cols());
        for j in self.tree.nodes() {
            let cols = layout.cols(j);
            let mut place = |i: Node, block: &DMatrix<f64>| {
                let rows = layout.rows(i);
                values
                    .view_mut((rows.start, cols.start), (rows.len(), cols.len()))
                    .copy_from(block);
            };
            place(j, self.d(j));
            let mut frontier: Vec<(Node, Node, DMatrix<f64>)> = self
                .tree
                .neighbors(j)
                .iter()
                .map(|&a| (j, a, self.inp(j, a).clone()))
                .collect();
            while let Some((from, at, state)) = frontier.pop() {
                place(at, &(self.out(at, from) * &state));
                for &next in self.tree.neighbors(at) {
                    if next != from {
                        frontier.push((at, next, self.trans(at, next, from) * &state));
                    }
                }
            }
        }
        GraphPartitionedMatrix::new(self.tree.clone(), self.layout.clone(), values)
            .expect("layout matches by construction")
    }

    /// Multiplies `D` and every `Inp` generator by `alpha`, scaling `T`.
    pub fn scaled(&self, alpha: f64) -> TssMatrix {
        let mut out = self.clone();
        for s in &mut out.spinners {
            s.d *= alpha;
            for g in s.inp.values_mut() {
                *g *= alpha;
            }
        }
        out
    }

    /// Number of stored generator entries.
    pub fn storage(&self) -> usize {
        self.spinners
            .iter()
            .map(|s| {
                s.d.len()
                    + s.inp.values().map(DMatrix::len).sum::<usize>()
                    + s.out.values().map(DMatrix::len).sum::<usize>()
                    + s.trans.values().map(DMatrix::len).sum::<usize>()
            })
            .sum()
    }
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

    #[test]
    fn diagonal_only_validates() {
        let tree = fixture_tree();
        let t = TssMatrix::identity(tree.clone(), &[2; 7]).unwrap();
        assert_eq!(t.to_dense().values(), &DMatrix::<f64>::identity(14, 14));
        assert_eq!(t.profile().max(), 0);
    }

    #[test]
    fn transposed_generator_is_reported() {
        let tree = fixture_tree();
        let layout = BlockLayout::uniform(7, 3);
        let mut profile = RankProfile::uniform(&tree, 2);
        profile.set(DirectedEdge::new(n(1), n(5)), 1);
        let mut t = TssMatrix::random(tree, layout, profile, 7).unwrap();
        // B^1 is Inp^1_5, 1 x 3.
        let b = t.b(n(1)).transpose();
        t.spinner_mut(n(1)).inp.insert(n(5), b);
        match t.validate() {
            Err(TssError::ShapeMismatch {
                node,
                generator,
                expected,
                got,
            }) => {
                assert_eq!(node, 1);
                assert_eq!(generator, "Inp[5]");
                assert_eq!(expected, (1, 3));
                assert_eq!(got, (3, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
        t.spinner_mut(n(1)).inp.remove(&n(5));
        assert!(matches!(t.validate(), Err(TssError::MissingGenerator { node: 1, .. })));
    }

    #[test]
    fn stray_generators_rejected() {
        let tree = fixture_tree();
        let mut t = TssMatrix::random(tree.clone(), BlockLayout::uniform(7, 1), RankProfile::uniform(&tree, 1), 1).unwrap();
        t.spinner_mut(n(5)).trans.insert((n(1), n(1)), DMatrix::zeros(1, 1));
        assert!(t.validate().is_err());
    }

    #[test]
    fn block_entry_adjacent_and_diagonal() {
        let tree = fixture_tree();
        let layout = BlockLayout::new(vec![1, 2, 3, 1, 2, 3, 1], vec![2, 1, 1, 3, 2, 2, 1]).unwrap();
        let t = TssMatrix::random(tree.clone(), layout, RankProfile::uniform(&tree, 2), 5).unwrap();
        assert_eq!(&t.block_entry(n(3), n(3)).unwrap(), t.d(n(3)));
        let adj = t.block_entry(n(5), n(1)).unwrap();
        assert_eq!(adj, t.c(n(5), n(1)) * t.b(n(1)));
        let dense = t.to_dense();
        for i in tree.nodes() {
            for j in tree.nodes() {
                let e = t.block_entry(i, j).unwrap();
                assert_eq!(e.shape(), (t.layout().m(i), t.layout().n(j)));
                assert_eq!(e, dense.block(i, j), "block ({i},{j})");
            }
        }
    }

    #[test]
    fn three_hop_entry_follows_rooted_names() {
        // Tree 1-3-4 with 2 hanging off 3, root 4.
        let tree = Arc::new(RootedTree::new(4, &[(1, 3), (2, 3), (3, 4)], 4).unwrap());
        let t = TssMatrix::random(tree.clone(), BlockLayout::uniform(4, 2), RankProfile::uniform(&tree, 2), 9).unwrap();
        // T<4,1> = C^4_3 U^3_{4,1} B^1_3
        let expect = t.c(n(4), n(3)) * (t.u(n(3), n(1)) * t.b(n(1)));
        assert_eq!(t.block_entry(n(4), n(1)).unwrap(), expect);
        // T<1,2> = Q^1_3 V^3_{1,2} B^2_3
        let expect = t.q(n(1)) * (t.v(n(3), n(1), n(2)) * t.b(n(2)));
        assert_eq!(t.block_entry(n(1), n(2)).unwrap(), expect);
        // T<1,4> = Q^1_3 W^3_{1,4} P^4_3
        let expect = t.q(n(1)) * (t.w(n(3), n(1)) * t.p(n(4), n(3)));
        assert_eq!(t.block_entry(n(1), n(4)).unwrap(), expect);
    }

    #[test]
    fn zero_rank_edge_decouples() {
        let tree = fixture_tree();
        let mut profile = RankProfile::uniform(&tree, 2);
        profile.set(DirectedEdge::new(n(5), n(7)), 0);
        let t = TssMatrix::random(tree.clone(), BlockLayout::uniform(7, 2), profile, 3).unwrap();
        let dense = t.to_dense();
        for i in [3, 4, 6, 7] {
            for j in [1, 2, 5] {
                assert_eq!(dense.block(n(i), n(j)).amax(), 0.0);
            }
        }
        assert!(dense.block(n(5), n(7)).amax() > 0.0);
    }

    #[test]
    fn random_is_deterministic() {
        let tree = fixture_tree();
        let make = |seed| {
            TssMatrix::random(tree.clone(), BlockLayout::uniform(7, 2), RankProfile::uniform(&tree, 1), seed)
                .unwrap()
        };
        assert_eq!(make(1).spinners(), make(1).spinners());
        let diff = make(1).to_dense().values() - make(2).to_dense().values();
        assert!(diff.norm() > 0.0);
        let zero = TssMatrix::random(tree.clone(), BlockLayout::uniform(7, 2), RankProfile::zeros(&tree), 4).unwrap();
        let dense = zero.to_dense();
        assert_eq!(dense.block(n(1), n(2)).amax(), 0.0);
    }

    #[test]
    fn empty_nodes_give_empty_blocks() {
        let (tree, empty) = RootedTree::hss_binary(4).unwrap();
        let tree = Arc::new(tree);
        let layout = BlockLayout::with_empty(7, 2, &empty);
        let t = TssMatrix::random(tree.clone(), layout, RankProfile::uniform(&tree, 2), 2).unwrap();
        let dense = t.to_dense();
        assert_eq!(dense.values().shape(), (8, 8));
        for &e in &empty {
            assert_eq!(t.d(e).shape(), (0, 0));
        }
    }
}
