//! Rooted trees over 1-based node ids.
//!
//! A [`RootedTree`] is validated once at construction and then answers every
//! structural query (parent, children, siblings, levels, descendants, unique
//! paths) from precomputed tables. Children and neighbour lists are kept in
//! ascending id order; the construction sweeps rely on that order when they
//! group columns.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Result, TssError};

/// A node of a tree. Stores the 0-based index; displays and serializes as the
/// 1-based id.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Node(usize);

impl Node {
    /// Node with 1-based id `id`. Panics on `id == 0`.
    pub const fn from_id(id: usize) -> Node {
        assert!(id > 0, "node ids are 1-based");
        Node(id - 1)
    }

    pub const fn from_index(index: usize) -> Node {
        Node(index)
    }

    /// 1-based id.
    pub const fn id(self) -> usize {
        self.0 + 1
    }

    /// 0-based index.
    pub const fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// An oriented tree edge. Both orientations of every undirected edge are
/// valid directed edges; `(from, to)` carries state from `from` into `to`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct DirectedEdge {
    pub from: Node,
    pub to: Node,
}

impl DirectedEdge {
    pub const fn new(from: Node, to: Node) -> Self {
        DirectedEdge { from, to }
    }

    pub const fn reversed(self) -> Self {
        DirectedEdge {
            from: self.to,
            to: self.from,
        }
    }
}

impl fmt::Display for DirectedEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.from, self.to)
    }
}

/// Ordered list of distinct nodes.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct NodeSet(Vec<Node>);

impl NodeSet {
    /// Keeps the given order; rejects duplicates.
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        let mut seen = nodes.clone();
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(TssError::DuplicateNode(w[0].id()));
        }
        Ok(NodeSet(nodes))
    }

    /// Sorts into ascending order and drops duplicates.
    pub fn canonical(mut nodes: Vec<Node>) -> Self {
        nodes.sort_unstable();
        nodes.dedup();
        NodeSet(nodes)
    }

    pub fn from_ids(ids: &[usize]) -> Result<Self> {
        if ids.contains(&0) {
            return Err(TssError::BadNodeId { id: 0, count: 0 });
        }
        NodeSet::new(ids.iter().map(|&i| Node::from_id(i)).collect())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.0
    }

    pub fn ids(&self) -> Vec<usize> {
        self.0.iter().map(|n| n.id()).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, node: Node) -> bool {
        self.0.contains(&node)
    }

    pub fn iter(&self) -> impl Iterator<Item = Node> + '_ {
        self.0.iter().copied()
    }

    /// Nodes of `0..count` not in this set, ascending.
    pub fn complement(&self, count: usize) -> NodeSet {
        let mut member = vec![false; count];
        for n in &self.0 {
            member[n.index()] = true;
        }
        NodeSet(
            (0..count)
                .filter(|&i| !member[i])
                .map(Node::from_index)
                .collect(),
        )
    }
}

/// A connected acyclic undirected graph with a chosen root.
#[derive(Clone, Debug, PartialEq)]
pub struct RootedTree {
    root: Node,
    edges: Vec<(Node, Node)>,
    neighbors: Vec<Vec<Node>>,
    parent: Vec<Option<Node>>,
    children: Vec<Vec<Node>>,
    level: Vec<usize>,
    levels: Vec<Vec<Node>>,
    // Entry/exit times of a DFS from the root, for O(1) descendant tests.
    enter: Vec<usize>,
    exit: Vec<usize>,
}

impl RootedTree {
    /// Builds and validates a rooted tree from 1-based undirected edges.
    pub fn new(count: usize, edges: &[(usize, usize)], root: usize) -> Result<Self> {
        let check = |id: usize| {
            if id == 0 || id > count {
                Err(TssError::BadNodeId { id, count })
            } else {
                Ok(Node::from_id(id))
            }
        };
        let root = check(root)?;
        let mut undirected = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            let (a, b) = (check(a)?, check(b)?);
            if a == b {
                return Err(TssError::CycleDetected {
                    edges: edges.len(),
                    expected: count - 1,
                });
            }
            undirected.push((a.min(b), a.max(b)));
        }
        if undirected.len() != count - 1 {
            return Err(TssError::CycleDetected {
                edges: undirected.len(),
                expected: count - 1,
            });
        }
        undirected.sort_unstable();

        let mut neighbors = vec![Vec::new(); count];
        for &(a, b) in &undirected {
            neighbors[a.index()].push(b);
            neighbors[b.index()].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        let mut parent = vec![None; count];
        let mut level = vec![usize::MAX; count];
        let mut children = vec![Vec::new(); count];
        level[root.index()] = 0;
        let mut queue = VecDeque::from([root]);
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &neighbors[v.index()] {
                if level[w.index()] == usize::MAX {
                    level[w.index()] = level[v.index()] + 1;
                    parent[w.index()] = Some(v);
                    children[v.index()].push(w);
                    reached += 1;
                    queue.push_back(w);
                }
            }
        }
        if reached != count {
            return Err(TssError::DisconnectedGraph {
                unreached: count - reached,
            });
        }

        let depth = level.iter().copied().max().unwrap_or(0);
        let mut levels = vec![Vec::new(); depth + 1];
        for (i, &l) in level.iter().enumerate() {
            levels[l].push(Node::from_index(i));
        }

        let mut enter = vec![0; count];
        let mut exit = vec![0; count];
        let mut clock = 0;
        let mut stack = vec![(root, false)];
        while let Some((v, done)) = stack.pop() {
            if done {
                exit[v.index()] = clock;
                continue;
            }
            enter[v.index()] = clock;
            clock += 1;
            stack.push((v, true));
            for &c in children[v.index()].iter().rev() {
                stack.push((c, false));
            }
        }

        Ok(RootedTree {
            root,
            edges: undirected,
            neighbors,
            parent,
            children,
            level,
            levels,
            enter,
            exit,
        })
    }

    /// Line graph `1 - 2 - ... - count` rooted at the last node.
    pub fn line(count: usize) -> Result<Self> {
        let edges: Vec<_> = (1..count).map(|i| (i, i + 1)).collect();
        RootedTree::new(count, &edges, count)
    }

    /// Balanced post-ordered binary tree with `num_leaves` leaves. Also
    /// returns the internal nodes, which are meant to carry empty blocks.
    pub fn hss_binary(num_leaves: usize) -> Result<(Self, Vec<Node>)> {
        if num_leaves < 2 {
            return Err(TssError::BadLeafCount(num_leaves));
        }
        fn build(
            leaves: usize,
            next: &mut usize,
            edges: &mut Vec<(usize, usize)>,
            internal: &mut Vec<usize>,
        ) -> usize {
            if leaves == 1 {
                *next += 1;
                return *next;
            }
            let left = build(leaves.div_ceil(2), next, edges, internal);
            let right = build(leaves / 2, next, edges, internal);
            *next += 1;
            edges.push((left, *next));
            edges.push((right, *next));
            internal.push(*next);
            *next
        }
        let mut next = 0;
        let mut edges = Vec::new();
        let mut internal = Vec::new();
        let root = build(num_leaves, &mut next, &mut edges, &mut internal);
        let tree = RootedTree::new(next, &edges, root)?;
        internal.sort_unstable();
        Ok((tree, internal.into_iter().map(Node::from_id).collect()))
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    /// Validated node from a 1-based id.
    pub fn node(&self, id: usize) -> Result<Node> {
        if id == 0 || id > self.node_count() {
            Err(TssError::BadNodeId {
                id,
                count: self.node_count(),
            })
        } else {
            Ok(Node::from_id(id))
        }
    }

    pub(crate) fn check(&self, node: Node) -> Result<Node> {
        self.node(node.id())
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> {
        (0..self.node_count()).map(Node::from_index)
    }

    pub fn root(&self) -> Node {
        self.root
    }

    pub fn parent(&self, node: Node) -> Option<Node> {
        self.parent[node.index()]
    }

    pub fn grandparent(&self, node: Node) -> Option<Node> {
        self.parent(node).and_then(|p| self.parent(p))
    }

    pub fn children(&self, node: Node) -> &[Node] {
        &self.children[node.index()]
    }

    /// Other children of this node's parent, ascending. Empty for the root.
    pub fn siblings(&self, node: Node) -> Vec<Node> {
        match self.parent(node) {
            Some(p) => self
                .children(p)
                .iter()
                .copied()
                .filter(|&c| c != node)
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn neighbors(&self, node: Node) -> &[Node] {
        &self.neighbors[node.index()]
    }

    pub fn level(&self, node: Node) -> usize {
        self.level[node.index()]
    }

    /// Largest level `L`.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Nodes at level `l`, ascending.
    pub fn level_nodes(&self, l: usize) -> &[Node] {
        self.levels.get(l).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_leaf(&self, node: Node) -> bool {
        self.children(node).is_empty()
    }

    pub fn leaves(&self) -> NodeSet {
        NodeSet(self.nodes().filter(|&n| self.is_leaf(n)).collect())
    }

    /// True if `node` lies in the subtree rooted at `ancestor` (inclusive).
    pub fn is_descendant(&self, node: Node, ancestor: Node) -> bool {
        let (a, n) = (ancestor.index(), node.index());
        self.enter[a] <= self.enter[n] && self.enter[n] < self.exit[a]
    }

    /// Subtree rooted at `node`, including `node`, ascending.
    pub fn descendants(&self, node: Node) -> NodeSet {
        NodeSet(
            self.nodes()
                .filter(|&n| self.is_descendant(n, node))
                .collect(),
        )
    }

    /// Everything outside the subtree rooted at `node`, ascending.
    pub fn non_descendants(&self, node: Node) -> NodeSet {
        NodeSet(
            self.nodes()
                .filter(|&n| !self.is_descendant(n, node))
                .collect(),
        )
    }

    /// Undirected edges as `(smaller, larger)` pairs, sorted.
    pub fn undirected_edges(&self) -> &[(Node, Node)] {
        &self.edges
    }

    /// Both orientations of every edge, sorted by `(from, to)`.
    pub fn directed_edges(&self) -> Vec<DirectedEdge> {
        let mut out: Vec<_> = self
            .edges
            .iter()
            .flat_map(|&(a, b)| [DirectedEdge::new(a, b), DirectedEdge::new(b, a)])
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_edge(&self, a: Node, b: Node) -> bool {
        a.index() < self.node_count()
            && b.index() < self.node_count()
            && (self.parent(a) == Some(b) || self.parent(b) == Some(a))
    }

    /// True when `edge` points from a child to its parent.
    pub fn is_up_edge(&self, edge: DirectedEdge) -> bool {
        self.parent(edge.from) == Some(edge.to)
    }

    pub fn check_edge(&self, edge: DirectedEdge) -> Result<()> {
        if self.is_edge(edge.from, edge.to) {
            Ok(())
        } else {
            Err(TssError::NotATreeEdge {
                from: edge.from.id(),
                to: edge.to.id(),
            })
        }
    }

    /// The unique simple path from `from` to `to`, both endpoints included.
    pub fn path_between(&self, from: Node, to: Node) -> Result<Vec<Node>> {
        self.check(from)?;
        self.check(to)?;
        let (mut a, mut b) = (from, to);
        let mut head = vec![a];
        let mut tail = vec![b];
        while self.level(a) > self.level(b) {
            a = self.parent(a).expect("non-root has a parent");
            head.push(a);
        }
        while self.level(b) > self.level(a) {
            b = self.parent(b).expect("non-root has a parent");
            tail.push(b);
        }
        while a != b {
            a = self.parent(a).expect("non-root has a parent");
            b = self.parent(b).expect("non-root has a parent");
            head.push(a);
            tail.push(b);
        }
        // `a == b` is now the meeting point and ends both halves.
        tail.pop();
        head.extend(tail.into_iter().rev());
        Ok(head)
    }

    /// Children before parents: deepest level first, ascending within a level.
    pub fn leaves_to_root(&self) -> Vec<Node> {
        self.levels.iter().rev().flatten().copied().collect()
    }

    /// Root first, then level by level.
    pub fn root_to_leaves(&self) -> Vec<Node> {
        self.levels.iter().flatten().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(id: usize) -> Node {
        Node::from_id(id)
    }

    fn fixture() -> RootedTree {
        RootedTree::new(7, &[(1, 5), (2, 5), (5, 7), (6, 7), (3, 6), (4, 6)], 7).unwrap()
    }

    #[test]
    fn fixture_levels() {
        let t = fixture();
        assert_eq!(t.level_nodes(0), &[n(7)]);
        assert_eq!(t.level_nodes(1), &[n(5), n(6)]);
        assert_eq!(t.level_nodes(2), &[n(1), n(2), n(3), n(4)]);
        assert_eq!(t.depth(), 2);
        assert_eq!(t.children(n(5)), &[n(1), n(2)]);
        assert_eq!(t.siblings(n(3)), vec![n(4)]);
        assert_eq!(t.grandparent(n(3)), Some(n(7)));
        assert_eq!(t.leaves().ids(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn singleton() {
        let t = RootedTree::new(1, &[], 1).unwrap();
        assert_eq!(t.leaves().ids(), vec![1]);
        assert_eq!(t.depth(), 0);
        assert!(t.directed_edges().is_empty());
    }

    #[test]
    fn line_parents() {
        let t = RootedTree::new(4, &[(1, 2), (2, 3), (3, 4)], 4).unwrap();
        assert_eq!(t.parent(n(1)), Some(n(2)));
        assert_eq!(t.parent(n(2)), Some(n(3)));
        assert_eq!(t.parent(n(3)), Some(n(4)));
        assert_eq!(t.leaves().ids(), vec![1]);
        assert_eq!(t, RootedTree::line(4).unwrap());
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(matches!(
            RootedTree::new(3, &[(1, 2)], 1),
            Err(TssError::CycleDetected { .. })
        ));
        assert!(matches!(
            RootedTree::new(4, &[(1, 2), (2, 1), (3, 4)], 1),
            Err(TssError::DisconnectedGraph { .. })
        ));
        assert!(matches!(
            RootedTree::new(3, &[(1, 2), (2, 4)], 1),
            Err(TssError::BadNodeId { id: 4, .. })
        ));
        assert!(matches!(
            RootedTree::new(3, &[(1, 2), (2, 3)], 0),
            Err(TssError::BadNodeId { id: 0, .. })
        ));
    }

    #[test]
    fn paths() {
        let t = fixture();
        let ids = |p: Vec<Node>| p.into_iter().map(Node::id).collect::<Vec<_>>();
        assert_eq!(ids(t.path_between(n(1), n(3)).unwrap()), vec![1, 5, 7, 6, 3]);
        assert_eq!(ids(t.path_between(n(1), n(5)).unwrap()), vec![1, 5]);
        assert_eq!(ids(t.path_between(n(2), n(1)).unwrap()), vec![2, 5, 1]);
        let line = RootedTree::line(4).unwrap();
        assert_eq!(ids(line.path_between(n(1), n(4)).unwrap()), vec![1, 2, 3, 4]);
        assert!(t.path_between(n(1), n(9)).is_err());
    }

    #[test]
    fn descendant_sets() {
        let t = fixture();
        assert_eq!(t.descendants(n(5)).ids(), vec![1, 2, 5]);
        assert_eq!(t.descendants(n(3)).ids(), vec![3]);
        assert_eq!(t.descendants(n(7)).ids(), (1..=7).collect::<Vec<_>>());
        assert_eq!(t.non_descendants(n(6)).ids(), vec![1, 2, 5, 7]);
    }

    #[test]
    fn binary_trees() {
        let (t, empty) = RootedTree::hss_binary(2).unwrap();
        assert_eq!(t.root(), n(3));
        assert_eq!(t.leaves().ids(), vec![1, 2]);
        assert_eq!(empty, vec![n(3)]);

        // Three leaves reproduce the 5-node post-ordered example tree.
        let (t, empty) = RootedTree::hss_binary(3).unwrap();
        assert_eq!(t, RootedTree::new(5, &[(1, 3), (2, 3), (3, 5), (4, 5)], 5).unwrap());
        assert_eq!(empty, vec![n(3), n(5)]);

        let (t, empty) = RootedTree::hss_binary(4).unwrap();
        assert_eq!(t.node_count(), 7);
        assert_eq!(t.leaves().ids(), vec![1, 2, 4, 5]);
        assert_eq!(empty, vec![n(3), n(6), n(7)]);
        assert!(t.leaves().iter().all(|l| t.level(l) >= 1));

        assert!(matches!(
            RootedTree::hss_binary(1),
            Err(TssError::BadLeafCount(1))
        ));
    }

    #[test]
    fn node_sets() {
        assert!(matches!(
            NodeSet::from_ids(&[1, 2, 1]),
            Err(TssError::DuplicateNode(1))
        ));
        let s = NodeSet::from_ids(&[3, 1]).unwrap();
        assert_eq!(s.ids(), vec![3, 1]);
        assert_eq!(s.complement(4).ids(), vec![2, 4]);
        assert_eq!(NodeSet::canonical(vec![n(3), n(1), n(3)]).ids(), vec![1, 3]);
    }
}
