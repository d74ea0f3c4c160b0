//! Linear-time matrix-vector product by state propagation over the tree.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{Result, TssError};
use crate::tree::{DirectedEdge, Node};
use crate::tss::TssMatrix;

/// One state vector per directed edge, of length equal to the edge rank.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeStates {
    states: BTreeMap<DirectedEdge, DVector<f64>>,
}

impl EdgeStates {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, edge: DirectedEdge) -> Option<&DVector<f64>> {
        self.states.get(&edge)
    }

    pub fn insert(&mut self, edge: DirectedEdge, g: DVector<f64>) {
        self.states.insert(edge, g);
    }

    pub fn iter(&self) -> impl Iterator<Item = (DirectedEdge, &DVector<f64>)> {
        self.states.iter().map(|(e, g)| (*e, g))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Largest absolute entry-wise difference over edges present in both.
    pub fn max_abs_diff(&self, other: &EdgeStates) -> f64 {
        self.states
            .iter()
            .filter_map(|(e, g)| other.get(*e).map(|h| (g - h).amax()))
            .fold(0.0, f64::max)
    }
}

/// `b = T x`.
pub fn matvec(t: &TssMatrix, x: &DVector<f64>) -> Result<DVector<f64>> {
    matvec_with_states(t, x).map(|(b, _)| b)
}

/// `b = T x` together with every edge state produced along the way.
pub fn matvec_with_states(t: &TssMatrix, x: &DVector<f64>) -> Result<(DVector<f64>, EdgeStates)> {
    let layout = t.layout();
    if x.len() != layout.total_cols() {
        return Err(TssError::LengthMismatch {
            expected: layout.total_cols(),
            got: x.len(),
        });
    }
    let tree = t.tree();
    let xk = |k: Node| {
        let c = layout.cols(k);
        x.rows(c.start, c.len())
    };
    let mut b = DVector::zeros(layout.total_rows());
    let mut add = |k: Node, v: DVector<f64>| {
        let r = layout.rows(k);
        let mut dst = b.rows_mut(r.start, r.len());
        dst += v;
    };
    for k in tree.nodes() {
        add(k, t.d(k) * xk(k));
    }

    let mut states = EdgeStates::new();
    for level in (1..=tree.depth()).rev() {
        for &i in tree.level_nodes(level) {
            let j = tree.parent(i).expect("level >= 1");
            let mut g = t.b(i) * xk(i);
            for &w in tree.children(i) {
                g += t.u(i, w) * &states.states[&DirectedEdge::new(w, i)];
            }
            add(j, t.c(j, i) * &g);
            states.insert(DirectedEdge::new(i, j), g);
        }
    }
    for level in 1..=tree.depth() {
        for &i in tree.level_nodes(level) {
            let j = tree.parent(i).expect("level >= 1");
            let mut g = t.p(j, i) * xk(j);
            if let Some(k) = tree.parent(j) {
                g += t.w(j, i) * &states.states[&DirectedEdge::new(k, j)];
            }
            for v in tree.siblings(i) {
                g += t.v(j, i, v) * &states.states[&DirectedEdge::new(v, j)];
            }
            add(i, t.q(i) * &g);
            states.insert(DirectedEdge::new(j, i), g);
        }
    }
    Ok((b, states))
}

/// Scalar multiply-adds performed by [`matvec`], from dimensions alone.
pub fn matvec_opcount(t: &TssMatrix) -> usize {
    let tree = t.tree();
    let layout = t.layout();
    let profile = t.profile();
    let mut count = 0;
    for k in tree.nodes() {
        count += layout.m(k) * layout.n(k);
        let nbrs = tree.neighbors(k);
        for &j in nbrs {
            // Inp^k_j x_k and Out^k_j g_(j,k)
            count += profile.get(k, j) * layout.n(k) + layout.m(k) * profile.get(j, k);
            for &w in nbrs {
                if w != j {
                    count += profile.get(k, j) * profile.get(w, k);
                }
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockmat::BlockLayout;
    use crate::tree::RootedTree;
    use crate::tss::RankProfile;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn fixture_tree() -> Arc<RootedTree> {
        Arc::new(
            RootedTree::new(7, &[(1, 5), (2, 5), (5, 7), (6, 7), (3, 6), (4, 6)], 7).unwrap(),
        )
    }

    fn random_vec(len: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(len, |_, _| rng.random::<f64>() - 0.5)
    }

    fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn rank_zero_is_block_diagonal() {
        let tree = fixture_tree();
        let t = TssMatrix::random(tree.clone(), BlockLayout::uniform(7, 2), RankProfile::zeros(&tree), 1).unwrap();
        let x = random_vec(14, 2);
        let b = matvec(&t, &x).unwrap();
        for k in tree.nodes() {
            let r = t.layout().rows(k);
            let expect = t.d(k) * x.rows(r.start, r.len());
            assert_eq!(b.rows(r.start, r.len()), expect);
        }
        assert_eq!(matvec_opcount(&t), 7 * 4);
    }

    #[test]
    fn fixture_matches_dense() {
        let tree = fixture_tree();
        let layout = BlockLayout::new(vec![2, 1, 3, 2, 1, 2, 2], vec![1, 2, 2, 3, 2, 1, 2]).unwrap();
        let t = TssMatrix::random(tree.clone(), layout, RankProfile::uniform(&tree, 2), 5).unwrap();
        let x = random_vec(13, 6);
        let b = matvec(&t, &x).unwrap();
        let dense = t.to_dense().values() * &x;
        assert!(rel_err(&b, &dense) < 1e-12);
    }

    #[test]
    fn zero_input_gives_zero_states() {
        let tree = fixture_tree();
        let t = TssMatrix::random(tree.clone(), BlockLayout::uniform(7, 2), RankProfile::uniform(&tree, 1), 3).unwrap();
        let (b, states) = matvec_with_states(&t, &DVector::zeros(14)).unwrap();
        assert_eq!(b, DVector::zeros(14));
        assert_eq!(states.len(), 12);
        assert!(states.iter().all(|(_, g)| g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn states_have_profile_lengths() {
        let tree = fixture_tree();
        let mut profile = RankProfile::uniform(&tree, 1);
        profile.set(DirectedEdge::new(Node::from_id(5), Node::from_id(7)), 0);
        profile.set(DirectedEdge::new(Node::from_id(7), Node::from_id(6)), 2);
        let t = TssMatrix::random(tree.clone(), BlockLayout::uniform(7, 2), profile.clone(), 3).unwrap();
        let (_, states) = matvec_with_states(&t, &random_vec(14, 1)).unwrap();
        for (e, g) in states.iter() {
            assert_eq!(g.len(), profile.rank(e));
        }
    }

    #[test]
    fn length_mismatch() {
        let tree = fixture_tree();
        let t = TssMatrix::identity(tree, &[1; 7]).unwrap();
        assert!(matches!(
            matvec(&t, &DVector::zeros(6)),
            Err(TssError::LengthMismatch { expected: 7, got: 6 })
        ));
    }

    #[test]
    fn opcount_is_generator_storage() {
        let tree = fixture_tree();
        let layout = BlockLayout::new(vec![2, 1, 3, 2, 1, 2, 2], vec![1, 2, 2, 3, 2, 1, 2]).unwrap();
        let t = TssMatrix::random(tree.clone(), layout, RankProfile::uniform(&tree, 2), 5).unwrap();
        assert_eq!(matvec_opcount(&t), t.storage());
    }

    #[test]
    fn line_opcount_formula() {
        // D: 4 per node; Inp and Out: 2 each per directed edge; Trans: 1 per
        // ordered neighbour pair of interior nodes.
        for k in [2usize, 5, 8, 16] {
            let tree = Arc::new(RootedTree::line(k).unwrap());
            let t = TssMatrix::random(tree.clone(), BlockLayout::uniform(k, 2), RankProfile::uniform(&tree, 1), 0)
                .unwrap();
            assert_eq!(matvec_opcount(&t), 14 * k - 12);
        }
    }

    #[test]
    fn hss_internal_nodes_contribute_only_trans() {
        let (tree, empty) = RootedTree::hss_binary(4).unwrap();
        let tree = Arc::new(tree);
        let k = tree.node_count();
        let layout = BlockLayout::with_empty(k, 2, &empty);
        let t = TssMatrix::random(tree.clone(), layout, RankProfile::uniform(&tree, 1), 0).unwrap();
        let leaves = tree.leaves().len();
        // leaves: D 4, one Inp 2, one Out 2; internal: one per ordered neighbour pair
        let trans: usize = empty.iter().map(|&e| {
            let d = tree.neighbors(e).len();
            d * (d - 1)
        }).sum();
        assert_eq!(matvec_opcount(&t), leaves * 8 + trans);
    }

    proptest! {
        #[test]
        fn linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let tree = fixture_tree();
            let t = TssMatrix::random(tree.clone(), BlockLayout::uniform(7, 2), RankProfile::uniform(&tree, 2), seed).unwrap();
            let x = random_vec(14, seed ^ 1);
            let y = random_vec(14, seed ^ 2);
            let lhs = matvec(&t, &(&x * alpha + &y * beta)).unwrap();
            let rhs = matvec(&t, &x).unwrap() * alpha + matvec(&t, &y).unwrap() * beta;
            prop_assert!((lhs - &rhs).norm() <= 1e-13 * (1.0 + rhs.norm()) * 10.0);
        }
    }
}
