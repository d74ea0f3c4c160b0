//! Sums, products and inverses of TSS matrices, and graph-induced rank checks.
//!
//! Arithmetic goes through the dense matrix and re-runs construction, so the
//! results always carry a minimal rank profile.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::blockmat::{border_edge_count, unit_hankel_sets, GraphPartitionedMatrix};
use crate::construct::construct_tss;
use crate::error::{Result, TssError};
use crate::lowrank::numerical_rank_scaled;
use crate::tree::{Node, NodeSet};
use crate::tss::TssMatrix;

fn same_tree(a: &TssMatrix, b: &TssMatrix) -> Result<()> {
    if a.tree() != b.tree() {
        return Err(TssError::LayoutMismatch("operands live on different trees".into()));
    }
    Ok(())
}

/// `a + b`, recompressed at `tol`.
pub fn add(a: &TssMatrix, b: &TssMatrix, tol: f64) -> Result<TssMatrix> {
    same_tree(a, b)?;
    if a.layout() != b.layout() {
        return Err(TssError::LayoutMismatch("operands have different block sizes".into()));
    }
    let dense = a.to_dense();
    let sum = dense.values() + b.to_dense().values();
    construct_tss(&dense.with_values(sum)?, tol)
}

/// `a * b`, recompressed at `tol`.
pub fn multiply(a: &TssMatrix, b: &TssMatrix, tol: f64) -> Result<TssMatrix> {
    same_tree(a, b)?;
    if a.layout().input_sizes() != b.layout().output_sizes() {
        return Err(TssError::LayoutMismatch(
            "input blocks of the left factor differ from output blocks of the right factor".into(),
        ));
    }
    let layout = crate::blockmat::BlockLayout::new(
        a.layout().output_sizes().to_vec(),
        b.layout().input_sizes().to_vec(),
    )?;
    let product = a.to_dense().values() * b.to_dense().values();
    construct_tss(
        &GraphPartitionedMatrix::new(a.tree().clone(), layout, product)?,
        tol,
    )
}

/// `a^{-1}`, recompressed at `tol`. The inverse uses the transposed block layout.
pub fn inverse(a: &TssMatrix, tol: f64) -> Result<TssMatrix> {
    let dense = a.to_dense();
    let values = dense.values();
    if values.nrows() != values.ncols() {
        return Err(TssError::NotSquare {
            rows: values.nrows(),
            cols: values.ncols(),
        });
    }
    let inv = dense_inverse(values)?;
    construct_tss(
        &GraphPartitionedMatrix::new(a.tree().clone(), a.layout().transposed(), inv)?,
        tol,
    )
}

/// Inverse via LU with partial pivoting.
pub fn dense_inverse(values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if values.nrows() != values.ncols() {
        return Err(TssError::NotSquare {
            rows: values.nrows(),
            cols: values.ncols(),
        });
    }
    if values.is_empty() {
        return Ok(values.clone());
    }
    crate::solve::checked_lu(values)?
        .try_inverse()
        .ok_or(TssError::SingularMatrix)
}

/// One subset whose Hankel rank exceeds the allowed bound.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GirsViolation {
    /// Column node ids of the offending Hankel block.
    pub subset: Vec<usize>,
    pub rank: usize,
    pub border_edges: usize,
}

/// Outcome of [`verify_girs`].
#[derive(Clone, Debug, Serialize)]
pub struct GirsReport {
    pub bound: f64,
    pub subsets_checked: usize,
    pub exhaustive: bool,
    /// Largest `rank / border edge count` seen.
    pub max_ratio: f64,
    pub violations: Vec<GirsViolation>,
}

impl GirsReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Largest node count for which every subset is checked.
pub const EXHAUSTIVE_MAX_NODES: usize = 10;

/// Checks `rank T<complement(A), A> <= c * border(A)` over node subsets `A`.
///
/// With at most [`EXHAUSTIVE_MAX_NODES`] nodes every nonempty proper subset is
/// checked and `trials` is ignored. Otherwise `trials` subsets are drawn from
/// seeded random bits, and the column sets of all unit Hankel blocks are
/// always added. Singular values at or below `tol * max(sigma_max, |T|_F)`
/// count as zero.
pub fn verify_girs(t: &GraphPartitionedMatrix, c: f64, trials: usize, seed: u64, tol: f64) -> Result<GirsReport> {
    let tree = t.tree();
    let count = tree.node_count();
    let mut subsets: Vec<NodeSet> = Vec::new();
    let exhaustive = count <= EXHAUSTIVE_MAX_NODES;
    let from_bits = |bits: u64| {
        NodeSet::canonical(
            (0..count)
                .filter(|k| bits >> k & 1 == 1)
                .map(Node::from_index)
                .collect(),
        )
    };
    if count >= 2 {
        if exhaustive {
            subsets.extend((1..(1u64 << count) - 1).map(from_bits));
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            while subsets.len() < trials {
                let set = NodeSet::canonical(
                    (0..count)
                        .filter(|_| rng.random::<bool>())
                        .map(Node::from_index)
                        .collect(),
                );
                if !set.is_empty() && set.len() < count {
                    subsets.push(set);
                }
            }
            for e in tree.directed_edges() {
                subsets.push(unit_hankel_sets(tree, e)?.1);
            }
        }
    }

    let mut report = GirsReport {
        bound: c,
        subsets_checked: subsets.len(),
        exhaustive,
        max_ratio: 0.0,
        violations: Vec::new(),
    };
    let scale = t.values().norm();
    for set in subsets {
        let rank = numerical_rank_scaled(&t.hankel_induced(&set)?, tol, scale)?;
        let border = border_edge_count(tree, &set)?;
        report.max_ratio = report.max_ratio.max(rank as f64 / border as f64);
        if rank as f64 > c * border as f64 {
            report.violations.push(GirsViolation {
                subset: set.ids(),
                rank,
                border_edges: border,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockmat::BlockLayout;
    use crate::construct::hankel_rank_profile;
    use crate::lowrank::DEFAULT_TOL;
    use crate::tree::RootedTree;
    use crate::tss::RankProfile;
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::Arc;

    fn fixture_tree() -> Arc<RootedTree> {
        Arc::new(
            RootedTree::new(7, &[(1, 5), (2, 5), (5, 7), (6, 7), (3, 6), (4, 6)], 7).unwrap(),
        )
    }

    fn random(tree: &Arc<RootedTree>, s: usize, rank: usize, seed: u64) -> TssMatrix {
        TssMatrix::random(tree.clone(), BlockLayout::uniform(tree.node_count(), s), RankProfile::uniform(tree, rank), seed)
            .unwrap()
    }

    fn dominant(tree: &Arc<RootedTree>, s: usize, rank: usize, seed: u64) -> TssMatrix {
        let mut t = random(tree, s, rank, seed);
        let shift = t.to_dense().values().row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max) + 1.0;
        for j in tree.nodes() {
            t.spinner_mut(j).d += DMatrix::identity(s, s) * shift;
        }
        t
    }

    fn minimal(t: &TssMatrix) -> RankProfile {
        hankel_rank_profile(&t.to_dense(), DEFAULT_TOL).unwrap()
    }

    #[test]
    fn adding_zero_gives_minimal_profile() {
        let tree = fixture_tree();
        let a = random(&tree, 2, 1, 1);
        let zero = a.scaled(0.0);
        let sum = add(&a, &zero, DEFAULT_TOL).unwrap();
        assert_eq!(sum.profile(), &minimal(&a));
    }

    #[test]
    fn adding_negation_cancels() {
        let tree = fixture_tree();
        let a = random(&tree, 2, 2, 3);
        let sum = add(&a, &a.scaled(-1.0), DEFAULT_TOL).unwrap();
        assert_eq!(sum.profile().max(), 0);
        assert_eq!(sum.to_dense().values().amax(), 0.0);
    }

    #[test]
    fn sum_and_product_ranks_are_subadditive() {
        let tree = fixture_tree();
        for seed in 0..5 {
            let a = random(&tree, 2, 1, seed);
            let b = random(&tree, 2, 1, seed + 100);
            let bound = a.profile().plus(b.profile());
            for r in [add(&a, &b, DEFAULT_TOL).unwrap(), multiply(&a, &b, DEFAULT_TOL).unwrap()] {
                assert!(r.profile().bounded_by(&bound));
                assert_eq!(r.profile(), &minimal(&r));
            }
        }
    }

    #[test]
    fn identity_is_neutral() {
        let tree = fixture_tree();
        let a = random(&tree, 2, 1, 8);
        let eye = TssMatrix::identity(tree.clone(), &[2; 7]).unwrap();
        let p = multiply(&a, &eye, DEFAULT_TOL).unwrap();
        assert_eq!(p.profile(), &minimal(&a));
        let inv = inverse(&eye, DEFAULT_TOL).unwrap();
        assert_eq!(inv.profile().max(), 0);
        assert_eq!(inv.to_dense().values(), eye.to_dense().values());
    }

    #[test]
    fn rank_zero_product_is_rank_zero() {
        let tree = fixture_tree();
        let a = random(&tree, 2, 0, 1);
        let b = random(&tree, 2, 0, 2);
        assert_eq!(multiply(&a, &b, DEFAULT_TOL).unwrap().profile().max(), 0);
    }

    #[test]
    fn inverse_keeps_profile() {
        let tree = fixture_tree();
        for seed in 0..4 {
            let a = dominant(&tree, 2, 1, seed);
            let p = minimal(&a);
            let inv = inverse(&a, DEFAULT_TOL).unwrap();
            assert_eq!(inv.profile(), &p);
            assert_eq!(inverse(&inv, DEFAULT_TOL).unwrap().profile(), &p);
            let prod = inv.to_dense().values() * a.to_dense().values();
            assert!((prod - DMatrix::identity(14, 14)).amax() < 1e-10);
        }
    }

    #[test]
    fn layout_mismatch() {
        let tree = fixture_tree();
        let a = random(&tree, 2, 1, 1);
        let b = random(&tree, 1, 1, 1);
        assert!(matches!(add(&a, &b, DEFAULT_TOL), Err(TssError::LayoutMismatch(_))));
        assert!(matches!(multiply(&a, &b, DEFAULT_TOL), Err(TssError::LayoutMismatch(_))));
        let other = Arc::new(RootedTree::line(7).unwrap());
        let c = random(&other, 2, 1, 1);
        assert!(matches!(add(&a, &c, DEFAULT_TOL), Err(TssError::LayoutMismatch(_))));
    }

    #[test]
    fn singular_inverse() {
        let tree = fixture_tree();
        let a = random(&tree, 2, 1, 1).scaled(0.0);
        assert!(matches!(inverse(&a, DEFAULT_TOL), Err(TssError::SingularMatrix)));
    }

    #[test]
    fn girs_simple_matrices() {
        let tree = fixture_tree();
        let layout = BlockLayout::uniform(7, 2);
        let eye = GraphPartitionedMatrix::new(tree.clone(), layout.clone(), DMatrix::identity(14, 14)).unwrap();
        let r = verify_girs(&eye, 0.0, 0, 0, DEFAULT_TOL).unwrap();
        assert!(r.holds());
        assert!(r.exhaustive);
        assert_eq!(r.subsets_checked, 126);
        let ones = eye.with_values(DMatrix::from_element(14, 14, 1.0)).unwrap();
        assert!(verify_girs(&ones, 1.0, 0, 0, DEFAULT_TOL).unwrap().holds());
        let r = verify_girs(&ones, 0.5, 0, 0, DEFAULT_TOL).unwrap();
        assert!(!r.holds());
        assert_eq!(r.max_ratio, 1.0);
    }

    #[test]
    fn girs_sampled_on_larger_tree() {
        let tree = Arc::new(RootedTree::hss_binary(7).unwrap().0);
        assert_eq!(tree.node_count(), 13);
        let t = random(&tree, 1, 2, 4).to_dense();
        let r = verify_girs(&t, 2.0, 50, 9, DEFAULT_TOL).unwrap();
        assert!(!r.exhaustive);
        assert_eq!(r.subsets_checked, 50 + 24);
        assert!(r.holds());
        let again = verify_girs(&t, 2.0, 50, 9, DEFAULT_TOL).unwrap();
        assert_eq!(again.max_ratio, r.max_ratio);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn profile_bound_iff_girs(seed in any::<u64>(), k in 2usize..9, rank in 0usize..3, c in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let edges: Vec<(usize, usize)> = (2..=k).map(|i| (i, rng.random_range(1..i))).collect();
            let tree = Arc::new(RootedTree::new(k, &edges, 1).unwrap());
            let t = random(&tree, 2, rank, seed).to_dense();
            let profile = hankel_rank_profile(&t, DEFAULT_TOL).unwrap();
            let report = verify_girs(&t, c as f64, 0, 0, DEFAULT_TOL).unwrap();
            prop_assert_eq!(profile.max() <= c, report.holds());
        }
    }
}
