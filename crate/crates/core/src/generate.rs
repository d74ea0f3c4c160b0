//! Seeded generators for trees, test matrices and vectors.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::dense_inverse;
use crate::blockmat::{BlockLayout, GraphPartitionedMatrix};
use crate::error::{Result, TssError};
use crate::tree::RootedTree;
use crate::tss::{RankProfile, TssMatrix};

/// Diagonal shift factor applied to tree-sparse matrices, relative to the
/// largest absolute row sum of the unshifted matrix.
pub const DOMINANCE_FACTOR: f64 = 4.0;

fn uniform_block(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn max_row_sum(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max)
}

fn require_square_blocks(layout: &BlockLayout) -> Result<()> {
    if layout.output_sizes() != layout.input_sizes() {
        return Err(TssError::LayoutMismatch(
            "diagonal blocks must be square".into(),
        ));
    }
    Ok(())
}

/// Random tree on `count` nodes: each new node attaches to a uniformly chosen
/// earlier one, labels are shuffled and the root is uniform.
pub fn random_tree(count: usize, seed: u64) -> Result<RootedTree> {
    if count == 0 {
        return Err(TssError::BadNodeId { id: 0, count: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (1..=count).collect();
    labels.shuffle(&mut rng);
    let edges: Vec<(usize, usize)> = (1..count)
        .map(|k| (labels[k], labels[rng.random_range(0..k)]))
        .collect();
    let root = rng.random_range(1..=count);
    RootedTree::new(count, &edges, root)
}

/// Uniform `[-1, 1)` vector.
pub fn random_vector(len: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(len, |_, _| rng.random_range(-1.0..1.0))
}

/// Dense matrix with uniform `[-1, 1)` entries.
pub fn dense_random(tree: Arc<RootedTree>, layout: BlockLayout, seed: u64) -> Result<GraphPartitionedMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = uniform_block(&mut rng, layout.total_rows(), layout.total_cols());
    GraphPartitionedMatrix::new(tree, layout, values)
}

/// Block matrix that is nonzero only on the diagonal and on tree edges, made
/// invertible by adding `DOMINANCE_FACTOR * (max row sum) * I`.
pub fn tree_sparse_matrix(tree: Arc<RootedTree>, layout: BlockLayout, seed: u64) -> Result<GraphPartitionedMatrix> {
    require_square_blocks(&layout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = DMatrix::zeros(layout.total_rows(), layout.total_cols());
    let mut fill = |i, j, rng: &mut ChaCha8Rng| {
        let (r, c) = (layout.rows(i), layout.cols(j));
        let blk = uniform_block(rng, r.len(), c.len());
        values.view_mut((r.start, c.start), (r.len(), c.len())).copy_from(&blk);
    };
    for k in tree.nodes() {
        fill(k, k, &mut rng);
    }
    for &(a, b) in tree.undirected_edges() {
        fill(a, b, &mut rng);
        fill(b, a, &mut rng);
    }
    let shift = DOMINANCE_FACTOR * max_row_sum(&values);
    for d in 0..values.nrows() {
        values[(d, d)] += shift;
    }
    GraphPartitionedMatrix::new(tree, layout, values)
}

/// Dense inverse of [`tree_sparse_matrix`].
pub fn tree_sparse_inverse(tree: Arc<RootedTree>, layout: BlockLayout, seed: u64) -> Result<GraphPartitionedMatrix> {
    let sparse = tree_sparse_matrix(tree, layout, seed)?;
    let inv = dense_inverse(sparse.values())?;
    sparse.with_values(inv)
}

/// Random TSS generators. Transitions are scaled by `1 / (1.5 sqrt(incoming rank))`
/// so that products along long paths decay gently instead of blowing up.
pub fn random_tss(tree: Arc<RootedTree>, layout: BlockLayout, profile: RankProfile, seed: u64) -> Result<TssMatrix> {
    let mut t = TssMatrix::random(tree.clone(), layout, profile.clone(), seed)?;
    for k in tree.nodes() {
        for ((_, from), g) in t.spinner_mut(k).trans.iter_mut() {
            let incoming = profile.get(*from, k).max(1);
            *g /= (incoming as f64).sqrt() * 1.5;
        }
    }
    Ok(t)
}

/// Dense reconstruction of [`random_tss`] with a uniform rank.
pub fn random_tss_dense(tree: Arc<RootedTree>, layout: BlockLayout, rank: usize, seed: u64) -> Result<GraphPartitionedMatrix> {
    let profile = RankProfile::uniform(&tree, rank);
    Ok(random_tss(tree, layout, profile, seed)?.to_dense())
}

/// [`random_tss`] with each `D` shifted by `(max row sum + 1) * I`, which makes
/// the dense matrix strictly diagonally dominant.
pub fn well_conditioned_tss(tree: Arc<RootedTree>, layout: BlockLayout, profile: RankProfile, seed: u64) -> Result<TssMatrix> {
    require_square_blocks(&layout)?;
    let mut t = random_tss(tree.clone(), layout, profile, seed)?;
    let shift = max_row_sum(t.to_dense().values()) + 1.0;
    for k in tree.nodes() {
        let d = &mut t.spinner_mut(k).d;
        let s = d.nrows();
        *d += DMatrix::identity(s, s) * shift;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::hankel_rank_profile;
    use crate::lowrank::DEFAULT_TOL;

    #[test]
    fn random_tree_is_valid_and_deterministic() {
        for k in [1, 2, 7, 31] {
            let a = random_tree(k, 5).unwrap();
            assert_eq!(a.node_count(), k);
            assert_eq!(a.undirected_edges().len(), k - 1);
            assert_eq!(a, random_tree(k, 5).unwrap());
        }
        assert_ne!(random_tree(20, 1).unwrap(), random_tree(20, 2).unwrap());
    }

    #[test]
    fn tree_sparse_pattern_and_inverse_ranks() {
        let tree = Arc::new(RootedTree::line(6).unwrap());
        let layout = BlockLayout::uniform(6, 1);
        let sparse = tree_sparse_matrix(tree.clone(), layout.clone(), 3).unwrap();
        for i in tree.nodes() {
            for j in tree.nodes() {
                let adjacent = i == j || tree.is_edge(i, j);
                assert_eq!(sparse.block(i, j).amax() != 0.0, adjacent, "{i},{j}");
            }
        }
        let inv = tree_sparse_inverse(tree, layout, 3).unwrap();
        let p = hankel_rank_profile(&inv, DEFAULT_TOL).unwrap();
        assert!(p.max() <= 1);
        let prod = sparse.values() * inv.values();
        assert!((prod - DMatrix::identity(6, 6)).amax() < 1e-12);
    }

    #[test]
    fn tss_dense_respects_rank() {
        let tree = Arc::new(RootedTree::new(7, &[(1, 5), (2, 5), (5, 7), (6, 7), (3, 6), (4, 6)], 7).unwrap());
        let dense = random_tss_dense(tree, BlockLayout::uniform(7, 3), 2, 1).unwrap();
        assert!(hankel_rank_profile(&dense, DEFAULT_TOL).unwrap().max() <= 2);
    }

    #[test]
    fn well_conditioned_is_dominant() {
        let tree = Arc::new(random_tree(12, 4).unwrap());
        let t = well_conditioned_tss(tree.clone(), BlockLayout::uniform(12, 2), RankProfile::uniform(&tree, 2), 4)
            .unwrap();
        let v = t.to_dense().into_values();
        for r in 0..v.nrows() {
            let off: f64 = v.row(r).iter().enumerate().filter(|(c, _)| *c != r).map(|(_, x)| x.abs()).sum();
            assert!(v[(r, r)].abs() > off);
        }
    }

    #[test]
    fn rejects_rectangular_diagonal_blocks() {
        let tree = Arc::new(RootedTree::line(2).unwrap());
        let layout = BlockLayout::new(vec![1, 2], vec![2, 1]).unwrap();
        assert!(matches!(tree_sparse_matrix(tree, layout, 0), Err(TssError::LayoutMismatch(_))));
    }

    #[test]
    fn dense_random_is_deterministic() {
        let tree = Arc::new(RootedTree::line(3).unwrap());
        let a = dense_random(tree.clone(), BlockLayout::uniform(3, 2), 9).unwrap();
        let b = dense_random(tree, BlockLayout::uniform(3, 2), 9).unwrap();
        assert_eq!(a.values(), b.values());
    }
}
