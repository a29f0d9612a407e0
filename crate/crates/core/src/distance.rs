//! Tree-induced distances between observations.
//!
//! Both distances need only the terminal-node id of each observation in
//! each tree. The MRCA distance between two leaves of one tree is the number
//! of edges from the farther leaf up to their most recent common ancestor;
//! the forest version averages it over trees and divides by the depth limit.
//! The Breiman distance is the fraction of trees in which the two leaves
//! differ.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{Forest, LeafMatrix, NodeKind, Tree};
use crate::predictor::FittedModel;

/// Leaf-count ceiling for the precomputed per-tree leaf x leaf table.
pub const TABLE_MAX_LEAVES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Mrca,
    Breiman,
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceKind::Mrca => "mrca",
            DistanceKind::Breiman => "breiman",
        })
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mrca" | "dino" => Ok(DistanceKind::Mrca),
            "breiman" | "ranbu" => Ok(DistanceKind::Breiman),
            other => Err(Error::invalid(format!(
                "unknown distance `{other}` (expected mrca/dino or breiman/ranbu)"
            ))),
        }
    }
}

/// Root-to-leaf node paths for every leaf of every tree.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafPathTable {
    /// `paths[tree][leaf]` = node ids from the root (inclusive) to the leaf.
    paths: Vec<Vec<Vec<u32>>>,
}

impl LeafPathTable {
    pub fn build(trees: &[Tree]) -> Self {
        LeafPathTable {
            paths: trees.iter().map(tree_paths).collect(),
        }
    }

    pub fn tree_count(&self) -> usize {
        self.paths.len()
    }

    pub fn leaf_count(&self, tree: usize) -> usize {
        self.paths[tree].len()
    }

    pub fn path(&self, tree: usize, leaf: u32) -> &[u32] {
        &self.paths[tree][leaf as usize]
    }

    /// Edges from the root to the leaf.
    pub fn leaf_depth(&self, tree: usize, leaf: u32) -> u32 {
        self.path(tree, leaf).len() as u32 - 1
    }

    /// Edges from the root to `mrca(a, b)`.
    pub fn mrca_depth(&self, tree: usize, a: u32, b: u32) -> u32 {
        let (pa, pb) = (self.path(tree, a), self.path(tree, b));
        let shared = pa.iter().zip(pb).take_while(|(x, y)| x == y).count();
        shared as u32 - 1
    }

    fn check(&self, tree: usize, leaf: u32) -> Result<()> {
        let leaf_count = self.paths.get(tree).map_or(0, Vec::len);
        if (leaf as usize) < leaf_count {
            Ok(())
        } else {
            Err(Error::InvalidLeaf {
                tree,
                leaf,
                leaf_count,
            })
        }
    }

    fn distance_unchecked(&self, tree: usize, a: u32, b: u32) -> u32 {
        let m = self.mrca_depth(tree, a, b);
        (self.leaf_depth(tree, a) - m).max(self.leaf_depth(tree, b) - m)
    }
}

fn tree_paths(tree: &Tree) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); tree.leaf_count()];
    let mut stack = vec![(0u32, vec![0u32])];
    while let Some((node, path)) = stack.pop() {
        match tree.nodes()[node as usize].kind {
            NodeKind::Split { left, right, .. } => {
                let mut lp = path.clone();
                lp.push(left);
                let mut rp = path;
                rp.push(right);
                stack.push((right, rp));
                stack.push((left, lp));
            }
            NodeKind::Leaf { leaf_id, .. } => out[leaf_id as usize] = path,
        }
    }
    out
}

/// Per-tree MRCA distance in edges.
pub fn mrca_tree_distance(paths: &LeafPathTable, tree: usize, a: u32, b: u32) -> Result<u32> {
    paths.check(tree, a)?;
    paths.check(tree, b)?;
    Ok(paths.distance_unchecked(tree, a, b))
}

/// Precomputed MRCA lookups for a fitted forest.
#[derive(Debug, Clone, PartialEq)]
pub struct MrcaIndex {
    paths: LeafPathTable,
    /// Row-major leaf x leaf edge distances, for trees small enough.
    tables: Vec<Option<Vec<u8>>>,
    max_depth: Option<u32>,
}

impl MrcaIndex {
    pub fn new(forest: &Forest) -> Self {
        let paths = LeafPathTable::build(&forest.trees);
        let tables = (0..paths.tree_count())
            .map(|b| {
                let l = paths.leaf_count(b);
                (l <= TABLE_MAX_LEAVES).then(|| {
                    let mut t = vec![0u8; l * l];
                    for i in 0..l as u32 {
                        for j in 0..l as u32 {
                            t[i as usize * l + j as usize] = paths.distance_unchecked(b, i, j) as u8;
                        }
                    }
                    t
                })
            })
            .collect();
        MrcaIndex {
            paths,
            tables,
            max_depth: forest.max_depth(),
        }
    }

    pub fn paths(&self) -> &LeafPathTable {
        &self.paths
    }

    pub fn tree_count(&self) -> usize {
        self.paths.tree_count()
    }

    /// Rescaling denominator; errors for unlimited-depth forests.
    pub fn denominator(&self) -> Result<u32> {
        match self.max_depth {
            Some(d) => Ok(d.max(1)),
            None => Err(Error::Unsupported(
                "MRCA distance needs a finite max_depth; use the Breiman distance for unlimited-depth forests"
                    .into(),
            )),
        }
    }

    pub fn tree_distance(&self, tree: usize, a: u32, b: u32) -> u32 {
        match &self.tables[tree] {
            Some(t) => t[a as usize * self.paths.leaf_count(tree) + b as usize] as u32,
            None => self.paths.distance_unchecked(tree, a, b),
        }
    }

    /// Distances from leaf `q` to every leaf of `tree`.
    fn row(&self, tree: usize, q: u32, scratch: &mut Vec<u8>) {
        let l = self.paths.leaf_count(tree);
        scratch.clear();
        match &self.tables[tree] {
            Some(t) => scratch.extend_from_slice(&t[q as usize * l..(q as usize + 1) * l]),
            None => scratch.extend((0..l as u32).map(|j| self.paths.distance_unchecked(tree, q, j) as u8)),
        }
    }
}

fn mrca_scale(edge_sum: u64, trees: usize, denominator: u32) -> f64 {
    edge_sum as f64 / (trees as f64 * denominator as f64)
}

fn check_rows(index_trees: usize, a: &[u32], b: &[u32]) -> Result<()> {
    for row in [a, b] {
        if row.len() != index_trees {
            return Err(Error::Dimension {
                expected: index_trees,
                got: row.len(),
            });
        }
    }
    Ok(())
}

/// Forest-averaged MRCA distance, rescaled to [0, 1] by the depth limit.
pub fn forest_mrca_distance(index: &MrcaIndex, leaves_a: &[u32], leaves_b: &[u32]) -> Result<f64> {
    let denom = index.denominator()?;
    check_rows(index.tree_count(), leaves_a, leaves_b)?;
    let mut sum = 0u64;
    for (b, (&x, &y)) in leaves_a.iter().zip(leaves_b).enumerate() {
        index.paths.check(b, x)?;
        index.paths.check(b, y)?;
        sum += index.tree_distance(b, x, y) as u64;
    }
    Ok(mrca_scale(sum, index.tree_count(), denom))
}

/// One minus the fraction of trees in which the two rows share a leaf.
pub fn breiman_distance(leaves_a: &[u32], leaves_b: &[u32]) -> Result<f64> {
    if leaves_a.is_empty() {
        return Err(Error::invalid("leaf rows must be non-empty"));
    }
    check_rows(leaves_a.len(), leaves_a, leaves_b)?;
    let differing = leaves_a.iter().zip(leaves_b).filter(|(a, b)| a != b).count();
    Ok(differing as f64 / leaves_a.len() as f64)
}

/// Distances from a query (given by its leaf row) to every training row,
/// reading only the leaf matrix.
pub fn distances_from_leaves(
    index: &MrcaIndex,
    leaves: &LeafMatrix,
    query: &[u32],
    kind: DistanceKind,
) -> Result<Vec<f64>> {
    let trees = leaves.trees();
    if query.len() != trees {
        return Err(Error::Dimension {
            expected: trees,
            got: query.len(),
        });
    }
    let n = leaves.rows();
    let mut acc = vec![0u32; n];
    match kind {
        DistanceKind::Mrca => {
            let denom = index.denominator()?;
            let mut row = Vec::new();
            for (b, &q) in query.iter().enumerate() {
                index.paths.check(b, q)?;
                index.row(b, q, &mut row);
                for (a, &l) in acc.iter_mut().zip(leaves.tree_column(b)) {
                    *a += row[l as usize] as u32;
                }
            }
            Ok(acc
                .into_iter()
                .map(|s| mrca_scale(s as u64, trees, denom))
                .collect())
        }
        DistanceKind::Breiman => {
            for (b, &q) in query.iter().enumerate() {
                for (a, &l) in acc.iter_mut().zip(leaves.tree_column(b)) {
                    *a += (l != q) as u32;
                }
            }
            Ok(acc.into_iter().map(|s| s as f64 / trees as f64).collect())
        }
    }
}

/// Distance from `x` to every training observation of `model`.
pub fn distance_vector(model: &FittedModel, x: &[f64], kind: DistanceKind) -> Result<Vec<f64>> {
    let query = model.forest().leaf_row(x)?;
    distances_from_leaves(model.mrca_index(), model.leaf_matrix(), &query, kind)
}

/// Symmetric pairwise distance matrix (row-major) between the given leaf rows.
pub fn pairwise_matrix(index: &MrcaIndex, rows: &[Vec<u32>], kind: DistanceKind) -> Result<Vec<f64>> {
    let m = rows.len();
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in i + 1..m {
            let d = match kind {
                DistanceKind::Mrca => forest_mrca_distance(index, &rows[i], &rows[j])?,
                DistanceKind::Breiman => breiman_distance(&rows[i], &rows[j])?,
            };
            out[i * m + j] = d;
            out[j * m + i] = d;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_synth::{generate, ScenarioKind};
    use crate::forest::{fit_forest, ForestParams, TreeNode};
    use crate::rng::SeedSpec;
    use rand::Rng;

    fn leaf(depth: u32, id: u32) -> TreeNode {
        TreeNode {
            depth,
            kind: NodeKind::Leaf {
                leaf_id: id,
                mean_response: 0.0,
                sample_count: 1,
            },
        }
    }

    fn split(depth: u32, left: u32, right: u32) -> TreeNode {
        TreeNode {
            depth,
            kind: NodeKind::Split {
                feature: 0,
                threshold: 0.0,
                left,
                right,
            },
        }
    }

    /// root -> (inner -> (a, b), c)
    fn three_leaf_tree() -> Tree {
        Tree::from_nodes(
            vec![split(0, 1, 4), split(1, 2, 3), leaf(2, 0), leaf(2, 1), leaf(1, 2)],
            1,
        )
        .unwrap()
    }

    fn random_tree<R: Rng>(rng: &mut R, max_depth: u32) -> Tree {
        fn grow<R: Rng>(
            rng: &mut R,
            nodes: &mut Vec<TreeNode>,
            leaves: &mut u32,
            depth: u32,
            max: u32,
        ) -> u32 {
            let id = nodes.len() as u32;
            if depth < max && (depth == 0 || rng.gen_bool(0.7)) {
                nodes.push(split(depth, 0, 0));
                let l = grow(rng, nodes, leaves, depth + 1, max);
                let r = grow(rng, nodes, leaves, depth + 1, max);
                nodes[id as usize] = split(depth, l, r);
            } else {
                nodes.push(leaf(depth, *leaves));
                *leaves += 1;
            }
            id
        }
        let mut nodes = Vec::new();
        grow(rng, &mut nodes, &mut 0, 0, max_depth);
        Tree::from_nodes(nodes, 1).unwrap()
    }

    /// Walks parent pointers upward and scans for the deepest shared node.
    fn brute_force(tree: &Tree, a: u32, b: u32) -> u32 {
        let mut parent = vec![None; tree.nodes().len()];
        for (i, n) in tree.nodes().iter().enumerate() {
            if let NodeKind::Split { left, right, .. } = n.kind {
                parent[left as usize] = Some(i);
                parent[right as usize] = Some(i);
            }
        }
        let ancestors = |leaf: u32| {
            let mut v = vec![tree.leaf_node(leaf).unwrap()];
            while let Some(p) = parent[*v.last().unwrap()] {
                v.push(p);
            }
            v
        };
        let (ua, ub) = (ancestors(a), ancestors(b));
        let ea = ua.iter().position(|n| ub.contains(n)).unwrap();
        let eb = ub.iter().position(|n| *n == ua[ea]).unwrap();
        ea.max(eb) as u32
    }

    #[test]
    fn three_leaf_case() {
        let t = three_leaf_tree();
        let p = LeafPathTable::build(std::slice::from_ref(&t));
        let d = |a, b| mrca_tree_distance(&p, 0, a, b).unwrap();
        assert_eq!(d(0, 0), 0);
        assert_eq!(d(0, 1), 1);
        assert_eq!(d(0, 2), 2);
        assert_eq!(d(1, 2), 2);
        assert_eq!(d(2, 1), 2);
        assert!(matches!(
            mrca_tree_distance(&p, 0, 0, 3),
            Err(Error::InvalidLeaf { .. })
        ));
        assert!(mrca_tree_distance(&p, 1, 0, 0).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_trees() {
        let mut rng = SeedSpec(17).stream(0, 0);
        for _ in 0..100 {
            let t = random_tree(&mut rng, 5);
            let p = LeafPathTable::build(std::slice::from_ref(&t));
            for _ in 0..20 {
                let a = rng.gen_range(0..t.leaf_count()) as u32;
                let b = rng.gen_range(0..t.leaf_count()) as u32;
                assert_eq!(mrca_tree_distance(&p, 0, a, b).unwrap(), brute_force(&t, a, b));
            }
        }
    }

    #[test]
    fn paths_start_at_root() {
        let mut rng = SeedSpec(3).stream(0, 0);
        let t = random_tree(&mut rng, 6);
        let p = LeafPathTable::build(std::slice::from_ref(&t));
        for l in 0..t.leaf_count() as u32 {
            let path = p.path(0, l);
            assert_eq!(path[0], 0);
            assert!(path.len() <= 7);
            assert_eq!(*path.last().unwrap() as usize, t.leaf_node(l).unwrap());
        }
    }

    fn index_for(trees: Vec<Tree>, max_depth: Option<u32>) -> MrcaIndex {
        let forest = Forest {
            trees,
            params: ForestParams {
                max_depth,
                ..Default::default()
            },
            n_features: 1,
            seed: SeedSpec(0),
        };
        MrcaIndex::new(&forest)
    }

    #[test]
    fn forest_average_and_rescaling() {
        // left spine of depth 5; split d sends its right child to leaf d
        let mut fixed = Vec::new();
        let mut leaf_id = 0;
        for d in 0..5u32 {
            let base = 2 * d;
            fixed.push(split(d, base + 2, base + 1));
            fixed.push(leaf(d + 1, leaf_id));
            leaf_id += 1;
        }
        fixed.push(leaf(5, leaf_id));
        let spine = Tree::from_nodes(fixed, 1).unwrap();
        let p = LeafPathTable::build(std::slice::from_ref(&spine));
        // leaves 4 (depth 5 right) and 5 (depth 5 left) are siblings: 1 edge
        assert_eq!(mrca_tree_distance(&p, 0, 4, 5).unwrap(), 1);
        // leaf 2 (depth 3) vs leaf 5 (depth 5): mrca at depth 2, max(1, 3) = 3
        assert_eq!(mrca_tree_distance(&p, 0, 2, 5).unwrap(), 3);
        let idx = index_for(vec![spine.clone(), spine], Some(5));
        let d = forest_mrca_distance(&idx, &[4, 2], &[5, 5]).unwrap();
        assert!((d - 0.4).abs() < 1e-15);
        assert_eq!(forest_mrca_distance(&idx, &[4, 2], &[4, 2]).unwrap(), 0.0);
    }

    #[test]
    fn root_mrca_gives_depth_over_max_depth() {
        // balanced depth-2 tree; leaves 0 and 3 meet at the root
        let t = Tree::from_nodes(
            vec![
                split(0, 1, 4),
                split(1, 2, 3),
                leaf(2, 0),
                leaf(2, 1),
                split(1, 5, 6),
                leaf(2, 2),
                leaf(2, 3),
            ],
            1,
        )
        .unwrap();
        let idx = index_for(vec![t], Some(4));
        assert_eq!(forest_mrca_distance(&idx, &[0], &[3]).unwrap(), 2.0 / 4.0);
    }

    #[test]
    fn unlimited_depth_rejects_mrca() {
        let idx = index_for(vec![three_leaf_tree()], None);
        assert!(matches!(
            forest_mrca_distance(&idx, &[0], &[1]),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn breiman_examples() {
        assert_eq!(breiman_distance(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(breiman_distance(&[1, 2, 3], &[0, 0, 0]).unwrap(), 1.0);
        assert_eq!(breiman_distance(&[1, 2, 3, 4], &[1, 0, 0, 0]).unwrap(), 0.75);
        assert!(breiman_distance(&[1, 2], &[1]).is_err());
        assert!(breiman_distance(&[], &[]).is_err());
    }

    #[test]
    fn vector_matches_pairwise_recomputation() {
        let d = generate(ScenarioKind::Friedman1, 150, 3, SeedSpec(1)).unwrap();
        let params = ForestParams {
            tree_count: 12,
            ..Default::default()
        };
        let (forest, leaves) = fit_forest(&d, &params, SeedSpec(2)).unwrap();
        let idx = MrcaIndex::new(&forest);
        let queries = generate(ScenarioKind::Friedman1, 10, 3, SeedSpec(3)).unwrap();
        for x in queries.rows().chain(d.rows().take(3)) {
            let q: Vec<u32> = forest.trees.iter().map(|t| t.leaf_of(x).unwrap()).collect();
            for kind in [DistanceKind::Mrca, DistanceKind::Breiman] {
                let v = distances_from_leaves(&idx, &leaves, &q, kind).unwrap();
                for (i, &di) in v.iter().enumerate() {
                    let row = leaves.row(i);
                    let expect = match kind {
                        DistanceKind::Mrca => forest_mrca_distance(&idx, &q, &row).unwrap(),
                        DistanceKind::Breiman => breiman_distance(&q, &row).unwrap(),
                    };
                    assert_eq!(di, expect);
                    assert!((0.0..=1.0).contains(&di));
                }
            }
        }
        // a training row is at distance 0 from itself
        let q = leaves.row(5);
        for kind in [DistanceKind::Mrca, DistanceKind::Breiman] {
            assert_eq!(distances_from_leaves(&idx, &leaves, &q, kind).unwrap()[5], 0.0);
        }
    }

    #[test]
    fn pairwise_is_symmetric_with_zero_diagonal() {
        let d = generate(ScenarioKind::Linear, 60, 1, SeedSpec(1)).unwrap();
        let (forest, leaves) = fit_forest(&d, &ForestParams::default(), SeedSpec(2)).unwrap();
        let idx = MrcaIndex::new(&forest);
        let rows: Vec<Vec<u32>> = (0..20).map(|i| leaves.row(i)).collect();
        for kind in [DistanceKind::Mrca, DistanceKind::Breiman] {
            let m = pairwise_matrix(&idx, &rows, kind).unwrap();
            for i in 0..20 {
                assert_eq!(m[i * 20 + i], 0.0);
                for j in 0..20 {
                    assert_eq!(m[i * 20 + j], m[j * 20 + i]);
                }
            }
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("dino".parse::<DistanceKind>().unwrap(), DistanceKind::Mrca);
        assert_eq!("RanBu".parse::<DistanceKind>().unwrap(), DistanceKind::Breiman);
        assert!("euclid".parse::<DistanceKind>().is_err());
    }
}
