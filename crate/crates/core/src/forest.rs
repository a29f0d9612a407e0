//! Bootstrap ensembles of depth-limited CART regression trees.
//!
//! Splits maximise the decrease in within-node sum of squared deviations over
//! `mtry` sampled features; thresholds are midpoints between adjacent distinct
//! values and a row goes left iff `x[feature] <= threshold`. Ties in gain go to
//! the lowest feature index, then the lowest threshold.
//!
//! Each tree draws its bootstrap sample from `stream(tag::TREE, b)`. Feature
//! sampling at a node uses `substream(tag::NODE, b, heap_position)`, so the
//! split chosen at a node depends only on where the node sits and which rows
//! reach it. A deeper tree is therefore an exact refinement of a shallower
//! one grown with the same seed.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::par::map_indices;
use crate::rng::{tag, SeedSpec};

/// Depth ceiling applied when `max_depth` is unlimited.
pub const DEPTH_SAFETY_CAP: u32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub tree_count: usize,
    /// `None` grows until `min_node_size` or zero gain stops the recursion.
    pub max_depth: Option<u32>,
    /// `None` resolves to `max(1, floor(p / 3))`.
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    /// 50 trees of depth at most 5.
    fn default() -> Self {
        ForestParams {
            tree_count: 50,
            max_depth: Some(5),
            mtry: None,
            min_node_size: 5,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    /// Full-depth baseline: 500 trees, no depth limit.
    pub fn full() -> Self {
        ForestParams {
            tree_count: 500,
            max_depth: None,
            ..Default::default()
        }
    }

    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or((p / 3).max(1)).clamp(1, p.max(1))
    }

    fn depth_limit(&self) -> u32 {
        self.max_depth.unwrap_or(DEPTH_SAFETY_CAP).min(DEPTH_SAFETY_CAP)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tree_count == 0 {
            return Err(Error::invalid("tree_count must be at least 1"));
        }
        if self.min_node_size == 0 {
            return Err(Error::invalid("min_node_size must be at least 1"));
        }
        if self.mtry == Some(0) {
            return Err(Error::invalid("mtry must be at least 1"));
        }
        if matches!(self.max_depth, Some(d) if d > DEPTH_SAFETY_CAP) {
            return Err(Error::invalid(format!(
                "max_depth may not exceed {DEPTH_SAFETY_CAP}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        leaf_id: u32,
        mean_response: f64,
        sample_count: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Edges from the root.
    pub depth: u32,
    pub kind: NodeKind,
}

/// A binary regression tree stored as a flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    /// `leaf_nodes[leaf_id]` is the node index of that leaf.
    leaf_nodes: Vec<u32>,
    n_features: usize,
}

impl Tree {
    /// Validates and wraps a node array: node 0 is the root at depth 0, every
    /// other node has exactly one parent, child depth is parent depth + 1,
    /// and leaf ids are dense `0..L`.
    pub fn from_nodes(nodes: Vec<TreeNode>, n_features: usize) -> Result<Tree> {
        let bad = |m: String| Err(Error::MalformedTree(m));
        if nodes.is_empty() {
            return bad("no nodes".into());
        }
        if nodes[0].depth != 0 {
            return bad("root depth must be 0".into());
        }
        let mut parent_seen = vec![false; nodes.len()];
        let mut leaf_nodes = vec![u32::MAX; nodes.len()];
        let mut leaf_count = 0usize;
        for (i, node) in nodes.iter().enumerate() {
            match node.kind {
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature as usize >= n_features {
                        return bad(format!("node {i}: feature {feature} out of range"));
                    }
                    if !threshold.is_finite() {
                        return bad(format!("node {i}: non-finite threshold"));
                    }
                    for child in [left, right] {
                        let c = child as usize;
                        if c == 0 || c >= nodes.len() {
                            return bad(format!("node {i}: child {child} out of range"));
                        }
                        if parent_seen[c] {
                            return bad(format!("node {c} has two parents"));
                        }
                        parent_seen[c] = true;
                        if nodes[c].depth != node.depth + 1 {
                            return bad(format!("node {c}: depth does not follow parent"));
                        }
                    }
                    if left == right {
                        return bad(format!("node {i}: identical children"));
                    }
                }
                NodeKind::Leaf {
                    leaf_id,
                    mean_response,
                    ..
                } => {
                    let l = leaf_id as usize;
                    if l >= nodes.len() || leaf_nodes[l] != u32::MAX {
                        return bad(format!("node {i}: leaf id {leaf_id} invalid or repeated"));
                    }
                    if !mean_response.is_finite() {
                        return bad(format!("node {i}: non-finite leaf mean"));
                    }
                    leaf_nodes[l] = i as u32;
                    leaf_count += 1;
                }
            }
        }
        if parent_seen.iter().skip(1).any(|s| !s) {
            return bad("unreachable node".into());
        }
        leaf_nodes.truncate(leaf_count);
        if leaf_nodes.contains(&u32::MAX) {
            return bad("leaf ids are not dense".into());
        }
        Ok(Tree {
            nodes,
            leaf_nodes,
            n_features,
        })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_nodes.len()
    }

    /// Node index of a leaf.
    pub fn leaf_node(&self, leaf_id: u32) -> Option<usize> {
        self.leaf_nodes.get(leaf_id as usize).map(|&n| n as usize)
    }

    pub fn leaf_mean(&self, leaf_id: u32) -> Option<f64> {
        match self.nodes[self.leaf_node(leaf_id)?].kind {
            NodeKind::Leaf { mean_response, .. } => Some(mean_response),
            NodeKind::Split { .. } => None,
        }
    }

    pub fn depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn leaf_of(&self, x: &[f64]) -> Result<u32> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.route(x))
    }

    #[inline]
    pub(crate) fn route(&self, x: &[f64]) -> u32 {
        let mut i = 0usize;
        loop {
            match self.nodes[i].kind {
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature as usize] <= threshold {
                        left
                    } else {
                        right
                    } as usize;
                }
                NodeKind::Leaf { leaf_id, .. } => return leaf_id,
            }
        }
    }

    fn route_column_major(&self, cols: &[f64], n: usize, row: usize) -> u32 {
        let mut i = 0usize;
        loop {
            match self.nodes[i].kind {
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if cols[feature as usize * n + row] <= threshold {
                        left
                    } else {
                        right
                    } as usize;
                }
                NodeKind::Leaf { leaf_id, .. } => return leaf_id,
            }
        }
    }
}

/// `n x B` terminal-node ids of the training rows. Stored tree-major so a
/// whole column (one tree, all rows) is contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafMatrix {
    rows: usize,
    trees: usize,
    entries: Vec<u32>,
}

impl LeafMatrix {
    /// Builds from row-major `n x B` entries.
    pub fn from_row_major(rows: usize, trees: usize, row_major: &[u32]) -> Result<Self> {
        if row_major.len() != rows * trees {
            return Err(Error::Dimension {
                expected: rows * trees,
                got: row_major.len(),
            });
        }
        let mut entries = vec![0u32; rows * trees];
        for i in 0..rows {
            for b in 0..trees {
                entries[b * rows + i] = row_major[i * trees + b];
            }
        }
        Ok(LeafMatrix { rows, trees, entries })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn trees(&self) -> usize {
        self.trees
    }

    pub fn get(&self, row: usize, tree: usize) -> u32 {
        self.entries[tree * self.rows + row]
    }

    /// All rows' leaves in one tree.
    pub fn tree_column(&self, tree: usize) -> &[u32] {
        &self.entries[tree * self.rows..(tree + 1) * self.rows]
    }

    pub fn row(&self, row: usize) -> Vec<u32> {
        (0..self.trees).map(|b| self.get(row, b)).collect()
    }

    pub fn to_row_major(&self) -> Vec<u32> {
        (0..self.rows).flat_map(|i| self.row(i)).collect()
    }

    /// Per tree, per leaf: the training rows that land there.
    pub fn inverted(&self, forest: &Forest) -> LeafIndex {
        let per_tree = (0..self.trees)
            .map(|b| {
                let mut groups = vec![Vec::new(); forest.trees[b].leaf_count()];
                for (i, &l) in self.tree_column(b).iter().enumerate() {
                    groups[l as usize].push(i as u32);
                }
                groups
            })
            .collect();
        LeafIndex { per_tree }
    }
}

/// Leaf membership lists, `per_tree[b][leaf]` = rows in that leaf.
#[derive(Debug, Clone)]
pub struct LeafIndex {
    pub per_tree: Vec<Vec<Vec<u32>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
    /// Parameters with `mtry` resolved.
    pub params: ForestParams,
    pub n_features: usize,
    pub seed: SeedSpec,
}

impl Forest {
    /// Grows the trees without computing training leaf assignments.
    pub fn fit(data: &Dataset, params: &ForestParams, seed: SeedSpec) -> Result<Forest> {
        params.validate()?;
        if data.n() < params.min_node_size {
            return Err(Error::invalid(format!(
                "n = {} is smaller than min_node_size = {}",
                data.n(),
                params.min_node_size
            )));
        }
        let mut params = params.clone();
        params.mtry = Some(params.resolved_mtry(data.p()));
        let cols = data.columns();
        let grower = Grower {
            ranks: Ranks::new(&cols, data.n(), data.p()),
            cols,
            y: data.responses(),
            n: data.n(),
            p: data.p(),
            params: &params,
            seed,
        };
        let trees = map_indices(params.tree_count, |b| grower.grow(b))?;
        Ok(Forest {
            trees,
            n_features: data.p(),
            params,
            seed,
        })
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn max_depth(&self) -> Option<u32> {
        self.params.max_depth
    }

    pub fn leaf_row(&self, x: &[f64]) -> Result<Vec<u32>> {
        self.check_dim(x)?;
        Ok(self.trees.iter().map(|t| t.route(x)).collect())
    }

    pub fn leaf_matrix(&self, data: &Dataset) -> Result<LeafMatrix> {
        if data.p() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: data.p(),
            });
        }
        let n = data.n();
        let cols = data.columns();
        let columns = map_indices(self.trees.len(), |b| {
            Ok((0..n)
                .map(|i| self.trees[b].route_column_major(&cols, n, i))
                .collect::<Vec<u32>>())
        })?;
        Ok(LeafMatrix {
            rows: n,
            trees: self.trees.len(),
            entries: columns.concat(),
        })
    }

    /// Mean over trees of the leaf means reached by `x`.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let sum: f64 = self
            .trees
            .iter()
            .map(|t| {
                let leaf = t.route(x);
                t.leaf_mean(leaf).expect("routed leaf exists")
            })
            .sum();
        Ok(sum / self.trees.len() as f64)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }
}

pub fn fit_forest(data: &Dataset, params: &ForestParams, seed: SeedSpec) -> Result<(Forest, LeafMatrix)> {
    let forest = Forest::fit(data, params, seed)?;
    let leaves = forest.leaf_matrix(data)?;
    Ok((forest, leaves))
}

pub fn predict_forest_mean(forest: &Forest, x: &[f64]) -> Result<f64> {
    forest.predict_mean(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Decrease in sum of squared deviations.
    pub gain: f64,
    pub left_count: usize,
}

/// Best variance-reduction split of `rows` (indices into `data`, repeats
/// allowed) over `mtry` features sampled without replacement. `None` when no
/// split has positive gain with both children holding at least
/// `min_node_size` rows.
pub fn find_best_split<R: Rng>(
    rows: &[usize],
    data: &Dataset,
    mtry: usize,
    min_node_size: usize,
    rng: &mut R,
) -> Option<Split> {
    let cols = data.columns();
    let rows: Vec<u32> = rows.iter().map(|&r| r as u32).collect();
    let mut features = sample_features(rng, data.p(), mtry);
    features.sort_unstable();
    best_split(
        &cols,
        data.n(),
        data.responses(),
        &rows,
        &features,
        min_node_size,
        None,
        &mut Scratch::default(),
    )
}

fn sample_features<R: Rng>(rng: &mut R, p: usize, mtry: usize) -> Vec<usize> {
    if mtry >= p {
        (0..p).collect()
    } else {
        index::sample(rng, p, mtry).into_vec()
    }
}

/// Dense per-feature ranks of the training values, so large nodes can
/// bucket rows by value instead of sorting them.
struct Ranks {
    /// Column-major, like the feature columns.
    rank: Vec<u32>,
    /// Distinct sorted values per feature.
    values: Vec<Vec<f64>>,
}

impl Ranks {
    fn new(cols: &[f64], n: usize, p: usize) -> Ranks {
        let mut rank = vec![0u32; n * p];
        let mut values = Vec::with_capacity(p);
        let mut idx: Vec<u32> = Vec::with_capacity(n);
        for f in 0..p {
            let col = &cols[f * n..(f + 1) * n];
            idx.clear();
            idx.extend(0..n as u32);
            idx.sort_unstable_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            let mut distinct: Vec<f64> = Vec::new();
            for &i in &idx {
                let v = col[i as usize];
                if distinct.last() != Some(&v) {
                    distinct.push(v);
                }
                rank[f * n + i as usize] = (distinct.len() - 1) as u32;
            }
            values.push(distinct);
        }
        Ranks { rank, values }
    }
}

#[derive(Default)]
struct Scratch {
    pairs: Vec<(f64, f64)>,
    ranked: Vec<(u32, f64)>,
    counts: Vec<u32>,
    sums: Vec<f64>,
}

struct Best {
    split: Option<Split>,
}

impl Best {
    fn offer(&mut self, feature: usize, lo: f64, hi: f64, gain: f64, left_count: usize) {
        if self.split.is_none_or(|b| gain > b.gain) {
            let mid = lo + (hi - lo) / 2.0;
            self.split = Some(Split {
                feature,
                threshold: if mid < hi { mid } else { lo },
                gain,
                left_count,
            });
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn best_split(
    cols: &[f64],
    n: usize,
    y: &[f64],
    rows: &[u32],
    features: &[usize],
    min_node_size: usize,
    ranks: Option<&Ranks>,
    scratch: &mut Scratch,
) -> Option<Split> {
    let m = rows.len();
    let min_node_size = min_node_size.max(1);
    if m < 2 || m < 2 * min_node_size {
        return None;
    }
    let first = y[rows[0] as usize];
    if rows.iter().all(|&r| y[r as usize] == first) {
        return None;
    }
    let mean = rows.iter().map(|&r| y[r as usize]).sum::<f64>() / m as f64;
    let sse: f64 = rows.iter().map(|&r| (y[r as usize] - mean).powi(2)).sum();
    let total: f64 = rows.iter().map(|&r| y[r as usize] - mean).sum();
    let base = total * total / m as f64;

    let mut best = Best { split: None };
    for &f in features {
        let Some(r) = ranks else {
            let col = &cols[f * n..(f + 1) * n];
            let buf = &mut scratch.pairs;
            buf.clear();
            buf.extend(rows.iter().map(|&r| (col[r as usize], y[r as usize] - mean)));
            buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            scan_sorted(f, buf, total, base, min_node_size, &mut best, |v| v);
            continue;
        };
        let rank = &r.rank[f * n..(f + 1) * n];
        let values = &r.values[f];
        // bucketing costs O(m + distinct), sorting O(m log m)
        if values.len() <= 32 * m {
            scan_buckets(
                f,
                rank,
                values,
                y,
                rows,
                mean,
                total,
                base,
                min_node_size,
                scratch,
                &mut best,
            );
        } else {
            let buf = &mut scratch.ranked;
            buf.clear();
            buf.extend(rows.iter().map(|&r| (rank[r as usize], y[r as usize] - mean)));
            buf.sort_unstable_by_key(|p| p.0);
            scan_sorted(f, buf, total, base, min_node_size, &mut best, |k| {
                values[k as usize]
            });
        }
    }
    best.split.filter(|b| b.gain > 1e-12 * sse && b.gain > 0.0)
}

/// Scans `(key, centred response)` pairs sorted by key; `value` maps a key
/// back to the feature value.
fn scan_sorted<K: Copy + PartialEq>(
    f: usize,
    buf: &[(K, f64)],
    total: f64,
    base: f64,
    min_node_size: usize,
    best: &mut Best,
    value: impl Fn(K) -> f64,
) {
    let m = buf.len();
    let mut left_sum = 0.0;
    for k in 1..m {
        left_sum += buf[k - 1].1;
        if k < min_node_size || m - k < min_node_size {
            continue;
        }
        if buf[k - 1].0 == buf[k].0 {
            continue;
        }
        let right_sum = total - left_sum;
        let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (m - k) as f64 - base;
        best.offer(f, value(buf[k - 1].0), value(buf[k].0), gain, k);
    }
}

#[allow(clippy::too_many_arguments)]
fn scan_buckets(
    f: usize,
    rank: &[u32],
    values: &[f64],
    y: &[f64],
    rows: &[u32],
    mean: f64,
    total: f64,
    base: f64,
    min_node_size: usize,
    scratch: &mut Scratch,
    best: &mut Best,
) {
    let m = rows.len();
    let (counts, sums) = (&mut scratch.counts, &mut scratch.sums);
    counts.clear();
    counts.resize(values.len(), 0);
    sums.clear();
    sums.resize(values.len(), 0.0);
    for &r in rows {
        let k = rank[r as usize] as usize;
        counts[k] += 1;
        sums[k] += y[r as usize] - mean;
    }
    let (mut left_count, mut left_sum) = (0usize, 0.0);
    let mut prev: Option<usize> = None;
    for k in 0..values.len() {
        if counts[k] == 0 {
            continue;
        }
        if let Some(j) = prev {
            if left_count >= min_node_size && m - left_count >= min_node_size {
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / left_count as f64
                    + right_sum * right_sum / (m - left_count) as f64
                    - base;
                best.offer(f, values[j], values[k], gain, left_count);
            }
        }
        left_count += counts[k] as usize;
        left_sum += sums[k];
        prev = Some(k);
    }
}

struct Grower<'a> {
    cols: Vec<f64>,
    ranks: Ranks,
    y: &'a [f64],
    n: usize,
    p: usize,
    params: &'a ForestParams,
    seed: SeedSpec,
}

impl Grower<'_> {
    fn grow(&self, tree_index: usize) -> Result<Tree> {
        let mut rows: Vec<u32> = if self.params.bootstrap {
            let mut rng = self.seed.stream(tag::TREE, tree_index as u64);
            (0..self.n).map(|_| rng.gen_range(0..self.n) as u32).collect()
        } else {
            (0..self.n as u32).collect()
        };
        let mut state = GrowState {
            nodes: Vec::new(),
            leaves: 0,
            scratch: Scratch::default(),
            tree_index: tree_index as u64,
        };
        self.grow_node(&mut state, &mut rows, 0, 1);
        Tree::from_nodes(state.nodes, self.p)
    }

    fn grow_node(&self, st: &mut GrowState, rows: &mut [u32], depth: u32, heap: u64) -> u32 {
        let id = st.nodes.len() as u32;
        let split = if depth < self.params.depth_limit() {
            let mut rng = self.seed.substream(tag::NODE, st.tree_index, heap);
            let mut features = sample_features(&mut rng, self.p, self.params.resolved_mtry(self.p));
            features.sort_unstable();
            best_split(
                &self.cols,
                self.n,
                self.y,
                rows,
                &features,
                self.params.min_node_size,
                Some(&self.ranks),
                &mut st.scratch,
            )
        } else {
            None
        };
        let Some(split) = split else {
            let mean = rows.iter().map(|&r| self.y[r as usize]).sum::<f64>() / rows.len() as f64;
            st.nodes.push(TreeNode {
                depth,
                kind: NodeKind::Leaf {
                    leaf_id: st.leaves,
                    mean_response: mean,
                    sample_count: rows.len() as u32,
                },
            });
            st.leaves += 1;
            return id;
        };
        st.nodes.push(TreeNode {
            depth,
            kind: NodeKind::Leaf {
                leaf_id: 0,
                mean_response: 0.0,
                sample_count: 0,
            },
        });
        let col = &self.cols[split.feature * self.n..(split.feature + 1) * self.n];
        let mut k = 0;
        for i in 0..rows.len() {
            if col[rows[i] as usize] <= split.threshold {
                rows.swap(i, k);
                k += 1;
            }
        }
        debug_assert_eq!(k, split.left_count);
        let (left_rows, right_rows) = rows.split_at_mut(k);
        let left = self.grow_node(st, left_rows, depth + 1, heap.wrapping_mul(2));
        let right = self.grow_node(st, right_rows, depth + 1, heap.wrapping_mul(2) | 1);
        st.nodes[id as usize].kind = NodeKind::Split {
            feature: split.feature as u32,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

struct GrowState {
    nodes: Vec<TreeNode>,
    leaves: u32,
    scratch: Scratch,
    tree_index: u64,
}
