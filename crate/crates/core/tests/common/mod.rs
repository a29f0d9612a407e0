#![allow(dead_code)]

use kernelforest::forest::{NodeKind, TreeNode};
use kernelforest::{Forest, ForestParams, SeedSpec, Tree};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random binary tree of depth at most `max_depth`. Nodes are stored in a
/// random order (root first) and leaf ids are a random permutation, so the
/// layout differs from what the grower produces.
pub fn random_tree<R: Rng>(rng: &mut R, max_depth: u32, split_prob: f64) -> Tree {
    // shape: (depth, children)
    let mut shape: Vec<(u32, Option<(usize, usize)>)> = vec![(0, None)];
    let mut frontier = vec![0usize];
    while let Some(i) = frontier.pop() {
        let d = shape[i].0;
        if d < max_depth && (d == 0 || rng.gen_bool(split_prob)) {
            let l = shape.len();
            shape.push((d + 1, None));
            shape.push((d + 1, None));
            shape[i].1 = Some((l, l + 1));
            frontier.push(l);
            frontier.push(l + 1);
        }
    }
    let mut slots: Vec<usize> = (1..shape.len()).collect();
    slots.shuffle(rng);
    let mut pos = vec![0usize; shape.len()];
    for (k, &s) in slots.iter().enumerate() {
        pos[s] = k + 1;
    }
    let leaf_total = shape.iter().filter(|s| s.1.is_none()).count() as u32;
    let mut leaf_ids: Vec<u32> = (0..leaf_total).collect();
    leaf_ids.shuffle(rng);

    let mut nodes = vec![
        TreeNode {
            depth: 0,
            kind: NodeKind::Leaf {
                leaf_id: 0,
                mean_response: 0.0,
                sample_count: 0
            }
        };
        shape.len()
    ];
    let mut next_leaf = 0;
    for (i, &(depth, children)) in shape.iter().enumerate() {
        let kind = match children {
            Some((l, r)) => NodeKind::Split {
                feature: 0,
                threshold: rng.gen::<f64>(),
                left: pos[l] as u32,
                right: pos[r] as u32,
            },
            None => {
                next_leaf += 1;
                NodeKind::Leaf {
                    leaf_id: leaf_ids[next_leaf - 1],
                    mean_response: rng.gen::<f64>(),
                    sample_count: 1,
                }
            }
        };
        nodes[pos[i]] = TreeNode { depth, kind };
    }
    Tree::from_nodes(nodes, 1).expect("generated tree is valid")
}

/// Wraps hand-made trees in a forest so the indexed distance code can run.
pub fn forest_of(trees: Vec<Tree>, max_depth: u32) -> Forest {
    Forest {
        params: ForestParams {
            tree_count: trees.len(),
            max_depth: Some(max_depth),
            mtry: Some(1),
            min_node_size: 1,
            bootstrap: false,
        },
        trees,
        n_features: 1,
        seed: SeedSpec(0),
    }
}

/// Per-tree MRCA distance by walking parent pointers to the root and
/// scanning for the first shared ancestor.
pub fn brute_force_mrca(tree: &Tree, a: u32, b: u32) -> u32 {
    let nodes = tree.nodes();
    let mut parent = vec![usize::MAX; nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        if let NodeKind::Split { left, right, .. } = n.kind {
            parent[left as usize] = i;
            parent[right as usize] = i;
        }
    }
    let root_path = |leaf: u32| {
        let mut v = vec![tree.leaf_node(leaf).expect("leaf exists")];
        while parent[*v.last().unwrap()] != usize::MAX {
            v.push(parent[*v.last().unwrap()]);
        }
        v
    };
    let (pa, pb) = (root_path(a), root_path(b));
    for (ea, n) in pa.iter().enumerate() {
        if let Some(eb) = pb.iter().position(|m| m == n) {
            return ea.max(eb) as u32;
        }
    }
    unreachable!("root is shared")
}
