//! CART regression tree growth on a bootstrap sample.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

use super::Dataset;

/// A node of a fitted tree. Nodes are stored in pre-order, so the left child
/// of a split at position `i` is always `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode<T> {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        right: usize,
    },
    /// `members` lists every training row (in-bag or not) that lands here,
    /// ascending. `in_bag` counts bootstrap draws, with multiplicity.
    Leaf { in_bag: usize, members: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree<T> {
    pub(crate) nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    /// Index of the leaf node `x` falls into.
    pub fn leaf_index(&self, x: &[T]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        i + 1
                    } else {
                        *right
                    };
                }
                TreeNode::Leaf { .. } => return i,
            }
        }
    }

    pub fn leaf_members(&self, x: &[T]) -> &[u32] {
        match &self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { members, .. } => members,
            TreeNode::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[TreeNode<T>], i: usize) -> (usize, usize) {
            // returns (depth below i, index after the subtree)
            match &nodes[i] {
                TreeNode::Leaf { .. } => (0, i + 1),
                TreeNode::Split { right, .. } => {
                    let (dl, _) = walk(nodes, i + 1);
                    let (dr, end) = walk(nodes, *right);
                    (1 + dl.max(dr), end)
                }
            }
        }
        walk(&self.nodes, 0).0
    }
}

pub(crate) struct GrowParams {
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub mtry: usize,
    pub bootstrap: bool,
}

struct Best<T> {
    score: T,
    feature: usize,
    threshold: T,
}

struct Grower<'a, T> {
    data: &'a Dataset<T>,
    params: &'a GrowParams,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode<T>>,
    features: Vec<usize>,
    pairs: Vec<(T, T)>,
}

pub(crate) fn grow<T: Scalar>(data: &Dataset<T>, params: &GrowParams, seed: u64) -> Tree<T> {
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_bag: Vec<u32> = if params.bootstrap {
        (0..n).map(|_| rng.gen_range(0..n) as u32).collect()
    } else {
        (0..n as u32).collect()
    };
    let mut g = Grower {
        data,
        params,
        rng,
        nodes: Vec::new(),
        features: (0..data.n_features()).collect(),
        pairs: Vec::with_capacity(n),
    };
    g.build(&mut in_bag, 0);

    let mut tree = Tree { nodes: g.nodes };
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); tree.nodes.len()];
    for i in 0..n {
        members[tree.leaf_index(data.row(i))].push(i as u32);
    }
    for (node, m) in tree.nodes.iter_mut().zip(members) {
        if let TreeNode::Leaf { members, .. } = node {
            *members = m;
        }
    }
    tree
}

impl<T: Scalar> Grower<'_, T> {
    fn build(&mut self, idx: &mut [u32], depth: usize) {
        let at = self.nodes.len();
        let leaf = TreeNode::Leaf {
            in_bag: idx.len(),
            members: Vec::new(),
        };
        let min_leaf = self.params.min_samples_leaf;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if idx.len() < 2 * min_leaf || depth_capped || self.targets_constant(idx) {
            self.nodes.push(leaf);
            return;
        }
        let Some(best) = self.best_split(idx) else {
            self.nodes.push(leaf);
            return;
        };

        // stable partition: x <= threshold first
        let (left, right): (Vec<u32>, Vec<u32>) = idx
            .iter()
            .partition(|&&i| self.data.value(i as usize, best.feature) <= best.threshold);
        let n_left = left.len();
        debug_assert!(n_left >= min_leaf && right.len() >= min_leaf);
        idx[..n_left].copy_from_slice(&left);
        idx[n_left..].copy_from_slice(&right);

        self.nodes.push(TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            right: usize::MAX,
        });
        let (l, r) = idx.split_at_mut(n_left);
        self.build(l, depth + 1);
        let right_at = self.nodes.len();
        if let TreeNode::Split { right, .. } = &mut self.nodes[at] {
            *right = right_at;
        }
        self.build(r, depth + 1);
    }

    fn targets_constant(&self, idx: &[u32]) -> bool {
        let y0 = self.data.target(idx[0] as usize);
        idx.iter().all(|&i| self.data.target(i as usize) == y0)
    }

    /// Draws features in random order until `mtry` non-constant ones have
    /// been scored (or all are exhausted) and returns the best split among
    /// them. Ties go to the lowest feature index, then lowest threshold.
    fn best_split(&mut self, idx: &[u32]) -> Option<Best<T>> {
        self.features.shuffle(&mut self.rng);
        let min_leaf = self.params.min_samples_leaf;
        let n = idx.len();
        let total: T = idx.iter().map(|&i| self.data.target(i as usize)).sum();
        let nt = T::from_usize(n).unwrap();
        let mut best: Option<Best<T>> = None;
        let mut scored = 0;
        for k in 0..self.features.len() {
            if scored == self.params.mtry {
                break;
            }
            let f = self.features[k];
            self.pairs.clear();
            self.pairs.extend(
                idx.iter()
                    .map(|&i| (self.data.value(i as usize, f), self.data.target(i as usize))),
            );
            self.pairs
                .sort_by(|a, b| a.0.partial_cmp(&b.0).expect("features are finite"));
            if self.pairs[0].0 == self.pairs[n - 1].0 {
                continue;
            }
            scored += 1;
            let mut left_sum = T::zero();
            for i in 1..n {
                left_sum = left_sum + self.pairs[i - 1].1;
                if i < min_leaf || n - i < min_leaf {
                    continue;
                }
                let (lo, hi) = (self.pairs[i - 1].0, self.pairs[i].0);
                if lo == hi {
                    continue;
                }
                let nl = T::from_usize(i).unwrap();
                let right_sum = total - left_sum;
                // maximizing this is maximizing the variance reduction
                let score = left_sum * left_sum / nl + right_sum * right_sum / (nt - nl);
                let mut threshold = (lo + hi) / T::lit(2.0);
                if !(threshold < hi) {
                    threshold = lo;
                }
                let better = match &best {
                    None => true,
                    Some(b) => {
                        score > b.score
                            || (score == b.score
                                && (f < b.feature || (f == b.feature && threshold < b.threshold)))
                    }
                };
                if better {
                    best = Some(Best {
                        score,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }
}
