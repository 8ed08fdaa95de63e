//! CART trees with Gini splits, bagged into a random forest.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per node; `None` means `floor(sqrt(p))`.
    pub features_per_split: Option<usize>,
    /// Draw a same-size bootstrap sample per tree. Disabled, every tree sees
    /// the full training set.
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 8,
            features_per_split: None,
            bootstrap: true,
            max_depth: None,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { class } => return class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

fn argmax_first(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Best threshold on one feature, minimising the size-weighted Gini
/// impurity. `score` is `sum_side (n_side - sum_c n_c^2 / n_side)`, which is
/// `n` times the weighted impurity.
fn best_threshold(
    x: &[Vec<f64>],
    y: &[usize],
    idx: &[usize],
    feature: usize,
    n_classes: usize,
    min_leaf: usize,
    scratch: &mut Vec<(f64, usize)>,
) -> Option<Split> {
    scratch.clear();
    scratch.extend(idx.iter().map(|&i| (x[i][feature], y[i])));
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = scratch.len();
    if n < 2 || scratch[0].0 == scratch[n - 1].0 {
        return None;
    }
    let mut right = vec![0usize; n_classes];
    for &(_, c) in scratch.iter() {
        right[c] += 1;
    }
    let mut left = vec![0usize; n_classes];
    let mut best: Option<Split> = None;
    for j in 1..n {
        let c = scratch[j - 1].1;
        left[c] += 1;
        right[c] -= 1;
        let (a, b) = (scratch[j - 1].0, scratch[j].0);
        if a == b || j < min_leaf || n - j < min_leaf {
            continue;
        }
        let (nl, nr) = (j as f64, (n - j) as f64);
        let sl: f64 = left.iter().map(|&k| (k * k) as f64).sum();
        let sr: f64 = right.iter().map(|&k| (k * k) as f64).sum();
        let score = (nl - sl / nl) + (nr - sr / nr);
        if best.as_ref().is_none_or(|s| score < s.score) {
            let mut threshold = a + (b - a) / 2.0;
            if threshold >= b || threshold < a {
                threshold = a;
            }
            best = Some(Split {
                feature,
                threshold,
                score,
            });
        }
    }
    best
}

/// Grows one tree on `sample` (row indices, repeats allowed).
///
/// At each node `mtry` features are tried in random order; if none of them
/// admits a split, the remaining features are scanned until one does, so a
/// node only becomes an impure leaf when its rows are identical on every
/// feature (or depth / leaf-size limits stop it).
pub fn grow_tree<R: Rng>(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    sample: Vec<usize>,
    mtry: usize,
    params: &ForestParams,
    rng: &mut R,
) -> Tree {
    let p = x.first().map_or(0, Vec::len);
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut stack: Vec<(usize, Vec<usize>, usize)> = Vec::new();
    nodes.push(TreeNode::Leaf { class: 0 });
    stack.push((0, sample, 0));
    let mut features: Vec<usize> = (0..p).collect();
    let mut scratch = Vec::new();
    let min_leaf = params.min_leaf.max(1);

    while let Some((node, idx, depth)) = stack.pop() {
        let mut counts = vec![0usize; n_classes];
        for &i in &idx {
            counts[y[i]] += 1;
        }
        let majority = argmax_first(&counts);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || idx.len() < 2 * min_leaf {
            nodes[node] = TreeNode::Leaf { class: majority };
            continue;
        }

        features.shuffle(rng);
        let mut best: Option<Split> = None;
        for (tried, &f) in features.iter().enumerate() {
            if tried >= mtry && best.is_some() {
                break;
            }
            if let Some(s) = best_threshold(x, y, &idx, f, n_classes, min_leaf, &mut scratch) {
                if best.as_ref().is_none_or(|b| s.score < b.score) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else {
            nodes[node] = TreeNode::Leaf { class: majority };
            continue;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| x[i][split.feature] <= split.threshold);
        let left = nodes.len();
        nodes.push(TreeNode::Leaf { class: 0 });
        let right = nodes.len();
        nodes.push(TreeNode::Leaf { class: 0 });
        nodes[node] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push((right, r, depth + 1));
        stack.push((left, l, depth + 1));
    }
    Tree { nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    n_classes: usize,
}

impl Forest {
    /// Tree `t` draws from stream `t` of the generator keyed by `seed`, so the
    /// forest is identical for any thread count.
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: &ForestParams, seed: u64) -> Forest {
        let p = x.first().map_or(0, Vec::len);
        let mtry = params
            .features_per_split
            .unwrap_or_else(|| (p as f64).sqrt().floor() as usize)
            .clamp(1, p.max(1));
        let n = x.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng_stream(seed, t as u64);
                let sample: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                grow_tree(x, y, n_classes, sample, mtry, params, &mut rng)
            })
            .collect();
        Forest { trees, n_classes }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Majority vote; ties go to the smaller class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        argmax_first(&votes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tree_memorises_distinct_rows() {
        // XOR layout: no single split lowers impurity at the root
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = vec![0, 1, 1, 0];
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            ..ForestParams::default()
        };
        let f = Forest::fit(&x, &y, 2, &params, 3);
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(f.predict(xi), yi);
        }
    }

    #[test]
    fn identical_rows_become_majority_leaf() {
        let x = vec![vec![1.0], vec![1.0], vec![1.0]];
        let y = vec![1, 0, 1];
        let mut rng = seed::rng(0);
        let t = grow_tree(&x, &y, 2, vec![0, 1, 2], 1, &ForestParams::default(), &mut rng);
        assert_eq!(t.len(), 1);
        assert_eq!(t.predict(&[1.0]), 1);
    }

    #[test]
    fn vote_ties_pick_smaller_class() {
        let leaf = |c| Tree {
            nodes: vec![TreeNode::Leaf { class: c }],
        };
        let f = Forest {
            trees: vec![leaf(1), leaf(0)],
            n_classes: 2,
        };
        assert_eq!(f.predict(&[0.0]), 0);
    }

    #[test]
    fn threshold_between_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let x = vec![vec![a], vec![b]];
        let y = vec![0, 1];
        let mut rng = seed::rng(0);
        let t = grow_tree(&x, &y, 2, vec![0, 1], 1, &ForestParams::default(), &mut rng);
        assert_eq!(t.predict(&[a]), 0);
        assert_eq!(t.predict(&[b]), 1);
    }

    #[test]
    fn depth_cap() {
        let x: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..16).map(|i| i % 2).collect();
        let params = ForestParams {
            max_depth: Some(2),
            ..ForestParams::default()
        };
        let mut rng = seed::rng(0);
        let t = grow_tree(&x, &y, 2, (0..16).collect(), 1, &params, &mut rng);
        assert!(t.depth() <= 2);
    }
}
