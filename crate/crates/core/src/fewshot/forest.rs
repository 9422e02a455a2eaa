use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;

pub const N_TREES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    /// Vote for the positive class: 1, 0, or 0.5 for a tied leaf.
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART classification tree with Gini impurity, grown until leaves are pure
/// or no split can separate the remaining samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Best {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn best_split(
    x: ArrayView2<f64>,
    y: &[bool],
    idx: &[usize],
    features: &[usize],
    best: &mut Option<Best>,
) {
    let n = idx.len();
    let total_pos = idx.iter().filter(|&&i| y[i]).count();
    let mut order = idx.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]));
        let mut left_pos = 0;
        for s in 1..n {
            left_pos += y[order[s - 1]] as usize;
            let lo = x[[order[s - 1], f]];
            let hi = x[[order[s], f]];
            if lo == hi {
                continue;
            }
            let right_pos = total_pos - left_pos;
            let imp = (s as f64 * gini(left_pos, s) + (n - s) as f64 * gini(right_pos, n - s))
                / n as f64;
            if best.as_ref().map_or(true, |b| imp < b.impurity) {
                *best = Some(Best {
                    feature: f,
                    threshold: lo + (hi - lo) / 2.0,
                    impurity: imp,
                });
            }
        }
    }
}

impl DecisionTree {
    /// Fits on rows `idx` (repeats allowed), drawing `max_features`
    /// candidate features per node.
    pub fn fit<R: Rng>(
        x: ArrayView2<f64>,
        y: &[bool],
        idx: &[usize],
        max_features: usize,
        rng: &mut R,
    ) -> Self {
        let d = x.ncols();
        let mut tree = DecisionTree { nodes: Vec::new() };
        let mut all_features: Vec<usize> = (0..d).collect();
        // (node slot, sample indices)
        let mut stack = vec![(0usize, idx.to_vec())];
        tree.nodes.push(Node::Leaf(0.0));
        while let Some((slot, samples)) = stack.pop() {
            let pos = samples.iter().filter(|&&i| y[i]).count();
            let leaf = match 2 * pos {
                p if p > samples.len() => 1.0,
                p if p < samples.len() => 0.0,
                _ => 0.5,
            };
            if pos == 0 || pos == samples.len() {
                tree.nodes[slot] = Node::Leaf(leaf);
                continue;
            }
            all_features.shuffle(rng);
            let (tried, rest) = all_features.split_at(max_features.min(d));
            let mut best = None;
            best_split(x, y, &samples, tried, &mut best);
            if best.is_none() {
                // none of the drawn features separates the samples; keep looking
                best_split(x, y, &samples, rest, &mut best);
            }
            let Some(b) = best else {
                tree.nodes[slot] = Node::Leaf(leaf);
                continue;
            };
            let (l, r): (Vec<usize>, Vec<usize>) =
                samples.iter().partition(|&&i| x[[i, b.feature]] <= b.threshold);
            let left = tree.nodes.len();
            tree.nodes.push(Node::Leaf(0.0));
            let right = tree.nodes.len();
            tree.nodes.push(Node::Leaf(0.0));
            tree.nodes[slot] = Node::Split {
                feature: b.feature,
                threshold: b.threshold,
                left,
                right,
            };
            stack.push((right, r));
            stack.push((left, l));
        }
        tree
    }

    pub fn predict(&self, row: ArrayView1<f64>) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Bootstrap-resampled trees with `floor(sqrt(d))` features per split.
    pub fn fit<R: Rng>(x: ArrayView2<f64>, y: &[bool], n_trees: usize, rng: &mut R) -> Self {
        let n = x.nrows();
        let max_features = ((x.ncols() as f64).sqrt().floor() as usize).max(1);
        let trees = (0..n_trees)
            .map(|_| {
                let boot: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                DecisionTree::fit(x, y, &boot, max_features, rng)
            })
            .collect();
        Self { trees }
    }

    /// Fraction of trees voting for the positive class.
    pub fn vote(&self, row: ArrayView1<f64>) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }
}
