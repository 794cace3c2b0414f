//! CART regression trees grown best-first by variance reduction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 4,
            max_leaves: 25,
            min_samples_leaf: 1,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_leaves == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Config("max_leaves and min_samples_leaf must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Reduction of the sum of squared errors.
    pub gain: f64,
}

/// Mean with the targets summed in sorted order, so it does not depend on
/// sample order.
fn canonical_mean(targets: &[f64], indices: &[usize]) -> f64 {
    let mut ys: Vec<f64> = indices.iter().map(|&i| targets[i]).collect();
    ys.sort_by(f64::total_cmp);
    ys.iter().sum::<f64>() / ys.len() as f64
}

/// Best variance-reduction split of `indices` with at least `min_leaf`
/// samples per side. Ties keep the lowest feature, then the lowest threshold.
pub fn best_split(inputs: &[Vec<f64>], targets: &[f64], indices: &[usize], min_leaf: usize) -> Option<Split> {
    let n = indices.len();
    let min_leaf = min_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let first = targets[indices[0]];
    if indices.iter().all(|&i| targets[i] == first) {
        return None;
    }
    let features = inputs[indices[0]].len();
    let mut best: Option<Split> = None;
    let mut order = indices.to_vec();
    for f in 0..features {
        order.sort_by(|&a, &b| {
            inputs[a][f]
                .total_cmp(&inputs[b][f])
                .then(targets[a].total_cmp(&targets[b]))
        });
        let total: f64 = order.iter().map(|&i| targets[i]).sum();
        let parent = total * total / n as f64;
        let mut left = 0.0;
        for k in 1..n {
            left += targets[order[k - 1]];
            if k < min_leaf || n - k < min_leaf {
                continue;
            }
            let (lo, hi) = (inputs[order[k - 1]][f], inputs[order[k]][f]);
            if lo >= hi {
                continue;
            }
            let right = total - left;
            let gain = left * left / k as f64 + right * right / (n - k) as f64 - parent;
            if best.is_none_or(|b| gain > b.gain) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some(Split {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best.filter(|s| s.gain > 0.0)
}

struct Open {
    node: usize,
    indices: Vec<usize>,
    depth: usize,
    split: Option<Split>,
}

impl RegressionTree {
    /// Fits on the rows of `inputs` listed in `indices`.
    pub fn fit_subset(inputs: &[Vec<f64>], targets: &[f64], indices: &[usize], params: &TreeParams) -> Result<Self> {
        params.validate()?;
        if indices.is_empty() {
            return Err(Error::EmptyInput("regression tree needs at least one sample".into()));
        }
        let min_leaf = params.min_samples_leaf;
        let candidate = |idx: &[usize], depth: usize| {
            if depth < params.max_depth {
                best_split(inputs, targets, idx, min_leaf)
            } else {
                None
            }
        };
        let mut nodes = vec![Node::Leaf {
            value: canonical_mean(targets, indices),
        }];
        let mut open = vec![Open {
            node: 0,
            indices: indices.to_vec(),
            depth: 0,
            split: candidate(indices, 0),
        }];
        let mut leaves = 1;
        while leaves < params.max_leaves {
            let pick = open
                .iter()
                .enumerate()
                .filter_map(|(i, o)| o.split.map(|s| (i, s.gain, o.node)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)));
            let Some((i, _, _)) = pick else { break };
            let leaf = open.swap_remove(i);
            let split = leaf.split.expect("picked leaves have a split");
            let (l_idx, r_idx): (Vec<usize>, Vec<usize>) = leaf
                .indices
                .iter()
                .partition(|&&s| inputs[s][split.feature] <= split.threshold);
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf {
                value: canonical_mean(targets, &l_idx),
            });
            nodes.push(Node::Leaf {
                value: canonical_mean(targets, &r_idx),
            });
            nodes[leaf.node] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            };
            leaves += 1;
            let depth = leaf.depth + 1;
            open.push(Open {
                node: left,
                split: candidate(&l_idx, depth),
                indices: l_idx,
                depth,
            });
            open.push(Open {
                node: right,
                split: candidate(&r_idx, depth),
                indices: r_idx,
                depth,
            });
        }
        Ok(Self { nodes })
    }

    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], params: &TreeParams) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Shape(format!("{} inputs, {} targets", inputs.len(), targets.len())));
        }
        let indices: Vec<usize> = (0..inputs.len()).collect();
        Self::fit_subset(inputs, targets, &indices, params)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sse(ys: &[f64]) -> f64 {
        if ys.is_empty() {
            return 0.0;
        }
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        ys.iter().map(|y| (y - m) * (y - m)).sum()
    }

    /// Tries every feature and every distinct-value boundary, scoring the
    /// children's squared error directly.
    fn brute_force(inputs: &[Vec<f64>], targets: &[f64]) -> (usize, f64, f64) {
        let mut best = (usize::MAX, f64::NAN, f64::INFINITY);
        for f in 0..inputs[0].len() {
            let mut values: Vec<f64> = inputs.iter().map(|r| r[f]).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for w in values.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let (mut l, mut r) = (Vec::new(), Vec::new());
                for (x, y) in inputs.iter().zip(targets) {
                    if x[f] <= t {
                        l.push(*y)
                    } else {
                        r.push(*y)
                    }
                }
                let cost = sse(&l) + sse(&r);
                if cost < best.2 - 1e-12 {
                    best = (f, t, cost);
                }
            }
        }
        best
    }

    #[test]
    fn zero_depth_is_global_mean() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let t = RegressionTree::fit(&x, &[1.0, 2.0, 6.0], &TreeParams { max_depth: 0, ..Default::default() }).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { value: 3.0 }]);
    }

    #[test]
    fn single_threshold_separates() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 4 { 0.0 } else { 1.0 }).collect();
        let t = RegressionTree::fit(&x, &y, &TreeParams::default()).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(
            t.nodes[0],
            Node::Split {
                feature: 0,
                threshold: 3.5,
                left: 1,
                right: 2
            }
        );
        assert_eq!(t.nodes[1], Node::Leaf { value: 0.0 });
        assert_eq!(t.nodes[2], Node::Leaf { value: 1.0 });
    }

    #[test]
    fn constant_targets_single_leaf() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let t = RegressionTree::fit(&x, &[0.3; 12], &TreeParams { max_depth: 6, ..Default::default() }).unwrap();
        assert_eq!(t.leaf_count(), 1);
    }

    #[test]
    fn root_split_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..50 {
            let n = rng.random_range(4..=20);
            let p = rng.random_range(1..=3);
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..p).map(|_| rng.random_range(0..8) as f64 / 4.0).collect())
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (f, t, _) = brute_force(&x, &y);
            let got = best_split(&x, &y, &(0..n).collect::<Vec<_>>(), 1);
            match got {
                Some(s) => {
                    assert_eq!(s.feature, f, "trial {trial}");
                    assert_eq!(s.threshold, t, "trial {trial}");
                }
                None => assert_eq!(f, usize::MAX),
            }
        }
    }

    #[test]
    fn respects_depth_and_leaf_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<f64> = x.iter().map(|r| (r[0] * 9.0).sin() + r[1]).collect();
        let t = RegressionTree::fit(&x, &y, &TreeParams::default()).unwrap();
        assert!(t.depth() <= 4);
        assert!(t.leaf_count() <= 25);
        let t = RegressionTree::fit(&x, &y, &TreeParams { max_depth: 10, max_leaves: 7, min_samples_leaf: 1 }).unwrap();
        assert_eq!(t.leaf_count(), 7);
        let t = RegressionTree::fit(&x, &y, &TreeParams { max_depth: 10, max_leaves: 99, min_samples_leaf: 40 }).unwrap();
        assert!(t.leaf_count() <= 300 / 40);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn sample_order_does_not_matter(seed in any::<u64>(), n in 5usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0..6) as f64, rng.random()]).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.reverse();
            perm.rotate_left(seed as usize % n);
            let xp: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
            let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
            let a = RegressionTree::fit(&x, &y, &TreeParams::default()).unwrap();
            let b = RegressionTree::fit(&xp, &yp, &TreeParams::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
