//! Bagged classification trees (Gini impurity, random feature subsets).

use rand::seq::index::sample;
use rand::Rng;

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SimRng};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Share of class-1 training rows in the leaf.
        prob: f64,
        /// Training rows (with bootstrap multiplicity) that reached the leaf.
        n: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { prob, .. } => return *prob,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn leaf_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { n, .. } => Some(*n),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    pub min_leaf: usize,
}

impl RandomForest {
    pub(crate) fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    y: &'a [f64],
    min_leaf: usize,
    max_features: usize,
    nodes: Vec<Node>,
    scratch: Vec<(f64, f64)>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl TreeBuilder<'_> {
    fn leaf(&self, rows: &[usize]) -> Node {
        let ones: f64 = rows.iter().map(|&i| self.y[i]).sum();
        Node::Leaf {
            prob: ones / rows.len() as f64,
            n: rows.len(),
        }
    }

    /// Weighted Gini impurity (n · gini) of a node with `ones` positives.
    fn gini(n: f64, ones: f64) -> f64 {
        if n == 0.0 {
            return 0.0;
        }
        let p = ones / n;
        n * 2.0 * p * (1.0 - p)
    }

    fn best_split(&mut self, rows: &[usize], rng: &mut SimRng) -> Option<BestSplit> {
        let m = rows.len();
        let total_ones: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let parent = Self::gini(m as f64, total_ones);
        if parent <= 0.0 {
            return None;
        }
        let n_features = self.columns.len();
        let candidates = sample(rng, n_features, self.max_features.min(n_features));
        let mut best: Option<BestSplit> = None;
        for feature in candidates.iter() {
            let col = &self.columns[feature];
            self.scratch.clear();
            self.scratch
                .extend(rows.iter().map(|&i| (col[i], self.y[i])));
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_ones = 0.0;
            for k in 0..m - 1 {
                left_ones += self.scratch[k].1;
                let left_n = k + 1;
                if left_n < self.min_leaf {
                    continue;
                }
                if m - left_n < self.min_leaf {
                    break;
                }
                let (v, next) = (self.scratch[k].0, self.scratch[k + 1].0);
                if next <= v {
                    continue;
                }
                let impurity = Self::gini(left_n as f64, left_ones)
                    + Self::gini((m - left_n) as f64, total_ones - left_ones);
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    best = Some(BestSplit {
                        feature,
                        threshold: 0.5 * (v + next),
                        impurity,
                    });
                }
            }
        }
        best.filter(|b| b.impurity < parent - 1e-12)
    }

    fn build(&mut self, rows: Vec<usize>, rng: &mut SimRng) {
        // (node slot, rows)
        let mut stack = vec![(0usize, rows)];
        self.nodes.push(Node::Leaf { prob: 0.0, n: 0 });
        while let Some((slot, rows)) = stack.pop() {
            let split = if rows.len() >= 2 * self.min_leaf {
                self.best_split(&rows, rng)
            } else {
                None
            };
            match split {
                None => self.nodes[slot] = self.leaf(&rows),
                Some(s) => {
                    let col = &self.columns[s.feature];
                    let (left, right): (Vec<usize>, Vec<usize>) =
                        rows.into_iter().partition(|&i| col[i] <= s.threshold);
                    let l = self.nodes.len();
                    self.nodes.push(Node::Leaf { prob: 0.0, n: 0 });
                    self.nodes.push(Node::Leaf { prob: 0.0, n: 0 });
                    self.nodes[slot] = Node::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left: l,
                        right: l + 1,
                    };
                    stack.push((l + 1, right));
                    stack.push((l, left));
                }
            }
        }
    }
}

pub(crate) fn fit(
    x: &FeatureMatrix,
    y: &[f64],
    n_trees: usize,
    min_leaf: usize,
    rng: &mut SimRng,
) -> Result<RandomForest> {
    let n = x.n_rows();
    if n_trees == 0 {
        return Err(Error::fit("random forest", "n_trees must be at least 1"));
    }
    if min_leaf == 0 || n < 2 * min_leaf {
        return Err(Error::fit(
            "random forest",
            format!("{n} rows is fewer than 2 x min_leaf ({min_leaf})"),
        ));
    }
    let columns: Vec<Vec<f64>> = (0..x.n_cols()).map(|j| x.column(j)).collect();
    let max_features = (x.n_cols() as f64).sqrt().ceil() as usize;
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let mut tree_rng = rng_from_seed(rng.random());
        let rows: Vec<usize> = (0..n).map(|_| tree_rng.random_range(0..n)).collect();
        let mut builder = TreeBuilder {
            columns: &columns,
            y,
            min_leaf,
            max_features,
            nodes: Vec::new(),
            scratch: Vec::with_capacity(n),
        };
        builder.build(rows, &mut tree_rng);
        trees.push(Tree {
            nodes: builder.nodes,
        });
    }
    Ok(RandomForest { trees, min_leaf })
}
