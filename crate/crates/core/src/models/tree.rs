//! Binary decision trees shared by the forest and boosting learners.

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    /// Rows with `x[feature] < threshold` go left.
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Output of the node if it were a leaf.
    pub value: f64,
    /// Training weight (forest) or hessian sum (boosting) reaching the node.
    pub cover: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// Arena-allocated tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Multiplier applied to every leaf value at prediction time.
    pub weight: f64,
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Tree { weight: 1.0, nodes: vec![Node { value, cover, split: None }] }
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: ArrayView1<f64>) -> usize {
        let mut i = 0;
        while let Some(s) = &self.nodes[i].split {
            i = if x[s.feature] < s.threshold { s.left } else { s.right };
        }
        i
    }

    /// Unweighted leaf value reached by `x`.
    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        self.nodes[self.leaf_index(x)].value
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> f64 {
        self.weight * self.value(x)
    }

    pub fn is_leaf(&self) -> bool {
        self.nodes[0].split.is_none()
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i].split {
                None => 0,
                Some(s) => 1 + go(t, s.left).max(go(t, s.right)),
            }
        }
        go(self, 0)
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| n.split.map(|s| s.feature))
    }
}

/// Split quality over per-row statistic pairs `(a, b)`, summed per node.
pub(crate) trait Criterion: Sync {
    /// Node score; the gain of a split is `score(L) + score(R) - score(P)`.
    fn score(&self, a: f64, b: f64) -> f64;
    fn leaf_value(&self, a: f64, b: f64) -> f64;
    fn cover(&self, a: f64, b: f64) -> f64;
    /// Whether a child with these sums may exist.
    fn admissible(&self, a: f64, b: f64) -> bool;
    fn accept(&self, gain: f64, a: f64, b: f64) -> bool;
}

/// Row indices sorted by each column, ties by row index.
pub(crate) fn presort(x: ArrayView2<f64>) -> Vec<Vec<u32>> {
    (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let col = x.column(j);
            let mut idx: Vec<u32> = (0..x.nrows() as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

pub(crate) struct Grower<'a, C: Criterion> {
    pub x: ArrayView2<'a, f64>,
    pub a: &'a [f64],
    pub b: &'a [f64],
    pub criterion: &'a C,
    pub max_depth: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Work below which split search stays on the calling thread.
const PARALLEL_WORK: usize = 50_000;

impl<C: Criterion> Grower<'_, C> {
    /// Grows a tree. `sorted[k]` lists the node rows ordered by feature
    /// `features[k]`; `pick` chooses which of those positions to try at each
    /// node and must return them in ascending order.
    pub fn grow(
        &self,
        features: &[usize],
        sorted: Vec<Vec<u32>>,
        pick: &mut dyn FnMut() -> Vec<usize>,
    ) -> Tree {
        let mut nodes = Vec::new();
        let mut left_mark = vec![false; self.x.nrows()];
        self.node(features, sorted, 0, pick, &mut nodes, &mut left_mark);
        Tree { weight: 1.0, nodes }
    }

    fn node(
        &self,
        features: &[usize],
        sorted: Vec<Vec<u32>>,
        depth: usize,
        pick: &mut dyn FnMut() -> Vec<usize>,
        nodes: &mut Vec<Node>,
        left_mark: &mut [bool],
    ) -> usize {
        let rows: &[u32] = sorted.first().map(Vec::as_slice).unwrap_or(&[]);
        let (sa, sb) =
            rows.iter().fold((0.0, 0.0), |(sa, sb), &i| (sa + self.a[i as usize], sb + self.b[i as usize]));
        let id = nodes.len();
        nodes.push(Node {
            value: self.criterion.leaf_value(sa, sb),
            cover: self.criterion.cover(sa, sb),
            split: None,
        });
        // Draw before any stopping rule so the stream position depends only on
        // the tree shape, not on how many rows reached each leaf.
        let tried = pick();
        if depth >= self.max_depth || rows.len() < 2 || features.is_empty() {
            return id;
        }
        let best = self.best_split(features, &sorted, &tried, sa, sb);
        let Some(best) = best.filter(|c| self.criterion.accept(c.gain, sa, sb)) else {
            return id;
        };
        let col = self.x.column(best.feature);
        for &i in rows {
            left_mark[i as usize] = col[i as usize] < best.threshold;
        }
        let mut left = Vec::with_capacity(sorted.len());
        let mut right = Vec::with_capacity(sorted.len());
        for list in sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&i| left_mark[i as usize]);
            left.push(l);
            right.push(r);
        }
        let l = self.node(features, left, depth + 1, pick, nodes, left_mark);
        let r = self.node(features, right, depth + 1, pick, nodes, left_mark);
        nodes[id].split = Some(Split { feature: best.feature, threshold: best.threshold, left: l, right: r });
        id
    }

    fn best_split(
        &self,
        features: &[usize],
        sorted: &[Vec<u32>],
        tried: &[usize],
        sa: f64,
        sb: f64,
    ) -> Option<Candidate> {
        let parent = self.criterion.score(sa, sb);
        let scan = |&k: &usize| self.scan(features[k], &sorted[k], sa, sb, parent);
        let per_feature: Vec<Option<Candidate>> = if sorted[0].len() * tried.len() >= PARALLEL_WORK {
            tried.par_iter().map(scan).collect()
        } else {
            tried.iter().map(scan).collect()
        };
        // Ascending feature order with strict improvement keeps the lowest
        // feature index among equal gains.
        let mut best: Option<Candidate> = None;
        for c in per_feature.into_iter().flatten() {
            if best.is_none_or(|b| c.gain > b.gain) {
                best = Some(c);
            }
        }
        best
    }

    fn scan(&self, feature: usize, rows: &[u32], sa: f64, sb: f64, parent: f64) -> Option<Candidate> {
        let col = self.x.column(feature);
        let (mut la, mut lb) = (0.0, 0.0);
        let mut best: Option<Candidate> = None;
        for w in 0..rows.len().saturating_sub(1) {
            let i = rows[w] as usize;
            la += self.a[i];
            lb += self.b[i];
            let (lo, hi) = (col[i], col[rows[w + 1] as usize]);
            if !(lo < hi) {
                continue;
            }
            let (ra, rb) = (sa - la, sb - lb);
            if !self.criterion.admissible(la, lb) || !self.criterion.admissible(ra, rb) {
                continue;
            }
            let gain = self.criterion.score(la, lb) + self.criterion.score(ra, rb) - parent;
            if best.is_none_or(|b| gain > b.gain) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid > lo { mid } else { hi };
                best = Some(Candidate { feature, threshold, gain });
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn routing_is_strictly_less_than() {
        let t = Tree {
            weight: 2.0,
            nodes: vec![
                Node {
                    value: 0.0,
                    cover: 2.0,
                    split: Some(Split { feature: 1, threshold: 0.5, left: 1, right: 2 }),
                },
                Node { value: -1.0, cover: 1.0, split: None },
                Node { value: 1.0, cover: 1.0, split: None },
            ],
        };
        assert_eq!(t.predict(array![9.0, 0.4].view()), -2.0);
        assert_eq!(t.predict(array![9.0, 0.5].view()), 2.0);
        assert_eq!(t.depth(), 1);
    }
}
