//! Axis-aligned binary trees grown level by level over presorted columns.
//!
//! One grower serves three learners: Gini classification trees for the
//! random forest and the AdaBoost family, and second-order gradient trees
//! for boosting. Each level costs one pass over every presorted column, so a
//! tree of depth `d` costs `O(d · n · p)` after an `O(p · n log n)` sort that
//! is shared by all trees fit to the same rows.

use std::ops::Sub;

use rand::seq::index::sample as sample_without_replacement;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
        /// Training mass that reached the leaf (weighted row count).
        count: f64,
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
    nodes: Vec<Node>,
    /// Largest number of features scanned at any node.
    max_candidates: usize,
}

impl Tree {
    /// Root is `nodes()[0]`; rows with `x[feature] <= threshold` go left.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn max_candidates(&self) -> usize {
        self.max_candidates
    }

    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_of(x)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Row indices of every column sorted by value (ties by index).
#[derive(Debug, Clone)]
pub struct SortedColumns {
    order: Vec<Vec<u32>>,
    /// `values[j][k] = x[order[j][k], j]`, for sequential scans.
    values: Vec<Vec<f64>>,
}

impl SortedColumns {
    pub fn new(x: &FeatureMatrix) -> Self {
        let n = x.n_rows();
        let order = (0..x.n_cols())
            .map(|j| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| {
                    x.get(a as usize, j)
                        .total_cmp(&x.get(b as usize, j))
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect::<Vec<Vec<u32>>>();
        let values = order
            .iter()
            .enumerate()
            .map(|(j, idx)| idx.iter().map(|&i| x.get(i as usize, j)).collect())
            .collect();
        Self { order, values }
    }
}

/// Split-quality rule and leaf model.
pub(crate) trait Criterion {
    type Stats: Copy + Default + Sub<Output = Self::Stats>;

    fn accumulate(&self, stats: &mut Self::Stats, row: usize);
    /// Whether a node with these statistics may be split at all.
    fn splittable(&self, stats: &Self::Stats) -> bool;
    /// Improvement of splitting `parent` into `left`/`right`; `None` when the
    /// split violates a size constraint.
    fn gain(&self, parent: &Self::Stats, left: &Self::Stats, right: &Self::Stats) -> Option<f64>;
    /// Gains at or below this are not worth a split.
    fn min_gain(&self, parent: &Self::Stats) -> f64;
    fn leaf_value(&self, stats: &Self::Stats) -> f64;
    fn leaf_count(&self, stats: &Self::Stats) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct GiniStats {
    pub count: f64,
    pub weight: f64,
    pub weight_events: f64,
}

impl Sub for GiniStats {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            count: self.count - o.count,
            weight: self.weight - o.weight,
            weight_events: self.weight_events - o.weight_events,
        }
    }
}

/// Weighted Gini impurity with a minimum leaf size.
///
/// `count[i]` is the size contribution of row `i` (bootstrap multiplicity, or
/// 1) and `weight[i]` its impurity weight.
pub(crate) struct Gini<'a> {
    pub outcome: &'a [u8],
    pub count: &'a [f64],
    pub weight: &'a [f64],
    pub min_leaf: f64,
}

/// `w · 2 p (1 − p)` for a node of weight `w` and event share `p`.
pub(crate) fn gini_mass(weight: f64, weight_events: f64) -> f64 {
    if weight <= 0.0 {
        return 0.0;
    }
    2.0 * weight_events * (weight - weight_events) / weight
}

impl Criterion for Gini<'_> {
    type Stats = GiniStats;

    #[inline]
    fn accumulate(&self, s: &mut GiniStats, row: usize) {
        let w = self.weight[row];
        s.count += self.count[row];
        s.weight += w;
        if self.outcome[row] == 1 {
            s.weight_events += w;
        }
    }

    fn splittable(&self, s: &GiniStats) -> bool {
        s.count >= 2.0 * self.min_leaf && gini_mass(s.weight, s.weight_events) > 0.0
    }

    #[inline]
    fn gain(&self, p: &GiniStats, l: &GiniStats, r: &GiniStats) -> Option<f64> {
        if l.count < self.min_leaf || r.count < self.min_leaf {
            return None;
        }
        Some(
            gini_mass(p.weight, p.weight_events)
                - gini_mass(l.weight, l.weight_events)
                - gini_mass(r.weight, r.weight_events),
        )
    }

    fn min_gain(&self, p: &GiniStats) -> f64 {
        1e-12 * p.weight
    }

    fn leaf_value(&self, s: &GiniStats) -> f64 {
        if s.weight > 0.0 {
            (s.weight_events / s.weight).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }

    fn leaf_count(&self, s: &GiniStats) -> f64 {
        s.count
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct GradStats {
    pub count: f64,
    pub grad: f64,
    pub hess: f64,
}

impl Sub for GradStats {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            count: self.count - o.count,
            grad: self.grad - o.grad,
            hess: self.hess - o.hess,
        }
    }
}

/// Second-order (Newton) regression criterion with L2 leaf penalty `lambda`.
pub(crate) struct Newton<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub lambda: f64,
    pub min_child_weight: f64,
}

impl Newton<'_> {
    fn score(&self, s: &GradStats) -> f64 {
        s.grad * s.grad / (s.hess + self.lambda)
    }
}

impl Criterion for Newton<'_> {
    type Stats = GradStats;

    #[inline]
    fn accumulate(&self, s: &mut GradStats, row: usize) {
        s.count += 1.0;
        s.grad += self.grad[row];
        s.hess += self.hess[row];
    }

    fn splittable(&self, s: &GradStats) -> bool {
        s.count >= 2.0 && s.hess >= 2.0 * self.min_child_weight
    }

    #[inline]
    fn gain(&self, p: &GradStats, l: &GradStats, r: &GradStats) -> Option<f64> {
        if l.hess < self.min_child_weight || r.hess < self.min_child_weight {
            return None;
        }
        Some(0.5 * (self.score(l) + self.score(r) - self.score(p)))
    }

    fn min_gain(&self, _p: &GradStats) -> f64 {
        1e-12
    }

    fn leaf_value(&self, s: &GradStats) -> f64 {
        -s.grad / (s.hess + self.lambda)
    }

    fn leaf_count(&self, s: &GradStats) -> f64 {
        s.count
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    /// Features sampled per node; `None` scans all.
    pub mtry: Option<usize>,
}

const INACTIVE: u32 = u32::MAX;

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grow one tree on the rows with `active[i] == true`.
pub(crate) fn grow<C: Criterion, R: Rng + ?Sized>(
    x: &FeatureMatrix,
    sorted: &SortedColumns,
    active: &[bool],
    criterion: &C,
    params: GrowParams,
    rng: &mut R,
) -> Tree {
    let n = x.n_rows();
    let p = x.n_cols();
    let mtry = params.mtry.map_or(p, |m| m.clamp(1, p.max(1)));

    let mut nodes: Vec<Node> = vec![Node::Leaf {
        value: 0.0,
        count: 0.0,
    }];
    let mut max_candidates = 0;

    // Open nodes of the current level: (tree slot, stats).
    let mut root = C::Stats::default();
    let mut node_of = vec![INACTIVE; n];
    for i in 0..n {
        if active[i] {
            node_of[i] = 0;
            criterion.accumulate(&mut root, i);
        }
    }
    let mut open: Vec<(usize, C::Stats)> = vec![(0, root)];
    let mut depth = 0;

    // Per-tree copies of the sorted columns holding only rows still in an
    // open node; compacted after every level.
    let mut live: Vec<u32> = (0..n as u32).filter(|&r| active[r as usize]).collect();
    let mut cols: Vec<(Vec<u32>, Vec<f64>)> = (0..p)
        .map(|f| {
            sorted.order[f]
                .iter()
                .zip(&sorted.values[f])
                .filter(|&(&r, _)| active[r as usize])
                .map(|(&r, &v)| (r, v))
                .unzip()
        })
        .collect();

    while !open.is_empty() {
        let at_max = params.max_depth.is_some_and(|d| depth >= d);
        let k = open.len();
        let can_split: Vec<bool> = open
            .iter()
            .map(|(_, s)| !at_max && p > 0 && criterion.splittable(s))
            .collect();

        // Candidate features per open node, as a k × p mask.
        let mut cand = vec![false; k * p];
        for (slot, &ok) in can_split.iter().enumerate() {
            if !ok {
                continue;
            }
            if mtry >= p {
                cand[slot * p..(slot + 1) * p].fill(true);
            } else {
                for f in sample_without_replacement(rng, p, mtry) {
                    cand[slot * p + f] = true;
                }
            }
            max_candidates = max_candidates.max(mtry.min(p));
        }

        let mut best: Vec<Option<Best>> = (0..k).map(|_| None).collect();
        if can_split.iter().any(|&b| b) {
            let mut left = vec![C::Stats::default(); k];
            let mut last = vec![f64::NAN; k];
            for f in 0..p {
                if !(0..k).any(|s| cand[s * p + f]) {
                    continue;
                }
                left.iter_mut().for_each(|s| *s = C::Stats::default());
                last.iter_mut().for_each(|v| *v = f64::NAN);
                let (order, values) = &cols[f];
                for (&r, &v) in order.iter().zip(values) {
                    let r = r as usize;
                    let slot = node_of[r] as usize;
                    if !cand[slot * p + f] {
                        continue;
                    }
                    let prev = last[slot];
                    if v > prev {
                        let parent = &open[slot].1;
                        let right = *parent - left[slot];
                        if let Some(g) = criterion.gain(parent, &left[slot], &right) {
                            if best[slot].as_ref().is_none_or(|b| g > b.gain) {
                                let mid = 0.5 * (prev + v);
                                let threshold = if mid < v { mid } else { prev };
                                best[slot] = Some(Best {
                                    gain: g,
                                    feature: f,
                                    threshold,
                                });
                            }
                        }
                    }
                    criterion.accumulate(&mut left[slot], r);
                    last[slot] = v;
                }
            }
        }

        // Materialise this level.
        let mut child_slot = vec![(INACTIVE, INACTIVE); k];
        let mut next: Vec<(usize, C::Stats)> = Vec::new();
        for (slot, (tree_idx, stats)) in open.iter().enumerate() {
            match &best[slot] {
                Some(b) if b.gain > criterion.min_gain(stats) => {
                    let l = nodes.len();
                    nodes.push(Node::Leaf {
                        value: 0.0,
                        count: 0.0,
                    });
                    nodes.push(Node::Leaf {
                        value: 0.0,
                        count: 0.0,
                    });
                    nodes[*tree_idx] = Node::Split {
                        feature: b.feature,
                        threshold: b.threshold,
                        left: l,
                        right: l + 1,
                    };
                    child_slot[slot] = (next.len() as u32, next.len() as u32 + 1);
                    next.push((l, C::Stats::default()));
                    next.push((l + 1, C::Stats::default()));
                }
                _ => {
                    nodes[*tree_idx] = Node::Leaf {
                        value: criterion.leaf_value(stats),
                        count: criterion.leaf_count(stats),
                    };
                }
            }
        }
        for &r in &live {
            let r = r as usize;
            let slot = node_of[r];
            let (l, rr) = child_slot[slot as usize];
            if l == INACTIVE {
                node_of[r] = INACTIVE;
                continue;
            }
            let Some(b) = &best[slot as usize] else {
                unreachable!()
            };
            let dest = if x.get(r, b.feature) <= b.threshold { l } else { rr };
            node_of[r] = dest;
            criterion.accumulate(&mut next[dest as usize].1, r);
        }
        live.retain(|&r| node_of[r as usize] != INACTIVE);
        for (order, values) in cols.iter_mut() {
            let mut w = 0;
            for k in 0..order.len() {
                if node_of[order[k] as usize] != INACTIVE {
                    order[w] = order[k];
                    values[w] = values[k];
                    w += 1;
                }
            }
            order.truncate(w);
            values.truncate(w);
        }
        open = next;
        depth += 1;
    }

    Tree {
        nodes,
        max_candidates,
    }
}
