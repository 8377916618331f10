//! Regression trees grown level by level with exact greedy second-order splits.
//!
//! Each feature column is indexed once per fit: its sorted unique values
//! become bins, and only rows outside the column's most frequent bin are
//! stored. Gradient/hessian histograms per node are built from those sparse
//! entries and the dense bin is recovered from the node totals, which keeps
//! one-hot columns cheap without changing the candidate set: every boundary
//! between two distinct values present in a node is evaluated.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { weight: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(weight: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { weight }],
        }
    }

    pub fn predict_row(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { weight } => return weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[(row, feature)] < threshold { left } else { right },
            }
        }
    }

    pub fn leaf_weight(&self, id: usize) -> f64 {
        match self.nodes[id] {
            Node::Leaf { weight } => weight,
            Node::Split { .. } => panic!("node {id} is not a leaf"),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Structural validity: children in range, feature indices below `d`,
    /// finite leaves and thresholds.
    pub fn is_valid(&self, d: usize) -> bool {
        !self.nodes.is_empty()
            && self.nodes.iter().all(|n| match *n {
                Node::Leaf { weight } => weight.is_finite(),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    feature < d
                        && !threshold.is_nan()
                        && left < self.nodes.len()
                        && right < self.nodes.len()
                }
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub l2_reg: f64,
    pub min_child_weight: f64,
}

struct Column {
    values: Vec<f64>,
    dense_bin: usize,
    rows: Vec<u32>,
    bins: Vec<u32>,
}

/// Per-feature sorted-value index of a training matrix.
pub struct FeatureIndex {
    columns: Vec<Column>,
}

impl FeatureIndex {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let n = x.nrows();
        let columns = (0..x.ncols())
            .map(|j| {
                let col = x.column(j);
                let mut order: Vec<u32> = (0..n as u32).collect();
                order.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                let mut values = Vec::new();
                let mut bin_of = vec![0u32; n];
                for &r in &order {
                    let v = col[r as usize];
                    if values.last() != Some(&v) {
                        values.push(v);
                    }
                    bin_of[r as usize] = (values.len() - 1) as u32;
                }
                let mut counts = vec![0usize; values.len()];
                for &b in &bin_of {
                    counts[b as usize] += 1;
                }
                let dense_bin = counts
                    .iter()
                    .enumerate()
                    .fold((0, 0), |best, (b, &c)| if c > best.1 { (b, c) } else { best })
                    .0;
                let mut rows = Vec::new();
                let mut bins = Vec::new();
                for (r, &b) in bin_of.iter().enumerate() {
                    if b as usize != dense_bin {
                        rows.push(r as u32);
                        bins.push(b);
                    }
                }
                Column {
                    values,
                    dense_bin,
                    rows,
                    bins,
                }
            })
            .collect();
        FeatureIndex { columns }
    }
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    count: u32,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    left: Stats,
}

struct Active {
    node: usize,
    total: Stats,
}

const NONE: u32 = u32::MAX;

fn score(g: f64, h: f64, l2: f64) -> f64 {
    g * g / (h + l2)
}

/// Gain of splitting `total` into `left` and the remainder.
pub fn split_gain(gl: f64, hl: f64, g: f64, h: f64, l2: f64) -> f64 {
    score(gl, hl, l2) + score(g - gl, h - hl, l2) - score(g, h, l2)
}

pub fn leaf_value(g: f64, h: f64, l2: f64) -> f64 {
    -g / (h + l2)
}

/// Grows one tree on per-row gradients and hessians.
///
/// Returns the tree and the leaf node id of every training row. Splits need
/// strictly positive gain and hessian mass of at least `min_child_weight` on
/// both sides; equal gains keep the lowest feature index, then the lowest
/// threshold.
pub fn grow_tree(
    index: &FeatureIndex,
    x: &DMatrix<f64>,
    grad: &[f64],
    hess: &[f64],
    params: &TreeParams,
) -> (RegressionTree, Vec<usize>) {
    let n = grad.len();
    let l2 = params.l2_reg;
    let mut nodes = vec![Node::Leaf { weight: 0.0 }];
    let mut root = Stats::default();
    for i in 0..n {
        root.g += grad[i];
        root.h += hess[i];
    }
    root.count = n as u32;
    let mut active = vec![Active {
        node: 0,
        total: root,
    }];
    let mut row_slot = vec![0u32; n];
    let mut row_leaf = vec![0usize; n];

    for _depth in 0..params.max_depth {
        if active.is_empty() {
            break;
        }
        let best = best_splits(index, &active, &row_slot, grad, hess, params);
        let mut next = Vec::new();
        // slot -> Some((feature, threshold, left slot, right slot))
        let mut routes = Vec::with_capacity(active.len());
        for (a, cand) in active.iter().zip(best) {
            match cand {
                Some(c) => {
                    let left_id = nodes.len();
                    let right_id = left_id + 1;
                    let right = Stats {
                        g: a.total.g - c.left.g,
                        h: a.total.h - c.left.h,
                        count: a.total.count - c.left.count,
                    };
                    nodes.push(Node::Leaf { weight: 0.0 });
                    nodes.push(Node::Leaf { weight: 0.0 });
                    nodes[a.node] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: left_id,
                        right: right_id,
                    };
                    routes.push(Some((c.feature, c.threshold, next.len() as u32)));
                    next.push(Active {
                        node: left_id,
                        total: c.left,
                    });
                    next.push(Active {
                        node: right_id,
                        total: right,
                    });
                }
                None => {
                    nodes[a.node] = Node::Leaf {
                        weight: leaf_value(a.total.g, a.total.h, l2),
                    };
                    routes.push(None);
                }
            }
        }
        for i in 0..n {
            let s = row_slot[i];
            if s == NONE {
                continue;
            }
            match routes[s as usize] {
                Some((feature, threshold, left)) => {
                    row_slot[i] = if x[(i, feature)] < threshold { left } else { left + 1 };
                }
                None => {
                    row_leaf[i] = active[s as usize].node;
                    row_slot[i] = NONE;
                }
            }
        }
        active = next;
    }
    for a in &active {
        nodes[a.node] = Node::Leaf {
            weight: leaf_value(a.total.g, a.total.h, l2),
        };
    }
    for i in 0..n {
        let s = row_slot[i];
        if s != NONE {
            row_leaf[i] = active[s as usize].node;
        }
    }
    (RegressionTree { nodes }, row_leaf)
}

fn best_splits(
    index: &FeatureIndex,
    active: &[Active],
    row_slot: &[u32],
    grad: &[f64],
    hess: &[f64],
    params: &TreeParams,
) -> Vec<Option<Candidate>> {
    let slots = active.len();
    let mut best: Vec<Option<Candidate>> = vec![None; slots];
    let mut hist: Vec<Stats> = Vec::new();
    for (feature, col) in index.columns.iter().enumerate() {
        let nbins = col.values.len();
        if nbins < 2 {
            continue;
        }
        hist.clear();
        hist.resize(slots * nbins, Stats::default());
        for (&r, &b) in col.rows.iter().zip(&col.bins) {
            let s = row_slot[r as usize];
            if s == NONE {
                continue;
            }
            let cell = &mut hist[s as usize * nbins + b as usize];
            cell.g += grad[r as usize];
            cell.h += hess[r as usize];
            cell.count += 1;
        }
        for (s, a) in active.iter().enumerate() {
            let bins = &mut hist[s * nbins..(s + 1) * nbins];
            let mut sparse = Stats::default();
            for (b, st) in bins.iter().enumerate() {
                if b != col.dense_bin {
                    sparse.g += st.g;
                    sparse.h += st.h;
                    sparse.count += st.count;
                }
            }
            let dense_count = a.total.count - sparse.count;
            bins[col.dense_bin] = if dense_count == 0 {
                Stats::default()
            } else {
                Stats {
                    g: a.total.g - sparse.g,
                    h: a.total.h - sparse.h,
                    count: dense_count,
                }
            };
            let mut left = Stats::default();
            let mut prev: Option<usize> = None;
            for (b, st) in bins.iter().enumerate() {
                if st.count == 0 {
                    continue;
                }
                if let Some(p) = prev {
                    let right_h = a.total.h - left.h;
                    if left.h >= params.min_child_weight && right_h >= params.min_child_weight {
                        let gain = split_gain(left.g, left.h, a.total.g, a.total.h, params.l2_reg);
                        let better = match &best[s] {
                            None => gain > 0.0,
                            Some(c) => gain > c.gain,
                        };
                        if better {
                            best[s] = Some(Candidate {
                                gain,
                                feature,
                                threshold: midpoint(col.values[p], col.values[b]),
                                left,
                            });
                        }
                    }
                }
                left.g += st.g;
                left.h += st.h;
                left.count += st.count;
                prev = Some(b);
            }
        }
    }
    best
}

/// Threshold strictly above `lo` and at most `hi`, so `lo` goes left and `hi` right.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m > lo && m <= hi {
        m
    } else {
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(depth: usize) -> TreeParams {
        TreeParams {
            max_depth: depth,
            l2_reg: 1.0,
            min_child_weight: 0.0,
        }
    }

    #[test]
    fn depth_zero_is_single_newton_leaf() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let idx = FeatureIndex::new(&x);
        let (t, leaves) = grow_tree(&idx, &x, &[1.0, 2.0, 3.0], &[1.0; 3], &params(0));
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.leaf_weight(0), -6.0 / 4.0);
        assert_eq!(leaves, vec![0, 0, 0]);
    }

    #[test]
    fn hand_computed_single_split() {
        // x = (1,2,3,4), g = (-2,-2,2,2), h = 1, l2 = 1.
        // Candidates (left = first k rows):
        //   k=1: GL=-2,HL=1 -> 4/2 + 4/4 - 0 = 3
        //   k=2: GL=-4,HL=2 -> 16/3 + 16/3 = 32/3
        //   k=3: symmetric to k=1 -> 3
        // Best is k=2, threshold 2.5, leaves -(-4)/3 and -(4)/3.
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let g = [-2.0, -2.0, 2.0, 2.0];
        let h = [1.0; 4];
        assert!((split_gain(-2.0, 1.0, 0.0, 4.0, 1.0) - 3.0).abs() < 1e-15);
        assert!((split_gain(-4.0, 2.0, 0.0, 4.0, 1.0) - 32.0 / 3.0).abs() < 1e-12);
        let idx = FeatureIndex::new(&x);
        let (t, leaves) = grow_tree(&idx, &x, &g, &h, &params(1));
        match t.nodes[0] {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 2.5);
                assert!((t.leaf_weight(left) - 4.0 / 3.0).abs() < 1e-15);
                assert!((t.leaf_weight(right) + 4.0 / 3.0).abs() < 1e-15);
                assert_eq!(leaves, vec![left, left, right, right]);
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // two identical columns
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let idx = FeatureIndex::new(&x);
        let (t, _) = grow_tree(&idx, &x, &[1.0, 1.0, -1.0, -1.0], &[1.0; 4], &params(1));
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn zero_gradients_never_split() {
        let x = DMatrix::from_fn(20, 3, |i, j| (i * (j + 1)) as f64);
        let idx = FeatureIndex::new(&x);
        let (t, _) = grow_tree(&idx, &x, &[0.0; 20], &[1.0; 20], &params(3));
        assert_eq!(t, RegressionTree::leaf(0.0));
    }

    #[test]
    fn min_child_weight_blocks_small_leaves() {
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let idx = FeatureIndex::new(&x);
        let p = TreeParams {
            max_depth: 1,
            l2_reg: 0.0,
            min_child_weight: 3.0,
        };
        let (t, _) = grow_tree(&idx, &x, &[-5.0, 1.0, 1.0, 1.0], &[1.0; 4], &p);
        assert_eq!(t.nodes.len(), 1);
    }

    #[test]
    fn sparse_columns_match_dense_partition() {
        // one-hot style column where the dense bin is the value 0
        let x = DMatrix::from_row_slice(6, 1, &[0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let idx = FeatureIndex::new(&x);
        let g = [1.0, 1.0, -3.0, 1.0, -3.0, 1.0];
        let (t, leaves) = grow_tree(&idx, &x, &g, &[1.0; 6], &params(1));
        let Node::Split { threshold, left, right, .. } = t.nodes[0] else {
            panic!("expected split")
        };
        assert_eq!(threshold, 0.5);
        assert_eq!(leaves, vec![left, left, right, left, right, left]);
        for i in 0..6 {
            assert_eq!(t.predict_row(&x, i), t.leaf_weight(leaves[i]));
        }
    }

    #[test]
    fn midpoint_orders_adjacent_floats() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let t = midpoint(lo, hi);
        assert!(lo < t && hi >= t);
    }
}
