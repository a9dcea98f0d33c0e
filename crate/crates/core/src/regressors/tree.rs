//! Depth-limited least-squares regression trees, the building block of both
//! tree ensembles.
//!
//! Splits scan midpoints between consecutive distinct feature values and
//! maximize the reduction in the weighted sum of squared deviations. Ties go
//! to the lower feature index, then the lower threshold. Rows carry integer
//! weights so bootstrap resamples reuse one presorted index.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right } as usize;
                }
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut buf = vec![0.0; x.ncols()];
        x.rows()
            .into_iter()
            .map(|r| {
                buf.iter_mut().zip(r.iter()).for_each(|(b, v)| *b = *v);
                self.predict_row(&buf)
            })
            .collect()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(t, *left as usize).max(go(t, *right as usize))
                }
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Candidate features drawn per split; `None` considers all of them.
    pub max_features: Option<usize>,
}

/// Column-major copy of a design matrix with each column's row order sorted.
pub struct Presorted {
    columns: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: ArrayView2<'_, f64>) -> Self {
        let columns: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
        let order = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { columns, order }
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}

/// Fit a single tree on all rows and all features.
pub fn regression_tree_fit(x: ArrayView2<'_, f64>, y: &[f64], max_depth: usize) -> RegressionTree {
    let data = Presorted::new(x);
    let weights = vec![1u32; y.len()];
    fit_weighted::<rand_chacha::ChaCha8Rng>(
        &data,
        y,
        &weights,
        TreeParams { max_depth, max_features: None },
        None,
    )
}

/// Fit with integer row weights (rows of weight 0 are excluded). `rng` is
/// required only when `params.max_features` restricts the candidates.
pub fn fit_weighted<R: Rng>(
    data: &Presorted,
    y: &[f64],
    weights: &[u32],
    params: TreeParams,
    rng: Option<&mut R>,
) -> RegressionTree {
    let order: Vec<Vec<u32>> = data
        .order
        .iter()
        .map(|o| o.iter().copied().filter(|&i| weights[i as usize] > 0).collect())
        .collect();
    let n_active = order.first().map_or(0, Vec::len);
    let mut b = Builder {
        data,
        y,
        w: weights,
        order,
        scratch: Vec::with_capacity(n_active),
        goes_left: vec![false; data.n_rows()],
        params,
        nodes: Vec::new(),
    };
    match rng {
        Some(r) => {
            b.build(0, n_active, 0, &mut Some(r));
        }
        None => {
            b.build::<R>(0, n_active, 0, &mut None);
        }
    }
    RegressionTree { nodes: b.nodes }
}

struct Builder<'a> {
    data: &'a Presorted,
    y: &'a [f64],
    w: &'a [u32],
    order: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
    params: TreeParams,
    nodes: Vec<Node>,
}

struct Best {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn build<R: Rng>(&mut self, lo: usize, hi: usize, depth: usize, rng: &mut Option<&mut R>) -> u32 {
        let id = self.nodes.len() as u32;
        let (mut sw, mut sy) = (0.0f64, 0.0f64);
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in &self.order[0][lo..hi] {
            let (w, y) = (self.w[i as usize] as f64, self.y[i as usize]);
            sw += w;
            sy += w * y;
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
        let value = if ymin == ymax {
            ymin
        } else if sw > 0.0 {
            sy / sw
        } else {
            0.0
        };
        self.nodes.push(Node::Leaf { value });
        if depth >= self.params.max_depth || hi - lo < 2 || ymin == ymax {
            return id;
        }

        let n_feat = self.data.n_features();
        let candidates: Vec<usize> = match (self.params.max_features, rng.as_mut()) {
            (Some(k), Some(r)) if k < n_feat => {
                let mut c = sample(&mut **r, n_feat, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n_feat).collect(),
        };

        let parent = sy * sy / sw;
        let mut best: Option<Best> = None;
        for &f in &candidates {
            let col = &self.data.columns[f];
            let ord = &self.order[f][lo..hi];
            let (mut wl, mut sl) = (0.0f64, 0.0f64);
            for pos in 0..ord.len() - 1 {
                let i = ord[pos] as usize;
                let w = self.w[i] as f64;
                wl += w;
                sl += w * self.y[i];
                let (a, b) = (col[i], col[ord[pos + 1] as usize]);
                if a >= b {
                    continue;
                }
                let (wr, sr) = (sw - wl, sy - sl);
                let score = sl * sl / wl + sr * sr / wr;
                if best.as_ref().is_none_or(|bst| score > bst.score) {
                    let mut threshold = 0.5 * (a + b);
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Best { score, feature: f, threshold });
                }
            }
        }
        let Some(best) = best else { return id };
        if best.score - parent <= 1e-12 * parent.abs().max(f64::MIN_POSITIVE) {
            return id;
        }

        let col = &self.data.columns[best.feature];
        let mut n_left = 0;
        for &i in &self.order[0][lo..hi] {
            let left = col[i as usize] <= best.threshold;
            self.goes_left[i as usize] = left;
            n_left += left as usize;
        }
        for f in 0..n_feat {
            let seg = &mut self.order[f][lo..hi];
            self.scratch.clear();
            let mut write = 0;
            for k in 0..seg.len() {
                let i = seg[k];
                if self.goes_left[i as usize] {
                    seg[write] = i;
                    write += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            seg[write..].copy_from_slice(&self.scratch);
        }
        let mid = lo + n_left;
        let left = self.build(lo, mid, depth + 1, rng);
        let right = self.build(mid, hi, depth + 1, rng);
        self.nodes[id as usize] =
            Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        id
    }
}
