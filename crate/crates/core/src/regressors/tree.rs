//! Histogram-based CART regression trees shared by the forest and the
//! boosting models.

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Matrix;

/// Features quantized to at most `max_bins` bins. `x <= cuts[j][b]` holds
/// exactly for the values falling into bins `0..=b` of feature `j`.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    bins: Vec<u16>,
    n_rows: usize,
    cuts: Vec<Vec<f64>>,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

fn cuts_for(column: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut uniques: Vec<(f64, usize)> = Vec::new();
    for v in sorted {
        match uniques.last_mut() {
            Some((u, c)) if *u == v => *c += 1,
            _ => uniques.push((v, 1)),
        }
    }
    if uniques.len() <= max_bins {
        return uniques.windows(2).map(|w| midpoint(w[0].0, w[1].0)).collect();
    }
    let n = column.len() as f64;
    let per_bin = n / max_bins as f64;
    let mut cuts = Vec::with_capacity(max_bins - 1);
    let mut cum = 0usize;
    let mut next = per_bin;
    for w in uniques.windows(2) {
        cum += w[0].1;
        if cum as f64 >= next {
            cuts.push(midpoint(w[0].0, w[1].0));
            while next <= cum as f64 {
                next += per_bin;
            }
            if cuts.len() == max_bins - 1 {
                break;
            }
        }
    }
    cuts
}

impl BinnedMatrix {
    pub fn build(x: &Matrix, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, usize::from(u16::MAX));
        let n = x.n_rows();
        let cuts: Vec<Vec<f64>> = (0..x.n_cols())
            .into_par_iter()
            .map(|j| cuts_for(&x.column(j), max_bins))
            .collect();
        let mut bins = vec![0u16; n * x.n_cols()];
        bins.par_chunks_mut(n.max(1))
            .zip(cuts.par_iter())
            .enumerate()
            .for_each(|(j, (col, c))| {
                for (i, b) in col.iter_mut().enumerate() {
                    *b = bin_of(c, x.get(i, j));
                }
            });
        Self { bins, n_rows: n, cuts }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }

    #[inline]
    pub fn bin(&self, row: usize, feature: usize) -> u16 {
        self.bins[feature * self.n_rows + row]
    }

    fn column(&self, feature: usize) -> &[u16] {
        &self.bins[feature * self.n_rows..(feature + 1) * self.n_rows]
    }

    pub fn cut(&self, feature: usize, bin: u16) -> f64 {
        self.cuts[feature][usize::from(bin)]
    }
}

fn bin_of(cuts: &[f64], v: f64) -> u16 {
    cuts.partition_point(|&c| c < v) as u16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        leaf: u32,
    },
    Split {
        feature: u32,
        bin: u16,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_leaves: usize,
}

impl Tree {
    /// Leaf reached by a raw feature row.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut node = 0usize;
        loop {
            match self.nodes[node] {
                Node::Leaf { leaf } => return leaf as usize,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => node = if x[feature as usize] <= threshold { left } else { right } as usize,
            }
        }
    }

    /// Leaf reached by a row of the matrix the tree was grown on.
    pub fn leaf_of_binned(&self, binned: &BinnedMatrix, row: usize) -> usize {
        let mut node = 0usize;
        loop {
            match self.nodes[node] {
                Node::Leaf { leaf } => return leaf as usize,
                Node::Split {
                    feature,
                    bin,
                    left,
                    right,
                    ..
                } => node = if binned.bin(row, feature as usize) <= bin { left } else { right } as usize,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum total row weight on each side of a split.
    pub min_leaf: f64,
    /// Features examined per split; 0 or >= d means all.
    pub mtry: usize,
}

pub struct GrownTree {
    pub tree: Tree,
    /// Training rows per leaf id.
    pub leaf_rows: Vec<Vec<u32>>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    bin: u16,
}

const PARALLEL_WORK: usize = 1 << 16;

fn best_split_for_feature(
    binned: &BinnedMatrix,
    feature: usize,
    rows: &[u32],
    target: &[f64],
    weight: Option<&[f64]>,
    totals: (f64, f64),
    min_leaf: f64,
) -> Option<Candidate> {
    let n_bins = binned.n_bins(feature);
    if n_bins < 2 {
        return None;
    }
    let col = binned.column(feature);
    let mut hist = vec![(0.0f64, 0.0f64); n_bins];
    match weight {
        Some(w) => {
            for &r in rows {
                let r = r as usize;
                let h = &mut hist[usize::from(col[r])];
                h.0 += w[r];
                h.1 += w[r] * target[r];
            }
        }
        None => {
            for &r in rows {
                let r = r as usize;
                let h = &mut hist[usize::from(col[r])];
                h.0 += 1.0;
                h.1 += target[r];
            }
        }
    }
    let (w_tot, s_tot) = totals;
    let base = s_tot * s_tot / w_tot;
    let mut best: Option<Candidate> = None;
    let (mut wl, mut sl) = (0.0, 0.0);
    for (b, &(w, s)) in hist.iter().enumerate().take(n_bins - 1) {
        wl += w;
        sl += s;
        let wr = w_tot - wl;
        if w == 0.0 || wl < min_leaf || wl <= 0.0 {
            continue;
        }
        if wr < min_leaf || wr <= 0.0 {
            break;
        }
        let sr = s_tot - sl;
        let gain = sl * sl / wl + sr * sr / wr - base;
        if best.is_none_or(|c| gain > c.gain) {
            best = Some(Candidate {
                gain,
                feature,
                bin: b as u16,
            });
        }
    }
    best
}

/// Grows a variance-reduction tree on `rows`. Ties between candidate splits
/// go to the lowest feature index, then the lowest bin.
pub fn grow_tree(
    binned: &BinnedMatrix,
    mut rows: Vec<u32>,
    target: &[f64],
    weight: Option<&[f64]>,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> GrownTree {
    let d = binned.n_features();
    let mtry = if params.mtry == 0 || params.mtry >= d { d } else { params.mtry };
    let min_leaf = params.min_leaf.max(f64::MIN_POSITIVE);
    let mut nodes: Vec<Node> = vec![Node::Leaf { leaf: 0 }];
    let mut leaf_rows: Vec<Vec<u32>> = Vec::new();
    let mut scratch: Vec<u32> = Vec::with_capacity(rows.len());
    // (node index, start, end, depth)
    let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];

    while let Some((node, start, end, depth)) = stack.pop() {
        let slice = &rows[start..end];
        let (mut w_tot, mut s_tot, mut ss_tot) = (0.0, 0.0, 0.0);
        for &r in slice {
            let r = r as usize;
            let w = weight.map_or(1.0, |w| w[r]);
            w_tot += w;
            s_tot += w * target[r];
            ss_tot += w * target[r] * target[r];
        }
        let sse = ss_tot - s_tot * s_tot / w_tot;
        let mut split = None;
        if depth < params.max_depth && w_tot >= 2.0 * min_leaf && sse > 1e-12 * ss_tot.max(f64::MIN_POSITIVE) {
            let mut features: Vec<usize> = if mtry == d {
                (0..d).collect()
            } else {
                index::sample(rng, d, mtry).into_vec()
            };
            features.sort_unstable();
            let eval = |&f: &usize| best_split_for_feature(binned, f, slice, target, weight, (w_tot, s_tot), min_leaf);
            let candidates: Vec<Option<Candidate>> = if slice.len() * features.len() >= PARALLEL_WORK {
                features.par_iter().map(eval).collect()
            } else {
                features.iter().map(eval).collect()
            };
            split = candidates
                .into_iter()
                .flatten()
                .fold(None, |acc: Option<Candidate>, c| match acc {
                    Some(a) if a.gain >= c.gain => Some(a),
                    _ => Some(c),
                })
                .filter(|c| c.gain > 1e-12 * sse);
        }

        match split {
            None => {
                nodes[node] = Node::Leaf {
                    leaf: leaf_rows.len() as u32,
                };
                leaf_rows.push(rows[start..end].to_vec());
            }
            Some(c) => {
                scratch.clear();
                let col = binned.column(c.feature);
                let mut write = start;
                for k in start..end {
                    let r = rows[k];
                    if col[r as usize] <= c.bin {
                        rows[write] = r;
                        write += 1;
                    } else {
                        scratch.push(r);
                    }
                }
                rows[write..end].copy_from_slice(&scratch);
                let left = nodes.len();
                nodes.push(Node::Leaf { leaf: 0 });
                nodes.push(Node::Leaf { leaf: 0 });
                nodes[node] = Node::Split {
                    feature: c.feature as u32,
                    bin: c.bin,
                    threshold: binned.cut(c.feature, c.bin),
                    left: left as u32,
                    right: left as u32 + 1,
                };
                stack.push((left + 1, write, end, depth + 1));
                stack.push((left, start, write, depth + 1));
            }
        }
    }
    GrownTree {
        tree: Tree {
            nodes,
            n_leaves: leaf_rows.len(),
        },
        leaf_rows,
    }
}
