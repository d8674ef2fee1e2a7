//! Random forest of CART trees.
//!
//! Each tree draws a bootstrap sample of the training rows, keeps the first
//! two thirds of the draw in-bag and the last third as out-of-bag, and is
//! grown on the in-bag rows with a random feature subset at every split.
//! Split search runs on quantile bins computed once per forest; a feature
//! with at most `max_bins` distinct values is split exactly. The forest
//! outputs the mean leaf probability across trees.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Matrix, ModelError};
use crate::label::Label;
use crate::seed;

pub const N_ESTIMATORS_GRID: [usize; 5] = [10, 20, 100, 200, 500];
pub const MAX_DEPTH_GRID: [usize; 5] = [3, 4, 6, 7, 8];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    /// Every feature is a split candidate.
    #[serde(rename = "auto")]
    All,
    Sqrt,
    Log2,
}

impl MaxFeatures {
    pub fn count(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (n_features as f64).log2().floor() as usize,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    fn impurity(self, pos: f64, n: f64) -> f64 {
        if n <= 0.0 {
            return 0.0;
        }
        let p = pos / n;
        let q = 1.0 - p;
        match self {
            Criterion::Gini => 1.0 - p * p - q * q,
            Criterion::Entropy => {
                let h = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
                h(p) + h(q)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfConfig {
    pub n_estimators: usize,
    pub max_features: MaxFeatures,
    pub max_depth: usize,
    pub criterion: Criterion,
    pub seed: u64,
    #[serde(default = "default_max_bins")]
    pub max_bins: usize,
}

fn default_max_bins() -> usize {
    64
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_features: MaxFeatures::Sqrt,
            max_depth: 8,
            criterion: Criterion::Gini,
            seed: 0,
            max_bins: default_max_bins(),
        }
    }
}

impl RfConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !N_ESTIMATORS_GRID.contains(&self.n_estimators) {
            return Err(ModelError::Config(format!(
                "n_estimators {} is not in {N_ESTIMATORS_GRID:?}",
                self.n_estimators
            )));
        }
        if !MAX_DEPTH_GRID.contains(&self.max_depth) {
            return Err(ModelError::Config(format!(
                "max_depth {} is not in {MAX_DEPTH_GRID:?}",
                self.max_depth
            )));
        }
        if !(2..=256).contains(&self.max_bins) {
            return Err(ModelError::Config("max_bins must lie in 2..=256".into()));
        }
        Ok(())
    }
}

/// Per-feature split thresholds; bin of `v` is the number of thresholds below it.
struct Binner {
    thresholds: Vec<Vec<f64>>,
}

impl Binner {
    fn fit(x: &Matrix, max_bins: usize) -> Self {
        let thresholds = (0..x.n_cols())
            .map(|j| {
                let mut v: Vec<f64> = (0..x.n_rows()).map(|i| x.get(i, j)).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                if v.len() <= max_bins {
                    v.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
                } else {
                    let mut cuts: Vec<f64> = (1..max_bins)
                        .map(|b| {
                            let q = b * v.len() / max_bins;
                            v[q - 1] + (v[q] - v[q - 1]) / 2.0
                        })
                        .collect();
                    cuts.dedup();
                    cuts
                }
            })
            .collect();
        Self { thresholds }
    }

    /// Column-major bin codes.
    fn transform(&self, x: &Matrix) -> Vec<Vec<u8>> {
        self.thresholds
            .iter()
            .enumerate()
            .map(|(j, th)| {
                (0..x.n_rows())
                    .map(|i| th.partition_point(|&t| t < x.get(i, j)) as u8)
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { p: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// A fitted CART tree; `x <= threshold` goes left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { p } => return p,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

struct Grower<'a> {
    bins: &'a [Vec<u8>],
    thresholds: &'a [Vec<f64>],
    y: &'a [bool],
    config: &'a RfConfig,
    n_candidates: usize,
    nodes: Vec<Node>,
    hist: Vec<[u32; 2]>,
}

impl Grower<'_> {
    fn grow<R: Rng>(&mut self, samples: &mut [u32], depth: usize, rng: &mut R) -> usize {
        let n = samples.len();
        let pos = samples.iter().filter(|&&s| self.y[s as usize]).count();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { p: if n == 0 { 0.0 } else { pos as f64 / n as f64 } });
        if depth >= self.config.max_depth || n < 2 || pos == 0 || pos == n {
            return id;
        }
        let Some((feature, bin)) = self.best_split(samples, pos, rng) else {
            return id;
        };
        let codes = &self.bins[feature];
        let mut cut = 0;
        for i in 0..n {
            if usize::from(codes[samples[i] as usize]) <= bin {
                samples.swap(i, cut);
                cut += 1;
            }
        }
        let (l, r) = samples.split_at_mut(cut);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold: self.thresholds[feature][bin],
            left,
            right,
        };
        id
    }

    fn best_split<R: Rng>(&mut self, samples: &[u32], pos: usize, rng: &mut R) -> Option<(usize, usize)> {
        let n_features = self.bins.len();
        let n = samples.len() as f64;
        let parent = n * self.config.criterion.impurity(pos as f64, n);
        let mut best: Option<(f64, usize, usize)> = None;
        for feature in index::sample(rng, n_features, self.n_candidates) {
            let n_bins = self.thresholds[feature].len() + 1;
            if n_bins < 2 {
                continue;
            }
            self.hist.clear();
            self.hist.resize(n_bins, [0, 0]);
            let codes = &self.bins[feature];
            for &s in samples {
                self.hist[usize::from(codes[s as usize])][usize::from(self.y[s as usize])] += 1;
            }
            let (mut ln, mut lp) = (0.0, 0.0);
            for bin in 0..n_bins - 1 {
                let [neg, p] = self.hist[bin];
                ln += f64::from(neg + p);
                lp += f64::from(p);
                if ln == 0.0 {
                    continue;
                }
                let rn = n - ln;
                if rn == 0.0 {
                    break;
                }
                let rp = pos as f64 - lp;
                let cost = ln * self.config.criterion.impurity(lp, ln)
                    + rn * self.config.criterion.impurity(rp, rn);
                if best.is_none_or(|(c, _, _)| cost < c) {
                    best = Some((cost, feature, bin));
                }
            }
        }
        best.filter(|&(c, _, _)| parent - c > 1e-12).map(|(_, f, b)| (f, b))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub config: RfConfig,
    pub trees: Vec<Tree>,
    /// Accuracy of out-of-bag votes, when any row was out of bag.
    pub oob_accuracy: Option<f64>,
}

impl RandomForest {
    /// Per-tree seed; tree `i` is the same whatever `n_estimators` is.
    fn tree_seed(seed: u64, i: usize) -> u64 {
        seed::derive(seed, &[i as u64])
    }

    pub fn fit(x: &Matrix, y: &[Label], config: &RfConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let n = x.n_rows();
        if n != y.len() {
            return Err(ModelError::Shape(format!("{n} rows but {} labels", y.len())));
        }
        if n < 2 {
            return Err(ModelError::TooFewRows(n));
        }
        let binner = Binner::fit(x, config.max_bins);
        let bins = binner.transform(x);
        let target: Vec<bool> = y.iter().map(|l| l.is_positive()).collect();
        let n_candidates = config.max_features.count(x.n_cols());
        let in_bag = n - n / 3;

        let fitted: Vec<(Tree, Vec<u32>)> = (0..config.n_estimators)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed::rng_from(Self::tree_seed(config.seed, i));
                let draw: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
                let mut bag = draw[..in_bag].to_vec();
                let mut seen = vec![false; n];
                for &s in &bag {
                    seen[s as usize] = true;
                }
                let mut oob: Vec<u32> = draw[in_bag..].iter().copied().filter(|&s| !seen[s as usize]).collect();
                oob.sort_unstable();
                oob.dedup();
                let mut g = Grower {
                    bins: &bins,
                    thresholds: &binner.thresholds,
                    y: &target,
                    config,
                    n_candidates,
                    nodes: Vec::new(),
                    hist: Vec::new(),
                };
                g.grow(&mut bag, 0, &mut rng);
                (Tree { nodes: g.nodes }, oob)
            })
            .collect();

        let mut votes = vec![(0.0, 0u32); n];
        for (tree, oob) in &fitted {
            for &s in oob {
                let v = &mut votes[s as usize];
                v.0 += tree.predict_row(x.row(s as usize));
                v.1 += 1;
            }
        }
        let voted: Vec<(usize, f64)> = votes
            .iter()
            .enumerate()
            .filter(|(_, v)| v.1 > 0)
            .map(|(i, v)| (i, v.0 / f64::from(v.1)))
            .collect();
        let oob_accuracy = (!voted.is_empty()).then(|| {
            let hits = voted.iter().filter(|&&(i, p)| (p > 0.5) == target[i]).count();
            hits as f64 / voted.len() as f64
        });

        Ok(Self { config: config.clone(), trees: fitted.into_iter().map(|(t, _)| t).collect(), oob_accuracy })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        (0..x.n_rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}
