//! Synthetic imbalanced datasets.
//!
//! Class sizes follow one of two long-tail laws (exponential decay or a
//! Pareto power law), node features are class-separated Gaussians, and the
//! adjacency comes from a stochastic block model so that nodes of the same
//! class connect more often than nodes of different classes. Splits carve a
//! balanced validation/test pool out first and sample the training set from
//! the imbalanced remainder.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::substream;

/// Per-class sample counts with derived frequencies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassHistogram {
    counts: Vec<usize>,
}

impl ClassHistogram {
    /// Every class must be nonempty.
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("histogram needs at least one class"));
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("class {k} has zero samples")));
        }
        Ok(ClassHistogram { counts })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Largest class size over smallest.
    pub fn imbalance_ratio(&self) -> f64 {
        let max = *self.counts.iter().max().unwrap() as f64;
        let min = *self.counts.iter().min().unwrap() as f64;
        max / min
    }

    /// True when counts follow the sorted-descending convention.
    pub fn is_sorted_descending(&self) -> bool {
        self.counts.windows(2).all(|w| w[0] >= w[1])
    }

    /// Class ids ordered by decreasing count, ties broken by lower id.
    pub fn class_order_by_size(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.counts.len()).collect();
        order.sort_by_key(|&k| (std::cmp::Reverse(self.counts[k]), k));
        order
    }
}

/// The long-tail family of class-size laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImbalanceKind {
    /// `N_k = round(N_1 * factor^{-(k-1)/(K-1)})`; a larger factor means a
    /// more imbalanced graph, with `N_1/N_K = factor` before rounding.
    Exp,
    /// `N_k = round(N_1 * k^{-1/factor})`; a smaller factor means a more
    /// imbalanced graph.
    Pareto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceSpec {
    pub kind: ImbalanceKind,
    pub factor: f64,
    pub num_classes: usize,
    pub head_size: usize,
}

impl ImbalanceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 0.0) {
            return Err(Error::invalid("imbalance factor must be > 0"));
        }
        if self.num_classes == 0 {
            return Err(Error::invalid("num_classes must be positive"));
        }
        if self.head_size < self.num_classes {
            return Err(Error::invalid(
                "head_size must be at least num_classes so every class is nonempty",
            ));
        }
        Ok(())
    }
}

/// Round-half-up with a floor of one sample.
fn round_count(x: f64) -> usize {
    ((x + 0.5).floor() as usize).max(1)
}

/// Class sizes under the requested long-tail law, sorted descending by
/// construction.
pub fn class_sizes(spec: &ImbalanceSpec) -> Result<ClassHistogram> {
    spec.validate()?;
    let k = spec.num_classes;
    let n1 = spec.head_size as f64;
    let counts: Vec<usize> = (1..=k)
        .map(|i| {
            let x = match spec.kind {
                ImbalanceKind::Exp => {
                    if k == 1 {
                        n1
                    } else {
                        n1 * spec.factor.powf(-((i - 1) as f64) / ((k - 1) as f64))
                    }
                }
                ImbalanceKind::Pareto => n1 * (i as f64).powf(-1.0 / spec.factor),
            };
            round_count(x)
        })
        .collect();
    ClassHistogram::new(counts)
}

/// Stochastic block model parameters: intra-class edge probability `p_in`,
/// inter-class `p_out`, and Gaussian features whose per-class mean has norm
/// `feature_sep`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub feature_dim: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_sep: f64,
}

impl SbmParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return Err(Error::invalid("edge probabilities must lie in [0, 1]"));
        }
        if self.p_out > self.p_in {
            return Err(Error::invalid("p_out must not exceed p_in"));
        }
        if !(self.feature_sep > 0.0) {
            return Err(Error::invalid("feature_sep must be > 0"));
        }
        if self.feature_dim == 0 {
            return Err(Error::invalid("feature_dim must be positive"));
        }
        Ok(())
    }
}

/// Class mean directions: scaled one-hot axes, cycling with a sign flip when
/// there are more classes than feature dimensions.
fn class_mean(k: usize, dim: usize, sep: f64) -> Vec<f64> {
    let mut mu = vec![0.0; dim];
    let axis = k % dim;
    let sign = if (k / dim) % 2 == 0 { 1.0 } else { -1.0 };
    mu[axis] = sign * sep;
    mu
}

/// Generates a labeled SBM graph from a class histogram. Nodes are laid out
/// in class blocks (class 0 first), deterministic for a fixed seed.
pub fn generate_sbm_graph(
    hist: &ClassHistogram,
    params: &SbmParams,
    seed: u64,
) -> Result<Graph> {
    params.validate()?;
    let n = hist.total();
    let k = hist.num_classes();

    let mut labels = Vec::with_capacity(n);
    for (class, &count) in hist.counts().iter().enumerate() {
        labels.extend(std::iter::repeat(class).take(count));
    }

    let mut edge_rng = substream(seed, "sbm_edges", 0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] {
                params.p_in
            } else {
                params.p_out
            };
            if edge_rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut feat_rng = substream(seed, "sbm_features", 0);
    let mut features = Array2::<f64>::zeros((n, params.feature_dim));
    for u in 0..n {
        let mu = class_mean(labels[u], params.feature_dim, params.feature_sep);
        for j in 0..params.feature_dim {
            let z: f64 = StandardNormal.sample(&mut feat_rng);
            features[[u, j]] = mu[j] + z;
        }
    }

    Graph::build(n, &edges, features, Some((labels, k)))
}

/// How to carve train/valid/test out of a labeled graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Fraction of the remainder (after the balanced pools) drawn uniformly
    /// as the training set.
    pub train_fraction: f64,
    pub valid_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::invalid("train_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Node-id sets for one split, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Balanced valid/test pools (exactly `valid_per_class` / `test_per_class`
/// nodes per class, drawn uniformly), then a uniform draw from the pooled
/// remainder for the training set, which therefore preserves the imbalanced
/// class proportions in expectation.
pub fn split_dataset(graph: &Graph, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let labels = graph
        .labels()
        .ok_or_else(|| Error::invalid("split requires a labeled graph"))?;
    let k = graph.num_classes().unwrap();

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (u, &y) in labels.iter().enumerate() {
        by_class[y].push(u);
    }
    let need = spec.valid_per_class + spec.test_per_class + 1;
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < need {
            return Err(Error::invalid(format!(
                "class {class} has {} nodes, needs at least {need} for the requested split",
                members.len()
            )));
        }
    }

    let mut rng = substream(spec.seed, "split", 0);
    let mut valid = Vec::new();
    let mut test = Vec::new();
    let mut remainder = Vec::new();
    for members in &mut by_class {
        members.shuffle(&mut rng);
        valid.extend_from_slice(&members[..spec.valid_per_class]);
        test.extend_from_slice(
            &members[spec.valid_per_class..spec.valid_per_class + spec.test_per_class],
        );
        remainder.extend_from_slice(&members[spec.valid_per_class + spec.test_per_class..]);
    }

    remainder.sort_unstable();
    remainder.shuffle(&mut rng);
    let train_size = ((remainder.len() as f64) * spec.train_fraction).round() as usize;
    let mut train: Vec<usize> = remainder[..train_size].to_vec();

    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();
    Ok(Splits {
        train,
        valid,
        test,
        seed: spec.seed,
    })
}

pub fn save_splits(splits: &Splits, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, splits)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn load_splits(path: &Path) -> Result<Splits> {
    Ok(serde_json::from_reader(fs::File::open(path)?)?)
}
