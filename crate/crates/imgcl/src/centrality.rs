//! PageRank node centrality and centrality-modulated keep probabilities.
//!
//! Scores are the fixed point of the unnormalized recurrence
//! `sigma <- damping * A D^{-1} sigma + 1`, iterated from all-ones. Keep
//! probabilities scale each node's pseudo-class probability by the normalized
//! centrality factor `(sigma_max - sigma_v) / (sigma_max - sigma_min)`,
//! capped by a cut-off probability so weakly connected nodes stay sampleable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityScores {
    scores: Vec<f64>,
    damping: f64,
    residual: f64,
}

impl CentralityScores {
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    /// Max-norm residual of the fixed-point equation at the returned scores.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.scores.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PagerankParams {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PagerankParams {
    fn default() -> Self {
        PagerankParams {
            damping: 0.85,
            tol: 1e-8,
            max_iter: 1000,
        }
    }
}

/// One application of `damping * A D^{-1} x + 1`. Isolated nodes contribute
/// nothing and receive exactly 1.
fn iterate(graph: &Graph, damping: f64, x: &[f64], inv_deg: &[f64], out: &mut [f64]) {
    for u in 0..graph.num_nodes() {
        let mut acc = 0.0;
        for &v in graph.neighbors(u) {
            acc += x[v] * inv_deg[v];
        }
        out[u] = damping * acc + 1.0;
    }
}

pub fn pagerank(graph: &Graph, params: &PagerankParams) -> Result<CentralityScores> {
    if !(params.damping > 0.0 && params.damping < 1.0) {
        return Err(Error::invalid("damping must lie in (0, 1)"));
    }
    if !(params.tol > 0.0) {
        return Err(Error::invalid("tolerance must be > 0"));
    }
    let n = graph.num_nodes();
    let inv_deg: Vec<f64> = (0..n)
        .map(|u| {
            let d = graph.degree(u);
            if d == 0 {
                0.0
            } else {
                1.0 / d as f64
            }
        })
        .collect();

    let mut x = vec![1.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..params.max_iter {
        iterate(graph, params.damping, &x, &inv_deg, &mut next);
        let delta = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        if delta <= params.tol {
            iterate(graph, params.damping, &x, &inv_deg, &mut next);
            let residual = x
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            return Ok(CentralityScores {
                scores: x,
                damping: params.damping,
                residual,
            });
        }
    }
    let residual = x
        .iter()
        .zip(&next)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Err(Error::numerical(format!(
        "pagerank did not converge in {} iterations (residual {residual:.3e})",
        params.max_iter
    )))
}

/// Per-node keep probabilities.
///
/// Raw value for node `v` in pseudo-class `j`:
/// `min(factor_v * class_probs[j], p_tau)` with
/// `factor_v = (sigma_max - sigma_v) / (sigma_max - sigma_min)`. On a regular
/// graph (all scores equal) the factor is 1 for every node, and `invert`
/// flips the factor to `(sigma_v - sigma_min) / (sigma_max - sigma_min)`.
///
/// When `keep_fraction` is given, probabilities are rescaled so their mean
/// equals it: multiplicative scale then clamp to [0, 1], applied twice to
/// compensate for clamping.
pub fn centrality_sampling_probs(
    scores: &CentralityScores,
    class_probs: &[f64],
    pseudo_labels: &[usize],
    p_tau: f64,
    invert: bool,
    keep_fraction: Option<f64>,
) -> Result<Vec<f64>> {
    if !(p_tau > 0.0 && p_tau <= 1.0) {
        return Err(Error::invalid("p_tau must lie in (0, 1]"));
    }
    if pseudo_labels.len() != scores.scores().len() {
        return Err(Error::invalid("one pseudo-label per node required"));
    }
    if let Some(&bad) = pseudo_labels.iter().find(|&&j| j >= class_probs.len()) {
        return Err(Error::invalid(format!(
            "pseudo-label {bad} out of range for {} classes",
            class_probs.len()
        )));
    }
    if class_probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::invalid("class probabilities must lie in [0, 1]"));
    }

    let (lo, hi) = (scores.min(), scores.max());
    let span = hi - lo;
    let mut probs: Vec<f64> = scores
        .scores()
        .iter()
        .zip(pseudo_labels)
        .map(|(&sigma, &j)| {
            let factor = if span <= 0.0 {
                1.0
            } else if invert {
                (sigma - lo) / span
            } else {
                (hi - sigma) / span
            };
            (factor * class_probs[j]).min(p_tau)
        })
        .collect();

    if let Some(keep) = keep_fraction {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::invalid("keep_fraction must lie in (0, 1]"));
        }
        let target = keep * probs.len() as f64;
        for _ in 0..2 {
            let sum: f64 = probs.iter().sum();
            if sum <= 0.0 {
                break;
            }
            let scale = target / sum;
            for p in &mut probs {
                *p = (*p * scale).clamp(0.0, 1.0);
            }
        }
    }
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::build(n, edges, Array2::zeros((n, 1)), None).unwrap()
    }

    /// Dense power-iteration oracle, independent of the CSR path.
    fn pagerank_oracle(n: usize, edges: &[(usize, usize)], damping: f64, iters: usize) -> Vec<f64> {
        let mut adj = vec![vec![0.0; n]; n];
        for &(u, v) in edges {
            adj[u][v] = 1.0;
            adj[v][u] = 1.0;
        }
        let deg: Vec<f64> = (0..n).map(|u| adj[u].iter().sum()).collect();
        let mut x = vec![1.0; n];
        for _ in 0..iters {
            let mut next = vec![0.0; n];
            for (u, item) in next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for v in 0..n {
                    if deg[v] > 0.0 {
                        acc += adj[u][v] * x[v] / deg[v];
                    }
                }
                *item = damping * acc + 1.0;
            }
            x = next;
        }
        x
    }

    #[test]
    fn complete_graph_scores_are_uniform() {
        let g = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        let s = pagerank(&g, &PagerankParams::default()).unwrap();
        let expected = 1.0 / (1.0 - 0.85);
        for &v in s.scores() {
            assert!((v - expected).abs() < 1e-6, "score {v} vs {expected}");
        }
        assert!(s.residual() <= 1e-8);
    }

    #[test]
    fn star_center_dominates() {
        let edges = [(0, 1), (0, 2), (0, 3)];
        let g = graph(4, &edges);
        let s = pagerank(&g, &PagerankParams::default()).unwrap();
        for leaf in 1..4 {
            assert!(s.scores()[0] > s.scores()[leaf]);
        }
        let oracle = pagerank_oracle(4, &edges, 0.85, 5000);
        for (a, b) in s.scores().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn path_middle_is_highest() {
        let edges = [(0, 1), (1, 2)];
        let g = graph(3, &edges);
        let s = pagerank(&g, &PagerankParams::default()).unwrap();
        assert!(s.scores()[1] > s.scores()[0]);
        assert!(s.scores()[1] > s.scores()[2]);
        let oracle = pagerank_oracle(3, &edges, 0.85, 5000);
        for (a, b) in s.scores().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn isolated_nodes_score_one() {
        let g = graph(3, &[(0, 1)]);
        let s = pagerank(&g, &PagerankParams::default()).unwrap();
        assert_eq!(s.scores()[2], 1.0);
        assert!(s.scores().iter().all(|&v| v >= 1.0));
    }

    #[test]
    fn fixed_point_residual_is_tight() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)]);
        let s = pagerank(&g, &PagerankParams::default()).unwrap();
        assert!(s.residual() <= 1e-8, "residual {}", s.residual());
    }

    #[test]
    fn pagerank_is_permutation_equivariant() {
        let edges = [(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)];
        let g = graph(4, &edges);
        let perm = [2usize, 0, 3, 1]; // old -> new
        let permuted_edges: Vec<(usize, usize)> =
            edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let gp = graph(4, &permuted_edges);
        let s = pagerank(&g, &PagerankParams::default()).unwrap();
        let sp = pagerank(&gp, &PagerankParams::default()).unwrap();
        for u in 0..4 {
            assert!((s.scores()[u] - sp.scores()[perm[u]]).abs() < 1e-12);
        }
    }

    #[test]
    fn nonconvergence_is_reported() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        let err = pagerank(
            &g,
            &PagerankParams {
                damping: 0.85,
                tol: 1e-12,
                max_iter: 2,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    fn fake_scores(values: &[f64]) -> CentralityScores {
        CentralityScores {
            scores: values.to_vec(),
            damping: 0.85,
            residual: 0.0,
        }
    }

    #[test]
    fn max_score_node_gets_zero() {
        let s = fake_scores(&[1.0, 2.0, 5.0]);
        let p =
            centrality_sampling_probs(&s, &[0.7], &[0, 0, 0], 0.9, false, None).unwrap();
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn min_score_node_gets_class_probability() {
        let s = fake_scores(&[1.0, 2.0, 5.0]);
        let p =
            centrality_sampling_probs(&s, &[0.3], &[0, 0, 0], 0.9, false, None).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn cut_off_binds() {
        let s = fake_scores(&[1.0, 2.0, 5.0]);
        let p =
            centrality_sampling_probs(&s, &[0.95], &[0, 0, 0], 0.9, false, None).unwrap();
        assert_eq!(p[0], 0.9);
    }

    #[test]
    fn monotone_in_score_within_class() {
        let s = fake_scores(&[1.0, 1.5, 2.0, 3.0, 5.0]);
        let p = centrality_sampling_probs(&s, &[0.8], &[0; 5], 0.9, false, None).unwrap();
        for w in p.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(p.iter().all(|&x| x <= 0.9));
    }

    #[test]
    fn degenerate_scores_fall_back_to_class_probability() {
        let s = fake_scores(&[2.0, 2.0, 2.0]);
        let p = centrality_sampling_probs(&s, &[0.4, 0.95], &[0, 1, 0], 0.9, false, None).unwrap();
        assert_eq!(p, vec![0.4, 0.9, 0.4]);
    }

    #[test]
    fn inverted_factor_prefers_central_nodes() {
        let s = fake_scores(&[1.0, 5.0]);
        let p = centrality_sampling_probs(&s, &[0.5], &[0, 0], 0.9, true, None).unwrap();
        assert_eq!(p[0], 0.0);
        assert!((p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normalization_hits_expected_mean() {
        let s = fake_scores(&[1.0, 2.0, 3.0, 4.0, 6.0]);
        let p = centrality_sampling_probs(&s, &[0.5], &[0; 5], 0.9, false, Some(0.4)).unwrap();
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert!((mean - 0.4).abs() < 1e-9, "mean {mean}");
        assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}
