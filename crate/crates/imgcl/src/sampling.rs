//! Class sampling strategies and the progressive rebalancing schedule.
//!
//! The strategy family assigns class `k` probability `N_k^q / sum_i N_i^q`;
//! `q = 1` is size-proportional ("random") sampling and `q = 0` is uniform
//! ("mean") sampling. The progressively balanced probabilities interpolate
//! between those two endpoints with a weight `alpha = 1 - t/T` that decays
//! over training.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeMask;
use crate::rng::substream;
use crate::synth::ClassHistogram;

/// Parameters governing which nodes enter each training stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSchedule {
    /// Total training epochs `T`.
    pub total_epochs: usize,
    /// Rebalance the class distribution every `B` epochs.
    pub rebalance_every: usize,
    /// Fraction of nodes kept per stage, in expectation.
    pub keep_fraction: f64,
    /// Cut-off probability for the centrality factor.
    pub p_tau: f64,
}

impl SamplerSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.rebalance_every == 0 {
            return Err(Error::invalid("rebalance_every must be at least 1"));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::invalid("keep_fraction must lie in (0, 1]"));
        }
        if !(self.p_tau > 0.0 && self.p_tau <= 1.0) {
            return Err(Error::invalid("p_tau must lie in (0, 1]"));
        }
        if self.total_epochs / self.rebalance_every > 10 {
            log::warn!(
                "schedule has {} rebalancing stages; more than 10 tends to destabilize training",
                self.total_epochs / self.rebalance_every
            );
        }
        Ok(())
    }

    pub fn num_stages(&self) -> usize {
        self.total_epochs.div_ceil(self.rebalance_every)
    }

    /// Interpolation weight at epoch `t`: `1 - t/T`, clamped to [0, 1].
    pub fn alpha_at(&self, epoch: usize) -> f64 {
        if self.total_epochs == 0 {
            return 1.0;
        }
        (1.0 - epoch as f64 / self.total_epochs as f64).clamp(0.0, 1.0)
    }
}

impl Default for SamplerSchedule {
    fn default() -> Self {
        SamplerSchedule {
            total_epochs: 200,
            rebalance_every: 20,
            keep_fraction: 0.1,
            p_tau: 0.9,
        }
    }
}

/// Per-class sampling probabilities (they sum to one).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSamplingProbs {
    probs: Vec<f64>,
    q_exponent: Option<f64>,
}

impl ClassSamplingProbs {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// The exponent that produced these probabilities, when they came from
    /// the power-law family.
    pub fn q_exponent(&self) -> Option<f64> {
        self.q_exponent
    }
}

/// Power-family class probabilities `p_k = N_k^q / sum_i N_i^q`, `q` in [0, 1].
pub fn strategy_probs(hist: &ClassHistogram, q: f64) -> Result<ClassSamplingProbs> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid("q must lie in [0, 1]"));
    }
    let powered: Vec<f64> = hist.counts().iter().map(|&c| (c as f64).powf(q)).collect();
    let total: f64 = powered.iter().sum();
    Ok(ClassSamplingProbs {
        probs: powered.into_iter().map(|x| x / total).collect(),
        q_exponent: Some(q),
    })
}

/// Progressively balanced probabilities: `alpha` times the size-proportional
/// strategy plus `1 - alpha` times the uniform strategy.
pub fn pbs_probs(hist: &ClassHistogram, alpha: f64) -> Result<ClassSamplingProbs> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha must lie in [0, 1]"));
    }
    let total = hist.total() as f64;
    let k = hist.num_classes() as f64;
    let probs = hist
        .counts()
        .iter()
        .map(|&c| alpha * (c as f64 / total) + (1.0 - alpha) / k)
        .collect();
    Ok(ClassSamplingProbs {
        probs,
        q_exponent: None,
    })
}

/// Independent Bernoulli draw per node. If nothing is selected, the single
/// highest-probability node (lowest id on ties) is force-included.
pub fn draw_mask(per_node_probs: &[f64], seed: u64) -> Result<NodeMask> {
    if per_node_probs.is_empty() {
        return Err(Error::invalid("cannot draw a mask over zero nodes"));
    }
    if per_node_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("node probabilities must lie in [0, 1]"));
    }
    let mut rng = substream(seed, "mask", 0);
    let mut bits: Vec<bool> = per_node_probs
        .iter()
        .map(|&p| rng.gen::<f64>() < p)
        .collect();
    if !bits.iter().any(|&b| b) {
        let best = per_node_probs
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.partial_cmp(b).unwrap().then(j.cmp(i)))
            .map(|(i, _)| i)
            .unwrap();
        bits[best] = true;
    }
    Ok(NodeMask::new(bits))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(counts: &[usize]) -> ClassHistogram {
        ClassHistogram::new(counts.to_vec()).unwrap()
    }

    #[test]
    fn q_zero_is_uniform() {
        let p = strategy_probs(&hist(&[50, 30, 10, 5]), 0.0).unwrap();
        assert_eq!(p.probs(), &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn q_one_is_proportional() {
        let p = strategy_probs(&hist(&[60, 30, 10]), 1.0).unwrap();
        assert_eq!(p.probs(), &[0.6, 0.3, 0.1]);
    }

    #[test]
    fn q_half_takes_square_roots() {
        let p = strategy_probs(&hist(&[9, 4, 1]), 0.5).unwrap();
        assert_eq!(p.probs(), &[3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0]);
    }

    #[test]
    fn pbs_endpoints_match_strategies() {
        let h = hist(&[70, 20, 10]);
        assert_eq!(
            pbs_probs(&h, 1.0).unwrap().probs(),
            strategy_probs(&h, 1.0).unwrap().probs()
        );
        assert_eq!(
            pbs_probs(&h, 0.0).unwrap().probs(),
            strategy_probs(&h, 0.0).unwrap().probs()
        );
    }

    #[test]
    fn pbs_midpoint() {
        let p = pbs_probs(&hist(&[80, 20]), 0.5).unwrap();
        assert_eq!(p.probs(), &[0.5 * 0.8 + 0.5 * 0.5, 0.5 * 0.2 + 0.5 * 0.5]);
    }

    #[test]
    fn pbs_probs_sum_to_one() {
        for alpha in [0.0, 0.25, 0.7, 1.0] {
            let p = pbs_probs(&hist(&[97, 31, 8, 3, 1]), alpha).unwrap();
            let sum: f64 = p.probs().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pbs_head_probability_shrinks_with_alpha() {
        let h = hist(&[80, 15, 5]);
        let mut last = f64::INFINITY;
        for step in (0..=10).rev() {
            let alpha = step as f64 / 10.0;
            let max = pbs_probs(&h, alpha)
                .unwrap()
                .probs()
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(max <= last + 1e-15);
            last = max;
        }
    }

    #[test]
    fn alpha_schedule_endpoints() {
        let s = SamplerSchedule {
            total_epochs: 100,
            rebalance_every: 10,
            keep_fraction: 0.1,
            p_tau: 0.9,
        };
        assert_eq!(s.alpha_at(0), 1.0);
        assert_eq!(s.alpha_at(100), 0.0);
        assert_eq!(s.alpha_at(25), 0.75);
        assert_eq!(s.num_stages(), 10);
    }

    #[test]
    fn full_and_forced_masks() {
        let m = draw_mask(&[1.0, 1.0, 1.0], 0).unwrap();
        assert_eq!(m.count(), 3);
        let m = draw_mask(&[0.0, 0.0, 0.0], 0).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.is_set(0));
    }

    #[test]
    fn mask_count_concentrates() {
        let probs = vec![0.5; 10_000];
        let m = draw_mask(&probs, 42).unwrap();
        let sigma = (10_000.0f64 * 0.25).sqrt();
        assert!(
            (m.count() as f64 - 5000.0).abs() <= 3.0 * sigma,
            "count {}",
            m.count()
        );
    }

    #[test]
    fn mask_frequency_matches_probabilities() {
        // Per-node empirical frequency over many seeds within 3-sigma
        // binomial bounds.
        let probs = [0.05, 0.3, 0.5, 0.8, 0.97];
        let trials = 10_000usize;
        let mut hits = [0usize; 5];
        for seed in 0..trials as u64 {
            let m = draw_mask(&probs, seed).unwrap();
            for (i, h) in hits.iter_mut().enumerate() {
                if m.is_set(i) {
                    *h += 1;
                }
            }
        }
        for (i, &p) in probs.iter().enumerate() {
            let mean = p * trials as f64;
            let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (hits[i] as f64 - mean).abs() <= 3.0 * sigma,
                "node {i}: {} hits, expected {mean} +- {sigma}",
                hits[i]
            );
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(SamplerSchedule {
            total_epochs: 10,
            rebalance_every: 0,
            keep_fraction: 0.1,
            p_tau: 0.9,
        }
        .validate()
        .is_err());
        assert!(SamplerSchedule {
            total_epochs: 10,
            rebalance_every: 5,
            keep_fraction: 0.0,
            p_tau: 0.9,
        }
        .validate()
        .is_err());
    }
}
