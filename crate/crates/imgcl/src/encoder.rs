//! Two-layer graph convolutional encoder with exact gradients.
//!
//! Forward pass: `Z = A_hat * relu(A_hat * X * W0) * W1` with the
//! renormalized adjacency `A_hat` of the input graph. The backward pass
//! differentiates that computation exactly, including the ReLU mask and both
//! sparse products. Stochastic augmentations drop whole undirected edges and
//! zero whole feature columns.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, SparseMatrix};
use crate::rng::substream;

/// Layer weights for the two-layer encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    pub w0: Array2<f64>,
    pub w1: Array2<f64>,
    pub seed: u64,
}

/// Per-layer weight gradients, matching [`EncoderState`] shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGradients {
    pub w0: Array2<f64>,
    pub w1: Array2<f64>,
}

/// Intermediate activations needed to run the backward pass.
pub struct ForwardCache {
    adjacency: SparseMatrix,
    features: Array2<f64>,
    hidden: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Probability of removing each undirected edge.
    pub edge_drop_prob: f64,
    /// Probability of zeroing each feature column.
    pub feature_mask_prob: f64,
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.edge_drop_prob) {
            return Err(Error::invalid("edge_drop_prob must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.feature_mask_prob) {
            return Err(Error::invalid("feature_mask_prob must lie in [0, 1)"));
        }
        Ok(())
    }
}

impl EncoderState {
    /// Symmetric uniform initialization in `+-sqrt(6 / (fan_in + fan_out))`.
    pub fn init(input_dim: usize, hidden_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = substream(seed, "encoder_init", 0);
        let mut layer = |rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
        };
        let w0 = layer(input_dim, hidden_dim);
        let w1 = layer(hidden_dim, output_dim);
        EncoderState { w0, w1, seed }
    }

    pub fn input_dim(&self) -> usize {
        self.w0.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w0.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w1.ncols()
    }

    /// Embeddings for all nodes plus the cache for a later backward pass.
    pub fn forward_cached(&self, graph: &Graph) -> Result<(Array2<f64>, ForwardCache)> {
        if graph.feature_dim() != self.input_dim() {
            return Err(Error::invalid(format!(
                "graph features have dim {}, encoder expects {}",
                graph.feature_dim(),
                self.input_dim()
            )));
        }
        let adjacency = graph.normalized_adjacency();
        let features = graph.features().clone();
        let pre = adjacency.mul_dense(&features.view()).dot(&self.w0);
        let hidden = pre.mapv(|x| x.max(0.0));
        let z = adjacency.mul_dense(&hidden.view()).dot(&self.w1);
        Ok((
            z,
            ForwardCache {
                adjacency,
                features,
                hidden,
            },
        ))
    }

    /// Embeddings only.
    pub fn forward(&self, graph: &Graph) -> Result<Array2<f64>> {
        Ok(self.forward_cached(graph)?.0)
    }

    /// Exact weight gradients for a loss with the given embedding gradient.
    pub fn backward(&self, cache: &ForwardCache, grad_z: &Array2<f64>) -> Result<EncoderGradients> {
        let n = cache.hidden.nrows();
        if grad_z.nrows() != n || grad_z.ncols() != self.output_dim() {
            return Err(Error::invalid(format!(
                "embedding gradient has shape {:?}, expected ({n}, {})",
                grad_z.dim(),
                self.output_dim()
            )));
        }
        // Z = A (relu(A X W0)) W1; A is symmetric.
        let a_gz = cache.adjacency.mul_dense(&grad_z.view());
        let grad_w1 = cache.hidden.t().dot(&a_gz);
        let mut grad_hidden = a_gz.dot(&self.w1.t());
        grad_hidden.zip_mut_with(&cache.hidden, |g, &h| {
            if h <= 0.0 {
                *g = 0.0;
            }
        });
        let a_gh = cache.adjacency.mul_dense(&grad_hidden.view());
        let grad_w0 = cache.features.t().dot(&a_gh);
        Ok(EncoderGradients {
            w0: grad_w0,
            w1: grad_w1,
        })
    }

    /// Plain gradient-descent update.
    pub fn apply_gradients(&mut self, grads: &EncoderGradients, learning_rate: f64) {
        self.w0.scaled_add(-learning_rate, &grads.w0);
        self.w1.scaled_add(-learning_rate, &grads.w1);
    }
}

/// Row-wise L2 normalization with a tiny floor for zero rows. Returns the
/// normalized matrix and the norms used, for the backward pass.
pub fn normalize_rows(z: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let mut out = z.clone();
    let mut norms = Vec::with_capacity(z.nrows());
    for mut row in out.rows_mut() {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        row /= norm;
        norms.push(norm);
    }
    (out, norms)
}

/// Backward of [`normalize_rows`]: for `y = z / |z|`,
/// `dL/dz = (g - (y . g) y) / |z|`.
pub fn normalize_rows_backward(
    normalized: &Array2<f64>,
    norms: &[f64],
    grad: &Array2<f64>,
) -> Array2<f64> {
    let mut out = grad.clone();
    for i in 0..normalized.nrows() {
        let y = normalized.row(i);
        let g = grad.row(i);
        let dot: f64 = y.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        let mut row = out.row_mut(i);
        row.scaled_add(-dot, &y);
        row /= norms[i];
    }
    out
}

/// Stochastic view of a graph: each undirected edge survives independently
/// with probability `1 - edge_drop_prob`, and each feature column is zeroed
/// across all nodes with probability `feature_mask_prob`.
pub fn augment(graph: &Graph, cfg: &AugmentationConfig, seed: u64) -> Result<Graph> {
    cfg.validate()?;
    let mut rng = substream(seed, "augment", 0);
    let kept: Vec<(usize, usize)> = graph
        .edge_list()
        .into_iter()
        .filter(|_| rng.gen::<f64>() >= cfg.edge_drop_prob)
        .collect();

    let mut features = graph.features().clone();
    for j in 0..features.ncols() {
        if rng.gen::<f64>() < cfg.feature_mask_prob {
            features.column_mut(j).fill(0.0);
        }
    }

    graph.with_edges(&kept)?.with_features(features)
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsHeader {
    layer_order: Vec<String>,
    layer_dims: Vec<[usize; 2]>,
    seed: u64,
}

/// Writes weights as a little-endian binary payload behind a JSON header.
pub fn save_weights(state: &EncoderState, path: &Path) -> Result<()> {
    let header = WeightsHeader {
        layer_order: vec!["w0".into(), "w1".into()],
        layer_dims: vec![
            [state.w0.nrows(), state.w0.ncols()],
            [state.w1.nrows(), state.w1.ncols()],
        ],
        seed: state.seed,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    f.write_all(&header_bytes)?;
    for layer in [&state.w0, &state.w1] {
        for &x in layer.iter() {
            f.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<EncoderState> {
    let mut f = fs::File::open(path)?;
    let mut len_bytes = [0u8; 4];
    f.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    f.read_exact(&mut header_bytes)?;
    let header: WeightsHeader = serde_json::from_slice(&header_bytes)?;
    if header.layer_order != ["w0", "w1"] || header.layer_dims.len() != 2 {
        return Err(Error::format(
            path.display().to_string(),
            "expected a two-layer header with order [w0, w1]",
        ));
    }
    let mut read_layer = |dims: [usize; 2]| -> Result<Array2<f64>> {
        let count = dims[0] * dims[1];
        let mut bytes = vec![0u8; count * 8];
        f.read_exact(&mut bytes)?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Array2::from_shape_vec((dims[0], dims[1]), values)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    };
    let w0 = read_layer(header.layer_dims[0])?;
    let w1 = read_layer(header.layer_dims[1])?;
    Ok(EncoderState {
        w0,
        w1,
        seed: header.seed,
    })
}
