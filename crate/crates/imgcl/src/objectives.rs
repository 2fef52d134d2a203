//! Contrastive objectives over two view embeddings.
//!
//! Both losses return the scalar value together with analytic gradients with
//! respect to each view. The InfoNCE loss anchors every node in one view
//! against the same node in the other view, with all remaining other-view
//! nodes as negatives, symmetrized over the two anchoring directions; it
//! expects row-normalized inputs. The decorrelation loss standardizes each
//! view per dimension internally and penalizes the cross-correlation matrix
//! for deviating from the identity.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    InfoNce,
    Decorrelation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastConfig {
    pub objective_kind: ObjectiveKind,
    /// InfoNCE temperature.
    pub temperature: f64,
    /// Off-diagonal weight for the decorrelation loss; `None` means `1/d`.
    pub lambda_offdiag: Option<f64>,
}

impl ContrastConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::invalid("temperature must be > 0"));
        }
        if let Some(l) = self.lambda_offdiag {
            if !(l >= 0.0) {
                return Err(Error::invalid("lambda_offdiag must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn lambda_for_dim(&self, d: usize) -> f64 {
        self.lambda_offdiag.unwrap_or(1.0 / d as f64)
    }
}

impl Default for ContrastConfig {
    fn default() -> Self {
        ContrastConfig {
            objective_kind: ObjectiveKind::Decorrelation,
            temperature: 0.5,
            lambda_offdiag: None,
        }
    }
}

pub struct LossValue {
    pub loss: f64,
    pub grad_z: Array2<f64>,
    pub grad_zp: Array2<f64>,
}

/// One anchoring direction of the InfoNCE loss: cross-entropy of the row
/// softmax of `S/tau` against the diagonal, where `S = Z Zp^T`.
/// Returns the loss plus gradients with respect to both inputs.
fn infonce_one_direction(z: &Array2<f64>, zp: &Array2<f64>, tau: f64) -> LossValue {
    let n = z.nrows();
    let scores = z.dot(&zp.t()) / tau;
    // row softmax with the usual max-shift
    let mut probs = scores.clone();
    let mut loss = 0.0;
    for (u, mut row) in probs.rows_mut().into_iter().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum: f64 = row.iter().sum();
        row /= sum;
        loss += -(scores[[u, u]] - max - sum.ln());
    }
    loss /= n as f64;

    let mut coeff = probs;
    for u in 0..n {
        coeff[[u, u]] -= 1.0;
    }
    coeff *= 1.0 / (n as f64 * tau);
    let grad_z = coeff.dot(zp);
    let grad_zp = coeff.t().dot(z);
    LossValue {
        loss,
        grad_z,
        grad_zp,
    }
}

/// Symmetrized InfoNCE loss over row-normalized view embeddings.
pub fn infonce_loss(z: &Array2<f64>, zp: &Array2<f64>, tau: f64) -> Result<LossValue> {
    if z.dim() != zp.dim() {
        return Err(Error::invalid(format!(
            "view shapes differ: {:?} vs {:?}",
            z.dim(),
            zp.dim()
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("temperature must be > 0"));
    }
    let forward = infonce_one_direction(z, zp, tau);
    let backward = infonce_one_direction(zp, z, tau);
    Ok(LossValue {
        loss: 0.5 * (forward.loss + backward.loss),
        grad_z: 0.5 * (&forward.grad_z + &backward.grad_zp),
        grad_zp: 0.5 * (&forward.grad_zp + &backward.grad_z),
    })
}

struct Standardized {
    hat: Array2<f64>,
    /// Standard deviations actually used (after the variance floor).
    stds: Vec<f64>,
    /// Columns where the floor was active; treated as constants in backward.
    floored: Vec<bool>,
}

const VARIANCE_FLOOR: f64 = 1e-8;

fn standardize(z: &Array2<f64>) -> Standardized {
    let n = z.nrows() as f64;
    let mut hat = z.clone();
    let mut stds = Vec::with_capacity(z.ncols());
    let mut floored = Vec::with_capacity(z.ncols());
    for mut col in hat.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|x| x - mean);
        let var = col.iter().map(|x| x * x).sum::<f64>() / n;
        let is_floored = var < VARIANCE_FLOOR;
        if is_floored {
            log::debug!("standardization hit the variance floor ({var:.3e})");
        }
        let std = var.max(VARIANCE_FLOOR).sqrt();
        col /= std;
        stds.push(std);
        floored.push(is_floored);
    }
    Standardized { hat, stds, floored }
}

/// Backward through per-column standardization with population statistics:
/// `dL/dz = (g - mean(g) - zhat * mean(g * zhat)) / std` per column.
fn standardize_backward(s: &Standardized, grad: &Array2<f64>) -> Array2<f64> {
    let n = s.hat.nrows() as f64;
    let mut out = grad.clone();
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        let g_mean = col.sum() / n;
        if s.floored[j] {
            // std was a constant; only the mean subtraction differentiates
            col.mapv_inplace(|g| (g - g_mean) / s.stds[j]);
            continue;
        }
        let hat = s.hat.column(j);
        let gh_mean = col.iter().zip(hat.iter()).map(|(g, h)| g * h).sum::<f64>() / n;
        for (g, &h) in col.iter_mut().zip(hat.iter()) {
            *g = (*g - g_mean - h * gh_mean) / s.stds[j];
        }
    }
    out
}

/// Cross-correlation redundancy loss: both views are standardized per
/// dimension, `C = Zhat^T Zphat / N`, and the loss is
/// `sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2`.
pub fn decorrelation_loss(z: &Array2<f64>, zp: &Array2<f64>, lambda: f64) -> Result<LossValue> {
    if z.dim() != zp.dim() {
        return Err(Error::invalid(format!(
            "view shapes differ: {:?} vs {:?}",
            z.dim(),
            zp.dim()
        )));
    }
    if z.nrows() < 2 {
        return Err(Error::invalid("decorrelation needs at least 2 rows"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be >= 0"));
    }
    let n = z.nrows() as f64;
    let sz = standardize(z);
    let szp = standardize(zp);
    let corr = sz.hat.t().dot(&szp.hat) / n;

    let d = corr.nrows();
    let mut loss = 0.0;
    let mut grad_corr = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            if i == j {
                let r = 1.0 - corr[[i, i]];
                loss += r * r;
                grad_corr[[i, i]] = -2.0 * r;
            } else {
                loss += lambda * corr[[i, j]] * corr[[i, j]];
                grad_corr[[i, j]] = 2.0 * lambda * corr[[i, j]];
            }
        }
    }
    let grad_hat_z = szp.hat.dot(&grad_corr.t()) / n;
    let grad_hat_zp = sz.hat.dot(&grad_corr) / n;
    Ok(LossValue {
        loss,
        grad_z: standardize_backward(&sz, &grad_hat_z),
        grad_zp: standardize_backward(&szp, &grad_hat_zp),
    })
}

/// Dispatch on the configured objective. InfoNCE inputs must already be
/// row-normalized; decorrelation takes raw embeddings.
pub fn contrast_loss(cfg: &ContrastConfig, z: &Array2<f64>, zp: &Array2<f64>) -> Result<LossValue> {
    match cfg.objective_kind {
        ObjectiveKind::InfoNce => infonce_loss(z, zp, cfg.temperature),
        ObjectiveKind::Decorrelation => {
            decorrelation_loss(z, zp, cfg.lambda_for_dim(z.ncols()))
        }
    }
}

/// Mean of per-dimension variances, used for diagnostics.
pub fn mean_variance(z: &Array2<f64>) -> f64 {
    let n = z.nrows() as f64;
    z.map_axis(Axis(0), |col| {
        let mean = col.sum() / n;
        col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
    })
    .mean()
    .unwrap_or(0.0)
}
