//! Minibatch SGD loops shared by every framework.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

use super::loss::onehot;
use super::matrix::Matrix;
use super::mlp::{LossKind, MlpModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        Ok(())
    }
}

/// Outcome of a training call.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainStats {
    /// Number of SGD updates applied.
    pub steps: u64,
    /// Mean batch loss over the final epoch (0 when no epochs ran).
    pub last_epoch_loss: f64,
}

/// Runs `cfg.epochs` shuffled passes over `n_rows` examples. `batch_loss`
/// receives the row indices of each minibatch and returns `(inputs, loss)`.
pub fn train_minibatch<R, F>(
    model: &mut MlpModel,
    n_rows: usize,
    cfg: &SgdConfig,
    rng: &mut R,
    mut batch_loss: F,
) -> Result<TrainStats>
where
    R: Rng + ?Sized,
    F: FnMut(&[usize], &mut dyn FnMut(&Matrix, LossKind<'_>) -> Result<f64>) -> Result<f64>,
{
    cfg.validate()?;
    let mut stats = TrainStats::default();
    if n_rows == 0 {
        return Ok(stats);
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut step = |x: &Matrix, loss: LossKind<'_>| -> Result<f64> {
                let (value, grads) = model.backward(x, loss)?;
                if !value.is_finite() {
                    return Err(Error::Divergence(format!("non-finite loss at epoch {epoch}")));
                }
                model
                    .sgd_step(&grads, cfg.lr)
                    .map_err(|e| match e {
                        Error::Divergence(m) => Error::Divergence(format!("epoch {epoch}: {m}")),
                        other => other,
                    })?;
                Ok(value)
            };
            total += batch_loss(chunk, &mut step)?;
            batches += 1;
            stats.steps += 1;
        }
        stats.last_epoch_loss = total / batches as f64;
    }
    Ok(stats)
}

/// Supervised cross-entropy training on labeled rows.
pub fn train_supervised<R: Rng + ?Sized>(
    model: &mut MlpModel,
    features: &Matrix,
    labels: &[usize],
    cfg: &SgdConfig,
    rng: &mut R,
) -> Result<TrainStats> {
    if features.rows() != labels.len() {
        return Err(Error::dim("training labels", features.rows(), labels.len()));
    }
    let classes = model.spec().output_dim();
    train_minibatch(model, features.rows(), cfg, rng, |idx, step| {
        let x = features.select_rows(idx);
        let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let y = onehot(&batch_labels, classes)?;
        step(&x, LossKind::CrossEntropy { onehot: &y })
    })
}
