//! Temperature softmax, KL divergence and cross-entropy.

use crate::error::{Error, Result};

use super::matrix::Matrix;

/// Lower clamp applied to `q` inside `ln` when computing KL divergence.
pub const KL_EPS: f64 = 1e-12;

/// `exp(d_i / T) / Σ_j exp(d_j / T)` with max-subtraction.
pub fn softmax_temp(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, temperature, &mut out);
    Ok(out)
}

/// Row-wise temperature softmax.
pub fn softmax_rows(logits: &Matrix, temperature: f64) -> Result<Matrix> {
    check_temperature(temperature)?;
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        softmax_into(logits.row(r), temperature, out.row_mut(r));
    }
    Ok(out)
}

pub(crate) fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Domain(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    Ok(())
}

fn softmax_into(logits: &[f64], temperature: f64, out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &d) in out.iter_mut().zip(logits) {
        *o = ((d - max) / temperature).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `ln Σ exp(d_i)`, stabilized.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|d| (d - max).exp()).sum::<f64>().ln()
}

/// `Σ p_i ln(p_i / q_i)`; terms with `p_i = 0` contribute nothing and `q` is
/// clamped below by [`KL_EPS`].
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim("kl_divergence length", p.len(), q.len()));
    }
    Ok(kl_unchecked(p, q))
}

pub(crate) fn kl_unchecked(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.ln() - qi.max(KL_EPS).ln()))
        .sum()
}

/// Mean over the batch of `-ln softmax(logits)[true class]`.
pub fn cross_entropy(logits: &Matrix, onehot: &Matrix) -> Result<f64> {
    if logits.rows() != onehot.rows() {
        return Err(Error::dim("cross_entropy batch", logits.rows(), onehot.rows()));
    }
    if logits.cols() != onehot.cols() {
        return Err(Error::dim("cross_entropy classes", logits.cols(), onehot.cols()));
    }
    if logits.rows() == 0 {
        return Err(Error::Domain("cross_entropy on an empty batch".into()));
    }
    let mut total = 0.0;
    for r in 0..logits.rows() {
        let class = onehot_class(onehot.row(r))
            .ok_or_else(|| Error::Validation(format!("row {r} is not a one-hot vector")))?;
        let row = logits.row(r);
        total += log_sum_exp(row) - row[class];
    }
    Ok(total / logits.rows() as f64)
}

/// Position of the single 1-entry of a one-hot row.
pub fn onehot_class(row: &[f64]) -> Option<usize> {
    let mut found = None;
    for (i, &v) in row.iter().enumerate() {
        if v == 1.0 {
            if found.is_some() {
                return None;
            }
            found = Some(i);
        } else if v != 0.0 {
            return None;
        }
    }
    found
}

/// One-hot encoding of class indices.
pub fn onehot(labels: &[usize], classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (r, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Validation(format!(
                "label {l} out of range for {classes} classes"
            )));
        }
        m.set(r, l, 1.0);
    }
    Ok(m)
}

/// Fraction of rows whose argmax matches the label; ties go to the lowest class.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if logits.rows() == 0 {
        return Err(Error::Domain("accuracy on an empty batch".into()));
    }
    if logits.rows() != labels.len() {
        return Err(Error::dim("accuracy labels", logits.rows(), labels.len()));
    }
    let hits = logits
        .argmax_rows()
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}
