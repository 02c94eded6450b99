use rand::Rng;
use rand_distr::StandardNormal;

use super::{FeatureScaling, LabeledDataset};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Gaussian cluster task parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobParams {
    pub n_per_class: usize,
    pub classes: usize,
    pub features: usize,
    /// Standard deviation of the isotropic noise around each cluster centre.
    pub spread: f64,
    /// Number of separate clusters that make up one class. Values above 1
    /// give classes that are not convex, which rewards model capacity.
    pub clusters_per_class: usize,
}

/// Draws `n_per_class` rows per class around distinct centres, then
/// standardizes every feature to zero mean and unit variance.
///
/// With one cluster per class and `classes <= features` the centres sit on
/// the scaled simplex `3·e_c`; otherwise each cluster centre is a standard
/// normal draw scaled by 1.5. Rows come out class-major.
pub fn gen_blobs<R: Rng + ?Sized>(p: &BlobParams, rng: &mut R) -> Result<LabeledDataset> {
    if p.classes < 2 || p.features < 2 {
        return Err(Error::Config(format!(
            "blobs need >= 2 classes and >= 2 features, got {} and {}",
            p.classes, p.features
        )));
    }
    if p.n_per_class == 0 || p.clusters_per_class == 0 {
        return Err(Error::Config("blobs need n_per_class >= 1 and clusters_per_class >= 1".into()));
    }
    if !(p.spread >= 0.0 && p.spread.is_finite()) {
        return Err(Error::Config(format!("blob spread must be >= 0, got {}", p.spread)));
    }
    let f = p.features;
    let n_clusters = p.classes * p.clusters_per_class;
    let centres: Vec<Vec<f64>> = if p.clusters_per_class == 1 && p.classes <= f {
        (0..p.classes)
            .map(|c| (0..f).map(|j| if j == c { 3.0 } else { 0.0 }).collect())
            .collect()
    } else {
        (0..n_clusters)
            .map(|_| (0..f).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    };

    let n = p.n_per_class * p.classes;
    let mut data = Vec::with_capacity(n * f);
    let mut labels = Vec::with_capacity(n);
    for c in 0..p.classes {
        for i in 0..p.n_per_class {
            // cluster c + k·classes belongs to class c
            let centre = &centres[c + (i % p.clusters_per_class) * p.classes];
            for &m in centre {
                data.push(m + p.spread * rng.sample::<f64, _>(StandardNormal));
            }
            labels.push(c);
        }
    }
    standardize(&mut data, f);
    LabeledDataset::new(Matrix::from_vec(n, f, data)?, labels, p.classes, FeatureScaling::Standardized)
}

fn standardize(data: &mut [f64], f: usize) {
    let n = (data.len() / f) as f64;
    for j in 0..f {
        let mean = data.iter().skip(j).step_by(f).sum::<f64>() / n;
        let var = data.iter().skip(j).step_by(f).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for v in data.iter_mut().skip(j).step_by(f) {
            *v = (*v - mean) / sd;
        }
    }
}
