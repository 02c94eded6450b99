//! Dataset ingestion, synthetic blobs, and non-IID client partitioning.

mod blobs;
mod idx;
mod partition;

pub use blobs::{gen_blobs, BlobParams};
pub use idx::{load_idx_pair, load_mnist_dir, parse_idx};
pub use partition::{
    partition_noniid, split_reference, ClientSplit, PartitionPlan, PartitionedDataset,
    ReferenceSplit, SealedLabels,
};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// How raw features were mapped before storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureScaling {
    /// Raw bytes divided by 255.
    UnitInterval,
    /// Per-feature zero mean, unit variance.
    Standardized,
    /// Used as given.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    class_count: usize,
    scaling: FeatureScaling,
}

impl LabeledDataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        class_count: usize,
        scaling: FeatureScaling,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::dim("dataset labels", features.rows(), labels.len()));
        }
        if labels.is_empty() {
            return Err(Error::Validation("a dataset needs at least one row".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Validation(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            class_count,
            scaling,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn scaling(&self) -> FeatureScaling {
        self.scaling
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Validation(format!(
                "row {bad} out of range for {} rows",
                self.len()
            )));
        }
        Self::new(
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.class_count,
            self.scaling,
        )
    }

    /// Rows whose label is in `classes`.
    pub fn restrict_to_classes(&self, classes: &[usize]) -> Result<Self> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| classes.contains(&self.labels[i]))
            .collect();
        self.subset(&idx)
    }

    /// Same rows with labels replaced. Used to show that label content does
    /// not flow into seeds.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.features.clone(), labels, self.class_count, self.scaling)
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Concatenates two datasets with identical width and class count.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.feature_dim() != other.feature_dim() {
            return Err(Error::dim("concat feature dim", self.feature_dim(), other.feature_dim()));
        }
        if self.class_count != other.class_count {
            return Err(Error::dim("concat class count", self.class_count, other.class_count));
        }
        let mut data = self.features.as_slice().to_vec();
        data.extend_from_slice(other.features.as_slice());
        let features = Matrix::from_vec(self.len() + other.len(), self.feature_dim(), data)?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(features, labels, self.class_count, self.scaling)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledDataset {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        LabeledDataset::new(x, vec![0, 2, 1], 3, FeatureScaling::Identity).unwrap()
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let x = Matrix::zeros(2, 1);
        assert!(LabeledDataset::new(x, vec![0, 3], 3, FeatureScaling::Identity).is_err());
    }

    #[test]
    fn subset_and_restrict() {
        let d = tiny();
        let s = d.subset(&[2, 0]).unwrap();
        assert_eq!(s.labels(), &[1, 0]);
        assert_eq!(s.features().as_slice(), &[2.0, 0.0]);
        let r = d.restrict_to_classes(&[1, 2]).unwrap();
        assert_eq!(r.labels(), &[2, 1]);
        assert_eq!(d.class_histogram(), vec![1, 1, 1]);
    }
}
