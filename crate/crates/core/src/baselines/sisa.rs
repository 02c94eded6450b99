use super::{evaluate_with, learners, position, train_all, LocalLearner};
use crate::data::{LabeledDataset, PartitionedDataset};
use crate::error::{Error, Result};
use crate::framework::{EvalScope, Evaluation, Framework, FrameworkKind};
use crate::numeric::{softmax_rows, Matrix, MlpModel, MlpSpec, SgdConfig};
use crate::ClientId;

/// Uniform mean of the shard models' softmax outputs.
pub fn sisa_predict<'a, I>(shards: I, batch: &Matrix) -> Result<Matrix>
where
    I: IntoIterator<Item = &'a MlpModel>,
{
    let mut sum: Option<Matrix> = None;
    let mut k = 0usize;
    for model in shards {
        let p = softmax_rows(&model.forward(batch)?, 1.0)?;
        match sum.as_mut() {
            None => sum = Some(p),
            Some(s) => {
                if s.cols() != p.cols() {
                    return Err(Error::dim("shard class count", s.cols(), p.cols()));
                }
                for (a, v) in s.as_mut_slice().iter_mut().zip(p.as_slice()) {
                    *a += v;
                }
            }
        }
        k += 1;
    }
    let mut sum = sum.ok_or_else(|| Error::State("no shard models to ensemble".into()))?;
    if k > 1 {
        let kf = k as f64;
        for a in sum.as_mut_slice() {
            *a /= kf;
        }
    }
    Ok(sum)
}

/// Each client's shard trains its own model; the server predicts with the
/// mean of all shard models and unlearns a client by dropping its shard.
#[derive(Debug, Clone)]
pub struct SisaA {
    learners: Vec<LocalLearner>,
    local: SgdConfig,
    retired_steps: u64,
}

impl SisaA {
    pub fn new(partition: &PartitionedDataset, specs: &[MlpSpec], local: SgdConfig, master_seed: u64) -> Result<Self> {
        local.validate()?;
        Ok(Self {
            learners: learners(partition, specs, master_seed)?,
            local,
            retired_steps: 0,
        })
    }

    pub fn shards(&self) -> impl Iterator<Item = &MlpModel> + '_ {
        self.learners.iter().map(|l| &l.model)
    }

    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        sisa_predict(self.shards(), batch)
    }
}

impl Framework for SisaA {
    fn kind(&self) -> FrameworkKind {
        FrameworkKind::SisaA
    }

    fn active_clients(&self) -> Vec<ClientId> {
        self.learners.iter().map(|l| l.id).collect()
    }

    fn train_phase(&mut self) -> Result<()> {
        train_all(&mut self.learners, &self.local).map(|_| ())
    }

    fn exchange_phase(&mut self) -> Result<()> {
        Ok(())
    }

    /// Drops the client's shard model; nothing is retrained.
    fn unlearn(&mut self, client: ClientId) -> Result<()> {
        let i = position(&self.learners, client)?;
        self.retired_steps += self.learners.remove(i).steps();
        Ok(())
    }

    fn evaluate(&self, test: &LabeledDataset, scope: EvalScope) -> Result<Evaluation> {
        evaluate_with(&self.learners, test, scope, |_, t| self.predict(t.features()))
    }

    fn training_steps(&self) -> u64 {
        self.retired_steps + self.learners.iter().map(LocalLearner::steps).sum::<u64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{init_mlp, MlpSpec};
    use crate::rng::{client_stream, Purpose};

    fn models(n: u32) -> Vec<MlpModel> {
        let spec = MlpSpec::new(vec![3, 4, 3]).unwrap();
        (0..n)
            .map(|i| init_mlp(&spec, &mut client_stream(5, Purpose::MainInit, i)))
            .collect()
    }

    fn batch() -> Matrix {
        Matrix::from_vec(2, 3, vec![0.5, -1.0, 2.0, 0.1, 0.2, -0.3]).unwrap()
    }

    #[test]
    fn single_shard_is_that_model() {
        let m = models(1);
        let p = sisa_predict(&m, &batch()).unwrap();
        assert_eq!(p, softmax_rows(&m[0].forward(&batch()).unwrap(), 1.0).unwrap());
    }

    #[test]
    fn mean_of_two() {
        let m = models(2);
        let p = sisa_predict(&m, &batch()).unwrap();
        let a = softmax_rows(&m[0].forward(&batch()).unwrap(), 1.0).unwrap();
        let b = softmax_rows(&m[1].forward(&batch()).unwrap(), 1.0).unwrap();
        for i in 0..p.as_slice().len() {
            let want = (a.as_slice()[i] + b.as_slice()[i]) / 2.0;
            assert!((p.as_slice()[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_is_state_error() {
        assert!(matches!(sisa_predict(&[], &batch()), Err(Error::State(_))));
    }
}
