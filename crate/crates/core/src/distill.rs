//! Incubation: training a lightweight seed model to mimic a client's main
//! model on unlabeled reference features.
//!
//! The only inputs are the main model (read-only) and the reference
//! features, so nothing about the client's labeled data can reach the seed
//! except through the main model's softened outputs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{
    init_mlp, kl_divergence, softmax_rows, train_minibatch, LossKind, Matrix, MlpModel, MlpSpec,
    SgdConfig, TrainStats,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillConfig {
    pub temperature: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "distillation temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("distillation epochs must be >= 1".into()));
        }
        self.sgd().validate()
    }

    fn sgd(&self) -> SgdConfig {
        SgdConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
        }
    }
}

/// Unlabeled features used only for distillation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    features: Matrix,
}

impl ReferenceSet {
    pub fn new(features: Matrix) -> Self {
        Self { features }
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }
}

fn check_pair(main: &MlpModel, seed_spec: &MlpSpec, reference: &ReferenceSet) -> Result<()> {
    let ms = main.spec();
    if seed_spec.input_dim() != ms.input_dim() {
        return Err(Error::Config(format!(
            "seed input dim {} does not match main input dim {}",
            seed_spec.input_dim(),
            ms.input_dim()
        )));
    }
    if seed_spec.output_dim() != ms.output_dim() {
        return Err(Error::Config(format!(
            "seed class count {} does not match main class count {}",
            seed_spec.output_dim(),
            ms.output_dim()
        )));
    }
    if seed_spec.param_count() > ms.param_count() {
        return Err(Error::Config(format!(
            "seed model ({} params) must not be larger than the main model ({} params)",
            seed_spec.param_count(),
            ms.param_count()
        )));
    }
    if reference.is_empty() {
        return Err(Error::Domain("reference set is empty".into()));
    }
    if reference.features().cols() != ms.input_dim() {
        return Err(Error::Config(format!(
            "reference features have {} columns, models expect {}",
            reference.features().cols(),
            ms.input_dim()
        )));
    }
    Ok(())
}

/// Initializes a seed from `seed_spec` and distills `main` into it.
pub fn incubate_seed<R: Rng + ?Sized>(
    main: &MlpModel,
    seed_spec: &MlpSpec,
    reference: &ReferenceSet,
    cfg: &DistillConfig,
    rng: &mut R,
) -> Result<(MlpModel, TrainStats)> {
    check_pair(main, seed_spec, reference)?;
    let mut seed = init_mlp(seed_spec, rng);
    let stats = distill_into(&mut seed, main, reference, cfg, rng)?;
    Ok((seed, stats))
}

/// Continues distilling `main` into an existing seed.
pub fn distill_into<R: Rng + ?Sized>(
    seed: &mut MlpModel,
    main: &MlpModel,
    reference: &ReferenceSet,
    cfg: &DistillConfig,
    rng: &mut R,
) -> Result<TrainStats> {
    check_pair(main, seed.spec(), reference)?;
    cfg.validate()?;
    let x = reference.features();
    // Teacher targets are fixed for the whole call; the teacher is never mutated.
    let teacher = softmax_rows(&main.forward(x)?, cfg.temperature)?;
    train_minibatch(seed, x.rows(), &cfg.sgd(), rng, |idx, step| {
        let xb = x.select_rows(idx);
        let tb = teacher.select_rows(idx);
        step(
            &xb,
            LossKind::Distill {
                teacher_soft: &tb,
                temperature: cfg.temperature,
            },
        )
    })
}

/// How closely a seed tracks its teacher on the reference set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fidelity {
    /// Mean `KL(σ_T(main) ‖ σ_T(seed))` over reference rows.
    pub mean_kl: f64,
    /// Fraction of rows where both models pick the same class.
    pub agreement: f64,
}

pub fn distill_fidelity(
    seed: &MlpModel,
    main: &MlpModel,
    reference: &ReferenceSet,
    temperature: f64,
) -> Result<Fidelity> {
    if reference.is_empty() {
        return Err(Error::Domain("reference set is empty".into()));
    }
    let x = reference.features();
    let main_logits = main.forward(x)?;
    let seed_logits = seed.forward(x)?;
    if main_logits.cols() != seed_logits.cols() {
        return Err(Error::dim("fidelity class count", main_logits.cols(), seed_logits.cols()));
    }
    let p = softmax_rows(&main_logits, temperature)?;
    let q = softmax_rows(&seed_logits, temperature)?;
    let mut kl = 0.0;
    for r in 0..p.rows() {
        kl += kl_divergence(p.row(r), q.row(r))?;
    }
    let agree = main_logits
        .argmax_rows()
        .iter()
        .zip(seed_logits.argmax_rows())
        .filter(|(a, b)| **a == *b)
        .count();
    let n = x.rows() as f64;
    Ok(Fidelity {
        mean_kl: kl / n,
        agreement: agree as f64 / n,
    })
}
