//! Seed repositories, the λ-weighted ensemble decision rule, and client-wise
//! unlearning by seed removal.

mod wire;

pub use wire::{decode_seed, encode_seed, FORMAT_VERSION, MAGIC};

use crate::error::{Error, Result};
use crate::numeric::{softmax_rows, Matrix, MlpModel};
use crate::ClientId;

/// How member outputs are mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CombineMode {
    /// Mix softmax probabilities (T = 1). Rows stay normalized.
    #[default]
    Probabilities,
    /// Mix raw logits, then apply softmax. Kept for sensitivity studies.
    Logits,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    lambda: f64,
    pub mode: CombineMode,
}

impl EnsembleConfig {
    /// `lambda` must lie in `[0, 1)`.
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda must be in [0, 1), got {lambda}")));
        }
        Ok(Self {
            lambda,
            mode: CombineMode::Probabilities,
        })
    }

    pub fn with_mode(mut self, mode: CombineMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedEntry {
    pub neighbor: ClientId,
    pub seed: MlpModel,
}

/// A client's stored neighbor seeds, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRepository {
    owner: ClientId,
    input_dim: usize,
    classes: usize,
    entries: Vec<SeedEntry>,
}

impl SeedRepository {
    pub fn new(owner: ClientId, input_dim: usize, classes: usize) -> Self {
        Self {
            owner,
            input_dim,
            classes,
            entries: Vec::new(),
        }
    }

    pub fn owner(&self) -> ClientId {
        self.owner
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, neighbor: ClientId) -> bool {
        self.entries.iter().any(|e| e.neighbor == neighbor)
    }

    pub fn neighbors(&self) -> impl Iterator<Item = ClientId> + '_ {
        self.entries.iter().map(|e| e.neighbor)
    }

    pub fn entries(&self) -> &[SeedEntry] {
        &self.entries
    }

    pub fn get(&self, neighbor: ClientId) -> Option<&MlpModel> {
        self.entries
            .iter()
            .find(|e| e.neighbor == neighbor)
            .map(|e| &e.seed)
    }

    /// Appends a neighbor's seed. Replacing an existing seed requires an
    /// explicit [`remove`](Self::remove) first.
    pub fn add(&mut self, neighbor: ClientId, seed: MlpModel) -> Result<()> {
        if neighbor == self.owner {
            return Err(Error::Validation(format!(
                "client {} cannot store its own seed in its repository",
                self.owner
            )));
        }
        if self.contains(neighbor) {
            return Err(Error::Conflict(format!(
                "repository of client {} already holds a seed from {neighbor}",
                self.owner
            )));
        }
        let spec = seed.spec();
        if spec.input_dim() != self.input_dim || spec.output_dim() != self.classes {
            return Err(Error::Validation(format!(
                "seed from {neighbor} has dims ({}, {}), repository expects ({}, {})",
                spec.input_dim(),
                spec.output_dim(),
                self.input_dim,
                self.classes
            )));
        }
        self.entries.push(SeedEntry { neighbor, seed });
        Ok(())
    }

    /// Deletes a neighbor's seed (client-wise unlearning). No other state is
    /// touched; the removed seed is handed back to the caller.
    pub fn remove(&mut self, neighbor: ClientId) -> Result<MlpModel> {
        let pos = self
            .entries
            .iter()
            .position(|e| e.neighbor == neighbor)
            .ok_or_else(|| {
                Error::NotFound(format!(
                    "client {} holds no seed from {neighbor}",
                    self.owner
                ))
            })?;
        Ok(self.entries.remove(pos).seed)
    }

    /// Remove-then-add, so the refreshed seed moves to the end.
    pub fn replace(&mut self, neighbor: ClientId, seed: MlpModel) -> Result<()> {
        if self.contains(neighbor) {
            self.remove(neighbor)?;
        }
        self.add(neighbor, seed)
    }
}

/// `(1 − λ)·p_main + (λ/K)·Σ_k p_seed_k` row by row. With no seeds the main
/// model's probabilities are returned unchanged.
pub fn ensemble_predict(
    main: &MlpModel,
    repo: &SeedRepository,
    cfg: &EnsembleConfig,
    batch: &Matrix,
) -> Result<Matrix> {
    let main_logits = main.forward(batch)?;
    if main_logits.cols() != repo.classes {
        return Err(Error::dim(
            "main model class count",
            repo.classes,
            main_logits.cols(),
        ));
    }
    if repo.is_empty() {
        return softmax_rows(&main_logits, 1.0);
    }
    let mut member_sum = Matrix::zeros(main_logits.rows(), main_logits.cols());
    for entry in &repo.entries {
        let logits = entry.seed.forward(batch).map_err(|e| {
            Error::Validation(format!("seed from neighbor {}: {e}", entry.neighbor))
        })?;
        let out = match cfg.mode {
            CombineMode::Probabilities => softmax_rows(&logits, 1.0)?,
            CombineMode::Logits => logits,
        };
        for (s, v) in member_sum.as_mut_slice().iter_mut().zip(out.as_slice()) {
            *s += v;
        }
    }
    let lambda = cfg.lambda;
    let k = repo.len() as f64;
    let base = match cfg.mode {
        CombineMode::Probabilities => softmax_rows(&main_logits, 1.0)?,
        CombineMode::Logits => main_logits,
    };
    let mut mixed = base;
    for (m, s) in mixed.as_mut_slice().iter_mut().zip(member_sum.as_slice()) {
        *m = (1.0 - lambda) * *m + (lambda / k) * s;
    }
    match cfg.mode {
        CombineMode::Probabilities => Ok(mixed),
        CombineMode::Logits => softmax_rows(&mixed, 1.0),
    }
}
