//! Dense ReLU multilayer perceptrons with hand-derived backpropagation.

use rand::Rng;

use crate::error::{Error, Result};

use super::loss::{check_temperature, log_sum_exp, onehot_class};
use super::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
}

/// Layer layout `[F, hidden.., C]` of a network.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MlpSpec {
    layer_dims: Vec<usize>,
    activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_dims: Vec<usize>) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Validation(format!(
                "an MLP needs at least an input and an output dimension, got {layer_dims:?}"
            )));
        }
        if layer_dims.contains(&0) {
            return Err(Error::Validation(format!(
                "layer dimensions must be >= 1, got {layer_dims:?}"
            )));
        }
        Ok(Self {
            layer_dims,
            activation: Activation::Relu,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Model-size tiers standing in for small/medium/large CNN backbones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tier {
    Small,
    Medium,
    Large,
}

impl Tier {
    pub fn spec(self, features: usize, classes: usize) -> Result<MlpSpec> {
        let dims = match self {
            Tier::Small => vec![features, 16, classes],
            Tier::Medium => vec![features, 64, classes],
            Tier::Large => vec![features, 128, 64, classes],
        };
        MlpSpec::new(dims)
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Small => "small",
            Tier::Medium => "medium",
            Tier::Large => "large",
        }
    }
}

impl std::str::FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Tier::Small),
            "medium" => Ok(Tier::Medium),
            "large" => Ok(Tier::Large),
            other => Err(Error::Config(format!("unknown model tier `{other}`"))),
        }
    }
}

/// Network parameters. Layer `l` maps `dims[l] -> dims[l+1]` with a weight
/// matrix of shape `dims[l] × dims[l+1]` so a batch propagates as `X·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    spec: MlpSpec,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Gradients shaped exactly like an [`MlpModel`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.as_slice().iter().chain(b.iter()).copied())
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// What the backward pass differentiates.
#[derive(Debug, Clone, Copy)]
pub enum LossKind<'a> {
    /// Mean cross-entropy against one-hot targets.
    CrossEntropy { onehot: &'a Matrix },
    /// `T² · mean KL(teacher_soft ‖ softmax(logits / T))`.
    Distill {
        teacher_soft: &'a Matrix,
        temperature: f64,
    },
    /// `alpha · Distill + (1 − alpha) · CrossEntropy`.
    Blend {
        teacher_soft: &'a Matrix,
        temperature: f64,
        onehot: &'a Matrix,
        alpha: f64,
    },
}

/// He-uniform initialization: weights `U(±√(6/fan_in))`, zero biases.
pub fn init_mlp<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> MlpModel {
    let mut weights = Vec::with_capacity(spec.n_layers());
    let mut biases = Vec::with_capacity(spec.n_layers());
    for w in spec.layer_dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        weights.push(Matrix::from_vec(fan_in, fan_out, data).expect("sized by construction"));
        biases.push(vec![0.0; fan_out]);
    }
    MlpModel {
        spec: spec.clone(),
        weights,
        biases,
    }
}

impl MlpModel {
    /// Assembles a model from explicit parameters, checking every shape.
    pub fn from_parts(spec: MlpSpec, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if weights.len() != spec.n_layers() || biases.len() != spec.n_layers() {
            return Err(Error::dim("layer count", spec.n_layers(), weights.len()));
        }
        for (l, dims) in spec.layer_dims.windows(2).enumerate() {
            let w = &weights[l];
            if w.rows() != dims[0] || w.cols() != dims[1] {
                return Err(Error::dim(
                    format!("layer {l} weight shape"),
                    dims[0] * dims[1],
                    w.rows() * w.cols(),
                ));
            }
            if biases[l].len() != dims[1] {
                return Err(Error::dim(format!("layer {l} bias"), dims[1], biases[l].len()));
            }
        }
        Ok(Self {
            spec,
            weights,
            biases,
        })
    }

    /// All-zero parameters.
    pub fn zeros(spec: &MlpSpec) -> Self {
        let weights = spec
            .layer_dims
            .windows(2)
            .map(|w| Matrix::zeros(w[0], w[1]))
            .collect();
        let biases = spec.layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        Self {
            spec: spec.clone(),
            weights,
            biases,
        }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    /// Parameters in canonical order: per layer, weights row-major then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn from_flat(spec: &MlpSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != spec.param_count() {
            return Err(Error::dim("flat parameter count", spec.param_count(), flat.len()));
        }
        let mut m = Self::zeros(spec);
        m.set_flat(flat)?;
        Ok(m)
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::dim("flat parameter count", self.param_count(), flat.len()));
        }
        let mut pos = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&flat[pos..pos + n]);
            pos += n;
            let nb = b.len();
            b.copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
        }
        Ok(())
    }

    /// Raw logits for a `B × F` batch.
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(batch)?.pop().expect("at least one layer"))
    }

    /// Returns the post-activation output of every layer; the last entry holds
    /// the raw logits.
    fn forward_cached(&self, batch: &Matrix) -> Result<Vec<Matrix>> {
        if batch.cols() != self.spec.input_dim() {
            return Err(Error::dim("layer 0 input", self.spec.input_dim(), batch.cols()));
        }
        let last = self.spec.n_layers() - 1;
        let mut outs: Vec<Matrix> = Vec::with_capacity(self.spec.n_layers());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = if l == 0 { batch } else { &outs[l - 1] };
            let mut z = input
                .matmul(w)
                .map_err(|_| Error::dim(format!("layer {l} input"), w.rows(), input.cols()))?;
            for r in 0..z.rows() {
                for (v, bias) in z.row_mut(r).iter_mut().zip(b) {
                    *v += bias;
                    if l != last && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            outs.push(z);
        }
        Ok(outs)
    }

    /// Loss and exact analytic parameter gradients for a batch.
    pub fn backward(&self, batch: &Matrix, loss: LossKind<'_>) -> Result<(f64, Gradients)> {
        let outs = self.forward_cached(batch)?;
        let logits = outs.last().unwrap();
        let (value, mut delta) = output_gradient(logits, loss)?;

        let mut grads = Gradients::zeros_like(self);
        for l in (0..self.spec.n_layers()).rev() {
            let input = if l == 0 { batch } else { &outs[l - 1] };
            grads.weights[l] = input.t_matmul(&delta)?;
            let gb = &mut grads.biases[l];
            for r in 0..delta.rows() {
                for (g, d) in gb.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            if l > 0 {
                let mut prev = delta.matmul_t(&self.weights[l])?;
                // ReLU gate: the stored activation is zero exactly where the unit was off.
                for (p, &a) in prev.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((value, grads))
    }

    /// Plain SGD: `p ← p − lr·g`.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Domain(format!("learning rate must be >= 0, got {lr}")));
        }
        if grads.weights.len() != self.weights.len() {
            return Err(Error::dim("gradient layer count", self.weights.len(), grads.weights.len()));
        }
        for (l, (gw, gb)) in grads.weights.iter().zip(&grads.biases).enumerate() {
            let (w, b) = (&self.weights[l], &self.biases[l]);
            if gw.rows() != w.rows() || gw.cols() != w.cols() || gb.len() != b.len() {
                return Err(Error::dim(
                    format!("layer {l} gradient shape"),
                    w.as_slice().len() + b.len(),
                    gw.as_slice().len() + gb.len(),
                ));
            }
        }
        if let Some(bad) = grads.iter().find(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!("non-finite gradient entry {bad}")));
        }
        for (l, (gw, gb)) in grads.weights.iter().zip(&grads.biases).enumerate() {
            for (p, g) in self.weights[l].as_mut_slice().iter_mut().zip(gw.as_slice()) {
                *p -= lr * g;
            }
            for (p, g) in self.biases[l].iter_mut().zip(gb) {
                *p -= lr * g;
            }
        }
        Ok(())
    }
}

/// Loss value and its gradient with respect to the logits.
fn output_gradient(logits: &Matrix, loss: LossKind<'_>) -> Result<(f64, Matrix)> {
    let n = logits.rows();
    if n == 0 {
        return Err(Error::Domain("backward on an empty batch".into()));
    }
    match loss {
        LossKind::CrossEntropy { onehot } => ce_gradient(logits, onehot),
        LossKind::Distill {
            teacher_soft,
            temperature,
        } => distill_gradient(logits, teacher_soft, temperature),
        LossKind::Blend {
            teacher_soft,
            temperature,
            onehot,
            alpha,
        } => {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::Domain(format!("blend alpha must be in [0,1], got {alpha}")));
            }
            let (ld, mut gd) = distill_gradient(logits, teacher_soft, temperature)?;
            let (lc, gc) = ce_gradient(logits, onehot)?;
            for (d, c) in gd.as_mut_slice().iter_mut().zip(gc.as_slice()) {
                *d = alpha * *d + (1.0 - alpha) * c;
            }
            Ok((alpha * ld + (1.0 - alpha) * lc, gd))
        }
    }
}

fn check_target_shape(logits: &Matrix, target: &Matrix, what: &str) -> Result<()> {
    if target.rows() != logits.rows() {
        return Err(Error::dim(format!("{what} rows"), logits.rows(), target.rows()));
    }
    if target.cols() != logits.cols() {
        return Err(Error::dim(format!("{what} classes"), logits.cols(), target.cols()));
    }
    Ok(())
}

fn ce_gradient(logits: &Matrix, onehot: &Matrix) -> Result<(f64, Matrix)> {
    check_target_shape(logits, onehot, "one-hot target")?;
    let n = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for r in 0..logits.rows() {
        let class = onehot_class(onehot.row(r))
            .ok_or_else(|| Error::Validation(format!("row {r} is not a one-hot vector")))?;
        let z = logits.row(r);
        let lse = log_sum_exp(z);
        total += lse - z[class];
        for (c, (g, &zc)) in grad.row_mut(r).iter_mut().zip(z).enumerate() {
            let p = (zc - lse).exp();
            *g = (p - if c == class { 1.0 } else { 0.0 }) / n;
        }
    }
    Ok((total / n, grad))
}

fn distill_gradient(logits: &Matrix, teacher: &Matrix, temperature: f64) -> Result<(f64, Matrix)> {
    check_temperature(temperature)?;
    check_target_shape(logits, teacher, "teacher distribution")?;
    let n = logits.rows() as f64;
    let t2 = temperature * temperature;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    let mut scaled = vec![0.0; logits.cols()];
    for r in 0..logits.rows() {
        for (s, z) in scaled.iter_mut().zip(logits.row(r)) {
            *s = z / temperature;
        }
        let lse = log_sum_exp(&scaled);
        let p = teacher.row(r);
        let mut kl = 0.0;
        for (c, g) in grad.row_mut(r).iter_mut().enumerate() {
            let log_q = scaled[c] - lse;
            if p[c] > 0.0 {
                kl += p[c] * (p[c].ln() - log_q);
            }
            // d(T² KL)/dz = T (q − p)
            *g = temperature * (log_q.exp() - p[c]) / n;
        }
        total += kl;
    }
    Ok((t2 * total / n, grad))
}
