//! Analytic gradients against central finite differences of independently
//! computed losses.

use hdus_core::numeric::{init_mlp, LossKind, Matrix, MlpModel, MlpSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn softmax(z: &[f64], t: f64) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| ((v - m) / t).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn ce(logits: &Matrix, y: &Matrix) -> f64 {
    let mut total = 0.0;
    for r in 0..logits.rows() {
        let p = softmax(logits.row(r), 1.0);
        total -= y.row(r).iter().zip(&p).map(|(a, b)| a * b.ln()).sum::<f64>();
    }
    total / logits.rows() as f64
}

fn distill(logits: &Matrix, teacher: &Matrix, t: f64) -> f64 {
    let mut total = 0.0;
    for r in 0..logits.rows() {
        let q = softmax(logits.row(r), t);
        total += teacher
            .row(r)
            .iter()
            .zip(&q)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| p * (p / q).ln())
            .sum::<f64>();
    }
    t * t * total / logits.rows() as f64
}

enum Case {
    Ce,
    Distill(f64),
    Blend(f64, f64),
}

fn oracle_loss(model: &MlpModel, x: &Matrix, y: &Matrix, teacher: &Matrix, case: &Case) -> f64 {
    let z = model.forward(x).unwrap();
    match *case {
        Case::Ce => ce(&z, y),
        Case::Distill(t) => distill(&z, teacher, t),
        Case::Blend(t, a) => a * distill(&z, teacher, t) + (1.0 - a) * ce(&z, y),
    }
}

fn random_case(seed: u64) -> (MlpModel, Matrix, Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(2..=4);
    let dims: Vec<usize> = (0..depth).map(|_| rng.gen_range(2..=10)).collect();
    let spec = MlpSpec::new(dims.clone()).unwrap();
    let model = init_mlp(&spec, &mut rng);
    let (f, c) = (dims[0], *dims.last().unwrap());
    let b = rng.gen_range(1..=6);
    let x = Matrix::from_vec(b, f, (0..b * f).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
    let mut y = Matrix::zeros(b, c);
    for r in 0..b {
        y.set(r, rng.gen_range(0..c), 1.0);
    }
    let mut teacher = Matrix::zeros(b, c);
    for r in 0..b {
        let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(-3.0..3.0)).collect();
        teacher.row_mut(r).copy_from_slice(&softmax(&raw, 1.0));
    }
    (model, x, y, teacher)
}

fn check(case: Case, label: &str) {
    let mut worst = 0.0f64;
    for seed in 0..12 {
        let (model, x, y, teacher) = random_case(seed);
        let loss = match case {
            Case::Ce => LossKind::CrossEntropy { onehot: &y },
            Case::Distill(t) => LossKind::Distill {
                teacher_soft: &teacher,
                temperature: t,
            },
            Case::Blend(t, a) => LossKind::Blend {
                teacher_soft: &teacher,
                temperature: t,
                onehot: &y,
                alpha: a,
            },
        };
        let (value, grads) = model.backward(&x, loss).unwrap();
        let base = oracle_loss(&model, &x, &y, &teacher, &case);
        assert!((value - base).abs() <= 1e-10 * base.abs().max(1.0), "{label}: loss value");

        let analytic: Vec<f64> = grads.iter().collect();
        let flat = model.to_flat();
        let mut probe = model.clone();
        for (i, &a) in analytic.iter().enumerate() {
            let mut p = flat.clone();
            p[i] = flat[i] + H;
            probe.set_flat(&p).unwrap();
            let up = oracle_loss(&probe, &x, &y, &teacher, &case);
            p[i] = flat[i] - H;
            probe.set_flat(&p).unwrap();
            let down = oracle_loss(&probe, &x, &y, &teacher, &case);
            let numeric = (up - down) / (2.0 * H);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
            assert!(rel <= TOL, "{label} seed {seed} param {i}: analytic {a} numeric {numeric}");
        }
    }
    eprintln!("{label}: worst relative error {worst:.2e}");
}

#[test]
fn cross_entropy_gradients() {
    check(Case::Ce, "cross-entropy");
}

#[test]
fn distillation_gradients() {
    check(Case::Distill(3.0), "distill T=3");
    check(Case::Distill(0.7), "distill T=0.7");
}

#[test]
fn blended_gradients() {
    check(Case::Blend(2.0, 0.5), "blend");
}
