//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hdus_core::baselines::{FedUnl, LedgerEntry};
use hdus_core::data::{load_mnist_dir, partition_noniid, LabeledDataset, PartitionPlan, PartitionedDataset};
use hdus_core::framework::{build_framework, FrameworkKind, FrameworkSetup};
use hdus_core::numeric::{argmax, init_mlp, softmax_temp, LossKind, Matrix, MlpModel, MlpSpec};
use hdus_core::rng::{stream, Purpose};
use hdus_core::sim::{init_network, HdusConfig, HdusNetwork, Topology};
use hdus_core::ClientId;
use hdus_harness::config::UnlearnConfig;
use hdus_harness::metrics::events_csv;
use hdus_harness::runner::{build_partition, framework_setup};
use hdus_harness::{emit_metrics, run_experiment, ExperimentConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = fn() -> Check;
type Oracle<'a> = Box<dyn Fn(&MlpModel) -> f64 + 'a>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    }};
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

const SEED: u64 = 2024;

fn default_partition(cfg: &ExperimentConfig) -> Result<PartitionedDataset, String> {
    ok(build_partition(cfg, None, SEED))
}

fn hdus_network(
    cfg: &ExperimentConfig,
    p: &PartitionedDataset,
    setup: &FrameworkSetup,
    topology: Topology,
) -> Result<HdusNetwork, String> {
    let (f, c) = (p.feature_dim(), p.class_count());
    let specs = ok(setup.tiers.iter().map(|t| t.spec(f, c)).collect::<Result<Vec<_>, _>>())?;
    let hcfg = HdusConfig {
        local: setup.local,
        distill: setup.distill,
        ensemble: setup.ensemble,
        seed_spec: ok(cfg.seed_tier.0.spec(f, c))?,
        incubate_every_rounds: setup.incubate_every_rounds,
        exchange_every_rounds: setup.exchange_every_rounds,
    };
    ok(init_network(p, &specs, topology, hcfg, SEED))
}

fn exact_unlearning() -> Check {
    let cfg = ExperimentConfig::default();
    let p = default_partition(&cfg)?;
    let setup = ok(framework_setup(&cfg))?;
    let n = cfg.n_clients;
    let x = p.test.features();
    let mut worst_repo = 0.0f64;
    let mut worst_pred = 0.0f64;
    for j in 0..n as u32 {
        let quitter = ClientId(j);
        let mut live = hdus_network(&cfg, &p, &setup, Topology::complete(n))?;
        let mut cut = Topology::complete(n);
        cut.detach(quitter);
        let mut control = hdus_network(&cfg, &p, &setup, cut)?;
        for _ in 0..3 {
            ok(live.run_round())?;
            ok(control.run_round())?;
        }
        ok(live.handle_unlearn_request(quitter))?;
        for c in live.clients() {
            let twin = control.client(c.id).ok_or("control client missing")?;
            let mine: Vec<ClientId> = c.repo.neighbors().collect();
            let theirs: Vec<ClientId> = twin.repo.neighbors().collect();
            ensure!(mine == theirs, "client {}: repository holds {mine:?}, control {theirs:?}", c.id);
            ensure!(!c.repo.contains(quitter), "client {} still holds seed of {quitter}", c.id);
            for (a, b) in c.repo.entries().iter().zip(twin.repo.entries()) {
                worst_repo = worst_repo.max(max_abs_diff(&a.seed.to_flat(), &b.seed.to_flat()));
            }
            let pa = ok(c.predict(&live.config().ensemble, x))?;
            let pb = ok(twin.predict(&control.config().ensemble, x))?;
            worst_pred = worst_pred.max(ok(pa.max_abs_diff(&pb))?);
        }
    }
    ensure!(worst_repo == 0.0, "repository diff {worst_repo:e}");
    ensure!(worst_pred <= 1e-12, "prediction diff {worst_pred:e}");
    Ok(format!("all {n} quitters: repository diff 0, prediction diff {worst_pred:e}"))
}

fn zero_retraining() -> Check {
    let cfg = ExperimentConfig::default();
    let p = default_partition(&cfg)?;
    let setup = ok(framework_setup(&cfg))?;
    let mut parts = Vec::new();
    for kind in [FrameworkKind::Hdus, FrameworkKind::SisaA, FrameworkKind::Dsgd, FrameworkKind::FedUnl] {
        let mut fw = ok(build_framework(kind, &p, &setup, SEED))?;
        for _ in 0..3 {
            ok(fw.train_phase())?;
            ok(fw.exchange_phase())?;
        }
        let before = fw.training_steps();
        ok(fw.unlearn(ClientId(1)))?;
        let delta = fw.training_steps() - before;
        for _ in 0..2 {
            ok(fw.train_phase())?;
            ok(fw.exchange_phase())?;
        }
        let recovery = fw.recovery_steps();
        match kind {
            FrameworkKind::Hdus | FrameworkKind::SisaA => {
                ensure!(delta == 0, "{kind}: {delta} steps during unlearning");
                ensure!(recovery == 0, "{kind}: {recovery} recovery steps");
            }
            _ => ensure!(recovery > 0, "{kind}: no recovery training"),
        }
        parts.push(format!("{kind} delta={delta} recovery={recovery}"));
    }
    Ok(parts.join(", "))
}

fn ref_softmax(z: &[f64], t: f64) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| ((v - m) / t).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn ref_ce(z: &Matrix, y: &Matrix) -> f64 {
    let mut total = 0.0;
    for r in 0..z.rows() {
        let p = ref_softmax(z.row(r), 1.0);
        total -= y.row(r).iter().zip(&p).map(|(a, b)| a * b.ln()).sum::<f64>();
    }
    total / z.rows() as f64
}

fn ref_distill(z: &Matrix, teacher: &Matrix, t: f64) -> f64 {
    let mut total = 0.0;
    for r in 0..z.rows() {
        let q = ref_softmax(z.row(r), t);
        total += teacher
            .row(r)
            .iter()
            .zip(&q)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| p * (p / q).ln())
            .sum::<f64>();
    }
    t * t * total / z.rows() as f64
}

fn gradient_check() -> Check {
    const H: f64 = 1e-5;
    let mut worst = 0.0f64;
    let mut nets = 0;
    for seed in 0..12u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = rng.gen_range(2..=4);
        let dims: Vec<usize> = (0..depth).map(|_| rng.gen_range(2..=10)).collect();
        let spec = ok(MlpSpec::new(dims.clone()))?;
        let model = init_mlp(&spec, &mut rng);
        let (f, c) = (dims[0], *dims.last().unwrap());
        let b = rng.gen_range(1..=6);
        let x = ok(Matrix::from_vec(b, f, (0..b * f).map(|_| rng.gen_range(-2.0..2.0)).collect()))?;
        let mut y = Matrix::zeros(b, c);
        let mut teacher = Matrix::zeros(b, c);
        for r in 0..b {
            y.set(r, rng.gen_range(0..c), 1.0);
            let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(-3.0..3.0)).collect();
            teacher.row_mut(r).copy_from_slice(&ref_softmax(&raw, 1.0));
        }
        let t = 3.0;
        let losses: [(LossKind, Oracle); 2] = [
            (
                LossKind::CrossEntropy { onehot: &y },
                Box::new(|m: &MlpModel| ref_ce(&m.forward(&x).unwrap(), &y)),
            ),
            (
                LossKind::Distill {
                    teacher_soft: &teacher,
                    temperature: t,
                },
                Box::new(|m: &MlpModel| ref_distill(&m.forward(&x).unwrap(), &teacher, t)),
            ),
        ];
        for (loss, oracle) in losses {
            let (_, grads) = ok(model.backward(&x, loss))?;
            let flat = model.to_flat();
            let mut probe = model.clone();
            for (i, a) in grads.iter().enumerate() {
                let mut q = flat.clone();
                q[i] = flat[i] + H;
                ok(probe.set_flat(&q))?;
                let up = oracle(&probe);
                q[i] = flat[i] - H;
                ok(probe.set_flat(&q))?;
                let down = oracle(&probe);
                let numeric = (up - down) / (2.0 * H);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
                worst = worst.max(rel);
            }
        }
        nets += 1;
    }
    ensure!(worst <= 1e-4, "worst relative error {worst:e}");
    Ok(format!("{nets} nets x 2 losses, worst relative error {worst:.1e}"))
}

fn softmax_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_norm = 0.0f64;
    let mut worst_t1 = 0.0f64;
    let mut worst_scale = 0.0f64;
    let cases = 5000;
    for _ in 0..cases {
        let k = rng.gen_range(1..12);
        let z: Vec<f64> = (0..k).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let t = rng.gen_range(0.05..20.0);
        let p = ok(softmax_temp(&z, t))?;
        worst_norm = worst_norm.max((p.iter().sum::<f64>() - 1.0).abs());
        worst_t1 = worst_t1.max(max_abs_diff(&ok(softmax_temp(&z, 1.0))?, &ref_softmax(&z, 1.0)));
        let best = argmax(&z);
        for tt in [0.5, 1.0, 3.0, 10.0] {
            ensure!(argmax(&ok(softmax_temp(&z, tt))?) == best, "argmax moved at T={tt} for {z:?}");
        }
        let c = rng.gen_range(0.1..10.0);
        let scaled: Vec<f64> = z.iter().map(|v| c * v).collect();
        worst_scale = worst_scale.max(max_abs_diff(&ok(softmax_temp(&scaled, c * t))?, &p));
    }
    ensure!(worst_norm <= 1e-12, "normalization error {worst_norm:e}");
    ensure!(worst_t1 <= 1e-12, "T=1 differs from plain softmax by {worst_t1:e}");
    ensure!(worst_scale <= 1e-12, "scale identity error {worst_scale:e}");
    Ok(format!(
        "{cases} cases: norm {worst_norm:.1e}, T=1 {worst_t1:.1e}, scale {worst_scale:.1e}"
    ))
}

fn heterogeneous_trend() -> Check {
    let cfg = ExperimentConfig::default();
    ensure!(cfg.repeats == 5, "default profile has {} repeats", cfg.repeats);
    let report = ok(run_experiment(&cfg))?;
    let acc = |k| report.summary_for(k).map(|s| s.mean_accuracy).ok_or(format!("{k} missing"));
    let hdus = acc(FrameworkKind::Hdus)?;
    let isgd = acc(FrameworkKind::Isgd)?;
    let mut line = format!("hdus {hdus:.4} isgd {isgd:.4}");
    ensure!(hdus - isgd >= 0.01, "HDUS − ISGD = {:.4} < 0.01 ({line})", hdus - isgd);
    for k in [FrameworkKind::Dsgd, FrameworkKind::FedUnl, FrameworkKind::SisaA] {
        let other = acc(k)?;
        line.push_str(&format!(" {k} {other:.4}"));
        ensure!(hdus > other, "HDUS {hdus:.4} does not beat {k} {other:.4}");
    }
    Ok(line)
}

fn demo_config(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.unlearn = Some(UnlearnConfig {
        client: 0,
        round: cfg.rounds / 2,
    });
    cfg.output_path = dir.to_path_buf();
    cfg
}

fn unlearn_timeline_shape() -> Check {
    let dir = ok(tempfile::tempdir())?;
    let cfg = demo_config(dir.path());
    let report = ok(run_experiment(&cfg))?;
    ok(emit_metrics(&report, dir.path()))?;
    let mut reader = ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(dir.path().join("timeline.csv")))?;
    let mut curves: BTreeMap<String, BTreeMap<i64, f64>> = BTreeMap::new();
    for row in reader.records() {
        let row = ok(row)?;
        let t: i64 = ok(row[2].parse())?;
        let acc: f64 = ok(row[3].parse())?;
        curves.entry(row[0].to_string()).or_default().insert(t, acc);
    }
    let at = |fw: &str, t: i64| {
        curves
            .get(fw)
            .and_then(|c| c.get(&t).copied())
            .ok_or(format!("{fw} has no point at t={t}"))
    };
    let last = |fw: &str| {
        curves
            .get(fw)
            .and_then(|c| c.values().last().copied())
            .ok_or(format!("{fw} missing"))
    };
    let mut parts = Vec::new();
    for fw in ["hdus", "sisa_a"] {
        let jump = (at(fw, 0)? - at(fw, -1)?).abs();
        ensure!(jump <= 0.03, "{fw} jumps {jump:.4} across t=0");
        parts.push(format!("{fw} |Δ|={jump:.4}"));
    }
    let chance = 1.0 / cfg.class_count() as f64;
    let d0 = at("dsgd", 0)?;
    ensure!((d0 - chance).abs() <= 0.10, "dsgd at t=0 is {d0:.4}, chance {chance:.2}");
    let (d1, d3, dend) = (at("dsgd", 1)?, at("dsgd", 3)?, last("dsgd")?);
    ensure!(d1 > d0 && d3 > d1 && dend >= d0 + 0.1, "dsgd does not recover: {d0:.3} {d1:.3} {d3:.3} {dend:.3}");
    parts.push(format!("dsgd {d0:.3}->{dend:.3}"));
    let (fm, f0, f1, fend) = (at("fedunl", -1)?, at("fedunl", 0)?, at("fedunl", 1)?, last("fedunl")?);
    ensure!(f0 < fm, "fedunl does not dip: {fm:.4} -> {f0:.4}");
    ensure!(f1 > f0 && fend > f0, "fedunl does not recover: {f0:.4} {f1:.4} {fend:.4}");
    parts.push(format!("fedunl {fm:.3}->{f0:.3}->{fend:.3}"));
    Ok(parts.join(", "))
}

fn seed_label_isolation() -> Check {
    let cfg = ExperimentConfig::default();
    let p = default_partition(&cfg)?;
    let setup = ok(framework_setup(&cfg))?;
    let mut net = hdus_network(&cfg, &p, &setup, Topology::complete(cfg.n_clients))?;
    for _ in 0..2 {
        ok(net.run_round())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for c in net.clients() {
        let mut a = c.clone();
        let mut b = c.clone();
        let mut labels = b.local_data.labels().to_vec();
        labels.shuffle(&mut rng);
        ensure!(labels != b.local_data.labels(), "shuffle left labels unchanged");
        b.local_data = ok(b.local_data.with_labels(labels))?;
        ok(a.incubate(&setup.distill))?;
        ok(b.incubate(&setup.distill))?;
        let (fa, fb) = (a.own_seed.to_flat(), b.own_seed.to_flat());
        ensure!(
            fa.iter().zip(&fb).all(|(x, y)| x.to_bits() == y.to_bits()),
            "client {}: seed depends on local labels",
            c.id
        );
    }
    Ok(format!("{} clients, seeds bitwise equal", net.clients().len()))
}

fn determinism() -> Check {
    let a = ok(tempfile::tempdir())?;
    let b = ok(tempfile::tempdir())?;
    let ra = ok(run_experiment(&demo_config(a.path())))?;
    let rb = ok(run_experiment(&demo_config(b.path())))?;
    ok(emit_metrics(&ra, a.path()))?;
    ok(emit_metrics(&rb, b.path()))?;
    let mut compared = 0;
    for r in &ra.repeats {
        let ea = events_csv(&ra, r.repeat).ok_or("missing repeat")?;
        let eb = events_csv(&rb, r.repeat).ok_or("missing repeat")?;
        ensure!(ea == eb, "event log of repeat {} differs", r.repeat);
        let name = format!("events_r{}.csv", r.repeat);
        let fa = ok(std::fs::read(a.path().join(&name)))?;
        let fb = ok(std::fs::read(b.path().join(&name)))?;
        ensure!(fa == fb, "{name} differs on disk");
        compared += fa.len();
    }
    Ok(format!("{} event logs, {compared} bytes identical", ra.repeats.len()))
}

fn fedunl_replay() -> Check {
    let cfg = ExperimentConfig::default();
    let p = default_partition(&cfg)?;
    let setup = ok(framework_setup(&cfg))?;
    let (f, c) = (p.feature_dim(), p.class_count());
    let small = ok(setup.homogeneous_tier().spec(f, c))?;
    let quitter = ClientId(2);
    let mut fed = ok(FedUnl::new(&p, &vec![small.clone(); p.n_clients()], setup.local, setup.fedunl, SEED))?;
    let mut q = p.clone();
    q.clients.retain(|s| s.client != quitter);
    let mut control = ok(FedUnl::new(&q, &vec![small; q.n_clients()], setup.local, setup.fedunl, SEED))?;
    use hdus_core::framework::Framework;
    let mut worst = 0.0f64;
    for _ in 0..4 {
        for fw in [&mut fed as &mut dyn Framework, &mut control] {
            ok(fw.train_phase())?;
            ok(fw.exchange_phase())?;
        }
        worst = worst.max(max_abs_diff(&fed.replay(), &fed.global().to_flat()));
    }
    ok(fed.unlearn(quitter))?;
    worst = worst.max(max_abs_diff(&fed.replay(), &fed.global().to_flat()));
    let gap = max_abs_diff(&fed.global().to_flat(), &control.global().to_flat());
    for _ in 0..setup.fedunl.remedy_rounds {
        ok(fed.train_phase())?;
        ok(fed.exchange_phase())?;
        worst = worst.max(max_abs_diff(&fed.replay(), &fed.global().to_flat()));
    }
    let remedies = fed.ledger().iter().filter(|e| matches!(e, LedgerEntry::Remedy { .. })).count();
    ensure!(worst <= 1e-10, "replay error {worst:e}");
    ensure!(gap > 0.0, "post-subtraction global equals the never-joined control");
    ensure!(remedies == setup.fedunl.remedy_rounds, "{remedies} remedy entries");
    Ok(format!("replay error {worst:.1e}, gap to control {gap:.3e}"))
}

fn audit(source: &LabeledDataset, p: &PartitionedDataset, n: usize, per_client: usize) -> Result<(), String> {
    let c = source.class_count();
    ensure!(p.clients.len() == n, "{} clients", p.clients.len());
    let mut seen = BTreeSet::new();
    let mut omitted = BTreeSet::new();
    for split in &p.clients {
        ensure!(split.rows.len() == per_client, "client {} has {} rows", split.client, split.rows.len());
        let classes: BTreeSet<usize> = split.rows.iter().map(|&r| source.labels()[r]).collect();
        ensure!(classes.len() == c - 1, "client {} covers {} classes", split.client, classes.len());
        ensure!(!classes.contains(&split.omitted_class), "client {} holds its omitted class", split.client);
        ensure!(omitted.insert(split.omitted_class), "omitted class {} repeats", split.omitted_class);
        for &r in &split.rows {
            ensure!(seen.insert(r), "row {r} assigned twice");
        }
    }
    for &r in p.test_rows.iter().chain(&p.reference_rows) {
        ensure!(seen.insert(r), "row {r} shared with a client shard");
    }
    Ok(())
}

fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("HDUS_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.is_dir().then_some(dir)
}

fn partition_audit() -> Check {
    let mut cfg = ExperimentConfig::default();
    let mut parts = Vec::new();
    for n in [5usize, 6] {
        cfg.n_clients = n;
        let per_client = cfg.partition.samples_per_client.unwrap_or(0);
        let p = default_partition(&cfg)?;
        let source = match &cfg.dataset {
            hdus_harness::config::DatasetConfig::Blobs {
                n_per_class,
                classes,
                features,
                spread,
                clusters_per_class,
            } => ok(hdus_core::data::gen_blobs(
                &hdus_core::data::BlobParams {
                    n_per_class: *n_per_class,
                    classes: *classes,
                    features: *features,
                    spread: *spread,
                    clusters_per_class: *clusters_per_class,
                },
                &mut stream(SEED, Purpose::Dataset),
            ))?,
            _ => return Err("default dataset is not blobs".into()),
        };
        audit(&source, &p, n, per_client)?;
        parts.push(format!("blobs N={n} ok"));
    }
    match mnist_dir() {
        Some(dir) => {
            let data = ok(load_mnist_dir(&dir))?;
            let plan = PartitionPlan {
                n_clients: 6,
                ref_size: 10_000,
                test_fraction: 0.2,
                samples_per_client: Some(8_000),
            };
            let p = ok(partition_noniid(&data, &plan, &mut stream(SEED, Purpose::Partition)))?;
            audit(&data, &p, 6, 8_000)?;
            parts.push("mnist N=6 x 8000 ok".into());
        }
        None => parts.push("mnist not present, skipped".into()),
    }
    Ok(parts.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 10] = [
        ("exact unlearning equivalence", exact_unlearning),
        ("zero-retraining unlearning", zero_retraining),
        ("gradient correctness", gradient_check),
        ("temperature softmax properties", softmax_properties),
        ("heterogeneous accuracy trend", heterogeneous_trend),
        ("unlearning timeline shape", unlearn_timeline_shape),
        ("seed isolation from local labels", seed_label_isolation),
        ("deterministic event logs", determinism),
        ("ledger replay and inexactness", fedunl_replay),
        ("non-IID partition audit", partition_audit),
    ];
    let limits = [120, 0, 30, 0, 900, 0, 0, 0, 0, 0];
    let mut failed = 0;
    for (i, ((name, check), limit)) in criteria.into_iter().zip(limits).enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if limit > 0 && elapsed > Duration::from_secs(limit) => {
                Err(format!("took {:.1}s, limit {limit}s", elapsed.as_secs_f64()))
            }
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name} [{:.1}s] {detail}", i + 1, elapsed.as_secs_f64());
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
