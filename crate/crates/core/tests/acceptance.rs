//! Acceptance checks. Prints one `PASS`/`FAIL` line per check and exits
//! non-zero if any check fails.
//!
//! The MNIST-based checks read the standard files from `$EMBEDLAB_DATA_DIR`
//! (default: the workspace `data/` directory).

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use common::shipped;
use embedlab::data::{
    encode_cifar10, load_cifar10, load_idx, load_standard, synthetic, write_idx, DatasetName, Split, CIFAR_RECORD_LEN,
};
use embedlab::gradcheck::{run_suite, Scope};
use embedlab::losses::{
    center_loss, classify_nearest_batch, cosface_loss, mine_triplets, softmax_loss, ClassCenters, LossKind, LossSpec,
    MiningStrategy,
};
use embedlab::train::{class_centroids, train, train_on, EpochRecord, Trainer, DATA_DIR_ENV};
use embedlab::viz::{embed_dataset, export_csv, render_svg, SvgOptions};
use embedlab::{Dataset64, Error, Rng, Tensor64};

/// MNIST subset size used by the statistical checks.
const SUBSET: usize = 5000;
const COMPACT_SEEDS: [u64; 3] = [0, 1, 2];
const COMPACT_EPOCHS: usize = 10;
const CLASSIFY_EPOCHS: usize = 20;
const CLASSIFY_THRESHOLD: f64 = 0.90;
const REGRESSION_EPOCHS: usize = 10;
const REGRESSION_ACCURACY: f64 = 0.90;
const CENTROID_TOLERANCE: f64 = 0.25;

type Outcome = std::result::Result<String, String>;

fn main() {
    let started = Instant::now();
    let data = mnist_subset();
    let mut softmax_seed0: Option<Vec<EpochRecord>> = None;
    let checks: Vec<(&str, Box<dyn FnOnce(&mut Option<Vec<EpochRecord>>) -> Outcome + '_>)> = vec![
        ("gradient suite", Box::new(|_| gradient_suite())),
        ("reduction identities", Box::new(|_| reduction_identities())),
        ("normalization invariant", Box::new(|_| normalization_invariant())),
        ("margin monotonicity", Box::new(|_| margin_monotonicity())),
        ("classification sanity", Box::new(|s| classification_sanity(data.as_ref(), s))),
        ("compactness", Box::new(|s| compactness(data.as_ref(), s))),
        ("regression geometry", Box::new(|_| regression_geometry(data.as_ref()))),
        ("determinism", Box::new(|_| determinism(data.as_ref()))),
        ("format suite", Box::new(|_| format_suite())),
        ("oracle equivalence", Box::new(|_| oracle_equivalence())),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| check(&mut softmax_seed0)))
            .unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {failures} failed, total {:.0}s", started.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}

fn data_root() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn mnist_subset() -> std::result::Result<(Dataset64, Dataset64), String> {
    let root = data_root();
    let load = |split| {
        load_standard::<f64>(&root, DatasetName::Mnist, split)
            .and_then(|d| d.take(SUBSET.min(d.len())))
            .map_err(|e| format!("MNIST not available under {}: {e}", root.display()))
    };
    Ok((load(Split::Train)?, load(Split::Test)?))
}

type Data<'a> = std::result::Result<&'a (Dataset64, Dataset64), &'a String>;

fn gradient_suite() -> Outcome {
    let t = Instant::now();
    let results = run_suite(Scope::All, 0);
    let secs = t.elapsed().as_secs_f64();
    let failed: Vec<String> = results.iter().filter(|r| !r.passed()).map(|r| r.to_string()).collect();
    let worst = results.iter().map(|r| r.worst).fold(0.0, f64::max);
    if !failed.is_empty() {
        return Err(failed.join("; "));
    }
    if secs >= 60.0 {
        return Err(format!("suite took {secs:.1}s"));
    }
    Ok(format!("{} checks, worst relative error {worst:.2e}", results.len()))
}

fn reduction_identities() -> Outcome {
    let mut rng = Rng::new(100);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let cos = Tensor64::rand_uniform(&[12, 10], -1.0, 1.0, &mut rng).unwrap();
        let labels: Vec<usize> = (0..12).map(|_| rng.below(10)).collect();
        let soft = softmax_loss(&cos, &labels).unwrap().value;
        worst = worst.max((cosface_loss(&cos, &labels, 0.0, 1.0).unwrap().value - soft).abs());
        let z = Tensor64::randn(&[12, 2], 1.0, &mut rng).unwrap();
        let centers = ClassCenters::from_tensor(Tensor64::randn(&[10, 2], 1.0, &mut rng).unwrap(), 0.5).unwrap();
        let with_center = soft + center_loss(&z, &labels, &centers, 0.0).unwrap().value;
        worst = worst.max((with_center - soft).abs());
    }
    let uniform = softmax_loss(&Tensor64::zeros(&[5, 10]).unwrap(), &[0, 1, 2, 3, 4]).unwrap().value;
    worst = worst.max((uniform - 10f64.ln()).abs());
    if worst < 1e-12 {
        Ok(format!("max deviation {worst:.1e}"))
    } else {
        Err(format!("max deviation {worst:.3e}"))
    }
}

fn normalization_invariant() -> Outcome {
    let data: Dataset64 = synthetic(DatasetName::Mnist, 640, 7).unwrap();
    let mut notes = Vec::new();
    for kind in [LossKind::SoftmaxNormalized, LossKind::Cosface] {
        let cfg = shipped(kind);
        let mut trainer = Trainer::<f64>::new(cfg.clone()).unwrap();
        let mut epoch = 0;
        'outer: loop {
            let plan = embedlab::data::BatchPlan::new(cfg.batch_size, cfg.seed, false).unwrap();
            for b in embedlab::data::batches(&data, plan, epoch) {
                if trainer.steps() == 200 {
                    break 'outer;
                }
                trainer.step(&b.images, &b.labels).map_err(|e| e.to_string())?;
            }
            epoch += 1;
        }
        let head = trainer.model().head.as_ref().unwrap();
        let mut dev: f64 = 0.0;
        for j in 0..head.classes() {
            let n = head.class_vector(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            dev = dev.max((n - 1.0).abs());
        }
        if dev > 1e-6 {
            return Err(format!("{kind}: max | |W_j| - 1 | = {dev:.3e}"));
        }
        if head.bias.value.data().iter().any(|&b| b != 0.0) {
            return Err(format!("{kind}: non-zero bias"));
        }
        notes.push(format!("{kind} max dev {dev:.1e}"));
    }
    Ok(format!("200 steps each; {}", notes.join(", ")))
}

fn margin_monotonicity() -> Outcome {
    let mut rng = Rng::new(101);
    for b in 0..100 {
        let cos = Tensor64::rand_uniform(&[16, 10], -1.0, 1.0, &mut rng).unwrap();
        let labels: Vec<usize> = (0..16).map(|_| rng.below(10)).collect();
        let v: Vec<f64> = [0.0, 0.05, 0.2].iter().map(|&m| cosface_loss(&cos, &labels, m, 10.0).unwrap().value).collect();
        if !(v[0] < v[1] && v[1] < v[2]) {
            return Err(format!("batch {b}: {v:?}"));
        }
    }
    Ok("100 batches strictly increasing over m = 0, 0.05, 0.2".into())
}

fn run(kind: LossKind, seed: u64, epochs: usize, data: &(Dataset64, Dataset64)) -> std::result::Result<Vec<EpochRecord>, String> {
    let mut cfg = shipped(kind);
    cfg.seed = seed;
    cfg.epochs = epochs;
    let (report, _) = train_on(&cfg, &data.0, &data.1).map_err(|e| e.to_string())?;
    Ok(report.records)
}

fn classification_sanity(data: Data, seed0: &mut Option<Vec<EpochRecord>>) -> Outcome {
    let data = data.map_err(|e| e.clone())?;
    let records = run(LossKind::Softmax, 0, CLASSIFY_EPOCHS, data)?;
    let best = records.iter().find(|r| r.test_accuracy >= CLASSIFY_THRESHOLD).copied();
    let last = records.last().map_or(0.0, |r| r.test_accuracy);
    *seed0 = Some(records);
    let mnist = match best {
        Some(r) => format!("MNIST softmax reached {:.4} at epoch {} (final {last:.4})", r.test_accuracy, r.epoch),
        None => return Err(format!("MNIST softmax peaked below {CLASSIFY_THRESHOLD} (final {last:.4})")),
    };

    let train_set: Dataset64 = synthetic(DatasetName::Cifar10, 300, 21).unwrap();
    let test_set: Dataset64 = synthetic(DatasetName::Cifar10, 200, 22).unwrap();
    let mut cfg = shipped(LossKind::Softmax);
    cfg.set_dataset(DatasetName::Cifar10);
    cfg.epochs = 3;
    let (report, _) = train_on(&cfg, &train_set, &test_set).map_err(|e| e.to_string())?;
    let r = report.last().unwrap();
    if !(r.train_loss.is_finite() && r.test_accuracy > 0.1) {
        return Err(format!("{mnist}; CIFAR-10 fixture smoke run: loss {} accuracy {}", r.train_loss, r.test_accuracy));
    }
    Ok(format!("{mnist}; CIFAR-10 fixture smoke run: loss {:.4}, accuracy {:.3}", r.train_loss, r.test_accuracy))
}

fn compactness(data: Data, seed0: &mut Option<Vec<EpochRecord>>) -> Outcome {
    let data = data.map_err(|e| e.clone())?;
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in COMPACT_SEEDS {
        let soft = match (seed, seed0.as_ref()) {
            (0, Some(r)) if r.len() >= COMPACT_EPOCHS => r[COMPACT_EPOCHS - 1],
            _ => run(LossKind::Softmax, seed, COMPACT_EPOCHS, data)?[COMPACT_EPOCHS - 1],
        };
        let center = run(LossKind::Center, seed, COMPACT_EPOCHS, data)?[COMPACT_EPOCHS - 1];
        if center.intra_class_variance < soft.intra_class_variance {
            wins += 1;
        }
        rows.push(format!(
            "seed {seed}: center {:.3} vs softmax {:.3}",
            center.intra_class_variance, soft.intra_class_variance
        ));
    }
    let detail = format!("{wins}/{} seeds lower; {}", COMPACT_SEEDS.len(), rows.join(", "));
    if wins * 2 > COMPACT_SEEDS.len() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn regression_geometry(data: Data) -> Outcome {
    let (train_set, test_set) = data.map_err(|e| e.clone())?;
    let mut cfg = shipped(LossKind::Regression);
    cfg.epochs = REGRESSION_EPOCHS;
    let LossSpec::Regression { scale: radius, .. } = cfg.loss else {
        return Err("shipped regression config is not a regression loss".into());
    };
    let (report, model) = train_on(&cfg, train_set, test_set).map_err(|e| e.to_string())?;
    let acc = report.last().unwrap().test_accuracy;
    let z = model.embed(&test_set.images).map_err(|e| e.to_string())?;
    let (centroids, _) = class_centroids(&z, &test_set.labels, 10).unwrap();
    let targets = &model.layout.as_ref().unwrap().targets;
    let mut worst: f64 = 0.0;
    for j in 0..10 {
        let d = centroids.row(j).iter().zip(targets.row(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(d);
    }
    let detail = format!(
        "accuracy {acc:.4}, worst centroid offset {worst:.3} = {:.1}% of radius {radius}",
        100.0 * worst / radius
    );
    if acc >= REGRESSION_ACCURACY && worst <= CENTROID_TOLERANCE * radius {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism(data: Data) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (root, source) = match data {
        Ok(_) => (data_root(), "MNIST"),
        Err(_) => {
            let tr: Dataset64 = synthetic(DatasetName::Mnist, 256, 1).unwrap();
            let te: Dataset64 = synthetic(DatasetName::Mnist, 128, 2).unwrap();
            embedlab::data::write_standard(dir.path(), &tr, &te).unwrap();
            (dir.path().to_path_buf(), "synthetic fixture")
        }
    };
    let kinds = [
        LossKind::Softmax,
        LossKind::SoftmaxNormalized,
        LossKind::Cosface,
        LossKind::Center,
        LossKind::Contrastive,
        LossKind::Triplet,
        LossKind::Regression,
    ];
    for kind in kinds {
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let mut cfg = shipped(kind);
            cfg.epochs = 1;
            cfg.data.root = root.clone();
            cfg.data.train_limit = Some(256);
            cfg.data.test_limit = Some(128);
            cfg.output_dir = dir.path().join(format!("{kind}-{rep}"));
            let (_, model) = train::<f64>(&cfg).map_err(|e| e.to_string())?;
            let test = load_standard::<f64>(&root, DatasetName::Mnist, Split::Test).unwrap().take(128).unwrap();
            let es = embed_dataset(&model, &test).unwrap();
            let csv = cfg.output_dir.join("e.csv");
            export_csv(&es, &csv).unwrap();
            let svg = render_svg(&es, &SvgOptions::default()).unwrap();
            let read = |f: &str| std::fs::read(cfg.output_dir.join(f)).unwrap();
            bytes.push((read("report.txt"), read("model.embl"), read("e.csv"), svg.into_bytes()));
        }
        if bytes[0] != bytes[1] {
            return Err(format!("{kind}: repeated run differs"));
        }
    }
    Ok(format!("7 shipped configs, 1 epoch on 256 {source} samples, report/checkpoint/CSV/SVG identical"))
}

fn format_suite() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |f: &str| dir.path().join(f);
    let mnist: Dataset64 = synthetic(DatasetName::Mnist, 17, 3).unwrap();
    write_idx(&mnist, &p("i"), &p("l")).unwrap();
    if load_idx::<f64>(&p("i"), &p("l"), DatasetName::Mnist).map_err(|e| e.to_string())? != mnist {
        return Err("IDX round trip differs".into());
    }
    let cifar: Dataset64 = synthetic(DatasetName::Cifar10, 9, 4).unwrap();
    std::fs::write(p("c.bin"), encode_cifar10(&cifar).unwrap()).unwrap();
    if load_cifar10::<f64>(&[p("c.bin")]).map_err(|e| e.to_string())? != cifar {
        return Err("CIFAR-10 round trip differs".into());
    }

    let img = std::fs::read(p("i")).unwrap();
    let lab = std::fs::read(p("l")).unwrap();
    let mut bad = img.clone();
    bad[2] = 0x09;
    std::fs::write(p("bad_magic"), &bad).unwrap();
    std::fs::write(p("short"), &img[..img.len() - 1]).unwrap();
    std::fs::write(p("few_labels"), {
        let mut l = lab.clone();
        l[7] -= 1;
        l.pop();
        l
    })
    .unwrap();
    std::fs::write(p("cifar_odd"), vec![0u8; CIFAR_RECORD_LEN * 2 - 1]).unwrap();
    let cases: [(&str, std::result::Result<Dataset64, Error>, fn(&Error) -> bool); 4] = [
        ("bad magic", load_idx(&p("bad_magic"), &p("l"), DatasetName::Mnist), |e| matches!(e, Error::Format { .. })),
        ("truncated", load_idx(&p("short"), &p("l"), DatasetName::Mnist), |e| matches!(e, Error::Truncated { .. })),
        ("count mismatch", load_idx(&p("i"), &p("few_labels"), DatasetName::Mnist), |e| {
            matches!(e, Error::Consistency(_))
        }),
        ("CIFAR size", load_cifar10(&[p("cifar_odd")]), |e| matches!(e, Error::Format { .. })),
    ];
    for (name, r, ok) in cases {
        match r {
            Err(e) if ok(&e) => {}
            Err(e) => return Err(format!("{name}: unexpected error {e}")),
            Ok(_) => return Err(format!("{name}: loaded without error")),
        }
    }
    Ok("IDX and CIFAR-10 round trips exact; 4 malformed fixtures rejected with the expected errors".into())
}

fn oracle_equivalence() -> Outcome {
    let mut rng = Rng::new(102);
    let refs = Tensor64::randn(&[10, 2], 2.0, &mut rng).unwrap();
    let q = Tensor64::randn(&[1000, 2], 3.0, &mut rng).unwrap();
    let got = classify_nearest_batch(&q, &refs).unwrap();
    for i in 0..1000 {
        let mut best = (f64::INFINITY, 0);
        for j in 0..10 {
            let d: f64 = q.row(i).iter().zip(refs.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best.0 {
                best = (d, j);
            }
        }
        if got[i] != best.1 {
            return Err(format!("query {i}: got {} expected {}", got[i], best.1));
        }
    }
    for trial in 0..50 {
        let n = 3 + rng.below(7);
        let labels: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
        let z = Tensor64::randn(&[n, 2], 1.0, &mut rng).unwrap();
        let mined = mine_triplets(&z, &labels, MiningStrategy::Random { count: Some(20) }, &mut rng).unwrap();
        for t in mined {
            let valid = t.anchor != t.positive
                && labels[t.anchor] == labels[t.positive]
                && labels[t.negative] != labels[t.anchor];
            if !valid {
                return Err(format!("trial {trial}: invalid triplet {t:?} for labels {labels:?}"));
            }
        }
    }
    Ok("1000 nearest-target queries match the scan; 50 random mining batches valid".into())
}
