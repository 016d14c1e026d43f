//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use painpipe::cli::{Profile, RunConfig};
use painpipe::dataset::{generate_synthetic, ingest, make_fold_plan, ClassWeightTable, Layout};
use painpipe::evaluation::{
    bar_label, compute_metrics, load_reports, render_comparison_svg, run_cross_validation, MetricsReport,
};
use painpipe::facs::{compute_pspi, ActionUnitVector};
use painpipe::models::{ArchBuilder, Matrix, ModelName, ModelSpec, Network, Tensor};
use painpipe::preprocess::{FrameCache, Preprocessor};
use painpipe::training::{
    gradient_check, run_training_loop, weighted_cross_entropy, EpochRecord, EpochRunner, GRADCHECK_MAX_PARAMS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// 1. Parameter and FLOP counts against published reference values.
const PARAM_TOLERANCE: f64 = 0.05;
const FLOP_TOLERANCE: f64 = 0.10;
const REFERENCE: [(ModelName, f64, f64); 3] = [
    (ModelName::Resnet18, 11.4e6, 1.8e9),
    (ModelName::Resnet34, 21.5e6, 3.6e9),
    (ModelName::Vgg16, 134.7e6, 1.55e10),
];

fn architecture_fidelity() -> Outcome {
    let mut notes = Vec::new();
    for (name, params, flops) in REFERENCE {
        let arch = ModelSpec::new(name, 1000, 224).architecture().map_err(|e| e.to_string())?;
        let p = arch.count_parameters() as f64;
        let f = arch.count_flops(224).map_err(|e| e.to_string())? as f64;
        let dp = p / params - 1.0;
        let df = f / flops - 1.0;
        ensure!(dp.abs() <= PARAM_TOLERANCE, "{name}: {p} parameters is {:+.2}% off {params}", dp * 100.0);
        ensure!(df.abs() <= FLOP_TOLERANCE, "{name}: {f} FLOPs is {:+.2}% off {flops}", df * 100.0);
        notes.push(format!("{name} {:.2}M ({:+.1}%) {:.2}G ({:+.1}%)", p / 1e6, dp * 100.0, f / 1e9, df * 100.0));
    }
    Ok(notes.join(", "))
}

// 2. PSPI over every valid AU vector.
fn pspi_oracle() -> Outcome {
    let mut seen = BTreeSet::new();
    let mut n = 0;
    for au4 in 0..=5u8 {
        for au6 in 0..=5u8 {
            for au7 in 0..=5u8 {
                for au9 in 0..=5u8 {
                    for au10 in 0..=5u8 {
                        for au43 in 0..=1u8 {
                            let v = ActionUnitVector::new(au4, au6, au7, au9, au10, au43).map_err(|e| e.to_string())?;
                            let got = compute_pspi(&v).map_err(|e| e.to_string())?.value();
                            let orbital = if au6 >= au7 { au6 } else { au7 };
                            let levator = if au9 >= au10 { au9 } else { au10 };
                            let want = au4 + orbital + levator + au43;
                            ensure!(got == want, "{v:?}: got {got}, expected {want}");
                            seen.insert(got);
                            n += 1;
                        }
                    }
                }
            }
        }
    }
    ensure!(n == 15_552, "enumerated {n} vectors");
    ensure!(seen == (0..=16).collect(), "output range {seen:?}");
    Ok(format!("{n} vectors, range 0..=16"))
}

// 3. Inverse-frequency weights.
const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

fn class_weight_identities() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let classes = r.random_range(2..=17);
        let mut counts: Vec<usize> = (0..classes)
            .map(|_| if r.random_bool(0.2) { 0 } else { r.random_range(1..5000) })
            .collect();
        if counts.iter().all(|&c| c == 0) {
            counts[0] = 1;
        }
        let t = ClassWeightTable::from_counts(&counts).map_err(|e| e.to_string())?;
        let total: usize = counts.iter().sum();
        let sum: f64 = counts.iter().zip(&t.weights).map(|(&n, w)| n as f64 * w).sum();
        let rel = (sum - total as f64).abs() / total as f64;
        worst = worst.max(rel);
        ensure!(rel <= WEIGHT_SUM_TOLERANCE, "histogram {i} {counts:?}: sum {sum} vs N {total}");
    }
    for classes in 2..=17 {
        for per in [1usize, 7, 100, 12_345] {
            let t = ClassWeightTable::from_counts(&vec![per; classes]).map_err(|e| e.to_string())?;
            ensure!(t.weights.iter().all(|&w| w == 1.0), "uniform {classes}x{per}: {:?}", t.weights);
        }
    }
    Ok(format!("1000 histograms, worst relative error {worst:.1e}; uniform weights exactly 1.0"))
}

// 4. Fold invariants for 25 subjects, k = 5, 15/5/5.
fn fold_protocol() -> Outcome {
    let subjects: BTreeSet<String> = (1..=25).map(|i| format!("S{i:02}")).collect();
    for seed in 0..200u64 {
        let plan = make_fold_plan(&subjects, 5, 15, 5, 5, seed).map_err(|e| e.to_string())?;
        ensure!(plan.folds.len() == 5, "seed {seed}: {} folds", plan.folds.len());
        let mut tested = Vec::new();
        for (i, f) in plan.folds.iter().enumerate() {
            ensure!(
                (f.train.len(), f.val.len(), f.test.len()) == (15, 5, 5),
                "seed {seed} fold {i}: sizes {}/{}/{}",
                f.train.len(),
                f.val.len(),
                f.test.len()
            );
            ensure!(f.train.is_disjoint(&f.val), "seed {seed} fold {i}: train and val overlap");
            ensure!(f.train.is_disjoint(&f.test), "seed {seed} fold {i}: train and test overlap");
            ensure!(f.val.is_disjoint(&f.test), "seed {seed} fold {i}: val and test overlap");
            let all: BTreeSet<String> = f.train.iter().chain(&f.val).chain(&f.test).cloned().collect();
            ensure!(all == subjects, "seed {seed} fold {i}: does not cover every subject");
            tested.extend(f.test.iter().cloned());
        }
        tested.sort();
        let once: Vec<String> = subjects.iter().cloned().collect();
        ensure!(tested == once, "seed {seed}: subjects are not each tested exactly once");
    }
    Ok("200 seeds, all invariants hold".into())
}

// 5. Loss equivalence and gradient check.
const LOSS_TOLERANCE: f64 = 1e-6;
const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn plain_cross_entropy(logits: &Matrix, targets: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row = &logits.data[i * logits.cols..(i + 1) * logits.cols];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        total += lse - row[t];
    }
    total / targets.len() as f64
}

fn random_tensor(r: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn loss_correctness() -> Outcome {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let rows = r.random_range(1..=16);
        let cols = r.random_range(2..=17);
        let scale = r.random_range(0.1..20.0);
        let data = (0..rows * cols).map(|_| r.random_range(-scale..scale)).collect();
        let logits = Matrix::new(rows, cols, data).unwrap();
        let targets: Vec<usize> = (0..rows).map(|_| r.random_range(0..cols)).collect();
        let got = weighted_cross_entropy(&logits, &targets, &ClassWeightTable::uniform(cols)).map_err(|e| e.to_string())?;
        let want = plain_cross_entropy(&logits, &targets);
        let d = (got - want).abs();
        worst = worst.max(d);
        ensure!(d <= LOSS_TOLERANCE, "draw {i}: weighted {got} vs plain {want}");
    }

    let mut b = ArchBuilder::new("gradcheck_net", [2, 6, 6]);
    b.conv(3, 3, 1, 1, false)
        .batch_norm()
        .relu()
        .residual(
            |br| {
                br.conv(4, 3, 2, 1, false).batch_norm().relu().conv(4, 3, 1, 1, false).batch_norm();
            },
            |sc| {
                sc.conv(4, 1, 2, 0, false).batch_norm();
            },
        )
        .max_pool(2, 1, 0)
        .global_avg_pool()
        .flatten()
        .linear(3);
    let net = Network::from_architecture(b.finish().map_err(|e| e.to_string())?, 17);
    let params = net.count_parameters();
    ensure!(params <= GRADCHECK_MAX_PARAMS, "check network has {params} parameters");
    let x = random_tensor(&mut r, [6, 2, 6, 6]);
    let targets = [0, 1, 2, 2, 1, 0];
    let weights = ClassWeightTable::from_counts(&[5, 2, 9]).map_err(|e| e.to_string())?;
    let conv = gradient_check(&net, &x, &targets, &weights, 120, 1).map_err(|e| e.to_string())?;
    ensure!(
        conv.max_relative_error < GRADCHECK_TOLERANCE,
        "conv/bn/residual net: max relative error {:.3e}",
        conv.max_relative_error
    );

    let mut b = ArchBuilder::new("mlp", [4, 1, 1]);
    b.flatten().linear(8).relu().linear(3);
    let mlp = Network::from_architecture(b.finish().map_err(|e| e.to_string())?, 2);
    let x = random_tensor(&mut r, [5, 4, 1, 1]);
    let dense = gradient_check(&mlp, &x, &[0, 2, 1, 1, 0], &weights, 67, 2).map_err(|e| e.to_string())?;
    ensure!(
        dense.max_relative_error < GRADCHECK_TOLERANCE,
        "mlp: max relative error {:.3e}",
        dense.max_relative_error
    );
    Ok(format!(
        "loss max diff {worst:.1e}; gradcheck {:.1e} ({params} params, {} sampled), mlp {:.1e}",
        conv.max_relative_error, conv.checked, dense.max_relative_error
    ))
}

// 6. Early stopping against a direct simulation.
struct Scripted {
    maes: Vec<f64>,
    marked: Vec<usize>,
}

impl EpochRunner for Scripted {
    fn run_epoch(&mut self, epoch: usize) -> painpipe::Result<EpochRecord> {
        Ok(EpochRecord {
            epoch,
            train_loss: 1.0,
            val_mae: self.maes[epoch - 1],
            val_mse: 0.0,
            val_accuracy: 0.0,
        })
    }

    fn mark_best(&mut self, epoch: usize) {
        self.marked.push(epoch);
    }
}

/// Stop once `patience` epochs in a row fail to beat the best MAE.
fn simulate(maes: &[f64], patience: usize) -> (usize, usize) {
    let mut best_epoch = 1;
    let mut best = maes[0];
    for (i, &m) in maes.iter().enumerate().skip(1) {
        let epoch = i + 1;
        if m < best {
            best = m;
            best_epoch = epoch;
        } else if epoch - best_epoch >= patience {
            return (best_epoch, epoch);
        }
    }
    (best_epoch, maes.len())
}

fn early_stopping() -> Outcome {
    let mut r = rng(6);
    let mut stopped_early = 0;
    for case in 0..100 {
        let max_epochs = r.random_range(1..=100);
        let patience = if case % 4 == 0 { 20 } else { r.random_range(1..=25) };
        let levels = r.random_range(2..=8);
        let mut level = levels as f64;
        let maes: Vec<f64> = (0..max_epochs)
            .map(|_| {
                if r.random_bool(0.3) {
                    level = (level - 1.0).max(0.0);
                }
                (level + r.random_range(0..levels) as f64) / levels as f64
            })
            .collect();
        let mut runner = Scripted {
            maes: maes.clone(),
            marked: Vec::new(),
        };
        let out = run_training_loop(&mut runner, max_epochs, patience, &mut |_| {}).map_err(|e| e.to_string())?;
        let (best, stop) = simulate(&maes, patience);
        ensure!(
            (out.best_epoch, out.stopped_epoch) == (best, stop),
            "case {case} (patience {patience}): loop best/stop {}/{} vs simulation {best}/{stop}; maes {maes:?}",
            out.best_epoch,
            out.stopped_epoch
        );
        ensure!(out.history.len() == stop, "case {case}: {} epochs logged", out.history.len());
        ensure!(runner.marked.last() == Some(&best), "case {case}: last marked {:?}", runner.marked.last());
        if stop < max_epochs {
            stopped_early += 1;
        }
    }
    Ok(format!("100/100 sequences match ({stopped_early} stopped early)"))
}

// 7. Desk-scale end-to-end run.
const DESK_BUDGET: Duration = Duration::from_secs(15 * 60);
const DESK_MIN_ACCURACY: f64 = 80.0;
const MAJORITY_MAX_ACCURACY: f64 = 70.0;

fn desk_run() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = RunConfig::preset(Profile::Desk);
    cfg.validate().map_err(|e| e.to_string())?;
    let syn = &cfg.dataset.synthetic;
    ensure!(
        (syn.n_subjects, syn.frames_per_subject, syn.image_size, syn.n_classes()) == (10, 100, 48, 3),
        "desk profile dataset is {syn:?}"
    );
    ensure!(cfg.model.name == ModelName::ReducedTestNet, "desk profile model is {}", cfg.model.name);
    generate_synthetic(syn, dir.path()).map_err(|e| e.to_string())?;
    let (data, _) = ingest(dir.path(), Layout::Synthetic, cfg.dataset.n_classes).map_err(|e| e.to_string())?;
    let (n_train, n_val, n_test) = cfg.evaluation.fold_sizes(data.subjects().len());
    let plan = make_fold_plan(data.subjects(), cfg.evaluation.k, n_train, n_val, n_test, cfg.seed)
        .map_err(|e| e.to_string())?;
    let pre = Preprocessor::new(cfg.preprocess.clone()).map_err(|e| e.to_string())?;
    let frames = FrameCache::build(&pre, data.records()).map_err(|e| e.to_string())?;
    let report = run_cross_validation(&data, &frames, &plan, &cfg.model, &cfg.training).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let mut majority = 0.0;
    for f in &plan.folds {
        let mut counts = [0usize; 3];
        for r in data.records().iter().filter(|r| f.train.contains(&r.subject_id)) {
            counts[r.class()] += 1;
        }
        let guess = (0..3).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap();
        let test: Vec<usize> = data
            .records()
            .iter()
            .filter(|r| f.test.contains(&r.subject_id))
            .map(|r| r.class())
            .collect();
        majority += compute_metrics(&vec![guess; test.len()], &test, None).unwrap().accuracy;
    }
    majority /= plan.folds.len() as f64;
    let acc = report.aggregate.accuracy;
    let threads = rayon::current_num_threads();
    let detail = format!(
        "accuracy {acc:.2}% (majority baseline {majority:.2}%), mae {:.4}, {:.0} s on {threads} thread(s)",
        report.aggregate.mae,
        elapsed.as_secs_f64()
    );
    ensure!(acc >= DESK_MIN_ACCURACY, "{detail}: below {DESK_MIN_ACCURACY}%");
    ensure!(majority <= MAJORITY_MAX_ACCURACY, "{detail}: majority baseline above {MAJORITY_MAX_ACCURACY}%");
    ensure!(elapsed < DESK_BUDGET, "{detail}: exceeds {} s", DESK_BUDGET.as_secs());
    Ok(detail)
}

// 8. Metrics against exact integer arithmetic.
const METRIC_TOLERANCE: f64 = 1e-12;

fn metrics_oracle() -> Outcome {
    let mut r = rng(8);
    for i in 0..1000 {
        let n = r.random_range(1..=300);
        let classes = r.random_range(2..=17);
        let p: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
        let t: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
        let abs: i64 = p.iter().zip(&t).map(|(&a, &b)| (a as i64 - b as i64).abs()).sum();
        let sq: i64 = p.iter().zip(&t).map(|(&a, &b)| (a as i64 - b as i64).pow(2)).sum();
        let hits = p.iter().zip(&t).filter(|(a, b)| a == b).count();
        let m = compute_metrics(&p, &t, None).map_err(|e| e.to_string())?;
        let want = [abs as f64 / n as f64, sq as f64 / n as f64, 100.0 * hits as f64 / n as f64];
        for (got, want, what) in [(m.mae, want[0], "mae"), (m.mse, want[1], "mse"), (m.accuracy, want[2], "accuracy")] {
            ensure!((got - want).abs() <= METRIC_TOLERANCE, "pair {i}: {what} {got} vs {want}");
        }
    }
    let m = compute_metrics(&[0, 0, 1], &[0, 1, 1], None).map_err(|e| e.to_string())?;
    let shown = (format!("{:.4}", m.mae), format!("{:.4}", m.mse), format!("{:.2}", m.accuracy));
    ensure!(
        shown == ("0.3333".into(), "0.3333".into(), "66.67".into()),
        "worked example gives {shown:?}"
    );
    Ok("1000 pairs exact; worked example (0.3333, 0.3333, 66.67)".into())
}

// 9. Two evaluate runs with the same seed.
fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(
        &cfg_path,
        "profile = \"desk\"\n\n[dataset.synthetic]\nn_subjects = 5\nframes_per_subject = 40\n\n\
         [training]\nmax_epochs = 3\nearly_stop_patience = 3\n",
    )
    .map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_painpipe");
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin)
            .arg("--config")
            .arg(&cfg_path)
            .args(["--seed", "11"])
            .args(args)
            .env_remove("PAINPIPE_SEED")
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
        Ok(())
    };
    run(&["synth"])?;
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&["evaluate", "--out-dir", a.to_str().unwrap()])?;
    run(&["evaluate", "--out-dir", b.to_str().unwrap()])?;
    let read = |d: &Path| std::fs::read(d.join("report.json")).map_err(|e| e.to_string());
    let (ja, jb) = (read(&a)?, read(&b)?);
    let ra: Vec<MetricsReport> = load_reports(&a.join("report.json")).map_err(|e| e.to_string())?;
    let rb: Vec<MetricsReport> = load_reports(&b.join("report.json")).map_err(|e| e.to_string())?;
    ensure!(ra == rb, "reports differ");
    ensure!(ja == jb, "report files differ byte-wise");
    Ok(format!(
        "identical reports (accuracy {:.2}%, {} folds)",
        ra[0].aggregate.accuracy,
        ra[0].per_fold.len()
    ))
}

// 10. Published comparison chart from the fixture.
const PUBLISHED: [(&str, f64, f64, f64); 3] = [
    ("VGG-Face", 0.3589, 1.7273, 82.14),
    ("Resnet18", 0.4073, 2.5002, 87.89),
    ("Resnet34", 0.5521, 1.7727, 78.04),
];
const LABEL_TOLERANCE: f64 = 5e-5;

fn published_chart() -> Outcome {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/published_results.csv");
    let reports = load_reports(&fixture).map_err(|e| e.to_string())?;
    let names: Vec<&str> = reports.iter().map(|r| r.model_name.as_str()).collect();
    ensure!(names == ["VGG-Face", "Resnet18", "Resnet34"], "fixture models {names:?}");
    let svg = render_comparison_svg(&reports).map_err(|e| e.to_string())?;

    let groups: Vec<String> = Regex::new(r#"class="metric-group" data-metric="(\w+)""#)
        .unwrap()
        .captures_iter(&svg)
        .map(|c| c[1].to_string())
        .collect();
    ensure!(groups == ["mae", "mse", "accuracy"], "metric groups {groups:?}");

    let bar = Regex::new(r#"<rect class="bar" data-metric="(\w+)" data-model="([^"]+)" x="([\d.]+)" y="[\d.]+" width="[\d.]+" height="([\d.]+)""#).unwrap();
    let label = Regex::new(r#"<text class="bar-label" data-metric="(\w+)" data-model="([^"]+)"[^>]*>([^<]+)</text>"#).unwrap();
    let bars: Vec<(String, String, f64, f64)> = bar
        .captures_iter(&svg)
        .map(|c| (c[1].to_string(), c[2].to_string(), c[3].parse().unwrap(), c[4].parse().unwrap()))
        .collect();
    let labels: Vec<(String, String, String)> = label
        .captures_iter(&svg)
        .map(|c| (c[1].to_string(), c[2].to_string(), c[3].to_string()))
        .collect();
    ensure!(bars.len() == 9 && labels.len() == 9, "{} bars, {} labels", bars.len(), labels.len());

    for (g, metric) in groups.iter().enumerate() {
        let in_group: Vec<_> = bars.iter().filter(|b| &b.0 == metric).collect();
        let order: Vec<&str> = in_group.iter().map(|b| b.1.as_str()).collect();
        ensure!(order == names, "{metric}: bar order {order:?}");
        ensure!(in_group.windows(2).all(|w| w[0].2 < w[1].2), "{metric}: bars not left to right");
        let value = |m: usize| [PUBLISHED[m].1, PUBLISHED[m].2, PUBLISHED[m].3][g];
        for m in 0..3 {
            let ratio = in_group[m].3 / in_group[0].3;
            ensure!(
                (ratio - value(m) / value(0)).abs() < 1e-9,
                "{metric}/{}: bar height ratio {ratio} vs value ratio {}",
                names[m],
                value(m) / value(0)
            );
            let text = &labels.iter().find(|l| &l.0 == metric && l.1 == names[m]).unwrap().2;
            let shown: f64 = text.parse().map_err(|_| format!("label {text:?}"))?;
            ensure!(
                text.split('.').nth(1).map(str::len) == Some(4),
                "{metric}/{}: label {text:?} not at 4 decimals",
                names[m]
            );
            ensure!((shown - value(m)).abs() < LABEL_TOLERANCE, "{metric}/{}: label {text} vs {}", names[m], value(m));
            ensure!(*text == bar_label(value(m)), "{metric}/{}: label {text}", names[m]);
        }
    }
    Ok("3 groups x 3 models, labels match published values to 4 decimals".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("architecture fidelity", architecture_fidelity),
        ("pspi oracle", pspi_oracle),
        ("class weight identities", class_weight_identities),
        ("fold protocol", fold_protocol),
        ("loss correctness", loss_correctness),
        ("early stopping", early_stopping),
        ("desk-scale end-to-end training", desk_run),
        ("metrics oracle", metrics_oracle),
        ("reproducibility", reproducibility),
        ("published chart regeneration", published_chart),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
