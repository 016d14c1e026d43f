use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use serde_json::json;

use super::config::{resolve_seed, RunConfig, SEED_ENV};
use super::{Cli, Command};
use crate::dataset::{
    class_histogram, compute_class_weights, generate_synthetic, ingest, make_fold_plan,
    DatasetIndex, FoldPlan, IngestSummary,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    emit_comparison_plot, emit_report, load_reports, report_to_json, reports_to_csv,
    run_cross_validation_with, NetworkTrainer, ReportFormat,
};
use crate::io::write_atomic;
use crate::preprocess::{FrameCache, Preprocessor};
use crate::training::{predict_frames, train_fold, EpochRecord};

fn print(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn epoch_line(fold: usize, r: &EpochRecord) -> String {
    json!({
        "event": "epoch",
        "fold": fold,
        "epoch": r.epoch,
        "train_loss": r.train_loss,
        "val_mae": r.val_mae,
        "val_mse": r.val_mse,
        "val_accuracy": r.val_accuracy,
    })
    .to_string()
}

pub(super) fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let config_path = match &cli.command {
        Command::ValidateConfig { file: Some(f) } => Some(f.clone()),
        _ => cli.global.config.clone(),
    };
    let mut cfg = RunConfig::load(config_path.as_deref(), cli.global.profile)?;
    let env = std::env::var(SEED_ENV).ok();
    let (seed, source) = resolve_seed(cli.global.seed, env.as_deref(), cfg.seed)?;
    cfg.set_seed(seed);
    let _ = writeln!(err, "seed: {seed} (from {})", serde_json::to_value(source)?.as_str().unwrap_or("?"));
    let _ = writeln!(err, "config digest: sha256:{}", cfg.digest()?);
    cfg.validate()?;

    match cli.command {
        Command::ValidateConfig { .. } => print(out, format!("config ok ({:?} profile)", cfg.profile).to_lowercase()),
        Command::Synth {
            subjects,
            frames,
            image_size,
            out: target,
        } => {
            let mut syn = cfg.dataset.synthetic.clone();
            if let Some(n) = subjects {
                syn.n_subjects = n;
            }
            if let Some(n) = frames {
                syn.frames_per_subject = n;
                syn.sequences_per_subject = syn.sequences_per_subject.min(n.max(1));
            }
            if let Some(n) = image_size {
                syn.image_size = n;
            }
            let target = target.unwrap_or(cfg.dataset.root.clone());
            let index = synth(&syn, &target)?;
            print(
                out,
                format!("{} frames, {} subjects written to {}", index.len(), index.subjects().len(), target.display()),
            )
        }
        Command::Ingest {
            root,
            layout,
            n_classes,
            json,
        } => {
            let root = root.unwrap_or(cfg.dataset.root.clone());
            let layout = layout.unwrap_or(cfg.dataset.layout);
            let (index, summary) = ingest(&root, layout, n_classes.unwrap_or(cfg.dataset.n_classes))?;
            if json {
                print(out, serde_json::to_string_pretty(&summary)?)
            } else {
                print_summary(out, &index, &summary)
            }
        }
        Command::Stats { root, json } => {
            let (index, _) = load_dataset(&cfg, root.as_deref())?;
            let hist = class_histogram(&index);
            let weights = compute_class_weights(&index)?;
            if json {
                print(out, serde_json::to_string_pretty(&weights)?)
            } else {
                print(out, format!("{} frames, {} subjects", index.len(), index.subjects().len()))?;
                print(out, "class\tcount\tweight")?;
                for c in 0..index.n_classes() {
                    let n = hist.get(&c).copied().unwrap_or(0);
                    print(out, format!("{c}\t{n}\t{:.6}", weights.weights[c]))?;
                }
                if !weights.missing.is_empty() {
                    print(out, format!("classes without frames: {:?}", weights.missing))?;
                }
                Ok(())
            }
        }
        Command::Folds {
            root,
            subjects,
            k,
            train,
            val,
            test,
            out: target,
        } => {
            let ids: BTreeSet<String> = match subjects {
                Some(n) => {
                    let width = n.to_string().len().max(2);
                    (1..=n).map(|i| format!("S{i:0width$}")).collect()
                }
                None => load_dataset(&cfg, root.as_deref())?.0.subjects().clone(),
            };
            let mut eval = cfg.evaluation.clone();
            eval.k = k.unwrap_or(eval.k);
            eval.n_train = train.or(eval.n_train);
            eval.n_val = val.or(eval.n_val);
            eval.n_test = test.or(eval.n_test);
            let (n_train, n_val, n_test) = eval.fold_sizes(ids.len());
            let plan = make_fold_plan(&ids, eval.k, n_train, n_val, n_test, cfg.seed)?;
            let text = serde_json::to_string_pretty(&plan)?;
            match target {
                Some(p) => {
                    write_atomic(&p, text.as_bytes())?;
                    print(out, format!("fold plan written to {}", p.display()))
                }
                None => print(out, text),
            }
        }
        Command::Train { fold, out: target } => {
            let (index, frames, plan) = prepare(&cfg)?;
            let f = plan.folds.get(fold).ok_or_else(|| {
                Error::InvalidInput(format!("fold {fold} does not exist; the plan has {} folds", plan.folds.len()))
            })?;
            let target = match target {
                Some(t) => t,
                None => {
                    let dir = &cfg.evaluation.output_dir;
                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                    dir.join(format!("fold_{fold}.json"))
                }
            };
            if target.parent().is_some_and(|p| !p.as_os_str().is_empty() && !p.is_dir()) {
                return Err(Error::InvalidInput(format!(
                    "checkpoint directory {} does not exist",
                    target.parent().unwrap().display()
                )));
            }
            let mut log = |r: &EpochRecord| {
                let _ = writeln!(out, "{}", epoch_line(fold, r));
            };
            let ckpt = train_fold(&index, &frames, fold, f, &cfg.model, &cfg.training, &mut log)?;
            ckpt.save(&target)?;
            let test = index.subset(&f.test)?;
            let net = ckpt.network()?;
            let pred = predict_frames(&net, &frames, test.records())?;
            let truth: Vec<usize> = test.records().iter().map(|r| r.class()).collect();
            let m = crate::evaluation::compute_metrics(&pred, &truth, None)?;
            print(
                out,
                json!({
                    "event": "fold_done",
                    "fold": fold,
                    "best_epoch": ckpt.best_epoch,
                    "stopped_epoch": ckpt.stopped_epoch,
                    "test_mae": m.mae,
                    "test_mse": m.mse,
                    "test_accuracy": m.accuracy,
                    "checkpoint": target,
                }),
            )
        }
        Command::Evaluate { out_dir, checkpoints } => {
            let out_dir = out_dir.unwrap_or(cfg.evaluation.output_dir.clone());
            evaluate(&cfg, &out_dir, checkpoints || cfg.evaluation.save_checkpoints, out)
        }
        Command::Report { input, format, out: target } => {
            let reports = load_reports(&input)?;
            let format = format
                .or_else(|| target.as_deref().and_then(ReportFormat::from_path))
                .unwrap_or(ReportFormat::Json);
            let text = match format {
                ReportFormat::Csv => reports_to_csv(&reports)?,
                ReportFormat::Json if reports.len() == 1 => report_to_json(&reports[0])?,
                ReportFormat::Json => serde_json::to_string_pretty(&reports)?,
            };
            match target {
                Some(p) => {
                    write_atomic(&p, text.as_bytes())?;
                    print(out, format!("{} report(s) written to {}", reports.len(), p.display()))
                }
                None => write!(out, "{text}").map_err(|e| Error::io("<stdout>", e)),
            }
        }
        Command::Plot { inputs, out: target } => {
            let mut reports = Vec::new();
            for p in &inputs {
                reports.extend(load_reports(p)?);
            }
            emit_comparison_plot(&reports, &target)?;
            print(out, format!("{} model(s) plotted to {}", reports.len(), target.display()))
        }
    }
}

/// Generates into a sibling staging directory and renames it into place, so
/// a failed run leaves nothing at `target`.
fn synth(config: &crate::dataset::SyntheticConfig, target: &Path) -> Result<DatasetIndex> {
    if target.exists() {
        let empty = fs::read_dir(target).map_err(|e| Error::io(target, e))?.next().is_none();
        if !empty {
            return Err(Error::InvalidInput(format!("{} exists and is not empty", target.display())));
        }
    }
    let name = target
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no directory name", target.display())))?;
    let staging = target.with_file_name(format!(".{}.staging{}", name.to_string_lossy(), std::process::id()));
    let result = generate_synthetic(config, &staging).and_then(|index| {
        if target.exists() {
            fs::remove_dir(target).map_err(|e| Error::io(target, e))?;
        }
        fs::rename(&staging, target).map_err(|e| Error::io(target, e))?;
        Ok(index)
    });
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}

fn print_summary(out: &mut dyn Write, index: &DatasetIndex, s: &IngestSummary) -> Result<()> {
    print(out, format!("{} frames, {} subjects", index.len(), index.subjects().len()))?;
    if !s.skipped_missing_au.is_empty() {
        print(out, format!("skipped {} images without AU labels", s.skipped_missing_au.len()))?;
    }
    if s.frames_without_box > 0 {
        print(out, format!("{} frames without a face box", s.frames_without_box))?;
    }
    Ok(())
}

fn load_dataset(cfg: &RunConfig, root: Option<&Path>) -> Result<(DatasetIndex, IngestSummary)> {
    let root = root.unwrap_or(&cfg.dataset.root);
    let layout = cfg.dataset.layout;
    let (index, summary) = ingest(root, layout, cfg.dataset.n_classes)?;
    if index.is_empty() {
        return Err(Error::EmptyDataset(format!("no labelled frames under {}", root.display())));
    }
    info!("ingested {} frames from {}", index.len(), root.display());
    Ok((index, summary))
}

fn prepare(cfg: &RunConfig) -> Result<(DatasetIndex, FrameCache, FoldPlan)> {
    let (index, _) = load_dataset(cfg, None)?;
    let (n_train, n_val, n_test) = cfg.evaluation.fold_sizes(index.subjects().len());
    let plan = make_fold_plan(index.subjects(), cfg.evaluation.k, n_train, n_val, n_test, cfg.seed)?;
    let frames = FrameCache::build(&Preprocessor::new(cfg.preprocess.clone())?, index.records())?;
    Ok((index, frames, plan))
}

fn evaluate(cfg: &RunConfig, out_dir: &Path, keep_checkpoints: bool, out: &mut dyn Write) -> Result<()> {
    let (index, frames, plan) = prepare(cfg)?;
    let staging = keep_checkpoints.then(|| {
        let name = out_dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or("out".into());
        out_dir.with_file_name(format!(".{name}.checkpoints{}", std::process::id()))
    });
    if let Some(s) = &staging {
        fs::create_dir_all(s).map_err(|e| Error::io(s, e))?;
    }
    let result = run_and_write(cfg, &index, &frames, &plan, out_dir, staging.as_deref(), out);
    if let Some(s) = &staging {
        let _ = fs::remove_dir_all(s);
    }
    result
}

fn run_and_write(
    cfg: &RunConfig,
    index: &DatasetIndex,
    frames: &FrameCache,
    plan: &FoldPlan,
    out_dir: &Path,
    staging: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let report = {
        let mut trainer = NetworkTrainer::new(frames, cfg.model.clone(), cfg.training.clone());
        trainer.checkpoint_dir = staging.map(Path::to_path_buf);
        let sink: &mut dyn Write = &mut *out;
        trainer.on_epoch = Some(RefCell::new(Box::new(move |fold, r: &EpochRecord| {
            let _ = writeln!(sink, "{}", epoch_line(fold, r));
        })));
        run_cross_validation_with(&trainer, index, plan, cfg.model.name.as_str())?
    };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    for format in &cfg.evaluation.formats {
        let ext = match format {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        };
        let path = out_dir.join(format!("report.{ext}"));
        emit_report(&report, *format, &path)?;
        written.push(path);
    }
    if let Some(s) = staging {
        let dest = out_dir.join("checkpoints");
        if dest.exists() {
            fs::remove_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
        }
        fs::rename(s, &dest).map_err(|e| Error::io(&dest, e))?;
        written.push(dest);
    }
    print(
        out,
        json!({
            "event": "report",
            "model": report.model_name,
            "aggregation": report.aggregation,
            "mae": report.aggregate.mae,
            "mse": report.aggregate.mse,
            "accuracy": report.aggregate.accuracy,
            "files": written,
        }),
    )
}
