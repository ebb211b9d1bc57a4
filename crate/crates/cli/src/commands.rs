use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use credal_cbm::ablate::{run_sweep, sweep_table, SweepSpec};
use credal_cbm::data::Splits;
use credal_cbm::metrics::table::{eval_table, iaa_table, intervention_table, quadrant_table};
use credal_cbm::metrics::{evaluate_inferences, intervene_inferences, proxy_iaa_inferences, route_inferences, InterventionConfig};
use credal_cbm::synth::{generate, SynthConfig};
use credal_cbm::train::{infer_dataset, train_model};
use credal_cbm::{load_dataset, load_model, persist_model, save_dataset, ConceptValue, Dataset, EnsembleModel};
use serde::Serialize;

use crate::args::{AblateArgs, EvalArgs, InspectArgs, InterveneArgs, RouteArgs, SynthArgs, TrainArgs};
use crate::config;

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

/// `data.jsonl` → `data.<tag>.jsonl`
fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{tag}.jsonl"))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load(path: &Path) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<EnsembleModel> {
    load_model(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn check_fits(model: &EnsembleModel, data: &Dataset) -> Result<()> {
    ensure!(
        (model.d, model.k) == (data.d, data.k) && data.n_classes <= model.n_classes,
        "model expects d={}, K={}, {} classes but the data has d={}, K={}, {} classes",
        model.d,
        model.k,
        model.n_classes,
        data.d,
        data.k,
        data.n_classes
    );
    Ok(())
}

fn default_base_unknown(k: usize) -> Vec<f64> {
    match k {
        4 => vec![0.25, 0.45, 0.63, 0.75],
        1 => vec![0.5],
        _ => (0..k).map(|i| 0.25 + 0.5 * i as f64 / (k - 1) as f64).collect(),
    }
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let base = args.base_unknown.unwrap_or_else(|| default_base_unknown(args.k));
    let cfg = SynthConfig::new(args.n, args.d, args.k, args.classes, args.seed, base);
    let (ds, _) = generate(&cfg)?;
    save_dataset(&ds, &args.out)?;
    println!(
        "wrote {} examples (d={}, K={}, {} classes) to {}",
        ds.len(),
        ds.d,
        ds.k,
        ds.n_classes,
        args.out.display()
    );
    if let Some(fr) = args.split {
        ensure!(fr.len() == 2, "--split takes two fractions, TRAIN,VAL");
        let splits = ds.split(fr[0], fr[1], args.seed)?;
        for (tag, part) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
            let path = sibling(&args.out, tag);
            save_dataset(part, &path)?;
            println!("wrote {} examples to {}", part.len(), path.display());
        }
    }
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = config::resolve(&args.config)?;
    let data = load(&args.data)?;
    let (train, val) = match &args.val {
        Some(p) => (data, load(p)?),
        None => {
            let s = data.split(0.8, 0.2, cfg.seed)?;
            (s.train, s.val)
        }
    };
    log::info!("training on {} examples, validating on {}", train.len(), val.len());
    let outcome = train_model(&train, &val, &cfg)?;
    persist_model(&outcome.model, &args.out)?;
    let log_path = args.log.unwrap_or_else(|| with_suffix(&args.out, ".log.jsonl"));
    write_jsonl(&log_path, &outcome.log)?;

    if let Some(epoch) = outcome.diverged {
        log::warn!("non-finite loss in epoch {epoch}; kept the best checkpoint before it");
    }
    let best_acc = outcome
        .log
        .iter()
        .find(|r| r.epoch == outcome.best_epoch)
        .map(|r| format!("{:.4}", r.val_acc))
        .unwrap_or_else(|| "-".into());
    println!(
        "epochs run {}, best epoch {} (val acc {best_acc}){}",
        outcome.log.len(),
        outcome.best_epoch,
        if outcome.stopped_early { ", stopped early" } else { "" }
    );
    println!("checkpoint {}, log {}", args.out.display(), log_path.display());
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let model = load_checkpoint(&args.model)?;
    let data = load(&args.data)?;
    check_fits(&model, &data)?;
    let inferences = infer_dataset(&model, &data)?;
    let reference = args.ale_reference.resolve(data.has_disagreement());
    let report = evaluate_inferences(&model, &data, &inferences, reference)?;
    print!("{}", eval_table(&report));
    if data.has_disagreement() && data.len() >= 2 {
        println!();
        print!("{}", iaa_table(&proxy_iaa_inferences(&data, &inferences)?));
    }
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(())
}

pub fn intervene(args: InterveneArgs) -> Result<()> {
    let model = load_checkpoint(&args.model)?;
    let data = load(&args.data)?;
    check_fits(&model, &data)?;
    let inferences = infer_dataset(&model, &data)?;
    let reports = args
        .strategy
        .strategies()
        .into_iter()
        .map(|s| {
            let cfg = InterventionConfig {
                selection: args.selection.into(),
                ..InterventionConfig::new(s, args.m, args.seed)
            };
            intervene_inferences(&model, &data, &inferences, cfg)
        })
        .collect::<credal_cbm::Result<Vec<_>>>()?;
    print!("{}", intervention_table(&reports));
    if let Some(out) = &args.out {
        write_json(out, &reports)?;
    }
    Ok(())
}

pub fn route(args: RouteArgs) -> Result<()> {
    let model = load_checkpoint(&args.model)?;
    let data = load(&args.data)?;
    check_fits(&model, &data)?;
    let inferences = infer_dataset(&model, &data)?;
    let (routed, report) = route_inferences(&data, &inferences)?;
    print!("{}", quadrant_table(&report));
    println!("thresholds: epi {:.6}, ale {:.6}", report.epi_threshold, report.ale_threshold);
    if let Some(out) = &args.out {
        write_jsonl(out, &routed)?;
    }
    let report_path = args.report.or_else(|| args.out.as_ref().map(|o| with_suffix(o, ".quadrants.json")));
    if let Some(p) = report_path {
        write_json(&p, &report)?;
    }
    Ok(())
}

pub fn ablate(args: AblateArgs) -> Result<()> {
    let base = config::resolve(&args.config)?;
    let data = load(&args.data)?;
    let splits = match (&args.val, &args.test) {
        (Some(v), Some(t)) => Splits {
            train: data,
            val: load(v)?,
            test: load(t)?,
        },
        _ => data.split(0.6, 0.2, args.split_seed)?,
    };
    let spec = SweepSpec::new(base, args.sweep_axis, args.sweep_values)?;
    let rows = run_sweep(&spec, &splits)?;
    print!("{}", sweep_table(&spec, &rows));
    if let Some(out) = &args.out {
        write_jsonl(out, &rows)?;
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        bail!("{failed} of {} sweep cells failed", rows.len());
    }
    Ok(())
}

fn inspect_model(path: &Path) -> Result<()> {
    let m = load_checkpoint(path)?;
    println!("checkpoint {}", path.display());
    println!("  d {}, K {}, classes {}", m.d, m.k, m.n_classes);
    println!("  ale mode {}, trainable parameters {}", m.ale_mode, m.trainable_len());
    for (i, h) in m.heads.iter().enumerate() {
        println!(
            "  head {i}: rank {}, alpha {}, dropout {:.4}",
            h.config.rank, h.config.alpha, h.config.dropout
        );
    }
    println!("  seed {}, lr {}, max epochs {}", m.config.seed, m.config.lr, m.config.max_epochs);
    Ok(())
}

fn inspect_data(path: &Path) -> Result<()> {
    let ds = load(path)?;
    println!("dataset {}", path.display());
    println!("  n {}, d {}, K {}, classes {}", ds.len(), ds.d, ds.k, ds.n_classes);
    let mut per_class = vec![0usize; ds.n_classes];
    for e in &ds.examples {
        per_class[e.label] += 1;
    }
    println!("  class counts {per_class:?}");
    let n = ds.len().max(1) as f64;
    for (j, name) in ds.concept_names.iter().enumerate() {
        let unknown = ds.examples.iter().filter(|e| e.concepts[j] == ConceptValue::Unknown).count();
        let present = ds.examples.iter().filter(|e| e.concepts[j] == ConceptValue::Present).count();
        let rate: f64 = ds.examples.iter().map(|e| e.unknown_rate[j]).sum::<f64>() / n;
        println!("  {name}: present {present}, unknown {unknown}, mean unknown rate {rate:.3}");
    }
    Ok(())
}

pub fn inspect(args: InspectArgs) -> Result<()> {
    if let Some(m) = &args.model {
        inspect_model(m)?;
    }
    if let Some(d) = &args.data {
        inspect_data(d)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_files_sit_next_to_the_output() {
        assert_eq!(sibling(Path::new("out/data.jsonl"), "test"), PathBuf::from("out/data.test.jsonl"));
        assert_eq!(sibling(Path::new("data"), "val"), PathBuf::from("data.val.jsonl"));
    }

    #[test]
    fn default_ambiguity_spans_the_range() {
        assert_eq!(default_base_unknown(4), vec![0.25, 0.45, 0.63, 0.75]);
        assert_eq!(default_base_unknown(3), vec![0.25, 0.5, 0.75]);
        assert_eq!(default_base_unknown(1), vec![0.5]);
    }
}
