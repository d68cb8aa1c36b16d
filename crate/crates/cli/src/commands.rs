use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use kuda::data::{
    generate_synthetic, load_source, load_target, save_features, save_source, save_target_truth, SyntheticConfig,
};
use kuda::kls::{auto_threshold, kls_label, KlsConfig, PowerConfig, Status};
use kuda::model::{load_checkpoint, save_checkpoint, Checkpoint};
use kuda::train::{write_log, StepReport, Trainer};
use kuda::{evaluate, histogram, Averaging, Error, Label, MemoryBank, Result, TrainConfig, TrainState};

use crate::args::{EvalArgs, HyperArgs, LabelArgs, SynthArgs, TrainArgs};
use crate::manifest::{sha256_file, Manifest};

pub fn synth(a: SynthArgs) -> Result<()> {
    let d = SyntheticConfig::default();
    let cfg = SyntheticConfig {
        n_common: a.common.unwrap_or(d.n_common),
        n_src_private: a.src_private.unwrap_or(d.n_src_private),
        n_tgt_private: a.tgt_private.unwrap_or(d.n_tgt_private),
        dim: a.dim.unwrap_or(d.dim),
        per_class: a.per_class.unwrap_or(d.per_class),
        shift: a.shift.unwrap_or(d.shift),
        spread: a.spread.unwrap_or(d.spread),
        seed: a.seed.unwrap_or(d.seed),
    };
    let (source, target) = generate_synthetic(&cfg)?;
    fs::create_dir_all(&a.out)?;
    let (sp, tp, truth) = (a.out.join("source.udaf"), a.out.join("target.udaf"), a.out.join("truth.udaf"));
    save_source(&sp, &source)?;
    save_features(&tp, target.features(), None)?;
    save_target_truth(&truth, &target)?;

    let mut m = Manifest::new("synth");
    m.set("seed", cfg.seed);
    m.set("n_common", cfg.n_common);
    m.set("n_src_private", cfg.n_src_private);
    m.set("n_tgt_private", cfg.n_tgt_private);
    m.set("dim", cfg.dim);
    m.set("per_class", cfg.per_class);
    m.set("shift", cfg.shift);
    m.set("spread", cfg.spread);
    m.file("source", &sp)?;
    m.file("target", &tp)?;
    m.file("truth", &truth)?;
    m.write(&a.out.join("manifest.txt"))?;

    let n_unknown = target.truth().map_or(0, |t| t.iter().filter(|l| l.is_unknown()).count());
    println!("{}", sp.display());
    println!("{}", tp.display());
    println!("{}", truth.display());
    println!(
        "classes: {} common, {} source-private, {} target-private",
        cfg.n_common, cfg.n_src_private, cfg.n_tgt_private
    );
    println!(
        "rows: source {}, target {} ({} unknown)",
        source.len(),
        target.len(),
        n_unknown
    );
    Ok(())
}

fn train_config(h: &HyperArgs) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        lr_new: h.lr.unwrap_or(d.lr_new),
        lr_backbone: h.lr_backbone.unwrap_or(d.lr_backbone),
        momentum: h.momentum.unwrap_or(d.momentum),
        weight_decay: h.weight_decay.unwrap_or(d.weight_decay),
        batch: h.batch.unwrap_or(d.batch),
        alpha: h.alpha.unwrap_or(d.alpha),
        k: h.k.unwrap_or(d.k),
        k_tau: h.k_tau.unwrap_or(d.k_tau),
        cred_scale: h.cred_scale.unwrap_or(d.cred_scale),
        lambda: h.lambda.unwrap_or(d.lambda),
        max_steps: h.max_steps.unwrap_or(d.max_steps),
        sched_gamma: h.sched_gamma.unwrap_or(d.sched_gamma),
        sched_power: h.sched_power.unwrap_or(d.sched_power),
        hidden: match h.hidden {
            Some(0) => None,
            Some(n) => Some(n),
            None => d.hidden,
        },
        embed_dim: h.embed_dim.or(d.embed_dim),
        power_iters: h.power_iters.unwrap_or(d.power_iters),
        power_tol: h.power_tol.unwrap_or(d.power_tol),
        seed: h.seed.unwrap_or(d.seed),
    }
}

fn set_train_config(m: &mut Manifest, cfg: &TrainConfig, embed_dim: usize) {
    m.set("seed", cfg.seed);
    m.set("lr_new", cfg.lr_new);
    m.set("lr_backbone", cfg.lr_backbone);
    m.set("momentum", cfg.momentum);
    m.set("weight_decay", cfg.weight_decay);
    m.set("batch", cfg.batch);
    m.set("alpha", cfg.alpha);
    m.set("k", cfg.k);
    m.set("k_tau", cfg.k_tau);
    m.set("cred_scale", cfg.cred_scale);
    m.set("lambda", cfg.lambda);
    m.set("max_steps", cfg.max_steps);
    m.set("sched_gamma", cfg.sched_gamma);
    m.set("sched_power", cfg.sched_power);
    m.set("hidden", cfg.hidden.unwrap_or(0));
    m.set("embed_dim", embed_dim);
    m.set("power_iters", cfg.power_iters);
    m.set("power_tol", cfg.power_tol);
}

pub fn train(a: TrainArgs) -> Result<()> {
    let cfg = train_config(&a.hyper);
    cfg.validate()?;
    if a.save_every == Some(0) {
        return Err(Error::Config("--save-every must be at least 1".into()));
    }
    let source = load_source(&a.source)?;
    let target = load_target(&a.target, a.truth.as_deref())?;
    let shape = cfg.model_shape(source.features().dim(), source.classes().len())?;

    let mut state = match &a.resume {
        Some(p) => {
            let ckpt = load_checkpoint(p)?;
            if ckpt.train.is_none() {
                return Err(Error::Config(format!("{} carries no training state", p.display())));
            }
            if *ckpt.model.shape() != shape {
                return Err(Error::Config(format!(
                    "checkpoint model {:?} does not match the configured {:?}",
                    ckpt.model.shape(),
                    shape
                )));
            }
            TrainState::from_checkpoint(ckpt, cfg.alpha)?
        }
        None => TrainState::init(&source, &cfg)?,
    };
    if let Some((s, t)) = &state.banks {
        if s.len() != source.len() || t.len() != target.len() {
            return Err(Error::Config("checkpoint banks do not match the dataset sizes".into()));
        }
    }
    if state.step > cfg.max_steps {
        return Err(Error::Config(format!(
            "checkpoint is at step {}, beyond --max-steps {}",
            state.step, cfg.max_steps
        )));
    }

    fs::create_dir_all(&a.out)?;
    let trainer = Trainer::new(&source, &target, cfg.clone())?;
    let mut log: Vec<StepReport> = Vec::new();
    while state.step < cfg.max_steps {
        let stop = match a.save_every {
            Some(n) => ((state.step / n + 1) * n).min(cfg.max_steps),
            None => cfg.max_steps,
        };
        log.extend(trainer.run_until(&mut state, stop)?);
        if a.save_every.is_some() && state.step < cfg.max_steps {
            save_checkpoint(a.out.join(format!("checkpoint_{}.udac", state.step)), &state.to_checkpoint())?;
        }
    }

    let ckpt_path = a.out.join("checkpoint.udac");
    let log_path = a.out.join("train_log.tsv");
    save_checkpoint(&ckpt_path, &state.to_checkpoint())?;
    write_log(&log_path, &log)?;

    let mut m = Manifest::new("train");
    set_train_config(&mut m, &cfg, shape.embed_dim);
    m.file("source", &a.source)?;
    m.file("target", &a.target)?;
    match &a.truth {
        Some(p) => m.file("truth", p)?,
        None => m.set("truth", ""),
    }
    match &a.resume {
        Some(p) => m.file("resume", p)?,
        None => m.set("resume", ""),
    }
    m.set("save_every", a.save_every.unwrap_or(0));
    m.set("checkpoint_sha256", sha256_file(&ckpt_path)?);
    m.set("log_sha256", sha256_file(&log_path)?);
    m.write(&a.out.join("manifest.txt"))?;

    if let Some(last) = log.last() {
        println!(
            "step {} loss_all {} c_tau {} verdicts K/U/? {}/{}/{}",
            last.step, last.losses.total, last.c_tau, last.n_known, last.n_unknown, last.n_uncertain
        );
    }
    println!("{}", ckpt_path.display());
    println!("{}", log_path.display());
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let target = load_target(&a.target, a.truth.as_deref())?;
    let averaging = if a.micro { Averaging::Micro } else { Averaging::Macro };
    let report = evaluate(&target, &ckpt.model, averaging)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("report.txt"), &text)?;
        fs::write(out.join("confusion.tsv"), report.confusion_tsv())?;
    }
    Ok(())
}

fn banks(ckpt: &Checkpoint, source: &kuda::Source32, target: &kuda::Target32, alpha: f64) -> Result<(MemoryBank<f32>, MemoryBank<f32>)> {
    if let Some(t) = &ckpt.train {
        if t.source_bank.rows() == source.len() && t.target_bank.rows() == target.len() {
            return Ok((
                MemoryBank::from_normalized(t.source_bank.clone(), alpha)?,
                MemoryBank::from_normalized(t.target_bank.clone(), alpha)?,
            ));
        }
    }
    Ok((
        MemoryBank::new(ckpt.model.embed_all(source.features())?, alpha)?,
        MemoryBank::new(ckpt.model.embed_all(target.features())?, alpha)?,
    ))
}

struct Row {
    knowability: f64,
    credibility: Option<f64>,
    status: Status,
    reject: f64,
}

pub fn label(a: LabelArgs) -> Result<()> {
    let d = KlsConfig::default();
    let cfg = KlsConfig {
        k: a.k.unwrap_or(d.k),
        k_tau: a.k_tau.unwrap_or(d.k_tau),
        cred_scale: a.cred_scale.unwrap_or(d.cred_scale),
        power: PowerConfig::default(),
    };
    cfg.validate()?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let model = &ckpt.model;
    let source = load_source(&a.source)?;
    let target = load_target(&a.target, a.truth.as_deref())?;
    let (sb, tb) = banks(&ckpt, &source, &target, TrainConfig::default().alpha)?;

    let src_probs = (0..source.len())
        .into_par_iter()
        .map(|i| model.forward(source.features().row(i)))
        .collect::<Result<Vec<_>>>()?;
    let c_tau = auto_threshold(src_probs.iter())?;

    let rows = (0..target.len())
        .into_par_iter()
        .map(|i| {
            let x = target.features().row(i);
            let z = model.embed(x)?;
            let v = kls_label(&z, &sb, &tb, Some(i), model, c_tau, &cfg)?;
            Ok(Row {
                knowability: v.knowability,
                credibility: v.credibility,
                status: v.status,
                reject: model.forward(x)?.reject_score(),
            })
        })
        .collect::<Result<Vec<Row>>>()?;

    let truth = target.truth();
    let mut s = String::from("index\tknowability\tcredibility\tverdict\tpseudo_label\treject_score");
    if truth.is_some() {
        s.push_str("\ttruth");
    }
    s.push('\n');
    for (i, r) in rows.iter().enumerate() {
        let cred = r.credibility.map(|c| c.to_string()).unwrap_or_default();
        let pseudo = match r.status {
            Status::Known(c) => c.to_string(),
            _ => String::new(),
        };
        let _ = write!(
            s,
            "{i}\t{}\t{cred}\t{}\t{pseudo}\t{}",
            r.knowability,
            r.status.tag(),
            r.reject
        );
        if let Some(t) = truth {
            let name = match t[i] {
                Label::Class(c) => c.to_string(),
                Label::Unknown => "unknown".into(),
            };
            let _ = write!(s, "\t{name}");
        }
        s.push('\n');
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&a.out, s)?;

    if let Some(dir) = &a.hist_dir {
        write_histograms(dir, &rows, truth, a.hist_bins)?;
    }
    let count = |f: fn(&Status) -> bool| rows.iter().filter(|r| f(&r.status)).count();
    println!(
        "c_tau {c_tau} verdicts K/U/? {}/{}/{}",
        count(|s| matches!(s, Status::Known(_))),
        count(|s| matches!(s, Status::Unknown)),
        count(|s| matches!(s, Status::Uncertain))
    );
    Ok(())
}

/// `knowability.tsv` and `reject_score.tsv` over all rows, plus the
/// `_known` / `_unknown` splits when truth is available.
fn write_histograms(dir: &Path, rows: &[Row], truth: Option<&[Label]>, bins: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    let groups: Vec<(&str, Vec<usize>)> = match truth {
        Some(t) => vec![
            ("", (0..rows.len()).collect()),
            ("_known", (0..rows.len()).filter(|&i| !t[i].is_unknown()).collect()),
            ("_unknown", (0..rows.len()).filter(|&i| t[i].is_unknown()).collect()),
        ],
        None => vec![("", (0..rows.len()).collect())],
    };
    for (suffix, idx) in groups {
        let kn: Vec<f64> = idx.iter().map(|&i| rows[i].knowability).collect();
        let rj: Vec<f64> = idx.iter().map(|&i| rows[i].reject).collect();
        fs::write(dir.join(format!("knowability{suffix}.tsv")), histogram(&kn, bins, 0.0, 1.0)?.to_tsv())?;
        fs::write(dir.join(format!("reject_score{suffix}.tsv")), histogram(&rj, bins, 0.0, 1.0)?.to_tsv())?;
    }
    Ok(())
}
