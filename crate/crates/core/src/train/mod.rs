//! The training loop.
//!
//! Each step samples one source and one target batch, refreshes the memory
//! banks, labels the target batch, and takes one Nesterov-SGD step on the
//! combined objective.

mod log;
mod optim;
mod sampler;

pub use log::{format_log, write_log, LOG_HEADER};
pub use optim::{lr_at, nesterov_step};
pub use sampler::BatchSampler;

use rayon::prelude::*;

use crate::dataset::{Label, SourceDataset, TargetDataset};
use crate::error::{Error, Result};
use crate::eval::kls_accuracy;
use crate::kls::{self, auto_threshold, KlsConfig, KlsVerdict, PowerConfig, Status};
use crate::matrix::argmax;
use crate::membank::MemoryBank;
use crate::model::{
    weight_matrix, Checkpoint, ForwardCache, LossBatch, LossSummary, Model, ModelShape, TrainSnapshot, WeightMatrix,
};
use crate::scalar::Scalar;

/// All training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Initial learning rate of the adapter and head.
    pub lr_new: f64,
    /// Reserved for a pretrained backbone; unused here.
    pub lr_backbone: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Per-domain batch size.
    pub batch: usize,
    /// Memory-bank momentum.
    pub alpha: f64,
    /// Neighbors retrieved for knowability, credibility, and source weights.
    pub k: usize,
    pub k_tau: f64,
    pub cred_scale: f64,
    pub lambda: f64,
    pub max_steps: usize,
    pub sched_gamma: f64,
    pub sched_power: f64,
    /// Adapter hidden width; `None` trains the head on normalized inputs.
    pub hidden: Option<usize>,
    /// Adapter output width; `None` keeps the input width.
    pub embed_dim: Option<usize>,
    pub power_iters: usize,
    pub power_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_new: 0.01,
            lr_backbone: 0.001,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch: 36,
            alpha: 0.9,
            k: 10,
            k_tau: 0.5,
            cred_scale: 0.8,
            lambda: 0.1,
            max_steps: 2000,
            sched_gamma: 10.0,
            sched_power: 0.75,
            hidden: Some(256),
            embed_dim: None,
            power_iters: 1000,
            power_tol: 1e-10,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn kls(&self) -> KlsConfig {
        KlsConfig {
            k: self.k,
            k_tau: self.k_tau,
            cred_scale: self.cred_scale,
            power: PowerConfig {
                max_iters: self.power_iters,
                tol: self.power_tol,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_new", self.lr_new),
            ("lr_backbone", self.lr_backbone),
            ("sched_power", self.sched_power),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("lambda", self.lambda),
            ("sched_gamma", self.sched_gamma),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.momentum >= 1.0 {
            return Err(Error::config("momentum must be below 1"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch must be at least 1"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha must be in [0, 1), got {}", self.alpha)));
        }
        self.kls().validate()
    }

    pub fn model_shape(&self, input_dim: usize, num_classes: usize) -> Result<ModelShape> {
        match self.hidden {
            Some(h) => ModelShape::new(input_dim, Some(h), self.embed_dim.unwrap_or(input_dim), num_classes),
            None => ModelShape::head_only(input_dim, num_classes),
        }
    }
}

/// Everything that evolves during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub step: usize,
    pub model: Model<T>,
    pub velocity: Vec<T>,
    /// `None` until step 0 initializes them.
    pub banks: Option<(MemoryBank<T>, MemoryBank<T>)>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(model: Model<T>) -> Self {
        let n = model.params().len();
        Self {
            step: 0,
            model,
            velocity: vec![T::zero(); n],
            banks: None,
        }
    }

    /// Fresh parameters for the given data, from the config seed.
    pub fn init(source: &SourceDataset<T>, cfg: &TrainConfig) -> Result<Self> {
        let shape = cfg.model_shape(source.features().dim(), source.classes().len())?;
        Ok(Self::new(Model::init(shape, cfg.seed)?))
    }
}

impl TrainState<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            train: self.banks.as_ref().map(|(s, t)| TrainSnapshot {
                step: self.step,
                velocity: self.velocity.clone(),
                source_bank: s.features().clone(),
                target_bank: t.features().clone(),
            }),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint, alpha: f64) -> Result<Self> {
        let mut state = Self::new(ckpt.model);
        if let Some(t) = ckpt.train {
            if t.velocity.len() != state.velocity.len() {
                return Err(Error::shape("checkpoint velocity does not match the parameters"));
            }
            state.step = t.step;
            state.velocity = t.velocity;
            state.banks = Some((
                MemoryBank::from_normalized(t.source_bank, alpha)?,
                MemoryBank::from_normalized(t.target_bank, alpha)?,
            ));
        }
        Ok(state)
    }
}

/// Diagnostics of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub lr: f64,
    pub losses: LossSummary,
    pub c_tau: f64,
    pub n_known: usize,
    pub n_unknown: usize,
    pub n_uncertain: usize,
    /// Fraction of truth-known batch samples labeled Known with the right class.
    pub kls_acc_known: Option<f64>,
    /// Fraction of truth-unknown batch samples labeled Unknown.
    pub kls_acc_unknown: Option<f64>,
    /// Closed-set accuracy (argmax accept) on the source batch.
    pub source_acc: f64,
}

/// Runs training over a source and target dataset.
pub struct Trainer<'a, T> {
    source: &'a SourceDataset<T>,
    target: &'a TargetDataset<T>,
    cfg: TrainConfig,
    kls: KlsConfig,
    src_sampler: BatchSampler,
    tgt_sampler: BatchSampler,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(source: &'a SourceDataset<T>, target: &'a TargetDataset<T>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if source.features().dim() != target.features().dim() {
            return Err(Error::shape(format!(
                "source dimension {} differs from target dimension {}",
                source.features().dim(),
                target.features().dim()
            )));
        }
        if source.len() < cfg.k || target.len() < cfg.k + 1 {
            return Err(Error::config(format!(
                "k = {} needs at least k source and k + 1 target samples",
                cfg.k
            )));
        }
        Ok(Self {
            source,
            target,
            kls: cfg.kls(),
            src_sampler: BatchSampler::new(source.len(), cfg.batch, cfg.seed, 0),
            tgt_sampler: BatchSampler::new(target.len(), cfg.batch, cfg.seed, 1),
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Banks over the full datasets, embedded with the current model.
    pub fn init_banks(&self, model: &Model<T>) -> Result<(MemoryBank<T>, MemoryBank<T>)> {
        Ok((
            MemoryBank::new(embed_rows(model, self.source.features())?, self.cfg.alpha)?,
            MemoryBank::new(embed_rows(model, self.target.features())?, self.cfg.alpha)?,
        ))
    }

    /// One step of the algorithm; advances `state.step`.
    pub fn step(&self, state: &mut TrainState<T>) -> Result<StepReport> {
        let t = state.step;
        self.step_inner(state).map_err(|e| e.at_step(t))
    }

    fn step_inner(&self, state: &mut TrainState<T>) -> Result<StepReport> {
        let t = state.step;
        let src_idx = self.src_sampler.batch(t);
        let tgt_idx = self.tgt_sampler.batch(t);
        let model = &state.model;

        let forward = |rows: &[usize], feats: &crate::matrix::Matrix<T>| -> Result<Vec<ForwardCache<T>>> {
            rows.par_iter().map(|&i| model.forward_cached(feats.row(i))).collect()
        };
        let src_cache = forward(&src_idx, self.source.features())?;
        let tgt_cache = forward(&tgt_idx, self.target.features())?;

        match state.banks.as_mut() {
            None => state.banks = Some(self.init_banks(model)?),
            Some((sb, tb)) => {
                for (&i, c) in src_idx.iter().zip(&src_cache) {
                    sb.momentum_update(i, &c.embedding)?;
                }
                for (&i, c) in tgt_idx.iter().zip(&tgt_cache) {
                    tb.momentum_update(i, &c.embedding)?;
                }
            }
        }
        let (src_bank, tgt_bank) = state.banks.as_ref().expect("banks initialized above");

        let labels = self.source.labels();
        let weights: Vec<WeightMatrix> = src_idx
            .par_iter()
            .zip(&src_cache)
            .map(|(&i, c)| {
                let y = labels[i];
                match weight_matrix(&c.embedding, y, src_bank, labels, &c.probs, self.cfg.k) {
                    Err(Error::DegenerateSource { .. }) => Ok(WeightMatrix::label_only(y, model.num_classes())),
                    r => r,
                }
            })
            .collect::<Result<_>>()?;

        let c_tau = auto_threshold(src_cache.iter().map(|c| &c.probs))?;

        let verdicts: Vec<KlsVerdict> = tgt_idx
            .par_iter()
            .zip(&tgt_cache)
            .map(|(&i, c)| kls::kls_label(&c.embedding, src_bank, tgt_bank, Some(i), model, c_tau, &self.kls))
            .collect::<Result<_>>()?;
        let statuses: Vec<Status> = verdicts.iter().map(|v| v.status).collect();

        let batch = LossBatch {
            source: src_idx
                .iter()
                .zip(&weights)
                .map(|(&i, w)| (self.source.features().row(i), w))
                .collect(),
            target: tgt_idx
                .iter()
                .zip(&statuses)
                .map(|(&i, s)| (self.target.features().row(i), *s))
                .collect(),
            lambda: self.cfg.lambda,
        };
        let lg = model.loss_and_grad_cached(&batch, &src_cache, &tgt_cache)?;

        let source_acc = src_idx
            .iter()
            .zip(&src_cache)
            .filter(|(&i, c)| argmax(c.probs.accept()) == labels[i])
            .count() as f64
            / src_idx.len() as f64;
        let (kls_acc_known, kls_acc_unknown) = match self.target.truth() {
            Some(truth) => {
                let tb: Vec<Label> = tgt_idx.iter().map(|&i| truth[i]).collect();
                kls_accuracy(&statuses, &tb)
            }
            None => (None, None),
        };

        let lr = lr_at(t, &self.cfg);
        let bias = state.model.shape().bias_ranges();
        nesterov_step(
            state.model.params_mut(),
            &mut state.velocity,
            &lg.grad,
            &bias,
            lr,
            self.cfg.momentum,
            self.cfg.weight_decay,
        )?;
        state.step += 1;

        Ok(StepReport {
            step: t,
            lr,
            losses: lg.summary,
            c_tau,
            n_known: statuses.iter().filter(|s| matches!(s, Status::Known(_))).count(),
            n_unknown: statuses.iter().filter(|s| matches!(s, Status::Unknown)).count(),
            n_uncertain: statuses.iter().filter(|s| matches!(s, Status::Uncertain)).count(),
            kls_acc_known,
            kls_acc_unknown,
            source_acc,
        })
    }

    /// Steps `state` until `max_steps`, collecting one report per step.
    pub fn run(&self, state: &mut TrainState<T>) -> Result<Vec<StepReport>> {
        self.run_until(state, self.cfg.max_steps)
    }

    pub fn run_until(&self, state: &mut TrainState<T>, stop: usize) -> Result<Vec<StepReport>> {
        let stop = stop.min(self.cfg.max_steps);
        let mut log = Vec::with_capacity(stop.saturating_sub(state.step));
        while state.step < stop {
            log.push(self.step(state)?);
        }
        Ok(log)
    }
}

fn embed_rows<T: Scalar>(model: &Model<T>, feats: &crate::matrix::Matrix<T>) -> Result<crate::matrix::Matrix<T>> {
    let rows: Vec<Vec<T>> = (0..feats.rows())
        .into_par_iter()
        .map(|i| {
            model.embed(feats.row(i)).map_err(|e| match e {
                Error::ZeroNorm { .. } => Error::ZeroNorm { row: Some(i) },
                e => e,
            })
        })
        .collect::<Result<_>>()?;
    crate::matrix::Matrix::from_vec(feats.rows(), model.embed_dim(), rows.concat())
}

/// Final state and per-step log of a training run.
#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub state: TrainState<T>,
    pub log: Vec<StepReport>,
}

/// Trains from freshly initialized parameters for `cfg.max_steps` steps.
pub fn fit<T: Scalar>(source: &SourceDataset<T>, target: &TargetDataset<T>, cfg: &TrainConfig) -> Result<FitResult<T>> {
    let trainer = Trainer::new(source, target, cfg.clone())?;
    let mut state = TrainState::init(source, cfg)?;
    let log = trainer.run(&mut state)?;
    Ok(FitResult { state, log })
}

/// Continues a run from `state` up to `cfg.max_steps`.
pub fn resume<T: Scalar>(
    mut state: TrainState<T>,
    source: &SourceDataset<T>,
    target: &TargetDataset<T>,
    cfg: &TrainConfig,
) -> Result<FitResult<T>> {
    let trainer = Trainer::new(source, target, cfg.clone())?;
    if state.step > cfg.max_steps {
        return Err(Error::config(format!(
            "checkpoint is at step {}, beyond max_steps {}",
            state.step, cfg.max_steps
        )));
    }
    if let Some((s, t)) = &state.banks {
        if s.len() != source.len() || t.len() != target.len() {
            return Err(Error::shape("checkpoint banks do not match the dataset sizes"));
        }
    }
    let log = trainer.run(&mut state)?;
    Ok(FitResult { state, log })
}
