//! Feature adapter, one-vs-all classifier head, losses, and gradients.
//!
//! All trainable parameters live in one flat buffer, laid out block by block:
//!
//! ```text
//! [adapter W1 (hidden x input), b1 (hidden), W2 (embed x hidden), b2 (embed)]   optional
//! [head W (2Y x embed), b (2Y)]
//! ```
//!
//! Head rows are interleaved per class: row `2j` is the accept logit of class
//! `j`, row `2j + 1` the reject logit.

mod checkpoint;
mod loss;
mod prob;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, TrainSnapshot, UDAC_MAGIC,
    UDAC_VERSION,
};
pub use loss::{
    loss_k, loss_k_grad, loss_s, loss_s_grad, loss_unc, loss_unc_grad, loss_unk, loss_unk_grad, total_loss,
    weight_matrix, BatchLosses, LossSummary, ProbGrad, WeightMatrix,
};
pub use prob::{ProbMatrix, PROB_EPS};

use std::ops::Range;

use rand::Rng;

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::kls::Status;
use crate::matrix::{dot_f64, l2_normalize, Matrix};
use crate::rng;
use crate::scalar::Scalar;

/// Sizes of every parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub input_dim: usize,
    /// Hidden width of the adapter; `None` disables the adapter.
    pub hidden: Option<usize>,
    pub embed_dim: usize,
    pub num_classes: usize,
}

impl ModelShape {
    pub fn new(input_dim: usize, hidden: Option<usize>, embed_dim: usize, num_classes: usize) -> Result<Self> {
        let s = Self {
            input_dim,
            hidden,
            embed_dim,
            num_classes,
        };
        s.validate()?;
        Ok(s)
    }

    /// No adapter: inputs are normalized and fed to the head directly.
    pub fn head_only(input_dim: usize, num_classes: usize) -> Result<Self> {
        Self::new(input_dim, None, input_dim, num_classes)
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embed_dim == 0 {
            return Err(Error::config("model dimensions must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("the head needs at least 2 classes"));
        }
        match self.hidden {
            Some(0) => return Err(Error::config("adapter hidden width must be positive")),
            None if self.embed_dim != self.input_dim => {
                return Err(Error::config("without an adapter the embedding is the input"))
            }
            _ => {}
        }
        Ok(())
    }

    fn blocks(&self) -> Blocks {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let adapter = self.hidden.map(|h| AdapterBlocks {
            w1: take(h * self.input_dim),
            b1: take(h),
            w2: take(self.embed_dim * h),
            b2: take(self.embed_dim),
        });
        let head_w = take(2 * self.num_classes * self.embed_dim);
        let head_b = take(2 * self.num_classes);
        Blocks {
            adapter,
            head_w,
            head_b,
            len: at,
        }
    }

    pub fn num_params(&self) -> usize {
        self.blocks().len
    }

    /// Ranges of the bias blocks (exempt from weight decay).
    pub fn bias_ranges(&self) -> Vec<Range<usize>> {
        let b = self.blocks();
        let mut out = Vec::new();
        if let Some(a) = b.adapter {
            out.push(a.b1);
            out.push(a.b2);
        }
        out.push(b.head_b);
        out
    }
}

#[derive(Debug, Clone)]
struct AdapterBlocks {
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
}

#[derive(Debug, Clone)]
struct Blocks {
    adapter: Option<AdapterBlocks>,
    head_w: Range<usize>,
    head_b: Range<usize>,
    len: usize,
}

/// Adapter (optional two-layer ReLU perceptron) followed by the 2Y-logit head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    shape: ModelShape,
    params: Vec<T>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub input: Vec<T>,
    pre: Vec<T>,
    hidden: Vec<T>,
    out_norm: f64,
    /// Unit-norm embedding fed to the head.
    pub embedding: Vec<T>,
    pub probs: ProbMatrix,
}

impl<T> ForwardCache<T> {
    /// Adapter pre-activations (empty without an adapter).
    pub fn pre_activations(&self) -> &[T] {
        &self.pre
    }
}

impl<T: Scalar> Model<T> {
    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero, from the `init` stream.
    pub fn init(shape: ModelShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let b = shape.blocks();
        let mut params = vec![T::zero(); b.len];
        let mut rng = rng::stream(seed, rng::INIT);
        let mut fill = |range: Range<usize>, fan_in: usize, params: &mut [T]| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut params[range] {
                *v = T::of_f64(rng.random_range(-bound..bound));
            }
        };
        if let (Some(a), Some(h)) = (&b.adapter, shape.hidden) {
            fill(a.w1.clone(), shape.input_dim, &mut params);
            fill(a.w2.clone(), h, &mut params);
        }
        fill(b.head_w.clone(), shape.embed_dim, &mut params);
        Ok(Self { shape, params })
    }

    pub fn from_params(shape: ModelShape, params: Vec<T>) -> Result<Self> {
        shape.validate()?;
        if params.len() != shape.num_params() {
            return Err(Error::shape(format!(
                "{} parameters for a model with {}",
                params.len(),
                shape.num_params()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics("non-finite parameter".into()));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_classes(&self) -> usize {
        self.shape.num_classes
    }

    pub fn embed_dim(&self) -> usize {
        self.shape.embed_dim
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            shape: self.shape,
            params: self.params.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        }
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.shape.input_dim {
            return Err(Error::shape(format!(
                "input of length {} for a model expecting {}",
                x.len(),
                self.shape.input_dim
            )));
        }
        Ok(())
    }

    /// Adapter pass over a unit-norm input: `(pre-activation, hidden, output)`.
    fn adapt(&self, x: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let b = self.shape.blocks();
        let Some(a) = b.adapter else {
            return (Vec::new(), Vec::new(), x.to_vec());
        };
        let h = self.shape.hidden.unwrap_or(0);
        let w1 = &self.params[a.w1];
        let b1 = &self.params[a.b1];
        let pre: Vec<T> = (0..h)
            .map(|r| T::of_f64(dot_f64(&w1[r * x.len()..(r + 1) * x.len()], x) + b1[r].as_f64()))
            .collect();
        let hidden: Vec<T> = pre.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let w2 = &self.params[a.w2];
        let b2 = &self.params[a.b2];
        let out = (0..self.shape.embed_dim)
            .map(|r| T::of_f64(dot_f64(&w2[r * h..(r + 1) * h], &hidden) + b2[r].as_f64()))
            .collect();
        (pre, hidden, out)
    }

    /// Unit-norm embedding of a raw feature. Inputs are normalized first.
    pub fn embed(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let x = l2_normalize(x)?;
        let (_, _, mut out) = self.adapt(&x);
        crate::matrix::l2_normalize_in_place(&mut out)?;
        Ok(out)
    }

    /// Embeds every row of `features`.
    pub fn embed_all(&self, features: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = Vec::with_capacity(features.rows() * self.embed_dim());
        for (i, r) in features.iter_rows().enumerate() {
            let e = self.embed(r).map_err(|e| match e {
                Error::ZeroNorm { .. } => Error::ZeroNorm { row: Some(i) },
                e => e,
            })?;
            out.extend(e);
        }
        Matrix::from_vec(features.rows(), self.embed_dim(), out)
    }

    /// Interleaved head logits of a unit-norm embedding.
    pub fn logits(&self, z: &[T]) -> Vec<f64> {
        let b = self.shape.blocks();
        let w = &self.params[b.head_w];
        let bias = &self.params[b.head_b];
        let d = self.shape.embed_dim;
        (0..2 * self.shape.num_classes)
            .map(|r| dot_f64(&w[r * d..(r + 1) * d], z) + bias[r].as_f64())
            .collect()
    }

    /// Head probabilities of an embedding (e.g. a memory-bank row).
    pub fn probs_from_embedding(&self, z: &[T]) -> Result<ProbMatrix> {
        if z.len() != self.embed_dim() {
            return Err(Error::shape(format!(
                "embedding of length {} for a head expecting {}",
                z.len(),
                self.embed_dim()
            )));
        }
        ProbMatrix::from_logits(&self.logits(z))
    }

    pub fn forward(&self, x: &[T]) -> Result<ProbMatrix> {
        Ok(self.forward_cached(x)?.probs)
    }

    pub fn forward_cached(&self, x: &[T]) -> Result<ForwardCache<T>> {
        self.check_input(x)?;
        let x = l2_normalize(x)?;
        let (pre, hidden, out) = self.adapt(&x);
        let out_norm = crate::matrix::norm_f64(&out);
        if out_norm == 0.0 {
            return Err(Error::ZeroNorm { row: None });
        }
        if !out_norm.is_finite() {
            return Err(Error::Numerics("adapter output is not finite".into()));
        }
        let embedding: Vec<T> = out.iter().map(|&v| T::of_f64(v.as_f64() / out_norm)).collect();
        let probs = ProbMatrix::from_logits(&self.logits(&embedding))?;
        Ok(ForwardCache {
            input: x,
            pre,
            hidden,
            out_norm,
            embedding,
            probs,
        })
    }

    pub fn predict(&self, x: &[T]) -> Result<Label> {
        Ok(self.forward(x)?.predict())
    }

    /// Adds `scale * dL/dparams` for one sample into `grad`, given the
    /// logit gradient `g` (length 2Y) and the sample's forward cache.
    pub fn accumulate_grad(&self, cache: &ForwardCache<T>, g: &[f64], scale: f64, grad: &mut [f64]) {
        let b = self.shape.blocks();
        let d = self.shape.embed_dim;
        let z = &cache.embedding;
        let w = &self.params[b.head_w.clone()];

        let mut dz = vec![0.0f64; d];
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            let gs = gr * scale;
            grad[b.head_b.start + r] += gs;
            let row = b.head_w.start + r * d;
            for c in 0..d {
                grad[row + c] += gs * z[c].as_f64();
                dz[c] += gs * w[r * d + c].as_f64();
            }
        }

        let (Some(a), Some(h)) = (b.adapter, self.shape.hidden) else {
            return;
        };
        // Through the normalization z = out / |out|.
        let zdz: f64 = dz.iter().zip(z).map(|(g, v)| g * v.as_f64()).sum();
        let dout: Vec<f64> = dz
            .iter()
            .zip(z)
            .map(|(g, v)| (g - v.as_f64() * zdz) / cache.out_norm)
            .collect();

        let w2 = &self.params[a.w2.clone()];
        let mut dhidden = vec![0.0f64; h];
        for (r, &go) in dout.iter().enumerate() {
            grad[a.b2.start + r] += go;
            let row = a.w2.start + r * h;
            for c in 0..h {
                grad[row + c] += go * cache.hidden[c].as_f64();
                dhidden[c] += go * w2[r * h + c].as_f64();
            }
        }
        let n_in = self.shape.input_dim;
        for (r, dh) in dhidden.iter().enumerate() {
            if cache.pre[r] <= T::zero() {
                continue;
            }
            grad[a.b1.start + r] += dh;
            let row = a.w1.start + r * n_in;
            for c in 0..n_in {
                grad[row + c] += dh * cache.input[c].as_f64();
            }
        }
    }
}

/// Inputs to one objective evaluation. Labels, weight matrices, and
/// verdicts are constants for differentiation.
#[derive(Debug, Clone)]
pub struct LossBatch<'a, T> {
    pub source: Vec<(&'a [T], &'a WeightMatrix)>,
    pub target: Vec<(&'a [T], Status)>,
    pub lambda: f64,
}

/// Objective value, its parts, and the gradient over the flat parameters.
#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub losses: BatchLosses,
    pub summary: LossSummary,
    pub grad: Vec<f64>,
}

/// Role of a sample in the objective and its per-sample loss and
/// probability-gradient.
fn sample_term(p: &ProbMatrix, role: Term<'_>) -> (f64, ProbGrad) {
    match role {
        Term::Source(w) => (loss_s(p, w), loss_s_grad(p, w)),
        Term::Target(Status::Unknown) => (loss_unk(p), loss_unk_grad(p)),
        Term::Target(Status::Known(y)) => (loss_k(p, y), loss_k_grad(p, y)),
        Term::Target(Status::Uncertain) => (loss_unc(p), loss_unc_grad(p)),
    }
}

#[derive(Clone, Copy)]
enum Term<'a> {
    Source(&'a WeightMatrix),
    Target(Status),
}

impl<T: Scalar> Model<T> {
    /// Total objective and its analytic gradient.
    ///
    /// Gradient accumulation runs in `f64` in a fixed order: source samples
    /// first, then target samples, each in batch order.
    pub fn loss_and_grad(&self, batch: &LossBatch<'_, T>) -> Result<LossAndGrad> {
        let caches_src: Vec<ForwardCache<T>> =
            batch.source.iter().map(|(x, _)| self.forward_cached(x)).collect::<Result<_>>()?;
        let caches_tgt: Vec<ForwardCache<T>> =
            batch.target.iter().map(|(x, _)| self.forward_cached(x)).collect::<Result<_>>()?;
        self.loss_and_grad_cached(batch, &caches_src, &caches_tgt)
    }

    /// Same as [`loss_and_grad`](Self::loss_and_grad) with forward passes
    /// already done (one cache per batch entry, same order).
    pub fn loss_and_grad_cached(
        &self,
        batch: &LossBatch<'_, T>,
        caches_src: &[ForwardCache<T>],
        caches_tgt: &[ForwardCache<T>],
    ) -> Result<LossAndGrad> {
        if caches_src.len() != batch.source.len() || caches_tgt.len() != batch.target.len() {
            return Err(Error::shape("forward caches do not match the batch"));
        }
        let mut losses = BatchLosses::default();
        let mut terms: Vec<(usize, bool, Term<'_>)> = Vec::new();
        for (i, (_, w)) in batch.source.iter().enumerate() {
            if w.w1.len() != self.num_classes() || w.label >= self.num_classes() {
                return Err(Error::shape("weight matrix does not match the class count"));
            }
            terms.push((i, true, Term::Source(w)));
        }
        for (i, (_, st)) in batch.target.iter().enumerate() {
            if let Status::Known(y) = st {
                if *y >= self.num_classes() {
                    return Err(Error::shape(format!("pseudo-label {y} outside the class space")));
                }
            }
            terms.push((i, false, Term::Target(*st)));
        }
        let count = |f: fn(&Status) -> bool| batch.target.iter().filter(|(_, s)| f(s)).count();
        let n_unk = count(|s| matches!(s, Status::Unknown));
        let n_k = count(|s| matches!(s, Status::Known(_)));
        let n_unc = count(|s| matches!(s, Status::Uncertain));

        let mut grad = vec![0.0f64; self.params.len()];
        for (i, is_src, term) in terms {
            let cache = if is_src { &caches_src[i] } else { &caches_tgt[i] };
            let (value, (da, dr)) = sample_term(&cache.probs, term);
            let scale = match term {
                Term::Source(_) => {
                    losses.source.push(value);
                    1.0 / batch.source.len() as f64
                }
                Term::Target(Status::Unknown) => {
                    losses.unknown.push(value);
                    batch.lambda / n_unk as f64
                }
                Term::Target(Status::Known(_)) => {
                    losses.known.push(value);
                    batch.lambda / n_k as f64
                }
                Term::Target(Status::Uncertain) => {
                    losses.uncertain.push(value);
                    batch.lambda / n_unc as f64
                }
            };
            if scale == 0.0 {
                continue;
            }
            let g = cache.probs.logit_grad(&da, &dr);
            self.accumulate_grad(cache, &g, scale, &mut grad);
        }
        if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerics(format!("gradient entry {i} is not finite")));
        }
        let summary = total_loss(&losses, batch.lambda);
        Ok(LossAndGrad { losses, summary, grad })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Model<f64> {
        Model::init(ModelShape::new(4, Some(5), 3, 3).unwrap(), 11).unwrap()
    }

    #[test]
    fn layout_sizes() {
        let s = ModelShape::new(4, Some(5), 3, 3).unwrap();
        assert_eq!(s.num_params(), 5 * 4 + 5 + 3 * 5 + 3 + 6 * 3 + 6);
        let h = ModelShape::head_only(4, 2).unwrap();
        assert_eq!(h.num_params(), 4 * 4 + 4);
        assert!(ModelShape::new(4, None, 3, 2).is_err());
        assert!(ModelShape::new(4, Some(2), 3, 1).is_err());
    }

    #[test]
    fn init_is_seeded_and_biases_zero() {
        let a = toy();
        assert_eq!(a, toy());
        for r in a.shape().bias_ranges() {
            assert!(a.params()[r].iter().all(|v| *v == 0.0));
        }
        let m = Model::<f64>::init(*a.shape(), 12).unwrap();
        assert_ne!(a.params(), m.params());
    }

    #[test]
    fn forward_columns_sum_to_one() {
        let m = toy();
        let p = m.forward(&[0.3, -1.0, 2.0, 0.5]).unwrap();
        for j in 0..3 {
            assert!((p.accept()[j] + p.reject()[j] - 1.0).abs() < 1e-6);
        }
        let e = m.embed(&[0.3, -1.0, 2.0, 0.5]).unwrap();
        assert!((crate::matrix::norm_f64(&e) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_head_gives_even_split() {
        let s = ModelShape::head_only(2, 2).unwrap();
        let m = Model::<f32>::from_params(s, vec![0.0; s.num_params()]).unwrap();
        let p = m.forward(&[1.0, 2.0]).unwrap();
        assert_eq!(p.accept(), &[0.5, 0.5]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(matches!(toy().forward(&[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn lambda_zero_touches_only_source_paths() {
        let m = toy();
        let w = WeightMatrix::label_only(1, 3);
        let xs = [0.1, 0.2, -0.3, 0.4];
        let xt = [1.0, -0.5, 0.6, 0.0];
        let with_target = LossBatch {
            source: vec![(&xs[..], &w)],
            target: vec![(&xt[..], Status::Unknown), (&xt[..], Status::Known(2))],
            lambda: 0.0,
        };
        let source_only = LossBatch {
            source: vec![(&xs[..], &w)],
            target: vec![],
            lambda: 0.0,
        };
        let a = m.loss_and_grad(&with_target).unwrap();
        let b = m.loss_and_grad(&source_only).unwrap();
        assert_eq!(a.grad, b.grad);
        assert_eq!(a.summary.total, b.summary.source);
    }

    #[test]
    fn duplicated_sample_doubles_the_sum() {
        let m = toy();
        let w = WeightMatrix::label_only(0, 3);
        let x = [0.7, -0.2, 0.1, 0.9];
        let cache = m.forward_cached(&x).unwrap();
        let (_, (da, dr)) = sample_term(&cache.probs, Term::Source(&w));
        let g = cache.probs.logit_grad(&da, &dr);
        let mut once = vec![0.0; m.params().len()];
        m.accumulate_grad(&cache, &g, 1.0, &mut once);
        let mut twice = vec![0.0; m.params().len()];
        m.accumulate_grad(&cache, &g, 1.0, &mut twice);
        m.accumulate_grad(&cache, &g, 1.0, &mut twice);
        for (a, b) in once.iter().zip(&twice) {
            assert_eq!(2.0 * a, *b);
        }
        // The batch mean over [x, x] equals the single-sample gradient.
        let single = m
            .loss_and_grad(&LossBatch { source: vec![(&x[..], &w)], target: vec![], lambda: 0.1 })
            .unwrap();
        let dup = m
            .loss_and_grad(&LossBatch { source: vec![(&x[..], &w), (&x[..], &w)], target: vec![], lambda: 0.1 })
            .unwrap();
        for (a, b) in single.grad.iter().zip(&dup.grad) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn predict_invariant_to_monotone_accept_shift() {
        // Adding the same constant to every accept bias shifts all accept
        // logits uniformly; the argmax over classes does not move.
        let m = Model::<f64>::init(ModelShape::head_only(3, 4).unwrap(), 5).unwrap();
        let x = [0.2, 0.9, -0.4];
        let base = m.forward(&x).unwrap();
        let mut shifted = m.clone();
        let hb = shifted.shape().blocks().head_b;
        for j in 0..4 {
            shifted.params_mut()[hb.start + 2 * j] += 0.37;
        }
        let p = shifted.forward(&x).unwrap();
        assert_eq!(crate::matrix::argmax(base.accept()), crate::matrix::argmax(p.accept()));
    }
}
