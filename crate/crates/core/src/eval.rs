//! Open-set evaluation: H-score, KLS accuracy, and histogram export.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dataset::{Label, TargetDataset};
use crate::error::{Error, Result};
use crate::kls::Status;
use crate::model::Model;
use crate::scalar::Scalar;

/// Harmonic mean of common-class and unknown accuracy; 0 when both are 0.
pub fn h_score(a_com: f64, a_unk: f64) -> f64 {
    let s = a_com + a_unk;
    if s == 0.0 {
        0.0
    } else {
        2.0 * a_com * a_unk / s
    }
}

/// How common-class accuracy is averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Averaging {
    /// Unweighted mean of per-class accuracies.
    #[default]
    Macro,
    /// Fraction of all truth-known samples classified correctly.
    Micro,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub a_com: f64,
    pub a_unk: f64,
    pub h: f64,
    /// Accuracy per class; `None` for classes absent from the truth.
    pub per_class: Vec<Option<f64>>,
    /// Counts indexed `[truth][prediction]`, with index `Y` for unknown.
    pub confusion: Vec<Vec<usize>>,
    pub averaging: Averaging,
}

fn index(l: Label, y: usize) -> usize {
    match l {
        Label::Class(c) => c,
        Label::Unknown => y,
    }
}

impl EvalReport {
    /// Builds the report from paired truth and predictions over `y` classes.
    pub fn from_predictions(truth: &[Label], pred: &[Label], y: usize, averaging: Averaging) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Eval(format!(
                "{} truth labels for {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        let mut confusion = vec![vec![0usize; y + 1]; y + 1];
        for (&t, &p) in truth.iter().zip(pred) {
            let (ti, pi) = (index(t, y), index(p, y));
            if ti > y || pi > y {
                return Err(Error::Eval(format!("label outside the {y}-class space")));
            }
            confusion[ti][pi] += 1;
        }
        let per_class: Vec<Option<f64>> = (0..y)
            .map(|c| {
                let n: usize = confusion[c].iter().sum();
                (n > 0).then(|| confusion[c][c] as f64 / n as f64)
            })
            .collect();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        let a_com = match averaging {
            Averaging::Macro if present.is_empty() => 0.0,
            Averaging::Macro => present.iter().sum::<f64>() / present.len() as f64,
            Averaging::Micro => {
                let n: usize = (0..y).map(|c| confusion[c].iter().sum::<usize>()).sum();
                let hit: usize = (0..y).map(|c| confusion[c][c]).sum();
                if n == 0 {
                    0.0
                } else {
                    hit as f64 / n as f64
                }
            }
        };
        let n_unk: usize = confusion[y].iter().sum();
        let a_unk = if n_unk == 0 {
            0.0
        } else {
            confusion[y][y] as f64 / n_unk as f64
        };
        Ok(Self {
            a_com,
            a_unk,
            h: h_score(a_com, a_unk),
            per_class,
            confusion,
            averaging,
        })
    }

    /// Flat `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let avg = match self.averaging {
            Averaging::Macro => "macro",
            Averaging::Micro => "micro",
        };
        let _ = writeln!(s, "averaging={avg}");
        let _ = writeln!(s, "a_com={}", self.a_com);
        let _ = writeln!(s, "a_unk={}", self.a_unk);
        let _ = writeln!(s, "h={}", self.h);
        let total: usize = self.confusion.iter().flatten().sum();
        let _ = writeln!(s, "samples={total}");
        for (c, a) in self.per_class.iter().enumerate() {
            let v = a.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(s, "class_{c}={v}");
        }
        s
    }

    /// Confusion matrix as TSV: a header of predicted labels, then one row
    /// per truth label.
    pub fn confusion_tsv(&self) -> String {
        let y = self.confusion.len() - 1;
        let name = |i: usize| if i == y { "unknown".to_string() } else { i.to_string() };
        let mut s = String::from("truth");
        for j in 0..=y {
            let _ = write!(s, "\t{}", name(j));
        }
        s.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            s.push_str(&name(i));
            for c in row {
                let _ = write!(s, "\t{c}");
            }
            s.push('\n');
        }
        s
    }
}

/// Predicts every target sample and scores against its truth.
pub fn evaluate<T: Scalar>(target: &TargetDataset<T>, model: &Model<T>, averaging: Averaging) -> Result<EvalReport> {
    let truth = target
        .truth()
        .ok_or_else(|| Error::Eval("target has no ground truth".into()))?;
    let pred = predict_all(target, model)?;
    EvalReport::from_predictions(truth, &pred, model.num_classes(), averaging)
}

pub fn predict_all<T: Scalar>(target: &TargetDataset<T>, model: &Model<T>) -> Result<Vec<Label>> {
    let f = target.features();
    (0..f.rows()).into_par_iter().map(|i| model.predict(f.row(i))).collect()
}

/// Fraction of correct KLS verdicts per truth group. A truth-known sample
/// counts only when labeled Known with its class; Uncertain misses on both
/// sides. `None` for an empty group.
pub fn kls_accuracy(verdicts: &[Status], truth: &[Label]) -> (Option<f64>, Option<f64>) {
    let (mut known, mut known_hit, mut unk, mut unk_hit) = (0usize, 0usize, 0usize, 0usize);
    for (s, t) in verdicts.iter().zip(truth) {
        match t {
            Label::Class(c) => {
                known += 1;
                known_hit += usize::from(*s == Status::Known(*c));
            }
            Label::Unknown => {
                unk += 1;
                unk_hit += usize::from(*s == Status::Unknown);
            }
        }
    }
    let frac = |h: usize, n: usize| (n > 0).then(|| h as f64 / n as f64);
    (frac(known_hit, known), frac(unk_hit, unk))
}

/// Fixed-width bin counts over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    /// Values outside the range or NaN, not binned.
    pub dropped: usize,
}

impl Histogram {
    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let n = self.counts.len() as f64;
        let w = self.hi - self.lo;
        (self.lo + w * bin as f64 / n, self.lo + w * (bin + 1) as f64 / n)
    }

    /// Columns `bin_lo`, `bin_hi`, `count`.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("bin_lo\tbin_hi\tcount\n");
        for (i, c) in self.counts.iter().enumerate() {
            let (a, b) = self.edges(i);
            let _ = writeln!(s, "{a}\t{b}\t{c}");
        }
        s
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Bins `values` into `n_bins` equal bins over `[lo, hi]`. A value on an
/// inner edge goes to the higher bin; `hi` itself closes the last bin.
pub fn histogram(values: &[f64], n_bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::config("histogram needs at least one bin"));
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::config(format!("bad histogram range [{lo}, {hi}]")));
    }
    let mut counts = vec![0usize; n_bins];
    let mut dropped = 0;
    for &v in values {
        if !(lo..=hi).contains(&v) {
            dropped += 1;
            continue;
        }
        let b = ((v - lo) * n_bins as f64 / (hi - lo)).floor() as usize;
        counts[b.min(n_bins - 1)] += 1;
    }
    Ok(Histogram { lo, hi, counts, dropped })
}
